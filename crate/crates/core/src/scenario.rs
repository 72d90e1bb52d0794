//! Reference models with known ground truth.
//!
//! All scenarios share a four-event, two-state taxonomy: marketable limit
//! orders `MLB/MLS`, admissible in both states, and spread-improving limit
//! orders `ALB/ALS`, which need a spread of at least two ticks and are
//! inadmissible in state `1`.

use crate::diagnostics::{spectral_radius, POWER_MAX_ITERATIONS, POWER_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{HawkesParams, ModelSpec, Taxonomy, TransitionKernel, Variant};
use crate::simulate::ImpactTable;
use crate::tensor::{Matrix, Tensor3};

pub const SCENARIO_NAMES: [&str; 4] = ["poisson", "subcritical", "dual-regime", "sd-leaky"];

/// Spectral radii of the dual-regime scenario in states `1` and `2+`.
pub const DUAL_REGIME_RHO: [f64; 2] = [0.19, 2.67];

const MLB: usize = 0;
const MLS: usize = 1;
const ALB: usize = 2;
const ALS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub model: ModelSpec,
    pub impact: ImpactTable,
}

pub fn scenario_taxonomy() -> Taxonomy {
    Taxonomy::new(["MLB", "MLS", "ALB", "ALS"], ["1", "2+"]).expect("static labels")
}

pub fn scenario(name: &str) -> Result<Scenario> {
    let (name, model) = match name {
        "poisson" => ("poisson", poisson()),
        "subcritical" => ("subcritical", subcritical()),
        "dual-regime" => ("dual-regime", dual_regime()),
        "sd-leaky" => ("sd-leaky", sd_leaky()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario {other:?} (expected one of {})",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    Ok(Scenario { name, model, impact: impact() })
}

/// One tick for a marketable order crossing a wide spread, half a tick
/// otherwise; spread-improving orders move one side by a tick.
fn impact() -> ImpactTable {
    let m = Matrix::from_rows(&[
        vec![0.5, 1.0],
        vec![-0.5, -1.0],
        vec![0.0, 0.5],
        vec![0.0, -0.5],
    ])
    .expect("rectangular");
    ImpactTable::new(m).expect("finite")
}

/// `phi[e, x, x']` for the gated scenarios.
fn gated_phi(ml_1: [f64; 2], ml_2: [f64; 2], al_2: [f64; 2]) -> TransitionKernel {
    let mut phi = Tensor3::zeros([4, 2, 2]);
    for e in [MLB, MLS] {
        phi.row_mut(e, 0).copy_from_slice(&ml_1);
        phi.row_mut(e, 1).copy_from_slice(&ml_2);
    }
    for e in [ALB, ALS] {
        phi.row_mut(e, 1).copy_from_slice(&al_2);
    }
    TransitionKernel::from_phi(phi).expect("rows sum to 0 or 1")
}

fn dual_regime_phi() -> TransitionKernel {
    gated_phi([0.6, 0.4], [0.2, 0.8], [0.6, 0.4])
}

const DUAL_NU: [f64; 4] = [0.2, 0.2, 0.3, 0.3];

/// Kernel pattern for events that leave the spread wide: buy-side orders
/// strongly excite sell-side improvements and vice versa.
fn wide_pattern() -> [[f64; 4]; 4] {
    [
        [0.05, 0.05, 0.2, 1.0],
        [0.05, 0.05, 1.0, 0.2],
        [0.05, 0.05, 0.4, 1.0],
        [0.05, 0.05, 1.0, 0.4],
    ]
}

fn tight_pattern() -> [[f64; 4]; 4] {
    [
        [0.3, 0.5, 0.2, 0.5],
        [0.5, 0.3, 0.5, 0.2],
        [0.3, 0.5, 0.2, 0.5],
        [0.5, 0.3, 0.5, 0.2],
    ]
}

fn wide_beta(src: usize, target: usize) -> f64 {
    match (src, target) {
        (MLB, ALS) | (MLS, ALB) | (ALB, ALS) | (ALS, ALB) => 1.0,
        _ => 4.0,
    }
}

const TIGHT_BETA: f64 = 2.0;

/// Scales `pattern` so that its Perron root is `rho`.
fn scaled(pattern: [[f64; 4]; 4], rho: f64) -> [[f64; 4]; 4] {
    let m = Matrix::from_rows(&pattern.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("square");
    let (r, _) = spectral_radius(&m, POWER_TOLERANCE * 1e-2, POWER_MAX_ITERATIONS).expect("primitive pattern");
    pattern.map(|row| row.map(|v| v * rho / r))
}

fn dual_regime_hawkes() -> HawkesParams {
    let k = [scaled(tight_pattern(), DUAL_REGIME_RHO[0]), scaled(wide_pattern(), DUAL_REGIME_RHO[1])];
    let beta = Tensor3::from_fn([4, 2, 4], |src, x, t| if x == 0 { TIGHT_BETA } else { wide_beta(src, t) });
    let alpha = Tensor3::from_fn([4, 2, 4], |src, x, t| k[x][src][t] * beta[(src, x, t)]);
    HawkesParams { nu: DUAL_NU.to_vec(), alpha, beta }
}

fn dual_regime() -> ModelSpec {
    ModelSpec {
        taxonomy: scenario_taxonomy(),
        variant: Variant::ExsdHawkes,
        transition: dual_regime_phi(),
        hawkes: dual_regime_hawkes(),
    }
}

/// The dual-regime excitation with every gate open: rows that are empty
/// under gating become uniform.
fn sd_leaky() -> ModelSpec {
    let gated = dual_regime_phi();
    let phi = Tensor3::from_fn([4, 2, 2], |e, x, y| {
        if gated.gate(e, x) {
            gated.phi(e, x, y)
        } else {
            0.5
        }
    });
    ModelSpec {
        taxonomy: scenario_taxonomy(),
        variant: Variant::SdHawkes,
        transition: TransitionKernel::from_phi(phi).expect("unit rows"),
        hawkes: dual_regime_hawkes(),
    }
}

fn poisson() -> ModelSpec {
    ModelSpec {
        taxonomy: scenario_taxonomy(),
        variant: Variant::Poisson,
        transition: dual_regime_phi(),
        hawkes: HawkesParams::poisson(DUAL_NU.to_vec(), 2),
    }
}

/// Every kernel entry excited and every `(event, post-state)` pair
/// reachable, so that all parameters are identifiable from one long run.
/// All gates are open: a kernel whose target is gated off in its mark
/// state leaves no trace in the likelihood.
fn subcritical() -> ModelSpec {
    let beta = Tensor3::from_fn([4, 2, 4], |src, x, t| 30.0 + 15.0 * ((src + 2 * x + 3 * t) % 4) as f64);
    let alpha = Tensor3::from_fn([4, 2, 4], |src, x, t| SUBCRITICAL_RATIO * beta[(src, x, t)]);
    let mut phi = Tensor3::zeros([4, 2, 2]);
    for e in 0..2 {
        phi.row_mut(e, 0).copy_from_slice(&[0.5, 0.5]);
        phi.row_mut(e, 1).copy_from_slice(&[0.3, 0.7]);
    }
    for e in 2..4 {
        phi.row_mut(e, 0).copy_from_slice(&[0.5, 0.5]);
        phi.row_mut(e, 1).copy_from_slice(&[0.6, 0.4]);
    }
    ModelSpec {
        taxonomy: scenario_taxonomy(),
        variant: Variant::ExsdHawkes,
        transition: TransitionKernel::from_phi(phi).expect("rows sum to one"),
        hawkes: HawkesParams { nu: vec![0.03; 4], alpha, beta },
    }
}

/// Kernel mass `alpha / beta` of every subcritical entry.
const SUBCRITICAL_RATIO: f64 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::stability_report;
    use crate::model::validate_model;

    #[test]
    fn all_scenarios_validate() {
        for name in SCENARIO_NAMES {
            let s = scenario(name).unwrap();
            assert!(validate_model(&s.model).is_empty(), "{name}");
        }
        assert!(scenario("nope").is_err());
    }

    #[test]
    fn dual_regime_radii() {
        let r = stability_report(&scenario("dual-regime").unwrap().model).unwrap();
        for (got, want) in r.spectral.iter().zip(DUAL_REGIME_RHO) {
            assert!((got / want - 1.0).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn subcritical_is_open_and_stable() {
        let m = scenario("subcritical").unwrap().model;
        for e in 0..4 {
            for x in 0..2 {
                assert_eq!(m.transition.gate_value(e, x), 1.0);
            }
        }
        let r = stability_report(&m).unwrap();
        assert!(r.spectral.iter().all(|&rho| rho < 1.0));
    }
}
