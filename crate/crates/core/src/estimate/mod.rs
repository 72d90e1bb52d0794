//! Two-step maximum likelihood estimation.
//!
//! Step one counts transitions and fixes the gated transition kernel in
//! closed form. Step two maximizes the gated Hawkes likelihood over
//! `(nu, alpha, beta)`; since the compensator depends on the kernel only
//! through its binary gates, the two steps share no parameters.
//!
//! The Hawkes part is further split by target event type and each block is
//! solved by BFGS on log-parameters.

mod bfgs;
mod likelihood;
mod transition;

pub use bfgs::{minimize, BfgsOptions, BfgsResult};
pub use likelihood::{
    check_admissible, log_lik_full, log_lik_hawkes, log_lik_hawkes_pooled, log_lik_hawkes_with_gradient,
    HawkesGradient,
};
pub use transition::{
    count_transitions, estimate_transition_kernel, log_lik_tp, sd_transition_kernel,
    TransitionCounts,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    validate_stream, EventStream, HawkesParams, ModelSpec, Taxonomy, TransitionKernel, Variant,
};
use crate::tensor::Tensor3;
use likelihood::{target_gate, target_log_lik, TargetGrad, TargetParams};

/// Lower bound applied to `exp` of the free log-parameters of `nu` and `alpha`.
pub const PARAM_FLOOR: f64 = 1e-12;
/// Fitted excitations below this are reported as exactly zero.
pub const ZERO_ALPHA_THRESHOLD: f64 = 1e-8;

/// Optional starting values replacing the data-driven defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InitOverrides {
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Tolerance on the max-norm of the gradient of the per-event mean
    /// log-likelihood of each target block, in log-parameter space.
    pub gradient_tolerance: f64,
    /// Number of starts per block; the first is the default initialization,
    /// the others are seeded perturbations of it.
    pub restarts: usize,
    pub seed: u64,
    pub init: InitOverrides,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            restarts: 1,
            seed: 0,
            init: InitOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: ModelSpec,
    pub log_lik_tp: f64,
    pub log_lik_hawkes: f64,
    /// Iterations of the slowest target block.
    pub iterations: usize,
    pub converged: bool,
    /// Largest final gradient max-norm across target blocks.
    pub gradient_norm: f64,
    pub n_events: usize,
}

impl FitReport {
    pub fn log_lik(&self) -> f64 {
        self.log_lik_tp + self.log_lik_hawkes
    }
}

/// Transition kernel used by a variant: the gated estimator, or for
/// `SD_HAWKES` the unit-row-sum version.
pub fn variant_transition_kernel(counts: &TransitionCounts, variant: Variant) -> TransitionKernel {
    match variant {
        Variant::SdHawkes => sd_transition_kernel(counts),
        _ => estimate_transition_kernel(counts),
    }
}

pub fn fit(stream: &EventStream, taxonomy: &Taxonomy, variant: Variant, opts: &FitOptions) -> Result<FitReport> {
    fit_pooled(std::slice::from_ref(stream), taxonomy, variant, opts)
}

/// Fits one model to several sessions by maximizing the summed likelihood.
pub fn fit_pooled(
    streams: &[EventStream],
    taxonomy: &Taxonomy,
    variant: Variant,
    opts: &FitOptions,
) -> Result<FitReport> {
    let mut counts = TransitionCounts::zeros(taxonomy.n_events(), taxonomy.n_states());
    for s in streams {
        let violations = validate_stream(s, taxonomy);
        if !violations.is_empty() {
            return Err(Error::InvalidStream(violations));
        }
        counts.merge(&count_transitions(s, taxonomy)?);
    }
    if counts.total() == 0 {
        return Err(Error::EmptyStream);
    }
    let kernel = variant_transition_kernel(&counts, variant);
    let log_lik_tp = log_lik_tp(&counts, &kernel, taxonomy)?;
    let mut report = fit_hawkes(streams, taxonomy, variant, kernel, opts)?;
    report.log_lik_tp = log_lik_tp;
    Ok(report)
}

/// Step two alone: maximizes `ln L_H` for a given transition kernel. Only
/// the kernel's gates enter the computation. `log_lik_tp` is left at zero.
pub fn fit_hawkes(
    streams: &[EventStream],
    taxonomy: &Taxonomy,
    variant: Variant,
    kernel: TransitionKernel,
    opts: &FitOptions,
) -> Result<FitReport> {
    let (e_n, x_n) = (taxonomy.n_events(), taxonomy.n_states());
    check_admissible(streams, &kernel, taxonomy)?;
    let n_events: usize = streams.iter().map(|s| s.len()).sum();
    if n_events == 0 {
        return Err(Error::EmptyStream);
    }
    let total_time: f64 = streams.iter().map(|s| s.horizon).sum();
    let beta0 = opts.init.beta.unwrap_or(n_events as f64 / total_time);
    let alpha0 = opts
        .init
        .alpha
        .unwrap_or(0.1 * beta0 / (e_n * x_n) as f64);
    let layout = Layout::for_variant(variant, e_n, x_n);

    let mut hawkes = HawkesParams {
        nu: vec![0.0; e_n],
        alpha: Tensor3::zeros([e_n, x_n, e_n]),
        beta: Tensor3::filled([e_n, x_n, e_n], 1.0),
    };
    let mut iterations = 0;
    let mut gradient_norm: f64 = 0.0;
    let mut converged = true;

    for target in 0..e_n {
        let gate = target_gate(&kernel, target);
        let (count, admissible) = target_exposure(streams, &gate, target);
        let nu0 = opts.init.nu.unwrap_or(if count > 0 && admissible > 0.0 {
            count as f64 / admissible
        } else {
            PARAM_FLOOR
        });
        let init = TargetParams {
            nu: nu0,
            alpha: vec![alpha0; e_n * x_n],
            beta: vec![beta0; e_n * x_n],
        };
        let theta0 = layout.theta_from(&init);
        let scale = count.max(1) as f64;
        let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
            let p = layout.params(theta);
            let mut g = TargetGrad::zeros(e_n * x_n);
            let ll = target_log_lik(streams, x_n, target, &gate, &p, Some(&mut g));
            if !ll.is_finite() {
                return f64::INFINITY;
            }
            layout.chain_rule(theta, &g, grad);
            grad.iter_mut().for_each(|v| *v = -*v / scale);
            -ll / scale
        };
        let bfgs_opts = BfgsOptions {
            max_iterations: opts.max_iterations,
            gradient_tolerance: opts.gradient_tolerance,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (target as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut best: Option<BfgsResult> = None;
        for restart in 0..opts.restarts.max(1) {
            let start: Vec<f64> = if restart == 0 {
                theta0.clone()
            } else {
                theta0.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect()
            };
            let res = minimize(objective, &start, &bfgs_opts);
            if best.as_ref().map_or(true, |b| res.value < b.value) {
                best = Some(res);
            }
        }
        let best = best.expect("at least one start");
        iterations = iterations.max(best.iterations);
        gradient_norm = gradient_norm.max(best.gradient_norm);
        converged &= best.converged;
        let mut p = layout.params(&best.x);
        for a in p.alpha.iter_mut() {
            if *a < ZERO_ALPHA_THRESHOLD {
                *a = 0.0;
            }
        }
        p.write_into(&mut hawkes, target);
    }

    let model = ModelSpec {
        taxonomy: taxonomy.clone(),
        variant,
        transition: kernel,
        hawkes,
    };
    let log_lik_hawkes = log_lik_hawkes_pooled(streams, &model)?;
    Ok(FitReport {
        model,
        log_lik_tp: 0.0,
        log_lik_hawkes,
        iterations,
        converged,
        gradient_norm,
        n_events,
    })
}

/// Number of target events and total time during which the target is
/// admissible.
fn target_exposure(streams: &[EventStream], gate: &[bool], target: usize) -> (usize, f64) {
    let mut count = 0;
    let mut time = 0.0;
    for s in streams {
        let mut t_prev = 0.0;
        let mut state = s.initial_state;
        for r in &s.records {
            if gate[state] {
                time += r.time - t_prev;
            }
            count += usize::from(r.event == target);
            t_prev = r.time;
            state = r.state_after;
        }
        if gate[state] {
            time += s.horizon - t_prev;
        }
    }
    (count, time)
}

/// Maps free log-parameters of one target block onto `(nu, alpha, beta)`.
#[derive(Debug, Clone, Copy)]
enum Layout {
    /// `[ln nu]`; no excitation.
    Poisson { n_src: usize },
    /// `[ln nu, ln alpha[src].., ln beta[src]..]`, shared across marks.
    Const { e_n: usize, x_n: usize },
    /// `[ln nu, ln alpha[src,mark].., ln beta[src,mark]..]`.
    Full { n_src: usize },
}

fn floored_exp(v: f64) -> f64 {
    v.exp().max(PARAM_FLOOR)
}

fn floored_exp_slope(v: f64) -> f64 {
    let e = v.exp();
    if e > PARAM_FLOOR {
        e
    } else {
        0.0
    }
}

impl Layout {
    fn for_variant(variant: Variant, e_n: usize, x_n: usize) -> Self {
        match variant {
            Variant::Poisson => Layout::Poisson { n_src: e_n * x_n },
            Variant::ConstHawkes => Layout::Const { e_n, x_n },
            Variant::SdHawkes | Variant::ExsdHawkes => Layout::Full { n_src: e_n * x_n },
        }
    }

    fn theta_from(&self, p: &TargetParams) -> Vec<f64> {
        let mut theta = vec![p.nu.ln()];
        match *self {
            Layout::Poisson { .. } => {}
            Layout::Const { e_n, x_n } => {
                theta.extend((0..e_n).map(|src| p.alpha[src * x_n].ln()));
                theta.extend((0..e_n).map(|src| p.beta[src * x_n].ln()));
            }
            Layout::Full { .. } => {
                theta.extend(p.alpha.iter().map(|a| a.ln()));
                theta.extend(p.beta.iter().map(|b| b.ln()));
            }
        }
        theta
    }

    fn params(&self, theta: &[f64]) -> TargetParams {
        let nu = floored_exp(theta[0]);
        match *self {
            Layout::Poisson { n_src } => TargetParams {
                nu,
                alpha: vec![0.0; n_src],
                beta: vec![1.0; n_src],
            },
            Layout::Const { e_n, x_n } => {
                let alpha = (0..e_n * x_n).map(|s| floored_exp(theta[1 + s / x_n])).collect();
                let beta = (0..e_n * x_n).map(|s| theta[1 + e_n + s / x_n].exp()).collect();
                TargetParams { nu, alpha, beta }
            }
            Layout::Full { n_src } => TargetParams {
                nu,
                alpha: theta[1..1 + n_src].iter().map(|&v| floored_exp(v)).collect(),
                beta: theta[1 + n_src..].iter().map(|v| v.exp()).collect(),
            },
        }
    }

    /// Gradient with respect to the free parameters from the gradient with
    /// respect to the natural ones.
    fn chain_rule(&self, theta: &[f64], g: &TargetGrad, out: &mut [f64]) {
        out[0] = g.nu * floored_exp_slope(theta[0]);
        match *self {
            Layout::Poisson { .. } => {}
            Layout::Const { e_n, x_n } => {
                for src in 0..e_n {
                    let ga: f64 = g.alpha[src * x_n..(src + 1) * x_n].iter().sum();
                    let gb: f64 = g.beta[src * x_n..(src + 1) * x_n].iter().sum();
                    out[1 + src] = ga * floored_exp_slope(theta[1 + src]);
                    out[1 + e_n + src] = gb * theta[1 + e_n + src].exp();
                }
            }
            Layout::Full { n_src } => {
                for s in 0..n_src {
                    out[1 + s] = g.alpha[s] * floored_exp_slope(theta[1 + s]);
                    out[1 + n_src + s] = g.beta[s] * theta[1 + n_src + s].exp();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventRecord;

    #[test]
    fn empty_stream_is_an_error() {
        let tax = Taxonomy::new(["A"], ["1"]).unwrap();
        let s = EventStream::new(vec![], 0, 10.0);
        assert!(matches!(
            fit(&s, &tax, Variant::ExsdHawkes, &FitOptions::default()),
            Err(Error::EmptyStream)
        ));
    }

    #[test]
    fn poisson_fit_is_count_over_time() {
        let tax = Taxonomy::new(["A"], ["1"]).unwrap();
        let recs = (1..=40)
            .map(|i| EventRecord { time: i as f64 * 0.5, event: 0, state_before: 0, state_after: 0 })
            .collect();
        let s = EventStream::new(recs, 0, 25.0);
        let rep = fit(&s, &tax, Variant::Poisson, &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.model.hawkes.nu[0] - 40.0 / 25.0).abs() < 1e-9);
        assert_eq!(rep.model.hawkes.alpha.as_slice(), &[0.0]);
    }

    #[test]
    fn layout_round_trip_and_chain_rule() {
        let layout = Layout::Const { e_n: 2, x_n: 2 };
        let p = TargetParams { nu: 0.5, alpha: vec![0.1, 0.1, 0.2, 0.2], beta: vec![1.0, 1.0, 3.0, 3.0] };
        let theta = layout.theta_from(&p);
        assert_eq!(theta.len(), 5);
        let back = layout.params(&theta);
        for (a, b) in back.alpha.iter().zip(&p.alpha) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = TargetGrad { nu: 1.0, alpha: vec![1.0, 2.0, 3.0, 4.0], beta: vec![0.0; 4] };
        let mut out = vec![0.0; 5];
        layout.chain_rule(&theta, &g, &mut out);
        assert!((out[1] - 3.0 * 0.1).abs() < 1e-12);
        assert!((out[2] - 7.0 * 0.2).abs() < 1e-12);
    }
}
