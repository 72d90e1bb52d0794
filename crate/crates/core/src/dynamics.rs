//! Exponential-kernel excitation recursion, gated intensities, closed-form
//! compensator segments and integrated-kernel summaries.
//!
//! The excitation tensor `R[(src, mark, target)]` holds the summed, decayed
//! contributions of past `src` events that left the book in state `mark`.
//! The intensity of `target` is `nu[target] + sum over (src, mark) of R`,
//! multiplied by the gate of `target` in the current state.
//!
//! Intensities are left-continuous: an event registered at `t` only affects
//! the intensity strictly after `t`.

use crate::error::{Error, Result};
use crate::model::{HawkesParams, ModelSpec};
use crate::tensor::{Matrix, Tensor3};

/// Decay rates deduplicated across the tensor so each segment needs one
/// `exp` per distinct rate.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DecayPlan {
    rates: Vec<f64>,
    slot: Vec<usize>,
}

impl DecayPlan {
    pub(crate) fn new(beta: &Tensor3) -> Self {
        let mut rates: Vec<f64> = Vec::new();
        let slot = beta
            .as_slice()
            .iter()
            .map(|&b| match rates.iter().position(|&r| r.to_bits() == b.to_bits()) {
                Some(i) => i,
                None => {
                    rates.push(b);
                    rates.len() - 1
                }
            })
            .collect();
        Self { rates, slot }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionState {
    r: Tensor3,
    last_time: f64,
    plan: DecayPlan,
    factors: Vec<f64>,
}

impl RecursionState {
    /// Empty history at time zero.
    pub fn new(params: &HawkesParams) -> Self {
        Self::starting_at(params, 0.0)
    }

    pub fn starting_at(params: &HawkesParams, time: f64) -> Self {
        let plan = DecayPlan::new(&params.beta);
        let factors = vec![0.0; plan.rates.len()];
        Self {
            r: Tensor3::zeros(params.alpha.shape()),
            last_time: time,
            plan,
            factors,
        }
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    pub fn excitation(&self) -> &Tensor3 {
        &self.r
    }

    /// Overwrites the excitation tensor, e.g. to set up a test fixture.
    pub fn set_excitation(&mut self, r: Tensor3) {
        assert_eq!(r.shape(), self.r.shape(), "excitation shape mismatch");
        self.r = r;
    }

    /// Decays every entry by `exp(-beta * (to_time - last_time))`.
    pub fn advance(&mut self, to_time: f64) -> Result<()> {
        let dt = to_time - self.last_time;
        if dt < 0.0 || dt.is_nan() {
            return Err(Error::NegativeTimeStep {
                from: self.last_time,
                to: to_time,
            });
        }
        if dt > 0.0 {
            for (f, &b) in self.factors.iter_mut().zip(&self.plan.rates) {
                *f = (-b * dt).exp();
            }
            for (i, v) in self.r.as_mut_slice().iter_mut().enumerate() {
                *v *= self.factors[self.plan.slot[i]];
            }
        }
        self.last_time = to_time;
        Ok(())
    }

    /// Returns an advanced copy.
    pub fn advanced(&self, to_time: f64) -> Result<Self> {
        let mut next = self.clone();
        next.advance(to_time)?;
        Ok(next)
    }

    /// Adds the jump of an event of type `event` that moved the book into
    /// `post_state`. The state must already be advanced to the event time.
    pub fn register_event(&mut self, params: &HawkesParams, event: usize, post_state: usize) {
        let jump = params.alpha.row(event, post_state);
        for (r, &a) in self.r.row_mut(event, post_state).iter_mut().zip(jump) {
            *r += a;
        }
    }

    /// Ungated intensity of `target`: `nu + sum of excitation`.
    pub fn raw_intensity(&self, params: &HawkesParams, target: usize) -> f64 {
        let [src_n, mark_n, _] = self.r.shape();
        let mut acc = params.nu[target];
        for src in 0..src_n {
            for mark in 0..mark_n {
                acc += self.r[(src, mark, target)];
            }
        }
        acc
    }

    /// Ungated intensities for all targets, written into `out`.
    pub fn raw_intensities_into(&self, params: &HawkesParams, out: &mut [f64]) {
        let [src_n, mark_n, tgt_n] = self.r.shape();
        out[..tgt_n].copy_from_slice(&params.nu);
        for src in 0..src_n {
            for mark in 0..mark_n {
                for (o, &r) in out.iter_mut().zip(self.r.row(src, mark)) {
                    *o += r;
                }
            }
        }
    }

    /// Exact integral over `[last_time, last_time + dt]` of the ungated
    /// intensity of every target, assuming no events in between.
    pub(crate) fn raw_integrals(&self, params: &HawkesParams, dt: f64) -> Vec<f64> {
        let [src_n, mark_n, tgt_n] = self.r.shape();
        let weights: Vec<f64> = self
            .plan
            .rates
            .iter()
            .map(|&b| -(-b * dt).exp_m1() / b)
            .collect();
        let mut out: Vec<f64> = params.nu.iter().map(|&nu| nu * dt).collect();
        for src in 0..src_n {
            for mark in 0..mark_n {
                let base = self.r.offset(src, mark, 0);
                for (target, o) in out.iter_mut().enumerate().take(tgt_n) {
                    let r = self.r.as_slice()[base + target];
                    if r != 0.0 {
                        *o += r * weights[self.plan.slot[base + target]];
                    }
                }
            }
        }
        out
    }
}

/// Raw, gated and per-transition intensities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityVector {
    /// `gate[e, state] * raw[e]`.
    pub lambda_dag: Vec<f64>,
    /// `phi[e, state, x] * raw[e]`, an E x X matrix.
    pub lambda_tilde: Matrix,
    pub raw: Vec<f64>,
}

pub fn intensity(rec: &RecursionState, model: &ModelSpec, current_state: usize) -> IntensityVector {
    let e_n = model.n_events();
    let x_n = model.n_states();
    let mut raw = vec![0.0; e_n];
    rec.raw_intensities_into(&model.hawkes, &mut raw);
    let tk = &model.transition;
    let lambda_dag = raw
        .iter()
        .enumerate()
        .map(|(e, &r)| if tk.gate(e, current_state) { r } else { 0.0 })
        .collect();
    let mut lambda_tilde = Matrix::zeros(e_n, x_n);
    for (e, &r) in raw.iter().enumerate() {
        for x in 0..x_n {
            lambda_tilde[(e, x)] = tk.phi(e, current_state, x) * r;
        }
    }
    IntensityVector {
        lambda_dag,
        lambda_tilde,
        raw,
    }
}

/// Integral of the gated intensity of each event type over
/// `[rec.last_time, rec.last_time + dt]` with the book held in `state`.
pub fn compensator_segment(
    rec: &RecursionState,
    model: &ModelSpec,
    state: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeDuration(dt));
    }
    let mut out = rec.raw_integrals(&model.hawkes, dt);
    for (e, v) in out.iter_mut().enumerate() {
        if !model.transition.gate(e, state) {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Local branching ratios `n[e, x] = sum over src of alpha[src,x,e] / beta[src,x,e]`.
pub fn branching_ratio(model: &ModelSpec) -> Matrix {
    let e_n = model.n_events();
    let x_n = model.n_states();
    let hp = &model.hawkes;
    let mut n = Matrix::zeros(e_n, x_n);
    for e in 0..e_n {
        for x in 0..x_n {
            n[(e, x)] = (0..e_n)
                .map(|src| hp.alpha[(src, x, e)] / hp.beta[(src, x, e)])
                .sum();
        }
    }
    n
}

/// Integrated kernel matrix for mark `x`: `K[src, target] = alpha / beta`.
pub fn kernel_matrix(model: &ModelSpec, x: usize) -> Matrix {
    let e_n = model.n_events();
    let hp = &model.hawkes;
    let mut k = Matrix::zeros(e_n, e_n);
    for src in 0..e_n {
        for target in 0..e_n {
            k[(src, target)] = hp.alpha[(src, x, target)] / hp.beta[(src, x, target)];
        }
    }
    k
}
