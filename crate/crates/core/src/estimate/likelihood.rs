//! Gated Hawkes log-likelihood with analytic gradients.
//!
//! The likelihood splits over target event types: the terms for target `e`
//! only involve `nu[e]`, `alpha[.., .., e]` and `beta[.., .., e]`. Each
//! target is evaluated in one O(N) pass that carries, per source
//! `(src, mark)`, the decayed count `A = sum exp(-beta (t - t_k))` and its
//! age-weighted companion `B = sum (t - t_k) exp(-beta (t - t_k))`, so that
//! `dR/dalpha = A` and `dR/dbeta = -alpha B`.

use crate::error::{Error, Result};
use crate::model::{EventStream, HawkesParams, ModelSpec, Taxonomy, TransitionKernel};
use crate::tensor::Tensor3;

/// Parameters of a single target type; source arrays are indexed
/// `src * n_states + mark`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TargetParams {
    pub nu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TargetGrad {
    pub nu: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl TargetGrad {
    pub fn zeros(n_sources: usize) -> Self {
        Self {
            nu: 0.0,
            alpha: vec![0.0; n_sources],
            beta: vec![0.0; n_sources],
        }
    }
}

impl TargetParams {
    pub fn from_model(hp: &HawkesParams, target: usize) -> Self {
        let (e_n, x_n) = (hp.n_events(), hp.n_states());
        let mut alpha = Vec::with_capacity(e_n * x_n);
        let mut beta = Vec::with_capacity(e_n * x_n);
        for src in 0..e_n {
            for mark in 0..x_n {
                alpha.push(hp.alpha[(src, mark, target)]);
                beta.push(hp.beta[(src, mark, target)]);
            }
        }
        Self {
            nu: hp.nu[target],
            alpha,
            beta,
        }
    }

    pub fn write_into(&self, hp: &mut HawkesParams, target: usize) {
        let x_n = hp.n_states();
        hp.nu[target] = self.nu;
        for (s, (&a, &b)) in self.alpha.iter().zip(&self.beta).enumerate() {
            hp.alpha[(s / x_n, s % x_n, target)] = a;
            hp.beta[(s / x_n, s % x_n, target)] = b;
        }
    }
}

/// Log-likelihood contribution of one target type over pooled streams.
///
/// `gate[x]` says whether the target is admissible in state `x`. Observed
/// events of the target must be admissible (checked by the callers). A
/// non-positive intensity at an observed event yields `-inf`.
pub(crate) fn target_log_lik(
    streams: &[EventStream],
    n_states: usize,
    target: usize,
    gate: &[bool],
    p: &TargetParams,
    mut grad: Option<&mut TargetGrad>,
) -> f64 {
    let n_src = p.alpha.len();
    if !(p.nu.is_finite()
        && p.alpha.iter().all(|v| v.is_finite())
        && p.beta.iter().all(|v| v.is_finite() && *v > 0.0))
    {
        return f64::NEG_INFINITY;
    }
    if let Some(g) = grad.as_deref_mut() {
        *g = TargetGrad::zeros(n_src);
    }
    let with_grad = grad.is_some();
    let mut a = vec![0.0; n_src];
    let mut b = vec![0.0; n_src];
    let mut d = vec![0.0; n_src];
    let mut log_sum = 0.0;
    let mut comp = 0.0;

    for stream in streams {
        a.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        let mut t_prev = 0.0;
        let mut state = stream.initial_state;
        let segments = stream
            .records
            .iter()
            .map(|r| (r.time, Some(r)))
            .chain(std::iter::once((stream.horizon, None)));
        for (t, rec) in segments {
            let dt = t - t_prev;
            if dt > 0.0 {
                for s in 0..n_src {
                    d[s] = (-p.beta[s] * dt).exp();
                }
                if gate[state] {
                    comp += p.nu * dt;
                    if let Some(g) = grad.as_deref_mut() {
                        g.nu -= dt;
                        for s in 0..n_src {
                            if a[s] == 0.0 {
                                continue;
                            }
                            let beta = p.beta[s];
                            let x = beta * dt;
                            let w = -(-x).exp_m1() / beta;
                            let q = (-(-x).exp_m1() - x * d[s]) / (beta * beta);
                            comp += p.alpha[s] * a[s] * w;
                            g.alpha[s] -= a[s] * w;
                            g.beta[s] += p.alpha[s] * (b[s] * w + a[s] * q);
                        }
                    } else {
                        for s in 0..n_src {
                            if a[s] != 0.0 {
                                let w = -(-p.beta[s] * dt).exp_m1() / p.beta[s];
                                comp += p.alpha[s] * a[s] * w;
                            }
                        }
                    }
                }
                if with_grad {
                    for s in 0..n_src {
                        b[s] = d[s] * (b[s] + dt * a[s]);
                        a[s] *= d[s];
                    }
                } else {
                    for s in 0..n_src {
                        a[s] *= d[s];
                    }
                }
            }
            let Some(r) = rec else { break };
            if r.event == target {
                let mut lambda = p.nu;
                for s in 0..n_src {
                    lambda += p.alpha[s] * a[s];
                }
                if !(lambda > 0.0) {
                    return f64::NEG_INFINITY;
                }
                log_sum += lambda.ln();
                if let Some(g) = grad.as_deref_mut() {
                    let inv = 1.0 / lambda;
                    g.nu += inv;
                    for s in 0..n_src {
                        g.alpha[s] += a[s] * inv;
                        g.beta[s] -= p.alpha[s] * b[s] * inv;
                    }
                }
            }
            a[r.event * n_states + r.state_after] += 1.0;
            state = r.state_after;
            t_prev = t;
        }
    }
    log_sum - comp
}

/// Fails on the first observed event that is inadmissible in its
/// pre-event state.
pub fn check_admissible(
    streams: &[EventStream],
    tk: &TransitionKernel,
    taxonomy: &Taxonomy,
) -> Result<()> {
    for stream in streams {
        for (n, r) in stream.records.iter().enumerate() {
            if !tk.gate(r.event, r.state_before) {
                return Err(Error::InadmissibleEvent {
                    index: n,
                    time: r.time,
                    event: taxonomy.event_code(r.event).to_string(),
                    state: taxonomy.state_label(r.state_before).to_string(),
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn target_gate(tk: &TransitionKernel, target: usize) -> Vec<bool> {
    (0..tk.n_states()).map(|x| tk.gate(target, x)).collect()
}

/// `ln L_H`: sum of log raw intensities at the events minus the gated
/// compensator up to the horizon.
pub fn log_lik_hawkes(stream: &EventStream, model: &ModelSpec) -> Result<f64> {
    log_lik_hawkes_pooled(std::slice::from_ref(stream), model)
}

/// Pooled likelihood of several independent sessions (sum over streams).
pub fn log_lik_hawkes_pooled(streams: &[EventStream], model: &ModelSpec) -> Result<f64> {
    check_admissible(streams, &model.transition, &model.taxonomy)?;
    let x_n = model.n_states();
    Ok((0..model.n_events())
        .map(|e| {
            let gate = target_gate(&model.transition, e);
            let p = TargetParams::from_model(&model.hawkes, e);
            target_log_lik(streams, x_n, e, &gate, &p, None)
        })
        .sum())
}

/// Gradient of `ln L_H` with respect to `nu`, `alpha` and `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesGradient {
    pub nu: Vec<f64>,
    pub alpha: Tensor3,
    pub beta: Tensor3,
}

pub fn log_lik_hawkes_with_gradient(
    stream: &EventStream,
    model: &ModelSpec,
) -> Result<(f64, HawkesGradient)> {
    let streams = std::slice::from_ref(stream);
    check_admissible(streams, &model.transition, &model.taxonomy)?;
    let (e_n, x_n) = (model.n_events(), model.n_states());
    let mut out = HawkesParams {
        nu: vec![0.0; e_n],
        alpha: Tensor3::zeros([e_n, x_n, e_n]),
        beta: Tensor3::zeros([e_n, x_n, e_n]),
    };
    let mut total = 0.0;
    for e in 0..e_n {
        let gate = target_gate(&model.transition, e);
        let p = TargetParams::from_model(&model.hawkes, e);
        let mut g = TargetGrad::zeros(e_n * x_n);
        total += target_log_lik(streams, x_n, e, &gate, &p, Some(&mut g));
        TargetParams {
            nu: g.nu,
            alpha: g.alpha,
            beta: g.beta,
        }
        .write_into(&mut out, e);
    }
    Ok((
        total,
        HawkesGradient {
            nu: out.nu,
            alpha: out.alpha,
            beta: out.beta,
        },
    ))
}

/// Full likelihood `sum ln(phi * raw intensity) - compensator`, evaluated
/// directly from the per-transition intensities rather than as a sum of
/// the two separable parts.
pub fn log_lik_full(stream: &EventStream, model: &ModelSpec) -> Result<f64> {
    use crate::dynamics::{compensator_segment, RecursionState};

    check_admissible(std::slice::from_ref(stream), &model.transition, &model.taxonomy)?;
    let e_n = model.n_events();
    let mut rec = RecursionState::new(&model.hawkes);
    let mut raw = vec![0.0; e_n];
    let mut ll = 0.0;
    let mut state = stream.initial_state;
    for r in &stream.records {
        let dt = r.time - rec.last_time();
        let comp = compensator_segment(&rec, model, state, dt)?;
        ll -= comp.iter().sum::<f64>();
        rec.advance(r.time)?;
        rec.raw_intensities_into(&model.hawkes, &mut raw);
        let tilde = model.transition.phi(r.event, state, r.state_after) * raw[r.event];
        if !(tilde > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        ll += tilde.ln();
        rec.register_event(&model.hawkes, r.event, r.state_after);
        state = r.state_after;
    }
    let dt = stream.horizon - rec.last_time();
    ll -= compensator_segment(&rec, model, state, dt)?.iter().sum::<f64>();
    Ok(ll)
}
