//! Independent reference computations and random fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use exsd_hawkes::{
    EventRecord, EventStream, HawkesParams, ModelSpec, Taxonomy, Tensor3, TransitionKernel, Variant,
};
use rand::Rng;

pub fn taxonomy(e: usize, x: usize) -> Taxonomy {
    Taxonomy::new((0..e).map(|i| format!("E{i}")), (0..x).map(|i| format!("S{i}"))).unwrap()
}

/// Random kernel; with `gated`, roughly a quarter of the rows are closed
/// while every state keeps at least one admissible event.
pub fn random_kernel<R: Rng>(rng: &mut R, e: usize, x: usize, gated: bool) -> TransitionKernel {
    loop {
        let phi = Tensor3::from_fn([e, x, x], |_, _, _| rng.gen_range(0.05..1.0));
        let mut phi = phi;
        for ev in 0..e {
            for s in 0..x {
                let closed = gated && rng.gen_bool(0.25);
                let row = phi.row_mut(ev, s);
                let sum: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p = if closed { 0.0 } else { *p / sum };
                }
            }
        }
        let k = TransitionKernel::from_phi(phi).unwrap();
        if (0..x).all(|s| k.any_admissible(s)) {
            return k;
        }
    }
}

pub fn random_hawkes<R: Rng>(rng: &mut R, e: usize, x: usize) -> HawkesParams {
    HawkesParams {
        nu: (0..e).map(|_| rng.gen_range(0.1..2.0)).collect(),
        alpha: Tensor3::from_fn([e, x, e], |_, _, _| rng.gen_range(0.0..1.5)),
        beta: Tensor3::from_fn([e, x, e], |_, _, _| rng.gen_range(0.3..5.0)),
    }
}

pub fn random_model<R: Rng>(rng: &mut R, e: usize, x: usize, gated: bool) -> ModelSpec {
    ModelSpec {
        taxonomy: taxonomy(e, x),
        variant: Variant::ExsdHawkes,
        transition: random_kernel(rng, e, x, gated),
        hawkes: random_hawkes(rng, e, x),
    }
}

/// Stream of `n` events at uniform times in (0, horizon), each admissible
/// in its pre-event state and moving to a state of positive probability.
pub fn random_stream<R: Rng>(rng: &mut R, kernel: &TransitionKernel, n: usize, horizon: f64) -> EventStream {
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.retain(|&t| t > 0.0);
    let x_n = kernel.n_states();
    let mut state = rng.gen_range(0..x_n);
    let initial = state;
    let mut records = Vec::with_capacity(times.len());
    for t in times {
        let admissible: Vec<usize> = (0..kernel.n_events()).filter(|&e| kernel.gate(e, state)).collect();
        let e = admissible[rng.gen_range(0..admissible.len())];
        let targets: Vec<usize> = (0..x_n).filter(|&y| kernel.phi(e, state, y) > 0.0).collect();
        let next = targets[rng.gen_range(0..targets.len())];
        records.push(EventRecord { time: t, event: e, state_before: state, state_after: next });
        state = next;
    }
    EventStream::new(records, initial, horizon)
}

/// Ungated intensity of `target` at `t` by summing over every earlier
/// event, with the kernel marked by the post-event state.
pub fn direct_raw_intensity(stream: &EventStream, hp: &HawkesParams, t: f64, target: usize) -> f64 {
    let mut lam = hp.nu[target];
    for r in stream.records.iter().take_while(|r| r.time < t) {
        let a = hp.alpha[(r.event, r.state_after, target)];
        let b = hp.beta[(r.event, r.state_after, target)];
        lam += a * (-b * (t - r.time)).exp();
    }
    lam
}

/// State in force just before `t`.
pub fn state_before(stream: &EventStream, t: f64) -> usize {
    stream
        .records
        .iter()
        .take_while(|r| r.time < t)
        .last()
        .map_or(stream.initial_state, |r| r.state_after)
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// Central difference of `f` along coordinate `i`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut dn = x.to_vec();
    up[i] += h;
    dn[i] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

/// Exp(1) quantiles at plotting positions (i + 0.5) / n.
pub fn exp_quantile_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect()
}

/// Integral over `[0, until]` of `weight(state) * raw_target(s)`, summing
/// each earlier event's exponential in closed form on every constant-state
/// segment.
pub fn direct_compensator(
    stream: &EventStream,
    hp: &HawkesParams,
    target: usize,
    weight: &dyn Fn(usize) -> f64,
    until: f64,
) -> f64 {
    let mut total = 0.0;
    let mut start = 0.0;
    let mut state = stream.initial_state;
    let mut k = 0;
    loop {
        let end = stream.records.get(k).map_or(until, |r| r.time.min(until));
        let w = weight(state);
        if w != 0.0 && end > start {
            let mut seg = hp.nu[target] * (end - start);
            for r in &stream.records[..k] {
                let a = hp.alpha[(r.event, r.state_after, target)];
                let b = hp.beta[(r.event, r.state_after, target)];
                seg += a / b * ((-b * (start - r.time)).exp() - (-b * (end - r.time)).exp());
            }
            total += w * seg;
        }
        if k >= stream.len() || stream.records[k].time >= until {
            return total;
        }
        state = stream.records[k].state_after;
        start = end;
        k += 1;
    }
}

/// Largest relative gap between the analytic gradient of the Hawkes
/// log-likelihood in log-parameters and central differences with step `h`.
/// Components whose magnitude is below `floor` are compared absolutely
/// against `floor`.
pub fn log_gradient_gap(stream: &EventStream, model: &ModelSpec, h: f64, floor: f64) -> f64 {
    use exsd_hawkes::estimate::{log_lik_hawkes, log_lik_hawkes_with_gradient};
    let hp = &model.hawkes;
    let (n_nu, n_a) = (hp.nu.len(), hp.alpha.as_slice().len());
    let theta: Vec<f64> = hp.nu.iter().chain(hp.alpha.as_slice()).chain(hp.beta.as_slice()).map(|v| v.ln()).collect();
    let (_, g) = log_lik_hawkes_with_gradient(stream, model).unwrap();
    let analytic: Vec<f64> = g
        .nu
        .iter()
        .chain(g.alpha.as_slice())
        .chain(g.beta.as_slice())
        .zip(&theta)
        .map(|(d, t)| d * t.exp())
        .collect();
    let f = |th: &[f64]| {
        let mut m = model.clone();
        for (i, v) in m.hawkes.nu.iter_mut().enumerate() {
            *v = th[i].exp();
        }
        for (i, v) in m.hawkes.alpha.as_mut_slice().iter_mut().enumerate() {
            *v = th[n_nu + i].exp();
        }
        for (i, v) in m.hawkes.beta.as_mut_slice().iter_mut().enumerate() {
            *v = th[n_nu + n_a + i].exp();
        }
        log_lik_hawkes(stream, &m).unwrap()
    };
    (0..theta.len())
        .map(|i| (central_diff(&f, &theta, i, h) - analytic[i]).abs() / analytic[i].abs().max(floor))
        .fold(0.0, f64::max)
}
