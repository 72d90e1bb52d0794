//! Time-change residuals, Exp(1) goodness-of-fit summaries and regime
//! stability.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dynamics::{branching_ratio, kernel_matrix, RecursionState};
use crate::error::{Error, Result};
use crate::estimate::check_admissible;
use crate::model::{validate_model, validate_stream, EventStream, ModelSpec};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResidualKey {
    Event(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub key: ResidualKey,
    pub values: Vec<f64>,
}

impl ResidualSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_inputs(stream: &EventStream, model: &ModelSpec) -> Result<()> {
    let v = validate_model(model);
    if !v.is_empty() {
        return Err(Error::InvalidModel(v));
    }
    let v = validate_stream(stream, &model.taxonomy);
    if !v.is_empty() {
        return Err(Error::InvalidStream(v));
    }
    check_admissible(std::slice::from_ref(stream), &model.transition, &model.taxonomy)
}

enum Step<'a> {
    /// Raw integrals over the segment ending at the next event, and the
    /// state held on it.
    Segment(usize, &'a [f64]),
    /// Event type and post-event state.
    Event(usize, usize),
}

fn walk(stream: &EventStream, model: &ModelSpec, mut visit: impl FnMut(Step)) -> Result<()> {
    let hp = &model.hawkes;
    let mut rec = RecursionState::new(hp);
    let mut state = stream.initial_state;
    for r in &stream.records {
        let raw = rec.raw_integrals(hp, r.time - rec.last_time());
        visit(Step::Segment(state, &raw));
        rec.advance(r.time)?;
        visit(Step::Event(r.event, r.state_after));
        rec.register_event(hp, r.event, r.state_after);
        state = r.state_after;
    }
    Ok(())
}

/// Gated compensator increments between consecutive arrivals of each event
/// type. The first residual of each type integrates from time 0.
pub fn event_residuals(stream: &EventStream, model: &ModelSpec) -> Result<BTreeMap<usize, ResidualSeries>> {
    check_inputs(stream, model)?;
    let e_n = model.n_events();
    let tk = &model.transition;
    let mut acc = vec![0.0; e_n];
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); e_n];
    walk(stream, model, |step| match step {
        Step::Segment(state, raw) => {
            for (e, a) in acc.iter_mut().enumerate() {
                if tk.gate(e, state) {
                    *a += raw[e];
                }
            }
        }
        Step::Event(e, _) => out[e].push(std::mem::take(&mut acc[e])),
    })?;
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(e, values)| (e, ResidualSeries { key: ResidualKey::Event(e), values }))
        .collect())
}

/// Increments of the per-transition compensator `phi[e, X(t), x] * raw_e`
/// between consecutive `(e, x)` occurrences, where `x` is the post-event
/// state.
pub fn total_residuals(
    stream: &EventStream,
    model: &ModelSpec,
) -> Result<BTreeMap<(usize, usize), ResidualSeries>> {
    check_inputs(stream, model)?;
    let (e_n, x_n) = (model.n_events(), model.n_states());
    let tk = &model.transition;
    let mut acc = vec![0.0; e_n * x_n];
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); e_n * x_n];
    walk(stream, model, |step| match step {
        Step::Segment(state, raw) => {
            for e in 0..e_n {
                for (x, &p) in tk.row(e, state).iter().enumerate() {
                    if p > 0.0 {
                        acc[e * x_n + x] += p * raw[e];
                    }
                }
            }
        }
        Step::Event(e, x) => out[e * x_n + x].push(std::mem::take(&mut acc[e * x_n + x])),
    })?;
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, values)| {
            let key = (i / x_n, i % x_n);
            (key, ResidualSeries { key: ResidualKey::Pair(key.0, key.1), values })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QQData {
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
}

pub fn qq_exp1(series: &ResidualSeries) -> Result<QQData> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("QQ plot of an empty series".into()));
    }
    let n = series.len() as f64;
    let mut empirical = series.values.clone();
    empirical.sort_by(f64::total_cmp);
    let theoretical = (0..series.len())
        .map(|i| -(-(i as f64 + 0.5) / n).ln_1p())
        .collect();
    Ok(QQData { empirical, theoretical })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acf {
    /// Index 0 is lag 0 (always 1).
    pub values: Vec<f64>,
    /// Half-width `1.96 / sqrt(n)` of the white-noise band.
    pub band: f64,
    pub n: usize,
}

impl Acf {
    /// Number of lags 1..=max_lag whose autocorrelation lies inside the band.
    pub fn inside_band(&self) -> usize {
        self.values[1..].iter().filter(|v| v.abs() <= self.band).count()
    }
}

/// Sample autocorrelation at lags 0..=max_lag. A zero-variance series has
/// all lagged values 0.
pub fn acf(series: &ResidualSeries, max_lag: usize) -> Result<Acf> {
    let x = &series.values;
    let n = x.len();
    if n <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "series of length {n} too short for max lag {max_lag}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    let values = (0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else if denom > 0.0 {
                d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(Acf {
        values,
        band: 1.96 / (n as f64).sqrt(),
        n,
    })
}

/// Correlation of `a[t]` with `b[t + k]` for k = 0..=max_lag over the first
/// `min(len)` entries of each series.
pub fn cross_correlation(a: &ResidualSeries, b: &ResidualSeries, max_lag: usize) -> Result<Vec<f64>> {
    let n = a.len().min(b.len());
    if n <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "common length {n} too short for max lag {max_lag}"
        )));
    }
    let centre = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let da = centre(&a.values[..n]);
    let db = centre(&b.values[..n]);
    let sa: f64 = da.iter().map(|v| v * v).sum();
    let sb: f64 = db.iter().map(|v| v * v).sum();
    let norm = (sa * sb).sqrt();
    Ok((0..=max_lag)
        .map(|k| {
            if norm > 0.0 {
                da[..n - k].iter().zip(&db[k..]).map(|(x, y)| x * y).sum::<f64>() / norm
            } else {
                0.0
            }
        })
        .collect())
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let cdf: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum::<f64>()
            * c;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample KS statistic against Exp(1) with its asymptotic p-value
/// (reliable for n >= 35). An empty series gives `(0, 1)`.
pub fn ks_exp1(series: &ResidualSeries) -> (f64, f64) {
    let n = series.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut v = series.values.clone();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = -(-x.max(0.0)).exp_m1();
            ((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    (d, kolmogorov_survival(nf.sqrt() * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    SubCritical,
    Critical,
    SuperCritical,
}

impl Regime {
    pub fn classify(rho: f64) -> Self {
        if rho < 1.0 {
            Regime::SubCritical
        } else if rho > 1.0 {
            Regime::SuperCritical
        } else {
            Regime::Critical
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `n[e, x]`, E x X.
    pub branching: Matrix,
    pub spectral: Vec<f64>,
    pub regime: Vec<Regime>,
}

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

/// Perron root of a non-negative square matrix. Iterates on `K + I`, which
/// shares the Perron vector and is primitive on each irreducible block, and
/// returns `(rho, iterations)` or the last estimate on failure.
pub fn spectral_radius(k: &Matrix, tol: f64, max_iter: usize) -> std::result::Result<(f64, usize), (f64, usize)> {
    let n = k.rows();
    if n == 0 {
        return Ok((0.0, 0));
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut estimate = f64::NAN;
    for it in 1..=max_iter {
        for (j, nj) in next.iter_mut().enumerate() {
            *nj = v[j] + (0..n).map(|i| v[i] * k[(i, j)]).sum::<f64>();
        }
        // v sums to one, so the 1-norm of the image is the Rayleigh-type estimate
        let s: f64 = next.iter().sum();
        let rho = s - 1.0;
        for (vj, nj) in v.iter_mut().zip(&next) {
            *vj = nj / s;
        }
        if (rho - estimate).abs() <= tol * rho.abs().max(1.0) {
            return Ok((rho.max(0.0), it));
        }
        estimate = rho;
    }
    Err((estimate, max_iter))
}

pub fn stability_report(model: &ModelSpec) -> Result<StabilityReport> {
    let v = validate_model(model);
    if !v.is_empty() {
        return Err(Error::InvalidModel(v));
    }
    let mut spectral = Vec::with_capacity(model.n_states());
    for x in 0..model.n_states() {
        match spectral_radius(&kernel_matrix(model, x), POWER_TOLERANCE, POWER_MAX_ITERATIONS) {
            Ok((rho, _)) => spectral.push(rho),
            Err((estimate, iterations)) => {
                return Err(Error::PowerIteration { state: x, iterations, estimate })
            }
        }
    }
    Ok(StabilityReport {
        branching: branching_ratio(model),
        regime: spectral.iter().map(|&r| Regime::classify(r)).collect(),
        spectral,
    })
}
