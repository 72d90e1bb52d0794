//! Realized-variance signature curves from piecewise-constant mid-price
//! paths.

use crate::error::{Error, Result};
use crate::simulate::MidPricePath;

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureCurve {
    pub deltas: Vec<f64>,
    /// Mean realized variance per second across paths.
    pub rv: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
}

/// Logarithmic grid from 0.1 s to 600 s, 25 points.
pub fn default_deltas() -> Vec<f64> {
    log_grid(0.1, 600.0, 25)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Number of grid steps of width `delta` that fit in `horizon`, tolerant of
/// representation error in `horizon / delta`.
fn steps(delta: f64, horizon: f64) -> usize {
    let q = horizon / delta;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

/// Sum of squared increments of the previous-tick price sampled at
/// `0, delta, 2 delta, ...` up to `horizon`, divided by `horizon`.
pub fn realized_variance(path: &MidPricePath, delta: f64, horizon: f64) -> f64 {
    let n = steps(delta, horizon);
    let mut idx = 0;
    let mut prev = path.initial_price;
    let mut sum = 0.0;
    for k in 1..=n {
        let t = k as f64 * delta;
        while idx < path.times.len() && path.times[idx] <= t {
            idx += 1;
        }
        let p = if idx == 0 { path.initial_price } else { path.prices[idx - 1] };
        let d = p - prev;
        sum += d * d;
        prev = p;
    }
    sum / horizon
}

fn check_deltas(deltas: &[f64], horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no sampling intervals".into()));
    }
    for w in deltas.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument("sampling intervals must be strictly ascending".into()));
        }
    }
    if !(deltas[0] > 0.0) {
        return Err(Error::InvalidArgument("sampling intervals must be positive".into()));
    }
    if steps(deltas[deltas.len() - 1], horizon) == 0 {
        return Err(Error::InvalidArgument(format!(
            "sampling interval {} exceeds horizon {horizon}",
            deltas[deltas.len() - 1]
        )));
    }
    Ok(())
}

/// Ensemble mean and standard error of realized variance for each delta.
pub fn signature_curve(paths: &[MidPricePath], deltas: &[f64], horizon: f64) -> Result<SignatureCurve> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no mid-price paths".into()));
    }
    check_deltas(deltas, horizon)?;
    let m = paths.len() as f64;
    let mut rv = Vec::with_capacity(deltas.len());
    let mut stderr = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let v: Vec<f64> = paths.iter().map(|p| realized_variance(p, d, horizon)).collect();
        let mean = v.iter().sum::<f64>() / m;
        rv.push(mean);
        stderr.push(if paths.len() > 1 {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        });
    }
    Ok(SignatureCurve {
        deltas: deltas.to_vec(),
        rv,
        stderr,
        n_paths: paths.len(),
    })
}
