//! Dense BFGS minimizer with a backtracking Armijo line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once the max-norm of the gradient falls to this value.
    pub gradient_tolerance: f64,
    /// Largest coordinate change of a single trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the objective and writes its gradient into
/// the second argument. Accepted iterates never increase the objective.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    let mut h = identity(n);
    let mut scaled = false;
    let mut iterations = 0;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut p = vec![0.0; n];

    if fx.is_finite() {
        while iterations < opts.max_iterations && max_norm(&g) > opts.gradient_tolerance {
            mat_vec_neg(&h, &g, &mut p);
            let mut slope = dot(&g, &p);
            if !(slope < 0.0) {
                h = identity(n);
                scaled = false;
                p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
                slope = dot(&g, &p);
            }
            let mut t = (opts.max_step / max_norm(&p)).min(1.0);
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    x_new[i] = x[i] + t * p[i];
                }
                let f_new = f(&x_new, &mut g_new);
                if f_new.is_finite() && f_new <= fx + ARMIJO_C1 * t * slope {
                    accepted = true;
                    let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                    let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                    let sy = dot(&s, &y);
                    let yy = dot(&y, &y);
                    if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() && sy > 0.0 {
                        if !scaled {
                            let gamma = sy / yy;
                            h = identity(n);
                            h.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= gamma));
                            scaled = true;
                        }
                        bfgs_update(&mut h, &s, &y, sy);
                    }
                    x.copy_from_slice(&x_new);
                    g.copy_from_slice(&g_new);
                    fx = f_new;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            iterations += 1;
            trace.push(fx);
        }
    }

    let gradient_norm = if fx.is_finite() { max_norm(&g) } else { f64::INFINITY };
    BfgsResult {
        converged: gradient_norm <= opts.gradient_tolerance,
        x,
        value: fx,
        gradient: g,
        gradient_norm,
        iterations,
        trace,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec_neg(h: &[Vec<f64>], g: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(h) {
        *o = -dot(row, g);
    }
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
