//! Transition counting and the closed-form maximizer of the transition
//! part of the likelihood under binary row-sum constraints.

use crate::error::{Error, Result};
use crate::model::{EventStream, Taxonomy, TransitionKernel};
use crate::tensor::Tensor3;

/// `n_exx[e, x, x']` counts records of type `e` that moved the book from
/// `x` to `x'`; `n_ex` holds the row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    n_exx: Vec<u64>,
    n_ex: Vec<u64>,
    n_events: usize,
    n_states: usize,
}

impl TransitionCounts {
    pub fn zeros(n_events: usize, n_states: usize) -> Self {
        Self {
            n_exx: vec![0; n_events * n_states * n_states],
            n_ex: vec![0; n_events * n_states],
            n_events,
            n_states,
        }
    }

    pub fn from_triples(n_events: usize, n_states: usize, counts: &[(usize, usize, usize, u64)]) -> Self {
        let mut c = Self::zeros(n_events, n_states);
        for &(e, x, y, n) in counts {
            c.add(e, x, y, n);
        }
        c
    }

    fn add(&mut self, e: usize, x: usize, y: usize, n: u64) {
        self.n_exx[(e * self.n_states + x) * self.n_states + y] += n;
        self.n_ex[e * self.n_states + x] += n;
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `N_e(x, x')`.
    pub fn transitions(&self, e: usize, x: usize, y: usize) -> u64 {
        self.n_exx[(e * self.n_states + x) * self.n_states + y]
    }

    /// `N_e(x)`.
    pub fn occurrences(&self, e: usize, x: usize) -> u64 {
        self.n_ex[e * self.n_states + x]
    }

    pub fn total(&self) -> u64 {
        self.n_ex.iter().sum()
    }

    /// Adds the counts of another tally over the same alphabets.
    pub fn merge(&mut self, other: &TransitionCounts) {
        assert_eq!(
            (self.n_events, self.n_states),
            (other.n_events, other.n_states),
            "count shapes differ"
        );
        for (a, b) in self.n_exx.iter_mut().zip(&other.n_exx) {
            *a += b;
        }
        for (a, b) in self.n_ex.iter_mut().zip(&other.n_ex) {
            *a += b;
        }
    }
}

pub fn count_transitions(stream: &EventStream, taxonomy: &Taxonomy) -> Result<TransitionCounts> {
    let (e_n, x_n) = (taxonomy.n_events(), taxonomy.n_states());
    let mut counts = TransitionCounts::zeros(e_n, x_n);
    for (n, r) in stream.records.iter().enumerate() {
        if r.event >= e_n || r.state_before >= x_n || r.state_after >= x_n {
            return Err(Error::IndexOutOfBounds(format!(
                "record {n} ({}, {}, {}) vs taxonomy {e_n}x{x_n}",
                r.event, r.state_before, r.state_after
            )));
        }
        counts.add(r.event, r.state_before, r.state_after, 1);
    }
    Ok(counts)
}

/// Empirical transition frequencies. Rows never observed become all-zero
/// with a closed gate, so the result satisfies the binary row-sum
/// constraint exactly.
pub fn estimate_transition_kernel(counts: &TransitionCounts) -> TransitionKernel {
    let (e_n, x_n) = (counts.n_events, counts.n_states);
    let mut phi = Tensor3::zeros([e_n, x_n, x_n]);
    let mut gate = vec![false; e_n * x_n];
    for e in 0..e_n {
        for x in 0..x_n {
            let total = counts.occurrences(e, x);
            if total == 0 {
                continue;
            }
            gate[e * x_n + x] = true;
            let row = phi.row_mut(e, x);
            for (y, p) in row.iter_mut().enumerate() {
                *p = counts.transitions(e, x, y) as f64 / total as f64;
            }
            crate::model::normalize_row(row);
        }
    }
    TransitionKernel::new(phi, gate)
}

/// Unit-row-sum kernel for the ungated baseline: observed rows are the
/// empirical frequencies, unobserved rows are uniform over the states.
pub fn sd_transition_kernel(counts: &TransitionCounts) -> TransitionKernel {
    let x_n = counts.n_states;
    let gated = estimate_transition_kernel(counts);
    let mut phi = gated.phi_tensor().clone();
    for e in 0..counts.n_events {
        for x in 0..x_n {
            if counts.occurrences(e, x) == 0 {
                phi.row_mut(e, x).iter_mut().for_each(|p| *p = 1.0 / x_n as f64);
            }
        }
    }
    TransitionKernel::new(phi, vec![true; counts.n_events * x_n])
}

/// `sum N_e(x,x') ln phi_e(x,x')` over observed transitions.
pub fn log_lik_tp(counts: &TransitionCounts, tk: &TransitionKernel, taxonomy: &Taxonomy) -> Result<f64> {
    let (e_n, x_n) = (counts.n_events, counts.n_states);
    if tk.n_events() != e_n || tk.n_states() != x_n {
        return Err(Error::IndexOutOfBounds(format!(
            "kernel {}x{} vs counts {e_n}x{x_n}",
            tk.n_events(),
            tk.n_states()
        )));
    }
    let mut ll = 0.0;
    for e in 0..e_n {
        for x in 0..x_n {
            for y in 0..x_n {
                let n = counts.transitions(e, x, y);
                if n == 0 {
                    continue;
                }
                let p = tk.phi(e, x, y);
                if p <= 0.0 {
                    return Err(Error::ImpossibleTransition {
                        event: taxonomy.event_code(e).to_string(),
                        from: taxonomy.state_label(x).to_string(),
                        to: taxonomy.state_label(y).to_string(),
                    });
                }
                ll += n as f64 * p.ln();
            }
        }
    }
    Ok(ll)
}
