//! Domain types: event/state alphabets, event streams, the gated transition
//! kernel and the exponential Hawkes parameters, plus their validation.
//!
//! Parameter tensors are indexed `(source event, post-event state of the
//! source, target event)`; the transition tensor is indexed
//! `(event, state before, state after)`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Tensor3};

/// Absolute tolerance for the binary row-sum check on transition rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventType {
    pub code: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpreadState {
    pub label: String,
    pub index: usize,
}

/// Ordered event and state alphabets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomyRepr", into = "TaxonomyRepr")]
pub struct Taxonomy {
    events: Vec<EventType>,
    states: Vec<SpreadState>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyRepr {
    events: Vec<String>,
    states: Vec<String>,
}

impl TryFrom<TaxonomyRepr> for Taxonomy {
    type Error = String;

    fn try_from(r: TaxonomyRepr) -> Result<Self, String> {
        Taxonomy::new(r.events, r.states)
    }
}

impl From<Taxonomy> for TaxonomyRepr {
    fn from(t: Taxonomy) -> Self {
        TaxonomyRepr {
            events: t.events.into_iter().map(|e| e.code).collect(),
            states: t.states.into_iter().map(|s| s.label).collect(),
        }
    }
}

/// Event codes of the default 14-type taxonomy, buy side first in each pair.
///
/// `MLB/MLS` marketable limit orders, `ALB/ALS` price-improving limit orders
/// inside the spread, `AMB/AMS` market orders that deplete the best queue.
/// The remaining codes (limit at best, cancellation at best, non-depleting
/// market order, deep-book limit order) are placeholders for the rest of the
/// order taxonomy.
pub const DEFAULT_EVENT_CODES: [&str; 14] = [
    "MLB", "MLS", "ALB", "ALS", "AMB", "AMS", "LB", "LS", "CB", "CS", "MB", "MS", "DB", "DS",
];

/// Equilibrium (one-tick spread) and disequilibrium (two ticks or wider).
pub const DEFAULT_STATE_LABELS: [&str; 2] = ["1", "2+"];

impl Taxonomy {
    pub fn new<S: Into<String>, T: Into<String>>(
        events: impl IntoIterator<Item = S>,
        states: impl IntoIterator<Item = T>,
    ) -> Result<Self, String> {
        let events: Vec<EventType> = events
            .into_iter()
            .enumerate()
            .map(|(index, c)| EventType {
                code: c.into(),
                index,
            })
            .collect();
        let states: Vec<SpreadState> = states
            .into_iter()
            .enumerate()
            .map(|(index, l)| SpreadState {
                label: l.into(),
                index,
            })
            .collect();
        if events.is_empty() || states.is_empty() {
            return Err("taxonomy needs at least one event type and one state".into());
        }
        check_labels(events.iter().map(|e| e.code.as_str()), "event code")?;
        check_labels(states.iter().map(|s| s.label.as_str()), "state label")?;
        Ok(Self { events, states })
    }

    /// 14 event codes and the two spread states.
    pub fn default_lob() -> Self {
        Self::new(DEFAULT_EVENT_CODES, DEFAULT_STATE_LABELS).expect("static taxonomy is valid")
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn events(&self) -> &[EventType] {
        &self.events
    }

    pub fn states(&self) -> &[SpreadState] {
        &self.states
    }

    pub fn event_code(&self, index: usize) -> &str {
        &self.events[index].code
    }

    pub fn state_label(&self, index: usize) -> &str {
        &self.states[index].label
    }

    pub fn event_index(&self, code: &str) -> Option<usize> {
        self.events.iter().position(|e| e.code == code)
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label == label)
    }
}

fn check_labels<'a>(labels: impl Iterator<Item = &'a str>, what: &str) -> Result<(), String> {
    let mut seen = HashSet::new();
    for l in labels {
        if l.is_empty() || l.contains([',', '\n', '\r', '"']) || l.trim() != l {
            return Err(format!("invalid {what} {l:?}"));
        }
        if !seen.insert(l) {
            return Err(format!("duplicate {what} {l:?}"));
        }
    }
    Ok(())
}

/// One marked point of the stream. Indices refer to a [`Taxonomy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub event: usize,
    pub state_before: usize,
    pub state_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub records: Vec<EventRecord>,
    pub initial_state: usize,
    /// Observation length in seconds; the stream covers `(0, horizon]`.
    pub horizon: f64,
}

impl EventStream {
    pub fn new(records: Vec<EventRecord>, initial_state: usize, horizon: f64) -> Self {
        Self {
            records,
            initial_state,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// State in force after the last record (the initial state if empty).
    pub fn final_state(&self) -> usize {
        self.records
            .last()
            .map_or(self.initial_state, |r| r.state_after)
    }

    /// States obtained by folding `state_after` from the initial state; entry
    /// `n` is the state in force just before record `n`.
    pub fn state_chain(&self) -> Vec<usize> {
        let mut s = self.initial_state;
        self.records
            .iter()
            .map(|r| {
                let before = s;
                s = r.state_after;
                before
            })
            .collect()
    }
}

/// Gated transition probabilities `phi[e, x, x']` with binary row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    phi: Tensor3,
    gate: Vec<bool>,
}

impl TransitionKernel {
    /// Pairs a transition tensor with explicit gates. No checks; see
    /// [`validate_model`].
    pub fn new(phi: Tensor3, gate: Vec<bool>) -> Self {
        Self { phi, gate }
    }

    /// Derives the gates from the row sums, which must each be within
    /// [`ROW_SUM_TOLERANCE`] of 0 or 1; rows are then rescaled so that they
    /// sum to their gate exactly.
    pub fn from_phi(mut phi: Tensor3) -> Result<Self, String> {
        let [e_n, x_n, x2] = phi.shape();
        if x_n != x2 {
            return Err(format!("transition tensor shape {:?} is not E x X x X", phi.shape()));
        }
        let mut gate = Vec::with_capacity(e_n * x_n);
        for e in 0..e_n {
            for x in 0..x_n {
                let row = phi.row_mut(e, x);
                let sum: f64 = row.iter().sum();
                if sum.abs() <= ROW_SUM_TOLERANCE {
                    row.iter_mut().for_each(|p| *p = 0.0);
                    gate.push(false);
                } else if (sum - 1.0).abs() <= ROW_SUM_TOLERANCE {
                    normalize_row(row);
                    gate.push(true);
                } else {
                    return Err(format!(
                        "row sum of phi[{e},{x},:] is {sum}, expected 0 or 1"
                    ));
                }
            }
        }
        Ok(Self { phi, gate })
    }

    /// Every row is uniform over the `n_states` targets and every gate open.
    pub fn uniform(n_events: usize, n_states: usize) -> Self {
        Self {
            phi: Tensor3::filled([n_events, n_states, n_states], 1.0 / n_states as f64),
            gate: vec![true; n_events * n_states],
        }
    }

    pub fn n_events(&self) -> usize {
        self.phi.shape()[0]
    }

    pub fn n_states(&self) -> usize {
        self.phi.shape()[1]
    }

    #[inline]
    pub fn phi(&self, e: usize, x: usize, x_next: usize) -> f64 {
        self.phi[(e, x, x_next)]
    }

    pub fn row(&self, e: usize, x: usize) -> &[f64] {
        self.phi.row(e, x)
    }

    #[inline]
    pub fn gate(&self, e: usize, x: usize) -> bool {
        self.gate[e * self.n_states() + x]
    }

    pub fn gate_value(&self, e: usize, x: usize) -> f64 {
        if self.gate(e, x) {
            1.0
        } else {
            0.0
        }
    }

    pub fn phi_tensor(&self) -> &Tensor3 {
        &self.phi
    }

    pub fn gates(&self) -> &[bool] {
        &self.gate
    }

    /// Gates as an E x X 0/1 matrix.
    pub fn gate_matrix(&self) -> Matrix {
        let (e_n, x_n) = (self.n_events(), self.n_states());
        let mut m = Matrix::zeros(e_n, x_n);
        for e in 0..e_n {
            for x in 0..x_n {
                m[(e, x)] = self.gate_value(e, x);
            }
        }
        m
    }

    /// True when some event is admissible in state `x`.
    pub fn any_admissible(&self, x: usize) -> bool {
        (0..self.n_events()).any(|e| self.gate(e, x))
    }
}

/// Rescales a row to sum to exactly one, pushing the rounding residue onto
/// the largest entries (one ulp at a time if the residue is absorbed).
pub(crate) fn normalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    let mut order: Vec<usize> = (0..row.len()).filter(|&i| row[i] > 0.0).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    for &i in &order {
        for _ in 0..64 {
            let resid = 1.0 - row.iter().sum::<f64>();
            if resid == 0.0 {
                return;
            }
            let bumped = row[i] + resid;
            row[i] = if bumped != row[i] {
                bumped
            } else if resid > 0.0 {
                row[i].next_up()
            } else {
                row[i].next_down()
            };
        }
    }
}

/// Baselines and exponential kernel parameters.
///
/// `alpha[(src, mark, target)]` is the jump in the intensity of `target`
/// caused by a `src` event that left the book in state `mark`; `beta` is the
/// matching decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    pub nu: Vec<f64>,
    pub alpha: Tensor3,
    pub beta: Tensor3,
}

impl HawkesParams {
    pub fn poisson(nu: Vec<f64>, n_states: usize) -> Self {
        let e = nu.len();
        Self {
            nu,
            alpha: Tensor3::zeros([e, n_states, e]),
            beta: Tensor3::filled([e, n_states, e], 1.0),
        }
    }

    pub fn n_events(&self) -> usize {
        self.nu.len()
    }

    pub fn n_states(&self) -> usize {
        self.alpha.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Poisson,
    ConstHawkes,
    SdHawkes,
    ExsdHawkes,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Poisson => "POISSON",
            Variant::ConstHawkes => "CONST_HAWKES",
            Variant::SdHawkes => "SD_HAWKES",
            Variant::ExsdHawkes => "EXSD_HAWKES",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub taxonomy: Taxonomy,
    pub variant: Variant,
    pub transition: TransitionKernel,
    pub hawkes: HawkesParams,
}

impl ModelSpec {
    pub fn n_events(&self) -> usize {
        self.taxonomy.n_events()
    }

    pub fn n_states(&self) -> usize {
        self.taxonomy.n_states()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonIncreasingTime { index: usize },
    TimeOutOfRange { index: usize, time: f64 },
    StateChain { index: usize },
    InitialState,
    BadHorizon(f64),
    IndexOutOfBounds { index: usize, field: &'static str },
    Shape(String),
    PhiOutOfRange { event: usize, state: usize, target: usize },
    RowSum { event: usize, state: usize, sum: f64 },
    GateMismatch { event: usize, state: usize },
    Nu { event: usize },
    Alpha { src: usize, mark: usize, target: usize },
    Beta { src: usize, mark: usize, target: usize },
    Variant(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonIncreasingTime { index } => {
                write!(f, "non-increasing time at record {index}")
            }
            Violation::TimeOutOfRange { index, time } => {
                write!(f, "record {index}: time {time} outside (0, horizon]")
            }
            Violation::StateChain { index } => write!(
                f,
                "state-chain break at record {index}: state_before differs from previous state_after"
            ),
            Violation::InitialState => {
                write!(f, "first record's state_before differs from the initial state")
            }
            Violation::BadHorizon(h) => write!(f, "horizon {h} is not a positive finite number"),
            Violation::IndexOutOfBounds { index, field } => {
                write!(f, "record {index}: {field} index out of taxonomy bounds")
            }
            Violation::Shape(s) => write!(f, "shape mismatch: {s}"),
            Violation::PhiOutOfRange {
                event,
                state,
                target,
            } => write!(f, "phi[{event},{state},{target}] outside [0, 1]"),
            Violation::RowSum { event, state, sum } => {
                write!(f, "row sum of phi[{event},{state},:] is {sum}, expected 0 or 1")
            }
            Violation::GateMismatch { event, state } => {
                write!(f, "gate[{event},{state}] disagrees with the phi row sum")
            }
            Violation::Nu { event } => write!(f, "nu[{event}] must be positive and finite"),
            Violation::Alpha { src, mark, target } => {
                write!(f, "alpha[{src},{mark},{target}] must be non-negative and finite")
            }
            Violation::Beta { src, mark, target } => {
                write!(f, "beta[{src},{mark},{target}] must be positive and finite")
            }
            Violation::Variant(s) => write!(f, "variant violation: {s}"),
        }
    }
}

/// Checks the stream invariants against a taxonomy. Violations are returned
/// as data; an empty list means the stream is valid.
pub fn validate_stream(stream: &EventStream, taxonomy: &Taxonomy) -> Vec<Violation> {
    let mut out = Vec::new();
    let (e_n, x_n) = (taxonomy.n_events(), taxonomy.n_states());
    if !(stream.horizon.is_finite() && stream.horizon > 0.0) {
        out.push(Violation::BadHorizon(stream.horizon));
    }
    if stream.initial_state >= x_n {
        out.push(Violation::IndexOutOfBounds {
            index: 0,
            field: "initial_state",
        });
    }
    let mut prev: Option<&EventRecord> = None;
    for (n, r) in stream.records.iter().enumerate() {
        if r.event >= e_n {
            out.push(Violation::IndexOutOfBounds {
                index: n,
                field: "event",
            });
        }
        if r.state_before >= x_n {
            out.push(Violation::IndexOutOfBounds {
                index: n,
                field: "state_before",
            });
        }
        if r.state_after >= x_n {
            out.push(Violation::IndexOutOfBounds {
                index: n,
                field: "state_after",
            });
        }
        if !(r.time > 0.0 && r.time <= stream.horizon) {
            out.push(Violation::TimeOutOfRange {
                index: n,
                time: r.time,
            });
        }
        match prev {
            Some(p) => {
                if r.time <= p.time || r.time.is_nan() {
                    out.push(Violation::NonIncreasingTime { index: n });
                }
                if r.state_before != p.state_after {
                    out.push(Violation::StateChain { index: n });
                }
            }
            None => {
                if r.state_before != stream.initial_state {
                    out.push(Violation::InitialState);
                }
            }
        }
        prev = Some(r);
    }
    out
}

/// Checks the transition kernel, Hawkes parameters and variant constraints.
pub fn validate_model(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (e_n, x_n) = (spec.n_events(), spec.n_states());
    let tk = &spec.transition;
    let hp = &spec.hawkes;

    if tk.phi_tensor().shape() != [e_n, x_n, x_n] || tk.gates().len() != e_n * x_n {
        out.push(Violation::Shape(format!(
            "transition kernel {:?} vs taxonomy {e_n}x{x_n}",
            tk.phi_tensor().shape()
        )));
    }
    if hp.nu.len() != e_n
        || hp.alpha.shape() != [e_n, x_n, e_n]
        || hp.beta.shape() != [e_n, x_n, e_n]
    {
        out.push(Violation::Shape(format!(
            "hawkes nu {} alpha {:?} beta {:?} vs taxonomy {e_n}x{x_n}",
            hp.nu.len(),
            hp.alpha.shape(),
            hp.beta.shape()
        )));
    }
    if !out.is_empty() {
        return out;
    }

    for e in 0..e_n {
        for x in 0..x_n {
            let row = tk.row(e, x);
            for (t, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::PhiOutOfRange {
                        event: e,
                        state: x,
                        target: t,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            let near_zero = sum.abs() <= ROW_SUM_TOLERANCE;
            let near_one = (sum - 1.0).abs() <= ROW_SUM_TOLERANCE;
            if !near_zero && !near_one {
                out.push(Violation::RowSum {
                    event: e,
                    state: x,
                    sum,
                });
            } else if near_one != tk.gate(e, x) {
                out.push(Violation::GateMismatch { event: e, state: x });
            }
        }
    }

    for (e, &nu) in hp.nu.iter().enumerate() {
        if !(nu.is_finite() && nu > 0.0) {
            out.push(Violation::Nu { event: e });
        }
    }
    for src in 0..e_n {
        for mark in 0..x_n {
            for target in 0..e_n {
                let a = hp.alpha[(src, mark, target)];
                let b = hp.beta[(src, mark, target)];
                if !(a.is_finite() && a >= 0.0) {
                    out.push(Violation::Alpha { src, mark, target });
                }
                if !(b.is_finite() && b > 0.0) {
                    out.push(Violation::Beta { src, mark, target });
                }
            }
        }
    }

    match spec.variant {
        Variant::Poisson => {
            if hp.alpha.as_slice().iter().any(|&a| a != 0.0) {
                out.push(Violation::Variant(
                    "POISSON requires alpha = 0 everywhere".into(),
                ));
            }
        }
        Variant::ConstHawkes => {
            for src in 0..e_n {
                for mark in 1..x_n {
                    if hp.alpha.row(src, mark) != hp.alpha.row(src, 0)
                        || hp.beta.row(src, mark) != hp.beta.row(src, 0)
                    {
                        out.push(Violation::Variant(format!(
                            "CONST_HAWKES kernels for source {src} vary with the state mark"
                        )));
                    }
                }
            }
        }
        Variant::SdHawkes => {
            for e in 0..e_n {
                for x in 0..x_n {
                    if !tk.gate(e, x) {
                        out.push(Violation::Variant(format!(
                            "SD_HAWKES row sum must be 1, phi[{e},{x},:] is a zero row"
                        )));
                    }
                }
            }
        }
        Variant::ExsdHawkes => {}
    }
    out
}
