//! Thinning simulation of the gated process, the spread-state machine and
//! the mid-price impact path.
//!
//! Between events the book state is fixed and every excitation decays, so
//! the total gated intensity at the start of a segment bounds it for the
//! rest of the segment. Candidates are drawn against that bound and
//! accepted with probability `current total / bound`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::RecursionState;
use crate::error::{Error, Result};
use crate::model::{validate_model, EventRecord, EventStream, ModelSpec, Taxonomy};
use crate::tensor::Matrix;

/// Mid-price shift `delta_m[e, x]` in ticks when event `e` arrives with the
/// book in state `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactTable {
    delta_m: Matrix,
}

/// Event codes whose arrival moves the mid-price up or down.
const BUY_SIDE_AGGRESSIVE: [&str; 3] = ["MLB", "ALB", "AMB"];
const SELL_SIDE_AGGRESSIVE: [&str; 3] = ["MLS", "ALS", "AMS"];

impl ImpactTable {
    pub fn new(delta_m: Matrix) -> Result<Self> {
        if delta_m.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("impact table has non-finite entries".into()));
        }
        Ok(Self { delta_m })
    }

    pub fn zeros(n_events: usize, n_states: usize) -> Self {
        Self {
            delta_m: Matrix::zeros(n_events, n_states),
        }
    }

    /// Half a tick for aggressive orders in the first state, one tick in
    /// every wider state, signed by side; zero for other event codes.
    pub fn default_for(taxonomy: &Taxonomy) -> Self {
        let mut m = Matrix::zeros(taxonomy.n_events(), taxonomy.n_states());
        for ev in taxonomy.events() {
            let sign = if BUY_SIDE_AGGRESSIVE.contains(&ev.code.as_str()) {
                1.0
            } else if SELL_SIDE_AGGRESSIVE.contains(&ev.code.as_str()) {
                -1.0
            } else {
                continue;
            };
            for x in 0..taxonomy.n_states() {
                m[(ev.index, x)] = sign * if x == 0 { 0.5 } else { 1.0 };
            }
        }
        Self { delta_m: m }
    }

    #[inline]
    pub fn get(&self, e: usize, x: usize) -> f64 {
        self.delta_m[(e, x)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.delta_m
    }

    pub fn n_events(&self) -> usize {
        self.delta_m.rows()
    }

    pub fn n_states(&self) -> usize {
        self.delta_m.cols()
    }
}

/// Piecewise-constant mid-price: `prices[n]` holds from `times[n]` until the
/// next event.
#[derive(Debug, Clone, PartialEq)]
pub struct MidPricePath {
    pub initial_price: f64,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
}

impl MidPricePath {
    pub fn constant(initial_price: f64) -> Self {
        Self {
            initial_price,
            times: Vec::new(),
            prices: Vec::new(),
        }
    }

    /// Last observed price at or before `t`.
    pub fn price_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial_price,
            n => self.prices[n - 1],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepted: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// For truncated runs the horizon is the time of the last event.
    pub stream: EventStream,
    pub path: MidPricePath,
    pub stats: ThinningStats,
    /// The event budget ran out before the horizon.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub initial_state: usize,
    pub seed: u64,
    pub max_events: u64,
    /// Warm-up simulated before the recorded window and then discarded.
    pub burn_in: f64,
    pub initial_price: f64,
    /// Fail with [`Error::DeadState`] when nothing is admissible in the
    /// initial state; otherwise return an empty realization.
    pub strict_dead_state: bool,
}

pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

impl SimConfig {
    pub fn new(horizon: f64, initial_state: usize, seed: u64) -> Self {
        Self {
            horizon,
            initial_state,
            seed,
            max_events: DEFAULT_MAX_EVENTS,
            burn_in: 0.0,
            initial_price: 0.0,
            strict_dead_state: true,
        }
    }
}

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of ensemble member `i`: `splitmix64(master XOR i)`.
pub fn derive_seed(master: u64, i: u64) -> u64 {
    splitmix64(master ^ i)
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    // (0, 1]
    1.0 - rng.gen::<f64>()
}

fn gated_total(model: &ModelSpec, state: usize, raw: &[f64], gated: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (e, (g, &r)) in gated.iter_mut().zip(raw).enumerate() {
        *g = if model.transition.gate(e, state) { r } else { 0.0 };
        total += *g;
    }
    total
}

fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

pub fn simulate(model: &ModelSpec, impact: &ImpactTable, cfg: &SimConfig) -> Result<SimResult> {
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    let (e_n, x_n) = (model.n_events(), model.n_states());
    if impact.n_events() != e_n || impact.n_states() != x_n {
        return Err(Error::InvalidArgument(format!(
            "impact table is {}x{}, model is {e_n}x{x_n}",
            impact.n_events(),
            impact.n_states()
        )));
    }
    if !(cfg.horizon.is_finite() && cfg.horizon > 0.0) || !(cfg.burn_in >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {} / burn-in {} must be positive / non-negative",
            cfg.horizon, cfg.burn_in
        )));
    }
    if cfg.initial_state >= x_n {
        return Err(Error::InvalidArgument(format!("initial state {} out of range", cfg.initial_state)));
    }
    if !model.transition.any_admissible(cfg.initial_state) && cfg.strict_dead_state {
        return Err(Error::DeadState(
            model.taxonomy.state_label(cfg.initial_state).to_string(),
        ));
    }

    let hp = &model.hawkes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rec = RecursionState::new(hp);
    let mut raw = vec![0.0; e_n];
    let mut gated = vec![0.0; e_n];
    let end = cfg.burn_in + cfg.horizon;

    let mut records = Vec::new();
    let mut times = Vec::new();
    let mut prices = Vec::new();
    let mut stats = ThinningStats::default();
    let mut truncated = false;

    let mut t = 0.0;
    let mut state = cfg.initial_state;
    let mut recorded_initial_state = cfg.initial_state;
    let mut price = cfg.initial_price;
    let mut in_burn_in = cfg.burn_in > 0.0;

    rec.raw_intensities_into(hp, &mut raw);
    let mut bound = gated_total(model, state, &raw, &mut gated);

    while bound > 0.0 {
        let cand = t - open_unit(&mut rng).ln() / bound;
        if in_burn_in && cand > cfg.burn_in {
            in_burn_in = false;
            recorded_initial_state = state;
            price = cfg.initial_price;
        }
        if cand > end {
            break;
        }
        if !(cand > t) {
            // time no longer advances in floating point
            truncated = true;
            break;
        }
        rec.advance(cand)?;
        t = cand;
        stats.proposals += 1;
        rec.raw_intensities_into(hp, &mut raw);
        let total = gated_total(model, state, &raw, &mut gated);
        if rng.gen::<f64>() * bound > total {
            stats.rejected += 1;
            bound = total;
            continue;
        }
        stats.accepted += 1;
        let event = pick(&gated, rng.gen::<f64>() * total);
        let row = model.transition.row(event, state);
        let next = pick(row, rng.gen::<f64>() * row.iter().sum::<f64>());
        price += impact.get(event, state);
        if !in_burn_in {
            records.push(EventRecord {
                time: t - cfg.burn_in,
                event,
                state_before: state,
                state_after: next,
            });
            times.push(t - cfg.burn_in);
            prices.push(price);
        }
        rec.register_event(hp, event, next);
        state = next;
        if stats.accepted >= cfg.max_events {
            truncated = true;
            break;
        }
        rec.raw_intensities_into(hp, &mut raw);
        bound = gated_total(model, state, &raw, &mut gated);
    }
    if in_burn_in {
        recorded_initial_state = state;
    }

    let horizon = if truncated {
        records.last().map_or(f64::MIN_POSITIVE, |r| r.time)
    } else {
        cfg.horizon
    };
    Ok(SimResult {
        stream: EventStream::new(records, recorded_initial_state, horizon),
        path: MidPricePath {
            initial_price: cfg.initial_price,
            times,
            prices,
        },
        stats,
        truncated,
    })
}

/// Mid-price path implied by a stream: each record shifts the price by
/// `delta_m[event, state_before]`.
pub fn replay_midprice(stream: &EventStream, impact: &ImpactTable, initial_price: f64) -> MidPricePath {
    let mut price = initial_price;
    let mut times = Vec::with_capacity(stream.len());
    let mut prices = Vec::with_capacity(stream.len());
    for r in &stream.records {
        price += impact.get(r.event, r.state_before);
        times.push(r.time);
        prices.push(price);
    }
    MidPricePath {
        initial_price,
        times,
        prices,
    }
}
