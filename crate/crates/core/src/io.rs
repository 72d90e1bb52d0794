//! Text formats: event-stream CSV, model and impact JSON, and the CSV/JSON
//! exports of diagnostics and signature curves.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so every
//! finite value reads back bit-for-bit. Output uses LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{Acf, QQData, ResidualKey, ResidualSeries, StabilityReport};
use crate::error::{Error, Result};
use crate::model::{
    validate_model, validate_stream, EventRecord, EventStream, HawkesParams, ModelSpec, Taxonomy,
    TransitionKernel, Variant,
};
use crate::signature::SignatureCurve;
use crate::simulate::{ImpactTable, MidPricePath};
use crate::tensor::{Matrix, Tensor3};

pub const FORMAT_VERSION: &str = "v1";
pub const STREAM_HEADER: &str = "time_s,event,state_before,state_after";
const MODEL_FORMAT: &str = "exsd-hawkes-model";
const IMPACT_FORMAT: &str = "exsd-hawkes-impact";

/// Shortest round-trip decimal, never in exponent notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- streams

#[derive(Debug, Clone, Default)]
pub struct StreamReadOptions {
    /// Resolve codes against this taxonomy instead of the file's own
    /// `# events=` / `# states=` comments (or the default taxonomy).
    pub taxonomy: Option<Taxonomy>,
    /// Overrides the `# horizon=` comment.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub stream: EventStream,
    pub taxonomy: Taxonomy,
}

fn split_labels(v: &str) -> Vec<&str> {
    v.split(',').map(str::trim).collect()
}

/// Parses a stream CSV. `origin` names the source in error messages.
pub fn parse_stream(text: &str, origin: &str, opts: &StreamReadOptions) -> Result<StreamFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut horizon = None;
    let mut initial_label: Option<(usize, String)> = None;
    let mut file_events = None;
    let mut file_states = None;
    let mut header_seen = false;
    let mut rows: Vec<(usize, &str)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if header_seen && !rows.is_empty() {
                continue;
            }
            if let Some((k, v)) = comment.trim().split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "horizon" => {
                        horizon = Some(
                            v.parse::<f64>()
                                .map_err(|_| err(lineno, format!("bad horizon {v:?}")))?,
                        )
                    }
                    "initial_state" => initial_label = Some((lineno, v.to_string())),
                    "events" => file_events = Some(split_labels(v)),
                    "states" => file_states = Some(split_labels(v)),
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if line.trim() != STREAM_HEADER {
                return Err(err(lineno, format!("expected header {STREAM_HEADER:?}, found {line:?}")));
            }
            header_seen = true;
            continue;
        }
        rows.push((lineno, line));
    }
    if !header_seen {
        return Err(err(1, format!("missing header {STREAM_HEADER:?}")));
    }

    let taxonomy = match (&opts.taxonomy, file_events, file_states) {
        (Some(t), _, _) => t.clone(),
        (None, Some(ev), Some(st)) => Taxonomy::new(ev, st).map_err(|m| err(1, m))?,
        (None, None, None) => Taxonomy::default_lob(),
        _ => return Err(err(1, "`# events=` and `# states=` must appear together".into())),
    };
    let horizon = opts
        .horizon
        .or(horizon)
        .ok_or_else(|| err(1, "no horizon: add a `# horizon=` line or pass it explicitly".into()))?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(err(1, format!("horizon {horizon} must be positive and finite")));
    }
    let state_of = |lineno: usize, label: &str| {
        taxonomy
            .state_index(label)
            .ok_or_else(|| err(lineno, format!("unknown state {label:?}")))
    };

    let mut records = Vec::with_capacity(rows.len());
    let mut prev_time = 0.0;
    let mut prev_state: Option<usize> = match &initial_label {
        Some((l, s)) => Some(state_of(*l, s)?),
        None => None,
    };
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let time: f64 = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad time {:?}", fields[0])))?;
        if !time.is_finite() {
            return Err(err(lineno, format!("bad time {:?}", fields[0])));
        }
        if time <= prev_time {
            return Err(err(lineno, format!("time {time} does not increase on {prev_time}")));
        }
        if time > horizon {
            return Err(err(lineno, format!("time {time} beyond horizon {horizon}")));
        }
        let event = taxonomy
            .event_index(fields[1])
            .ok_or_else(|| err(lineno, format!("unknown event code {:?}", fields[1])))?;
        let state_before = state_of(lineno, fields[2])?;
        let state_after = state_of(lineno, fields[3])?;
        if let Some(p) = prev_state {
            if p != state_before {
                return Err(err(
                    lineno,
                    format!(
                        "state_before {} does not match preceding state {}",
                        fields[2],
                        taxonomy.state_label(p)
                    ),
                ));
            }
        }
        records.push(EventRecord { time, event, state_before, state_after });
        prev_time = time;
        prev_state = Some(state_after);
    }

    let initial_state = match initial_label {
        Some((l, s)) => state_of(l, &s)?,
        None => records.first().map_or(0, |r| r.state_before),
    };
    let stream = EventStream::new(records, initial_state, horizon);
    let v = validate_stream(&stream, &taxonomy);
    if !v.is_empty() {
        return Err(Error::InvalidStream(v));
    }
    Ok(StreamFile { stream, taxonomy })
}

pub fn read_stream(path: impl AsRef<Path>, opts: &StreamReadOptions) -> Result<StreamFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_stream(&text, &path.display().to_string(), opts)
}

pub fn format_stream(stream: &EventStream, taxonomy: &Taxonomy) -> String {
    let mut s = String::with_capacity(32 * (stream.len() + 4));
    let codes: Vec<&str> = taxonomy.events().iter().map(|e| e.code.as_str()).collect();
    let labels: Vec<&str> = taxonomy.states().iter().map(|x| x.label.as_str()).collect();
    let _ = writeln!(s, "# horizon={}", fmt_f64(stream.horizon));
    let _ = writeln!(s, "# initial_state={}", labels[stream.initial_state]);
    let _ = writeln!(s, "# events={}", codes.join(","));
    let _ = writeln!(s, "# states={}", labels.join(","));
    s.push_str(STREAM_HEADER);
    s.push('\n');
    for r in &stream.records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(r.time),
            codes[r.event],
            labels[r.state_before],
            labels[r.state_after]
        );
    }
    s
}

pub fn write_stream(path: impl AsRef<Path>, stream: &EventStream, taxonomy: &Taxonomy) -> Result<()> {
    write_text(path.as_ref(), &format_stream(stream, taxonomy))
}

// ---------------------------------------------------------------- models

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: String,
    taxonomy: Taxonomy,
    variant: Variant,
    phi: Vec<Vec<Vec<f64>>>,
    gate: Vec<Vec<u8>>,
    nu: Vec<f64>,
    alpha: Vec<Vec<Vec<f64>>>,
    beta: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImpactFile {
    format: String,
    version: String,
    taxonomy: Taxonomy,
    delta_m: Vec<Vec<f64>>,
}

fn check_header(v: &Value, format: &str) -> Result<()> {
    match v.get("format").and_then(Value::as_str) {
        Some(f) if f == format => {}
        other => return Err(Error::Format(format!("expected format {format:?}, found {other:?}"))),
    }
    match v.get("version").and_then(Value::as_str) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(other) => Err(Error::UnsupportedVersion(other.to_string())),
        None => Err(Error::Format("missing version field".into())),
    }
}

fn tensor(nested: &[Vec<Vec<f64>>], shape: [usize; 3], name: &str) -> Result<Tensor3> {
    Tensor3::from_nested(nested)
        .filter(|t| t.shape() == shape)
        .ok_or_else(|| Error::Format(format!("{name} must have shape {shape:?}")))
}

pub fn model_to_json(model: &ModelSpec) -> String {
    let (e_n, x_n) = (model.n_events(), model.n_states());
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION.into(),
        taxonomy: model.taxonomy.clone(),
        variant: model.variant,
        phi: model.transition.phi_tensor().to_nested(),
        gate: (0..e_n)
            .map(|e| (0..x_n).map(|x| model.transition.gate(e, x) as u8).collect())
            .collect(),
        nu: model.hawkes.nu.clone(),
        alpha: model.hawkes.alpha.to_nested(),
        beta: model.hawkes.beta.to_nested(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<ModelSpec> {
    let v: Value = serde_json::from_str(text)?;
    check_header(&v, MODEL_FORMAT)?;
    let f: ModelFile = serde_json::from_value(v)?;
    let (e_n, x_n) = (f.taxonomy.n_events(), f.taxonomy.n_states());
    let phi = tensor(&f.phi, [e_n, x_n, x_n], "phi")?;
    let transition = TransitionKernel::from_phi(phi).map_err(Error::Format)?;
    if f.gate.len() != e_n || f.gate.iter().any(|r| r.len() != x_n) {
        return Err(Error::Format(format!("gate must have shape [{e_n}, {x_n}]")));
    }
    for (e, row) in f.gate.iter().enumerate() {
        for (x, &g) in row.iter().enumerate() {
            if g > 1 || (g == 1) != transition.gate(e, x) {
                return Err(Error::Format(format!("gate[{e}][{x}] = {g} disagrees with the phi row sum")));
            }
        }
    }
    if f.nu.len() != e_n {
        return Err(Error::Format(format!("nu must have length {e_n}")));
    }
    let model = ModelSpec {
        variant: f.variant,
        transition,
        hawkes: HawkesParams {
            nu: f.nu,
            alpha: tensor(&f.alpha, [e_n, x_n, e_n], "alpha")?,
            beta: tensor(&f.beta, [e_n, x_n, e_n], "beta")?,
        },
        taxonomy: f.taxonomy,
    };
    let violations = validate_model(&model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    Ok(model)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn write_model(path: impl AsRef<Path>, model: &ModelSpec) -> Result<()> {
    write_text(path.as_ref(), &model_to_json(model))
}

pub fn impact_to_json(impact: &ImpactTable, taxonomy: &Taxonomy) -> String {
    let file = ImpactFile {
        format: IMPACT_FORMAT.into(),
        version: FORMAT_VERSION.into(),
        taxonomy: taxonomy.clone(),
        delta_m: impact.matrix().to_rows(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("impact serializes");
    s.push('\n');
    s
}

/// Parses an impact table; when `expected` is given its taxonomy must match.
pub fn impact_from_json(text: &str, expected: Option<&Taxonomy>) -> Result<(ImpactTable, Taxonomy)> {
    let v: Value = serde_json::from_str(text)?;
    check_header(&v, IMPACT_FORMAT)?;
    let f: ImpactFile = serde_json::from_value(v)?;
    if let Some(t) = expected {
        if *t != f.taxonomy {
            return Err(Error::Format("impact table taxonomy differs from the model's".into()));
        }
    }
    let (e_n, x_n) = (f.taxonomy.n_events(), f.taxonomy.n_states());
    let m = Matrix::from_rows(&f.delta_m)
        .filter(|m| m.rows() == e_n && m.cols() == x_n)
        .ok_or_else(|| Error::Format(format!("delta_m must have shape [{e_n}, {x_n}]")))?;
    Ok((ImpactTable::new(m)?, f.taxonomy))
}

pub fn read_impact(path: impl AsRef<Path>, expected: Option<&Taxonomy>) -> Result<(ImpactTable, Taxonomy)> {
    impact_from_json(&fs::read_to_string(path)?, expected)
}

pub fn write_impact(path: impl AsRef<Path>, impact: &ImpactTable, taxonomy: &Taxonomy) -> Result<()> {
    write_text(path.as_ref(), &impact_to_json(impact, taxonomy))
}

// ---------------------------------------------------------------- mid-price

pub fn format_midprice(path: &MidPricePath, horizon: f64) -> String {
    let mut s = String::with_capacity(24 * (path.len() + 3));
    let _ = writeln!(s, "# horizon={}", fmt_f64(horizon));
    let _ = writeln!(s, "# initial_price={}", fmt_f64(path.initial_price));
    s.push_str("time_s,price\n");
    for (t, p) in path.times.iter().zip(&path.prices) {
        let _ = writeln!(s, "{},{}", fmt_f64(*t), fmt_f64(*p));
    }
    s
}

/// Parses a mid-price CSV, returning the path and its horizon.
pub fn parse_midprice(text: &str, origin: &str) -> Result<(MidPricePath, f64)> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut horizon = None;
    let mut initial = None;
    let mut header = false;
    let mut path = MidPricePath::constant(0.0);
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                let parsed = v.trim().parse::<f64>().map_err(|_| err(lineno, format!("bad value {v:?}")));
                match k.trim() {
                    "horizon" => horizon = Some(parsed?),
                    "initial_price" => initial = Some(parsed?),
                    _ => {}
                }
            }
            continue;
        }
        if !header {
            if line != "time_s,price" {
                return Err(err(lineno, format!("expected header \"time_s,price\", found {line:?}")));
            }
            header = true;
            continue;
        }
        let (t, p) = line
            .split_once(',')
            .ok_or_else(|| err(lineno, "expected 2 fields".into()))?;
        let t: f64 = t.trim().parse().map_err(|_| err(lineno, format!("bad time {t:?}")))?;
        let p: f64 = p.trim().parse().map_err(|_| err(lineno, format!("bad price {p:?}")))?;
        if path.times.last().is_some_and(|&last| t <= last) {
            return Err(err(lineno, format!("time {t} does not increase")));
        }
        path.times.push(t);
        path.prices.push(p);
    }
    if !header {
        return Err(err(1, "missing header \"time_s,price\"".into()));
    }
    path.initial_price = initial.ok_or_else(|| err(1, "missing `# initial_price=`".into()))?;
    let horizon = horizon.ok_or_else(|| err(1, "missing `# horizon=`".into()))?;
    Ok((path, horizon))
}

pub fn read_midprice(path: impl AsRef<Path>) -> Result<(MidPricePath, f64)> {
    let path = path.as_ref();
    parse_midprice(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn write_midprice(path: impl AsRef<Path>, mid: &MidPricePath, horizon: f64) -> Result<()> {
    write_text(path.as_ref(), &format_midprice(mid, horizon))
}

// ---------------------------------------------------------------- exports

/// `MLB` for event-wise keys, `MLB:2+` for pairs. With a single state the
/// pair key is the bare event code.
pub fn key_label(key: ResidualKey, taxonomy: &Taxonomy) -> String {
    match key {
        ResidualKey::Event(e) => taxonomy.event_code(e).to_string(),
        ResidualKey::Pair(e, _) if taxonomy.n_states() == 1 => taxonomy.event_code(e).to_string(),
        ResidualKey::Pair(e, x) => format!("{}:{}", taxonomy.event_code(e), taxonomy.state_label(x)),
    }
}

pub fn residuals_csv<'a>(series: impl IntoIterator<Item = &'a ResidualSeries>, taxonomy: &Taxonomy) -> String {
    let mut s = String::from("key,index,value\n");
    for r in series {
        let k = key_label(r.key, taxonomy);
        for (i, v) in r.values.iter().enumerate() {
            let _ = writeln!(s, "{k},{i},{}", fmt_f64(*v));
        }
    }
    s
}

pub fn qq_csv<'a>(rows: impl IntoIterator<Item = (String, &'a QQData)>) -> String {
    let mut s = String::from("key,index,empirical,theoretical\n");
    for (k, q) in rows {
        for (i, (e, t)) in q.empirical.iter().zip(&q.theoretical).enumerate() {
            let _ = writeln!(s, "{k},{i},{},{}", fmt_f64(*e), fmt_f64(*t));
        }
    }
    s
}

pub fn acf_csv<'a>(rows: impl IntoIterator<Item = (String, &'a Acf)>) -> String {
    let mut s = String::from("key,lag,acf,band\n");
    for (k, a) in rows {
        for (lag, v) in a.values.iter().enumerate() {
            let _ = writeln!(s, "{k},{lag},{},{}", fmt_f64(*v), fmt_f64(a.band));
        }
    }
    s
}

/// One KS row: key, sample size, sample mean, statistic, p-value.
pub struct KsRow {
    pub key: String,
    pub n: usize,
    pub mean: f64,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_csv(rows: &[KsRow]) -> String {
    let mut s = String::from("key,n,mean,statistic,p_value\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.key,
            r.n,
            fmt_f64(r.mean),
            fmt_f64(r.statistic),
            fmt_f64(r.p_value)
        );
    }
    s
}

pub fn cross_csv<'a>(rows: impl IntoIterator<Item = (String, String, &'a [f64])>) -> String {
    let mut s = String::from("key_a,key_b,lag,value\n");
    for (a, b, c) in rows {
        for (lag, v) in c.iter().enumerate() {
            let _ = writeln!(s, "{a},{b},{lag},{}", fmt_f64(*v));
        }
    }
    s
}

pub fn transitions_csv(kernel: &TransitionKernel, taxonomy: &Taxonomy) -> String {
    let mut s = String::from("event,state,next_state,phi,gate\n");
    for ev in taxonomy.events() {
        for x in taxonomy.states() {
            for y in taxonomy.states() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    ev.code,
                    x.label,
                    y.label,
                    fmt_f64(kernel.phi(ev.index, x.index, y.index)),
                    kernel.gate(ev.index, x.index) as u8
                );
            }
        }
    }
    s
}

pub fn signature_csv(curve: &SignatureCurve) -> String {
    let mut s = String::from("delta,rv_mean,rv_stderr,n_paths\n");
    for ((d, rv), se) in curve.deltas.iter().zip(&curve.rv).zip(&curve.stderr) {
        let _ = writeln!(s, "{},{},{},{}", fmt_f64(*d), fmt_f64(*rv), fmt_f64(*se), curve.n_paths);
    }
    s
}

pub fn stability_json(report: &StabilityReport, taxonomy: &Taxonomy) -> String {
    let v = serde_json::json!({
        "events": taxonomy.events().iter().map(|e| e.code.as_str()).collect::<Vec<_>>(),
        "states": taxonomy.states().iter().map(|x| x.label.as_str()).collect::<Vec<_>>(),
        "branching": report.branching.to_rows(),
        "spectral_radius": report.spectral,
        "regime": report.regime,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}
