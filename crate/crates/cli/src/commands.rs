use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use exsd_hawkes::diagnostics::{
    acf, cross_correlation, event_residuals, ks_exp1, qq_exp1, stability_report, total_residuals,
    ResidualSeries,
};
use exsd_hawkes::estimate::{
    count_transitions, estimate_transition_kernel, fit_pooled, FitOptions, FitReport,
};
use exsd_hawkes::io::{self, key_label, KsRow, StreamReadOptions};
use exsd_hawkes::scenario::scenario;
use exsd_hawkes::signature::{default_deltas, signature_curve};
use exsd_hawkes::simulate::{derive_seed, simulate, ImpactTable, SimConfig, DEFAULT_MAX_EVENTS};
use exsd_hawkes::{Error, Taxonomy, Variant};

use crate::config::{
    pick, require, Cli, Command, ConfigFile, DiagnoseArgs, FitArgs, SignatureArgs, SimulateArgs,
    SynthArgs, VariantArg,
};
use crate::Outcome;

pub fn run(cli: Cli) -> Result<Outcome> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(a) => fit(a, cfg),
        Command::Simulate(a) => simulate_cmd(a, cfg),
        Command::Diagnose(a) => diagnose(a, cfg),
        Command::Signature(a) => signature(a, cfg),
        Command::Synth(a) => synth(a, cfg),
    }
}

/// Prints the resolved configuration as one JSON line.
fn echo<T: Serialize>(command: &str, resolved: &T) -> Result<()> {
    let mut v = serde_json::to_value(resolved)?;
    if let Some(obj) = v.as_object_mut() {
        obj.insert("command".into(), command.into());
    }
    println!("{}", serde_json::to_string(&v)?);
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// ------------------------------------------------------------------- fit

#[derive(Serialize)]
struct FitConfig {
    streams: Vec<PathBuf>,
    variant: VariantArg,
    out: PathBuf,
    report: PathBuf,
    horizon: Option<f64>,
    max_iterations: usize,
    tolerance: f64,
    restarts: usize,
    seed: u64,
}

#[derive(Serialize)]
struct FitReportFile<'a> {
    variant: Variant,
    n_events: usize,
    log_lik: f64,
    log_lik_tp: f64,
    log_lik_hawkes: f64,
    iterations: usize,
    converged: bool,
    gradient_norm: f64,
    streams: &'a [PathBuf],
}

fn fit(a: FitArgs, cfg: ConfigFile) -> Result<Outcome> {
    let defaults = FitOptions::default();
    let streams = if !a.streams.is_empty() {
        a.streams
    } else if let Some(s) = cfg.streams {
        s
    } else {
        cfg.stream.into_iter().collect()
    };
    if streams.is_empty() {
        bail!("missing --stream");
    }
    let out = require(a.out, cfg.out, "out")?;
    let report = a
        .report
        .or(cfg.report)
        .unwrap_or_else(|| out.with_extension("report.json"));
    let rc = FitConfig {
        streams,
        variant: pick(a.variant, cfg.variant, VariantArg::Exsd),
        out,
        report,
        horizon: a.horizon.or(cfg.horizon),
        max_iterations: pick(a.max_iterations, cfg.max_iterations, defaults.max_iterations),
        tolerance: pick(a.tolerance, cfg.tolerance, defaults.gradient_tolerance),
        restarts: pick(a.restarts, cfg.restarts, defaults.restarts),
        seed: pick(a.seed, cfg.seed, defaults.seed),
    };
    echo("fit", &rc)?;

    let mut taxonomy: Option<Taxonomy> = None;
    let mut parsed = Vec::with_capacity(rc.streams.len());
    for p in &rc.streams {
        let opts = StreamReadOptions {
            taxonomy: taxonomy.clone(),
            horizon: rc.horizon,
        };
        let f = io::read_stream(p, &opts).with_context(|| format!("reading {}", p.display()))?;
        taxonomy.get_or_insert(f.taxonomy);
        parsed.push(f.stream);
    }
    let taxonomy = taxonomy.expect("at least one stream");
    let opts = FitOptions {
        max_iterations: rc.max_iterations,
        gradient_tolerance: rc.tolerance,
        restarts: rc.restarts,
        seed: rc.seed,
        ..defaults
    };
    let rep: FitReport = fit_pooled(&parsed, &taxonomy, rc.variant.into(), &opts)?;
    io::write_model(&rc.out, &rep.model)?;
    let file = FitReportFile {
        variant: rep.model.variant,
        n_events: rep.n_events,
        log_lik: rep.log_lik(),
        log_lik_tp: rep.log_lik_tp,
        log_lik_hawkes: rep.log_lik_hawkes,
        iterations: rep.iterations,
        converged: rep.converged,
        gradient_norm: rep.gradient_norm,
        streams: &rc.streams,
    };
    write(&rc.report, &(serde_json::to_string_pretty(&file)? + "\n"))?;
    if rep.converged {
        Ok(Outcome::Success)
    } else {
        eprintln!(
            "warning: optimizer stopped after {} iterations with gradient norm {:e}",
            rep.iterations, rep.gradient_norm
        );
        Ok(Outcome::Soft)
    }
}

// -------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateConfig {
    model: PathBuf,
    impact: Option<PathBuf>,
    horizon: f64,
    seed: u64,
    seeds: u64,
    jobs: usize,
    max_events: u64,
    burn_in: f64,
    initial_state: String,
    initial_price: f64,
    out_dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestRun {
    pub index: u64,
    pub seed: u64,
    pub stream: String,
    pub midprice: String,
    pub events: usize,
    pub horizon: f64,
    pub truncated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub model: PathBuf,
    pub impact: Option<PathBuf>,
    pub horizon: f64,
    pub master_seed: u64,
    pub max_events: u64,
    pub truncated_runs: usize,
    pub runs: Vec<ManifestRun>,
}

fn simulate_cmd(a: SimulateArgs, cfg: ConfigFile) -> Result<Outcome> {
    let model_path = require(a.model, cfg.model, "model")?;
    let model = io::read_model(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let first_state = model.taxonomy.state_label(0).to_string();
    let rc = SimulateConfig {
        model: model_path,
        impact: a.impact.or(cfg.impact),
        horizon: require(a.horizon, cfg.horizon, "horizon")?,
        seed: pick(a.seed, cfg.seed, 0),
        seeds: pick(a.seeds, cfg.seeds, 1),
        jobs: pick(a.jobs, cfg.jobs, 1).max(1),
        max_events: pick(a.max_events, cfg.max_events, DEFAULT_MAX_EVENTS),
        burn_in: pick(a.burn_in, cfg.burn_in, 0.0),
        initial_state: pick(a.initial_state, cfg.initial_state, first_state),
        initial_price: pick(a.initial_price, cfg.initial_price, 0.0),
        out_dir: require(a.out_dir, cfg.out_dir, "out-dir")?,
    };
    echo("simulate", &rc)?;

    let impact = match &rc.impact {
        Some(p) => io::read_impact(p, Some(&model.taxonomy))
            .with_context(|| format!("reading {}", p.display()))?
            .0,
        None => ImpactTable::default_for(&model.taxonomy),
    };
    let initial_state = model
        .taxonomy
        .state_index(&rc.initial_state)
        .ok_or_else(|| anyhow!("unknown initial state {:?}", rc.initial_state))?;
    let base = SimConfig {
        max_events: rc.max_events,
        burn_in: rc.burn_in,
        initial_price: rc.initial_price,
        ..SimConfig::new(rc.horizon, initial_state, 0)
    };
    // fail before spawning workers on an unusable model
    if !model.transition.any_admissible(initial_state) {
        return Err(Error::DeadState(rc.initial_state.clone()).into());
    }
    fs::create_dir_all(&rc.out_dir).with_context(|| format!("creating {}", rc.out_dir.display()))?;

    let width = (rc.seeds.max(1) - 1).to_string().len().max(4);
    let run_one = |i: u64| -> Result<ManifestRun> {
        let seed = derive_seed(rc.seed, i);
        let res = simulate(&model, &impact, &SimConfig { seed, ..base })?;
        let stream = format!("run_{i:0width$}.stream.csv");
        let midprice = format!("run_{i:0width$}.midprice.csv");
        io::write_stream(rc.out_dir.join(&stream), &res.stream, &model.taxonomy)?;
        io::write_midprice(rc.out_dir.join(&midprice), &res.path, res.stream.horizon)?;
        Ok(ManifestRun {
            index: i,
            seed,
            stream,
            midprice,
            events: res.stream.len(),
            horizon: res.stream.horizon,
            truncated: res.truncated,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(rc.jobs).build()?;
    let runs: Vec<ManifestRun> =
        pool.install(|| (0..rc.seeds).into_par_iter().map(run_one).collect::<Result<_>>())?;

    let truncated_runs = runs.iter().filter(|r| r.truncated).count();
    let manifest = Manifest {
        model: rc.model.clone(),
        impact: rc.impact.clone(),
        horizon: rc.horizon,
        master_seed: rc.seed,
        max_events: rc.max_events,
        truncated_runs,
        runs,
    };
    write(
        &rc.out_dir.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    if truncated_runs > 0 {
        eprintln!("warning: {truncated_runs} of {} runs hit the event budget", rc.seeds);
        Ok(Outcome::Soft)
    } else {
        Ok(Outcome::Success)
    }
}

// -------------------------------------------------------------- diagnose

#[derive(Serialize)]
struct DiagnoseConfig {
    stream: PathBuf,
    model: PathBuf,
    horizon: Option<f64>,
    max_lag: usize,
    out_dir: PathBuf,
}

/// Per-key QQ, ACF and KS exports for one family of residual series.
fn export_family(
    series: &[&ResidualSeries],
    taxonomy: &Taxonomy,
    max_lag: usize,
    dir: &Path,
    suffix: &str,
) -> Result<()> {
    write(&dir.join(format!("residuals_{suffix}.csv")), &io::residuals_csv(series.iter().copied(), taxonomy))?;
    let mut qq = Vec::new();
    let mut acfs = Vec::new();
    let mut ks = Vec::new();
    for s in series {
        let key = key_label(s.key, taxonomy);
        if s.is_empty() {
            continue;
        }
        qq.push((key.clone(), qq_exp1(s)?));
        if s.len() > max_lag {
            acfs.push((key.clone(), acf(s, max_lag)?));
        }
        let (statistic, p_value) = ks_exp1(s);
        ks.push(KsRow { key, n: s.len(), mean: s.mean(), statistic, p_value });
    }
    write(&dir.join(format!("qq_{suffix}.csv")), &io::qq_csv(qq.iter().map(|(k, q)| (k.clone(), q))))?;
    write(&dir.join(format!("acf_{suffix}.csv")), &io::acf_csv(acfs.iter().map(|(k, a)| (k.clone(), a))))?;
    write(&dir.join(format!("ks_{suffix}.csv")), &io::ks_csv(&ks))?;
    Ok(())
}

fn diagnose(a: DiagnoseArgs, cfg: ConfigFile) -> Result<Outcome> {
    let rc = DiagnoseConfig {
        stream: require(a.stream, cfg.stream, "stream")?,
        model: require(a.model, cfg.model, "model")?,
        horizon: a.horizon.or(cfg.horizon),
        max_lag: pick(a.max_lag, cfg.max_lag, 20),
        out_dir: require(a.out_dir, cfg.out_dir, "out-dir")?,
    };
    echo("diagnose", &rc)?;
    let model = io::read_model(&rc.model).with_context(|| format!("reading {}", rc.model.display()))?;
    let opts = StreamReadOptions { taxonomy: Some(model.taxonomy.clone()), horizon: rc.horizon };
    let stream = io::read_stream(&rc.stream, &opts)
        .with_context(|| format!("reading {}", rc.stream.display()))?
        .stream;
    if stream.is_empty() {
        bail!("{}: stream has no events", rc.stream.display());
    }
    let tax = &model.taxonomy;
    let events = event_residuals(&stream, &model)?;
    let totals = total_residuals(&stream, &model)?;
    let dir = &rc.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let ev: Vec<&ResidualSeries> = events.values().collect();
    let tot: Vec<&ResidualSeries> = totals.values().collect();
    export_family(&ev, tax, rc.max_lag, dir, "event")?;
    export_family(&tot, tax, rc.max_lag, dir, "total")?;

    let mut cross: Vec<(String, String, Vec<f64>)> = Vec::new();
    for x in &ev {
        for y in &ev {
            if let Ok(c) = cross_correlation(x, y, rc.max_lag) {
                cross.push((key_label(x.key, tax), key_label(y.key, tax), c));
            }
        }
    }
    write(
        &dir.join("cross_event.csv"),
        &io::cross_csv(cross.iter().map(|(a, b, c)| (a.clone(), b.clone(), c.as_slice()))),
    )?;

    let report = stability_report(&model)?;
    write(&dir.join("stability.json"), &io::stability_json(&report, tax))?;
    write(&dir.join("transitions.csv"), &io::transitions_csv(&model.transition, tax))?;
    let empirical = estimate_transition_kernel(&count_transitions(&stream, tax)?);
    write(&dir.join("transitions_empirical.csv"), &io::transitions_csv(&empirical, tax))?;
    Ok(Outcome::Success)
}

// ------------------------------------------------------------- signature

#[derive(Serialize)]
struct SignatureConfig {
    paths: Vec<PathBuf>,
    manifest: Option<PathBuf>,
    deltas: Vec<f64>,
    out: PathBuf,
}

fn signature(a: SignatureArgs, cfg: ConfigFile) -> Result<Outcome> {
    let rc = SignatureConfig {
        paths: if a.paths.is_empty() { cfg.paths.unwrap_or_default() } else { a.paths },
        manifest: a.manifest.or(cfg.manifest),
        deltas: a.deltas.or(cfg.deltas).unwrap_or_else(default_deltas),
        out: require(a.out, cfg.out, "out")?,
    };
    echo("signature", &rc)?;

    let mut files = rc.paths.clone();
    let mut skipped = 0;
    if let Some(m) = &rc.manifest {
        let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
        let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", m.display()))?;
        let base = m.parent().unwrap_or(Path::new(""));
        for r in manifest.runs {
            if r.truncated {
                skipped += 1;
            } else {
                files.push(base.join(r.midprice));
            }
        }
    }
    if files.is_empty() {
        bail!("no mid-price paths given");
    }
    let mut paths = Vec::with_capacity(files.len());
    let mut horizon: Option<f64> = None;
    for f in &files {
        let (p, h) = io::read_midprice(f).with_context(|| format!("reading {}", f.display()))?;
        match horizon {
            None => horizon = Some(h),
            Some(h0) if h0 != h => bail!("{}: horizon {h} differs from {h0}", f.display()),
            _ => {}
        }
        paths.push(p);
    }
    let horizon = horizon.expect("non-empty");
    let curve = signature_curve(&paths, &rc.deltas, horizon)?;
    write(&rc.out, &io::signature_csv(&curve))?;

    let monotone = curve.rv.windows(2).all(|w| w[1] <= w[0]);
    let summary = serde_json::json!({
        "n_paths": curve.n_paths,
        "skipped_truncated": skipped,
        "horizon": horizon,
        "rv_first": curve.rv.first(),
        "rv_last": curve.rv.last(),
        "monotone_non_increasing": monotone,
    });
    println!("{summary}");
    Ok(Outcome::Success)
}

// ----------------------------------------------------------------- synth

#[derive(Serialize)]
struct SynthConfig {
    scenario: String,
    out_model: PathBuf,
    out_impact: Option<PathBuf>,
}

fn synth(a: SynthArgs, cfg: ConfigFile) -> Result<Outcome> {
    let rc = SynthConfig {
        scenario: require(a.scenario, cfg.scenario, "scenario")?,
        out_model: require(a.out_model, cfg.out_model, "out-model")?,
        out_impact: a.out_impact.or(cfg.out_impact),
    };
    echo("synth", &rc)?;
    let s = scenario(&rc.scenario)?;
    io::write_model(&rc.out_model, &s.model)?;
    if let Some(p) = &rc.out_impact {
        io::write_impact(p, &s.impact, &s.model.taxonomy)?;
    }
    let report = stability_report(&s.model)?;
    let summary: BTreeMap<&str, serde_json::Value> = [
        ("scenario", serde_json::json!(s.name)),
        ("variant", serde_json::json!(s.model.variant)),
        ("spectral_radius", serde_json::json!(report.spectral)),
    ]
    .into_iter()
    .collect();
    println!("{}", serde_json::to_string(&summary)?);
    Ok(Outcome::Success)
}
