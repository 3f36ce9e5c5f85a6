use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gsmooth_core::detect::{default_lpf_order, lpf_eta_hat_detect, tv_detect};
use gsmooth_core::filters::average_crossing_index;
use gsmooth_core::sim::PreparedDetector;
use gsmooth_core::{
    claim1_check, generate_batch, lpf_order_ratio, lrt_detect, lrt_tail_prob, lrt_threshold, pd_sweep, roc_curve,
    semi_detect, semi_tail, semi_threshold, smoothness_ratio, Decision, DetectionReport, DetectorConfig,
    ExperimentSpec, FilterConfig, GraphSource, SignalBatch, SpectralFilter, SpectralGraph, Sweep, Threshold,
};
use serde::Serialize;

use crate::args::{Cli, Command, DetectorOpts, Opts};
use crate::error::{CliError, Result};
use crate::io::{
    parse_graph_csv, parse_signals_csv, write_atomic, write_graph, write_json, write_roc, write_signals, write_sweep,
};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_PFA: f64 = 0.05;
pub const DEFAULT_M: usize = 30;
pub const DEFAULT_TRIALS: usize = 10_000;

/// Runs one subcommand and returns the process exit status (`detect`: 0 for
/// H0, 1 for H1; everything else 0).
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<u8> {
    let base = match &cli.config {
        Some(path) => load_config(path)?,
        None => Opts::default(),
    };
    match cli.command {
        Command::GenerateGraph(o) => generate_graph(&o.overlay(base), stdout),
        Command::GenerateSignals(o) => generate_signals(&o.overlay(base), stdout),
        Command::FilterInfo(o) => filter_info(&o.overlay(base), stdout),
        Command::Detect(d) => {
            let (det, o) = resolve(d, base, None)?;
            detect(&det, &o, stdout)
        }
        Command::Calibrate(d) => {
            let (det, o) = resolve(d, base, None)?;
            calibrate(&det, &o, stdout)
        }
        Command::Roc(d) => {
            let (det, o) = resolve(d, base, Some(DetectorConfig::Semi))?;
            roc(&det, &o, stdout)
        }
        Command::Sweep(o) => sweep(&o.overlay(base), stdout),
    }
}

pub fn load_config(path: &Path) -> Result<Opts> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn resolve(d: DetectorOpts, base: Opts, default: Option<DetectorConfig>) -> Result<(DetectorConfig, Opts)> {
    let o = d.opts.overlay(base);
    let det = d
        .name
        .map(|a| a.0)
        .or_else(|| o.detector.first().map(|a| a.0.clone()))
        .or(default)
        .ok_or_else(|| CliError::Usage("no detector given (e.g. `semi`, `lrt-gmrf`, `tv`)".into()))?;
    Ok((det, o))
}

fn require<T: Clone>(v: &Option<T>, what: &str) -> Result<T> {
    v.clone().ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

/// Writes to `path` atomically, or to standard output.
fn emit(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, body),
        None => body(stdout).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// JSON to `--out` with a one-line summary on standard output, or the JSON
/// itself on standard output.
fn emit_report<T: Serialize>(o: &Opts, stdout: &mut dyn Write, value: &T, summary: &str) -> Result<()> {
    let out = |e| CliError::io(Path::new("<stdout>"), e);
    match &o.out {
        Some(p) => {
            write_atomic(p, |w| write_json(w, value))?;
            writeln!(stdout, "{summary}").map_err(out)
        }
        None => write_json(stdout, value).map_err(out),
    }
}

fn load_graph(o: &Opts) -> Result<SpectralGraph> {
    let path = require(&o.graph, "--graph")?;
    Ok(SpectralGraph::new(parse_graph_csv(&path)?)?)
}

fn load_signals(o: &Opts, n: usize) -> Result<SignalBatch> {
    parse_signals_csv(&require(&o.signals, "--signals")?, n)
}

fn rbf_source(o: &Opts) -> GraphSource {
    let std = GraphSource::standard_rbf(o.n.unwrap_or(30));
    let GraphSource::Rbf {
        n,
        kernel_sigma,
        cutoff,
    } = std
    else {
        unreachable!()
    };
    GraphSource::Rbf {
        n,
        kernel_sigma: o.kernel_sigma.unwrap_or(kernel_sigma),
        cutoff: o.cutoff.unwrap_or(cutoff),
    }
}

fn generate_graph(o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    if !o.rbf {
        return Err(CliError::Usage(
            "only random geometric graphs can be generated; pass --rbf".into(),
        ));
    }
    let g = rbf_source(o).build(o.seed.unwrap_or(DEFAULT_SEED))?;
    emit(o.out.as_deref(), stdout, |w| write_graph(w, &g))?;
    Ok(0)
}

fn generate_signals(o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    let sg = load_graph(o)?;
    let filter = require(&o.h0, "--h0 (generating filter)")?.0.build(&sg)?;
    let x = generate_batch(
        &sg,
        &filter,
        o.sigma2.unwrap_or(1.0),
        o.m.unwrap_or(DEFAULT_M),
        o.noise_std.unwrap_or(0.0),
        o.seed.unwrap_or(DEFAULT_SEED),
    )?;
    emit(o.out.as_deref(), stdout, |w| write_signals(w, &x))?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct FilterInfo {
    filter: String,
    beta: f64,
    smoothness_ratio: f64,
    lambda_avg: f64,
    /// Largest 1-based index with `λ_J ≤ λ_avg`.
    j: usize,
    lpf: Vec<LpfRow>,
}

#[derive(Debug, Serialize)]
struct LpfRow {
    k: usize,
    #[serde(serialize_with = "gsmooth_core::detect::serialize_f64")]
    eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lpf_smooth: Option<bool>,
}

fn lpf_row(sg: &SpectralGraph, f: &SpectralFilter, k: usize) -> Result<LpfRow> {
    let eta = match lpf_order_ratio(f, k) {
        Ok(e) => e,
        Err(gsmooth_core::Error::LowBandZero { .. }) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };
    let check = match claim1_check(sg, f, k) {
        Ok(c) => Some(c),
        Err(gsmooth_core::Error::OrderTooHigh { .. } | gsmooth_core::Error::LowBandZero { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(LpfRow {
        k,
        eta,
        bound: check.map(|c| c.bound),
        lpf_smooth: check.map(|c| c.is_lpf_smooth),
    })
}

fn filter_info(o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    let sg = load_graph(o)?;
    let cfg = require(&o.h0, "--h0 (filter)")?.0;
    let f = cfg.build(&sg)?;
    let ks: Vec<usize> = match o.k {
        Some(k) => vec![k],
        None => (1..sg.n_nodes()).collect(),
    };
    let info = FilterInfo {
        filter: cfg.to_string(),
        beta: f.beta(),
        smoothness_ratio: smoothness_ratio(&f, &sg)?,
        lambda_avg: sg.lambda_avg(),
        j: average_crossing_index(&sg),
        lpf: ks.into_iter().map(|k| lpf_row(&sg, &f, k)).collect::<Result<_>>()?,
    };
    let summary = format!("{}: r = {}, beta = {}", info.filter, info.smoothness_ratio, info.beta);
    emit_report(o, stdout, &info, &summary)?;
    Ok(0)
}

/// Filters and σ² of an LRT-family detector.
fn lrt_parts(
    det: &DetectorConfig,
    sg: &SpectralGraph,
    o: &Opts,
    sigma2_required: bool,
) -> Result<(SpectralFilter, SpectralFilter, f64)> {
    let own_sigma2 = match det {
        DetectorConfig::Lrt { sigma2, .. }
        | DetectorConfig::LrtGmrf { sigma2 }
        | DetectorConfig::LrtTikhonov { sigma2, .. }
        | DetectorConfig::LrtDiffusion { sigma2, .. } => *sigma2,
        _ => None,
    };
    let sigma2 = match own_sigma2.or(o.sigma2) {
        Some(s) => s,
        None if sigma2_required => return Err(CliError::Usage(format!("{} needs --sigma2", det.name()))),
        None => 1.0,
    };
    let (h0, h1) = match det {
        DetectorConfig::Lrt { h0, h1, .. } => (
            h0.clone().or_else(|| o.h0.clone().map(|a| a.0)),
            h1.clone().or_else(|| o.h1.clone().map(|a| a.0)),
        ),
        _ => (None, None),
    };
    let needs_filters = matches!(det, DetectorConfig::Lrt { .. });
    let h0 = match h0 {
        Some(h) => h,
        None if needs_filters => return Err(CliError::Usage("lrt needs --h0".into())),
        None => FilterConfig::allpass(),
    };
    let h1 = match h1 {
        Some(h) => h,
        None if needs_filters => return Err(CliError::Usage("lrt needs --h1".into())),
        None => FilterConfig::allpass(),
    };
    match det.prepare(sg, &h0, &h1, sigma2)? {
        PreparedDetector::Lrt { h0, h1, sigma2 } => Ok((h0, h1, sigma2)),
        _ => unreachable!("LRT configs prepare to LRT detectors"),
    }
}

fn is_lrt(det: &DetectorConfig) -> bool {
    matches!(
        det,
        DetectorConfig::Lrt { .. }
            | DetectorConfig::LrtGmrf { .. }
            | DetectorConfig::LrtTikhonov { .. }
            | DetectorConfig::LrtDiffusion { .. }
    )
}

/// The library report for `det` on `x`; the CLI adds nothing to the numbers.
pub fn detection_report(
    det: &DetectorConfig,
    sg: &SpectralGraph,
    x: &SignalBatch,
    o: &Opts,
) -> Result<DetectionReport> {
    let threshold = match o.threshold {
        Some(t) => Threshold::Value(t),
        None => Threshold::Pfa(o.pfa.unwrap_or(DEFAULT_PFA)),
    };
    let mut report = match det {
        DetectorConfig::Semi => semi_detect(x, sg, threshold)?,
        DetectorConfig::Tv => match threshold {
            Threshold::Value(t) => tv_detect(x, sg, t)?,
            Threshold::Pfa(_) => {
                return Err(CliError::Usage(
                    "tv has no calibrated threshold; pass --threshold".into(),
                ))
            }
        },
        DetectorConfig::Lpf { k } => {
            let k = k.or(o.k).unwrap_or_else(|| default_lpf_order(sg.n_nodes()));
            lpf_eta_hat_detect(x, sg, k, o.threshold.unwrap_or(1.0))?
        }
        _ => {
            let (h0, h1, sigma2) = lrt_parts(det, sg, o, true)?;
            let mut r = lrt_detect(x, sg, &h0, &h1, sigma2, threshold)?;
            if let DetectorConfig::Lrt { .. } = det {
                r.meta.filters = [&o.h0, &o.h1]
                    .iter()
                    .zip([det_filter(det, 0), det_filter(det, 1)])
                    .map(|(flag, own)| {
                        own.or_else(|| flag.as_ref().map(|a| a.0.to_string()))
                            .unwrap_or_default()
                    })
                    .collect();
            }
            r
        }
    };
    report.detector = det.to_string();
    report.meta.seed = o.seed;
    Ok(report)
}

fn det_filter(det: &DetectorConfig, which: usize) -> Option<String> {
    match det {
        DetectorConfig::Lrt { h0, h1, .. } => [h0, h1][which].as_ref().map(|f| f.to_string()),
        _ => None,
    }
}

fn detect(det: &DetectorConfig, o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    let sg = load_graph(o)?;
    let x = load_signals(o, sg.n_nodes())?;
    let report = detection_report(det, &sg, &x, o)?;
    let verdict = match report.decision {
        Decision::H0 => "H0 (smooth)",
        Decision::H1 => "H1 (not smooth)",
    };
    let summary = format!(
        "{}: statistic {} threshold {} -> {verdict}",
        report.detector, report.statistic, report.threshold
    );
    emit_report(o, stdout, &report, &summary)?;
    Ok(match report.decision {
        Decision::H0 => 0,
        Decision::H1 => 1,
    })
}

#[derive(Debug, Serialize)]
pub struct Calibration {
    pub detector: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub target_pfa: f64,
    /// On the scale of the detector's statistic (`r̂` for `semi`).
    pub threshold: f64,
    /// Analytic false-alarm probability at `threshold`.
    pub achieved_pfa: f64,
}

pub fn calibration(det: &DetectorConfig, sg: &SpectralGraph, o: &Opts) -> Result<Calibration> {
    let m = o.m.unwrap_or(DEFAULT_M);
    let p = o.pfa.unwrap_or(DEFAULT_PFA);
    let (threshold, achieved_pfa) = match det {
        DetectorConfig::Semi => {
            let g = semi_threshold(sg, m, p)?;
            (g / sg.lambda_avg(), semi_tail(sg, m, g)?)
        }
        d if is_lrt(d) => {
            let (h0, h1, _) = lrt_parts(det, sg, o, false)?;
            let g = lrt_threshold(&h0, &h1, m, p)?;
            (g, lrt_tail_prob(&h0, &h1, m, g)?)
        }
        _ => {
            return Err(CliError::Usage(format!(
                "{} has no analytic null distribution",
                det.name()
            )))
        }
    };
    Ok(Calibration {
        detector: det.to_string(),
        m,
        target_pfa: p,
        threshold,
        achieved_pfa,
    })
}

fn calibrate(det: &DetectorConfig, o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    let sg = load_graph(o)?;
    let c = calibration(det, &sg, o)?;
    let summary = format!("gamma {} achieved pfa {}", c.threshold, c.achieved_pfa);
    emit_report(o, stdout, &c, &summary)?;
    Ok(0)
}

/// The experiment described by the options: the graph file when given,
/// otherwise a random geometric graph drawn from the seed.
pub fn experiment(o: &Opts) -> Result<ExperimentSpec> {
    let graph = match &o.graph {
        Some(p) => GraphSource::Fixed(parse_graph_csv(p)?),
        None => rbf_source(o),
    };
    let sweep = match o.param {
        Some(param) => Some(Sweep {
            param,
            grid: o.grid.clone(),
        }),
        None => None,
    };
    Ok(ExperimentSpec {
        graph,
        h0: o.h0.clone().map_or(FilterConfig::tikhonov(0.2), |a| a.0),
        h1: o.h1.clone().map_or(FilterConfig::allpass(), |a| a.0),
        m: o.m.unwrap_or(DEFAULT_M),
        sigma2: o.sigma2.unwrap_or(1.0),
        noise_std: o.noise_std.unwrap_or(0.1),
        trials: o.trials.unwrap_or(DEFAULT_TRIALS),
        seed: o.seed.unwrap_or(DEFAULT_SEED),
        sweep,
    })
}

#[derive(Debug, Serialize)]
struct RocSummary {
    detector: String,
    auc: f64,
    trials: usize,
    seed: u64,
}

/// `roc.csv` → `roc.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn roc(det: &DetectorConfig, o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    let spec = experiment(o)?;
    let curve = roc_curve(&spec, det)?;
    let summary = RocSummary {
        detector: det.to_string(),
        auc: curve.auc,
        trials: curve.trials,
        seed: spec.seed,
    };
    match &o.out {
        Some(p) => {
            write_atomic(p, |w| write_roc(w, &curve))?;
            write_atomic(&summary_path(p), |w| write_json(w, &summary))?;
            writeln!(stdout, "{}: auc {}", summary.detector, summary.auc)
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
        }
        None => emit(None, stdout, |w| write_roc(w, &curve))?,
    }
    Ok(0)
}

fn sweep(o: &Opts, stdout: &mut dyn Write) -> Result<u8> {
    if o.param.is_none() || o.grid.is_empty() {
        return Err(CliError::Usage("sweep needs --param and --grid".into()));
    }
    let spec = experiment(o)?;
    let detectors: Vec<DetectorConfig> = if o.detector.is_empty() {
        vec![DetectorConfig::Semi]
    } else {
        o.detector.iter().map(|a| a.0.clone()).collect()
    };
    let rows = pd_sweep(&spec, &detectors, o.pfa.unwrap_or(DEFAULT_PFA))?;
    emit(o.out.as_deref(), stdout, |w| write_sweep(w, &rows))?;
    Ok(0)
}
