//! Synthetic experiments: random geometric graphs, filtered-noise batches
//! and Monte Carlo evaluation of detectors (ROC curves and detection
//! probability sweeps).
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial)`, so
//! results do not depend on how trials are spread over threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{default_lpf_order, lpf_eta_hat, lrt_statistic, naive_tv_statistic, semi_r_hat};
use crate::error::{Error, Result};
use crate::filters::{make_box1_filter, smoothness_ratio, Box1Kind, FilterConfig, SpectralFilter};
use crate::graph::{Edge, SignalBatch, SpectralGraph, WeightedGraph};
use crate::quadform::{lrt_threshold, semi_threshold};

/// Stream reserved for drawing graph coordinates.
pub const GRAPH_STREAM: u64 = u64::MAX;
/// Added to the seed for auxiliary H0 runs that calibrate baselines.
const CALIBRATION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;
/// Baseline calibration runs use this many times the main trial count.
const CALIBRATION_TRIAL_FACTOR: usize = 10;

/// Independent generator for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `n` points uniform in the unit square.
pub fn sample_coords(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = trial_rng(seed, GRAPH_STREAM);
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Gaussian-kernel weights `exp(−d²/(2σ²))`, dropping edges lighter than
/// `cutoff`. Fails when the pruned graph is disconnected.
pub fn rbf_graph(coords: &[[f64; 2]], kernel_sigma: f64, cutoff: f64) -> Result<WeightedGraph> {
    if coords.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 points".into()));
    }
    if !(kernel_sigma > 0.0 && kernel_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel sigma must be > 0, got {kernel_sigma}"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let w = rbf_weight(coords[i], coords[j], kernel_sigma);
            if w >= cutoff && w > 0.0 {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    weight: w,
                });
            }
        }
    }
    let g = WeightedGraph::new(coords.len(), edges)?;
    if !g.is_connected() {
        return Err(Error::DisconnectedAfterCutoff { cutoff });
    }
    Ok(g)
}

pub fn rbf_weight(a: [f64; 2], b: [f64; 2], kernel_sigma: f64) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    (-d2 / (2.0 * kernel_sigma * kernel_sigma)).exp()
}

/// Draws batches `x[m] = h(L) y[m] + n[m]`, `y ~ N(0, σ²I)`,
/// `n ~ N(0, noise_std² I)`.
#[derive(Debug, Clone)]
pub struct BatchGenerator {
    // h(L) scaled by σ; symmetric, so rows transform as y ↦ yᵀ h(L)
    op: DMatrix<f64>,
    noise_std: f64,
}

impl BatchGenerator {
    pub fn new(sg: &SpectralGraph, filter: &SpectralFilter, sigma2: f64, noise_std: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::NonPositiveSigma(sigma2));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise std must be >= 0, got {noise_std}"
            )));
        }
        Ok(Self {
            op: filter.matrix(sg)? * sigma2.sqrt(),
            noise_std,
        })
    }

    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> Result<SignalBatch> {
        let n = self.op.nrows();
        let y = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
        let mut x = y * &self.op;
        if self.noise_std > 0.0 {
            for v in x.iter_mut() {
                *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        SignalBatch::new(x)
    }
}

/// One batch from a seeded generator.
pub fn generate_batch(
    sg: &SpectralGraph,
    filter: &SpectralFilter,
    sigma2: f64,
    m: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SignalBatch> {
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    BatchGenerator::new(sg, filter, sigma2, noise_std)?.sample(m, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    /// Random geometric graph drawn from the experiment seed.
    Rbf {
        n: usize,
        kernel_sigma: f64,
        cutoff: f64,
    },
    Fixed(WeightedGraph),
}

impl GraphSource {
    pub fn standard_rbf(n: usize) -> Self {
        GraphSource::Rbf {
            n,
            kernel_sigma: 0.5,
            cutoff: 0.55,
        }
    }

    pub fn build(&self, seed: u64) -> Result<WeightedGraph> {
        match self {
            GraphSource::Rbf {
                n,
                kernel_sigma,
                cutoff,
            } => rbf_graph(&sample_coords(*n, seed), *kernel_sigma, *cutoff),
            GraphSource::Fixed(g) => Ok(g.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Samples per trial.
    M,
    /// Tikhonov parameter of the H0 filter.
    Alpha,
    /// Target smoothness ratio of a Tikhonov H0 filter.
    R,
    /// Multiplier of the H1 filter.
    Scale,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::M => "M",
            SweepParam::Alpha => "alpha",
            SweepParam::R => "r",
            SweepParam::Scale => "scale",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" => Ok(SweepParam::M),
            "alpha" => Ok(SweepParam::Alpha),
            "r" | "ratio" => Ok(SweepParam::R),
            "scale" => Ok(SweepParam::Scale),
            other => Err(Error::InvalidParameter(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub graph: GraphSource,
    pub h0: FilterConfig,
    pub h1: FilterConfig,
    pub m: usize,
    /// Variance of the white input `y`.
    pub sigma2: f64,
    pub noise_std: f64,
    pub trials: usize,
    pub seed: u64,
    pub sweep: Option<Sweep>,
}

impl ExperimentSpec {
    /// The synthetic setup: 30-node RBF graph, 30 samples, noise std 0.1,
    /// normalized Tikhonov (α = 0.2) against all-pass.
    pub fn synthetic_default(seed: u64) -> Self {
        Self {
            graph: GraphSource::standard_rbf(30),
            h0: FilterConfig::tikhonov(0.2),
            h1: FilterConfig::allpass(),
            m: 30,
            sigma2: 1.0,
            noise_std: 0.1,
            trials: 10_000,
            seed,
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::EmptyBatch);
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("noise std must be >= 0".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::NonPositiveSigma(self.sigma2));
        }
        if let Some(s) = &self.sweep {
            if s.grid.is_empty() || s.grid.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidParameter(
                    "sweep grid must be non-empty and strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn spectral_graph(&self) -> Result<SpectralGraph> {
        SpectralGraph::new(self.graph.build(self.seed)?)
    }
}

/// Detector selection; LRT filters left as `None` follow the experiment's
/// own hypotheses, and σ² defaults to the experiment's input variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum DetectorConfig {
    Lrt {
        #[serde(default)]
        h0: Option<FilterConfig>,
        #[serde(default)]
        h1: Option<FilterConfig>,
        #[serde(default)]
        sigma2: Option<f64>,
    },
    LrtGmrf {
        #[serde(default)]
        sigma2: Option<f64>,
    },
    LrtTikhonov {
        alpha: f64,
        #[serde(default)]
        sigma2: Option<f64>,
    },
    LrtDiffusion {
        tau: f64,
        #[serde(default)]
        sigma2: Option<f64>,
    },
    Semi,
    Tv,
    Lpf {
        #[serde(default)]
        k: Option<usize>,
    },
}

impl DetectorConfig {
    pub fn matched_lrt() -> Self {
        DetectorConfig::Lrt {
            h0: None,
            h1: None,
            sigma2: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectorConfig::Lrt { .. } => "lrt",
            DetectorConfig::LrtGmrf { .. } => "lrt-gmrf",
            DetectorConfig::LrtTikhonov { .. } => "lrt-tikhonov",
            DetectorConfig::LrtDiffusion { .. } => "lrt-diffusion",
            DetectorConfig::Semi => "semi",
            DetectorConfig::Tv => "tv",
            DetectorConfig::Lpf { .. } => "lpf",
        }
    }

    /// Whether a threshold can be computed from a closed-form null law.
    pub fn is_calibratable(&self) -> bool {
        !matches!(self, DetectorConfig::Tv | DetectorConfig::Lpf { .. })
    }

    /// Resolves filters against a graph and the experiment's hypotheses.
    pub fn prepare(
        &self,
        sg: &SpectralGraph,
        h0: &FilterConfig,
        h1: &FilterConfig,
        sigma2: f64,
    ) -> Result<PreparedDetector> {
        let allpass = || SpectralFilter::allpass(sg);
        let box1 = |kind, s: &Option<f64>| -> Result<PreparedDetector> {
            Ok(PreparedDetector::Lrt {
                h0: make_box1_filter(sg, kind, true)?,
                h1: allpass(),
                sigma2: s.unwrap_or(sigma2),
            })
        };
        match self {
            DetectorConfig::Lrt {
                h0: a,
                h1: b,
                sigma2: s,
            } => Ok(PreparedDetector::Lrt {
                h0: a.as_ref().unwrap_or(h0).build(sg)?,
                h1: b.as_ref().unwrap_or(h1).build(sg)?,
                sigma2: s.unwrap_or(sigma2),
            }),
            DetectorConfig::LrtGmrf { sigma2: s } => box1(Box1Kind::Gmrf, s),
            DetectorConfig::LrtTikhonov { alpha, sigma2: s } => box1(Box1Kind::Tikhonov { alpha: *alpha }, s),
            DetectorConfig::LrtDiffusion { tau, sigma2: s } => box1(Box1Kind::Diffusion { tau: *tau }, s),
            DetectorConfig::Semi => Ok(PreparedDetector::Semi),
            DetectorConfig::Tv => Ok(PreparedDetector::Tv),
            DetectorConfig::Lpf { k } => Ok(PreparedDetector::Lpf {
                k: k.unwrap_or_else(|| default_lpf_order(sg.n_nodes())),
            }),
        }
    }
}

impl fmt::Display for DetectorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        let mut parts = Vec::new();
        match self {
            DetectorConfig::LrtTikhonov { alpha, .. } => parts.push(format!("alpha={alpha}")),
            DetectorConfig::LrtDiffusion { tau, .. } => parts.push(format!("tau={tau}")),
            DetectorConfig::Lpf { k: Some(k) } => parts.push(format!("k={k}")),
            _ => {}
        }
        if let DetectorConfig::Lrt { sigma2: Some(s), .. }
        | DetectorConfig::LrtGmrf { sigma2: Some(s) }
        | DetectorConfig::LrtTikhonov { sigma2: Some(s), .. }
        | DetectorConfig::LrtDiffusion { sigma2: Some(s), .. } = self
        {
            parts.push(format!("sigma2={s}"));
        }
        if !parts.is_empty() {
            write!(f, ":{}", parts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for DetectorConfig {
    type Err = Error;

    /// `name[:key=val,…]`, e.g. `semi`, `lrt-tikhonov:alpha=0.2`, `lpf:k=10`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParameter(format!("detector `{s}`: {msg}"));
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for tok in rest.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{tok}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| kv.remove(key);
        let num = |v: Option<String>, key: &str| -> Result<Option<f64>> {
            v.map(|v| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("{key} must be a number, got `{v}`")))
            })
            .transpose()
        };
        let sigma2 = num(take("sigma2"), "sigma2")?;
        let cfg = match name.trim().to_ascii_lowercase().as_str() {
            "lrt" => DetectorConfig::Lrt {
                h0: None,
                h1: None,
                sigma2,
            },
            "lrt-gmrf" => DetectorConfig::LrtGmrf { sigma2 },
            "lrt-tikhonov" => DetectorConfig::LrtTikhonov {
                alpha: num(take("alpha"), "alpha")?.ok_or_else(|| bad("needs alpha".into()))?,
                sigma2,
            },
            "lrt-diffusion" => DetectorConfig::LrtDiffusion {
                tau: num(take("tau"), "tau")?.ok_or_else(|| bad("needs tau".into()))?,
                sigma2,
            },
            "semi" => DetectorConfig::Semi,
            "tv" => DetectorConfig::Tv,
            "lpf" => DetectorConfig::Lpf {
                k: take("k")
                    .map(|v| {
                        v.parse::<usize>()
                            .map_err(|_| bad(format!("k must be an integer, got `{v}`")))
                    })
                    .transpose()?,
            },
            other => return Err(bad(format!("unknown detector `{other}`"))),
        };
        if let Some(key) = kv.keys().next() {
            return Err(bad(format!("unexpected key `{key}`")));
        }
        Ok(cfg)
    }
}

/// A detector with its filters evaluated on a particular spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedDetector {
    Lrt {
        h0: SpectralFilter,
        h1: SpectralFilter,
        sigma2: f64,
    },
    Semi,
    Tv,
    Lpf {
        k: usize,
    },
}

impl PreparedDetector {
    pub fn statistic(&self, x: &SignalBatch, sg: &SpectralGraph) -> Result<f64> {
        match self {
            PreparedDetector::Lrt { h0, h1, sigma2 } => Ok(lrt_statistic(x, sg, h0, h1, *sigma2)?.statistic),
            PreparedDetector::Semi => semi_r_hat(x, sg.laplacian()),
            PreparedDetector::Tv => naive_tv_statistic(x, sg.laplacian()),
            PreparedDetector::Lpf { k } => lpf_eta_hat(x, sg, *k),
        }
    }

    /// Threshold on the statistic's own scale, or `None` for detectors
    /// without an analytic null law.
    pub fn analytic_threshold(&self, sg: &SpectralGraph, m: usize, pfa: f64) -> Result<Option<f64>> {
        match self {
            PreparedDetector::Lrt { h0, h1, .. } => lrt_threshold(h0, h1, m, pfa).map(Some),
            PreparedDetector::Semi => Ok(Some(semi_threshold(sg, m, pfa)? / sg.lambda_avg())),
            PreparedDetector::Tv | PreparedDetector::Lpf { .. } => Ok(None),
        }
    }
}

/// Per-detector statistics over all trials, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores {
    pub h0: Vec<Vec<f64>>,
    pub h1: Vec<Vec<f64>>,
}

/// Runs `trials` trials; each draws an H0 batch and then an H1 batch from
/// its own stream and scores both with every detector.
pub fn run_trials(
    sg: &SpectralGraph,
    gen0: &BatchGenerator,
    gen1: &BatchGenerator,
    m: usize,
    detectors: &[PreparedDetector],
    trials: usize,
    seed: u64,
) -> Result<TrialScores> {
    let per_trial: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let x0 = gen0.sample(m, &mut rng)?;
            let x1 = gen1.sample(m, &mut rng)?;
            let s0 = detectors
                .iter()
                .map(|d| d.statistic(&x0, sg))
                .collect::<Result<Vec<_>>>()?;
            let s1 = detectors
                .iter()
                .map(|d| d.statistic(&x1, sg))
                .collect::<Result<Vec<_>>>()?;
            Ok((s0, s1))
        })
        .collect::<Result<_>>()?;
    let mut scores = TrialScores {
        h0: vec![Vec::with_capacity(trials); detectors.len()],
        h1: vec![Vec::with_capacity(trials); detectors.len()],
    };
    for (s0, s1) in per_trial {
        for (d, (a, b)) in s0.into_iter().zip(s1).enumerate() {
            scores.h0[d].push(a);
            scores.h1[d].push(b);
        }
    }
    Ok(scores)
}

/// Statistics under a single hypothesis only.
pub fn run_null_trials(
    sg: &SpectralGraph,
    gen: &BatchGenerator,
    m: usize,
    detectors: &[PreparedDetector],
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let x = gen.sample(m, &mut rng)?;
            detectors
                .iter()
                .map(|d| d.statistic(&x, sg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(trials); detectors.len()];
    for row in per_trial {
        for (d, v) in row.into_iter().enumerate() {
            out[d].push(v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    #[serde(serialize_with = "crate::detect::serialize_f64")]
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Sorted by increasing threshold; the first point is at `−∞`.
    pub points: Vec<RocPoint>,
    pub trials: usize,
    pub auc: f64,
}

impl RocCurve {
    /// Builds the empirical curve by sweeping every pooled statistic value as
    /// a threshold; `pfa` and `pd` are frequencies of `stat > threshold`.
    pub fn from_scores(h0: &[f64], h1: &[f64]) -> Result<Self> {
        if h0.is_empty() || h1.is_empty() {
            return Err(Error::InvalidParameter(
                "ROC needs statistics under both hypotheses".into(),
            ));
        }
        if h0.iter().chain(h1).any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("statistic is NaN".into()));
        }
        let sort = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        let (s0, s1) = (sort(h0), sort(h1));
        let mut thresholds: Vec<f64> = s0.iter().chain(&s1).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.insert(0, f64::NEG_INFINITY);
        let exceed = |s: &[f64], t: f64| (s.len() - s.partition_point(|v| *v <= t)) as f64 / s.len() as f64;
        let points: Vec<RocPoint> = thresholds
            .into_iter()
            .map(|t| RocPoint {
                threshold: t,
                pfa: exceed(&s0, t),
                pd: exceed(&s1, t),
            })
            .collect();
        // pfa is non-increasing along the thresholds and reaches (0, 0) at
        // the largest pooled value
        let auc = points
            .windows(2)
            .map(|w| (w[0].pfa - w[1].pfa) * 0.5 * (w[0].pd + w[1].pd))
            .sum::<f64>();
        Ok(Self {
            points,
            trials: h0.len().min(h1.len()),
            auc,
        })
    }

    /// Best detection probability over operating points with `pfa ≤ target`.
    pub fn pd_at_pfa(&self, target: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.pfa <= target)
            .map(|p| p.pd)
            .fold(0.0, f64::max)
    }
}

struct Prepared {
    sg: SpectralGraph,
    gen0: BatchGenerator,
    gen1: BatchGenerator,
    detectors: Vec<PreparedDetector>,
}

fn prepare(spec: &ExperimentSpec, sg: SpectralGraph, detectors: &[DetectorConfig]) -> Result<Prepared> {
    let h0 = spec.h0.build(&sg)?;
    let h1 = spec.h1.build(&sg)?;
    let gen0 = BatchGenerator::new(&sg, &h0, spec.sigma2, spec.noise_std)?;
    let gen1 = BatchGenerator::new(&sg, &h1, spec.sigma2, spec.noise_std)?;
    let detectors = detectors
        .iter()
        .map(|d| d.prepare(&sg, &spec.h0, &spec.h1, spec.sigma2))
        .collect::<Result<_>>()?;
    Ok(Prepared {
        sg,
        gen0,
        gen1,
        detectors,
    })
}

/// One ROC curve per detector, all computed from the same batches.
pub fn roc_curves(spec: &ExperimentSpec, detectors: &[DetectorConfig]) -> Result<Vec<RocCurve>> {
    spec.validate()?;
    let p = prepare(spec, spec.spectral_graph()?, detectors)?;
    let scores = run_trials(&p.sg, &p.gen0, &p.gen1, spec.m, &p.detectors, spec.trials, spec.seed)?;
    scores
        .h0
        .iter()
        .zip(&scores.h1)
        .map(|(a, b)| RocCurve::from_scores(a, b))
        .collect()
}

pub fn roc_curve(spec: &ExperimentSpec, detector: &DetectorConfig) -> Result<RocCurve> {
    Ok(roc_curves(spec, std::slice::from_ref(detector))?.remove(0))
}

/// Same experiment with the H1 filter multiplied by `scale`.
pub fn scaling_experiment(spec: &ExperimentSpec, scale: f64, detectors: &[DetectorConfig]) -> Result<Vec<RocCurve>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be > 0, got {scale}")));
    }
    let mut spec = spec.clone();
    let base = spec.h1.scale.unwrap_or(1.0);
    spec.h1.scale = Some(base * scale);
    roc_curves(&spec, detectors)
}

/// Tikhonov parameter whose smoothness ratio on `sg` equals `r`, found by
/// bisection on `log α` (the ratio decreases from 1 at `α = 0` toward 0).
pub fn alpha_for_ratio(sg: &SpectralGraph, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target ratio must be in (0, 1), got {r}"
        )));
    }
    let ratio = |log_a: f64| -> Result<f64> {
        let f = make_box1_filter(sg, Box1Kind::Tikhonov { alpha: log_a.exp() }, false)?;
        smoothness_ratio(&f, sg)
    };
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e12f64).ln());
    if ratio(lo)? < r || ratio(hi)? > r {
        return Err(Error::InvalidParameter(format!(
            "ratio {r} not reachable by a Tikhonov filter"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ratio(mid)? > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub detector: String,
    pub pd: f64,
    /// Threshold used at this grid point.
    #[serde(serialize_with = "crate::detect::serialize_f64")]
    pub threshold: f64,
    /// False-alarm frequency observed on the main run's H0 batches.
    pub pfa: f64,
    pub trials: usize,
}

/// Detection probability at a fixed false-alarm target across a parameter
/// grid. Calibratable detectors use analytic thresholds; the others use the
/// empirical `1 − target` quantile of an H0 run with ten times the trials.
pub fn pd_sweep(spec: &ExperimentSpec, detectors: &[DetectorConfig], target_pfa: f64) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("pd_sweep needs a sweep grid".into()))?;
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target pfa must be in (0, 1), got {target_pfa}"
        )));
    }
    let sg = spec.spectral_graph()?;
    let mut rows = Vec::new();
    for &value in &sweep.grid {
        let mut point = spec.clone();
        point.sweep = None;
        match sweep.param {
            SweepParam::M => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "M grid values must be positive integers, got {value}"
                    )));
                }
                point.m = value as usize;
            }
            SweepParam::Alpha => point.h0 = FilterConfig::tikhonov(value),
            SweepParam::R => point.h0 = FilterConfig::tikhonov(alpha_for_ratio(&sg, value)?),
            SweepParam::Scale => point.h1.scale = Some(spec.h1.scale.unwrap_or(1.0) * value),
        }
        let p = prepare(&point, sg.clone(), detectors)?;
        let mut thresholds = Vec::with_capacity(detectors.len());
        let mut needs_empirical = Vec::new();
        for (i, d) in p.detectors.iter().enumerate() {
            match d.analytic_threshold(&sg, point.m, target_pfa)? {
                Some(t) => thresholds.push(t),
                None => {
                    thresholds.push(f64::NAN);
                    needs_empirical.push(i);
                }
            }
        }
        if !needs_empirical.is_empty() {
            let subset: Vec<PreparedDetector> = needs_empirical.iter().map(|&i| p.detectors[i].clone()).collect();
            let null = run_null_trials(
                &sg,
                &p.gen0,
                point.m,
                &subset,
                point.trials * CALIBRATION_TRIAL_FACTOR,
                point.seed.wrapping_add(CALIBRATION_SEED_OFFSET),
            )?;
            for (j, &i) in needs_empirical.iter().enumerate() {
                thresholds[i] = empirical_threshold(&null[j], target_pfa);
            }
        }
        let scores = run_trials(&sg, &p.gen0, &p.gen1, point.m, &p.detectors, point.trials, point.seed)?;
        for (i, d) in detectors.iter().enumerate() {
            let t = thresholds[i];
            let freq = |s: &[f64]| s.iter().filter(|v| **v > t).count() as f64 / s.len() as f64;
            rows.push(SweepRow {
                param: value,
                detector: d.to_string(),
                pd: freq(&scores.h1[i]),
                threshold: t,
                pfa: freq(&scores.h0[i]),
                trials: point.trials,
            });
        }
    }
    Ok(rows)
}

/// Smallest observed value `t` with `#{s > t} / n ≤ target`.
pub fn empirical_threshold(null_stats: &[f64], target: f64) -> f64 {
    let mut s = null_stats.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    // allowed exceedances
    let k = (target * n as f64).floor() as usize;
    if k >= n {
        return f64::NEG_INFINITY;
    }
    s[n - 1 - k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::sample_covariance;
    use approx::assert_relative_eq;

    fn small_spec(seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            graph: GraphSource::standard_rbf(12),
            trials: 200,
            m: 10,
            ..ExperimentSpec::synthetic_default(seed)
        }
    }

    fn connected_seed(n: usize) -> u64 {
        (0..).find(|s| GraphSource::standard_rbf(n).build(*s).is_ok()).unwrap()
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf_weight([0.3, 0.3], [0.3, 0.3], 0.5), 1.0);
        assert_relative_eq!(
            rbf_weight([0.0, 0.0], [0.5, 0.0], 0.5),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!((-0.5f64).exp(), 0.606531, epsilon = 1e-6);
        // d² = 2σ² ln 2 gives weight exactly 1/2, below the 0.55 cutoff
        let d = (2.0 * 0.25 * 2f64.ln()).sqrt();
        let pts = [[0.0, 0.0], [d, 0.0], [d, 0.01]];
        assert_relative_eq!(rbf_weight(pts[0], pts[1], 0.5), 0.5, epsilon = 1e-12);
        assert!(matches!(
            rbf_graph(&pts, 0.5, 0.55),
            Err(Error::DisconnectedAfterCutoff { .. })
        ));
        let g = rbf_graph(&pts, 0.5, 0.45).unwrap();
        assert_eq!(g.edges().len(), 3);
    }

    #[test]
    fn coords_examples() {
        let a = sample_coords(30, 7);
        assert_eq!(a, sample_coords(30, 7));
        assert_eq!(a.len(), 30);
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, sample_coords(30, 8));
    }

    #[test]
    fn generator_examples() {
        let seed = connected_seed(10);
        let sg = SpectralGraph::new(GraphSource::standard_rbf(10).build(seed).unwrap()).unwrap();
        let x = generate_batch(&sg, &SpectralFilter::allpass(&sg), 1.0, 10_000, 0.0, 3).unwrap();
        let err = (sample_covariance(&x) - DMatrix::<f64>::identity(10, 10)).norm();
        assert!(err <= 0.1, "frobenius error {err}");

        let mut r = vec![1.0; 10];
        r[4] = 0.0;
        let f = SpectralFilter::tabulated(&sg, r, false).unwrap();
        let x = generate_batch(&sg, &f, 2.0, 50, 0.0, 4).unwrap();
        let c = x.gft(&sg).unwrap();
        assert!(c.column(4).amax() < 1e-12);
        assert_eq!(x.values(), generate_batch(&sg, &f, 2.0, 50, 0.0, 4).unwrap().values());
    }

    #[test]
    fn roc_from_scores_examples() {
        let sep = RocCurve::from_scores(&[0.0, 1.0, 2.0], &[5.0, 6.0]).unwrap();
        assert_eq!(sep.auc, 1.0);
        assert_eq!(
            sep.points[0],
            RocPoint {
                threshold: f64::NEG_INFINITY,
                pfa: 1.0,
                pd: 1.0
            }
        );
        assert_eq!(sep.pd_at_pfa(0.0), 1.0);
        let same = RocCurve::from_scores(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(same.auc, 0.5, epsilon = 1e-15);
        let flipped = RocCurve::from_scores(&[5.0, 6.0], &[0.0, 1.0]).unwrap();
        assert_eq!(flipped.auc, 0.0);
        let inf = RocCurve::from_scores(&[f64::INFINITY, 1.0], &[f64::INFINITY, 2.0]).unwrap();
        assert_relative_eq!(inf.auc, 0.625, epsilon = 1e-15);
        assert!(sep.points.windows(2).all(|w| w[0].threshold < w[1].threshold));
    }

    #[test]
    fn empirical_threshold_examples() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = empirical_threshold(&s, 0.05);
        assert_eq!(t, 95.0);
        assert_eq!(s.iter().filter(|v| **v > t).count(), 5);
        assert_eq!(empirical_threshold(&s, 0.001), 100.0);
    }

    #[test]
    fn trials_do_not_depend_on_thread_count() {
        let spec = small_spec(connected_seed(12));
        let dets = [DetectorConfig::Semi, DetectorConfig::Tv, DetectorConfig::matched_lrt()];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| roc_curves(&spec, &dets).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
    }

    #[test]
    fn exchangeable_hypotheses_give_chance_auc() {
        let mut spec = small_spec(connected_seed(12));
        spec.h1 = spec.h0.clone();
        spec.trials = 10_000;
        let roc = roc_curve(&spec, &DetectorConfig::Semi).unwrap();
        assert!((roc.auc - 0.5).abs() <= 0.02, "auc {}", roc.auc);
    }

    #[test]
    fn scaling_of_one_is_plain_roc() {
        let spec = small_spec(connected_seed(12));
        let dets = [DetectorConfig::Semi, DetectorConfig::Tv];
        assert_eq!(
            scaling_experiment(&spec, 1.0, &dets).unwrap(),
            roc_curves(&spec, &dets).unwrap()
        );
    }

    #[test]
    fn alpha_round_trip() {
        let sg = small_spec(connected_seed(12)).spectral_graph().unwrap();
        for r in [0.3, 0.5, 0.7, 0.9] {
            let a = alpha_for_ratio(&sg, r).unwrap();
            let f = make_box1_filter(&sg, Box1Kind::Tikhonov { alpha: a }, true).unwrap();
            assert!((smoothness_ratio(&f, &sg).unwrap() - r).abs() <= 1e-8);
        }
        assert!(alpha_for_ratio(&sg, 1.0).is_err());
    }

    #[test]
    fn detector_config_parsing() {
        assert_eq!("semi".parse::<DetectorConfig>().unwrap(), DetectorConfig::Semi);
        let d: DetectorConfig = "lrt-tikhonov:alpha=0.2,sigma2=2".parse().unwrap();
        assert_eq!(
            d,
            DetectorConfig::LrtTikhonov {
                alpha: 0.2,
                sigma2: Some(2.0)
            }
        );
        assert_eq!(d.to_string().parse::<DetectorConfig>().unwrap(), d);
        assert_eq!(
            "lpf:k=4".parse::<DetectorConfig>().unwrap(),
            DetectorConfig::Lpf { k: Some(4) }
        );
        assert!("lrt-tikhonov".parse::<DetectorConfig>().is_err());
        assert!("bsmsd".parse::<DetectorConfig>().is_err());
        assert!("semi:k=2".parse::<DetectorConfig>().is_err());
        let json = serde_json::to_string(&DetectorConfig::LrtDiffusion { tau: 0.1, sigma2: None }).unwrap();
        assert!(json.contains("\"name\":\"lrt-diffusion\""));
    }

    #[test]
    fn sweep_rows_cover_grid_and_detectors() {
        let mut spec = small_spec(connected_seed(12));
        spec.sweep = Some(Sweep {
            param: SweepParam::M,
            grid: vec![5.0, 20.0],
        });
        let rows = pd_sweep(&spec, &[DetectorConfig::Semi, DetectorConfig::Tv], 0.05).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.pd)));
        spec.sweep = Some(Sweep {
            param: SweepParam::M,
            grid: vec![5.0, 5.0],
        });
        assert!(pd_sweep(&spec, &[DetectorConfig::Semi], 0.05).is_err());
    }
}
