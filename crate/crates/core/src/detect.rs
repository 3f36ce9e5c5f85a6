//! Decision statistics: the likelihood ratio test between two filter models,
//! the semi-parametric smoothness ratio, and two baselines (raw total
//! variation and the estimated LPF ratio).

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filters::{
    eta_of_magnitudes, make_box1_filter, pseudo_inverse_square, quadform_polynomial, Box1Kind, SpectralFilter,
};
use crate::graph::{check_len, Laplacian, SignalBatch, SpectralGraph};
use crate::quadform::{lrt_threshold, semi_threshold};

/// Relative mismatch of `Σh0²` and `Σh1²` above which the LRT carries a warning.
pub const TOL_NORM: f64 = 1e-9;
/// D excludes groups whose mean square is below this fraction of the batch
/// mean square.
pub const TOL_SUPPORT_REL: f64 = 1e-12;
/// Estimated low-band magnitudes at or below this fraction of the largest
/// one count as zero for the LPF ratio.
pub const TOL_LPF_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Smooth.
    H0,
    /// Not smooth.
    H1,
}

/// `H1` iff `statistic > threshold`; ties go to `H0`.
pub fn decide(statistic: f64, threshold: f64) -> Decision {
    if statistic > threshold {
        Decision::H1
    } else {
        Decision::H0
    }
}

/// Writes non-finite floats as strings (`"inf"`, `"-inf"`, `"nan"`), which
/// JSON cannot represent natively.
pub fn serialize_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn serialize_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => serialize_f64(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub detector: String,
    #[serde(serialize_with = "serialize_f64")]
    pub statistic: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_pfa: Option<f64>,
    pub decision: Decision,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportMeta {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda_avg: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "serialize_opt_f64")]
    pub r_hat: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ReportMeta {
    fn for_batch(x: &SignalBatch, lambda_avg: f64) -> Self {
        Self {
            m: x.len(),
            n: x.n_nodes(),
            lambda_avg,
            ..Self::default()
        }
    }
}

/// How a detector's threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Calibrate analytically for this false-alarm probability.
    Pfa(f64),
    /// Use the value as given.
    Value(f64),
}

/// `S = (1/M) Σ_m x[m] x[m]ᵀ`, no mean removal.
pub fn sample_covariance(x: &SignalBatch) -> DMatrix<f64> {
    let v = x.values();
    v.transpose() * v / x.len() as f64
}

/// LRT value together with an optional warning about unequal filter norms.
#[derive(Debug, Clone, PartialEq)]
pub struct LrtValue {
    pub statistic: f64,
    pub norm_warning: Option<String>,
}

fn lrt_precheck(
    x: &SignalBatch,
    sg: &SpectralGraph,
    h0: &SpectralFilter,
    h1: &SpectralFilter,
    sigma2: f64,
) -> Result<Option<String>> {
    check_len(sg.n_nodes(), x.n_nodes())?;
    check_len(sg.n_nodes(), h0.len())?;
    check_len(sg.n_nodes(), h1.len())?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    let (e0, e1) = (h0.energy(), h1.energy());
    Ok(((e0 - e1).abs() > TOL_NORM * e0.max(e1))
        .then(|| format!("filter energies differ: sum h0^2 = {e0}, sum h1^2 = {e1}")))
}

/// Log-likelihood ratio `(M/2σ²) Tr(S_x((h0²)† − (h1²)†))`, evaluated in the
/// spectral domain as `(1/2σ²) Σ_n ((h0²)† − (h1²)†)_n Σ_m x̃_n²[m]`.
pub fn lrt_statistic(
    x: &SignalBatch,
    sg: &SpectralGraph,
    h0: &SpectralFilter,
    h1: &SpectralFilter,
    sigma2: f64,
) -> Result<LrtValue> {
    let norm_warning = lrt_precheck(x, sg, h0, h1, sigma2)?;
    let (p0, p1) = (pseudo_inverse_square(h0), pseudo_inverse_square(h1));
    let coeffs = x.gft(sg)?;
    let mut stat = 0.0;
    for n in 0..sg.n_nodes() {
        let d = p0.response()[n] - p1.response()[n];
        if d != 0.0 {
            stat += d * coeffs.column(n).norm_squared();
        }
    }
    Ok(LrtValue {
        statistic: stat / (2.0 * sigma2),
        norm_warning,
    })
}

/// Same statistic via the trace with the sample covariance.
pub fn lrt_statistic_trace(
    x: &SignalBatch,
    sg: &SpectralGraph,
    h0: &SpectralFilter,
    h1: &SpectralFilter,
    sigma2: f64,
) -> Result<f64> {
    lrt_precheck(x, sg, h0, h1, sigma2)?;
    let diff = pseudo_inverse_square(h0).matrix(sg)? - pseudo_inverse_square(h1).matrix(sg)?;
    let s = sample_covariance(x);
    Ok(x.len() as f64 / (2.0 * sigma2) * (s * diff).trace())
}

/// Same statistic as a difference of projected energies
/// `‖((h0²)†)^{1/2} S^{1/2}‖_F² − ‖((h1²)†)^{1/2} S^{1/2}‖_F²`.
pub fn lrt_statistic_frobenius(
    x: &SignalBatch,
    sg: &SpectralGraph,
    h0: &SpectralFilter,
    h1: &SpectralFilter,
    sigma2: f64,
) -> Result<f64> {
    lrt_precheck(x, sg, h0, h1, sigma2)?;
    let eig = sample_covariance(x).symmetric_eigen();
    let mut root = eig.eigenvectors.clone();
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        root.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    let s_half = &root * eig.eigenvectors.transpose();
    let a0 = h0.pseudo_inverse().matrix(sg)?;
    let a1 = h1.pseudo_inverse().matrix(sg)?;
    let e0 = (a0 * &s_half).norm_squared();
    let e1 = (a1 * &s_half).norm_squared();
    Ok(x.len() as f64 / (2.0 * sigma2) * (e0 - e1))
}

/// LRT of a normalized closed-form smooth filter against the all-pass one.
pub fn lrt_box1(x: &SignalBatch, sg: &SpectralGraph, kind: Box1Kind, sigma2: f64) -> Result<LrtValue> {
    let h0 = make_box1_filter(sg, kind, true)?;
    lrt_statistic(x, sg, &h0, &SpectralFilter::allpass(sg), sigma2)
}

/// Polynomial coefficients of `(h0²)† − I` in `L` for the normalized GMRF
/// and Tikhonov filters with scale `β`; `None` for diffusion.
pub fn box1_lrt_coeffs(kind: Box1Kind, beta: f64) -> Option<Vec<f64>> {
    let ib2 = 1.0 / (beta * beta);
    match kind {
        Box1Kind::Gmrf => Some(vec![-1.0, ib2]),
        Box1Kind::Tikhonov { alpha } => Some(vec![ib2 - 1.0, 2.0 * alpha * ib2, alpha * alpha * ib2]),
        Box1Kind::Diffusion { .. } => None,
    }
}

/// EVD-free LRT for the GMRF and Tikhonov cases:
/// `(1/2σ²) Σ_m xᵀ p(L) x` with `p` from [`box1_lrt_coeffs`].
pub fn lrt_box1_polynomial(
    x: &SignalBatch,
    laplacian: &Laplacian,
    kind: Box1Kind,
    beta: f64,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    let coeffs = box1_lrt_coeffs(kind, beta)
        .ok_or_else(|| Error::InvalidParameter("diffusion LRT has no polynomial form".into()))?;
    Ok(quadform_polynomial(laplacian, &coeffs, x)? / (2.0 * sigma2))
}

/// LRT with a calibrated or given threshold.
pub fn lrt_detect(
    x: &SignalBatch,
    sg: &SpectralGraph,
    h0: &SpectralFilter,
    h1: &SpectralFilter,
    sigma2: f64,
    threshold: Threshold,
) -> Result<DetectionReport> {
    let value = lrt_statistic(x, sg, h0, h1, sigma2)?;
    let (thr, target) = match threshold {
        Threshold::Pfa(p) => (lrt_threshold(h0, h1, x.len(), p)?, Some(p)),
        Threshold::Value(v) => (v, None),
    };
    let mut meta = ReportMeta::for_batch(x, sg.lambda_avg());
    meta.warnings.extend(value.norm_warning);
    Ok(DetectionReport {
        detector: "lrt".into(),
        statistic: value.statistic,
        threshold: thr,
        target_pfa: target,
        decision: decide(value.statistic, thr),
        meta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MLFilterEstimate {
    /// Estimates of `σ²h²(λ_n)`; zero outside the support.
    pub scaled_response_sq: Vec<f64>,
    pub support: Vec<bool>,
    pub groups: Vec<Range<usize>>,
}

/// Constrained ML estimate of `σ²h²(λ_n)`: per-frequency mean squares of the
/// GFT coefficients, averaged within groups of repeated eigenvalues.
///
/// Support membership is decided per group so that entries of a group stay
/// equal. Defaults: `tol_group = 1e-8 λ_N`, `tol_support = 1e-12 ×` batch mean
/// square.
pub fn ml_filter_estimate(
    x: &SignalBatch,
    sg: &SpectralGraph,
    tol_group: Option<f64>,
    tol_support: Option<f64>,
) -> Result<MLFilterEstimate> {
    check_len(sg.n_nodes(), x.n_nodes())?;
    let coeffs = x.gft(sg)?;
    let m = x.len() as f64;
    let raw: Vec<f64> = (0..sg.n_nodes()).map(|n| coeffs.column(n).norm_squared() / m).collect();
    let tol_support = tol_support.unwrap_or_else(|| TOL_SUPPORT_REL * raw.iter().sum::<f64>() / raw.len() as f64);
    let groups = sg.eigen_groups(tol_group.unwrap_or_else(|| sg.default_group_tol()));
    let mut est = raw;
    let mut support = vec![false; est.len()];
    for g in &groups {
        let mean = if g.len() == 1 {
            est[g.start]
        } else {
            est[g.clone()].iter().sum::<f64>() / g.len() as f64
        };
        let keep = mean > tol_support;
        for n in g.clone() {
            est[n] = if keep { mean } else { 0.0 };
            support[n] = keep;
        }
    }
    Ok(MLFilterEstimate {
        scaled_response_sq: est,
        support,
        groups,
    })
}

/// `r̂ = λ_avg⁻¹ Σ_m x[m]ᵀ L x[m] / Σ_m ‖x[m]‖²`, computed from `L` alone.
pub fn semi_r_hat(x: &SignalBatch, laplacian: &Laplacian) -> Result<f64> {
    check_len(laplacian.n_nodes(), x.n_nodes())?;
    let energy = x.energy();
    if !(energy > 0.0) {
        return Err(Error::ZeroSignal);
    }
    Ok(tv_sum(x, laplacian) / energy / laplacian.lambda_avg())
}

/// `r̂` from the constrained ML filter estimate, `Σ λ_n ĉ_n / (λ_avg Σ ĉ_n)`.
pub fn semi_r_hat_spectral(x: &SignalBatch, sg: &SpectralGraph) -> Result<f64> {
    let est = ml_filter_estimate(x, sg, None, None)?;
    let den: f64 = est.scaled_response_sq.iter().sum();
    if !(den > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let num: f64 = est
        .scaled_response_sq
        .iter()
        .zip(sg.eigenvalues())
        .map(|(c, l)| c * l)
        .sum();
    Ok(num / den / sg.lambda_avg())
}

/// Semi-parametric detector: declares "not smooth" when `r̂` exceeds the
/// threshold calibrated for white noise filtered by `(L†)^{1/2}`, the
/// least favorable smooth model. The reported threshold is on the `r̂` scale.
pub fn semi_detect(x: &SignalBatch, sg: &SpectralGraph, threshold: Threshold) -> Result<DetectionReport> {
    let r_hat = semi_r_hat(x, sg.laplacian())?;
    let (thr, target) = match threshold {
        Threshold::Pfa(p) => (semi_threshold(sg, x.len(), p)? / sg.lambda_avg(), Some(p)),
        Threshold::Value(v) => (v, None),
    };
    let mut meta = ReportMeta::for_batch(x, sg.lambda_avg());
    meta.r_hat = Some(r_hat);
    Ok(DetectionReport {
        detector: "semi".into(),
        statistic: r_hat,
        threshold: thr,
        target_pfa: target,
        decision: decide(r_hat, thr),
        meta,
    })
}

fn tv_sum(x: &SignalBatch, laplacian: &Laplacian) -> f64 {
    let v = x.values();
    v.component_mul(&(v * laplacian.matrix())).sum()
}

/// `Σ_m x[m]ᵀ L x[m]`.
pub fn naive_tv_statistic(x: &SignalBatch, laplacian: &Laplacian) -> Result<f64> {
    check_len(laplacian.n_nodes(), x.n_nodes())?;
    Ok(tv_sum(x, laplacian))
}

pub fn tv_detect(x: &SignalBatch, sg: &SpectralGraph, threshold: f64) -> Result<DetectionReport> {
    let stat = naive_tv_statistic(x, sg.laplacian())?;
    Ok(DetectionReport {
        detector: "tv".into(),
        statistic: stat,
        threshold,
        target_pfa: None,
        decision: decide(stat, threshold),
        meta: ReportMeta::for_batch(x, sg.lambda_avg()),
    })
}

/// `η̂_k` from the estimated magnitudes `|σ̂ĥ(λ_n)|`; `+∞` when a low-band
/// estimate vanishes.
pub fn lpf_eta_hat(x: &SignalBatch, sg: &SpectralGraph, k: usize) -> Result<f64> {
    let n = sg.n_nodes();
    if k == 0 || k >= n {
        return Err(Error::InvalidOrder {
            k,
            max: n.saturating_sub(1),
        });
    }
    let est = ml_filter_estimate(x, sg, None, None)?;
    let mags = est.scaled_response_sq.iter().map(|c| c.sqrt());
    match eta_of_magnitudes(mags, n, k, TOL_LPF_REL) {
        Ok(eta) => Ok(eta),
        Err(Error::LowBandZero { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Default LPF order, `⌊N/2⌋`.
pub fn default_lpf_order(n: usize) -> usize {
    (n / 2).max(1)
}

pub fn lpf_eta_hat_detect(x: &SignalBatch, sg: &SpectralGraph, k: usize, gamma: f64) -> Result<DetectionReport> {
    let eta = lpf_eta_hat(x, sg, k)?;
    Ok(DetectionReport {
        detector: "lpf".into(),
        statistic: eta,
        threshold: gamma,
        target_pfa: None,
        decision: decide(eta, gamma),
        meta: ReportMeta::for_batch(x, sg.lambda_avg()),
    })
}
