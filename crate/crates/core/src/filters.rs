//! Graph filters represented by their frequency response sampled on a
//! graph's spectrum, `h(L) = V diag(h(λ)) Vᵀ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_len, Laplacian, SignalBatch, SpectralGraph};

/// Responses with `|h| ≤ TOL_SING_REL · max|h|` are treated as exact zeros.
pub const TOL_SING_REL: f64 = 1e-10;
/// Minimum cosine between a mean vector and an eigenvector (or eigenspace).
pub const TOL_ALIGN: f64 = 1e-8;
/// Relative spread allowed inside an eigenvalue group for tabulated responses.
pub const TOL_REPEATED: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterKind {
    Gmrf,
    Tikhonov { alpha: f64 },
    Diffusion { tau: f64 },
    Allpass,
    Polynomial { coeffs: Vec<f64> },
    Tabulated,
}

/// The three smooth filter families with closed-form responses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Box1Kind {
    Gmrf,
    Tikhonov { alpha: f64 },
    Diffusion { tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFilter {
    response: Vec<f64>,
    kind: FilterKind,
    beta: f64,
}

impl SpectralFilter {
    fn finish(raw: Vec<f64>, kind: FilterKind, normalize: bool) -> Result<Self> {
        let beta = if normalize {
            let energy: f64 = raw.iter().map(|h| h * h).sum();
            if !(energy > 0.0 && energy.is_finite()) {
                return Err(Error::ZeroFilter);
            }
            (raw.len() as f64 / energy).sqrt()
        } else {
            1.0
        };
        let response = if beta == 1.0 {
            raw
        } else {
            raw.into_iter().map(|h| beta * h).collect()
        };
        Ok(Self { response, kind, beta })
    }

    pub fn allpass(sg: &SpectralGraph) -> Self {
        Self {
            response: vec![1.0; sg.n_nodes()],
            kind: FilterKind::Allpass,
            beta: 1.0,
        }
    }

    /// `h(λ) = Σ_k c_k λ^k`.
    pub fn polynomial(sg: &SpectralGraph, coeffs: &[f64], normalize: bool) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "polynomial needs at least one coefficient".into(),
            ));
        }
        let raw = sg
            .eigenvalues()
            .iter()
            .map(|&l| coeffs.iter().rev().fold(0.0, |acc, c| acc * l + c))
            .collect();
        Self::finish(
            raw,
            FilterKind::Polynomial {
                coeffs: coeffs.to_vec(),
            },
            normalize,
        )
    }

    /// Arbitrary response values, one per eigenvalue (ascending order).
    ///
    /// Values inside a group of repeated eigenvalues must agree; a response
    /// that differs there is not a function of `L`.
    pub fn tabulated(sg: &SpectralGraph, values: Vec<f64>, normalize: bool) -> Result<Self> {
        check_len(sg.n_nodes(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated response must be finite".into()));
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for g in sg.eigen_groups(sg.default_group_tol()) {
            let first = values[g.start];
            if values[g.clone()]
                .iter()
                .any(|v| (v - first).abs() > TOL_REPEATED * scale)
            {
                return Err(Error::InvalidParameter(format!(
                    "response differs across repeated eigenvalue group {}..{}",
                    g.start, g.end
                )));
            }
        }
        Self::finish(values, FilterKind::Tabulated, normalize)
    }

    pub(crate) fn from_parts(response: Vec<f64>, kind: FilterKind, beta: f64) -> Self {
        Self { response, kind, beta }
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn kind(&self) -> &FilterKind {
        &self.kind
    }

    /// Normalization scalar applied at construction (`1` when unnormalized).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// `Σ h(λ_n)²`.
    pub fn energy(&self) -> f64 {
        self.response.iter().map(|h| h * h).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            response: self.response.iter().map(|h| c * h).collect(),
            kind: self.kind.clone(),
            beta: self.beta * c,
        }
    }

    /// Indices where the response is not numerically zero.
    pub fn support(&self) -> Vec<bool> {
        let cut = TOL_SING_REL * self.max_abs();
        self.response.iter().map(|h| h.abs() > cut).collect()
    }

    fn max_abs(&self) -> f64 {
        self.response.iter().fold(0.0f64, |m, h| m.max(h.abs()))
    }

    /// Spectral pseudo-inverse: `1/h` on the support, `0` elsewhere.
    pub fn pseudo_inverse(&self) -> SpectralFilter {
        let support = self.support();
        let response = self
            .response
            .iter()
            .zip(support)
            .map(|(h, s)| if s { 1.0 / h } else { 0.0 })
            .collect();
        SpectralFilter::from_parts(response, FilterKind::Tabulated, 1.0)
    }

    /// Dense matrix `V diag(h) Vᵀ`.
    pub fn matrix(&self, sg: &SpectralGraph) -> Result<DMatrix<f64>> {
        check_len(sg.n_nodes(), self.len())?;
        let v = sg.eigenvectors();
        let mut scaled = v.clone();
        for (j, h) in self.response.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*h);
        }
        Ok(scaled * v.transpose())
    }
}

/// Builds a GMRF, Tikhonov or heat-diffusion response on `sg`'s spectrum.
///
/// With `normalize` the scale `β` is chosen so that `Σ h(λ_n)² = N`;
/// otherwise `β = 1`. The GMRF response is zero on the null space of `L`.
pub fn make_box1_filter(sg: &SpectralGraph, kind: Box1Kind, normalize: bool) -> Result<SpectralFilter> {
    let lambdas = sg.eigenvalues();
    let (raw, tag): (Vec<f64>, FilterKind) = match kind {
        Box1Kind::Gmrf => {
            let tol = sg.default_group_tol();
            let raw = lambdas
                .iter()
                .map(|&l| if l > tol { 1.0 / l.sqrt() } else { 0.0 })
                .collect();
            (raw, FilterKind::Gmrf)
        }
        Box1Kind::Tikhonov { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "tikhonov alpha must be > 0, got {alpha}"
                )));
            }
            let raw = lambdas.iter().map(|&l| 1.0 / (1.0 + alpha * l)).collect();
            (raw, FilterKind::Tikhonov { alpha })
        }
        Box1Kind::Diffusion { tau } => {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidParameter(format!("diffusion tau must be > 0, got {tau}")));
            }
            let raw = lambdas.iter().map(|&l| (-tau * l).exp()).collect();
            (raw, FilterKind::Diffusion { tau })
        }
    };
    SpectralFilter::finish(raw, tag, normalize)
}

/// Smoothness ratio `r = λ_avg⁻¹ · Σ λ_n h²(λ_n) / Σ h²(λ_n)`.
///
/// `r < 1` marks a smooth filter. The value depends only on `|h|` and is
/// invariant to rescaling the response.
pub fn smoothness_ratio(filter: &SpectralFilter, sg: &SpectralGraph) -> Result<f64> {
    check_len(sg.n_nodes(), filter.len())?;
    ratio_of_energy(filter.response().iter().map(|h| h * h), sg)
}

/// Same ratio for an already-squared response (e.g. an estimate of `σ²h²`).
pub(crate) fn ratio_of_energy(h2: impl Iterator<Item = f64>, sg: &SpectralGraph) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (e, l) in h2.zip(sg.eigenvalues()) {
        num += l * e;
        den += e;
    }
    if !(den > f64::MIN_POSITIVE) {
        return Err(Error::ZeroFilter);
    }
    Ok(num / den / sg.lambda_avg())
}

/// LPF ratio `η_k = max_{n>k} |h(λ_n)| / min_{n≤k} |h(λ_n)|` (1-based `k`).
pub fn lpf_order_ratio(filter: &SpectralFilter, k: usize) -> Result<f64> {
    eta_of_magnitudes(filter.response().iter().map(|h| h.abs()), filter.len(), k, TOL_SING_REL)
}

pub(crate) fn eta_of_magnitudes(mags: impl Iterator<Item = f64>, n: usize, k: usize, tol_rel: f64) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::InvalidOrder {
            k,
            max: n.saturating_sub(1),
        });
    }
    let mags: Vec<f64> = mags.collect();
    let low = mags[..k].iter().copied().fold(f64::INFINITY, f64::min);
    let high = mags[k..].iter().copied().fold(0.0, f64::max);
    let scale = mags.iter().copied().fold(0.0, f64::max);
    if low <= tol_rel * scale {
        return Err(Error::LowBandZero { k });
    }
    Ok(high / low)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Claim1Check {
    /// Whether `η_K² < bound` holds; when it does the filter is smooth.
    pub is_lpf_smooth: bool,
    /// Largest 1-based index with `λ_J ≤ λ_avg`.
    pub j: usize,
    pub bound: f64,
}

/// Index `J` with `λ_J ≤ λ_avg < λ_{J+1}` (1-based).
pub fn average_crossing_index(sg: &SpectralGraph) -> usize {
    let avg = sg.lambda_avg();
    sg.eigenvalues().iter().filter(|&&l| l <= avg).count()
}

/// Sufficient condition linking LPF order `K` to smoothness:
/// `η_K² < Σ_{n≤K}(λ_n − λ_avg) / Σ_{n≤J}(λ_n − λ_avg)`.
pub fn claim1_check(sg: &SpectralGraph, filter: &SpectralFilter, k: usize) -> Result<Claim1Check> {
    check_len(sg.n_nodes(), filter.len())?;
    let j = average_crossing_index(sg);
    if k == 0 {
        return Err(Error::InvalidOrder { k, max: j });
    }
    if k > j {
        return Err(Error::OrderTooHigh { k, j });
    }
    let avg = sg.lambda_avg();
    let centered: Vec<f64> = sg.eigenvalues().iter().map(|l| l - avg).collect();
    let bound = centered[..k].iter().sum::<f64>() / centered[..j].iter().sum::<f64>();
    let is_lpf_smooth = match lpf_order_ratio(filter, k) {
        Ok(eta) => eta * eta < bound,
        Err(Error::LowBandZero { .. }) => false,
        Err(e) => return Err(e),
    };
    Ok(Claim1Check {
        is_lpf_smooth,
        j,
        bound,
    })
}

/// Spectral pseudo-inverse of `h²(L)`: `1/h²` on the support, `0` elsewhere.
pub fn pseudo_inverse_square(filter: &SpectralFilter) -> SpectralFilter {
    let support = filter.support();
    let response = filter
        .response()
        .iter()
        .zip(support)
        .map(|(h, s)| if s { 1.0 / (h * h) } else { 0.0 })
        .collect();
    SpectralFilter::from_parts(response, FilterKind::Tabulated, 1.0)
}

/// `V diag(h(λ)) Vᵀ x`.
pub fn apply_filter(filter: &SpectralFilter, sg: &SpectralGraph, x: &[f64]) -> Result<Vec<f64>> {
    check_len(sg.n_nodes(), filter.len())?;
    let mut coeffs = sg.gft(x)?;
    for (c, h) in coeffs.iter_mut().zip(filter.response()) {
        *c *= h;
    }
    sg.inverse_gft(&coeffs)
}

/// `Σ_m x[m]ᵀ (Σ_k c_k L^k) x[m]` using only products with `L` (Horner
/// order, `K` products per sample), no eigendecomposition.
pub fn quadform_polynomial(laplacian: &Laplacian, coeffs: &[f64], x: &SignalBatch) -> Result<f64> {
    check_len(laplacian.n_nodes(), x.n_nodes())?;
    let Some((&top, rest)) = coeffs.split_last() else {
        return Err(Error::InvalidParameter(
            "polynomial needs at least one coefficient".into(),
        ));
    };
    let xs = x.values();
    // Rows are samples; L is symmetric so (L x)ᵀ = xᵀ L.
    let mut acc = xs * top;
    for &c in rest.iter().rev() {
        acc = &acc * laplacian.matrix() + xs * c;
    }
    Ok(xs.component_mul(&acc).sum())
}

/// Folds a non-zero mean `μ` into the filter, `h² = h̄² + μμᵀ/σ²`, which is
/// only a graph filter when `μ` lies along an eigenvector of `L`.
///
/// Alignment with a whole eigenspace of a repeated eigenvalue is accepted;
/// in that case the energy is spread over the group's basis vectors by their
/// projection coefficients, which preserves the expected total variation.
pub fn absorb_mean(sg: &SpectralGraph, h_bar: &SpectralFilter, mu: &[f64], sigma2: f64) -> Result<SpectralFilter> {
    check_len(sg.n_nodes(), h_bar.len())?;
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    let coeffs = sg.gft(mu)?;
    let norm2: f64 = mu.iter().map(|m| m * m).sum();
    if norm2 == 0.0 {
        return Ok(h_bar.clone());
    }
    let mut best = (0.0f64, None);
    for g in sg.eigen_groups(sg.default_group_tol()) {
        let proj: f64 = coeffs[g.clone()].iter().map(|c| c * c).sum();
        let cosine = (proj / norm2).sqrt();
        if cosine > best.0 {
            best = (cosine, Some(g));
        }
    }
    let (cosine, Some(group)) = best else {
        return Err(Error::MeanNotEigenvector { cosine: 0.0 });
    };
    if cosine < 1.0 - TOL_ALIGN {
        return Err(Error::MeanNotEigenvector { cosine });
    }
    let mut response = h_bar.response().to_vec();
    for n in group {
        let h2 = response[n] * response[n] + coeffs[n] * coeffs[n] / sigma2;
        response[n] = h2.sqrt();
    }
    Ok(SpectralFilter::from_parts(response, FilterKind::Tabulated, 1.0))
}

/// Serializable filter description; see [`FilterConfig::from_str`] for the
/// compact `kind[:key=val,…]` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKindName,
    #[serde(default)]
    pub params: FilterParams,
    #[serde(default)]
    pub normalize: Option<bool>,
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKindName {
    Gmrf,
    Tikhonov,
    Diffusion,
    Allpass,
    Poly,
    Tabulated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl FilterConfig {
    pub fn new(kind: FilterKindName) -> Self {
        Self {
            kind,
            params: FilterParams::default(),
            normalize: None,
            scale: None,
        }
    }

    pub fn gmrf() -> Self {
        Self::new(FilterKindName::Gmrf)
    }

    pub fn tikhonov(alpha: f64) -> Self {
        let mut c = Self::new(FilterKindName::Tikhonov);
        c.params.alpha = Some(alpha);
        c
    }

    pub fn diffusion(tau: f64) -> Self {
        let mut c = Self::new(FilterKindName::Diffusion);
        c.params.tau = Some(tau);
        c
    }

    pub fn allpass() -> Self {
        Self::new(FilterKindName::Allpass)
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = Some(normalize);
        self
    }

    /// Closed-form families and the all-pass filter are normalized unless
    /// told otherwise; polynomial and tabulated responses are taken as given.
    pub fn normalized(&self) -> bool {
        self.normalize
            .unwrap_or(!matches!(self.kind, FilterKindName::Poly | FilterKindName::Tabulated))
    }

    pub fn build(&self, sg: &SpectralGraph) -> Result<SpectralFilter> {
        let normalize = self.normalized();
        let missing = |what: &str| Error::InvalidParameter(format!("filter {} needs `{what}`", self.kind_str()));
        let filter = match self.kind {
            FilterKindName::Gmrf => make_box1_filter(sg, Box1Kind::Gmrf, normalize)?,
            FilterKindName::Tikhonov => {
                let alpha = self.params.alpha.ok_or_else(|| missing("alpha"))?;
                make_box1_filter(sg, Box1Kind::Tikhonov { alpha }, normalize)?
            }
            FilterKindName::Diffusion => {
                let tau = self.params.tau.ok_or_else(|| missing("tau"))?;
                make_box1_filter(sg, Box1Kind::Diffusion { tau }, normalize)?
            }
            // Σ 1² = N already.
            FilterKindName::Allpass => SpectralFilter::allpass(sg),
            FilterKindName::Poly => {
                let coeffs = self.params.coeffs.as_ref().ok_or_else(|| missing("coeffs"))?;
                SpectralFilter::polynomial(sg, coeffs, normalize)?
            }
            FilterKindName::Tabulated => {
                let values = self.params.values.clone().ok_or_else(|| missing("values"))?;
                SpectralFilter::tabulated(sg, values, normalize)?
            }
        };
        Ok(match self.scale {
            Some(c) if c != 1.0 => filter.scaled(c),
            _ => filter,
        })
    }

    fn kind_str(&self) -> &'static str {
        match self.kind {
            FilterKindName::Gmrf => "gmrf",
            FilterKindName::Tikhonov => "tikhonov",
            FilterKindName::Diffusion => "diffusion",
            FilterKindName::Allpass => "allpass",
            FilterKindName::Poly => "poly",
            FilterKindName::Tabulated => "tabulated",
        }
    }
}

impl fmt::Display for FilterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        if let Some(a) = self.params.alpha {
            parts.push(format!("alpha={a}"));
        }
        if let Some(t) = self.params.tau {
            parts.push(format!("tau={t}"));
        }
        if let Some(c) = &self.params.coeffs {
            parts.push(format!("coeffs={}", join(c)));
        }
        if let Some(v) = &self.params.values {
            parts.push(format!("values={}", join(v)));
        }
        if let Some(n) = self.normalize {
            parts.push(format!("normalize={n}"));
        }
        if let Some(s) = self.scale {
            parts.push(format!("scale={s}"));
        }
        if parts.is_empty() {
            write!(f, "{}", self.kind_str())
        } else {
            write!(f, "{}:{}", self.kind_str(), parts.join(","))
        }
    }
}

impl FromStr for FilterConfig {
    type Err = Error;

    /// Parses `kind[:key=val,…]`, e.g. `tikhonov:alpha=0.2` or
    /// `poly:coeffs=1,0.5`. List-valued keys (`coeffs`, `values`) absorb the
    /// bare comma-separated numbers that follow them.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParameter(format!("filter spec `{s}`: {msg}"));
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), r),
            None => (s.trim(), ""),
        };
        let kind = match kind.to_ascii_lowercase().as_str() {
            "gmrf" => FilterKindName::Gmrf,
            "tikhonov" | "tikh" => FilterKindName::Tikhonov,
            "diffusion" | "diff" | "heat" => FilterKindName::Diffusion,
            "allpass" | "all-pass" | "identity" => FilterKindName::Allpass,
            "poly" | "polynomial" => FilterKindName::Poly,
            "tabulated" | "table" => FilterKindName::Tabulated,
            other => return Err(bad(format!("unknown filter kind `{other}`"))),
        };
        let mut cfg = FilterConfig::new(kind);
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{v}` is not a number")))
        };
        let mut list: Option<&'static str> = None;
        for tok in rest.split(',').filter(|t| !t.trim().is_empty()) {
            let Some((key, val)) = tok.split_once('=') else {
                let target = match list {
                    Some("coeffs") => cfg.params.coeffs.as_mut(),
                    Some("values") => cfg.params.values.as_mut(),
                    _ => None,
                };
                target
                    .ok_or_else(|| bad(format!("stray token `{tok}`")))?
                    .push(num(tok)?);
                continue;
            };
            list = None;
            match key.trim() {
                "alpha" => cfg.params.alpha = Some(num(val)?),
                "tau" => cfg.params.tau = Some(num(val)?),
                "coeffs" => {
                    cfg.params.coeffs = Some(vec![num(val)?]);
                    list = Some("coeffs");
                }
                "values" => {
                    cfg.params.values = Some(vec![num(val)?]);
                    list = Some("values");
                }
                "normalize" => {
                    cfg.normalize = Some(
                        val.trim()
                            .parse::<bool>()
                            .map_err(|_| bad(format!("normalize must be true/false, got `{val}`")))?,
                    )
                }
                "scale" => cfg.scale = Some(num(val)?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}
