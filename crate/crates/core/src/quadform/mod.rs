//! Weighted sums of independent chi-square variables,
//! `Q = Σ_n w_n c_n` with `c_n ~ χ²_M`, and threshold calibration for the
//! detectors built on them.

mod imhof;
mod quadrature;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filters::{pseudo_inverse_square, SpectralFilter};
use crate::graph::{check_len, SpectralGraph};

const BISECT_MAX_ITER: usize = 80;
const BISECT_REL_TOL: f64 = 1e-10;
/// Bracket half-width multiplier: `Σ_{w>0} w·M·50` is far beyond any
/// quantile that matters for a false-alarm target.
const BRACKET_SCALE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadFormLaw {
    dof: usize,
    weights: Vec<f64>,
}

impl QuadFormLaw {
    /// Zero weights are dropped; at least one nonzero weight must remain.
    pub fn new(dof: usize, weights: impl IntoIterator<Item = f64>) -> Result<Self> {
        if dof == 0 {
            return Err(Error::InvalidParameter("degrees of freedom must be >= 1".into()));
        }
        let weights: Vec<f64> = weights.into_iter().filter(|w| *w != 0.0).collect();
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight {w} is not finite")));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("quadratic form has no nonzero weight".into()));
        }
        Ok(Self { dof, weights })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.dof as f64 * self.weights.iter().sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.dof as f64 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// `P(Q ≤ delta)` by characteristic-function inversion.
    pub fn cdf(&self, delta: f64) -> Result<f64> {
        if delta.is_nan() {
            return Err(Error::InvalidParameter("delta is NaN".into()));
        }
        if delta == f64::INFINITY {
            return Ok(1.0);
        }
        if delta == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        imhof::Terms::new(&self.weights, self.dof).cdf(delta)
    }

    /// `P(Q > delta)`.
    pub fn tail(&self, delta: f64) -> Result<f64> {
        Ok(1.0 - self.cdf(delta)?)
    }

    /// Three-moment approximation: `Q ≈ b + a χ²_ν` matching mean, variance
    /// and third cumulant (a normal law when the skew vanishes).
    pub fn cdf_approx(&self, delta: f64) -> f64 {
        let m = self.dof as f64;
        let k1 = self.mean();
        let k2 = self.variance();
        let k3 = 8.0 * m * self.weights.iter().map(|w| w * w * w).sum::<f64>();
        if k3.abs() < 1e-12 * k2.powf(1.5) {
            return Normal::new(k1, k2.sqrt()).expect("positive variance").cdf(delta);
        }
        let a = k3 / (4.0 * k2);
        let nu = 8.0 * k2.powi(3) / (k3 * k3);
        let b = k1 - a * nu;
        let y = (delta - b) / a;
        let chi = ChiSquared::new(nu).expect("positive dof");
        let f = if y <= 0.0 { 0.0 } else { chi.cdf(y) };
        if a > 0.0 {
            f
        } else {
            1.0 - f
        }
    }
}

pub fn quadform_cdf(law: &QuadFormLaw, delta: f64) -> Result<f64> {
    law.cdf(delta)
}

pub fn quadform_cdf_approx(law: &QuadFormLaw, delta: f64) -> f64 {
    law.cdf_approx(delta)
}

/// `w_n = h_a(λ_n) · h_b²(λ_n)` on the support of `h_b`.
pub fn quadform_weights(h_a: &SpectralFilter, h_b: &SpectralFilter) -> Result<Vec<f64>> {
    check_len(h_a.len(), h_b.len())?;
    let support = h_b.support();
    if !support.iter().any(|&s| s) {
        return Err(Error::EmptySupport);
    }
    Ok(h_a
        .response()
        .iter()
        .zip(h_b.response())
        .zip(support)
        .filter(|(_, s)| *s)
        .map(|((a, b), _)| a * b * b)
        .collect())
}

/// Weights `h0²((h0²)† − γ (h1²)†)` on the support of `h0`; `γ = 1` gives the
/// LRT law.
fn ratio_weights(h0: &SpectralFilter, h1: &SpectralFilter, gamma: f64) -> Result<Vec<f64>> {
    check_len(h0.len(), h1.len())?;
    let p0 = pseudo_inverse_square(h0);
    let p1 = pseudo_inverse_square(h1);
    let support = h0.support();
    if !support.iter().any(|&s| s) {
        return Err(Error::EmptySupport);
    }
    Ok(h0
        .response()
        .iter()
        .zip(p0.response().iter().zip(p1.response()))
        .zip(support)
        .filter(|(_, s)| *s)
        .map(|((h, (a, b)), _)| h * h * (a - gamma * b))
        .collect())
}

/// Tail `P(Σ w_n c_n > delta)`, including the degenerate all-zero law whose
/// statistic is identically 0.
fn tail_or_degenerate(dof: usize, weights: Vec<f64>, delta: f64) -> Result<f64> {
    if weights.iter().all(|w| *w == 0.0) {
        return Ok(if 0.0 > delta { 1.0 } else { 0.0 });
    }
    QuadFormLaw::new(dof, weights)?.tail(delta)
}

/// False-alarm probability `P(LRT > γ | H0)`.
///
/// Under H0 the GFT coefficients are `x̃_n = σ h0(λ_n) z_n`, so
/// `LRT = (1/2σ²) Σ_n ((h0²)† − (h1²)†)_n Σ_m x̃_n²[m]
///      = (1/2) Σ_n h0²((h0²)† − (h1²)†)_n c_n` with `c_n ~ χ²_M`:
/// σ² cancels and `P(LRT > γ) = P(Q > 2γ)`.
pub fn lrt_tail_prob(h0: &SpectralFilter, h1: &SpectralFilter, m: usize, gamma: f64) -> Result<f64> {
    tail_or_degenerate(m, ratio_weights(h0, h1, 1.0)?, 2.0 * gamma)
}

/// Smallest `γ` (to bisection tolerance) with `lrt_tail_prob(γ) ≤ target_pfa`.
/// Returns the lower bracket edge when even that meets the target.
pub fn lrt_threshold(h0: &SpectralFilter, h1: &SpectralFilter, m: usize, target_pfa: f64) -> Result<f64> {
    check_pfa(target_pfa)?;
    let weights = ratio_weights(h0, h1, 1.0)?;
    let mf = m as f64;
    let lo_q = weights.iter().filter(|w| **w < 0.0).sum::<f64>() * mf * BRACKET_SCALE;
    let hi_q = weights.iter().filter(|w| **w > 0.0).sum::<f64>() * mf * BRACKET_SCALE;
    if weights.iter().all(|w| *w == 0.0) {
        // statistic ≡ 0: any γ ≥ 0 has zero false alarms
        return Ok(0.0);
    }
    let law = QuadFormLaw::new(m, weights)?;
    let tail = |gamma: f64| law.tail(2.0 * gamma);
    bisect_decreasing(tail, lo_q.min(0.0) / 2.0, hi_q / 2.0, target_pfa)
}

/// Threshold on `Σ_m xᵀLx / Σ_m ‖x‖²` (not divided by `λ_avg`) such that
/// `P(Σ_m xᵀ(L − γI)x > 0) = target_pfa` for `x ~ N(0, σ²L†)`.
///
/// The law of the quadratic form itself moves with `γ` (weights
/// `1 − γ/λ_n` over the nonzero eigenvalues), so each bisection step rebuilds
/// it.
pub fn semi_threshold(sg: &SpectralGraph, m: usize, target_pfa: f64) -> Result<f64> {
    check_pfa(target_pfa)?;
    let tol = sg.default_group_tol();
    let nonzero: Vec<f64> = sg.eigenvalues().iter().copied().filter(|&l| l > tol).collect();
    let distinct = sg
        .eigen_groups(tol)
        .iter()
        .filter(|g| sg.eigenvalues()[g.start] > tol)
        .count();
    if distinct < 2 {
        return Err(Error::DegenerateSpectrum(format!(
            "only {distinct} distinct nonzero eigenvalue(s); the smoothness statistic is constant"
        )));
    }
    let (lo, hi) = (nonzero[0], *nonzero.last().unwrap());
    let tail = |gamma: f64| semi_tail_prob(&nonzero, m, gamma);
    bisect_decreasing(tail, lo, hi, target_pfa)
}

/// False-alarm probability of the semi-parametric test at `γ` (same scale
/// as [`semi_threshold`]).
pub fn semi_tail(sg: &SpectralGraph, m: usize, gamma: f64) -> Result<f64> {
    let tol = sg.default_group_tol();
    let nonzero: Vec<f64> = sg.eigenvalues().iter().copied().filter(|&l| l > tol).collect();
    semi_tail_prob(&nonzero, m, gamma)
}

/// `P(Σ_n (1 − γ/λ_n) c_n > 0)` over the given nonzero eigenvalues.
fn semi_tail_prob(nonzero: &[f64], m: usize, gamma: f64) -> Result<f64> {
    tail_or_degenerate(m, nonzero.iter().map(|l| 1.0 - gamma / l).collect(), 0.0)
}

/// False-alarm probability of the ratio test with unknown σ²:
/// `P(Σ_n h0²((h0²)† − γ(h1²)†) c_n > 0)`, which does not involve σ².
pub fn glrt_tail_prob(h0: &SpectralFilter, h1: &SpectralFilter, m: usize, gamma: f64) -> Result<f64> {
    tail_or_degenerate(m, ratio_weights(h0, h1, gamma)?, 0.0)
}

/// Weights of the ratio-test law; exposed for cross-checking laws.
pub fn glrt_weights(h0: &SpectralFilter, h1: &SpectralFilter, gamma: f64) -> Result<Vec<f64>> {
    ratio_weights(h0, h1, gamma)
}

fn check_pfa(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "target false-alarm probability must be in (0, 1), got {p}"
        )))
    }
}

/// Bisection for the smallest `x` in `[lo, hi]` with `tail(x) ≤ target`,
/// `tail` non-increasing. Returns the upper end of the final bracket.
fn bisect_decreasing(tail: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, target: f64) -> Result<f64> {
    if tail(lo)? <= target {
        return Ok(lo);
    }
    let width = hi - lo;
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..BISECT_MAX_ITER {
        if hi - lo <= BISECT_REL_TOL * width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if tail(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{make_box1_filter, Box1Kind};
    use crate::graph::{Edge, WeightedGraph};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared as ChiDraw, Distribution};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn path(n: usize) -> SpectralGraph {
        let edges = (1..n)
            .map(|i| Edge {
                src: i - 1,
                dst: i,
                weight: 1.0,
            })
            .collect();
        SpectralGraph::new(WeightedGraph::new(n, edges).unwrap()).unwrap()
    }

    #[test]
    fn weights_examples() {
        let sg = path(3);
        let one = SpectralFilter::allpass(&sg);
        assert_eq!(quadform_weights(&one, &one).unwrap(), vec![1.0; 3]);
        let hb = SpectralFilter::tabulated(&sg, vec![0.0, 1.0, 2.0], false).unwrap();
        assert_eq!(quadform_weights(&one, &hb).unwrap(), vec![1.0, 4.0]);
        let zero = SpectralFilter::tabulated(&sg, vec![0.0; 3], false).unwrap();
        assert_eq!(quadform_weights(&one, &zero), Err(Error::EmptySupport));

        // h_a = λ − γ, h_b² = λ† gives 1 − γ/λ_n on the nonzero spectrum
        let gamma = 0.7;
        let ha = SpectralFilter::tabulated(&sg, sg.eigenvalues().iter().map(|l| l - gamma).collect(), false).unwrap();
        let hb = make_box1_filter(&sg, Box1Kind::Gmrf, false).unwrap();
        let w = quadform_weights(&ha, &hb).unwrap();
        let want: Vec<f64> = sg.eigenvalues()[1..].iter().map(|l| 1.0 - gamma / l).collect();
        assert_eq!(w.len(), 2);
        for (a, b) in w.iter().zip(want) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cdf_examples() {
        let law = QuadFormLaw::new(2, [1.0]).unwrap();
        assert_relative_eq!(law.cdf(2.0 * 2f64.ln()).unwrap(), 0.5, epsilon = 1e-10);
        let law = QuadFormLaw::new(3, [0.4; 5]).unwrap();
        let chi = ChiSquared::new(15.0).unwrap();
        for d in [1.0, 3.0, 6.0, 9.0] {
            assert_relative_eq!(law.cdf(d).unwrap(), chi.cdf(d / 0.4), epsilon = 1e-9);
        }
        assert!(QuadFormLaw::new(3, [0.0, 0.0]).is_err());
        assert_eq!(QuadFormLaw::new(3, [0.0, 2.0]).unwrap().weights(), &[2.0]);
    }

    #[test]
    fn mixed_sign_cdf_matches_simulation() {
        let law = QuadFormLaw::new(3, [1.0, -0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let chi = ChiDraw::new(3.0).unwrap();
        let n = 1_000_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| chi.sample(&mut rng) - 0.5 * chi.sample(&mut rng))
            .collect();
        draws.sort_by(f64::total_cmp);
        for d in [-4.0, -1.0, 0.0, 0.5, 1.5, 3.0, 6.0, 12.0] {
            let emp = draws.partition_point(|v| *v <= d) as f64 / n as f64;
            assert!((law.cdf(d).unwrap() - emp).abs() < 0.005, "delta {d}");
        }
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let k = rng.random_range(1..6);
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = [1, 2, 5][rng.random_range(0..3)];
            let law = QuadFormLaw::new(m, w).unwrap();
            let sd = law.variance().sqrt();
            let mut prev = 0.0;
            for i in -40..=40 {
                let d = law.mean() + sd * i as f64 * 0.2;
                let c = law.cdf(d).unwrap();
                assert!((0.0..=1.0).contains(&c));
                // integration accuracy is ~1e-10 absolute
                assert!(c >= prev - 1e-10, "non-monotone at {d}: {c} < {prev}");
                prev = c;
            }
        }
    }

    #[test]
    fn positive_weight_limits() {
        let law = QuadFormLaw::new(4, [0.3, 1.2, 2.0]).unwrap();
        assert_eq!(law.cdf(0.0).unwrap(), 0.0);
        let m = 4.0f64;
        let sum: f64 = law.weights().iter().sum();
        assert!(law.cdf(sum * (m + 10.0 * (2.0 * m).sqrt())).unwrap() > 0.999);
    }

    #[test]
    fn approximation_is_close() {
        let law = QuadFormLaw::new(10, [1.0, 0.8, 0.3, -0.2]).unwrap();
        for d in [0.0, 5.0, 10.0, 15.0, 25.0] {
            assert!((law.cdf(d).unwrap() - law.cdf_approx(d)).abs() < 0.01);
        }
        let law = QuadFormLaw::new(10, [-1.0, -0.5]).unwrap();
        for d in [-25.0, -15.0, -5.0] {
            assert!((law.cdf(d).unwrap() - law.cdf_approx(d)).abs() < 0.01);
        }
    }

    #[test]
    fn lrt_tail_examples() {
        let sg = path(3);
        let h = make_box1_filter(&sg, Box1Kind::Tikhonov { alpha: 1.0 }, true).unwrap();
        assert_eq!(lrt_tail_prob(&h, &h, 5, 0.1).unwrap(), 0.0);
        assert_eq!(lrt_tail_prob(&h, &h, 5, 0.0).unwrap(), 0.0);
        assert_eq!(lrt_tail_prob(&h, &h, 5, -0.1).unwrap(), 1.0);
        let a = SpectralFilter::allpass(&sg);
        assert_eq!(lrt_tail_prob(&h, &a, 5, 1e6).unwrap(), 0.0);
        assert_eq!(lrt_tail_prob(&h, &a, 5, -1e6).unwrap(), 1.0);
    }

    #[test]
    fn lrt_tail_matches_simulation_on_path() {
        let sg = path(3);
        let h0 = make_box1_filter(&sg, Box1Kind::Gmrf, true).unwrap();
        let h1 = SpectralFilter::allpass(&sg);
        let m = 10;
        let p = lrt_tail_prob(&h0, &h1, m, 0.0).unwrap();
        // simulate in the spectral domain: x̃_n = h0_n z_n, σ² = 1
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p0 = pseudo_inverse_square(&h0);
        let p1 = pseudo_inverse_square(&h1);
        let trials = 100_000;
        let normal = rand_distr::StandardNormal;
        let mut hits = 0;
        for _ in 0..trials {
            let mut stat = 0.0;
            for _ in 0..m {
                for n in 0..3 {
                    let z: f64 = normal.sample(&mut rng);
                    let xt = h0.response()[n] * z;
                    stat += 0.5 * (p0.response()[n] - p1.response()[n]) * xt * xt;
                }
            }
            hits += (stat > 0.0) as usize;
        }
        assert!((p - hits as f64 / trials as f64).abs() < 0.01);
    }

    #[test]
    fn lrt_threshold_meets_target() {
        let sg = path(5);
        let h0 = make_box1_filter(&sg, Box1Kind::Tikhonov { alpha: 0.5 }, true).unwrap();
        let h1 = SpectralFilter::allpass(&sg);
        for target in [0.001, 0.05, 0.5] {
            let g = lrt_threshold(&h0, &h1, 7, target).unwrap();
            let p = lrt_tail_prob(&h0, &h1, 7, g).unwrap();
            assert!(p <= target && target - p < 1e-6, "target {target} got {p}");
        }
        // target near 1 drives γ toward the lower bracket edge
        let w = ratio_weights(&h0, &h1, 1.0).unwrap();
        let edge = w.iter().filter(|w| **w < 0.0).sum::<f64>() * 7.0 * 50.0 / 2.0;
        let near_one = lrt_threshold(&h0, &h1, 7, 1.0 - 1e-15).unwrap();
        assert!(near_one >= edge && near_one < lrt_threshold(&h0, &h1, 7, 0.999).unwrap());
        assert_eq!(bisect_decreasing(|_| Ok(0.2), -3.0, 5.0, 0.5).unwrap(), -3.0);
    }

    #[test]
    fn lrt_threshold_median_for_symmetric_law() {
        // weights ±1 over two indices give a law symmetric about 0
        let sg = path(2);
        let h0 = SpectralFilter::tabulated(&sg, vec![1.0, 1.0], false).unwrap();
        let h1 = SpectralFilter::tabulated(&sg, vec![(0.5f64).sqrt(), 1e6], false).unwrap();
        let w = ratio_weights(&h0, &h1, 1.0).unwrap();
        assert_relative_eq!(w[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(w[1], 1.0, epsilon = 1e-9);
        let g = lrt_threshold(&h0, &h1, 4, 0.5).unwrap();
        assert!(g.abs() < 1e-6, "median {g}");
    }

    #[test]
    fn semi_threshold_examples() {
        assert!(matches!(
            semi_threshold(&path(2), 5, 0.05),
            Err(Error::DegenerateSpectrum(_))
        ));
        let sg = path(3);
        let l = sg.eigenvalues().to_vec();
        let nz = &l[1..];
        assert_eq!(semi_tail_prob(nz, 5, l[2]).unwrap(), 0.0);
        let at_low = semi_tail_prob(nz, 5, l[1]).unwrap();
        assert_eq!(at_low, 1.0);
        let g = semi_threshold(&sg, 5, 0.05).unwrap();
        assert!(g > l[1] && g < l[2]);
        assert!((semi_tail_prob(nz, 5, g).unwrap() - 0.05).abs() < 1e-6);
    }

    #[test]
    fn glrt_examples() {
        let sg = path(4);
        let h = make_box1_filter(&sg, Box1Kind::Tikhonov { alpha: 0.3 }, true).unwrap();
        assert_eq!(glrt_tail_prob(&h, &h, 6, 1.0).unwrap(), 0.0);
        let gm = make_box1_filter(&sg, Box1Kind::Gmrf, false).unwrap();
        let a = SpectralFilter::allpass(&sg);
        assert!(glrt_tail_prob(&gm, &a, 6, 1e9).unwrap() < 1e-12);
        let gamma = 1.3;
        let w = glrt_weights(&gm, &a, gamma).unwrap();
        let want: Vec<f64> = sg.eigenvalues()[1..].iter().map(|l| 1.0 - gamma / l).collect();
        for (a, b) in w.iter().zip(&want) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_relative_eq!(
            glrt_tail_prob(&gm, &a, 6, gamma).unwrap(),
            semi_tail_prob(&sg.eigenvalues()[1..], 6, gamma).unwrap(),
            epsilon = 1e-12
        );
    }
}
