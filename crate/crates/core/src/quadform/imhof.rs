//! Distribution of `Q = Σ_k w_k χ²_{ν_k}` by numerical inversion of the
//! characteristic function (Imhof's formula):
//!
//! `P(Q > x) = 1/2 + (1/π) ∫_0^∞ sin θ(u) / (u ρ(u)) du`
//!
//! with `θ(u) = Σ (ν_k/2) atan(w_k u) − x u / 2` and
//! `ρ(u) = Π (1 + w_k² u²)^{ν_k/4}`.

use std::f64::consts::PI;

use super::quadrature::{integrate, wynn_epsilon};
use crate::error::{Error, Result};

/// Target absolute error of the integral.
const TOL_INTEGRAL: f64 = 1e-10;
/// Results whose error bound exceeds this are reported as failures.
const MAX_ERROR: f64 = 1e-6;
/// Chernoff bounds below this are returned as exact 0/1.
const TOL_CHERNOFF: f64 = 1e-16;
const MAX_PANELS: usize = 20_000;
const MAX_WYNN_TERMS: usize = 400;

/// Distinct weights with their degrees of freedom; weights scaled so that
/// `max |w| = 1`.
#[derive(Debug, Clone)]
pub(crate) struct Terms {
    w: Vec<f64>,
    half_dof: Vec<f64>,
    scale: f64,
}

impl Terms {
    /// `weights` must be finite and nonzero.
    pub(crate) fn new(weights: &[f64], dof: usize) -> Self {
        let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let mut sorted: Vec<f64> = weights.iter().map(|w| w / scale).collect();
        sorted.sort_by(f64::total_cmp);
        let (mut w, mut half_dof) = (Vec::new(), Vec::<f64>::new());
        for v in sorted {
            match w.last() {
                Some(&last) if last == v => *half_dof.last_mut().unwrap() += dof as f64 / 2.0,
                _ => {
                    w.push(v);
                    half_dof.push(dof as f64 / 2.0);
                }
            }
        }
        Self { w, half_dof, scale }
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.w.iter().copied().zip(self.half_dof.iter().copied())
    }

    fn integrand(&self, x: f64, u: f64) -> f64 {
        if u == 0.0 {
            return self.iter().map(|(w, d)| d * w).sum::<f64>() - 0.5 * x;
        }
        let mut theta = -0.5 * x * u;
        let mut ln_rho = 0.0;
        for (w, d) in self.iter() {
            let wu = w * u;
            theta += d * wu.atan();
            ln_rho += 0.5 * d * (wu * wu).ln_1p();
        }
        theta.sin() / (u * ln_rho.exp())
    }

    /// `1/(u ρ(u))`, which bounds the integrand's magnitude.
    fn envelope(&self, u: f64) -> f64 {
        let ln_rho: f64 = self.iter().map(|(w, d)| 0.5 * d * (w * w * u * u).ln_1p()).sum();
        (-ln_rho).exp() / u
    }

    /// Logarithmic decay rate `-d ln env / d ln u`; increasing in `u`.
    fn decay_rate(&self, u: f64) -> f64 {
        1.0 + self
            .iter()
            .map(|(w, d)| {
                let s = w * w * u * u;
                d * s / (1.0 + s)
            })
            .sum::<f64>()
    }

    /// Rigorous bound on `∫_U^∞ env(u) du`: since the decay rate `p` is
    /// increasing, `env(u) ≤ env(U) (U/u)^{p(U)}` for `u ≥ U`.
    fn tail_bound(&self, u: f64) -> f64 {
        u * self.envelope(u) / (self.decay_rate(u) - 1.0)
    }

    /// Cumulant generating function of `Q`, finite for `1 − 2 s w_k > 0`.
    fn cgf(&self, s: f64) -> f64 {
        -self.iter().map(|(w, d)| d * (-2.0 * s * w).ln_1p()).sum::<f64>()
    }

    /// `min_s exp(K(s) − s x)`, a bound on `P(Q ≥ x)`; `None` when `Q` has no
    /// positive weight (the mgf is then finite for all `s` and the bound is
    /// not needed).
    fn chernoff_upper(&self, x: f64) -> Option<f64> {
        let wmax = self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if wmax <= 0.0 {
            return None;
        }
        let mean: f64 = self.iter().map(|(w, d)| 2.0 * d * w).sum();
        if x <= mean {
            return Some(1.0);
        }
        let f = |s: f64| self.cgf(s) - s * x;
        let (mut lo, mut hi) = (0.0, (1.0 - 1e-12) / (2.0 * wmax));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..200 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = f(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = f(d);
            }
        }
        Some(fc.min(fd).min(0.0).exp())
    }

    fn negated(&self) -> Self {
        let mut w: Vec<f64> = self.w.iter().map(|w| -w).collect();
        let mut half_dof = self.half_dof.clone();
        w.reverse();
        half_dof.reverse();
        Self {
            w,
            half_dof,
            scale: self.scale,
        }
    }

    /// `P(Q ≤ delta)` on the original (unscaled) weights.
    pub(crate) fn cdf(&self, delta: f64) -> Result<f64> {
        let x = delta / self.scale;
        let all_pos = self.w.iter().all(|&w| w > 0.0);
        let all_neg = self.w.iter().all(|&w| w < 0.0);
        if all_pos && x <= 0.0 {
            return Ok(0.0);
        }
        if all_neg && x >= 0.0 {
            return Ok(1.0);
        }
        if self.chernoff_upper(x).is_some_and(|b| b < TOL_CHERNOFF) {
            return Ok(1.0);
        }
        if self.negated().chernoff_upper(-x).is_some_and(|b| b < TOL_CHERNOFF) {
            return Ok(0.0);
        }
        let (integral, error) = self.imhof_integral(x)?;
        if !(error <= MAX_ERROR) {
            return Err(Error::NumericalFailure { error_bound: error });
        }
        let tail = 0.5 + integral / PI;
        Ok((1.0 - tail).clamp(0.0, 1.0))
    }

    fn imhof_integral(&self, x: f64) -> Result<(f64, f64)> {
        let f = |u: f64| self.integrand(x, u);
        // Panels grow geometrically, but never span more than two periods of
        // the linear phase term so each stays cheap to resolve.
        let cap = if x != 0.0 { 8.0 * PI / x.abs() } else { f64::INFINITY };
        let panel_tol = TOL_INTEGRAL * 1e-2;
        let (mut a, mut width) = (0.0, cap.min(1.0));
        let (mut total, mut error) = (0.0, 0.0);
        for _ in 0..MAX_PANELS {
            let e = integrate(&f, a, a + width, panel_tol, 200);
            total += e.value;
            error += e.error;
            a += width;
            let tail = self.tail_bound(a);
            if tail < TOL_INTEGRAL {
                return Ok((total, error + tail));
            }
            width = a.min(cap);
            if width == cap {
                // Remaining envelope decays like u^{-p}; when too many capped
                // panels would be needed, sum half periods and extrapolate.
                let p = self.decay_rate(a);
                let reach = a * (tail / TOL_INTEGRAL).powf(1.0 / (p - 1.0));
                if (reach - a) / cap > 200.0 {
                    let (rest, rest_err) = self.oscillatory_tail(&f, a, x)?;
                    return Ok((total + rest, error + rest_err));
                }
            }
        }
        Err(Error::NumericalFailure {
            error_bound: error + self.tail_bound(a),
        })
    }

    /// `∫_a^∞ f` for a slowly decaying integrand dominated by `sin(−x u/2)`.
    fn oscillatory_tail(&self, f: &impl Fn(f64) -> f64, a: f64, x: f64) -> Result<(f64, f64)> {
        let half_period = 2.0 * PI / x.abs();
        let mut sums: Vec<f64> = Vec::new();
        let (mut s, mut quad_err) = (0.0, 0.0);
        let mut estimates: Vec<f64> = Vec::new();
        let mut lo = a;
        for _ in 0..MAX_WYNN_TERMS {
            let e = integrate(f, lo, lo + half_period, TOL_INTEGRAL * 1e-3, 100);
            s += e.value;
            quad_err += e.error;
            lo += half_period;
            sums.push(s);
            let tail = self.tail_bound(lo);
            if tail < TOL_INTEGRAL {
                return Ok((s, quad_err + tail));
            }
            if sums.len() >= 5 {
                let window = &sums[sums.len().saturating_sub(41)..];
                estimates.push(wynn_epsilon(window));
                if let [.., p2, p1, p0] = estimates[..] {
                    let spread = (p0 - p1).abs().max((p1 - p2).abs());
                    if spread < TOL_INTEGRAL {
                        return Ok((p0, quad_err + spread));
                    }
                }
            }
        }
        let spread = match estimates[..] {
            [.., p1, p0] => (p0 - p1).abs(),
            _ => f64::INFINITY,
        };
        match estimates.last() {
            Some(&est) if spread <= MAX_ERROR => Ok((est, quad_err + spread)),
            _ => Err(Error::NumericalFailure {
                error_bound: quad_err + spread,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn single_weight_matches_chi_square() {
        for m in [1usize, 2, 3, 5, 30] {
            let law = Terms::new(&[1.0], m);
            let chi = ChiSquared::new(m as f64).unwrap();
            for x in [0.01, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0, 80.0] {
                assert_relative_eq!(law.cdf(x).unwrap(), chi.cdf(x), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn repeated_weights_merge() {
        let t = Terms::new(&[0.5, 0.5, 0.5], 4);
        assert_eq!(t.w, vec![1.0]);
        assert_eq!(t.half_dof, vec![6.0]);
        let chi = ChiSquared::new(12.0).unwrap();
        assert_relative_eq!(t.cdf(6.0).unwrap(), chi.cdf(12.0), epsilon = 1e-9);
    }

    #[test]
    fn negative_weight_is_mirror() {
        let chi = ChiSquared::new(3.0).unwrap();
        let t = Terms::new(&[-2.0], 3);
        for x in [-20.0, -6.0, -1.0, -0.1] {
            assert_relative_eq!(t.cdf(x).unwrap(), 1.0 - chi.cdf(-x / 2.0), epsilon = 1e-9);
        }
        assert_eq!(t.cdf(0.0).unwrap(), 1.0);
    }

    #[test]
    fn difference_of_two_exponentials() {
        // w = (1, -1), M = 2: Q = 2(E1 − E2) with Ei ~ Exp(1), i.e. Laplace(0, 2)
        let t = Terms::new(&[1.0, -1.0], 2);
        for x in [-7.0, -2.0, -0.3, 0.0, 0.3, 1.0, 4.0, 9.0] {
            let want = if x < 0.0 {
                0.5 * (x / 2.0f64).exp()
            } else {
                1.0 - 0.5 * (-x / 2.0f64).exp()
            };
            assert_relative_eq!(t.cdf(x).unwrap(), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn chernoff_shortcuts_return_exact_limits() {
        let t = Terms::new(&[1.0, 0.5], 2);
        assert_eq!(t.cdf(500.0).unwrap(), 1.0);
        let t = Terms::new(&[1.0, -0.5], 2);
        assert_eq!(t.cdf(-500.0).unwrap(), 0.0);
    }
}
