//! Gauss–Kronrod (7, 15) quadrature with adaptive bisection, and the Wynn
//! epsilon algorithm for accelerating sums of oscillating panel integrals.

// QUADPACK qk15 abscissae and weights.
#![allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// One 15-point Kronrod rule on `[a, b]` with the QUADPACK error heuristic.
pub(crate) fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let (res_k, res_abs, res_asc) = (res_k * half, res_abs * half.abs(), res_asc * half.abs());
    let mut err = (res_k - res_g * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let uflow = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if res_abs > uflow {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Estimate {
        value: res_k,
        error: err,
    }
}

/// Globally adaptive integration: repeatedly bisects the sub-interval with the
/// largest error estimate until the summed estimate is below `abs_tol`.
pub(crate) fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, max_intervals: usize) -> Estimate {
    let first = gk15(f, a, b);
    if first.error <= abs_tol {
        return first;
    }
    let mut parts = vec![(a, b, first)];
    let mut error = first.error;
    while error > abs_tol && parts.len() < max_intervals {
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error.total_cmp(&y.1 .2.error))
            .expect("non-empty");
        let (lo, hi, worst) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval can no longer be split in floating point
            parts.push((
                lo,
                hi,
                Estimate {
                    value: worst.value,
                    error: worst.error,
                },
            ));
            break;
        }
        let (l, r) = (gk15(f, lo, mid), gk15(f, mid, hi));
        error += l.error + r.error - worst.error;
        parts.push((lo, mid, l));
        parts.push((mid, hi, r));
    }
    let value = parts.iter().map(|p| p.2.value).sum();
    let error = parts.iter().map(|p| p.2.error).sum();
    Estimate { value, error }
}

/// Wynn epsilon extrapolation of the limit of a sequence of partial sums.
/// Returns the estimate from the deepest even column.
pub(crate) fn wynn_epsilon(sums: &[f64]) -> f64 {
    let n = sums.len();
    if n < 3 {
        return *sums.last().unwrap_or(&0.0);
    }
    // prev = column k-1, cur = column k; column -1 is all zeros
    let mut prev = vec![0.0; n + 1];
    let mut cur = sums.to_vec();
    let mut best = *sums.last().unwrap();
    let mut k = 0;
    while cur.len() >= 2 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            if diff == 0.0 {
                // exact convergence in this column
                return if k % 2 == 0 { cur[i + 1] } else { best };
            }
            next.push(prev[i + 1] + 1.0 / diff);
        }
        k += 1;
        prev = cur;
        cur = next;
        if k % 2 == 0 {
            if let Some(&v) = cur.last() {
                if v.is_finite() {
                    best = v;
                }
            }
        }
    }
    best
}
