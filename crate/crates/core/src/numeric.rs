//! Scalar numerics shared by the planning modules: link functions, normal
//! distribution helpers, Gauss–Legendre panels, adaptive Gauss–Kronrod
//! integration and bracketed root finding.

use crate::error::{Error, Result};
use statrs::function::erf;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(expit(x))` without cancellation for large |x|.
#[inline]
pub fn ln_expit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Remainder of Stirling's approximation,
/// `ln Γ(x) - [(x - 1/2) ln x - x + ln(2π)/2]`.
pub fn ln_gamma_correction(x: f64) -> f64 {
    if x >= 10.0 {
        let r = 1.0 / x;
        let r2 = r * r;
        r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
    } else {
        statrs::function::gamma::ln_gamma(x) - ((x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// 10-point Gauss–Legendre abscissae and weights on [-1, 1].
pub const GL10: [(f64, f64); 10] = [
    (-0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
    (-0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (-0.679_409_568_299_024_4, 0.219_086_362_515_982),
    (-0.433_395_394_129_247_2, 0.269_266_719_309_996_3),
    (-0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
    (0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
    (0.433_395_394_129_247_2, 0.269_266_719_309_996_3),
    (0.679_409_568_299_024_4, 0.219_086_362_515_982),
    (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
];

/// `S[j][k] = ∫_{-1}^{x_j} ℓ_k(t) dt` for the Lagrange basis `ℓ_k` on the GL10
/// abscissae, so `∫_{-1}^{x_j} f ≈ Σ_k S[j][k] f(x_k)`.
pub fn gl10_partial_weights() -> &'static [[f64; 10]; 10] {
    static S: std::sync::OnceLock<[[f64; 10]; 10]> = std::sync::OnceLock::new();
    S.get_or_init(|| {
        let lagrange = |k: usize, t: f64| -> f64 {
            (0..10)
                .filter(|&m| m != k)
                .map(|m| (t - GL10[m].0) / (GL10[k].0 - GL10[m].0))
                .product()
        };
        let mut s = [[0.0; 10]; 10];
        for (j, row) in s.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = gauss_legendre(-1.0, GL10[j].0, |t| lagrange(k, t));
            }
        }
        s
    })
}

/// 10-point Gauss–Legendre estimate of `∫_a^b f`.
#[inline]
pub fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL10.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-8,
            max_intervals: 2000,
        }
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration over a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: QuadTol) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut parts = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::numeric("integrand produced a non-finite value"));
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= tol.max_intervals {
            return Err(Error::numeric(format!(
                "adaptive quadrature did not converge on [{a}, {b}]: estimate {total:.6e}, error {err:.2e}"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::numeric(format!(
            "root not bracketed on [{a}, {b}] (f = {fa:.3e}, {fb:.3e})"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::numeric(format!("non-finite function value at x = {b}")));
        }
    }
    Err(Error::numeric("Brent iteration limit reached"))
}

/// Widens `[lo, hi]` geometrically around its midpoint until `f` changes sign,
/// keeping the interval inside `limits`.
pub fn expand_bracket<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    limits: (f64, f64),
    max_steps: usize,
) -> Option<(f64, f64)> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..max_steps {
        if flo.is_finite() && fhi.is_finite() && flo.signum() != fhi.signum() {
            return Some((lo, hi));
        }
        let width = hi - lo;
        if lo > limits.0 {
            lo = (lo - width).max(limits.0);
            flo = f(lo);
        }
        if hi < limits.1 {
            hi = (hi + width).min(limits.1);
            fhi = f(hi);
        }
        if lo <= limits.0 && hi >= limits.1 && flo.signum() == fhi.signum() {
            return None;
        }
    }
    (flo.signum() != fhi.signum()).then_some((lo, hi))
}

/// Midranks (1-based) with ties averaged.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&midranks(x), &midranks(y))
}

/// Empirical quantile with the inverse-CDF convention: the smallest sorted
/// value `v` whose empirical CDF is at least `q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn link_functions_invert() {
        for &p in &[1e-9, 0.01, 0.3, 0.5, 0.77, 1.0 - 1e-9] {
            assert_relative_eq!(expit(logit(p)), p, max_relative = 1e-9);
        }
        assert_relative_eq!(ln_expit(-800.0), -800.0);
        assert_relative_eq!(ln_expit(2.0), expit(2.0).ln(), max_relative = 1e-14);
    }

    #[test]
    fn normal_helpers() {
        assert_relative_eq!(norm_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-10);
        assert_relative_eq!(norm_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-9);
        assert_relative_eq!(norm_quantile(0.1), -norm_quantile(0.9), epsilon = 1e-12);
    }

    #[test]
    fn stirling_remainder_is_continuous() {
        use statrs::function::gamma::ln_gamma;
        let lo = ln_gamma_correction(10.0 - 1e-12);
        let hi = ln_gamma_correction(10.0);
        assert_relative_eq!(lo, hi, epsilon = 1e-12);
        let x: f64 = 37.5;
        let direct = ln_gamma(x) - ((x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(ln_gamma_correction(x), direct, epsilon = 1e-12);
    }

    #[test]
    fn gauss_kronrod_matches_closed_forms() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, QuadTol::default()).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
        let v = integrate(norm_pdf, -12.0, 12.0, QuadTol::default()).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-10);
        // integrable endpoint singularity
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, QuadTol { max_intervals: 5000, ..Default::default() }).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn partial_weights_integrate_polynomials() {
        let s = gl10_partial_weights();
        for (j, row) in s.iter().enumerate() {
            let x = GL10[j].0;
            let approx: f64 = row.iter().zip(&GL10).map(|(w, &(t, _))| w * t.powi(9)).sum();
            assert_relative_eq!(approx, (x.powi(10) - 1.0) / 10.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn brent_finds_roots() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 100).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-12);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn bracket_expansion() {
        let (lo, hi) = expand_bracket(|x| x - 50.0, 0.0, 1.0, (-1e3, 1e3), 60).unwrap();
        assert!(lo <= 50.0 && hi >= 50.0);
        assert!(expand_bracket(|x| x * x + 1.0, 0.0, 1.0, (-10.0, 10.0), 60).is_none());
    }

    #[test]
    fn quantile_convention() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_sorted(&v, 0.9), 9.0);
        assert_eq!(quantile_sorted(&v, 0.91), 10.0);
        assert_eq!(quantile_sorted(&v, 0.05), 1.0);
    }

    #[test]
    fn ranks_and_spearman() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(spearman(&x, &[10.0, 20.0, 25.0, 100.0]), 1.0);
        assert_relative_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), -1.0);
    }
}
