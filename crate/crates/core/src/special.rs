//! Scalar special functions the rest of the crate builds on.
//!
//! libm supplies erf/erfc/lgamma; the inverse normal CDF and the regularized
//! incomplete beta (plus its inverse) are implemented here since no no_std
//! crate on our dependency shelf carries them.

use crate::error::{Error, Result};
use alloc::format;

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
pub const SQRT_2PI: f64 = 2.506628274631000502;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / SQRT_2PI
}

/// Standard normal CDF, computed through erfc for tail accuracy.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse standard normal CDF on (0, 1).
///
/// Acklam's rational approximation (|rel err| < 1.2e-9) followed by one
/// Halley step against erfc, which brings the result to machine precision.
pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probit argument {p} outside (0,1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };

    // Halley refinement: e is the CDF error at x.
    let e = 0.5 * libm::erfc(-x / SQRT_2) - p;
    let u = e * SQRT_2PI * libm::exp(0.5 * x * x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta, modified Lentz scheme.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < 3e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log(1.0 - x) - ln_beta(a, b);
    let front = libm::exp(ln_front);
    // Continued fraction converges fast on the side below the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Inverse of the regularized incomplete beta in x for fixed a, b.
pub fn inv_inc_beta(a: f64, b: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut x;
    if a >= 1.0 && b >= 1.0 {
        // Halley iteration seeded by a normal-approximation starting point.
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = libm::sqrt(-2.0 * libm::log(pp));
        let mut xn = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            xn = -xn;
        }
        let al = (xn * xn - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = xn * libm::sqrt(al + h) / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        x = a / (a + b * libm::exp(2.0 * w));
    } else {
        let lna = libm::log(a / (a + b));
        let lnb = libm::log(b / (a + b));
        let t = libm::exp(a * lna) / a;
        let u = libm::exp(b * lnb) / b;
        let w = t + u;
        if p < t / w {
            x = libm::pow(a * w * p, 1.0 / a);
        } else {
            x = 1.0 - libm::pow(b * w * (1.0 - p), 1.0 / b);
        }
    }
    let afac = -ln_beta(a, b);
    let a1 = a - 1.0;
    let b1 = b - 1.0;
    for j in 0..12 {
        if x <= 0.0 || x >= 1.0 {
            // Newton stepped outside; fall back to robust bisection below.
            break;
        }
        let err = inc_beta(a, b, x) - p;
        let t = libm::exp(a1 * libm::log(x) + b1 * libm::log(1.0 - x) + afac);
        let u = err / t;
        let corr = u / (1.0 - 0.5 * f64::min(1.0, u * (a1 / x - b1 / (1.0 - x))));
        x -= corr;
        if x <= 0.0 {
            x = 0.5 * (x + corr);
        }
        if x >= 1.0 {
            x = 0.5 * (x + corr + 1.0);
        }
        if libm::fabs(corr) < 1e-14 * x && j > 0 {
            break;
        }
    }
    if libm::fabs(inc_beta(a, b, x) - p) > 1e-11 {
        // Bisection rescue for the rare stiff corner.
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inc_beta(a, b, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = 0.5 * (lo + hi);
    }
    x
}

/// Invert a nondecreasing continuous function: smallest-bracket root of
/// f(x) = target on [lo, hi]. Illinois-damped regula falsi, so neither
/// bracket endpoint can stall. `f(lo) <= target <= f(hi)` is required.
pub fn invert_monotone<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let (mut flo, mut fhi) = (f(lo) - target, f(hi) - target);
    if flo >= 0.0 {
        return lo;
    }
    if fhi <= 0.0 {
        return hi;
    }
    let mut best = 0.5 * (lo + hi);
    let mut best_abs = f64::INFINITY;
    for _ in 0..200 {
        let mut mid = lo - flo * (hi - lo) / (fhi - flo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let fm = f(mid) - target;
        if libm::fabs(fm) < best_abs {
            best_abs = libm::fabs(fm);
            best = mid;
        }
        if fm == 0.0 || hi - lo < 1e-15 * (1.0 + libm::fabs(mid)) {
            return best;
        }
        if fm < 0.0 {
            lo = mid;
            flo = fm;
            // Illinois: halve the opposite residual so that endpoint moves too.
            fhi *= 0.5;
        } else {
            hi = mid;
            fhi = fm;
            flo *= 0.5;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_cdf_reference_points() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((norm_cdf(-5.0) - 2.866515718791939e-7).abs() < 1e-18);
    }

    #[test]
    fn probit_inverts_cdf() {
        // Upper-tail arguments stop at 5: beyond that the f64 spacing of
        // p near 1 already costs more than the round-trip tolerance.
        for &x in &[-7.0, -6.0, -2.5, -0.3, 0.0, 0.17, 1.0, 4.4, 5.0] {
            let p = norm_cdf(x);
            let back = probit(p).unwrap();
            assert!(
                (back - x).abs() < 1e-9 * (1.0 + x.abs()),
                "probit(norm_cdf({x})) = {back}"
            );
        }
        assert!(probit(0.0).is_err());
        assert!(probit(1.0).is_err());
    }

    #[test]
    fn ln_beta_small_integers() {
        // B(2,3) = 1!2!/4! = 1/12
        assert!((ln_beta(2.0, 3.0) - (1.0_f64 / 12.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn inc_beta_closed_forms() {
        // I_x(1,1) = x, I_x(2,2) = x^2 (3 - 2x)
        for &x in &[0.05, 0.3, 0.5, 0.77, 0.99] {
            assert!((inc_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            let expect = x * x * (3.0 - 2.0 * x);
            assert!((inc_beta(2.0, 2.0, x) - expect).abs() < 1e-13);
        }
        // Symmetry point
        assert!((inc_beta(3.0, 3.0, 0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn inc_beta_matches_quadrature() {
        // Simpson's rule on the integrand as an independent check.
        let (a, b) = (2.5, 1.5);
        let pdf = |x: f64| {
            (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
        };
        for &x in &[0.2, 0.5, 0.8] {
            let n = 20_000;
            let h = x / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let l = i as f64 * h;
                let m = l + 0.5 * h;
                let r = l + h;
                let fl = if l == 0.0 { 0.0 } else { pdf(l).exp() };
                s += h / 6.0 * (fl + 4.0 * pdf(m).exp() + pdf(r).exp());
            }
            assert!(
                (inc_beta(a, b, x) - s).abs() < 1e-9,
                "x = {x}: {} vs {s}",
                inc_beta(a, b, x)
            );
        }
    }

    #[test]
    fn inv_inc_beta_round_trip() {
        for &(a, b) in &[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (8.0, 2.0), (0.7, 1.3)] {
            for &p in &[1e-6, 0.01, 0.25, 0.5, 0.9, 0.999999] {
                let x = inv_inc_beta(a, b, p);
                assert!(
                    (inc_beta(a, b, x) - p).abs() < 1e-10,
                    "a={a} b={b} p={p}: x={x} gives {}",
                    inc_beta(a, b, x)
                );
            }
        }
        // b < 1 puts an integrable spike at x = 1; there the f64 spacing of x
        // near 1 dominates, so only moderate levels are testable at 1e-10.
        for &p in &[0.01, 0.5, 0.99] {
            let x = inv_inc_beta(5.0, 0.5, p);
            assert!((inc_beta(5.0, 0.5, x) - p).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn invert_monotone_cubic() {
        let f = |x: f64| x * x * x + x;
        let x = invert_monotone(f, -3.0, 3.0, 2.0);
        assert!((f(x) - 2.0).abs() < 1e-12);
    }
}
