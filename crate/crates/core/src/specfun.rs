//! Special-function kernels for the moment formulas: scaled modified Bessel
//! functions of the first kind and the confluent hypergeometric function 1F1.
//!
//! Everything is self-contained (series plus asymptotic expansions) and
//! generic over the scalar type so the table builders can run the same
//! kernels in double-double precision.

use crate::dd::{CompensatedSum, Real};
use crate::error::{Error, Result};

/// Crossover between the power series and the asymptotic expansion for
/// `exp(-lambda) I_p(lambda)`. Below the crossover the series has no
/// cancellation; above it the neglected second exponential branch of the
/// asymptotics contributes relative `exp(-2 lambda) <= 9e-27`.
const BESSEL_SERIES_CUTOFF: f64 = 30.0;

/// Crossover between the Kummer-transformed series and the large-argument
/// algebraic expansion of `1F1(a; b; -x)`. At the crossover the neglected
/// exponential branch is `exp(-60) ~ 9e-27` relative.
const HYP1F1_ASYM_CUTOFF: f64 = 60.0;

/// `exp(-lambda) I_p(lambda)` for `p` in {0, 1, 2}, `lambda >= 0`.
///
/// The scaling keeps the value in [0, 1] for all admissible `lambda`, so
/// moment ratios like `I_1/I_0` can be formed without overflow.
pub fn bessel_i_scaled(p: u32, lambda: f64) -> Result<f64> {
    if p > 2 {
        return Err(Error::Domain(format!("bessel order p={p} not in {{0,1,2}}")));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!(
            "bessel argument lambda={lambda} must be finite and >= 0"
        )));
    }
    Ok(bessel_i_scaled_any(p, lambda))
}

/// Unvalidated generic core of [`bessel_i_scaled`].
pub(crate) fn bessel_i_scaled_any<S: Real>(p: u32, lambda: S) -> S {
    if lambda.to_f64() <= BESSEL_SERIES_CUTOFF {
        bessel_series(p, lambda) * (-lambda).exp()
    } else {
        bessel_asym_scaled(p, lambda)
    }
}

/// Power series `I_p(lambda) = sum_k (lambda/2)^(2k+p) / (k! (k+p)!)`.
/// All terms are positive; safe for `lambda` up to the crossover.
fn bessel_series<S: Real>(p: u32, lambda: S) -> S {
    let half = lambda * S::from_f64(0.5);
    let x2 = half * half;
    let mut term = half.powi(p as i32);
    for j in 1..=p {
        term = term / S::from_f64(j as f64);
    }
    let mut sum = CompensatedSum::new();
    sum.add(term);
    for k in 1..400 {
        let kf = k as f64;
        term = term * x2 / (S::from_f64(kf) * S::from_f64(kf + p as f64));
        sum.add(term);
        if term.to_f64().abs() < S::SERIES_TOL * sum.value().to_f64().abs() {
            break;
        }
    }
    sum.value()
}

/// Asymptotic expansion of `exp(-lambda) I_p(lambda)` in `1/lambda`,
/// truncated at the first term below the scalar's series tolerance (or at
/// the smallest term if the tolerance is below the series floor).
fn bessel_asym_scaled<S: Real>(p: u32, lambda: S) -> S {
    let mu = (4 * p * p) as f64;
    let inv8l = S::one() / (lambda * S::from_f64(8.0));
    let mut term = S::one();
    let mut sum = CompensatedSum::new();
    sum.add(term);
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term = -term * S::from_f64(mu - odd * odd) * inv8l / S::from_f64(kf);
        let mag = term.to_f64().abs();
        if mag >= prev {
            break; // divergence onset: stop at the optimal truncation
        }
        sum.add(term);
        prev = mag;
        if mag < S::SERIES_TOL * sum.value().to_f64().abs() {
            break;
        }
    }
    let two_pi_l = S::from_f64(2.0) * S::pi_const() * lambda;
    sum.value() / two_pi_l.sqrt()
}

/// `1F1(a; b; z)` for `a > 0`, `b >= a`, any finite `z`.
///
/// For `z <= 0` the Kummer transform `1F1(a;b;z) = e^z 1F1(b-a;b;-z)` makes
/// every series term positive; for large `|z|` the algebraic large-argument
/// expansion takes over. Errors with [`Error::Overflow`] when the value
/// exceeds the double range (use [`hyp1f1_scaled`] for ratios instead).
pub fn hyp1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    validate_hyp_params(a, b)?;
    if !z.is_finite() {
        return Err(Error::Domain(format!("hyp1f1 argument z={z} not finite")));
    }
    if z <= 0.0 {
        return Ok(hyp1f1_nonpos(a, b, -z));
    }
    if b == a {
        if z > 709.0 {
            return Err(Error::Overflow(format!("hyp1f1({a};{b};{z}) = exp({z})")));
        }
        return Ok(z.exp());
    }
    // Kummer: 1F1(a;b;z) = e^z 1F1(b-a;b;-z); the second factor never
    // overflows, so the overflow test reduces to the exponential.
    let v: f64 = hyp1f1_nonpos(b - a, b, z);
    if z + v.ln() > 709.7 {
        return Err(Error::Overflow(format!(
            "hyp1f1({a};{b};{z}) exceeds double range"
        )));
    }
    if z > 700.0 {
        let h = (0.5 * z).exp();
        Ok(v * h * h)
    } else {
        Ok(v * z.exp())
    }
}

/// `exp(-max(z,0)) 1F1(a; b; z)`: finite for every finite `z`. Moment
/// ratios built from scaled values at a common `z` are exact because the
/// shared exponential cancels.
pub fn hyp1f1_scaled(a: f64, b: f64, z: f64) -> Result<f64> {
    validate_hyp_params(a, b)?;
    if !z.is_finite() {
        return Err(Error::Domain(format!("hyp1f1 argument z={z} not finite")));
    }
    Ok(hyp1f1_scaled_any(a, b, z))
}

/// Unvalidated generic core of [`hyp1f1_scaled`].
pub(crate) fn hyp1f1_scaled_any<S: Real>(a: f64, b: f64, z: S) -> S {
    let zf = z.to_f64();
    if zf <= 0.0 {
        hyp1f1_nonpos_gen(a, b, -z)
    } else if b == a {
        S::one()
    } else {
        hyp1f1_nonpos_gen(b - a, b, z)
    }
}

fn validate_hyp_params(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b >= a) {
        return Err(Error::Domain(format!(
            "hyp1f1 parameters (a={a}, b={b}) outside supported range a > 0, b >= a"
        )));
    }
    Ok(())
}

/// `1F1(a; b; -x)` for `x >= 0` in plain doubles.
fn hyp1f1_nonpos(a: f64, b: f64, x: f64) -> f64 {
    hyp1f1_nonpos_gen(a, b, x)
}

/// Generic `1F1(a; b; -x)`, `x >= 0`.
pub(crate) fn hyp1f1_nonpos_gen<S: Real>(a: f64, b: f64, x: S) -> S {
    let xf = x.to_f64();
    debug_assert!(xf >= 0.0);
    if xf == 0.0 {
        return S::one();
    }
    if xf < HYP1F1_ASYM_CUTOFF {
        (-x).exp() * hyp_series_pos(b - a, b, x)
    } else if b == a {
        (-x).exp()
    } else {
        hyp_asym_neg(a, b, x)
    }
}

/// Ascending series `sum_k (alpha)_k x^k / ((beta)_k k!)` for `x >= 0`,
/// `alpha >= 0`: all terms positive, compensated summation.
fn hyp_series_pos<S: Real>(alpha: f64, beta: f64, x: S) -> S {
    let mut term = S::one();
    let mut sum = CompensatedSum::new();
    sum.add(term);
    for k in 0..1000 {
        let kf = k as f64;
        term = term * S::from_f64(alpha + kf) * x / (S::from_f64(beta + kf) * S::from_f64(kf + 1.0));
        sum.add(term);
        if term.to_f64().abs() < S::SERIES_TOL * sum.value().to_f64().abs() {
            break;
        }
    }
    sum.value()
}

/// Large-argument expansion
/// `1F1(a;b;-x) ~ Gamma(b)/Gamma(b-a) x^-a sum_k (a)_k (a-b+1)_k / (k! x^k)`,
/// valid up to a relative `exp(-x)` from the neglected exponential branch.
fn hyp_asym_neg<S: Real>(a: f64, b: f64, x: S) -> S {
    let mut term = S::one();
    let mut sum = CompensatedSum::new();
    sum.add(term);
    let invx = S::one() / x;
    let mut prev = f64::INFINITY;
    for k in 0..80 {
        let kf = k as f64;
        term = term * S::from_f64(a + kf) * S::from_f64(a - b + 1.0 + kf) * invx
            / S::from_f64(kf + 1.0);
        let mag = term.to_f64().abs();
        if mag >= prev {
            break;
        }
        sum.add(term);
        prev = mag;
        if mag < S::SERIES_TOL * sum.value().to_f64().abs() {
            break;
        }
    }
    gamma_ratio::<S>(b, b - a) * pow_neg(x, a) * sum.value()
}

/// `x^-a` for positive `x`; exact half-integer exponents go through
/// sqrt + integer powers so the double-double path keeps full precision.
fn pow_neg<S: Real>(x: S, a: f64) -> S {
    let two_a = 2.0 * a;
    if two_a.fract() == 0.0 && two_a.abs() < 64.0 {
        x.sqrt().powi(-(two_a as i32))
    } else {
        S::from_f64(x.to_f64().powf(-a))
    }
}

/// `Gamma(b) / Gamma(d)` with exact rational (times sqrt(pi)) values for
/// half-integer arguments; Lanczos fallback otherwise.
fn gamma_ratio<S: Real>(b: f64, d: f64) -> S {
    match (half_integer_gamma(b), half_integer_gamma(d)) {
        (Some((vb, pb)), Some((vd, pd))) => {
            let ratio = S::from_f64(vb) / S::from_f64(vd);
            let sqrt_pi = S::pi_const().sqrt();
            match (pb, pd) {
                (true, false) => ratio * sqrt_pi,
                (false, true) => ratio / sqrt_pi,
                _ => ratio,
            }
        }
        _ => S::from_f64(gamma_lanczos(b) / gamma_lanczos(d)),
    }
}

/// For half-integer `x > 0` returns `(r, has_sqrt_pi)` with
/// `Gamma(x) = r * sqrt(pi)^has_sqrt_pi` and `r` exactly representable.
fn half_integer_gamma(x: f64) -> Option<(f64, bool)> {
    let two_x = 2.0 * x;
    if x <= 0.0 || two_x.fract() != 0.0 || two_x > 40.0 {
        return None;
    }
    let t = two_x as u32;
    if t % 2 == 0 {
        let n = t / 2; // Gamma(n) = (n-1)!
        let mut f = 1.0;
        for j in 2..n {
            f *= j as f64;
        }
        Some((f, false))
    } else {
        let n = (t - 1) / 2; // Gamma(n + 1/2) = (2n)! / (4^n n!) * sqrt(pi)
        let mut r = 1.0;
        for j in 0..n {
            r *= (j as f64) + 0.5;
        }
        Some((r, true))
    }
}

/// Lanczos approximation (g = 7, 9 terms), positive arguments only.
fn gamma_lanczos(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
}

/// pi as an associated constant of the scalar type (full precision for
/// double-double).
pub(crate) trait PiConst {
    fn pi_const() -> Self;
}

impl<S: Real> PiConst for S {
    fn pi_const() -> S {
        // Reconstruct pi to the scalar's precision: hi + lo parts are both
        // exactly representable doubles.
        S::from_f64(std::f64::consts::PI) + S::from_f64(1.224_646_799_147_353_2e-16)
    }
}
