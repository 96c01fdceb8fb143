//! Log-Gamma and the modified Bessel function of the second kind `K_nu(z)`
//! for real order `nu >= 0` and real argument `z > 0`.
//!
//! `K_nu` is evaluated with Temme's method: the order is split as
//! `nu = n + mu` with `|mu| <= 1/2`, the pair `K_mu, K_{mu+1}` is computed by
//! Temme's series for `z < 2` and by Steed's continued fraction (CF2) for
//! `z >= 2`, and forward recurrence (stable for `K`) lifts the order to `nu`.
//! Everything is carried with a separate log-scale so that `ln K_nu(z)` stays
//! finite where `K_nu(z)` itself would under- or overflow.

use std::f64::consts::PI;

use crate::error::{domain, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Taylor coefficients of `1/Gamma(1 + x)` beyond the linear term.
const RGAMMA_C2: f64 = -0.655_878_071_520_253_8;
const RGAMMA_C3: f64 = -0.042_002_635_034_095_2;
const RGAMMA_C4: f64 = 0.166_538_611_382_291_5;

pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("ln_gamma argument", x));
    }
    Ok(lgamma(x))
}

/// Unchecked `ln Gamma(x)` for `x > 0`.
#[inline]
pub(crate) fn lgamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn bessel_k(nu: f64, z: f64) -> Result<f64> {
    check_args(nu, z)?;
    let (m, scale) = k_scaled(nu, z);
    Ok(m * scale.exp())
}

/// `ln K_nu(z)`, finite for all `z > 0` (no underflow at large `z`, no
/// overflow at large order and small `z`).
pub fn ln_bessel_k(nu: f64, z: f64) -> Result<f64> {
    check_args(nu, z)?;
    let (m, scale) = k_scaled(nu, z);
    Ok(m.ln() + scale)
}

fn check_args(nu: f64, z: f64) -> Result<()> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(domain("Bessel order", nu));
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain("Bessel argument", z));
    }
    Ok(())
}

/// Returns `(m, s)` with `K_nu(z) = m * exp(s)` and `m` of moderate size.
pub(crate) fn k_scaled(nu: f64, z: f64) -> (f64, f64) {
    let n = (nu + 0.5).floor();
    let mu = nu - n;
    let (mut k_lo, mut k_hi, mut scale) = if z < 2.0 {
        let (a, b) = temme_series(mu, z);
        (a, b, 0.0)
    } else {
        let (a, b) = steed_cf2(mu, z);
        (a, b, -z)
    };
    let two_over_z = 2.0 / z;
    for i in 1..=(n as usize) {
        let next = (mu + i as f64) * two_over_z * k_hi + k_lo;
        k_lo = k_hi;
        k_hi = next;
        if k_hi > 1e250 {
            k_lo *= 1e-250;
            k_hi *= 1e-250;
            scale += 250.0 * std::f64::consts::LN_10;
        }
    }
    (k_lo, scale)
}

/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` for Temme's series, where
/// `gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)` and
/// `gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    if mu.abs() < 1e-3 {
        let m2 = mu * mu;
        let odd = mu * (EULER_GAMMA + RGAMMA_C3 * m2);
        let even = 1.0 + RGAMMA_C2 * m2 + RGAMMA_C4 * m2 * m2;
        let gampl = even + odd;
        let gammi = even - odd;
        (-(EULER_GAMMA + RGAMMA_C3 * m2), even, gampl, gammi)
    } else {
        let gampl = (-lgamma(1.0 + mu)).exp();
        let gammi = (-lgamma(1.0 - mu)).exp();
        ((gammi - gampl) / (2.0 * mu), 0.5 * (gammi + gampl), gampl, gammi)
    }
}

/// `(K_mu(z), K_{mu+1}(z))` for `|mu| <= 1/2`, `0 < z < 2`.
fn temme_series(mu: f64, z: f64) -> (f64, f64) {
    let half = 0.5 * z;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -half.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let h2 = half * half;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= h2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / z)
}

/// Scaled pair `(e^z K_mu(z), e^z K_{mu+1}(z))` for `|mu| <= 1/2`, `z >= 2`.
fn steed_cf2(mu: f64, z: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let kmu = (PI / (2.0 * z)).sqrt() / s;
    let kmu1 = kmu * (mu + z + 0.5 - h) / z;
    (kmu, kmu1)
}
