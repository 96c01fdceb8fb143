//! Return density with the variance frozen at its stationary law:
//!
//! ```text
//! P_t(x) = int_0^inf Pi(v) N(x; -a(v) t, v t) dv
//! ```
//!
//! [`BoPdf`] evaluates the mixture integral by adaptive quadrature for any
//! model and scheme. [`HestonPdf`] is the closed Bessel-K form of the Heston
//! mixture, [`TsallisParams`] the closed cut-power-law form of the Hull-White
//! mixture with zero drift.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::models::{DriftScheme, ModelKind, ModelParams, ModelSpec};
use crate::quad::{self, QuadOptions};
use crate::special_fn::{lgamma, ln_bessel_k};
use crate::stationary::StationaryDist;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Base truncation of the `u = ln(v / theta)` integration range.
const U_RANGE: f64 = 40.0;
const U_PIECES: usize = 64;

/// Integration range in `u`. Near `x = 0` the integrand decays only like
/// `v^(alpha - 1/2)` (Heston, small v) or `v^-(beta + 1/2)` (Hull-White,
/// large v), so the truncation is widened for shapes close to those edges.
fn u_bounds(dist: &StationaryDist) -> (f64, f64) {
    match dist.kind() {
        ModelKind::Heston => {
            let decay = dist.shape() - 0.5;
            let lo = if decay > 0.0 { (U_RANGE / decay).clamp(U_RANGE, 700.0) } else { 700.0 };
            (-lo, U_RANGE)
        }
        ModelKind::HullWhite => (-U_RANGE, (U_RANGE / (dist.shape() + 0.5)).clamp(U_RANGE, 700.0)),
    }
}

#[derive(Debug, Clone, Copy)]
enum VarianceLaw {
    Stationary(StationaryDist),
    /// `kappa = 0`: variance pinned at theta.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct BoPdf {
    spec: ModelSpec,
    t: f64,
    law: VarianceLaw,
    quad: QuadOptions,
}

impl BoPdf {
    pub fn new(spec: ModelSpec, t: f64) -> Result<Self> {
        spec.params.validate()?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParam(format!("lag t must be > 0, got {t}")));
        }
        let law = if spec.params.is_deterministic() {
            VarianceLaw::Fixed(spec.params.theta)
        } else {
            VarianceLaw::Stationary(StationaryDist::from_model(&spec.params, spec.kind)?)
        };
        Ok(Self {
            spec,
            t,
            law,
            quad: QuadOptions::with_tolerances(1e-10, 1e-8).pieces(U_PIECES),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn lag(&self) -> f64 {
        self.t
    }

    /// Same model at another lag.
    pub fn at_lag(&self, t: f64) -> Result<Self> {
        Self::new(self.spec, t)
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.quad.abs_tol = abs_tol;
        self.quad.rel_tol = rel_tol;
        self
    }

    #[inline]
    fn drift(&self, v: f64) -> f64 {
        match self.spec.scheme {
            DriftScheme::Ito => 0.5 * v,
            DriftScheme::ZeroDrift => 0.0,
        }
    }

    #[inline]
    fn ln_gauss(&self, x: f64, v: f64) -> f64 {
        let vt = v * self.t;
        let m = x + self.drift(v) * self.t;
        -0.5 * (LN_2PI + vt.ln()) - m * m / (2.0 * vt)
    }

    /// Mixture integral evaluated by quadrature in `u = ln(v / theta)`.
    pub fn pdf_general(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidParam(format!("x must be finite, got {x}")));
        }
        match self.law {
            VarianceLaw::Fixed(v) => Ok(self.ln_gauss(x, v).exp()),
            VarianceLaw::Stationary(dist) => {
                let theta = dist.theta();
                let integrand = |u: f64| {
                    let v = theta * u.exp();
                    (dist.ln_pdf_unchecked(v) + v.ln() + self.ln_gauss(x, v)).exp()
                };
                let (lo, hi) = u_bounds(&dist);
                Ok(quad::integrate(integrand, lo, hi, self.quad)?.value)
            }
        }
    }

    /// `P(X <= x)`, by the same quadrature over the conditional normal CDF.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let cond = |v: f64| {
            let vt = v * self.t;
            let z = (x + self.drift(v) * self.t) / vt.sqrt();
            0.5 * erfc(-z / std::f64::consts::SQRT_2)
        };
        match self.law {
            VarianceLaw::Fixed(v) => Ok(cond(v)),
            VarianceLaw::Stationary(dist) => {
                let theta = dist.theta();
                let integrand = |u: f64| {
                    let v = theta * u.exp();
                    (dist.ln_pdf_unchecked(v) + v.ln()).exp() * cond(v)
                };
                let (lo, hi) = u_bounds(&dist);
                let r = quad::integrate(integrand, lo, hi, self.quad)?;
                Ok(r.value.clamp(0.0, 1.0))
            }
        }
    }

    /// Tabulates the CDF on `n` equally spaced points of `[lo, hi]` for fast
    /// repeated lookups by linear interpolation.
    pub fn cdf_table(&self, lo: f64, hi: f64, n: usize) -> Result<CdfTable> {
        if !(hi > lo) || n < 2 {
            return Err(Error::InvalidParam(format!("bad CDF table range [{lo}, {hi}] x {n}")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let values = (0..n)
            .map(|i| self.cdf(lo + step * i as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(CdfTable { lo, step, values })
    }
}

/// Piecewise-linear CDF, clamped to the end values outside its range.
#[derive(Debug, Clone)]
pub struct CdfTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return self.values[0];
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().expect("non-empty table");
        }
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// The Heston `f` factor: `sqrt(1 + 16 gamma / (kappa^2 t))` under the Ito
/// scheme, `4 sqrt(gamma / (kappa^2 t))` with zero drift.
pub fn heston_f(params: &ModelParams, scheme: DriftScheme, t: f64) -> Result<f64> {
    params.validate()?;
    if params.is_deterministic() {
        return Err(Error::DeterministicLimit);
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("lag t must be > 0, got {t}")));
    }
    let r = params.gamma / (params.kappa * params.kappa * t);
    Ok(match scheme {
        DriftScheme::Ito => (1.0 + 16.0 * r).sqrt(),
        DriftScheme::ZeroDrift => 4.0 * r.sqrt(),
    })
}

/// Closed-form Heston mixture density
/// `P_t(x) = C |x|^(alpha - 1/2) e^(-x/2) K_(alpha - 1/2)(f |x| / 2)`
/// (the `e^(-x/2)` factor is absent for zero drift).
///
/// The constant `C` is obtained by numerically normalizing the shape;
/// [`HestonPdf::analytic_ln_norm`] exposes the closed-form value for
/// comparison.
#[derive(Debug, Clone, Copy)]
pub struct HestonPdf {
    params: ModelParams,
    scheme: DriftScheme,
    t: f64,
    alpha: f64,
    f: f64,
    ln_norm: f64,
}

impl HestonPdf {
    pub fn new(spec: &ModelSpec, t: f64) -> Result<Self> {
        if spec.kind != ModelKind::Heston {
            return Err(Error::Unsupported(format!(
                "closed-form Heston density requested for a {} model",
                spec.kind
            )));
        }
        let f = heston_f(&spec.params, spec.scheme, t)?;
        let alpha = spec.params.alpha()?;
        let mut pdf = Self {
            params: spec.params,
            scheme: spec.scheme,
            t,
            alpha,
            f,
            ln_norm: 0.0,
        };
        pdf.ln_norm = -pdf.ln_shape_integral()?;
        Ok(pdf)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    /// `ln C` from evaluating the mixture integral exactly:
    /// `C = (4 gamma / (kappa^2 f t))^alpha sqrt(f / pi) / Gamma(alpha)`.
    pub fn analytic_ln_norm(&self) -> f64 {
        let p = &self.params;
        self.alpha * (4.0 * p.gamma / (p.kappa * p.kappa * self.f * self.t)).ln() + 0.5 * (self.f.ln() - LN_PI)
            - lgamma(self.alpha)
    }

    fn ln_shape(&self, x: f64) -> f64 {
        let nu = self.alpha - 0.5;
        let tilt = match self.scheme {
            DriftScheme::Ito => -0.5 * x,
            DriftScheme::ZeroDrift => 0.0,
        };
        let ax = x.abs();
        if ax == 0.0 {
            // |x|^nu K_nu(f|x|/2) -> Gamma(nu) 2^(nu-1) (f/2)^(-nu)
            return if nu > 0.0 {
                lgamma(nu) + (nu - 1.0) * std::f64::consts::LN_2 - nu * (0.5 * self.f).ln()
            } else {
                f64::INFINITY
            };
        }
        let k = ln_bessel_k(nu.abs(), 0.5 * self.f * ax).expect("positive argument");
        nu * ax.ln() + k + tilt
    }

    fn ln_shape_integral(&self) -> Result<f64> {
        // Shift by the shape at a reference point to keep the integrand O(1).
        let x_ref = 1.0 / self.f;
        let shift = self.ln_shape(x_ref).max(self.ln_shape(-x_ref));
        let g = |x: f64| (self.ln_shape(x) - shift).exp() + (self.ln_shape(-x) - shift).exp();
        let opts = QuadOptions::with_tolerances(1e-14, 1e-12).pieces(4);
        let scale = 20.0 / self.f.max(1e-3) * (1.0 + self.alpha).sqrt();
        let core = quad::integrate(g, 0.0, scale, opts)?;
        let tail = quad::integrate_upper(g, scale, opts)?;
        Ok((core.value + tail.value).ln() + shift)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm + self.ln_shape(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// Closed-form Heston density at a single point; see [`HestonPdf`].
pub fn pdf_heston(spec: &ModelSpec, t: f64, x: f64) -> Result<f64> {
    Ok(HestonPdf::new(spec, t)?.pdf(x))
}

/// Cut power-law (Tsallis / t-Student) density
/// `N (1 + x^2 / (2 beta theta t))^-(beta + 3/2)` with
/// `N = Gamma(beta + 3/2) / (sqrt(2 beta theta t) Gamma(beta + 1) Gamma(1/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsallisParams {
    pub beta: f64,
    pub theta: f64,
    pub t: f64,
}

impl TsallisParams {
    pub fn new(beta: f64, theta: f64, t: f64) -> Result<Self> {
        let tp = Self { beta, theta, t };
        tp.validate()?;
        Ok(tp)
    }

    /// Tsallis parameters implied by a Hull-White model at lag `t`.
    pub fn from_model(params: &ModelParams, t: f64) -> Result<Self> {
        Self::new(params.beta()?, params.theta, t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("theta", self.theta), ("t", self.t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("Tsallis {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `2 beta theta t`, the squared width scale.
    fn width2(&self) -> f64 {
        2.0 * self.beta * self.theta * self.t
    }

    pub fn exponent(&self) -> f64 {
        self.beta + 1.5
    }

    /// `ln N(beta, beta theta t)`.
    pub fn ln_norm(&self) -> f64 {
        lgamma(self.beta + 1.5) - lgamma(self.beta + 1.0) - 0.5 * LN_PI - 0.5 * self.width2().ln()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm() - self.exponent() * (x * x / self.width2()).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// CDF through the equivalent Student-t law with `2 beta + 2` degrees of
    /// freedom and scale `sqrt(beta theta t / (beta + 1))`.
    pub fn cdf(&self, x: f64) -> f64 {
        let dof = 2.0 * self.beta + 2.0;
        let u2 = x * x * dof / self.width2();
        let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + u2));
        if x >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

pub fn pdf_tsallis(tp: &TsallisParams, x: f64) -> Result<f64> {
    tp.validate()?;
    Ok(tp.pdf(x))
}

/// Leading large-|x| behaviour of one side of the density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum TailLaw {
    /// `~ e^(-rate |x|)` up to power-law prefactors.
    Exponential { rate: f64 },
    /// `~ |x|^(-exponent)`.
    PowerLaw { exponent: f64 },
    /// Deterministic volatility: plain Gaussian tails.
    Gaussian { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailExponents {
    /// `x -> +inf`
    pub win: TailLaw,
    /// `x -> -inf`
    pub loss: TailLaw,
}

/// Tail laws of the mixture density.
///
/// Heston: exponential with rates `(f + 1)/2` (wins) and `(f - 1)/2`
/// (losses) under Ito, `f/2` on both sides with zero drift. Hull-White with
/// zero drift: power law `|x|^-(2 beta + 3)`. Hull-White under Ito (saddle
/// point of the mixture at `v ~ 2|x|/t`): losses `|x|^-(beta + 2)`, wins
/// `e^-x` times the same power.
pub fn tail_exponents(kind: ModelKind, params: &ModelParams, scheme: DriftScheme, t: f64) -> Result<TailExponents> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(Error::InvalidParam(format!("lag t must be > 0, got {t}")));
    }
    if params.is_deterministic() {
        let g = TailLaw::Gaussian {
            variance: params.theta * t,
        };
        return Ok(TailExponents { win: g, loss: g });
    }
    Ok(match (kind, scheme) {
        (ModelKind::Heston, DriftScheme::Ito) => {
            let f = heston_f(params, scheme, t)?;
            TailExponents {
                win: TailLaw::Exponential { rate: 0.5 * (f + 1.0) },
                loss: TailLaw::Exponential { rate: 0.5 * (f - 1.0) },
            }
        }
        (ModelKind::Heston, DriftScheme::ZeroDrift) => {
            let f = heston_f(params, scheme, t)?;
            let side = TailLaw::Exponential { rate: 0.5 * f };
            TailExponents { win: side, loss: side }
        }
        (ModelKind::HullWhite, DriftScheme::ZeroDrift) => {
            let side = TailLaw::PowerLaw {
                exponent: 2.0 * (params.beta()? + 1.5),
            };
            TailExponents { win: side, loss: side }
        }
        (ModelKind::HullWhite, DriftScheme::Ito) => TailExponents {
            win: TailLaw::Exponential { rate: 1.0 },
            loss: TailLaw::PowerLaw {
                exponent: params.beta()? + 2.0,
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(params: ModelParams, kind: ModelKind, scheme: DriftScheme) -> ModelSpec {
        ModelSpec::new(params, kind, scheme)
    }

    fn hw(beta: f64, theta: f64) -> ModelParams {
        ModelParams::hull_white_with_beta(beta, theta, 1.0).unwrap()
    }

    fn heston(alpha: f64, theta: f64) -> ModelParams {
        ModelParams::heston_with_alpha(alpha, theta, 1.0).unwrap()
    }

    fn real_line(f: impl Fn(f64) -> f64) -> f64 {
        quad::integrate_real_line(f, QuadOptions::with_tolerances(1e-11, 1e-10).pieces(16))
            .unwrap()
            .value
    }

    #[test]
    fn quadrature_matches_tsallis_at_origin() {
        let m = BoPdf::new(spec(hw(2.0, 1.0), ModelKind::HullWhite, DriftScheme::ZeroDrift), 1.0).unwrap();
        let tp = TsallisParams::new(2.0, 1.0, 1.0).unwrap();
        assert!((m.pdf_general(0.0).unwrap() - tp.pdf(0.0)).abs() < 1e-8);
    }

    #[test]
    fn general_pdf_normalizes() {
        let p = ModelParams::new(0.5, 1.0, 1.0, 0.0).unwrap(); // alpha = 1
        let p2 = ModelParams::heston_with_alpha(2.0, 1.0, 1.0).unwrap();
        for params in [p, p2] {
            let m = BoPdf::new(spec(params, ModelKind::Heston, DriftScheme::Ito), 1.0).unwrap();
            let mass = real_line(|x| m.pdf_general(x).unwrap());
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        }
    }

    #[test]
    fn zero_drift_is_even_and_ito_is_skewed() {
        for kind in [ModelKind::Heston, ModelKind::HullWhite] {
            let params = ModelParams::new(0.8, 0.7, 1.1, 0.0).unwrap();
            let sym = BoPdf::new(spec(params, kind, DriftScheme::ZeroDrift), 2.0).unwrap();
            let ito = BoPdf::new(spec(params, kind, DriftScheme::Ito), 2.0).unwrap();
            for x in [0.1, 0.5, 1.3, 4.0, 9.0] {
                let (a, b) = (sym.pdf_general(x).unwrap(), sym.pdf_general(-x).unwrap());
                assert!((a - b).abs() <= 1e-10, "{kind} x={x}");
            }
            // heavier loss tail under Ito
            assert!(ito.pdf_general(-6.0).unwrap() > ito.pdf_general(6.0).unwrap());
        }
    }

    #[test]
    fn heston_closed_form_matches_quadrature() {
        for alpha in [0.75, 1.0, 2.0, 5.0] {
            for scheme in [DriftScheme::Ito, DriftScheme::ZeroDrift] {
                let s = spec(heston(alpha, 1.0), ModelKind::Heston, scheme);
                let closed = HestonPdf::new(&s, 1.0).unwrap();
                let general = BoPdf::new(s, 1.0).unwrap();
                for i in 0..=80 {
                    let x = -10.0 + 0.25 * i as f64;
                    if x == 0.0 && alpha <= 0.5 {
                        continue;
                    }
                    let d = (closed.pdf(x) - general.pdf_general(x).unwrap()).abs();
                    assert!(d < 2e-6, "alpha={alpha} {scheme} x={x} diff={d}");
                }
                assert_relative_eq!(closed.ln_norm(), closed.analytic_ln_norm(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn heston_origin_limit_is_continuous() {
        let s = spec(heston(2.0, 1.0), ModelKind::Heston, DriftScheme::Ito);
        let h = HestonPdf::new(&s, 1.0).unwrap();
        assert_relative_eq!(h.pdf(0.0), h.pdf(1e-7), max_relative = 1e-6);
        let low = HestonPdf::new(&spec(heston(0.4, 1.0), ModelKind::Heston, DriftScheme::Ito), 1.0).unwrap();
        assert!(low.pdf(0.0).is_infinite());
    }

    #[test]
    fn heston_rejects_hull_white() {
        let s = spec(hw(1.0, 1.0), ModelKind::HullWhite, DriftScheme::Ito);
        assert!(matches!(HestonPdf::new(&s, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn f_factor_limits() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 0.0).unwrap();
        let f = heston_f(&p, DriftScheme::Ito, 1e9).unwrap();
        assert!((f - 1.0).abs() < 1e-8);
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(heston_f(&p, DriftScheme::Ito, 16.0).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(heston_f(&p, DriftScheme::ZeroDrift, 4.0).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn tail_exponent_values() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let te = tail_exponents(ModelKind::Heston, &p, DriftScheme::Ito, 16.0).unwrap();
        let s2 = 2f64.sqrt();
        assert_eq!(te.win, TailLaw::Exponential { rate: (s2 + 1.0) / 2.0 });
        match te.loss {
            TailLaw::Exponential { rate } => assert_relative_eq!(rate, (s2 - 1.0) / 2.0, max_relative = 1e-14),
            other => panic!("{other:?}"),
        }
        let long = tail_exponents(ModelKind::Heston, &p, DriftScheme::Ito, 1e12).unwrap();
        match long.loss {
            TailLaw::Exponential { rate } => assert!(rate < 1e-11),
            other => panic!("{other:?}"),
        }
        let hwp = ModelParams::hull_white_with_beta(0.861, 1.03, 0.3).unwrap();
        let te = tail_exponents(ModelKind::HullWhite, &hwp, DriftScheme::ZeroDrift, 1.0).unwrap();
        match te.win {
            TailLaw::PowerLaw { exponent } => assert_relative_eq!(exponent, 4.722, max_relative = 1e-12),
            other => panic!("{other:?}"),
        }
        let det = ModelParams::new(1.0, 2.0, 0.0, 0.0).unwrap();
        let te = tail_exponents(ModelKind::HullWhite, &det, DriftScheme::Ito, 3.0).unwrap();
        assert_eq!(te.win, TailLaw::Gaussian { variance: 6.0 });
    }

    /// Local log-log / log-linear slopes of the quadrature density confirm
    /// the Hull-White Ito tail laws derived by the saddle-point argument.
    #[test]
    fn hull_white_ito_tails_match_quadrature() {
        let beta = 1.5;
        let params = hw(beta, 1.0);
        let m = BoPdf::new(spec(params, ModelKind::HullWhite, DriftScheme::Ito), 1.0)
            .unwrap()
            .with_tolerances(1e-300, 1e-10);
        let ln_p = |x: f64| m.pdf_general(x).unwrap().ln();
        let (x1, x2) = (2000.0f64, 4000.0f64);
        let loss_slope = (ln_p(-x2) - ln_p(-x1)) / (x2.ln() - x1.ln());
        assert!((loss_slope + (beta + 2.0)).abs() < 0.05, "loss slope {loss_slope}");
        let (w1, w2) = (200.0f64, 300.0f64);
        let win = -(ln_p(w2) - ln_p(w1)) / (w2 - w1) - (beta + 2.0) * (w2.ln() - w1.ln()) / (w2 - w1);
        assert!((win - 1.0).abs() < 0.02, "win rate {win}");
    }

    #[test]
    fn tsallis_normalizes_and_matches_reference_values() {
        for beta in [0.5, 0.861, 2.0, 10.0] {
            let tp = TsallisParams::new(beta, 1.0, 1.0).unwrap();
            let mass = real_line(|x| tp.pdf(x));
            assert!((mass - 1.0).abs() < 1e-9, "beta={beta}: {mass}");
            for x in [-3.0, -0.2, 0.0, 1.7] {
                let cdf_q = quad::integrate(|s| tp.pdf(s), -1e3, x, QuadOptions::with_tolerances(1e-13, 1e-12).pieces(64))
                    .unwrap()
                    .value;
                assert!((tp.cdf(x) - cdf_q).abs() < 1e-6, "beta={beta} x={x}");
            }
        }
        let tp = TsallisParams::new(0.861, 1.03, 1.0).unwrap();
        let z: f64 = 0.861 * 1.03;
        let direct = statrs::function::gamma::gamma(0.861 + 1.5)
            / ((2.0 * z).sqrt() * statrs::function::gamma::gamma(1.861) * std::f64::consts::PI.sqrt());
        assert_relative_eq!(tp.pdf(0.0), direct, max_relative = 1e-12);
        assert!(TsallisParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn tsallis_approaches_gaussian() {
        let tp = TsallisParams::new(50.0, 1.0, 1.0).unwrap();
        let sup = (0..=800)
            .map(|i| -4.0 + 0.01 * i as f64)
            .map(|x| (tp.pdf(x) - (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-2, "sup {sup}");
    }

    #[test]
    fn tsallis_second_moment_matches_mixture_integral() {
        for beta in [2.5, 4.0] {
            let theta = 0.8;
            let tp = TsallisParams::new(beta, theta, 1.0).unwrap();
            let closed = real_line(|x| x * x * tp.pdf(x));
            // second moment of the inverse-variance mixture: int Pi(y) (t / y) dy
            let dist = StationaryDist::new(ModelKind::HullWhite, beta, theta).unwrap();
            let mix = quad::integrate_upper(|y| dist.pdf_y(y.max(1e-300)).unwrap() / y.max(1e-300), 0.0, QuadOptions::with_tolerances(1e-12, 1e-11).pieces(8))
                .unwrap()
                .value;
            assert!((closed - mix).abs() < 1e-6, "beta={beta}: {closed} vs {mix}");
        }
    }

    #[test]
    fn deterministic_limit_is_gaussian() {
        let p = ModelParams::new(3.0, 0.5, 0.0, 0.0).unwrap();
        let m = BoPdf::new(spec(p, ModelKind::Heston, DriftScheme::Ito), 2.0).unwrap();
        let x: f64 = 0.3;
        let mean: f64 = -0.5 * 0.5 * 2.0;
        let expected = (-(x - mean) * (x - mean) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(m.pdf_general(x).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn cdf_consistent_with_density() {
        let s = spec(heston(1.5, 0.6), ModelKind::Heston, DriftScheme::Ito);
        let m = BoPdf::new(s, 2.0).unwrap();
        let table = m.cdf_table(-8.0, 8.0, 1601).unwrap();
        for x in [-2.0, -0.35, 0.0, 1.25] {
            let direct = quad::integrate(|s| m.pdf_general(s).unwrap(), -60.0, x, QuadOptions::with_tolerances(1e-11, 1e-10).pieces(32))
                .unwrap()
                .value;
            assert!((m.cdf(x).unwrap() - direct).abs() < 1e-7);
            assert!((table.eval(x) - direct).abs() < 1e-4);
        }
    }
}
