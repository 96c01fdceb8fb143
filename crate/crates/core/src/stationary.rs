//! Stationary (detailed-balance) laws of the variance process.
//!
//! Heston: `v ~ Gamma(shape = alpha, rate = alpha / theta)`.
//! Hull-White: `y = 1/v ~ Gamma(shape = beta + 1, rate = beta * theta)`,
//! i.e. `v` is inverse-Gamma. Both have mean variance `theta`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::models::{ModelKind, ModelParams};
use crate::rng;
use crate::special_fn::lgamma;

/// Chunk length for seeded parallel sampling; fixed so results do not depend
/// on the number of worker threads.
const SAMPLE_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryDist {
    kind: ModelKind,
    /// `alpha` (Heston) or `beta` (Hull-White).
    shape: f64,
    theta: f64,
    /// Shape and rate of the Gamma law of `v` (Heston) or `1/v` (Hull-White).
    gamma_shape: f64,
    gamma_rate: f64,
    ln_norm: f64,
}

impl StationaryDist {
    pub fn new(kind: ModelKind, shape: f64, theta: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParam(format!("stationary shape must be > 0, got {shape}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParam(format!("theta must be > 0, got {theta}")));
        }
        let (gamma_shape, gamma_rate) = match kind {
            ModelKind::Heston => (shape, shape / theta),
            ModelKind::HullWhite => (shape + 1.0, shape * theta),
        };
        Ok(Self {
            kind,
            shape,
            theta,
            gamma_shape,
            gamma_rate,
            ln_norm: gamma_shape * gamma_rate.ln() - lgamma(gamma_shape),
        })
    }

    /// Fails with [`Error::DeterministicLimit`] for `kappa = 0`.
    pub fn from_model(params: &ModelParams, kind: ModelKind) -> Result<Self> {
        let shape = crate::models::shape_constants(params, kind)?;
        Self::new(kind, shape, params.theta)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Shape and rate of the underlying Gamma law (in `v` for Heston, in `1/v`
    /// for Hull-White).
    pub fn gamma_law(&self) -> (f64, f64) {
        (self.gamma_shape, self.gamma_rate)
    }

    pub fn mean_v(&self) -> f64 {
        self.theta
    }

    /// Variance of `v`; infinite for Hull-White with `beta <= 1`.
    pub fn variance_v(&self) -> f64 {
        match self.kind {
            ModelKind::Heston => self.theta * self.theta / self.shape,
            ModelKind::HullWhite if self.shape > 1.0 => self.theta * self.theta / (self.shape - 1.0),
            ModelKind::HullWhite => f64::INFINITY,
        }
    }

    /// Unchecked log-density in `v` for `v > 0`.
    #[inline]
    pub(crate) fn ln_pdf_unchecked(&self, v: f64) -> f64 {
        match self.kind {
            ModelKind::Heston => self.ln_norm + (self.gamma_shape - 1.0) * v.ln() - self.gamma_rate * v,
            // Pi(v) = Pi_y(1/v) / v^2
            ModelKind::HullWhite => {
                self.ln_norm - (self.gamma_shape + 1.0) * v.ln() - self.gamma_rate / v
            }
        }
    }

    pub fn ln_pdf_v(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(domain("variance", v));
        }
        Ok(self.ln_pdf_unchecked(v))
    }

    pub fn pdf_v(&self, v: f64) -> Result<f64> {
        self.ln_pdf_v(v).map(f64::exp)
    }

    /// Density of the inverse variance `y = 1/v`.
    pub fn pdf_y(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(domain("inverse variance", y));
        }
        Ok((self.ln_pdf_unchecked(1.0 / y) - 2.0 * y.ln()).exp())
    }

    pub fn cdf_v(&self, v: f64) -> f64 {
        use statrs::function::gamma::{gamma_lr, gamma_ur};
        if v <= 0.0 {
            return 0.0;
        }
        if v.is_infinite() {
            return 1.0;
        }
        match self.kind {
            ModelKind::Heston => gamma_lr(self.gamma_shape, self.gamma_rate * v),
            ModelKind::HullWhite => gamma_ur(self.gamma_shape, self.gamma_rate / v),
        }
    }

    /// Draws one variance. Uses the Marsaglia-Tsang Gamma sampler, which
    /// covers shapes below and above one.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.gamma_shape, 1.0 / self.gamma_rate).expect("validated shape and rate");
        self.transform(g.sample(rng))
    }

    #[inline]
    fn transform(&self, g: f64) -> f64 {
        match self.kind {
            ModelKind::Heston => g,
            ModelKind::HullWhite => 1.0 / g,
        }
    }

    pub fn sample_v<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParam("sample count must be >= 1".into()));
        }
        let g = Gamma::new(self.gamma_shape, 1.0 / self.gamma_rate).expect("validated shape and rate");
        Ok((0..n).map(|_| self.transform(g.sample(rng))).collect())
    }

    /// Parallel sampling with one generator per fixed-size chunk, seeded from
    /// `root_seed` and the chunk index.
    pub fn sample_v_seeded(&self, root_seed: u64, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParam("sample count must be >= 1".into()));
        }
        let g = Gamma::new(self.gamma_shape, 1.0 / self.gamma_rate).expect("validated shape and rate");
        let mut out = vec![0.0; n];
        out.par_chunks_mut(SAMPLE_CHUNK).enumerate().for_each(|(ci, chunk)| {
            let mut r = rng::stream(root_seed, ci as u64);
            for slot in chunk {
                *slot = self.transform(g.sample(&mut r));
            }
        });
        Ok(out)
    }
}

/// Detailed-balance residual of the model's stationary law on `grid`.
///
/// Evaluates `d/dv [b^2 Pi] + 2 gamma (v - theta) Pi` with central
/// differences at interior grid points and returns its maximum magnitude
/// relative to `max |2 gamma (v - theta) Pi|`.
pub fn balance_residual(params: &ModelParams, kind: ModelKind, grid: &[f64]) -> Result<f64> {
    let dist = StationaryDist::from_model(params, kind)?;
    let kappa = params.kappa;
    let b2 = move |v: f64| match kind {
        ModelKind::Heston => kappa * kappa * v,
        ModelKind::HullWhite => kappa * kappa * v * v,
    };
    balance_residual_fn(|v| dist.ln_pdf_unchecked(v).exp(), b2, params.gamma, params.theta, grid)
}

/// [`balance_residual`] for an arbitrary density `pi` and squared diffusion
/// `b2`. When the drift term vanishes everywhere the absolute residual is
/// returned instead of the ratio.
pub fn balance_residual_fn<P, B>(pi: P, b2: B, gamma: f64, theta: f64, grid: &[f64]) -> Result<f64>
where
    P: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if grid.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "balance residual needs >= 3 grid points, got {}",
            grid.len()
        )));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) || !(grid[0] > 0.0) {
        return Err(Error::InvalidParam("grid must be strictly positive and increasing".into()));
    }
    let flux: Vec<f64> = grid.iter().map(|&v| b2(v) * pi(v)).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..grid.len() - 1 {
        let v = grid[i];
        let deriv = (flux[i + 1] - flux[i - 1]) / (grid[i + 1] - grid[i - 1]);
        let drift = 2.0 * gamma * (v - theta) * pi(v);
        worst = worst.max((deriv + drift).abs());
        scale = scale.max(drift.abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::QuadOptions;
    use crate::stats::{ks_p_value, ks_statistic, moments};
    use approx::assert_relative_eq;

    fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exponential_special_case() {
        let d = StationaryDist::new(ModelKind::Heston, 1.0, 1.0).unwrap();
        assert_relative_eq!(d.pdf_v(1e-12).unwrap(), 1.0, max_relative = 1e-11);
        assert_relative_eq!(d.pdf_v(2.0).unwrap(), (-2.0f64).exp(), max_relative = 1e-14);
        assert!(d.pdf_v(0.0).is_err());
        assert!(d.pdf_v(-1.0).is_err());
    }

    #[test]
    fn densities_normalize() {
        let opts = QuadOptions::with_tolerances(1e-12, 1e-11);
        for kind in [ModelKind::Heston, ModelKind::HullWhite] {
            for &shape in &[0.5, 0.861, 1.0, 2.0, 7.5, 20.0, 50.0] {
                for &theta in &[0.3, 1.03] {
                    let d = StationaryDist::new(kind, shape, theta).unwrap();
                    // integrate in u = ln v to resolve both ends
                    let moment = |k: i32| {
                        crate::quad::integrate(
                            |u: f64| {
                                let v = theta * u.exp();
                                (d.ln_pdf_unchecked(v) + v.ln()).exp() * v.powi(k)
                            },
                            -60.0,
                            40.0,
                            opts.pieces(50),
                        )
                        .unwrap()
                        .value
                    };
                    let mass = moment(0);
                    assert!((mass - 1.0).abs() < 1e-8, "{kind} shape={shape}: {mass}");
                    assert_relative_eq!(moment(1), theta, max_relative = 1e-7);
                }
            }
        }
    }

    #[test]
    fn hull_white_inverse_variance_mode() {
        let d = StationaryDist::new(ModelKind::HullWhite, 0.861, 1.03).unwrap();
        // analytic: d/dy [beta ln y - beta theta y] = 0 -> y = 1/theta
        let analytic = 1.0 / 1.03;
        let (best, _) = (1..200_000)
            .map(|i| i as f64 * 1e-5)
            .map(|y| (y, d.pdf_y(y).unwrap()))
            .fold((0.0, f64::MIN), |acc, p| if p.1 > acc.1 { p } else { acc });
        assert!((best - analytic).abs() < 2e-5, "grid argmax {best} vs {analytic}");
        assert!((analytic - 0.971).abs() < 1e-3);
    }

    #[test]
    fn heston_sample_moments() {
        let d = StationaryDist::new(ModelKind::Heston, 2.0, 1.0).unwrap();
        let s = d.sample_v_seeded(11, 1_000_000).unwrap();
        let m = moments(&s).unwrap();
        assert!((m.mean - 1.0).abs() < 3.0 * m.std_error_of_mean(), "mean {}", m.mean);
        // Var of sample variance for Gamma: (mu4 - sigma^4)/n with mu4 = 3 sigma^4 (1 + 2/alpha)
        let sigma2 = d.variance_v();
        let se_var = ((3.0 * (1.0 + 2.0 / 2.0) - 1.0) * sigma2 * sigma2 / s.len() as f64).sqrt();
        assert!((m.variance - sigma2).abs() < 3.0 * se_var, "variance {} vs {}", m.variance, sigma2);
    }

    #[test]
    fn hull_white_samples_positive_and_gamma_in_inverse() {
        let d = StationaryDist::new(ModelKind::HullWhite, 0.861, 1.03).unwrap();
        let s = d.sample_v_seeded(5, 100_000).unwrap();
        assert!(s.iter().all(|&v| v > 0.0 && v.is_finite()));
        let (shape, rate) = d.gamma_law();
        let y: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        let ks = ks_statistic(&y, |x| statrs::function::gamma::gamma_lr(shape, rate * x)).unwrap();
        assert!(ks_p_value(ks, y.len()) > 1e-3, "KS {ks}");
        // and the v-CDF is consistent with the y-CDF
        let ks_v = ks_statistic(&s, |v| d.cdf_v(v)).unwrap();
        assert_relative_eq!(ks_v, ks, max_relative = 1e-9);
    }

    #[test]
    fn small_shape_sampling_works() {
        let d = StationaryDist::new(ModelKind::Heston, 0.3, 2.0).unwrap();
        let s = d.sample_v_seeded(3, 200_000).unwrap();
        let ks = ks_statistic(&s, |v| d.cdf_v(v)).unwrap();
        assert!(ks_p_value(ks, s.len()) > 1e-3);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let d = StationaryDist::new(ModelKind::Heston, 1.5, 0.7).unwrap();
        assert_eq!(d.sample_v_seeded(42, 20_000).unwrap(), d.sample_v_seeded(42, 20_000).unwrap());
        let mut a = rng::stream(1, 0);
        let mut b = rng::stream(1, 0);
        assert_eq!(d.sample_v(&mut a, 100).unwrap(), d.sample_v(&mut b, 100).unwrap());
        assert!(d.sample_v(&mut a, 0).is_err());
    }

    #[test]
    fn balance_residual_small_and_second_order() {
        let heston = ModelParams::heston_with_alpha(2.0, 1.0, 1.0).unwrap();
        let hw = ModelParams::hull_white_with_beta(2.0, 1.0, 1.0).unwrap();
        for (params, kind) in [(heston, ModelKind::Heston), (hw, ModelKind::HullWhite)] {
            let coarse = balance_residual(&params, kind, &uniform(0.05, 5.0, 2000)).unwrap();
            assert!(coarse < 1e-3, "{kind}: {coarse}");
            let r1 = balance_residual(&params, kind, &uniform(0.05, 5.0, 201)).unwrap();
            let r2 = balance_residual(&params, kind, &uniform(0.05, 5.0, 401)).unwrap();
            let ratio = r1 / r2;
            assert!((ratio - 4.0).abs() < 0.4, "{kind}: halving ratio {ratio}");
        }
    }

    #[test]
    fn balance_residual_degenerate_cases() {
        let r = balance_residual_fn(|_| 0.5, |_| 1.0, 0.0, 1.0, &uniform(0.1, 2.0, 10)).unwrap();
        assert_eq!(r, 0.0);
        let p = ModelParams::heston_with_alpha(2.0, 1.0, 1.0).unwrap();
        assert!(balance_residual(&p, ModelKind::Heston, &[0.1, 0.2]).is_err());
        assert!(balance_residual(&p, ModelKind::Heston, &[0.0, 0.1, 0.2]).is_err());
        let det = ModelParams::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            StationaryDist::from_model(&det, ModelKind::Heston),
            Err(Error::DeterministicLimit)
        ));
    }
}
