//! Euler-Maruyama simulation of the coupled return/variance processes, and
//! the stationary-volatility ("BO") sampler used to check the approximation.
//!
//! Every path owns a generator seeded from `(seed, path index)`, so output is
//! bit-identical regardless of thread count or scheduling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bo_pdf::BoPdf;
use crate::error::{Error, Result};
use crate::models::{DriftScheme, ModelKind, ModelSpec};
use crate::rng;
use crate::stationary::StationaryDist;
use crate::stats;

/// Minimum path count for [`bo_discrepancy`].
pub const MIN_DISCREPANCY_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialVariance {
    Fixed(f64),
    /// Draw `v(0)` from the stationary law (theta itself when kappa = 0).
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: ModelSpec,
    /// Integration step in lag units. Rounded so that `horizon` is a whole
    /// number of steps.
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Correlation of the two Wiener increments.
    pub rho: f64,
    pub seed: u64,
    pub v0: InitialVariance,
    /// Store `(x, v)` every this many steps (0 = no trajectories).
    pub record_stride: usize,
    /// Normal draws aggregated into each Brownian increment. A run with
    /// `dt` and `k` draws per step consumes the same random numbers as a run
    /// with `dt / k` and one draw, which couples the two discretizations.
    pub increments_per_step: u32,
}

impl SimConfig {
    pub fn new(model: ModelSpec, dt: f64, horizon: f64, paths: usize, seed: u64) -> Self {
        Self {
            model,
            dt,
            horizon,
            paths,
            rho: 0.0,
            seed,
            v0: InitialVariance::Stationary,
            record_stride: 0,
            increments_per_step: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "horizon must be >= dt, got horizon {} with dt {}",
                self.horizon, self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidParam("paths must be >= 1".into()));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidParam(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if let InitialVariance::Fixed(v) = self.v0 {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("v0 must be > 0, got {v}")));
            }
        }
        if self.increments_per_step == 0 {
            return Err(Error::InvalidParam("increments_per_step must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    fn step_size(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Time of each stored point, starting at 0.
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    /// Modified log-return `x(T)` per path.
    pub terminal_x: Vec<f64>,
    /// Variance at `T` (the frozen draw for BO runs).
    pub terminal_v: Vec<f64>,
    pub trajectories: Option<Vec<Trajectory>>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.terminal_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal_x.is_empty()
    }
}

/// Variance law for initial draws and the BO sampler.
#[derive(Debug, Clone, Copy)]
enum Law {
    Dist(StationaryDist),
    Point(f64),
}

impl Law {
    fn of(model: &ModelSpec) -> Result<Self> {
        if model.params.is_deterministic() {
            Ok(Law::Point(model.params.theta))
        } else {
            Ok(Law::Dist(StationaryDist::from_model(&model.params, model.kind)?))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Dist(d) => d.sample_one(rng),
            Law::Point(v) => *v,
        }
    }
}

struct PathOutput {
    observed: Vec<f64>,
    v_end: f64,
    trajectory: Option<Trajectory>,
}

#[inline]
fn drift(scheme: DriftScheme, v: f64) -> f64 {
    match scheme {
        DriftScheme::Ito => 0.5 * v,
        DriftScheme::ZeroDrift => 0.0,
    }
}

/// Integrates one path, recording `x` after each step index in `observe`
/// (sorted, 1-based step counts).
fn run_path(cfg: &SimConfig, law: &Law, path: usize, observe: &[usize]) -> Result<PathOutput> {
    let mut rng = rng::stream(cfg.seed, path as u64);
    let p = cfg.model.params;
    let kind = cfg.model.kind;
    let scheme = cfg.model.scheme;
    let steps = cfg.steps();
    let dt = cfg.step_size();
    let sdt = dt.sqrt();
    let k = cfg.increments_per_step;
    let agg = 1.0 / (k as f64).sqrt();
    let rho_perp = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();

    let mut v = match cfg.v0 {
        InitialVariance::Fixed(v0) => v0,
        InitialVariance::Stationary => law.draw(&mut rng),
    };
    let mut ln_v = v.ln();
    let mut x = 0.0f64;
    let mut observed = Vec::with_capacity(observe.len());
    let mut next_obs = observe.iter().peekable();

    let stride = cfg.record_stride;
    let mut traj = (stride > 0).then(|| {
        let cap = steps / stride + 1;
        Trajectory {
            t: Vec::with_capacity(cap),
            x: Vec::with_capacity(cap),
            v: Vec::with_capacity(cap),
        }
    });
    if let Some(tr) = traj.as_mut() {
        tr.t.push(0.0);
        tr.x.push(0.0);
        tr.v.push(v.max(0.0));
    }

    for step in 1..=steps {
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        for _ in 0..k {
            z1 += rng.sample::<f64, _>(StandardNormal);
            z2 += rng.sample::<f64, _>(StandardNormal);
        }
        let w1 = z1 * agg;
        let w2 = cfg.rho * w1 + rho_perp * z2 * agg;

        let vp = v.max(0.0);
        x += -drift(scheme, vp) * dt + (vp * dt).sqrt() * w1;
        match kind {
            // full truncation Euler
            ModelKind::Heston => {
                v += p.gamma * (p.theta - vp) * dt + p.kappa * vp.sqrt() * sdt * w2;
            }
            // Euler in ln v; exact treatment of the multiplicative noise
            ModelKind::HullWhite => {
                ln_v += (-p.gamma * (v - p.theta) / v - 0.5 * p.kappa * p.kappa) * dt + p.kappa * sdt * w2;
                v = ln_v.exp();
            }
        }
        if !x.is_finite() || !v.is_finite() || (kind == ModelKind::HullWhite && v <= 0.0) {
            return Err(Error::NonFinite { path, step });
        }
        while next_obs.peek().is_some_and(|&&s| s == step) {
            observed.push(x);
            next_obs.next();
        }
        if let Some(tr) = traj.as_mut() {
            if step % stride == 0 {
                tr.t.push(step as f64 * dt);
                tr.x.push(x);
                tr.v.push(v.max(0.0));
            }
        }
    }
    Ok(PathOutput {
        observed,
        v_end: v.max(0.0),
        trajectory: traj,
    })
}

fn run_all(cfg: &SimConfig, observe: &[usize]) -> Result<Vec<PathOutput>> {
    cfg.validate()?;
    let law = Law::of(&cfg.model)?;
    (0..cfg.paths)
        .into_par_iter()
        .map(|i| run_path(cfg, &law, i, observe))
        .collect()
}

/// Joint Euler-Maruyama simulation of `(x, v)` up to `cfg.horizon`.
pub fn simulate_joint(cfg: &SimConfig) -> Result<PathSet> {
    let steps = cfg.steps();
    let out = run_all(cfg, &[steps])?;
    let mut set = PathSet {
        terminal_x: Vec::with_capacity(out.len()),
        terminal_v: Vec::with_capacity(out.len()),
        trajectories: (cfg.record_stride > 0).then(|| Vec::with_capacity(out.len())),
    };
    for o in out {
        set.terminal_x.push(o.observed[0]);
        set.terminal_v.push(o.v_end);
        if let (Some(all), Some(tr)) = (set.trajectories.as_mut(), o.trajectory) {
            all.push(tr);
        }
    }
    Ok(set)
}

/// Joint simulation observed at several times; returns one sample of `x(t)`
/// per requested time (each rounded to the step grid).
pub fn simulate_joint_at(cfg: &SimConfig, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let dt = cfg.step_size();
    let mut steps: Vec<usize> = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > 0.0 && t <= cfg.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidParam(format!(
                "observation time {t} outside (0, horizon = {}]",
                cfg.horizon
            )));
        }
        steps.push(((t / dt).round() as usize).max(1));
    }
    let mut sorted = steps.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let out = run_all(cfg, &sorted)?;
    Ok(steps
        .iter()
        .map(|s| {
            let idx = sorted.binary_search(s).expect("observation step present");
            out.iter().map(|o| o.observed[idx]).collect()
        })
        .collect())
}

/// Stationary-volatility sampler: per path draw `v ~ Pi(v)` once and return
/// `x ~ N(-a(v) T, v T)`. `cfg.v0`, `dt` and `rho` play no role.
pub fn simulate_bo(cfg: &SimConfig) -> Result<PathSet> {
    cfg.validate()?;
    let law = Law::of(&cfg.model)?;
    let t = cfg.horizon;
    let scheme = cfg.model.scheme;
    let pairs: Vec<(f64, f64)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let v = law.draw(&mut r);
            let z: f64 = r.sample(StandardNormal);
            (-drift(scheme, v) * t + (v * t).sqrt() * z, v)
        })
        .collect();
    let (terminal_x, terminal_v) = pairs.into_iter().unzip();
    Ok(PathSet {
        terminal_x,
        terminal_v,
        trajectories: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagDiscrepancy {
    pub lag: f64,
    /// `gamma * lag`, the relaxation count over the lag.
    pub gamma_t: f64,
    /// KS distance between the joint-simulation `x(lag)` and the BO law.
    pub ks: f64,
    pub p_value: f64,
    pub paths: usize,
}

/// KS distance of a sample from the BO law of `model` at lag `t`.
pub fn ks_against_bo(sample: &[f64], model: ModelSpec, t: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let bo = BoPdf::new(model, t)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let pad = 1e-9 + 1e-6 * (hi - lo);
    let table = bo.cdf_table(lo - pad, hi + pad, 8001)?;
    Ok(stats::ks_statistic_sorted(&sorted, |x| table.eval(x)))
}

/// Compares the joint dynamics with the BO prediction at each lag.
pub fn bo_discrepancy(cfg_joint: &SimConfig, lags: &[f64]) -> Result<Vec<LagDiscrepancy>> {
    cfg_joint.validate()?;
    if cfg_joint.paths < MIN_DISCREPANCY_PATHS {
        return Err(Error::InsufficientData(format!(
            "bo_discrepancy needs >= {MIN_DISCREPANCY_PATHS} paths, got {}",
            cfg_joint.paths
        )));
    }
    let max_lag = lags.iter().cloned().fold(0.0, f64::max);
    if lags.is_empty() || cfg_joint.horizon < max_lag {
        return Err(Error::InvalidParam(format!(
            "horizon {} must cover every lag (max {max_lag})",
            cfg_joint.horizon
        )));
    }
    let samples = simulate_joint_at(cfg_joint, lags)?;
    lags.iter()
        .zip(samples)
        .map(|(&lag, xs)| {
            let ks = ks_against_bo(&xs, cfg_joint.model, lag)?;
            Ok(LagDiscrepancy {
                lag,
                gamma_t: cfg_joint.model.params.gamma * lag,
                ks,
                p_value: stats::ks_p_value(ks, xs.len()),
                paths: xs.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo_pdf::TsallisParams;
    use crate::models::ModelParams;
    use crate::stats::{ks_p_value, ks_statistic, moments};

    fn spec(params: ModelParams, kind: ModelKind, scheme: DriftScheme) -> ModelSpec {
        ModelSpec::new(params, kind, scheme)
    }

    #[test]
    fn deterministic_volatility_gives_gaussian() {
        let p = ModelParams::new(50.0, 0.4, 0.0, 0.0).unwrap();
        let mut cfg = SimConfig::new(spec(p, ModelKind::Heston, DriftScheme::Ito), 0.05, 2.0, 100_000, 9);
        cfg.v0 = InitialVariance::Fixed(0.4);
        let set = simulate_joint(&cfg).unwrap();
        let m = moments(&set.terminal_x).unwrap();
        let (mean, var) = (-0.5 * 0.4 * 2.0, 0.4 * 2.0);
        assert!((m.mean - mean).abs() < 3.0 * m.std_error_of_mean());
        let se_var = var * (2.0 / set.len() as f64).sqrt();
        assert!((m.variance - var).abs() < 3.0 * se_var, "{} vs {var}", m.variance);
    }

    #[test]
    fn heston_stationary_marginal_is_gamma() {
        let p = ModelParams::heston_with_alpha(2.0, 1.0, 0.5).unwrap(); // gamma = 0.25
        let mut cfg = SimConfig::new(spec(p, ModelKind::Heston, DriftScheme::ZeroDrift), 0.01, 30.0, 20_000, 4);
        cfg.v0 = InitialVariance::Fixed(1.0);
        let set = simulate_joint(&cfg).unwrap();
        assert!(set.terminal_v.iter().all(|&v| v >= 0.0));
        let dist = StationaryDist::from_model(&p, ModelKind::Heston).unwrap();
        let ks = ks_statistic(&set.terminal_v, |v| dist.cdf_v(v)).unwrap();
        assert!(ks_p_value(ks, set.len()) > 1e-3, "KS {ks}");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = ModelParams::new(1.0, 0.5, 0.7, 0.0).unwrap();
        for kind in [ModelKind::Heston, ModelKind::HullWhite] {
            let mut cfg = SimConfig::new(spec(p, kind, DriftScheme::Ito), 0.1, 3.0, 500, 77);
            cfg.rho = -0.4;
            cfg.record_stride = 5;
            let a = simulate_joint(&cfg).unwrap();
            let b = simulate_joint(&cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.trajectories.as_ref().unwrap()[0].x.len(), 30 / 5 + 1);
            cfg.seed = 78;
            assert_ne!(simulate_joint(&cfg).unwrap().terminal_x, a.terminal_x);
        }
    }

    #[test]
    fn hull_white_variance_stays_positive() {
        let p = ModelParams::new(2.0, 1.0, 1.5, 0.0).unwrap();
        let mut cfg = SimConfig::new(spec(p, ModelKind::HullWhite, DriftScheme::ZeroDrift), 0.02, 5.0, 200, 1);
        cfg.record_stride = 1;
        let set = simulate_joint(&cfg).unwrap();
        for tr in set.trajectories.unwrap() {
            assert!(tr.v.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn bo_sampler_matches_tsallis() {
        let p = ModelParams::hull_white_with_beta(2.0, 1.0, 1.0).unwrap();
        let cfg = SimConfig::new(spec(p, ModelKind::HullWhite, DriftScheme::ZeroDrift), 1.0, 1.0, 1_000_000, 3);
        let set = simulate_bo(&cfg).unwrap();
        let tp = TsallisParams::new(2.0, 1.0, 1.0).unwrap();
        // chi-square per bin over [-6, 6] in 60 bins
        let (lo, hi, bins) = (-6.0, 6.0, 60usize);
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in &set.terminal_x {
            if x >= lo && x < hi {
                counts[((x - lo) / w) as usize] += 1;
            }
        }
        let n = set.len() as f64;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let a = lo + k as f64 * w;
                let expected = n * (tp.cdf(a + w) - tp.cdf(a));
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        let per_bin = chi2 / bins as f64;
        assert!(per_bin < 2.0, "chi2/bin {per_bin}");
    }

    #[test]
    fn bo_sampler_ito_is_negatively_skewed_and_ignores_v0() {
        let p = ModelParams::heston_with_alpha(1.5, 1.0, 1.0).unwrap();
        let mut cfg = SimConfig::new(spec(p, ModelKind::Heston, DriftScheme::Ito), 1.0, 2.0, 200_000, 5);
        let a = simulate_bo(&cfg).unwrap();
        assert!(moments(&a.terminal_x).unwrap().skewness < 0.0);
        cfg.v0 = InitialVariance::Fixed(17.0);
        assert_eq!(simulate_bo(&cfg).unwrap(), a);
    }

    #[test]
    fn zero_drift_uncorrelated_has_no_skew() {
        let p = ModelParams::heston_with_alpha(4.0, 1.0, 0.5).unwrap();
        let cfg = SimConfig::new(spec(p, ModelKind::Heston, DriftScheme::ZeroDrift), 0.05, 1.0, 100_000, 12);
        let x = simulate_joint(&cfg).unwrap().terminal_x;
        let m = moments(&x).unwrap();
        // standard error of the sample skewness, estimated by batching
        let batches: Vec<f64> = x.chunks(10_000).map(|c| moments(c).unwrap().skewness).collect();
        let bm = moments(&batches).unwrap();
        let se = (bm.variance / batches.len() as f64).sqrt();
        assert!(m.skewness.abs() < 3.0 * se, "skew {} se {se}", m.skewness);
    }

    #[test]
    fn halving_dt_is_within_monte_carlo_error() {
        let p = ModelParams::heston_with_alpha(2.0, 1.0, 0.8).unwrap();
        let model = spec(p, ModelKind::Heston, DriftScheme::Ito);
        let mut coarse = SimConfig::new(model, 0.1, 1.0, 100_000, 21);
        coarse.increments_per_step = 2;
        let fine = SimConfig::new(model, 0.05, 1.0, 100_000, 21);
        let a = moments(&simulate_joint(&coarse).unwrap().terminal_x).unwrap();
        let b = moments(&simulate_joint(&fine).unwrap().terminal_x).unwrap();
        let se_mean = b.std_error_of_mean();
        let se_var = b.variance * (2.0 / b.n as f64).sqrt();
        assert!((a.mean - b.mean).abs() < se_mean, "{} vs {}", a.mean, b.mean);
        assert!((a.variance - b.variance).abs() < se_var, "{} vs {}", a.variance, b.variance);
    }

    #[test]
    fn discrepancy_self_test_and_errors() {
        let p = ModelParams::hull_white_with_beta(2.0, 1.0, 1.0).unwrap();
        let model = spec(p, ModelKind::HullWhite, DriftScheme::ZeroDrift);
        let cfg = SimConfig::new(model, 1.0, 1.0, 20_000, 8);
        let bo = simulate_bo(&cfg).unwrap();
        let ks = ks_against_bo(&bo.terminal_x, model, 1.0).unwrap();
        assert!(ks < 1.63 / (bo.len() as f64).sqrt(), "KS {ks}");

        let small = SimConfig::new(model, 0.1, 1.0, 999, 8);
        assert!(matches!(bo_discrepancy(&small, &[1.0]), Err(Error::InsufficientData(_))));
        let short = SimConfig::new(model, 0.1, 1.0, 2000, 8);
        assert!(bo_discrepancy(&short, &[2.0]).is_err());
    }

    #[test]
    fn rejects_invalid_configs() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let model = spec(p, ModelKind::Heston, DriftScheme::Ito);
        let ok = SimConfig::new(model, 0.1, 1.0, 10, 0);
        for bad in [
            SimConfig { dt: 0.0, ..ok },
            SimConfig { horizon: 0.01, ..ok },
            SimConfig { paths: 0, ..ok },
            SimConfig { rho: 1.5, ..ok },
            SimConfig { v0: InitialVariance::Fixed(-1.0), ..ok },
        ] {
            assert!(simulate_joint(&bad).is_err());
        }
    }
}
