use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voltail::detrend::{self, LagReturns};
use voltail::fit::{self, BinModel};
use voltail::histogram::{Binning, collapse_metric, collapse_noise_floor};
use voltail::montecarlo::simulate_bo;
use voltail::{DriftScheme, EmpiricalHist, ModelKind, ModelParams, ModelSpec, PriceSeries, SimConfig};

fn gbm(n: usize, mu: f64, sigma: f64, seed: u64) -> PriceSeries {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let mut ln_s = 0.0;
    let mut prices = vec![1.0];
    for _ in 1..n {
        ln_s += mu + sigma * g.sample::<f64, _>(StandardNormal);
        prices.push(ln_s.exp());
    }
    PriceSeries::new(prices).unwrap()
}

fn tsallis_sample(beta: f64, theta: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let p = ModelParams::hull_white_with_beta(beta, theta, 1.0).unwrap();
    let spec = ModelSpec::new(p, ModelKind::HullWhite, DriftScheme::ZeroDrift);
    simulate_bo(&SimConfig::new(spec, t, t, n, seed)).unwrap().terminal_x
}

#[test]
fn gbm_mean_trend() {
    let mu = 4.35e-4;
    let prices = gbm(6000, mu, 1e-3, 7);
    let lags: Vec<usize> = (1..=500).collect();
    let s = detrend::trend_summary(&prices, &lags).unwrap();
    assert!((s.mu - mu).abs() < 0.1 * mu, "mu {}", s.mu);
}

#[test]
fn gaussian_increments_width_grows_as_sqrt_lag() {
    let prices = gbm(200_000, 0.0, 0.01, 8);
    let lags: Vec<usize> = (1..=100).collect();
    let s = detrend::trend_summary(&prices, &lags).unwrap();
    let w1 = s.rows[0].width;
    for r in &s.rows {
        let ratio = r.width / w1 / (r.lag as f64).sqrt();
        assert!((ratio - 1.0).abs() < 0.05, "lag {}: {ratio}", r.lag);
    }
}

#[test]
fn round_trip_within_three_standard_errors() {
    let mut seed = 100;
    for beta in [0.7, 1.0, 2.0, 5.0] {
        for theta in [0.5, 1.0, 2.0] {
            for t in [1.0, 4.0] {
                seed += 1;
                let x = tsallis_sample(beta, theta, t, 1_000_000, seed);
                let r = fit::fit_tsallis(&EmpiricalHist::bin(&x, 100).unwrap(), t).unwrap();
                let (b, th) = (r.beta.unwrap(), r.theta.unwrap());
                let (sb, st) = (r.se_beta.unwrap(), r.se_theta.unwrap());
                assert!((b - beta).abs() < 3.0 * sb, "beta {beta} theta {theta} t {t}: {b} +- {sb}");
                assert!((th - theta).abs() < 3.0 * st, "beta {beta} theta {theta} t {t}: {th} +- {st}");
                assert!(r.rss_tsallis <= r.grid_best_objective);
            }
        }
    }
}

#[test]
fn heavy_tails_favor_tsallis_over_gaussian() {
    let x = tsallis_sample(0.861, 1.03, 1.0, 1_000_000, 9);
    let h = EmpiricalHist::bin(&x, 100).unwrap();
    let r = fit::fit_tsallis(&h, 1.0).unwrap();
    assert!((r.beta.unwrap() - 0.861).abs() < 0.1);
    assert!((r.theta.unwrap() - 1.03).abs() < 0.1);
    assert!(r.rss_gaussian.unwrap() > 10.0 * r.rss_tsallis);
    let symmetric = EmpiricalHist::bin_clipped(&x, 100, 10.0).unwrap();
    assert!(fit::fit_gaussian(&symmetric).unwrap().mean.abs() < 0.05);
}

#[test]
fn gaussian_data_fit() {
    let mut g = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<f64> = (0..1_000_000).map(|_| g.sample(StandardNormal)).collect();
    let h = EmpiricalHist::bin(&x, 100).unwrap();
    let r = fit::fit_tsallis(&h, 1.0).unwrap();
    assert!(r.c > 10.0, "c {}", r.c);
    // the Gaussian has one fewer shape freedom; allow chi-square noise
    let noise = 3.0 * (2.0 * r.n_bins_used as f64).sqrt();
    assert!(r.rss_gaussian.unwrap() <= r.rss_tsallis + noise);
    let midpoint = voltail::fit::fit_tsallis_points(&h.fit_points(), 1.0, BinModel::Midpoint).unwrap();
    assert!(midpoint.c > 10.0);
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let tr = detrend::linear_detrend(&LagReturns { lag: 1, xi: x.to_vec() }).unwrap();
    detrend::normalize(&tr).unwrap().x
}

fn lag_samples(kind: ModelKind, scheme: DriftScheme, lags: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let p = ModelParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
    let spec = ModelSpec::new(p, kind, scheme);
    lags.iter()
        .enumerate()
        .map(|(i, &t)| normalized(&simulate_bo(&SimConfig::new(spec, t, t, 100_000, seed + i as u64)).unwrap().terminal_x))
        .collect()
}

#[test]
fn scaling_collapse_separates_drift_schemes() {
    let lags = [1.0, 5.0, 25.0];
    let binning = Binning::Symmetric { bins: 60, clip: 6.0 };
    let metric = |samples: &[Vec<f64>]| {
        let hists = samples.iter().map(|s| binning.apply(s)).collect::<voltail::Result<Vec<_>>>().unwrap();
        collapse_metric(&hists).unwrap()
    };

    let zero = lag_samples(ModelKind::HullWhite, DriftScheme::ZeroDrift, &lags, 20);
    let refs: Vec<&[f64]> = zero.iter().map(|v| v.as_slice()).collect();
    let floor = collapse_noise_floor(&refs, binning, 40, 0.95, 5).unwrap();
    let d_zero = metric(&zero);
    assert!(d_zero < floor, "{d_zero} vs floor {floor}");

    let ito = lag_samples(ModelKind::Heston, DriftScheme::Ito, &lags, 30);
    let d_ito = metric(&ito);
    assert!(d_ito > 3.0 * floor, "{d_ito} vs floor {floor}");
}
