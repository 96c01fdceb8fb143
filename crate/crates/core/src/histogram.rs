//! Equal-width binning of normalized returns, the scaling-collapse distance
//! between lags, and width-vs-lag scaling.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detrend::{self, PriceSeries};
use crate::error::{Error, Result};
use crate::fit::{self, FitPoint, LogLogFit};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalHist {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
    /// Values outside `[edges[0], edges[B]]` (clipped range only).
    outside: u64,
}

impl EmpiricalHist {
    /// `bins` equal intervals over `[min, max]` of the data; the maximum
    /// lands in the last bin.
    pub fn bin(data: &[f64], bins: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("cannot bin an empty sample".into()));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!("cannot bin non-finite value {v}")));
        }
        let (lo, hi) = data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if !(hi > lo) {
            return Err(Error::InsufficientData(format!(
                "all {} values equal {lo}; zero-width bin range",
                data.len()
            )));
        }
        Self::bin_range(data, bins, lo, hi)
    }

    /// Bins over a fixed range; values outside it are counted in `outside`
    /// and excluded from the total.
    pub fn bin_range(data: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParam(format!("need at least 2 bins, got {bins}")));
        }
        if !(hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParam(format!("bad bin range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        edges[bins] = hi;
        let mut counts = vec![0u64; bins];
        let mut outside = 0u64;
        for &v in data {
            if !(v >= lo && v <= hi) {
                outside += 1;
                continue;
            }
            let mut k = (((v - lo) / width) as usize).min(bins - 1);
            // repair rounding at the edges so bins stay left-closed
            if v < edges[k] {
                k -= 1;
            } else if k + 1 < bins && v >= edges[k + 1] {
                k += 1;
            }
            counts[k] += 1;
        }
        let total = data.len() as u64 - outside;
        if total == 0 {
            return Err(Error::InsufficientData(format!("no values inside [{lo}, {hi}]")));
        }
        Ok(Self {
            edges,
            counts,
            total,
            outside,
        })
    }

    /// Symmetric range `[-clip, clip]`.
    pub fn bin_clipped(data: &[f64], bins: usize, clip: f64) -> Result<Self> {
        Self::bin_range(data, bins, -clip, clip)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn outside(&self) -> u64 {
        self.outside
    }

    pub fn bin_width(&self) -> f64 {
        (self.edges[self.bins()] - self.edges[0]) / self.bins() as f64
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `P_k / (N delta)`.
    pub fn density(&self) -> Vec<f64> {
        let norm = 1.0 / (self.total as f64 * self.bin_width());
        self.counts.iter().map(|&c| c as f64 * norm).collect()
    }

    /// Poisson error of each density value, `sqrt(P_k) / (N delta)`.
    pub fn density_errors(&self) -> Vec<f64> {
        let norm = 1.0 / (self.total as f64 * self.bin_width());
        self.counts.iter().map(|&c| (c as f64).sqrt() * norm).collect()
    }

    /// `sum_k k P_k` with bins indexed from 0; reported, never asserted.
    pub fn index_moment(&self) -> f64 {
        self.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum()
    }

    /// Step-function density at `x`, zero outside the binned range.
    pub fn density_at(&self, x: f64) -> f64 {
        let (lo, hi) = (self.edges[0], self.edges[self.bins()]);
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let k = self.edges.partition_point(|&e| e <= x).clamp(1, self.bins()) - 1;
        self.counts[k] as f64 / (self.total as f64 * self.bin_width())
    }

    /// Nonempty bins as fit input.
    pub fn fit_points(&self) -> Vec<FitPoint> {
        let density = self.density();
        let half_width = 0.5 * self.bin_width();
        self.midpoints()
            .into_iter()
            .zip(density)
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|((x, d), &c)| FitPoint {
                x,
                density: d,
                count: c as f64,
                half_width,
            })
            .collect()
    }

    /// Columns: midpoint, density, count, Poisson error.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x\tdensity\tcount\terror")?;
        for (((x, d), c), e) in self
            .midpoints()
            .iter()
            .zip(self.density())
            .zip(&self.counts)
            .zip(self.density_errors())
        {
            writeln!(w, "{x:.10e}\t{d:.10e}\t{c}\t{e:.10e}")?;
        }
        Ok(())
    }
}

/// Sup-norm distance between two histogram step densities, taken over the
/// union of their edges with density zero outside each support.
pub fn sup_distance(p: &EmpiricalHist, q: &EmpiricalHist) -> f64 {
    let mut grid: Vec<f64> = p.edges().iter().chain(q.edges()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (p.density_at(m) - q.density_at(m)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest pairwise [`sup_distance`] among histograms of normalized data.
pub fn collapse_metric(hists: &[EmpiricalHist]) -> Result<f64> {
    if hists.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "collapse metric needs at least 2 histograms, got {}",
            hists.len()
        )));
    }
    let mut d = 0.0f64;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            d = d.max(sup_distance(&hists[i], &hists[j]));
        }
    }
    Ok(d)
}

/// Bin range rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "range")]
pub enum Binning {
    /// `[min, max]` of the data.
    MinMax { bins: usize },
    /// `[-clip, clip]`, for comparisons across datasets.
    Symmetric { bins: usize, clip: f64 },
}

impl Binning {
    pub fn apply(&self, data: &[f64]) -> Result<EmpiricalHist> {
        match *self {
            Binning::MinMax { bins } => EmpiricalHist::bin(data, bins),
            Binning::Symmetric { bins, clip } => EmpiricalHist::bin_clipped(data, bins, clip),
        }
    }
}

/// Bootstrap noise floor for [`collapse_metric`]: pools the samples (the
/// null of a common law), redraws each with its own size, and returns the
/// `quantile` of the metric over `replicates` draws.
pub fn collapse_noise_floor(
    samples: &[&[f64]],
    binning: Binning,
    replicates: usize,
    quantile: f64,
    seed: u64,
) -> Result<f64> {
    if samples.len() < 2 || replicates == 0 || !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParam(
            "noise floor needs >= 2 samples, >= 1 replicate and a quantile in [0, 1]".into(),
        ));
    }
    let pool: Vec<f64> = samples.iter().flat_map(|s| s.iter().copied()).collect();
    let mut stats = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, r as u64);
            let hists = samples
                .iter()
                .map(|s| {
                    let draw: Vec<f64> = (0..s.len()).map(|_| pool[g.random_range(0..pool.len())]).collect();
                    binning.apply(&draw)
                })
                .collect::<Result<Vec<_>>>()?;
            collapse_metric(&hists)
        })
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    let idx = ((quantile * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1);
    Ok(stats[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthScaling {
    /// `(lag, width)` per lag.
    pub widths: Vec<(usize, f64)>,
    pub fit: LogLogFit,
}

/// Detrended width per lag and the slope of `ln w` against `ln t`.
pub fn width_vs_lag(prices: &PriceSeries, lags: &[usize]) -> Result<WidthScaling> {
    if lags.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "width-vs-lag needs at least 3 lags, got {}",
            lags.len()
        )));
    }
    let summary = detrend::trend_summary(prices, lags)?;
    let widths: Vec<(usize, f64)> = summary.rows.iter().map(|r| (r.lag, r.width)).collect();
    let pairs: Vec<(f64, f64)> = widths.iter().map(|&(t, w)| (t as f64, w)).collect();
    let fit = fit::loglog_slope(&pairs)?;
    Ok(WidthScaling { widths, fit })
}
