//! Lag-t log-returns, closed-form linear detrending in the index, and
//! unit-variance normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl PriceSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::build(values, None)
    }

    pub fn with_labels(values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::InvalidParam(format!(
                "{} labels for {} prices",
                labels.len(),
                values.len()
            )));
        }
        Self::build(values, Some(labels))
    }

    fn build(values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "a price series needs at least 3 values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParam(format!(
                "price #{} is {}; prices must be positive and finite",
                i + 1,
                values[i]
            )));
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest lag accepted by [`lag_returns`].
    pub fn max_lag(&self) -> usize {
        self.values.len() - 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagReturns {
    pub lag: usize,
    /// `xi_i = ln(s_{i+lag} / s_i)`.
    pub xi: Vec<f64>,
}

impl LagReturns {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// Overlapping lag returns: one value per start index, `len - lag` in total.
pub fn lag_returns(prices: &PriceSeries, lag: usize) -> Result<LagReturns> {
    lag_returns_strided(prices, lag, 1)
}

/// Lag returns on disjoint windows (start indices `0, lag, 2 lag, ...`).
pub fn lag_returns_disjoint(prices: &PriceSeries, lag: usize) -> Result<LagReturns> {
    lag_returns_strided(prices, lag, lag.max(1))
}

fn lag_returns_strided(prices: &PriceSeries, lag: usize, stride: usize) -> Result<LagReturns> {
    if lag == 0 || lag > prices.max_lag() {
        return Err(Error::InvalidParam(format!(
            "lag {lag} outside 1..={} for {} prices",
            prices.max_lag(),
            prices.len()
        )));
    }
    let s = &prices.values;
    let xi = (0..s.len() - lag).step_by(stride).map(|i| (s[i + lag] / s[i]).ln()).collect();
    Ok(LagReturns { lag, xi })
}

/// Result of removing `a + b i` (i = 1..N) from a return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrend {
    pub lag: usize,
    pub a: f64,
    pub b: f64,
    pub mean: f64,
    /// Residuals `y_i = xi_i - a - b i`.
    pub y: Vec<f64>,
    /// Root mean square of the input returns.
    pub xi_rms: f64,
}

/// Residual widths below this fraction of the input scale are rounding noise.
const ZERO_WIDTH: f64 = 1e-12;

impl LinearTrend {
    /// `sqrt(sum y^2 / N)`, or exactly 0 when the series is a pure trend.
    pub fn width(&self) -> f64 {
        let w = (self.y.iter().map(|v| v * v).sum::<f64>() / self.y.len() as f64).sqrt();
        if w <= ZERO_WIDTH * self.xi_rms { 0.0 } else { w }
    }
}

/// Closed-form `(a, b, mean)` of the least-squares line through `(i, xi_i)`.
///
/// `b = 6/(N-1) (<i xi>_i - <xi>)` where `<i xi>_i = sum(i xi) / sum(i)`.
/// The difference is accumulated as `sum(i (xi - <xi>)) / sum(i)`, which is the
/// same quantity without the cancellation between two large averages.
pub fn trend_coefficients(xi: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xi.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("detrending needs at least 3 returns, got {n}")));
    }
    let nf = n as f64;
    let mean = xi.iter().sum::<f64>() / nf;
    let sum_i = nf * (nf + 1.0) / 2.0;
    let centered: f64 = xi.iter().enumerate().map(|(k, &v)| (k + 1) as f64 * (v - mean)).sum();
    let b = 6.0 / (nf - 1.0) * (centered / sum_i);
    let a = mean - b * (nf + 1.0) / 2.0;
    Ok((a, b, mean))
}

pub fn linear_detrend(returns: &LagReturns) -> Result<LinearTrend> {
    let (a, b, mean) = trend_coefficients(&returns.xi)?;
    let y = returns
        .xi
        .iter()
        .enumerate()
        .map(|(k, &v)| v - a - b * (k + 1) as f64)
        .collect();
    let xi_rms = (returns.xi.iter().map(|v| v * v).sum::<f64>() / returns.xi.len() as f64).sqrt();
    Ok(LinearTrend {
        lag: returns.lag,
        a,
        b,
        mean,
        y,
        xi_rms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendedReturns {
    pub lag: usize,
    /// Normalized values, `(1/N) sum x^2 = 1`.
    pub x: Vec<f64>,
    pub a: f64,
    pub b: f64,
    /// Width before normalization.
    pub width: f64,
}

/// `x_i = y_i sqrt(N) / sqrt(sum y^2)`.
pub fn normalize_values(y: &[f64]) -> Result<Vec<f64>> {
    let ss: f64 = y.iter().map(|v| v * v).sum();
    if y.is_empty() || !(ss > 0.0) || !ss.is_finite() {
        return Err(Error::InsufficientData(
            "residuals are all zero; a constant series has no return distribution".into(),
        ));
    }
    let scale = (y.len() as f64).sqrt() / ss.sqrt();
    Ok(y.iter().map(|v| v * scale).collect())
}

pub fn normalize(trend: &LinearTrend) -> Result<DetrendedReturns> {
    if trend.width() == 0.0 {
        return Err(Error::InsufficientData(
            "the series is a pure linear trend; no return distribution remains".into(),
        ));
    }
    Ok(DetrendedReturns {
        lag: trend.lag,
        x: normalize_values(&trend.y)?,
        a: trend.a,
        b: trend.b,
        width: trend.width(),
    })
}

/// Lag returns, detrend and normalize in one call.
pub fn detrended_returns(prices: &PriceSeries, lag: usize) -> Result<DetrendedReturns> {
    normalize(&linear_detrend(&lag_returns(prices, lag)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub lag: usize,
    pub a: f64,
    pub b: f64,
    /// Mean log-return over the lag.
    pub mean: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub rows: Vec<TrendRow>,
    /// Slope of `mean(t) = mu t`, fitted through the origin.
    pub mu: f64,
}

pub fn trend_summary(prices: &PriceSeries, lags: &[usize]) -> Result<TrendSummary> {
    if lags.is_empty() {
        return Err(Error::InvalidParam("no lags given".into()));
    }
    let rows = lags
        .iter()
        .map(|&lag| {
            let tr = linear_detrend(&lag_returns(prices, lag)?)?;
            Ok(TrendRow {
                lag,
                a: tr.a,
                b: tr.b,
                mean: tr.mean,
                width: tr.width(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| {
        let t = r.lag as f64;
        (n + t * r.mean, d + t * t)
    });
    Ok(TrendSummary { rows, mu: num / den })
}
