//! Weighted least-squares fits in log-density space: the Tsallis form
//! `ln P = a - c ln(1 + b x^2 / 2)`, a Gaussian parabola baseline, and the
//! log-log slope used for width-vs-lag scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::EmpiricalHist;

/// One nonempty histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    /// Bin midpoint.
    pub x: f64,
    pub density: f64,
    /// Raw count; also the fit weight since `Var[ln P_k] ~ 1 / P_k`.
    pub count: f64,
    /// Half the bin width; 0 for point evaluations.
    pub half_width: f64,
}

impl FitPoint {
    pub fn at(x: f64, density: f64, count: f64) -> Self {
        Self {
            x,
            density,
            count,
            half_width: 0.0,
        }
    }
}

/// How the Tsallis form is compared with a bin's density.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinModel {
    /// `ln rho_k` against the form evaluated at the bin midpoint.
    Midpoint,
    /// `ln rho_k` against the log of the form averaged over the bin. Removes
    /// the bias of coarse bins near the peak.
    #[default]
    BinAverage,
}

impl std::fmt::Display for BinModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinModel::Midpoint => "midpoint",
            BinModel::BinAverage => "bin-average",
        })
    }
}

impl std::str::FromStr for BinModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "midpoint" | "mid" => Ok(BinModel::Midpoint),
            "bin-average" | "average" | "avg" => Ok(BinModel::BinAverage),
            other => Err(Error::InvalidParam(format!("unknown bin model {other:?}"))),
        }
    }
}

// 8-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `ln G` of the shape `G = (1 + b x^2/2)^-c` (bin-averaged if requested)
/// with its derivatives in `b` and `c`.
fn ln_shape(p: &FitPoint, b: f64, c: f64, model: BinModel) -> (f64, f64, f64) {
    let at = |x: f64| {
        let h = 0.5 * x * x;
        let l = (b * h).ln_1p();
        (-c * l, -c * h / (1.0 + b * h), -l)
    };
    if model == BinModel::Midpoint || p.half_width == 0.0 {
        return at(p.x);
    }
    let mut nodes = [(0.0, 0.0, 0.0, 0.0); 8];
    for (k, (&u, &w)) in GL_X.iter().zip(&GL_W).enumerate() {
        let (e1, db1, dc1) = at(p.x - p.half_width * u);
        let (e2, db2, dc2) = at(p.x + p.half_width * u);
        nodes[2 * k] = (w, e1, db1, dc1);
        nodes[2 * k + 1] = (w, e2, db2, dc2);
    }
    let m = nodes.iter().fold(f64::NEG_INFINITY, |m, n| m.max(n.1));
    let (mut g, mut gb, mut gc) = (0.0, 0.0, 0.0);
    for &(w, e, db, dc) in &nodes {
        let v = 0.5 * w * (e - m).exp();
        g += v;
        gb += v * db;
        gc += v * dc;
    }
    (m + g.ln(), gb / g, gc / g)
}

pub const MIN_TSALLIS_BINS: usize = 8;
pub const MIN_GAUSSIAN_BINS: usize = 3;

const LN_B_RANGE: (f64, f64) = (-9.0 * std::f64::consts::LN_10, 9.0 * std::f64::consts::LN_10);
const LN_C_RANGE: (f64, f64) = (-2.0 * std::f64::consts::LN_10, 8.0 * std::f64::consts::LN_10);
const GRID_B: usize = 49;
const GRID_C: usize = 41;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: f64,
    pub variance: f64,
    /// Log of the fitted peak density.
    pub ln_peak: f64,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lag: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `c - 3/2`; absent when `c <= 3/2`.
    pub beta: Option<f64>,
    /// `1 / (b beta t)`; absent when `beta` is.
    pub theta: Option<f64>,
    pub se_a: f64,
    pub se_b: f64,
    pub se_c: f64,
    pub se_beta: Option<f64>,
    pub se_theta: Option<f64>,
    pub rss_tsallis: f64,
    pub rss_gaussian: Option<f64>,
    pub gaussian: Option<GaussianFit>,
    pub n_bins_used: usize,
    /// Weighting of the squared log residuals.
    pub weighting: String,
    pub bin_model: BinModel,
    pub finite_variance: bool,
    pub warnings: Vec<String>,
    pub grid_best_objective: f64,
    pub iterations: usize,
}

/// Profiled objective at `(b, c)`: returns `(a*, weighted RSS)`.
pub fn tsallis_objective(points: &[FitPoint], b: f64, c: f64, model: BinModel) -> (f64, f64) {
    // the residual ln rho - ln G - a is linear in a; a* is the weighted mean
    let z: Vec<f64> = points.iter().map(|p| p.density.ln() - ln_shape(p, b, c, model).0).collect();
    let sw: f64 = points.iter().map(|p| p.count).sum();
    let a = points.iter().zip(&z).map(|(p, z)| p.count * z).sum::<f64>() / sw;
    let rss = points.iter().zip(&z).map(|(p, z)| p.count * (z - a) * (z - a)).sum();
    (a, rss)
}

fn check_points(points: &[FitPoint], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::InsufficientData(format!(
            "fit needs at least {min} nonempty bins, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.density > 0.0 && p.count > 0.0 && p.x.is_finite())) {
        return Err(Error::InvalidParam(format!("invalid fit point {p:?}")));
    }
    Ok(())
}

/// Tsallis fit to the nonempty bins of `hist`, read as the density at lag `t`.
pub fn fit_tsallis(hist: &EmpiricalHist, t: f64) -> Result<FitReport> {
    fit_tsallis_points(&hist.fit_points(), t, BinModel::default())
}

pub fn fit_gaussian(hist: &EmpiricalHist) -> Result<GaussianFit> {
    fit_gaussian_points(&hist.fit_points())
}

pub fn fit_tsallis_points(points: &[FitPoint], t: f64, model: BinModel) -> Result<FitReport> {
    check_points(points, MIN_TSALLIS_BINS)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(crate::error::domain("lag", t));
    }
    let objective = |p: &[f64; 2]| {
        if p[0] < LN_B_RANGE.0 || p[0] > LN_B_RANGE.1 || p[1] < LN_C_RANGE.0 || p[1] > LN_C_RANGE.1 {
            return f64::INFINITY;
        }
        let rss = tsallis_objective(points, p[0].exp(), p[1].exp(), model).1;
        if rss.is_finite() { rss } else { f64::INFINITY }
    };

    let mut best = ([0.0; 2], f64::INFINITY);
    for i in 0..GRID_B {
        let lb = LN_B_RANGE.0 + (LN_B_RANGE.1 - LN_B_RANGE.0) * i as f64 / (GRID_B - 1) as f64;
        for j in 0..GRID_C {
            let lc = LN_C_RANGE.0 + (LN_C_RANGE.1 - LN_C_RANGE.0) * j as f64 / (GRID_C - 1) as f64;
            let v = objective(&[lb, lc]);
            if v < best.1 {
                best = ([lb, lc], v);
            }
        }
    }
    let grid_best = best.1;
    let step = [
        (LN_B_RANGE.1 - LN_B_RANGE.0) / (GRID_B - 1) as f64,
        (LN_C_RANGE.1 - LN_C_RANGE.0) / (GRID_C - 1) as f64,
    ];
    let nm = nelder_mead(objective, best.0, step, 1e-13, 20_000);
    if !nm.converged {
        return Err(Error::FitNotConverged {
            iterations: nm.iterations,
            objective: nm.value,
            b: nm.point[0].exp(),
            c: nm.point[1].exp(),
        });
    }
    let (b, c) = (nm.point[0].exp(), nm.point[1].exp());
    let (a, rss) = tsallis_objective(points, b, c, model);

    let cov = tsallis_covariance(points, b, c, rss, model);
    let (se_a, se_b, se_c) = match &cov {
        Some(m) => (m[0][0].sqrt(), m[1][1].sqrt(), m[2][2].sqrt()),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    let mut warnings = Vec::new();
    if cov.is_none() {
        warnings.push("singular curvature matrix; standard errors unavailable".to_string());
    }
    let finite_variance = c > 1.5;
    let (beta, theta, se_beta, se_theta) = if finite_variance {
        let beta = c - 1.5;
        let theta = 1.0 / (b * beta * t);
        let se_theta = cov.map(|m| {
            // delta method on theta = 1 / (b (c - 3/2) t)
            let (gb, gc) = (-theta / b, -theta / beta);
            (gb * gb * m[1][1] + gc * gc * m[2][2] + 2.0 * gb * gc * m[1][2]).max(0.0).sqrt()
        });
        (Some(beta), Some(theta), Some(se_c), se_theta)
    } else {
        warnings.push(format!("c = {c} <= 3/2: no finite-variance Tsallis interpretation"));
        (None, None, None, None)
    };
    if nm.point[1] >= LN_C_RANGE.1 - 1e-6 {
        warnings.push("c ran to its upper bound; the data are consistent with a Gaussian".to_string());
    }

    let gaussian = fit_gaussian_points(points).ok();
    Ok(FitReport {
        lag: t,
        a,
        b,
        c,
        beta,
        theta,
        se_a,
        se_b,
        se_c,
        se_beta,
        se_theta,
        rss_tsallis: rss,
        rss_gaussian: gaussian.as_ref().map(|g| g.rss),
        gaussian,
        n_bins_used: points.len(),
        weighting: "counts".to_string(),
        bin_model: model,
        finite_variance,
        warnings,
        grid_best_objective: grid_best,
        iterations: nm.iterations,
    })
}

/// Gauss-Newton covariance `s^2 (J^T W J)^{-1}` of `(a, b, c)`, where `s^2`
/// is the reduced chi-square floored at 1 (weights are inverse variances).
fn tsallis_covariance(points: &[FitPoint], b: f64, c: f64, rss: f64, model: BinModel) -> Option<[[f64; 3]; 3]> {
    let mut m = [[0.0; 3]; 3];
    for p in points {
        let (_, db, dc) = ln_shape(p, b, c, model);
        let j = [1.0, db, dc];
        for r in 0..3 {
            for s in 0..3 {
                m[r][s] += p.count * j[r] * j[s];
            }
        }
    }
    let inv = invert3(&m)?;
    let dof = points.len().saturating_sub(3).max(1) as f64;
    let s2 = (rss / dof).max(1.0);
    Some(inv.map(|row| row.map(|v| v * s2)))
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(det.abs() > 1e-14 * scale.powi(3)) || !det.is_finite() {
        return None;
    }
    let inv = [
        [c00, m[0][2] * m[2][1] - m[0][1] * m[2][2], m[0][1] * m[1][2] - m[0][2] * m[1][1]],
        [c01, m[0][0] * m[2][2] - m[0][2] * m[2][0], m[0][2] * m[1][0] - m[0][0] * m[1][2]],
        [c02, m[0][1] * m[2][0] - m[0][0] * m[2][1], m[0][0] * m[1][1] - m[0][1] * m[1][0]],
    ];
    Some(inv.map(|row| row.map(|v| v / det)))
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let inv = invert3(&m)?;
    Some([0, 1, 2].map(|r| (0..3).map(|s| inv[r][s] * rhs[s]).sum()))
}

/// Weighted parabola `ln rho = p0 + p1 x + p2 x^2` with count weights.
pub fn fit_gaussian_points(points: &[FitPoint]) -> Result<GaussianFit> {
    check_points(points, MIN_GAUSSIAN_BINS)?;
    // center and scale x for conditioning
    let sw: f64 = points.iter().map(|p| p.count).sum();
    let x0 = points.iter().map(|p| p.count * p.x).sum::<f64>() / sw;
    let sx = (points.iter().map(|p| p.count * (p.x - x0).powi(2)).sum::<f64>() / sw).sqrt().max(1e-300);
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for p in points {
        let u = (p.x - x0) / sx;
        let basis = [1.0, u, u * u];
        let y = p.density.ln();
        for r in 0..3 {
            rhs[r] += p.count * basis[r] * y;
            for s in 0..3 {
                m[r][s] += p.count * basis[r] * basis[s];
            }
        }
    }
    let q = solve3(m, rhs).ok_or_else(|| Error::InsufficientData("degenerate bin positions for a parabola fit".into()))?;
    if !(q[2] < 0.0) {
        return Err(Error::InvalidParam(format!(
            "log-density is not concave (curvature {}); no Gaussian fit",
            q[2]
        )));
    }
    // back to x: ln rho = q0 + q1 u + q2 u^2 with u = (x - x0)/sx
    let variance = -sx * sx / (2.0 * q[2]);
    let mean = x0 - q[1] * sx / (2.0 * q[2]);
    let ln_peak = q[0] - q[1] * q[1] / (4.0 * q[2]);
    let rss = points
        .iter()
        .map(|p| {
            let u = (p.x - x0) / sx;
            let r = p.density.ln() - (q[0] + q[1] * u + q[2] * u * u);
            p.count * r * r
        })
        .sum();
    Ok(GaussianFit {
        mean,
        variance,
        ln_peak,
        rss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Ordinary least squares of `ln w` on `ln t`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<LogLogFit> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-log fit needs at least 3 points, got {}",
            pairs.len()
        )));
    }
    if let Some(&(t, w)) = pairs.iter().find(|(t, w)| !(*t > 0.0 && *w > 0.0 && t.is_finite() && w.is_finite())) {
        return Err(Error::InvalidParam(format!(
            "log-log fit needs positive finite values, got ({t}, {w})"
        )));
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParam("log-log fit needs at least two distinct lags".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(LogLogFit {
        slope,
        intercept,
        stderr,
    })
}

struct NmResult {
    point: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead on two parameters; stops when the simplex values agree to
/// `ftol` (relative) and the simplex has collapsed.
fn nelder_mead<F: Fn(&[f64; 2]) -> f64>(f: F, start: [f64; 2], step: [f64; 2], ftol: f64, max_iter: usize) -> NmResult {
    let mut s = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut v = s.map(|p| f(&p));
    let lerp = |a: &[f64; 2], b: &[f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        s = idx.map(|i| s[i]);
        v = idx.map(|i| v[i]);
        let spread = (v[2] - v[0]).abs();
        let size = (0..2).map(|k| (s[1][k] - s[0][k]).abs().max((s[2][k] - s[0][k]).abs())).fold(0.0, f64::max);
        if v[2].is_finite() && spread <= ftol * (v[0].abs() + 1e-300) && size < 1e-7 {
            converged = true;
            break;
        }
        if size < 1e-12 {
            // collapsed without meeting the value tolerance (flat valley)
            converged = v[0].is_finite();
            break;
        }
        iterations += 1;
        let centroid = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let xr = lerp(&centroid, &s[2], -1.0);
        let fr = f(&xr);
        if fr < v[0] {
            let xe = lerp(&centroid, &s[2], -2.0);
            let fe = f(&xe);
            if fe < fr {
                s[2] = xe;
                v[2] = fe;
            } else {
                s[2] = xr;
                v[2] = fr;
            }
        } else if fr < v[1] {
            s[2] = xr;
            v[2] = fr;
        } else {
            let (xc, fc) = if fr < v[2] {
                let xc = lerp(&centroid, &xr, 0.5);
                (xc, f(&xc))
            } else {
                let xc = lerp(&centroid, &s[2], 0.5);
                (xc, f(&xc))
            };
            if fc < v[2].min(fr) {
                s[2] = xc;
                v[2] = fc;
            } else {
                for k in 1..3 {
                    s[k] = lerp(&s[0], &s[k], 0.5);
                    v[k] = f(&s[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    NmResult {
        point: s[best],
        value: v[best],
        iterations,
        converged,
    }
}
