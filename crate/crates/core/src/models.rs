//! Microscopic model family: the coupled Langevin equations
//!
//! ```text
//! dx = -a(v) dt + sqrt(v) dW1
//! dv = -gamma (v - theta) dt + b(v) dW2
//! ```
//!
//! with `a(v)` fixed by the drift scheme and `b(v)` by the model kind.
//! Time is measured in lag units (one sampling interval of the data).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `b(v) = kappa * sqrt(v)`; stationary `v` is Gamma distributed.
    Heston,
    /// `b(v) = kappa * v`; stationary `v` is inverse-Gamma distributed.
    HullWhite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftScheme {
    /// `a(v) = v / 2`.
    Ito,
    /// `a(v) = 0`, the Stratonovich prescription in which the drift vanishes.
    ZeroDrift,
}

/// Rates are per lag unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Relaxation rate of the variance towards `theta`.
    pub gamma: f64,
    /// Mean variance.
    pub theta: f64,
    /// Volatility of volatility. Zero is the deterministic-volatility limit.
    pub kappa: f64,
    /// Deterministic log-price drift, removed from the modified log-return.
    pub mu: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, theta: f64, kappa: f64, mu: f64) -> Result<Self> {
        let p = Self {
            gamma,
            theta,
            kappa,
            mu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Heston parameters with the requested stationary shape `alpha`.
    pub fn heston_with_alpha(alpha: f64, theta: f64, kappa: f64) -> Result<Self> {
        Self::new(alpha * kappa * kappa / (2.0 * theta), theta, kappa, 0.0)
    }

    /// Hull-White parameters with the requested stationary shape `beta`.
    pub fn hull_white_with_beta(beta: f64, theta: f64, kappa: f64) -> Result<Self> {
        Self::new(beta * kappa * kappa / 2.0, theta, kappa, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidParam(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParam(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParam(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        self.kappa == 0.0
    }

    /// Heston shape `alpha = 2 gamma theta / kappa^2`.
    pub fn alpha(&self) -> Result<f64> {
        shape_constants(self, ModelKind::Heston)
    }

    /// Hull-White shape `beta = 2 gamma / kappa^2`.
    pub fn beta(&self) -> Result<f64> {
        shape_constants(self, ModelKind::HullWhite)
    }
}

pub fn drift_a(v: f64, scheme: DriftScheme) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(domain("variance", v));
    }
    Ok(match scheme {
        DriftScheme::Ito => 0.5 * v,
        DriftScheme::ZeroDrift => 0.0,
    })
}

pub fn diffusion_b(v: f64, kind: ModelKind, params: &ModelParams) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(domain("variance", v));
    }
    Ok(match kind {
        ModelKind::Heston => params.kappa * v.sqrt(),
        ModelKind::HullWhite => params.kappa * v,
    })
}

/// Stationary shape parameter: `alpha` for Heston, `beta` for Hull-White.
///
/// Returns [`Error::DeterministicLimit`] when `kappa = 0`, where the
/// stationary law is a point mass and no shape exists.
pub fn shape_constants(params: &ModelParams, kind: ModelKind) -> Result<f64> {
    params.validate()?;
    if params.is_deterministic() {
        return Err(Error::DeterministicLimit);
    }
    let k2 = params.kappa * params.kappa;
    Ok(match kind {
        ModelKind::Heston => 2.0 * params.gamma * params.theta / k2,
        ModelKind::HullWhite => 2.0 * params.gamma / k2,
    })
}

/// Parameters together with the model kind and drift scheme.
///
/// Round-trips through a flat `key = value` config with keys
/// `gamma`, `theta`, `kappa`, `mu`, `kind`, `scheme`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: ModelParams,
    pub kind: ModelKind,
    pub scheme: DriftScheme,
}

impl ModelSpec {
    pub fn new(params: ModelParams, kind: ModelKind, scheme: DriftScheme) -> Self {
        Self {
            params,
            kind,
            scheme,
        }
    }

    pub fn drift(&self, v: f64) -> Result<f64> {
        drift_a(v, self.scheme)
    }

    pub fn diffusion(&self, v: f64) -> Result<f64> {
        diffusion_b(v, self.kind, &self.params)
    }

    pub fn shape(&self) -> Result<f64> {
        shape_constants(&self.params, self.kind)
    }

    /// Parses the flat config. Missing `mu` defaults to 0; every other key is required.
    /// Unknown keys are rejected. Blank lines and `#` comments are skipped.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        const KEYS: [&str; 6] = ["gamma", "theta", "kappa", "mu", "kind", "scheme"];
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidParam(format!("unknown config key '{k}'")));
        }
        let num = |key: &str| -> Result<f64> {
            let raw = map
                .get(key)
                .ok_or_else(|| Error::InvalidParam(format!("missing config key '{key}'")))?;
            raw.parse()
                .map_err(|_| Error::InvalidParam(format!("{key}: not a number: '{raw}'")))
        };
        let mu = match map.get("mu") {
            Some(_) => num("mu")?,
            None => 0.0,
        };
        let params = ModelParams::new(num("gamma")?, num("theta")?, num("kappa")?, mu)?;
        let kind = map
            .get("kind")
            .ok_or_else(|| Error::InvalidParam("missing config key 'kind'".into()))?
            .parse()?;
        let scheme = map
            .get("scheme")
            .ok_or_else(|| Error::InvalidParam("missing config key 'scheme'".into()))?
            .parse()?;
        Ok(Self::new(params, kind, scheme))
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "gamma = {}\ntheta = {}\nkappa = {}\nmu = {}\nkind = {}\nscheme = {}\n",
            self.params.gamma, self.params.theta, self.params.kappa, self.params.mu, self.kind, self.scheme
        )
    }
}

/// Splits `key = value` (or `key: value`) lines into a map.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
        let key = k.trim().to_ascii_lowercase();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(map)
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Heston => "heston",
            ModelKind::HullWhite => "hull-white",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "heston" => Ok(ModelKind::Heston),
            "hull-white" | "hullwhite" | "hw" => Ok(ModelKind::HullWhite),
            other => Err(Error::InvalidParam(format!("unknown model kind '{other}'"))),
        }
    }
}

impl fmt::Display for DriftScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftScheme::Ito => "ito",
            DriftScheme::ZeroDrift => "zero-drift",
        })
    }
}

impl FromStr for DriftScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ito" => Ok(DriftScheme::Ito),
            "zero-drift" | "zerodrift" | "zero" | "stratonovich" => Ok(DriftScheme::ZeroDrift),
            other => Err(Error::InvalidParam(format!("unknown drift scheme '{other}'"))),
        }
    }
}
