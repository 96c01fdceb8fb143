use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use voltail::bo_pdf::{BoPdf, HestonPdf, TsallisParams};
use voltail::detrend::{self, PriceSeries};
use voltail::fit::{self, BinModel, FitReport, LogLogFit};
use voltail::histogram::{collapse_metric, EmpiricalHist};
use voltail::ingest::{self, IngestOptions, Ingested};
use voltail::models::parse_key_values;
use voltail::montecarlo::{self, LagDiscrepancy};
use voltail::{DriftScheme, InitialVariance, ModelKind, ModelSpec, SimConfig};

use crate::args::{
    AnalyzeArgs, BinModelArg, DetrendArgs, HistArgs, InputArgs, ModelArgs, PdfArgs, PdfForm, SimMode, SimulateArgs,
};

pub const SEED_ENV: &str = "VOLTAIL_SEED";

/// Files written and warnings raised by a subcommand.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn load(input: &InputArgs) -> Result<Ingested> {
    ingest::read_prices(&input.input, IngestOptions { lenient: input.lenient })
        .with_context(|| format!("reading prices from {}", input.input.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes to `path`, or stdout when `None`.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w).with_context(|| format!("writing {}", p.display()))?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn bin(data: &[f64], bins: usize, clip: Option<f64>) -> voltail::Result<EmpiricalHist> {
    match clip {
        Some(c) => EmpiricalHist::bin_clipped(data, bins, c),
        None => EmpiricalHist::bin(data, bins),
    }
}

#[derive(Debug, Serialize)]
pub struct SkippedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct LagReport {
    pub lag: usize,
    pub n_returns: usize,
    pub trend_a: Option<f64>,
    pub trend_b: Option<f64>,
    pub width: Option<f64>,
    pub index_moment: Option<f64>,
    pub outside_range: Option<u64>,
    pub fit: Option<FitReport>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct TrendReport {
    pub lags_used: usize,
    pub max_lag: usize,
    pub mu: Option<f64>,
    pub width_scaling: Option<LogLogFit>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub input: String,
    pub n_prices: usize,
    pub skipped_rows: Vec<SkippedRow>,
    pub bins: usize,
    pub clip: Option<f64>,
    pub bin_model: BinModel,
    pub lags: Vec<LagReport>,
    pub collapse_metric: Option<f64>,
    pub trend: TrendReport,
}

struct LagWork {
    report: LagReport,
    hist: Option<EmpiricalHist>,
}

fn analyze_lag(prices: &PriceSeries, lag: usize, args: &AnalyzeArgs, model: BinModel) -> LagWork {
    let mut report = LagReport {
        lag,
        n_returns: 0,
        trend_a: None,
        trend_b: None,
        width: None,
        index_moment: None,
        outside_range: None,
        fit: None,
        error: None,
    };
    let result = (|| -> voltail::Result<EmpiricalHist> {
        let lr = detrend::lag_returns(prices, lag)?;
        report.n_returns = lr.len();
        let tr = detrend::linear_detrend(&lr)?;
        report.trend_a = Some(tr.a);
        report.trend_b = Some(tr.b);
        report.width = Some(tr.width());
        let d = detrend::normalize(&tr)?;
        let h = bin(&d.x, args.bins, args.clip)?;
        report.index_moment = Some(h.index_moment());
        report.outside_range = Some(h.outside());
        Ok(h)
    })();
    match result {
        Ok(h) => {
            match fit::fit_tsallis_points(&h.fit_points(), lag as f64, model) {
                Ok(f) => report.fit = Some(f),
                Err(e) => report.error = Some(format!("fit: {e}")),
            }
            LagWork { report, hist: Some(h) }
        }
        Err(e) => {
            report.error = Some(e.to_string());
            LagWork { report, hist: None }
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(AnalyzeReport, Outcome)> {
    if args.bins < 2 {
        bail!("--bins must be at least 2");
    }
    let data = load(&args.input)?;
    let prices = &data.series;
    let model = match args.bin_model {
        BinModelArg::Midpoint => BinModel::Midpoint,
        BinModelArg::BinAverage => BinModel::BinAverage,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outcome = Outcome::default();
    for (line, reason) in &data.skipped {
        outcome.warnings.push(format!("skipped line {line}: {reason}"));
    }

    let work: Vec<LagWork> = args.lags.0.par_iter().map(|&lag| analyze_lag(prices, lag, args, model)).collect();
    for w in &work {
        if let Some(h) = &w.hist {
            let path = args.out.join(format!("hist_lag{}.tsv", w.report.lag));
            let mut f = create(&path)?;
            h.write_tsv(&mut f)?;
            f.flush()?;
            outcome.files.push(path);
        }
        if let Some(e) = &w.report.error {
            outcome.warnings.push(format!("lag {}: {e}", w.report.lag));
        }
    }
    let hists: Vec<EmpiricalHist> = work.iter().filter_map(|w| w.hist.clone()).collect();
    let collapse = (hists.len() >= 2).then(|| collapse_metric(&hists).ok()).flatten();

    let max_lag = prices.max_lag();
    let trend_lags: Vec<usize> = args.trend_lags.0.iter().copied().filter(|&l| l <= max_lag).collect();
    if trend_lags.len() < args.trend_lags.0.len() {
        outcome.warnings.push(format!(
            "trend lags above {max_lag} dropped ({} prices)",
            prices.len()
        ));
    }
    let trend = match detrend::trend_summary(prices, &trend_lags) {
        Ok(summary) => {
            let path = args.out.join("trend.tsv");
            let mut f = create(&path)?;
            writeln!(f, "lag\ta\tb\tmean\twidth")?;
            for r in &summary.rows {
                writeln!(f, "{}\t{:.10e}\t{:.10e}\t{:.10e}\t{:.10e}", r.lag, r.a, r.b, r.mean, r.width)?;
            }
            f.flush()?;
            outcome.files.push(path);
            let pairs: Vec<(f64, f64)> = summary.rows.iter().map(|r| (r.lag as f64, r.width)).collect();
            let (scaling, error) = match fit::loglog_slope(&pairs) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(format!("width scaling: {e}"))),
            };
            TrendReport {
                lags_used: trend_lags.len(),
                max_lag,
                mu: Some(summary.mu),
                width_scaling: scaling,
                error,
            }
        }
        Err(e) => TrendReport {
            lags_used: trend_lags.len(),
            max_lag,
            mu: None,
            width_scaling: None,
            error: Some(e.to_string()),
        },
    };

    let report = AnalyzeReport {
        input: args.input.input.display().to_string(),
        n_prices: prices.len(),
        skipped_rows: data
            .skipped
            .iter()
            .map(|(line, reason)| SkippedRow {
                line: *line,
                reason: reason.clone(),
            })
            .collect(),
        bins: args.bins,
        clip: args.clip,
        bin_model: model,
        lags: work.into_iter().map(|w| w.report).collect(),
        collapse_metric: collapse,
        trend,
    };
    let path = args.out.join("report.json");
    write_json(&path, &report)?;
    outcome.files.push(path);
    Ok((report, outcome))
}

fn read_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_key_values(&text).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(BTreeMap::new()),
    }
}

const MODEL_KEYS: [&str; 6] = ["gamma", "theta", "kappa", "mu", "kind", "scheme"];

/// Model from flags over config entries; kind defaults to hull-white and
/// scheme to zero-drift.
fn resolve_model(m: &ModelArgs, config: &mut BTreeMap<String, String>) -> Result<ModelSpec> {
    let mut map = BTreeMap::new();
    if let Some(kind) = config.remove("model") {
        config.insert("kind".into(), kind);
    }
    for k in MODEL_KEYS {
        if let Some(v) = config.remove(k) {
            map.insert(k.to_string(), v);
        }
    }
    let flags = [
        ("gamma", m.gamma.map(|v| v.to_string())),
        ("theta", m.theta.map(|v| v.to_string())),
        ("kappa", m.kappa.map(|v| v.to_string())),
        ("mu", m.mu.map(|v| v.to_string())),
        ("kind", m.model.clone()),
        ("scheme", m.scheme.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    }
    map.entry("kind".into()).or_insert_with(|| "hull-white".into());
    map.entry("scheme".into()).or_insert_with(|| "zero-drift".into());
    for k in ["gamma", "theta", "kappa"] {
        if !map.contains_key(k) {
            bail!("missing model parameter {k}: pass --{k} or set it in --config");
        }
    }
    Ok(ModelSpec::from_map(&map)?)
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) if !s.trim().is_empty() => {
            let v = s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
            Ok(Some(v))
        }
        _ => Ok(None),
    }
}

fn parse_v0(s: &str) -> Result<InitialVariance> {
    if s.trim().eq_ignore_ascii_case("stationary") {
        return Ok(InitialVariance::Stationary);
    }
    let v: f64 = s.trim().parse().map_err(|_| anyhow!("v0 must be a number or 'stationary', got {s:?}"))?;
    Ok(InitialVariance::Fixed(v))
}

/// Everything needed to run `simulate`, resolved from flags, config and env.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub config: SimConfig,
    pub mode: SimMode,
}

pub fn resolve_simulation(args: &SimulateArgs) -> Result<SimPlan> {
    let mut config = read_config(args.model.config.as_deref())?;
    let model = resolve_model(&args.model, &mut config)?;
    let num = |flag: Option<f64>, key: &str, default: f64, cfg: &BTreeMap<String, String>| -> Result<f64> {
        match (flag, cfg.get(key)) {
            (Some(v), _) => Ok(v),
            (None, Some(s)) => s.parse().map_err(|_| anyhow!("config {key}: not a number: {s:?}")),
            (None, None) => Ok(default),
        }
    };
    let dt = num(args.dt, "dt", 0.01, &config)?;
    let horizon = num(args.horizon, "horizon", 1.0, &config)?;
    let rho = num(args.rho, "rho", 0.0, &config)?;
    let paths = match (args.paths, config.get("paths")) {
        (Some(p), _) => p,
        (None, Some(s)) => s.parse().map_err(|_| anyhow!("config paths: not an integer: {s:?}"))?,
        (None, None) => 10_000,
    };
    let seed = match (seed_override()?, args.seed, config.get("seed")) {
        (Some(s), _, _) | (None, Some(s), _) => s,
        (None, None, Some(s)) => s.parse().map_err(|_| anyhow!("config seed: not an integer: {s:?}"))?,
        (None, None, None) => 0,
    };
    let v0 = match (&args.v0, config.get("v0")) {
        (Some(s), _) | (None, Some(s)) => parse_v0(s)?,
        (None, None) => InitialVariance::Stationary,
    };
    let mode = match (args.mode, config.get("mode")) {
        (Some(m), _) => m,
        (None, Some(s)) => match s.as_str() {
            "joint" => SimMode::Joint,
            "bo" => SimMode::Bo,
            other => bail!("config mode must be joint or bo, got {other:?}"),
        },
        (None, None) => SimMode::Joint,
    };
    for key in ["dt", "horizon", "rho", "paths", "seed", "v0", "mode"] {
        config.remove(key);
    }
    if let Some(k) = config.keys().next() {
        bail!("unknown config key {k:?}");
    }
    let mut cfg = SimConfig::new(model, dt, horizon, paths, seed);
    cfg.rho = rho;
    cfg.v0 = v0;
    cfg.validate()?;
    Ok(SimPlan { config: cfg, mode })
}

#[derive(Debug, Serialize)]
pub struct CompareRow {
    pub lag: f64,
    pub gamma_t: f64,
    /// Joint simulation against the stationary-volatility law.
    pub ks_joint_vs_bo: f64,
    pub p_value: f64,
    /// Stationary-volatility sample against the analytic law.
    pub ks_bo_sample_vs_pdf: f64,
    /// 99% Kolmogorov critical value for the sample size.
    pub ks_floor_99: f64,
    pub analytic: &'static str,
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub model: ModelSpec,
    pub paths: usize,
    pub dt: f64,
    pub rho: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub rows: Vec<CompareRow>,
}

fn compare(cfg: &SimConfig, lags: &[f64], warnings: Vec<String>) -> Result<CompareReport> {
    let mut joint = *cfg;
    joint.horizon = lags.iter().cloned().fold(cfg.horizon, f64::max);
    let disc: Vec<LagDiscrepancy> = montecarlo::bo_discrepancy(&joint, lags)?;
    let tsallis = cfg.model.kind == ModelKind::HullWhite
        && cfg.model.scheme == DriftScheme::ZeroDrift
        && !cfg.model.params.is_deterministic();
    let mut rows = Vec::with_capacity(lags.len());
    for (i, d) in disc.into_iter().enumerate() {
        let mut bo_cfg = SimConfig::new(cfg.model, d.lag, d.lag, cfg.paths, cfg.seed.wrapping_add(1 + i as u64));
        bo_cfg.rho = 0.0;
        let x = montecarlo::simulate_bo(&bo_cfg)?.terminal_x;
        let (ks, analytic) = if tsallis {
            let tp = TsallisParams::from_model(&cfg.model.params, d.lag)?;
            (voltail::stats::ks_statistic(&x, |v| tp.cdf(v))?, "tsallis")
        } else {
            (montecarlo::ks_against_bo(&x, cfg.model, d.lag)?, "quadrature")
        };
        rows.push(CompareRow {
            lag: d.lag,
            gamma_t: d.gamma_t,
            ks_joint_vs_bo: d.ks,
            p_value: d.p_value,
            ks_bo_sample_vs_pdf: ks,
            ks_floor_99: 1.628 / (x.len() as f64).sqrt(),
            analytic,
        });
    }
    Ok(CompareReport {
        model: cfg.model,
        paths: cfg.paths,
        dt: cfg.dt,
        rho: cfg.rho,
        seed: cfg.seed,
        warnings,
        rows,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let plan = resolve_simulation(args)?;
    let cfg = &plan.config;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outcome = Outcome::default();
    if let Some(b) = args.bins {
        if b < 2 {
            bail!("--bins must be at least 2");
        }
    }

    let set = match plan.mode {
        SimMode::Joint => montecarlo::simulate_joint(cfg)?,
        SimMode::Bo => montecarlo::simulate_bo(cfg)?,
    };
    let path = args.out.join("terminal_x.txt");
    let mut f = create(&path)?;
    for x in &set.terminal_x {
        writeln!(f, "{x}")?;
    }
    f.flush()?;
    outcome.files.push(path);

    if let Some(bins) = args.bins {
        let h = EmpiricalHist::bin(&set.terminal_x, bins)?;
        let path = args.out.join("terminal_hist.tsv");
        let mut f = create(&path)?;
        h.write_tsv(&mut f)?;
        f.flush()?;
        outcome.files.push(path);
    }

    if let Some(lags) = &args.compare {
        if lags.is_empty() || lags.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            bail!("--compare needs positive lags");
        }
        if cfg.rho != 0.0 {
            outcome.warnings.push(format!(
                "rho = {}: the stationary-volatility law assumes independent noises (rho = 0); \
                 the comparison measures the joint run against an rho = 0 prediction",
                cfg.rho
            ));
        }
        let report = compare(cfg, lags, outcome.warnings.clone())?;
        let path = args.out.join("compare.json");
        write_json(&path, &report)?;
        outcome.files.push(path);
    }
    Ok(outcome)
}

/// Density values on the requested grid.
pub fn pdf_table(args: &PdfArgs) -> Result<Vec<(f64, f64)>> {
    if args.points < 2 {
        bail!("--points must be at least 2 for a grid, got {}", args.points);
    }
    if !(args.xmax > args.xmin) {
        bail!("--xmax ({}) must exceed --xmin ({})", args.xmax, args.xmin);
    }
    let grid: Vec<f64> = (0..args.points)
        .map(|i| args.xmin + (args.xmax - args.xmin) * i as f64 / (args.points - 1) as f64)
        .collect();
    let values: Vec<f64> = match args.form {
        PdfForm::Tsallis => {
            let tp = match (args.beta, args.model.theta) {
                (Some(beta), Some(theta)) => TsallisParams::new(beta, theta, args.lag)?,
                (Some(_), None) => bail!("--beta needs --theta"),
                (None, _) => {
                    let spec = resolve_model(&args.model, &mut read_config(args.model.config.as_deref())?)?;
                    if spec.kind != ModelKind::HullWhite || spec.scheme != DriftScheme::ZeroDrift {
                        bail!(
                            "the Tsallis form is the {} {} density only for hull-white with zero-drift; \
                             use --form general",
                            spec.kind,
                            spec.scheme
                        );
                    }
                    TsallisParams::from_model(&spec.params, args.lag)?
                }
            };
            grid.iter().map(|&x| tp.pdf(x)).collect()
        }
        PdfForm::Heston => {
            let spec = resolve_model(&args.model, &mut read_config(args.model.config.as_deref())?)?;
            let h = HestonPdf::new(&spec, args.lag)?;
            grid.iter().map(|&x| h.pdf(x)).collect()
        }
        PdfForm::General => {
            let spec = resolve_model(&args.model, &mut read_config(args.model.config.as_deref())?)?;
            let bo = BoPdf::new(spec, args.lag)?;
            grid.par_iter().map(|&x| bo.pdf_general(x)).collect::<voltail::Result<_>>()?
        }
    };
    Ok(grid.into_iter().zip(values).collect())
}

pub fn cmd_pdf(args: &PdfArgs) -> Result<Outcome> {
    let table = pdf_table(args)?;
    with_output(args.out.as_deref(), |w| {
        writeln!(w, "x\tdensity")?;
        for (x, d) in &table {
            writeln!(w, "{x:.10e}\t{d:.10e}")?;
        }
        Ok(())
    })?;
    Ok(Outcome {
        files: args.out.iter().cloned().collect(),
        warnings: Vec::new(),
    })
}

pub fn cmd_detrend(args: &DetrendArgs) -> Result<Outcome> {
    let data = load(&args.input)?;
    let tr = detrend::linear_detrend(&detrend::lag_returns(&data.series, args.lag)?)?;
    let d = detrend::normalize(&tr)?;
    let lr = detrend::lag_returns(&data.series, args.lag)?;
    with_output(args.out.as_deref(), |w| {
        writeln!(w, "i\txi\ty\tx")?;
        for (k, ((xi, y), x)) in lr.xi.iter().zip(&tr.y).zip(&d.x).enumerate() {
            writeln!(w, "{}\t{xi:.12e}\t{y:.12e}\t{x:.12e}", k + 1)?;
        }
        Ok(())
    })?;
    let mut warnings: Vec<String> = data.skipped.iter().map(|(l, r)| format!("skipped line {l}: {r}")).collect();
    warnings.push(format!("lag {}: a = {:.6e}, b = {:.6e}, width = {:.6e}", args.lag, tr.a, tr.b, d.width));
    Ok(Outcome {
        files: args.out.iter().cloned().collect(),
        warnings,
    })
}

pub fn cmd_hist(args: &HistArgs) -> Result<Outcome> {
    let data = load(&args.input)?;
    let d = detrend::detrended_returns(&data.series, args.lag)?;
    let h = bin(&d.x, args.bins, args.clip)?;
    with_output(args.out.as_deref(), |w| h.write_tsv(w))?;
    Ok(Outcome {
        files: args.out.iter().cloned().collect(),
        warnings: data.skipped.iter().map(|(l, r)| format!("skipped line {l}: {r}")).collect(),
    })
}
