//! Experiment driver behind the `landmarks` binary: configuration parsing,
//! sampler sweeps with error curves, score dumps and bound-check reports.
//!
//! Configuration is a flat `key = value` text file; command-line flags are
//! merged on top of it as the same key/value pairs before validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{self, Dataset, DropColumn};
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, KernelFamily, KernelMatrix, KernelOperator, KernelSpec};
use crate::lambert;
use crate::linalg;
use crate::projector::{
    check_lemma1, error_frobenius_subsets, error_max_norm, error_operator_norm, leverage_scores,
    nystrom, residual_diagonal, KernelSpectrum, LandmarkSet, NystromApprox, ProjectorKernel,
};
use crate::rff::{approx_projector, approx_ras, featurize, rff_build, DEFAULT_FEATURES};
use crate::samplers::{
    check_lemma4, check_ras_guarantee, das_bound, das_sample, oversampling_for, ras_sample,
    rls_sample, uniform_sample, RasParams, DEFAULT_T,
};
use crate::source::MatrixSource;
use crate::synth::{self, Generator};

/// Environment variable holding the worker count for sweeps.
pub const WORKERS_ENV: &str = "LANDMARKS_WORKERS";

const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "data_seed",
    "drop_column",
    "kernel",
    "sigma",
    "gammas",
    "epsilon",
    "c",
    "t",
    "delta",
    "mu",
    "methods",
    "k",
    "seeds",
    "metrics",
    "subset_size",
    "num_subsets",
    "n_features",
    "output",
    "max_exact_n",
];

/// Parses flat `key = value` text. `#` starts a comment; keys are
/// case-insensitive and `-` is read as `_`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", lineno + 1), "expected `key = value`")
        })?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    Ok(map)
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(skip)]
        drop: Option<DropColumn>,
    },
    Synthetic {
        #[serde(serialize_with = "ser_display")]
        generator: Generator,
        n: usize,
        seed: u64,
    },
}

fn ser_display<S: serde::Serializer, T: std::fmt::Debug>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:?}").to_ascii_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ras,
    ApproxRas,
    Das,
    Uniform,
    Rls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Das => "das",
            Method::Ras => "ras",
            Method::Uniform => "uniform",
            Method::Rls => "rls",
            Method::ApproxRas => "approx-ras",
        }
    }

    fn needs_exact_projector(self) -> bool {
        matches!(self, Method::Das | Method::Ras | Method::Rls)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "das" => Ok(Method::Das),
            "ras" => Ok(Method::Ras),
            "uniform" | "unif" => Ok(Method::Uniform),
            "rls" => Ok(Method::Rls),
            "approx-ras" => Ok(Method::ApproxRas),
            other => Err(Error::config("methods", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Opnorm,
    Maxnorm,
    FrobSubsets,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Opnorm => "opnorm",
            Metric::Maxnorm => "maxnorm",
            Metric::FrobSubsets => "frob-subsets",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "opnorm" => Ok(Metric::Opnorm),
            "maxnorm" => Ok(Metric::Maxnorm),
            "frob-subsets" | "frob" => Ok(Metric::FrobSubsets),
            other => Err(Error::config("metrics", format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KChoice {
    List(Vec<usize>),
    /// Every other method uses the number of landmarks RAS selected in the same (γ, seed) cell.
    FromRas,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub kernel: KernelSpec,
    pub gammas: Vec<f64>,
    pub epsilon: f64,
    pub c: f64,
    pub t: f64,
    /// Failure probability used by `check`.
    pub delta: f64,
    /// Stabilizer of the evaluated Nyström approximations.
    pub mu: f64,
    pub methods: Vec<Method>,
    pub k: KChoice,
    pub seeds: Vec<u64>,
    pub metrics: Vec<Metric>,
    pub subset_size: usize,
    pub num_subsets: usize,
    pub n_features: usize,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub max_exact_n: usize,
}

fn parse_num<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::config(field, format!("`{value}` is not a valid number")))
}

fn parse_list<T, F>(field: &str, value: &str, f: F) -> Result<Vec<T>>
where
    F: Fn(&str) -> Result<T>,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(field, "list must not be empty"));
    }
    Ok(items)
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (parse_num("seeds", a)?, parse_num("seeds", b)?);
        if a >= b {
            return Err(Error::config("seeds", format!("empty range {a}..{b}")));
        }
        return Ok((a..b).collect());
    }
    let seeds = parse_list("seeds", value, |s| parse_num("seeds", s))?;
    let mut dedup = seeds.clone();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != seeds.len() {
        return Err(Error::config("seeds", "duplicate seed"));
    }
    Ok(seeds)
}

fn parse_data_source(value: &str, drop: Option<DropColumn>, data_seed: u64) -> Result<DataSource> {
    if let Some(rest) = value.strip_prefix("synthetic:") {
        let (kind, n) = rest
            .split_once(':')
            .ok_or_else(|| Error::config("dataset", "expected `synthetic:<generator>:<n>`"))?;
        let n: usize = parse_num("dataset", n)?;
        if n < 2 {
            return Err(Error::config("dataset", "synthetic data needs n >= 2"));
        }
        return Ok(DataSource::Synthetic {
            generator: kind.parse()?,
            n,
            seed: data_seed,
        });
    }
    if value.is_empty() {
        return Err(Error::config("dataset", "missing dataset path"));
    }
    Ok(DataSource::Csv {
        path: PathBuf::from(value),
        drop,
    })
}

impl ExperimentConfig {
    /// Builds and validates a configuration from key/value pairs. Unknown keys are rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(key) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let data_seed = get("data_seed").map(|v| parse_num("data_seed", v)).transpose()?.unwrap_or(0);
        let drop = get("drop_column").map(|v| v.parse::<DropColumn>().expect("infallible"));
        let data = parse_data_source(
            get("dataset").ok_or_else(|| Error::config("dataset", "required"))?,
            drop,
            data_seed,
        )?;

        let family: KernelFamily = get("kernel").unwrap_or("gaussian").parse()?;
        let sigma = positive("sigma", get("sigma").map(|v| parse_num("sigma", v)).transpose()?.unwrap_or(5.0))?;
        let kernel = KernelSpec::new(family, sigma).map_err(|e| Error::config("sigma", e.to_string()))?;

        let gammas = match get("gammas") {
            Some(v) => parse_list("gammas", v, |s| positive("gammas", parse_num("gammas", s)?))?,
            None => (0..=6).map(|e| 10f64.powi(-e)).collect(),
        };
        let epsilon: f64 = get("epsilon").map(|v| parse_num("epsilon", v)).transpose()?.unwrap_or(1e-10);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::config("epsilon", format!("must lie in (0, 1), got {epsilon}")));
        }
        let c = positive("c", get("c").map(|v| parse_num("c", v)).transpose()?.unwrap_or(100.0))?;
        let t: f64 = get("t").map(|v| parse_num("t", v)).transpose()?.unwrap_or(DEFAULT_T);
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::config("t", format!("must be >= 0, got {t}")));
        }
        let delta: f64 = get("delta").map(|v| parse_num("delta", v)).transpose()?.unwrap_or(0.1);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")));
        }
        let mu: f64 = get("mu").map(|v| parse_num("mu", v)).transpose()?.unwrap_or(1e-12);
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::config("mu", format!("must be >= 0, got {mu}")));
        }

        let mut methods = parse_list("methods", get("methods").unwrap_or("das,ras,uniform,rls"), str::parse)?;
        methods.sort();
        methods.dedup();
        let k = match get("k") {
            None | Some("from-ras") => KChoice::FromRas,
            Some(v) => {
                let mut ks: Vec<usize> = parse_list("k", v, |s| parse_num("k", s))?;
                if ks.contains(&0) {
                    return Err(Error::config("k", "k must be >= 1"));
                }
                ks.sort_unstable();
                ks.dedup();
                KChoice::List(ks)
            }
        };
        if k == KChoice::FromRas
            && !methods.contains(&Method::Ras)
            && !methods.contains(&Method::ApproxRas)
        {
            return Err(Error::config("k", "`from-ras` needs ras or approx-ras among the methods"));
        }
        let seeds = parse_seeds(get("seeds").unwrap_or("0..10"))?;
        let mut metrics = parse_list("metrics", get("metrics").unwrap_or("opnorm"), str::parse)?;
        metrics.dedup();
        let subset_size = get("subset_size").map(|v| parse_num("subset_size", v)).transpose()?.unwrap_or(2000);
        let num_subsets = get("num_subsets").map(|v| parse_num("num_subsets", v)).transpose()?.unwrap_or(50);
        if subset_size == 0 || num_subsets == 0 {
            return Err(Error::config("subset_size", "subset_size and num_subsets must be >= 1"));
        }
        let n_features = get("n_features").map(|v| parse_num("n_features", v)).transpose()?.unwrap_or(DEFAULT_FEATURES);
        if n_features == 0 {
            return Err(Error::config("n_features", "must be >= 1"));
        }
        let max_exact_n = get("max_exact_n").map(|v| parse_num("max_exact_n", v)).transpose()?.unwrap_or(5000);
        let output = get("output").filter(|v| !v.is_empty()).map(PathBuf::from);

        Ok(Self {
            data,
            kernel,
            gammas,
            epsilon,
            c,
            t,
            delta,
            mu,
            methods,
            k,
            seeds,
            metrics,
            subset_size,
            num_subsets,
            n_features,
            output,
            max_exact_n,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&parse_config_text(text)?)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Csv { path, drop } => dataset::load_csv(path, drop.as_ref()),
            DataSource::Synthetic { generator, n, seed } => {
                let s = synth::generate(*generator, *n, *seed)?;
                dataset::standardize(&s.points)
            }
        }
    }

    fn ras_params(&self) -> RasParams {
        RasParams::new(self.epsilon, self.c).with_t(self.t)
    }
}

/// One measured value of the long-format result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub method: Method,
    pub gamma: f64,
    pub k: usize,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: Method,
    pub gamma: f64,
    pub k: usize,
    pub seed: u64,
    pub phase: &'static str,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    /// The configured `k`, or `from-ras`.
    pub k: String,
    pub gamma: f64,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std: f64,
    pub mean_k: f64,
    pub seeds: usize,
    /// Lowest mean over γ for this (method, k, metric).
    pub best_gamma: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub n: usize,
    pub d: usize,
    pub config: ExperimentConfig,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub summary: SweepSummary,
}

struct Shared<'a> {
    config: &'a ExperimentConfig,
    data: &'a Dataset,
    kernel: Option<KernelMatrix>,
    projectors: Vec<Option<ProjectorKernel>>,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn validate_scale(config: &ExperimentConfig, n: usize) -> Result<bool> {
    let exact_methods = config.methods.iter().any(|m| m.needs_exact_projector());
    let dense_metrics = config
        .metrics
        .iter()
        .any(|m| matches!(m, Metric::Opnorm | Metric::Maxnorm));
    let needs_dense = exact_methods || dense_metrics;
    if needs_dense && n > config.max_exact_n {
        return Err(Error::config(
            "max_exact_n",
            format!(
                "n = {n} exceeds the exact-path cap {}; use approx-ras/uniform with frob-subsets or raise the cap",
                config.max_exact_n
            ),
        ));
    }
    if config.metrics.contains(&Metric::FrobSubsets) && config.subset_size > n {
        return Err(Error::config(
            "subset_size",
            format!("{} exceeds n = {n}", config.subset_size),
        ));
    }
    if let KChoice::List(ks) = &config.k {
        if let Some(k) = ks.iter().find(|k| **k > n) {
            return Err(Error::config("k", format!("k = {k} exceeds n = {n}")));
        }
    }
    Ok(needs_dense)
}

/// Runs every (method, γ, k, seed) combination and evaluates the requested metrics.
///
/// Cells `(γ, seed)` run in parallel on the current rayon pool; rows are sorted
/// before returning, so the output does not depend on the worker count.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let data = config.load_dataset()?;
    let n = data.n();
    let needs_dense = validate_scale(config, n)?;
    let exact_projector = config.methods.iter().any(|m| m.needs_exact_projector());

    let kernel = if needs_dense { Some(kernel_matrix(&config.kernel, &data)?) } else { None };
    let projectors = match (&kernel, exact_projector) {
        (Some(k), true) => {
            let spectrum = KernelSpectrum::new(k);
            config
                .gammas
                .iter()
                .map(|g| spectrum.projector(*g).map(Some))
                .collect::<Result<Vec<_>>>()?
        }
        _ => vec![None; config.gammas.len()],
    };
    let shared = Shared {
        config,
        data: &data,
        kernel,
        projectors,
    };

    let cells: Vec<(usize, u64)> = (0..config.gammas.len())
        .flat_map(|g| config.seeds.iter().map(move |s| (g, *s)))
        .collect();
    let outputs: Vec<(Vec<ResultRow>, Vec<TimingRow>)> = cells
        .par_iter()
        .map(|&(g, seed)| run_cell(&shared, g, seed))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (r, t) in outputs {
        rows.extend(r);
        timings.extend(t);
    }
    let gamma_pos = |g: f64| config.gammas.iter().position(|x| *x == g).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (a.method, gamma_pos(a.gamma), a.k, a.seed, a.metric)
            .cmp(&(b.method, gamma_pos(b.gamma), b.k, b.seed, b.metric))
    });
    timings.sort_by(|a, b| {
        (a.method, gamma_pos(a.gamma), a.k, a.seed, a.phase)
            .cmp(&(b.method, gamma_pos(b.gamma), b.k, b.seed, b.phase))
    });
    let summary = SweepSummary {
        n,
        d: data.dim(),
        config: config.clone(),
        rows: summarize(config, &rows),
    };
    Ok(SweepResult {
        rows,
        timings,
        summary,
    })
}

fn run_cell(shared: &Shared<'_>, g: usize, seed: u64) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
    let config = shared.config;
    let gamma = config.gammas[g];
    let n = shared.data.n();
    let projector = shared.projectors[g].as_ref();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut selections: Vec<(Method, LandmarkSet, f64)> = Vec::new();

    // Randomized samplers first: their sample size can bind k for the others.
    let mut ras_k: Option<usize> = None;
    if config.methods.contains(&Method::Ras) {
        let start = Instant::now();
        let trace = ras_sample(projector.expect("exact projector"), config.ras_params(), seed)?;
        ras_k.get_or_insert(trace.landmarks.len());
        selections.push((Method::Ras, trace.landmarks.unweighted(), elapsed_ms(start)));
    }
    if config.methods.contains(&Method::ApproxRas) {
        let start = Instant::now();
        let map = rff_build(&config.kernel, shared.data.dim(), config.n_features, seed)?;
        let features = featurize(&map, shared.data)?;
        let phat = approx_projector(&features, gamma)?;
        let trace = approx_ras(&phat, config.ras_params(), seed)?;
        ras_k.get_or_insert(trace.landmarks.len());
        selections.push((Method::ApproxRas, trace.landmarks.unweighted(), elapsed_ms(start)));
    }
    let ks: Vec<usize> = match &config.k {
        KChoice::List(ks) => ks.clone(),
        KChoice::FromRas => vec![ras_k.expect("validated").max(1).min(n)],
    };

    for &method in &config.methods {
        match method {
            Method::Ras | Method::ApproxRas => {}
            Method::Das => {
                let start = Instant::now();
                let kmax = *ks.iter().max().expect("non-empty");
                let trace = das_sample(projector.expect("exact projector"), kmax)?;
                let ms = elapsed_ms(start);
                for &k in &ks {
                    selections.push((Method::Das, trace.landmarks.prefix(k), ms));
                }
            }
            Method::Uniform => {
                for &k in &ks {
                    let start = Instant::now();
                    let set = uniform_sample(n, k, seed)?;
                    selections.push((Method::Uniform, set, elapsed_ms(start)));
                }
            }
            Method::Rls => {
                for &k in &ks {
                    let start = Instant::now();
                    let set = rls_sample(projector.expect("exact projector"), k, seed)?;
                    selections.push((Method::Rls, set, elapsed_ms(start)));
                }
            }
        }
    }

    for (method, landmarks, select_ms) in selections {
        let k = landmarks.len();
        timings.push(TimingRow { method, gamma, k, seed, phase: "select", wallclock_ms: select_ms });
        let start = Instant::now();
        let approx = match &shared.kernel {
            Some(km) => nystrom(km, &landmarks, config.mu)?,
            None => nystrom(&KernelOperator::new(config.kernel, shared.data), &landmarks, config.mu)?,
        };
        timings.push(TimingRow { method, gamma, k, seed, phase: "nystrom", wallclock_ms: elapsed_ms(start) });
        for &metric in &config.metrics {
            let start = Instant::now();
            let value = evaluate(shared, &approx, metric, seed)?;
            timings.push(TimingRow {
                method,
                gamma,
                k,
                seed,
                phase: metric.name(),
                wallclock_ms: elapsed_ms(start),
            });
            rows.push(ResultRow { method, gamma, k, seed, metric, value });
        }
    }
    Ok((rows, timings))
}

fn evaluate(shared: &Shared<'_>, approx: &NystromApprox, metric: Metric, seed: u64) -> Result<f64> {
    let config = shared.config;
    Ok(match metric {
        Metric::Opnorm => error_operator_norm(shared.kernel.as_ref().expect("dense kernel"), approx),
        Metric::Maxnorm => error_max_norm(shared.kernel.as_ref().expect("dense kernel"), approx),
        Metric::FrobSubsets => {
            let errs = error_frobenius_subsets(
                &config.kernel,
                shared.data,
                approx,
                config.subset_size,
                config.num_subsets,
                seed ^ 0x5eed_f00d,
            )?;
            errs.iter().sum::<f64>() / errs.len() as f64
        }
    })
}

fn summarize(config: &ExperimentConfig, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let k_label = |k: usize| match &config.k {
        KChoice::FromRas => "from-ras".to_string(),
        KChoice::List(_) => k.to_string(),
    };
    // RAS sample sizes are emergent, so RAS rows are grouped regardless of k.
    let group_label = |r: &ResultRow| match r.method {
        Method::Ras | Method::ApproxRas => "from-ras".to_string(),
        _ => k_label(r.k),
    };
    let mut groups: BTreeMap<(Method, String, usize, Metric), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let g = config.gammas.iter().position(|x| *x == r.gamma).unwrap_or(0);
        groups.entry((r.method, group_label(r), g, r.metric)).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((method, k, g, metric), members)| {
            let m = members.len() as f64;
            let mean = members.iter().map(|r| r.value).sum::<f64>() / m;
            let std = if members.len() > 1 {
                (members.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method,
                k,
                gamma: config.gammas[g],
                metric,
                mean,
                std,
                mean_k: members.iter().map(|r| r.k as f64).sum::<f64>() / m,
                seeds: members.len(),
                best_gamma: false,
            }
        })
        .collect();
    let mut best: BTreeMap<(Method, String, Metric), (f64, usize)> = BTreeMap::new();
    for (i, row) in out.iter().enumerate() {
        let key = (row.method, row.k.clone(), row.metric);
        match best.get(&key) {
            Some((v, _)) if !(row.mean < *v) => {}
            _ => {
                best.insert(key, (row.mean, i));
            }
        }
    }
    for (_, (_, i)) in best {
        out[i].best_gamma = true;
    }
    out
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("method,gamma,k,seed,metric,value\n");
    for r in rows {
        let _ = writeln!(s, "{},{:e},{},{},{},{:e}", r.method.name(), r.gamma, r.k, r.seed, r.metric.name(), r.value);
    }
    s
}

pub fn timings_csv(rows: &[TimingRow]) -> String {
    let mut s = String::from("method,gamma,k,seed,phase,wallclock_ms\n");
    for r in rows {
        let _ = writeln!(s, "{},{:e},{},{},{},{:.3}", r.method.name(), r.gamma, r.k, r.seed, r.phase, r.wallclock_ms);
    }
    s
}

/// Writes `results.csv`, `summary.json` and `timings.csv` into `dir`.
/// Only the timings file varies between identical runs.
pub fn write_sweep(result: &SweepResult, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&result.rows))?;
    let json = serde_json::to_string_pretty(&result.summary)
        .map_err(|e| Error::Parse(format!("summary serialization: {e}")))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    std::fs::write(dir.join("timings.csv"), timings_csv(&result.timings))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTable {
    /// One row per data point.
    Index,
    /// One row per greedy iteration.
    Das,
}

impl FromStr for ScoreTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "index" => Ok(ScoreTable::Index),
            "das" => Ok(ScoreTable::Das),
            other => Err(Error::config("table", format!("unknown table `{other}` (index|das)"))),
        }
    }
}

/// Per-point and per-iteration scores at the first configured γ.
///
/// The number of greedy iterations is the first configured `k`, or `min(n − 1, 50)`
/// when `k` is `from-ras`.
pub fn dump_scores(config: &ExperimentConfig, table: ScoreTable) -> Result<String> {
    let data = config.load_dataset()?;
    let n = data.n();
    if n > config.max_exact_n {
        return Err(Error::config("max_exact_n", format!("n = {n} exceeds the exact-path cap")));
    }
    let gamma = config.gammas[0];
    let kmat = kernel_matrix(&config.kernel, &data)?;
    let p = KernelSpectrum::new(&kmat).projector(gamma)?;
    let k = match &config.k {
        KChoice::List(ks) => ks[0].min(n),
        KChoice::FromRas => (n - 1).clamp(1, 50),
    };
    let trace = das_sample(&p, k)?;
    let region = match &config.data {
        DataSource::Synthetic { generator, n, seed } => Some(synth::generate(*generator, *n, *seed)?.region),
        DataSource::Csv { .. } => None,
    };
    let mut s = String::new();
    match table {
        ScoreTable::Index => {
            let lev = leverage_scores(&p);
            let resid = residual_diagonal(&p, &trace.landmarks)?;
            let mut order = vec![-1i64; n];
            for (pos, &i) in trace.landmarks.indices().iter().enumerate() {
                order[i] = pos as i64 + 1;
            }
            s.push_str(
                "# columns: index; region (generator region, -1 if unknown); leverage = P_zz; \
                 christoffel_inverse = P_zz/n (empty exclusion set); christoffel = n/P_zz; \
                 das_order (1-based greedy rank, -1 if not selected); residual_after_das = \
                 diag(P - P_C P_CC^-1 P_C^T) for the selected set\n",
            );
            s.push_str("index,region,leverage,christoffel_inverse,christoffel,das_order,residual_after_das\n");
            for i in 0..n {
                let r = region.as_ref().map_or(-1, |r| r[i] as i64);
                let inv = lev[i] / n as f64;
                let _ = writeln!(s, "{i},{r},{:e},{:e},{:e},{},{:e}", lev[i], inv, 1.0 / inv, order[i], resid[i]);
            }
        }
        ScoreTable::Das => {
            s.push_str(
                "# columns: m (landmarks selected); landmark (m-th index); pivot = residual at the \
                 landmark when selected; sigma = max diag residual with m landmarks; bound = \
                 2 max|P| sqrt(Lambda_{floor(m/2)+1}) for 2 <= m < n, empty otherwise\n",
            );
            s.push_str("m,landmark,pivot,sigma,bound\n");
            for (m0, &idx) in trace.landmarks.indices().iter().enumerate() {
                let m = m0 + 1;
                let bound = trace.bounds[m].map(|b| format!("{b:e}")).unwrap_or_default();
                let _ = writeln!(s, "{m},{idx},{:e},{:e},{bound}", trace.residual_max[m0], trace.residual_max[m]);
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub oversampling: f64,
    pub all_passed: bool,
    pub checks: Vec<CheckItem>,
}

/// Runs the guarantee and identity checks on the configured data at the first γ.
///
/// The randomized sampler is run once per configured seed with `c` set to the
/// Lambert-W lower bound for `(ε, δ)`. `epsilon` must lie in (0, 1).
pub fn check_bounds(config: &ExperimentConfig) -> Result<CheckReport> {
    let data = config.load_dataset()?;
    let n = data.n();
    if n > config.max_exact_n {
        return Err(Error::config("max_exact_n", format!("n = {n} exceeds the exact-path cap")));
    }
    let gamma = config.gammas[0];
    let eps = config.epsilon;
    let kmat = kernel_matrix(&config.kernel, &data)?;
    let spectrum = KernelSpectrum::new(&kmat);
    let p = spectrum.projector(gamma)?;
    let c = oversampling_for(&p, eps, config.delta)?;
    let params = RasParams::new(eps, c).with_t(config.t);
    let mut checks = Vec::new();

    // Guarantee of the randomized sampler over all seeds.
    let traces: Vec<_> = config
        .seeds
        .par_iter()
        .map(|s| ras_sample(&p, params, *s))
        .collect::<Result<_>>()?;
    let guarantees: Vec<_> = traces
        .par_iter()
        .map(|t| check_ras_guarantee(&kmat, gamma, t))
        .collect::<Result<_>>()?;
    let successes = guarantees.iter().filter(|g| g.holds).count();
    let fraction = successes as f64 / guarantees.len() as f64;
    checks.push(CheckItem {
        name: "ras_guarantee".into(),
        passed: fraction >= 1.0 - config.delta,
        measured: fraction,
        threshold: 1.0 - config.delta,
        detail: format!(
            "fraction of {} runs with spectral error <= 2 eps n gamma/(1-eps) = {:e}; c = {c:.4}",
            guarantees.len(),
            guarantees.first().map_or(0.0, |g| g.bound)
        ),
    });

    // PSD report premised on the sampled matrix.
    let t = config.t;
    let mut worst = f64::INFINITY;
    let mut premised = 0;
    let mut lemma4_ok = true;
    if t > 0.0 && t < 1.0 / (1.0 + eps) {
        for trace in traces.iter().take(20) {
            let r = check_lemma4(&p, &kmat, &trace.landmarks, eps, t)?;
            if let Some(psd) = r.psd {
                premised += 1;
                worst = worst.min(psd.min_eigenvalue + psd.tolerance);
                lemma4_ok &= psd.holds;
            }
        }
    }
    checks.push(CheckItem {
        name: "kernel_approximation_psd".into(),
        passed: lemma4_ok,
        measured: if premised > 0 { worst } else { 0.0 },
        threshold: 0.0,
        detail: format!("{premised} of up to 20 runs met the premise lambda_max(deviation) <= t"),
    });

    // Transfer inequality from the projector residual to the kernel residual.
    let k_small = (n / 4).max(1);
    let mut worst = f64::INFINITY;
    for &seed in config.seeds.iter().take(20) {
        let set = uniform_sample(n, k_small, seed)?;
        let r = check_lemma1(&kmat, &p, &set, 1e-4)?;
        worst = worst.min(r.min_eigenvalue + r.tolerance);
    }
    checks.push(CheckItem {
        name: "projector_transfer_psd".into(),
        passed: worst >= 0.0,
        measured: worst,
        threshold: 0.0,
        detail: format!("min eigenvalue slack over uniform landmark sets of size {k_small}, mu = 1e-4"),
    });

    // Greedy convergence bound and residual monotonicity.
    if n > 2 {
        let trace = das_sample(&p, n - 1)?;
        let mut slack = f64::INFINITY;
        for m in 2..n {
            let bound = das_bound(&p, m)?;
            slack = slack.min(bound - trace.residual_max[m]);
        }
        let monotone = trace.residual_max.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        checks.push(CheckItem {
            name: "das_convergence_bound".into(),
            passed: slack >= 0.0 && monotone,
            measured: slack,
            threshold: 0.0,
            detail: format!("min over 2 <= m < n of bound - residual; monotone residual: {monotone}"),
        });

        // Max-norm of the projector residual equals its largest diagonal entry.
        let mut gap = 0.0_f64;
        for m in [1, n / 4, n / 2, n - 1] {
            let set = trace.landmarks.prefix(m.max(1));
            let diag = residual_diagonal(&p, &set)?;
            let approx = nystrom(&p, &set, 0.0).or_else(|_| nystrom(&p, &set, 1e-14))?;
            let maxnorm = error_max_norm(&p, &approx);
            let maxdiag = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            gap = gap.max((maxnorm - maxdiag).abs());
        }
        checks.push(CheckItem {
            name: "maxnorm_equals_max_diagonal".into(),
            passed: gap <= 1e-10,
            measured: gap,
            threshold: 1e-10,
            detail: "|max|residual| - max diag(residual)| over greedy prefixes".into(),
        });
    }

    // Composition rule P_eps(P_{n gamma}(K)) = P_{eps n gamma/(1+eps)}(K)/(1+eps).
    let lhs = p.filtered_projector(eps);
    let rhs = spectrum.projector(eps * gamma / (1.0 + eps))?.entries() / (1.0 + eps);
    let gap = linalg::max_abs(&(lhs - rhs));
    checks.push(CheckItem {
        name: "projector_composition".into(),
        passed: gap <= 1e-10,
        measured: gap,
        threshold: 1e-10,
        detail: "max entrywise gap".into(),
    });

    // Regularized residual through the square-root factor.
    let b = p.factor();
    let mut gap = 0.0_f64;
    for trace in traces.iter().take(5) {
        let s = trace.landmarks.sampling_matrix(n);
        let bs = &b * s;
        let mut inner = &bs * bs.transpose();
        for i in 0..n {
            inner[(i, i)] += eps;
        }
        let lhs = (p.entries() - nystrom(&p, &trace.landmarks, eps)?.to_dense()) / eps;
        let rhs = match linalg::cholesky_jittered(&inner, "BSSᵀBᵀ + εI") {
            Ok(ch) => b.transpose() * ch.solve(&b),
            Err(e) => return Err(e),
        };
        gap = gap.max(linalg::max_abs(&(lhs - rhs)));
    }
    checks.push(CheckItem {
        name: "regularized_residual_factorization".into(),
        passed: gap <= 1e-9,
        measured: gap,
        threshold: 1e-9,
        detail: "max entrywise gap over up to 5 sampled matrices".into(),
    });

    let _ = lambert::oversampling_floor();
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(CheckReport {
        n,
        gamma,
        epsilon: eps,
        delta: config.delta,
        oversampling: c,
        all_passed,
        checks,
    })
}

/// Dense `K` and `P` for desk-scale inspection.
pub fn dense_matrices(config: &ExperimentConfig) -> Result<(KernelMatrix, ProjectorKernel)> {
    let data = config.load_dataset()?;
    let k = kernel_matrix(&config.kernel, &data)?;
    let p = KernelSpectrum::new(&k).projector(config.gammas[0])?;
    Ok((k, p))
}

#[allow(dead_code)]
fn _assert_source<T: MatrixSource>() {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_parsing() {
        let map = parse_config_text("# comment\nDataset = synthetic:blobs:30\n\nsubset-size=5 # trailing\n").unwrap();
        assert_eq!(map["dataset"], "synthetic:blobs:30");
        assert_eq!(map["subset_size"], "5");
        assert!(parse_config_text("novalue\n").is_err());
        assert!(parse_config_text("= 3\n").is_err());
        assert!(parse_config_text("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_text("dataset = synthetic:moons:40\n").unwrap();
        assert_eq!(cfg.gammas.len(), 7);
        assert_eq!(cfg.k, KChoice::FromRas);
        assert_eq!(cfg.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(cfg.epsilon, 1e-10);
        assert_eq!(cfg.c, 100.0);
        assert_eq!(cfg.mu, 1e-12);

        for (text, field) in [
            ("", "dataset"),
            ("dataset = x.csv\nbogus = 1\n", "bogus"),
            ("dataset = x.csv\nsigma = -1\n", "sigma"),
            ("dataset = x.csv\nepsilon = 1.5\n", "epsilon"),
            ("dataset = x.csv\nmethods = das,magic\n", "methods"),
            ("dataset = x.csv\nmethods = das\n", "k"),
            ("dataset = x.csv\nk = 0\n", "k"),
            ("dataset = x.csv\nseeds = 3..3\n", "seeds"),
            ("dataset = x.csv\nseeds = 1,1\n", "seeds"),
            ("dataset = x.csv\nmetrics =\n", "metrics"),
            ("dataset = synthetic:blobs\n", "dataset"),
            ("dataset = x.csv\nkernel = cubic\n", "kernel"),
        ] {
            match ExperimentConfig::from_text(text) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text:?}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn scale_guard() {
        let cfg = ExperimentConfig::from_text(
            "dataset = synthetic:blobs:30\nmethods = das\nk = 5\nmax_exact_n = 10\n",
        )
        .unwrap();
        assert!(matches!(run_sweep(&cfg), Err(Error::Config { .. })));
        let cfg = ExperimentConfig::from_text("dataset = synthetic:blobs:30\nmethods = das\nk = 31\n").unwrap();
        assert!(matches!(run_sweep(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn best_gamma_marked_once_per_group() {
        let cfg = ExperimentConfig::from_text(
            "dataset = synthetic:blobs:40\nsigma = 1\nmethods = das,uniform\nk = 5,10\nseeds = 0,1\ngammas = 1e-1,1e-3\n",
        )
        .unwrap();
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2 * 2);
        let mut marks: BTreeMap<(Method, String), usize> = BTreeMap::new();
        for r in &res.summary.rows {
            if r.best_gamma {
                *marks.entry((r.method, r.k.clone())).or_default() += 1;
            }
        }
        assert_eq!(marks.len(), 4);
        assert!(marks.values().all(|c| *c == 1));
    }
}
