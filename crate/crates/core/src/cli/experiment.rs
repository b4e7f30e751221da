//! Monte-Carlo replication harness.
//!
//! Each replication simulates a full path, draws observation windows,
//! restricts the path to them and fits every configured method. The median
//! fitted parameters of each method then drive a batch of short simulations
//! whose event counts are compared with those of the true parameters.
//!
//! Replication `r` seeds its simulation and window streams with
//! `derive_seed(seed, [r])`. All count histograms share the master seed, so
//! the truth and every method see the same random numbers.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{config_digest, CsvDoc, Provenance};
use super::CliError;
use crate::error::{invalid, Result};
use crate::estimator::{fit, fit_mhp, BoundaryMode, FitConfig, FitResult};
use crate::gaps::{common_windows, generate_window_set, observed_fraction, restrict_events, GapConfig, WindowLayout};
use crate::model::{EventData, ModelParams, Window, WindowSet};
use crate::rng::derive_seed;
use crate::simulator::{count_histogram, simulate, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Gap-blind: observed events treated as the full record.
    Mhp,
    /// Gap-aware with every boundary pinned to the background rate.
    MhpgFixed,
    /// Gap-aware with `u <= boundary <= ratio * u`.
    MhpgBox { ratio: f64 },
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Mhp => "mhp",
            Method::MhpgFixed => "mhpg-fixed",
            Method::MhpgBox { .. } => "mhpg-box",
        }
    }

    fn boundary(&self) -> BoundaryMode {
        match *self {
            Method::Mhp | Method::MhpgFixed => BoundaryMode::FixedAtU,
            Method::MhpgBox { ratio } => BoundaryMode::Box(ratio),
        }
    }

    /// Fits `observed` (already restricted to `windows`).
    pub fn fit(&self, observed: &EventData, windows: &WindowSet, settings: &FitSettings) -> Result<FitResult> {
        let config = settings.fit_config(self.boundary());
        match self {
            Method::Mhp => fit_mhp(observed, windows.horizon(), &config),
            _ => fit(observed, windows, &config),
        }
    }
}

/// Estimator settings shared by the CLI and experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Penalty weight; `None` uses `0.01 * (observed count) / N^2`.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { mu: None, tol: default_tol(), max_iter: default_max_iter() }
    }
}

impl FitSettings {
    pub fn fit_config(&self, boundary: BoundaryMode) -> FitConfig {
        FitConfig { mu: self.mu, boundary, tol: self.tol, max_iter: self.max_iter, init: None }
    }
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    #[serde(flatten)]
    pub method: Method,
    #[serde(flatten)]
    pub settings: FitSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSettings {
    pub p: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    #[serde(default)]
    pub layout: WindowLayout,
    /// Replace each entity's windows by the intersection over all entities.
    #[serde(default)]
    pub intersect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub truth: ModelParams,
    pub horizon: f64,
    pub gaps: GapSettings,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_param_reps")]
    pub n_param_reps: usize,
    #[serde(default = "default_hist_reps")]
    pub n_hist_reps: usize,
    /// Counts are taken on `(0, hist_interval_end]`.
    #[serde(default = "default_hist_end")]
    pub hist_interval_end: f64,
    /// Bin width for the window-length histograms.
    #[serde(default = "default_bin_width")]
    pub length_bin_width: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_methods() -> Vec<MethodSpec> {
    let settings = FitSettings::default();
    [Method::Mhp, Method::MhpgFixed, Method::MhpgBox { ratio: 20.0 }]
        .into_iter()
        .map(|method| MethodSpec { method, settings })
        .collect()
}

fn default_param_reps() -> usize {
    100
}

fn default_hist_reps() -> usize {
    500
}

fn default_hist_end() -> f64 {
    20.0
}

fn default_bin_width() -> f64 {
    0.25
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn gap_config(&self, seed: u64) -> GapConfig {
        GapConfig { p: self.gaps.p, tau_min: self.gaps.tau_min, tau_max: self.gaps.tau_max, horizon: self.horizon, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid(format!("horizon must be finite and > 0, got {}", self.horizon));
        }
        self.gap_config(0).validate()?;
        if self.methods.is_empty() {
            return invalid("methods: at least one method is required");
        }
        for (i, spec) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|other| other.method.label() == spec.method.label()) {
                return invalid(format!("methods: {} listed twice", spec.method.label()));
            }
            spec.settings.fit_config(spec.method.boundary()).validate()?;
        }
        if self.n_param_reps == 0 || self.n_hist_reps == 0 {
            return invalid("n_param_reps and n_hist_reps must be positive");
        }
        if !(self.hist_interval_end.is_finite() && self.hist_interval_end > 0.0) {
            return invalid(format!("hist_interval_end must be finite and > 0, got {}", self.hist_interval_end));
        }
        if !(self.length_bin_width.is_finite() && self.length_bin_width > 0.0) {
            return invalid(format!("length_bin_width must be finite and > 0, got {}", self.length_bin_width));
        }
        Ok(())
    }
}

/// What one fit produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub params: ModelParams,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub rep: usize,
    pub method: &'static str,
    pub outcome: std::result::Result<FitSummary, String>,
}

/// Per-replication bookkeeping independent of the methods.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationData {
    pub rep: usize,
    pub simulated: Vec<usize>,
    pub kept: Vec<usize>,
    /// Observed fraction per entity before and after intersection.
    pub prior_fraction: Vec<f64>,
    pub posterior_fraction: Vec<f64>,
    pub prior_lengths: Vec<f64>,
    pub posterior_lengths: Vec<f64>,
}

/// Five-number summary with quartiles by linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        (!v.is_empty()).then(|| Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub method: &'static str,
    pub param: String,
    pub truth: f64,
    pub stats: FiveNumber,
    pub fits: usize,
    pub converged: usize,
}

/// Event counts on the histogram interval, one list of replicate counts per
/// entity.
#[derive(Debug, Clone, PartialEq)]
pub struct CountHistogram {
    pub source: &'static str,
    pub params: ModelParams,
    pub counts: Vec<Vec<u64>>,
}

impl CountHistogram {
    pub fn mean(&self, m: usize) -> f64 {
        let c = &self.counts[m];
        c.iter().sum::<u64>() as f64 / c.len() as f64
    }

    pub fn std_dev(&self, m: usize) -> f64 {
        let c = &self.counts[m];
        let mean = self.mean(m);
        let n = c.len() as f64;
        if c.len() < 2 {
            return 0.0;
        }
        (c.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub fits: Vec<FitRecord>,
    pub replications: Vec<std::result::Result<ReplicationData, (usize, String)>>,
    pub summaries: Vec<ParamSummary>,
    pub medians: Vec<(&'static str, ModelParams)>,
    pub histograms: Vec<CountHistogram>,
}

/// `u_m`, `a_m_n` (row-major), `b_m`, zero-based.
pub fn param_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|m| format!("u_{m}")).collect();
    for m in 0..n {
        names.extend((0..n).map(|j| format!("a_{m}_{j}")));
    }
    names.extend((0..n).map(|m| format!("b_{m}")));
    names
}

/// Values in the order of [`param_names`].
pub fn param_values(p: &ModelParams) -> Vec<f64> {
    p.u().iter().chain(p.a_flat()).chain(p.b()).copied().collect()
}

fn params_from_values(n: usize, v: &[f64]) -> Result<ModelParams> {
    ModelParams::from_flat(v[..n].to_vec(), v[n..n + n * n].to_vec(), v[n + n * n..].to_vec())
}

fn lengths(windows: &WindowSet) -> Vec<f64> {
    (0..windows.n()).flat_map(|m| windows.windows(m).iter().map(Window::len)).collect()
}

fn replicate(config: &ExperimentConfig, rep: usize) -> (std::result::Result<ReplicationData, (usize, String)>, Vec<FitRecord>) {
    let seed = derive_seed(config.seed, &[rep as u64]);
    let n = config.truth.n();
    let prepared = (|| -> Result<_> {
        let events = simulate(&SimConfig::new(config.truth.clone(), config.horizon, seed))?;
        let prior = generate_window_set(&config.gap_config(seed), n, config.gaps.layout)?;
        let posterior = if config.gaps.intersect { common_windows(&prior)? } else { prior.clone() };
        let observed = restrict_events(&events, &posterior)?;
        let data = ReplicationData {
            rep,
            simulated: events.counts(),
            kept: observed.counts(),
            prior_fraction: observed_fraction(&prior),
            posterior_fraction: observed_fraction(&posterior),
            prior_lengths: if config.gaps.intersect { lengths(&prior) } else { Vec::new() },
            posterior_lengths: if config.gaps.intersect { lengths(&posterior) } else { Vec::new() },
        };
        Ok((data, observed, posterior))
    })();

    match prepared {
        Ok((data, observed, windows)) => {
            let fits = config
                .methods
                .iter()
                .map(|spec| {
                    let outcome = spec
                        .method
                        .fit(&observed, &windows, &spec.settings)
                        .map(|r| FitSummary {
                            objective: r.final_objective(),
                            params: r.params,
                            converged: r.converged,
                            iterations: r.iterations,
                        })
                        .map_err(|e| e.to_string());
                    if let Err(e) = &outcome {
                        log::warn!("replication {rep}, {}: {e}", spec.method.label());
                    }
                    FitRecord { rep, method: spec.method.label(), outcome }
                })
                .collect();
            (Ok(data), fits)
        }
        Err(e) => {
            let msg = e.to_string();
            log::warn!("replication {rep}: {msg}");
            let fits = config
                .methods
                .iter()
                .map(|spec| FitRecord { rep, method: spec.method.label(), outcome: Err(msg.clone()) })
                .collect();
            (Err((rep, msg)), fits)
        }
    }
}

/// Runs the whole experiment on a pool of `jobs` threads (`None`: one per
/// core). The result does not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport, CliError> {
    config.validate()?;
    let config_sha256 = config_digest(config)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("cannot start {jobs:?} worker threads: {e}")))?;

    pool.install(|| {
        let per_rep: Vec<_> = (0..config.n_param_reps).into_par_iter().map(|r| replicate(config, r)).collect();
        let mut replications = Vec::with_capacity(per_rep.len());
        let mut fits = Vec::new();
        for (data, records) in per_rep {
            replications.push(data);
            fits.extend(records);
        }

        let n = config.truth.n();
        let names = param_names(n);
        let truth = param_values(&config.truth);
        let mut summaries = Vec::new();
        let mut medians = Vec::new();
        for spec in &config.methods {
            let label = spec.method.label();
            let ok: Vec<&FitSummary> =
                fits.iter().filter(|f| f.method == label).filter_map(|f| f.outcome.as_ref().ok()).collect();
            if ok.is_empty() {
                log::warn!("{label}: no successful fits, skipping its summaries");
                continue;
            }
            let converged = ok.iter().filter(|f| f.converged).count();
            let values: Vec<Vec<f64>> = ok.iter().map(|f| param_values(&f.params)).collect();
            let mut median = Vec::with_capacity(names.len());
            for (i, name) in names.iter().enumerate() {
                let column: Vec<f64> = values.iter().map(|v| v[i]).collect();
                let stats = FiveNumber::of(&column).expect("sample is non-empty");
                median.push(stats.median);
                summaries.push(ParamSummary {
                    method: label,
                    param: name.clone(),
                    truth: truth[i],
                    stats,
                    fits: ok.len(),
                    converged,
                });
            }
            medians.push((label, params_from_values(n, &median)?));
        }

        let sources: Vec<(&'static str, ModelParams)> =
            std::iter::once(("truth", config.truth.clone())).chain(medians.iter().cloned()).collect();
        let histograms = sources
            .into_iter()
            .map(|(source, params)| {
                let sim = SimConfig::new(params.clone(), config.hist_interval_end, config.seed);
                let counts = count_histogram(&sim, config.n_hist_reps, config.hist_interval_end)?;
                Ok(CountHistogram { source, params, counts })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ExperimentReport { config: config.clone(), config_sha256, fits, replications, summaries, medians, histograms })
    })
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

impl ExperimentReport {
    pub fn failed_fits(&self) -> usize {
        self.fits.iter().filter(|f| f.outcome.is_err()).count()
    }

    pub fn failure_fraction(&self) -> f64 {
        self.failed_fits() as f64 / self.fits.len() as f64
    }

    pub fn histogram(&self, source: &str) -> Option<&CountHistogram> {
        self.histograms.iter().find(|h| h.source == source)
    }

    pub fn median(&self, method: &str) -> Option<&ModelParams> {
        self.medians.iter().find(|(m, _)| *m == method).map(|(_, p)| p)
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(self.config_sha256.clone(), Some(self.config.seed))
            .with_shape(self.config.horizon, self.config.truth.n())
    }

    /// Writes every artefact into `dir` (created if missing).
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let prov = self.provenance();
        let n = self.config.truth.n();
        let names = param_names(n);

        let mut header = vec!["rep", "method", "status", "converged", "iterations", "objective"];
        header.extend(names.iter().map(String::as_str));
        let mut doc = CsvDoc::new(&prov, &header)?;
        for f in &self.fits {
            let mut row = vec![f.rep.to_string(), f.method.to_string()];
            match &f.outcome {
                Ok(s) => {
                    row.extend(["ok".into(), s.converged.to_string(), s.iterations.to_string(), fmt(s.objective)]);
                    row.extend(param_values(&s.params).into_iter().map(fmt));
                }
                Err(_) => row.extend(std::iter::once("failed".to_string()).chain(std::iter::repeat_n(String::new(), 3 + names.len()))),
            }
            doc.row(row)?;
        }
        doc.save(&dir.join("replicates.csv"))?;

        let mut doc = CsvDoc::new(&prov, &["rep", "method", "error"])?;
        for f in &self.fits {
            if let Err(e) = &f.outcome {
                doc.row([f.rep.to_string(), f.method.to_string(), e.clone()])?;
            }
        }
        doc.save(&dir.join("failures.csv"))?;

        let mut doc = CsvDoc::new(
            &prov,
            &["method", "param", "truth", "min", "q1", "median", "q3", "max", "fits", "converged"],
        )?;
        for s in &self.summaries {
            let st = s.stats;
            doc.row([
                s.method.to_string(),
                s.param.clone(),
                fmt(s.truth),
                fmt(st.min),
                fmt(st.q1),
                fmt(st.median),
                fmt(st.q3),
                fmt(st.max),
                s.fits.to_string(),
                s.converged.to_string(),
            ])?;
        }
        doc.save(&dir.join("boxplot.csv"))?;

        let mut header = vec!["source"];
        header.extend(names.iter().map(String::as_str));
        let mut doc = CsvDoc::new(&prov, &header)?;
        let truth = ("truth", self.config.truth.clone());
        for (source, p) in std::iter::once(&truth).chain(&self.medians) {
            doc.row(std::iter::once(source.to_string()).chain(param_values(p).into_iter().map(fmt)))?;
        }
        doc.save(&dir.join("medians.csv"))?;

        let mut doc = CsvDoc::new(&prov, &["source", "entity", "count", "frequency"])?;
        let mut summary = CsvDoc::new(&prov, &["source", "entity", "reps", "mean", "std_dev"])?;
        for h in &self.histograms {
            for (m, counts) in h.counts.iter().enumerate() {
                let mut freq = std::collections::BTreeMap::new();
                for &c in counts {
                    *freq.entry(c).or_insert(0usize) += 1;
                }
                for (c, k) in freq {
                    doc.row([h.source.to_string(), m.to_string(), c.to_string(), k.to_string()])?;
                }
                summary.row([h.source.to_string(), m.to_string(), counts.len().to_string(), fmt(h.mean(m)), fmt(h.std_dev(m))])?;
            }
        }
        doc.save(&dir.join("histograms.csv"))?;
        summary.save(&dir.join("histogram_summary.csv"))?;

        let mut doc = CsvDoc::new(&prov, &["rep", "entity", "simulated", "kept", "dropped", "prior_fraction", "posterior_fraction"])?;
        for data in self.replications.iter().flatten() {
            for m in 0..n {
                doc.row([
                    data.rep.to_string(),
                    m.to_string(),
                    data.simulated[m].to_string(),
                    data.kept[m].to_string(),
                    (data.simulated[m] - data.kept[m]).to_string(),
                    fmt(data.prior_fraction[m]),
                    fmt(data.posterior_fraction[m]),
                ])?;
            }
        }
        doc.save(&dir.join("observation.csv"))?;

        if self.config.gaps.intersect {
            let width = self.config.length_bin_width;
            let mut doc = CsvDoc::new(&prov, &["stage", "bin_start", "bin_end", "count"])?;
            for (stage, pick) in [("prior", 0), ("posterior", 1)] {
                let all: Vec<f64> = self
                    .replications
                    .iter()
                    .flatten()
                    .flat_map(|d| if pick == 0 { &d.prior_lengths } else { &d.posterior_lengths })
                    .copied()
                    .collect();
                let bins = all.iter().map(|l| (l / width).ceil() as usize).max().unwrap_or(0).max(1);
                let mut counts = vec![0usize; bins];
                for l in &all {
                    // bins are (k w, (k + 1) w]
                    let k = ((l / width).ceil() as usize).saturating_sub(1);
                    counts[k] += 1;
                }
                for (k, c) in counts.iter().enumerate() {
                    doc.row([stage.to_string(), fmt(k as f64 * width), fmt((k + 1) as f64 * width), c.to_string()])?;
                }
            }
            doc.save(&dir.join("window_lengths.csv"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_summary_interpolates() {
        let s = FiveNumber::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let one = FiveNumber::of(&[7.0]).unwrap();
        assert_eq!(one.median, 7.0);
        assert!(FiveNumber::of(&[]).is_none());
    }

    #[test]
    fn config_defaults_and_validation() {
        let text = r#"{"name": "t", "truth": {"u": [1.0], "a": [[0.2]], "b": [3.0]}, "horizon": 100,
                       "gaps": {"p": 0.3, "tau_min": 0.5, "tau_max": 3.0}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.n_param_reps, 100);
        assert_eq!(c.n_hist_reps, 500);
        assert_eq!(c.hist_interval_end, 20.0);
        assert_eq!(c.methods.len(), 3);
        assert_eq!(c.methods[2].method, Method::MhpgBox { ratio: 20.0 });
        assert_eq!(c.gaps.layout, WindowLayout::Shared);

        let bad = text.replace("\"tau_max\": 3.0", "\"tau_max\": 0.2");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let unknown = text.replace("\"horizon\"", "\"horizn\"");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
        let dup = text.replace("\"gaps\"", r#""methods": [{"method": "mhp"}, {"method": "mhp"}], "gaps""#);
        assert!(ExperimentConfig::from_json(&dup).is_err());
    }

    #[test]
    fn param_layout_round_trips() {
        let p = ModelParams::new(vec![1.0, 2.0], vec![vec![0.1, 0.2], vec![0.3, 0.4]], vec![5.0, 6.0]).unwrap();
        assert_eq!(param_names(2)[2..4], ["a_0_0".to_string(), "a_0_1".to_string()]);
        assert_eq!(params_from_values(2, &param_values(&p)).unwrap(), p);
    }
}
