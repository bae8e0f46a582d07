//! The `cluster` command: load data, run the configured search, write
//! `labels.csv`, `report.json`, `candidates.csv` and `timing.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::affinity::{KernelSpec, EXACT_BANDWIDTH_LIMIT};
use crate::error::{invalid, Error, Result};
use crate::io::{load_csv, load_idx, load_labels, write_labels, Dataset};
use crate::kmeans::Partition;
use crate::metrics::{clustering_accuracy, nmi};
use crate::nse::{eggs_nse, Activation, NseConfig};
use crate::search::{run_search, BoOptions, CandidateScore, SearchMode, SearchResult, SearchSpace, INITIAL_DESIGN};
use crate::spectra::{GapKind, Scoring};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Idx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Grid,
    Bo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Relative eigen-gap.
    Reg,
    /// Plain eigen-gap.
    Eg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "cluster", version, about = "Spectral clustering with eigen-gap driven model search")]
pub struct RunConfig {
    /// Data file (CSV rows are samples; IDX image file).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Ground-truth labels (one integer per line, or an IDX label file).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// The last CSV column holds ground-truth labels.
    #[arg(long)]
    pub label_column: bool,
    /// Number of clusters.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
    #[arg(long, value_enum, default_value_t = SearchKind::Grid)]
    pub search: SearchKind,
    /// Evaluations per model in BO mode.
    #[arg(long, default_value_t = 30)]
    pub budget: usize,
    /// Landmark count for the network extension; 0 searches on all points.
    #[arg(long, default_value_t = 0)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 200)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Smoothing constant of the relative eigen-gap.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Worker threads (default: all cores). 1 runs serially.
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ScoreKind::Reg)]
    pub score: ScoreKind,
}

impl RunConfig {
    fn scoring(&self) -> Result<Scoring> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("--eps must be positive, got {}", self.eps)));
        }
        let gap = match self.score {
            ScoreKind::Reg => GapKind::Relative,
            ScoreKind::Eg => GapKind::Plain,
        };
        Ok(Scoring { gap, eps: self.eps })
    }

    fn mode(&self) -> SearchMode {
        match self.search {
            SearchKind::Grid => SearchMode::Grid,
            SearchKind::Bo => SearchMode::Bo(BoOptions::with_budget(self.budget)),
        }
    }

    fn space(&self) -> SearchSpace {
        match self.search {
            SearchKind::Grid => SearchSpace::default_grid(),
            SearchKind::Bo => SearchSpace::default_bo(),
        }
    }

    fn nse_config(&self, seed: u64) -> NseConfig {
        NseConfig {
            hidden: self.hidden,
            gamma: self.gamma,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            activation: match self.activation {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Tanh => Activation::Tanh,
            },
            seed,
            ..NseConfig::default()
        }
    }
}

/// A candidate as written to the report. Degenerate candidates have no score.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateRecord {
    pub model: &'static str,
    pub lambda: Option<f64>,
    pub kernel: Option<KernelSpec>,
    pub tau: usize,
    pub approx_rank: Option<usize>,
    pub score: Option<f64>,
    pub sigmas: Vec<f64>,
    pub note: Option<String>,
}

impl From<&CandidateScore> for CandidateRecord {
    fn from(c: &CandidateScore) -> Self {
        Self {
            model: c.config.model.name(),
            lambda: c.config.model.uses_lambda().then_some(c.config.lambda),
            kernel: c.config.model.uses_kernel().then_some(c.config.kernel),
            tau: c.config.tau,
            approx_rank: c.config.approx_rank,
            score: c.is_valid().then_some(c.score),
            sigmas: c.spectrum.as_ref().map(|s| s.sigmas.clone()).unwrap_or_default(),
            note: c.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NseSummary {
    pub landmarks: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepeatReport {
    pub seed: u64,
    pub winner: CandidateRecord,
    pub candidate_count: usize,
    pub degenerate_count: usize,
    pub cluster_sizes: Vec<usize>,
    pub accuracy: Option<f64>,
    pub nmi: Option<f64>,
    pub bandwidth_approximated: bool,
    pub nse: Option<NseSummary>,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub score: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub nmi: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub points: usize,
    pub dimension: usize,
    pub repeats: Vec<RepeatReport>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    repeat_seconds: Vec<f64>,
    total_seconds: f64,
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = match cfg.format {
        Format::Csv => load_csv(&cfg.data, cfg.label_column)?,
        Format::Idx => return load_idx(&cfg.data, cfg.labels.as_deref()),
    };
    if let Some(path) = &cfg.labels {
        ds.labels = Some(load_labels(path)?);
    }
    if let Some(l) = &ds.labels {
        if l.len() != ds.data.ncols() {
            return Err(invalid(format!("{} labels for {} points", l.len(), ds.data.ncols())));
        }
    }
    Ok(ds)
}

struct RepeatOutcome {
    report: RepeatReport,
    partition: Partition,
    search: SearchResult,
}

fn run_repeat(cfg: &RunConfig, ds: &Dataset, truth: Option<&Partition>, seed: u64) -> Result<RepeatOutcome> {
    let k = cfg.k as usize;
    let space = cfg.space();
    let scoring = cfg.scoring()?;
    let (partition, search, nse, searched_points) = if cfg.landmarks == 0 {
        let search = run_search(&ds.data, k, &space, cfg.mode(), scoring, seed)?;
        (search.partition.clone(), search, None, ds.data.ncols())
    } else {
        let out = eggs_nse(&ds.data, k, &space, cfg.mode(), scoring, cfg.landmarks, &cfg.nse_config(seed), seed)?;
        let summary = NseSummary {
            landmarks: cfg.landmarks,
            initial_loss: out.fit.losses[0],
            final_loss: *out.fit.losses.last().expect("loss trace is never empty"),
        };
        (out.partition, out.search, Some(summary), cfg.landmarks)
    };
    let (accuracy, nmi_value) = match truth {
        Some(t) => (Some(clustering_accuracy(&partition, t)?), Some(nmi(&partition, t)?)),
        None => (None, None),
    };
    let candidates: Vec<CandidateRecord> = search.scores.iter().map(CandidateRecord::from).collect();
    let uses_gaussian = search.scores.iter().any(|c| c.config.model.uses_kernel() && matches!(c.config.kernel, KernelSpec::Gaussian { .. }));
    let report = RepeatReport {
        seed,
        winner: CandidateRecord::from(search.winner_score()),
        candidate_count: candidates.len(),
        degenerate_count: search.scores.iter().filter(|c| !c.is_valid()).count(),
        cluster_sizes: partition.sizes(),
        accuracy,
        nmi: nmi_value,
        bandwidth_approximated: uses_gaussian && searched_points > EXACT_BANDWIDTH_LIMIT,
        nse,
        candidates,
    };
    Ok(RepeatOutcome { report, partition, search })
}

fn write_candidates(path: &Path, outcomes: &[RepeatOutcome], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let mut header: Vec<String> = ["repeat", "model", "lambda", "kernel", "xi", "offset", "degree", "tau", "score"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k + 1).map(|i| format!("sigma_{i}")));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (r, o) in outcomes.iter().enumerate() {
        for c in &o.search.scores {
            let cfg = &c.config;
            let (kernel, xi, offset, degree) = match (cfg.model.uses_kernel(), cfg.kernel) {
                (false, _) => (String::new(), None, None, String::new()),
                (true, KernelSpec::Linear) => ("linear".into(), None, None, String::new()),
                (true, KernelSpec::Gaussian { xi }) => ("gaussian".into(), Some(xi), None, String::new()),
                (true, KernelSpec::Polynomial { offset, degree }) => ("polynomial".into(), None, Some(offset), degree.to_string()),
            };
            let mut row = vec![
                r.to_string(),
                cfg.model.name().to_string(),
                opt(cfg.model.uses_lambda().then_some(cfg.lambda)),
                kernel,
                opt(xi),
                opt(offset),
                degree,
                cfg.tau.to_string(),
                opt(c.is_valid().then_some(c.score)),
            ];
            let sigmas = c.spectrum.as_ref().map(|s| s.sigmas.clone()).unwrap_or_default();
            row.extend((0..=k).map(|i| opt(sigmas.get(i).copied())));
            w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs the full pipeline for a parsed configuration.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let ds = load(cfg)?;
    let truth = ds.labels.as_deref().map(Partition::from_raw_labels);
    if cfg.search == SearchKind::Bo && cfg.budget < INITIAL_DESIGN {
        return Err(invalid(format!("--budget must be at least {INITIAL_DESIGN}")));
    }
    std::fs::create_dir_all(&cfg.out)?;

    let started = Instant::now();
    let mut outcomes = Vec::new();
    let mut seconds = Vec::new();
    for r in 0..cfg.repeats {
        let t = Instant::now();
        outcomes.push(run_repeat(cfg, &ds, truth.as_ref(), cfg.seed.wrapping_add(r))?);
        seconds.push(t.elapsed().as_secs_f64());
        log::info!("repeat {r} finished in {:.2}s", seconds[seconds.len() - 1]);
    }

    write_labels(cfg.out.join("labels.csv"), &outcomes[0].partition)?;
    for (r, o) in outcomes.iter().enumerate().skip(1) {
        write_labels(cfg.out.join(format!("labels_{r}.csv")), &o.partition)?;
    }
    write_candidates(&cfg.out.join("candidates.csv"), &outcomes, cfg.k as usize)?;

    let collect = |f: &dyn Fn(&RepeatReport) -> Option<f64>| -> Vec<f64> { outcomes.iter().filter_map(|o| f(&o.report)).collect() };
    let aggregate = Aggregate {
        score: Summary::of(&collect(&|r| r.winner.score)),
        accuracy: Summary::of(&collect(&|r| r.accuracy)),
        nmi: Summary::of(&collect(&|r| r.nmi)),
    };
    let report = RunReport {
        config: cfg.clone(),
        points: ds.data.ncols(),
        dimension: ds.data.nrows(),
        repeats: outcomes.into_iter().map(|o| o.report).collect(),
        aggregate,
    };
    std::fs::write(cfg.out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let timing = Timing { repeat_seconds: seconds, total_seconds: started.elapsed().as_secs_f64() };
    std::fs::write(cfg.out.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(report)
}

/// Parses `argv`, runs, and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cfg.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(&cfg)),
            Err(e) => Err(invalid(format!("cannot start {t} threads: {e}"))),
        },
        None => run(&cfg),
    };
    match result {
        Ok(report) => {
            if let Some(acc) = report.aggregate.accuracy {
                println!("accuracy {:.4} (std {:.4})", acc.mean, acc.std);
            }
            println!("wrote results to {}", cfg.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
