//! Command-line front end.
//!
//! Every command writes its artifacts plus a `<out>.manifest.json` holding
//! the full [`RunConfig`], resolved hyperparameters and crate version.
//! `rerun --manifest <file>` replays a manifest.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::communities::{assign, best_of_restarts, group_crosstab, AttributeTable};
use crate::data::{load_learner_category_matrix, one_mode_projection, InputFormat, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{benchmark, BenchmarkConfig};
use crate::model::{fit, FitResult, Hyperparameters, DEFAULT_MAX_K0};
use crate::synthetic::{sample_generative, sample_planted, PlantedSpec};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Project,
    Fit,
    Assign,
    Benchmark,
    Synth,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Existing fit to assign from instead of running restarts.
    pub fit: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    /// `None` means `min(N, 100)`, with `N` the size of the matrix being fit.
    pub k0: Option<usize>,
    pub a: f64,
    pub b: f64,
    pub iters: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub fraction: f64,
    pub n_subsets: usize,
    pub subset_size: usize,
    pub seed: u64,
    pub zero_diagonal: bool,
    pub symmetric_mask: bool,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub within: f64,
    pub between: f64,
    /// Sample from the model's own priors instead of a planted partition.
    pub generative: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 60, k: 3, within: 8.0, between: 0.5, generative: false }
    }
}

impl RunConfig {
    pub fn new(command: CommandKind, out: impl Into<PathBuf>) -> Self {
        let hp = Hyperparameters::default();
        let bench = BenchmarkConfig::default();
        Self {
            command,
            input: None,
            out: out.into(),
            fit: None,
            attributes: None,
            k0: None,
            a: hp.a,
            b: hp.b,
            iters: hp.n_iter,
            tol: hp.rel_tol,
            n_restarts: 100,
            fraction: bench.fraction,
            n_subsets: bench.n_subsets,
            subset_size: bench.subset_size,
            seed: 0,
            zero_diagonal: false,
            symmetric_mask: false,
            synth: SynthConfig::default(),
        }
    }

    pub fn hyperparameters(&self, n: usize) -> Hyperparameters {
        Hyperparameters {
            a: self.a,
            b: self.b,
            k0: self.k0.unwrap_or_else(|| n.clamp(1, DEFAULT_MAX_K0)),
            n_iter: self.iters,
            rel_tol: self.tol,
            ..Hyperparameters::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::contract(msg.to_string()));
        if self.command != CommandKind::Synth && self.input.is_none() {
            return bad("--input is required");
        }
        if self.k0 == Some(0) {
            return bad("--k0 must be at least 1");
        }
        if !(self.a.is_finite() && self.a > 0.0) || !(self.b.is_finite() && self.b > 0.0) {
            return bad("--a and --b must be positive");
        }
        if self.iters == 0 {
            return bad("--iters must be at least 1");
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad("--tol must be non-negative");
        }
        if self.n_restarts == 0 {
            return bad("--restarts must be at least 1");
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return bad("--fraction must lie in (0, 1)");
        }
        if self.n_subsets == 0 {
            return bad("--subsets must be at least 1");
        }
        if self.subset_size < 2 {
            return bad("--subset-size must be at least 2");
        }
        if self.command == CommandKind::Synth && (self.synth.n == 0 || self.synth.k == 0) {
            return bad("--n and --k must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// Hyperparameters after resolving `k0`; absent for commands that fit nothing.
    pub hyperparameters: Option<Hyperparameters>,
    pub artifacts: Vec<PathBuf>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `out` with its extension replaced by `ext`, e.g. `report.json` -> `report.csv`.
fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
    })?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_similarity(cfg: &RunConfig) -> Result<SimilarityMatrix> {
    let path = cfg.input.as_deref().expect("validated");
    let x = SimilarityMatrix::read_csv(open(path)?)?;
    Ok(if cfg.zero_diagonal { x.zero_diagonal() } else { x })
}

/// Executes one command and returns the manifest it wrote.
pub fn run(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut artifacts = Vec::new();
    let mut hyperparameters = None;
    match cfg.command {
        CommandKind::Project => {
            let path = cfg.input.as_deref().expect("validated");
            let c = load_learner_category_matrix(open(path)?, InputFormat::Csv)?;
            let mut x = one_mode_projection(&c);
            if cfg.zero_diagonal {
                x = x.zero_diagonal();
            }
            x.write_csv(create(&cfg.out)?)?;
            artifacts.push(cfg.out.clone());
        }
        CommandKind::Fit => {
            let x = read_similarity(cfg)?;
            let hp = cfg.hyperparameters(x.n());
            let result = fit(&x, &hp, cfg.seed)?;
            if result.is_empty() {
                eprintln!("warning: every component was pruned; the fit is empty");
            }
            write_text(&cfg.out, &result.to_json()?)?;
            artifacts.push(cfg.out.clone());
            hyperparameters = Some(hp);
        }
        CommandKind::Assign => {
            let x = read_similarity(cfg)?;
            let report = match &cfg.fit {
                Some(path) => {
                    let mut text = String::new();
                    std::io::Read::read_to_string(&mut open(path)?, &mut text)?;
                    let stored = FitResult::from_json(&text)?;
                    if stored.model.n() != x.n() {
                        return Err(Error::Validation(format!(
                            "fit has {} rows but the similarity matrix has {}",
                            stored.model.n(),
                            x.n()
                        )));
                    }
                    assign(&stored, x.learner_ids())?
                }
                None => {
                    let hp = cfg.hyperparameters(x.n());
                    hyperparameters = Some(hp);
                    best_of_restarts(&x, &hp, cfg.n_restarts, cfg.seed)?.report
                }
            };
            write_text(&cfg.out, &report.to_json()?)?;
            artifacts.push(cfg.out.clone());
            let csv_path = sibling(&cfg.out, "csv");
            if csv_path != cfg.out {
                report.write_csv(create(&csv_path)?)?;
                artifacts.push(csv_path);
            }
            if let Some(path) = &cfg.attributes {
                let table = AttributeTable::read_csv(open(path)?)?;
                let crosstab = group_crosstab(&report, &table)?;
                let crosstab_path = sibling(&cfg.out, "crosstab.json");
                write_text(&crosstab_path, &serde_json::to_string_pretty(&crosstab)?)?;
                artifacts.push(crosstab_path);
            }
        }
        CommandKind::Benchmark => {
            let x = read_similarity(cfg)?;
            let bench = BenchmarkConfig {
                n_subsets: cfg.n_subsets,
                subset_size: cfg.subset_size,
                fraction: cfg.fraction,
                symmetric_mask: cfg.symmetric_mask,
            };
            let hp = cfg.hyperparameters(cfg.subset_size);
            let report = benchmark(&x, &bench, &hp, cfg.seed)?;
            write_text(&cfg.out, &report.to_json()?)?;
            let table_path = sibling(&cfg.out, "txt");
            let table = report.to_table();
            print!("{table}");
            artifacts.push(cfg.out.clone());
            if table_path != cfg.out {
                write_text(&table_path, &table)?;
                artifacts.push(table_path);
            }
            hyperparameters = Some(hp);
        }
        CommandKind::Synth => {
            let s = &cfg.synth;
            if s.generative {
                let hp = cfg.hyperparameters(s.n);
                let (_, x) = sample_generative(s.n, s.k, &hp, cfg.seed)?;
                x.write_csv(create(&cfg.out)?)?;
                artifacts.push(cfg.out.clone());
            } else {
                let spec = PlantedSpec::balanced(s.n, s.k, s.within, s.between, cfg.seed);
                let (labels, x) = sample_planted(&spec)?;
                x.write_csv(create(&cfg.out)?)?;
                artifacts.push(cfg.out.clone());
                let labels_path = sibling(&cfg.out, "labels.csv");
                let mut w = csv::Writer::from_writer(create(&labels_path)?);
                w.write_record(["learner_id", "label"])?;
                for (id, label) in x.learner_ids().iter().zip(&labels) {
                    w.write_record([id.as_str(), &label.to_string()])?;
                }
                w.flush()?;
                artifacts.push(labels_path);
            }
        }
    }

    let manifest = Manifest {
        tool: TOOL_NAME.to_string(),
        version: VERSION.to_string(),
        config: cfg.clone(),
        hyperparameters,
        artifacts,
    };
    write_text(&manifest_path(&cfg.out), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// 1: usage, contract or I/O; 2: unparseable or invalid data; 3: numerical failure.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Validation(_) | Error::Json(_) => 2,
        Error::Numerical(_) => 3,
        Error::Contract(_) | Error::Io(_) => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bnmf-community", version, about = "Community detection with Bayesian Poisson NMF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learner x category CSV -> learner similarity CSV.
    Project {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long)]
        zero_diagonal: bool,
    },
    /// Fit one model to a similarity CSV and write it as JSON.
    Fit {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Community report (JSON + CSV) from a stored fit or from restarts.
    Assign {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Use this fit JSON instead of running restarts.
        #[arg(long, conflicts_with = "restarts")]
        fit: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        /// Attribute CSV keyed by learner_id; writes <out>.crosstab.json.
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
    /// Hold-out comparison of BNMF, Pred-Avg and Pred-0 over random subsets.
    Benchmark {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 20)]
        subsets: usize,
        #[arg(long, default_value_t = 50)]
        subset_size: usize,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        /// Hide (j, i) together with every held-out (i, j).
        #[arg(long)]
        symmetric_mask: bool,
    },
    /// Write a synthetic similarity CSV (and planted labels).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 8.0)]
        within: f64,
        #[arg(long, default_value_t = 0.5)]
        between: f64,
        #[arg(long)]
        generative: bool,
        #[arg(long, default_value_t = 5.0)]
        a: f64,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replay a manifest, optionally redirecting its output.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct IoArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Initial number of components [default: min(N, 100)]
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long, default_value_t = 5.0)]
    a: f64,
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    zero_diagonal: bool,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.k0 = self.k0;
        cfg.a = self.a;
        cfg.b = self.b;
        cfg.iters = self.iters;
        cfg.tol = self.tol;
        cfg.seed = self.seed;
        cfg.zero_diagonal = self.zero_diagonal;
    }
}

fn with_io(command: CommandKind, io: IoArgs) -> RunConfig {
    let mut cfg = RunConfig::new(command, io.out);
    cfg.input = Some(io.input);
    cfg
}

fn into_config(command: Command) -> Result<RunConfig> {
    Ok(match command {
        Command::Project { io, zero_diagonal } => {
            let mut cfg = with_io(CommandKind::Project, io);
            cfg.zero_diagonal = zero_diagonal;
            cfg
        }
        Command::Fit { io, model } => {
            let mut cfg = with_io(CommandKind::Fit, io);
            model.apply(&mut cfg);
            cfg
        }
        Command::Assign { io, model, fit, restarts, attributes } => {
            let mut cfg = with_io(CommandKind::Assign, io);
            model.apply(&mut cfg);
            cfg.fit = fit;
            cfg.n_restarts = restarts;
            cfg.attributes = attributes;
            cfg
        }
        Command::Benchmark { io, model, subsets, subset_size, fraction, symmetric_mask } => {
            let mut cfg = with_io(CommandKind::Benchmark, io);
            model.apply(&mut cfg);
            cfg.n_subsets = subsets;
            cfg.subset_size = subset_size;
            cfg.fraction = fraction;
            cfg.symmetric_mask = symmetric_mask;
            cfg
        }
        Command::Synth { out, n, k, within, between, generative, a, b, seed } => {
            let mut cfg = RunConfig::new(CommandKind::Synth, out);
            cfg.synth = SynthConfig { n, k, within, between, generative };
            cfg.a = a;
            cfg.b = b;
            cfg.seed = seed;
            cfg
        }
        Command::Rerun { manifest, out } => {
            let manifest: Manifest = serde_json::from_reader(open(&manifest)?)?;
            let mut cfg = manifest.config;
            if let Some(out) = out {
                cfg.out = out;
            }
            cfg
        }
    })
}

/// Parses `args` (including the program name), runs, and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match into_config(cli.command).and_then(|cfg| run(&cfg)) {
        Ok(manifest) => {
            for path in &manifest.artifacts {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
