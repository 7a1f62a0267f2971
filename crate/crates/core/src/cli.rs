//! Command-line front end of the `isac` binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{train_naive, NaiveNet};
use crate::channel::steering;
use crate::config::{SimConfig, ThetaMode};
use crate::error::{Error, Result};
use crate::harness::dataset::{dataset_hash, generate_dataset};
use crate::harness::episode::Method;
use crate::harness::eval::monte_carlo_eval;
use crate::harness::export::{to_csv_string, write_csv, write_json, JsonMirror};
use crate::harness::sweep::{power_sweep, LearnedModels, SweepMode, DEFAULT_POWER_GRID};
use crate::model_file::{self, Container, PayloadKind};
use crate::nn::hcl::HclNet;
use crate::nn::train::{train, Optimizer, TrainHyper};
use crate::nn::window::TrainingExample;
use crate::sensing::{crlb_d, crlb_theta};

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "ISAC vehicular predictive beamforming simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training set of history windows and next-slot channels.
    GenData(GenDataArgs),
    /// Train the HCL-Net or the naive DL baseline.
    Train(TrainArgs),
    /// Monte-Carlo evaluation of trained models against the baselines.
    Eval(EvalArgs),
    /// Evaluate every method over a grid of power budgets.
    Sweep(SweepArgs),
    /// Print closed-form CRLBs for an aligned beam, without simulation.
    Crlb(CrlbArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file (`key = value` lines, optional `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed; overrides `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub theta_mode: Option<ThetaModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ThetaModeArg {
    Relative,
    Crlb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Hcl,
    Naive,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 2000)]
    pub examples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset file from `gen-data`; generated in memory when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub examples: usize,
    #[arg(long, value_enum, default_value = "hcl")]
    pub arch: Arch,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    /// Heavy-ball momentum for `--optimizer sgd` (0 gives plain gradient descent).
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Model file; the loss trace goes to `<out>.trace.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trained HCL-Net or naive model file; repeatable.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub realizations: usize,
    /// Rescale predicted beams onto the power budget at inference.
    #[arg(long)]
    pub project_power: bool,
    /// CSV output; a JSON mirror is written next to it. Prints CSV when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Comma-separated power budgets in W.
    #[arg(long, value_delimiter = ',')]
    pub power_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub realizations: usize,
    #[arg(long)]
    pub project_power: bool,
    /// `reuse` evaluates the given models at every point; `retrain` trains
    /// fresh ones per power budget.
    #[arg(long, default_value = "reuse")]
    pub mode: String,
    #[arg(long, default_value_t = 2000)]
    pub examples: usize,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrlbArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Angle in rad.
    #[arg(long)]
    pub theta: f64,
    /// Distance in m.
    #[arg(long)]
    pub dist: f64,
    /// Beam power in W; the beam is `√p a(θ)`.
    #[arg(long)]
    pub power: f64,
}

/// Base configuration, then `--set` overrides, then the dedicated flags.
fn resolve_config(common: &CommonArgs, fallback: Option<SimConfig>) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(p) => SimConfig::load(p)?,
        None => fallback.unwrap_or_default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    if let Some(s) = common.seed {
        cfg.rng_seed = s;
    }
    if let Some(m) = common.theta_mode {
        cfg.theta_mode = match m {
            ThetaModeArg::Relative => ThetaMode::Relative,
            ThetaModeArg::Crlb => ThetaMode::Crlb,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_pairs(cfg: &SimConfig) -> Vec<(String, String)> {
    cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
struct TraceFile<'a> {
    config: Vec<(String, String)>,
    seed: u64,
    arch: &'a str,
    dataset_sha256: String,
    loss_trace: &'a [f64],
    rate_trace: &'a [f64],
}

enum Model {
    Hcl(HclNet),
    Naive(NaiveNet),
}

struct LoadedModels {
    hcl: Option<HclNet>,
    naive: Option<NaiveNet>,
    config: Option<SimConfig>,
}

fn load_models(paths: &[PathBuf]) -> Result<LoadedModels> {
    let mut out = LoadedModels {
        hcl: None,
        naive: None,
        config: None,
    };
    for p in paths {
        let c = Container::read(p)?;
        if out.config.is_none() {
            out.config = Some(c.config()?);
        }
        match c.kind {
            PayloadKind::Hcl => out.hcl = Some(model_file::decode_hcl(&c)?),
            PayloadKind::Naive => out.naive = Some(model_file::decode_naive(&c)?),
            PayloadKind::Dataset => {
                return Err(Error::Format(format!("{} holds a dataset, not a model", p.display())))
            }
        }
    }
    Ok(out)
}

fn check_shapes(models: &LoadedModels, cfg: &SimConfig) -> Result<()> {
    if let Some(n) = &models.hcl {
        let s = n.shape();
        if (s.k, s.m, s.tau) != (cfg.n_vehicles, cfg.n_tx, cfg.history_len) {
            return Err(Error::Shape(format!(
                "HCL-Net was trained for K={}, M={}, tau={}; configuration has K={}, M={}, tau={}",
                s.k, s.m, s.tau, cfg.n_vehicles, cfg.n_tx, cfg.history_len
            )));
        }
    }
    if let Some(n) = &models.naive {
        if (n.k, n.m) != (cfg.n_vehicles, cfg.n_tx) {
            return Err(Error::Shape(format!(
                "naive network was trained for K={}, M={}; configuration has K={}, M={}",
                n.k, n.m, cfg.n_vehicles, cfg.n_tx
            )));
        }
    }
    Ok(())
}

fn hyper_for(cfg: &SimConfig, iters: Option<usize>, lr: Option<f64>, batch: Option<usize>) -> TrainHyper {
    let mut h = TrainHyper {
        seed: cfg.rng_seed,
        ..TrainHyper::default()
    };
    if let Some(i) = iters {
        h.max_iters = i;
    }
    if let Some(l) = lr {
        h.lr = l;
    }
    if let Some(b) = batch {
        h.batch_size = b;
    }
    h
}

fn train_model(arch: Arch, data: &[TrainingExample], cfg: &SimConfig, hyper: &TrainHyper) -> Result<(Model, Vec<f64>, Vec<f64>)> {
    Ok(match arch {
        Arch::Hcl => {
            let (net, rep) = train(data, cfg, hyper)?;
            (Model::Hcl(net), rep.loss_trace, rep.rate_trace)
        }
        Arch::Naive => {
            let (net, rep) = train_naive(data, cfg, hyper)?;
            (Model::Naive(net), rep.loss_trace, rep.rate_trace)
        }
    })
}

fn emit_rows(out: Option<&Path>, mirror: &JsonMirror) -> Result<()> {
    match out {
        Some(p) => {
            write_csv(&mirror.rows, p)?;
            write_json(mirror, &sibling(p, ".json"))?;
            eprintln!("wrote {} and {}", p.display(), sibling(p, ".json").display());
        }
        None => print!("{}", to_csv_string(&mirror.rows)),
    }
    Ok(())
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let cfg = resolve_config(&a.common, None)?;
    let data = generate_dataset(&cfg, a.examples, cfg.rng_seed)?;
    model_file::encode_dataset(&data, &cfg).write(&a.out)?;
    println!("examples={}", data.len());
    println!("sha256={}", dataset_hash(&data, &cfg));
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (cfg, data) = match &a.data {
        Some(p) => {
            let c = Container::read(p)?;
            let fallback = c.config()?;
            let data = model_file::decode_dataset(&c)?;
            (resolve_config(&a.common, Some(fallback))?, data)
        }
        None => {
            let cfg = resolve_config(&a.common, None)?;
            let data = generate_dataset(&cfg, a.examples, cfg.rng_seed)?;
            (cfg, data)
        }
    };
    let mut hyper = hyper_for(&cfg, a.iters, a.lr, a.batch_size);
    hyper.optimizer = match a.optimizer {
        OptimizerArg::Sgd => Optimizer::Sgd,
        OptimizerArg::Adam => Optimizer::Adam,
    };
    if let Some(m) = a.momentum {
        hyper.momentum = m;
    }
    let (model, loss, rate) = train_model(a.arch, &data, &cfg, &hyper)?;
    let container = match &model {
        Model::Hcl(n) => model_file::encode_hcl(n, &cfg),
        Model::Naive(n) => model_file::encode_naive(n, &cfg)?,
    };
    container.write(&a.out)?;
    let trace = TraceFile {
        config: config_pairs(&cfg),
        seed: cfg.rng_seed,
        arch: match a.arch {
            Arch::Hcl => "hcl_net",
            Arch::Naive => "naive_dl",
        },
        dataset_sha256: dataset_hash(&data, &cfg),
        loss_trace: &loss,
        rate_trace: &rate,
    };
    let trace_path = sibling(&a.out, ".trace.json");
    let text = serde_json::to_string_pretty(&trace)?;
    std::fs::write(&trace_path, text + "\n").map_err(|e| Error::io(&trace_path, e))?;
    println!("iterations={}", loss.len());
    if let (Some(l), Some(r)) = (loss.last(), rate.last()) {
        println!("final_loss={l}");
        println!("final_rate={r}");
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if a.model.is_empty() {
        return Err(Error::InvalidConfig("model file required (pass --model)".into()));
    }
    let models = load_models(&a.model)?;
    let cfg = resolve_config(&a.common, models.config.clone())?;
    check_shapes(&models, &cfg)?;
    let mut methods = vec![Method::Genie];
    if let Some(net) = &models.hcl {
        methods.push(Method::Hcl {
            net,
            project: a.project_power,
        });
    }
    if let Some(net) = &models.naive {
        methods.push(Method::NaiveDl {
            net,
            project: a.project_power,
        });
    }
    methods.push(Method::Random);
    let rep = monte_carlo_eval(&cfg, &methods, a.realizations, cfg.rng_seed)?;
    emit_rows(
        a.out.as_deref(),
        &JsonMirror {
            config: rep.config,
            seed: rep.seed,
            rows: rep.methods,
        },
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mode: SweepMode = a.mode.parse()?;
    let models = load_models(&a.model)?;
    let cfg = resolve_config(&a.common, models.config.clone())?;
    check_shapes(&models, &cfg)?;
    let grid = if a.power_grid.is_empty() {
        DEFAULT_POWER_GRID.to_vec()
    } else {
        a.power_grid.clone()
    };
    let rows = power_sweep(&cfg, &grid, a.realizations, cfg.rng_seed, a.project_power, |point| match mode {
        SweepMode::Reuse => Ok(LearnedModels {
            hcl: models.hcl.clone(),
            naive: models.naive.clone(),
        }),
        SweepMode::Retrain => {
            let data = generate_dataset(point, a.examples, point.rng_seed)?;
            let hyper = hyper_for(point, a.iters, None, None);
            eprintln!("training at P={}", point.power_budget);
            Ok(LearnedModels {
                hcl: Some(train(&data, point, &hyper)?.0),
                naive: Some(train_naive(&data, point, &hyper)?.0),
            })
        }
    })?;
    emit_rows(
        a.out.as_deref(),
        &JsonMirror {
            config: config_pairs(&cfg),
            seed: cfg.rng_seed,
            rows,
        },
    )
}

fn cmd_crlb(a: &CrlbArgs) -> Result<()> {
    let cfg = resolve_config(&a.common, None)?;
    if !(a.power >= 0.0) {
        return Err(Error::InvalidConfig("power must be non-negative".into()));
    }
    let amp = a.power.sqrt();
    let w: Vec<_> = steering(a.theta, cfg.n_tx).into_iter().map(|z| z * amp).collect();
    let ct = crlb_theta(a.theta, a.dist, &w, &cfg)?;
    let cd = crlb_d(a.theta, a.dist, &w, &cfg)?;
    println!("crlb_theta={ct:e}");
    println!("crlb_d={cd:e}");
    println!("sqrt_crlb_theta={:e}", ct.sqrt());
    println!("sqrt_crlb_d={:e}", cd.sqrt());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Crlb(a) => cmd_crlb(a),
    }
}

/// Parses `argv` and runs the subcommand. Usage errors exit with clap's
/// status (0 for `--help`), runtime errors with 1.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
