//! `deepbiht` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 I/O or format failure,
//! 4 training divergence, 1 anything else.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deepbiht::datagen::{gen_dataset, Dataset};
use deepbiht::eval::{evaluate_layerwise, layerwise_experiment, sparsity_sweep, ExperimentResult, BIHT, UNFOLDED};
use deepbiht::training::{train_stage1, train_stage2, TrainedModel, TrainingConfig};
use deepbiht::Error;

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "deepbiht", version, about = "Blind one-bit compressive sensing with an unfolded BIHT network")]
struct Cli {
    /// Flat dotted-key TOML config; defaults to the paper-scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Forces fixed-order gradient reduction.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generates a dataset directory from the `gen.*` settings.
    Datagen,
    /// Trains one stage on a dataset directory and writes a checkpoint.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Dataset directory written by `datagen`.
        #[arg(long)]
        data: PathBuf,
        /// Stage-1 checkpoint; required for stage 2.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Per-layer NMSE of a checkpoint against true-matrix BIHT on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Runs a benchmark experiment end to end.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
    },
    /// Prints a checkpoint summary.
    Inspect { checkpoint: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Divergence(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Divergence(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidConfig(_) | Error::InvalidSparsity { .. } | Error::NotPositiveDefinite { .. } | Error::NotSymmetric => {
                Failure::Config(msg)
            }
            Error::Io { .. } | Error::Format { .. } => Failure::Io(msg),
            Error::DivergenceDetected { .. } => Failure::Divergence(msg),
            _ => Failure::Other(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Io(m) | Failure::Divergence(m) | Failure::Other(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(|e| match e {
        ConfigError::Read(err) => Failure::Io(format!("{}: {err}", cli.config.as_ref().unwrap().display())),
        ConfigError::Invalid(problems) => Failure::Config(format!("invalid config:\n  {}", problems.join("\n  "))),
    })?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if cli.deterministic {
        cfg.force_deterministic();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    match cli.command {
        Command::Datagen => datagen(&cfg, &cli.out),
        Command::Train { stage, data, from } => train(&cfg, stage, &data, from.as_deref(), &cli.out),
        Command::Eval { model, data } => eval(&cfg, &model, &data, &cli.out),
        Command::Reproduce { figure } => reproduce(&cfg, figure, &cli.out),
        Command::Inspect { checkpoint } => inspect(&checkpoint),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn datagen(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let gen = &cfg.experiment.gen;
    gen.validate()?;
    create_dir(out)?;
    let data = gen_dataset::<f64>(gen)?;
    data.save(out)?;
    println!("{}", data.digest()?);
    Ok(())
}

fn train(cfg: &RunConfig, stage: u8, data_dir: &Path, from: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let tcfg: &TrainingConfig = if stage == 1 { &cfg.experiment.stage1 } else { &cfg.experiment.stage2 };
    tcfg.validate()?;
    if stage == 2 && from.is_none() {
        return Err(Failure::Config("stage 2 needs --from <stage-1 checkpoint>".into()));
    }
    create_dir(out)?;
    let data = Dataset::<f64>::load(data_dir)?;
    let view = data.blind_view();
    let mut model = if stage == 1 {
        train_stage1(&view, tcfg)?
    } else {
        let start = TrainedModel::<f64>::load(from.unwrap())?;
        train_stage2(&view, &start.params, tcfg)?
    };
    model.dataset_meta = Some(data.config().clone());
    model.save(out.join(format!("stage{stage}.json")))?;
    println!("final loss {}", model.final_loss());
    Ok(())
}

fn eval(cfg: &RunConfig, model_path: &Path, data_dir: &Path, out: &Path) -> Result<(), Failure> {
    create_dir(out)?;
    let model = TrainedModel::<f64>::load(model_path)?;
    let data = Dataset::<f64>::load(data_dir)?;
    let scores = evaluate_layerwise(&model, &data.blind_view(), data.true_phi(), &cfg.experiment.biht)?;
    let mut csv = String::from("axis,method,mean_nmse,realizations\n");
    for (method, series) in [(UNFOLDED, &scores.unfolded), (BIHT, &scores.biht)] {
        for (layer, v) in series.iter().enumerate() {
            csv.push_str(&format!("{},{method},{v},1\n", layer + 1));
        }
    }
    write_file(&out.join("eval.csv"), &csv)?;
    println!("layer  {UNFOLDED:>10}  {BIHT:>10}");
    for (i, (a, b)) in scores.unfolded.iter().zip(&scores.biht).enumerate() {
        println!("{:>5}  {a:>10.6}  {b:>10.6}", i + 1);
    }
    Ok(())
}

fn reproduce(cfg: &RunConfig, figure: Figure, out: &Path) -> Result<(), Failure> {
    cfg.experiment.validate()?;
    create_dir(out)?;
    let (name, title, result): (&str, &str, ExperimentResult) = match figure {
        Figure::Fig1 => ("fig1", "NMSE per layer / iteration", layerwise_experiment(&cfg.experiment)?),
        Figure::Fig2 => ("fig2", "NMSE versus sparsity", sparsity_sweep(&cfg.experiment, &cfg.k_values)?),
    };
    write_file(&out.join(format!("{name}_means.csv")), &result.means_csv())?;
    write_file(&out.join(format!("{name}_raw.csv")), &result.raw_csv())?;
    write_file(&out.join(format!("{name}.svg")), &result.svg(title))?;
    let snapshot = serde_json::to_string_pretty(&result.config).map_err(|e| Failure::Other(e.to_string()))?;
    write_file(&out.join(format!("{name}_config.json")), &snapshot)?;
    print!("{}", result.means_csv());
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Failure> {
    let model = TrainedModel::<f64>::load(path)?;
    let p = &model.params;
    let (m, n) = p.phi.shape();
    println!("stage            {:?}", model.stage);
    println!("m x n            {m} x {n}");
    println!("L / L'           {} / {}", model.depth, p.depth());
    println!("k                {}", p.sparsity);
    println!("normalize        {}", p.normalize_per_layer);
    println!("ste_clip         {}", p.ste_clip);
    println!("phi frobenius    {}", p.phi.frobenius_norm());
    println!("step_sizes       {:?}", p.step_sizes);
    if let (Some(first), Some(last)) = (model.loss_history.first(), model.loss_history.last()) {
        println!("loss             {first} -> {last} over {} epochs", model.loss_history.len());
    }
    Ok(())
}
