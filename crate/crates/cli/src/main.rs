//! Command-line front end: train, evaluate, gradient-check, and run the
//! input-ratio and component-ablation experiments. Every run is a pure
//! function of its config file and seed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use daccn_core::config::{Precision, RunConfig};
use daccn_core::error::Error;
use daccn_core::experiments::{
    ablation_experiment, ablation_observations, format_ablation_table, format_stretch_table,
    stretch_experiment, stretch_observations,
};
use daccn_core::io::{load_checkpoint, write_pfm, write_ppm};
use daccn_core::metrics::MetricsReport;
use daccn_core::suite::{run_suite, standard_suite};
use daccn_core::trainer::{
    evaluate_model, evaluate_oracle, generate_split, train_with_precision,
};
use daccn_core::{geometry, model, tensor, Result};

#[derive(Parser)]
#[command(name = "daccn", about = "Direction-aware cumulative convolution depth laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML run configuration; omitted keys take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.scene.seed = seed;
        }
        if let Some(iters) = self.iterations {
            cfg.iterations = iters;
        }
        if let Some(batch) = self.batch_size {
            cfg.batch_size = batch;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on generated scenes; writes a loss trace, a checkpoint, and
    /// held-out metrics.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the held-out split of the configured scenes.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score the ground truth against itself instead of the model.
        #[arg(long)]
        oracle: bool,
        /// Dump predictions (PFM), ground truth (PFM), and targets (PPM)
        /// into this directory.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
    },
    /// Run the finite-difference gradient checks over every registered
    /// differentiable operation.
    Gradcheck,
    /// Train the four input-ratio variants and print the comparison table.
    Stretch(ConfigArgs),
    /// Train the four component on/off variants and print the ablation
    /// table.
    Ablate(ConfigArgs),
    /// Print the built-in default configuration as TOML.
    DumpConfig,
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let outcome = train_with_precision(&cfg)?;
    println!(
        "trained {} iterations: loss {} -> {}",
        cfg.iterations, outcome.initial_loss, outcome.final_loss
    );
    if !outcome.learned_scales.is_empty() {
        for (b, (sx, sy)) in outcome.learned_scales.iter().enumerate() {
            println!("branch {b}: s_x={sx:.4} s_y={sy:.4}");
        }
    }
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("trace:      {}", outcome.trace_path.display());
    println!("held-out metrics:");
    println!("{}", outcome.metrics.to_table());
    Ok(())
}

fn eval_with<E: tensor::Element>(
    cfg: &RunConfig,
    checkpoint: &PathBuf,
    oracle: bool,
    dump_dir: &Option<PathBuf>,
) -> Result<MetricsReport> {
    let loaded: model::DaCCNModel<E> = load_checkpoint(checkpoint)?;
    if loaded.cfg != cfg.model {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained with a different model configuration ({})",
            checkpoint.display()
        )));
    }
    let (_, val) = generate_split::<E>(cfg)?;
    let report = if oracle {
        evaluate_oracle(&val)?
    } else {
        evaluate_model(&loaded, &val)?
    };
    if let Some(dir) = dump_dir {
        std::fs::create_dir_all(dir)?;
        let bound = loaded.bind(None)?;
        for (i, sample) in val.iter().enumerate() {
            let refs = [sample];
            let (target, _, _) = daccn_core::synthdata::stack_samples(&refs)?;
            let (_, _, h, w) = target.dims4()?;
            let feats = bound.encoder_forward(&target)?;
            let disps = bound.decoder_forward(&feats)?;
            let finest = disps.last().expect("scales");
            let full = tensor::upsample_bilinear(finest, h, w)?;
            let pred = geometry::disparity_to_depth(&full, loaded.cfg.d_min, loaded.cfg.d_max)?;
            write_pfm(&dir.join(format!("pred_{i:03}.pfm")), &pred.values)?;
            write_pfm(&dir.join(format!("gt_{i:03}.pfm")), &sample.gt_depth.values)?;
            write_ppm(&dir.join(format!("target_{i:03}.ppm")), &sample.target)?;
        }
    }
    Ok(report)
}

fn cmd_eval(
    args: &ConfigArgs,
    checkpoint: &PathBuf,
    oracle: bool,
    dump_dir: &Option<PathBuf>,
) -> Result<()> {
    let cfg = args.load()?;
    let report = match cfg.precision {
        Precision::F64 => eval_with::<f64>(&cfg, checkpoint, oracle, dump_dir)?,
        Precision::F32 => eval_with::<f32>(&cfg, checkpoint, oracle, dump_dir)?,
    };
    println!("{}", report.to_record_line());
    println!("{}", report.to_table());
    Ok(())
}

fn cmd_gradcheck() -> Result<()> {
    let started = Instant::now();
    let report = run_suite(&standard_suite())?;
    print!("{}", report.to_table());
    println!(
        "{} checks in {:.2}s",
        report.cases.len(),
        started.elapsed().as_secs_f64()
    );
    if !report.all_pass() {
        let failed: Vec<&str> = report
            .cases
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        return Err(Error::GradCheck(format!(
            "{} of {} operations failed: {}",
            failed.len(),
            report.cases.len(),
            failed.join(", ")
        )));
    }
    Ok(())
}

fn cmd_stretch(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let rows = stretch_experiment(&cfg)?;
    let table = format_stretch_table(&rows);
    print!("{table}");
    for note in stretch_observations(&rows) {
        println!("{note}");
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("stretch.txt"), table)?;
    Ok(())
}

fn cmd_ablate(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let rows = ablation_experiment(&cfg)?;
    let table = format_ablation_table(&rows);
    print!("{table}");
    for note in ablation_observations(&rows) {
        println!("{note}");
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("ablation.txt"), table)?;
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Checkpoint(_) | Error::Dimension(_) => 2,
        Error::Numeric(_) | Error::Domain(_) | Error::DegenerateBatch(_) => 3,
        Error::GradCheck(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval {
            config,
            checkpoint,
            oracle,
            dump_dir,
        } => cmd_eval(config, checkpoint, *oracle, dump_dir),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Stretch(args) => cmd_stretch(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::DumpConfig => RunConfig::default()
            .to_toml_string()
            .map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
