use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfdispatch::harness::{
    compare, emit_outputs, eval_days, load_checkpoint, run_training, write_compare, write_run_record, DispatcherKind,
    EvalRow, EvalSummary, ExperimentConfig,
};
use mfdispatch::mfqlinear::{coordination_game, run_convergence_experiment, ConvergenceSettings, FeatureBasis};
use mfdispatch::Result;

#[derive(Parser)]
#[command(name = "mfdispatch", about = "Mean-field order dispatching laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: two-zone, coordinate or paper.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dispatcher: Option<DispatcherKind>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(self.preset.as_deref().unwrap_or("two-zone"))?,
        };
        if let Some(d) = self.dispatcher {
            cfg.dispatcher = d;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a learning dispatcher.
    Train(Common),
    /// Evaluate a dispatcher over the configured seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory for learning dispatchers.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare dispatchers against RAN.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated dispatcher list.
        #[arg(long, default_value = "RAN,RES,REV,IOD,COD")]
        with: String,
    },
    /// Mean-field linear Q convergence experiment on the coordination game.
    Mfq {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50_000)]
        updates: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_eval(e: &EvalSummary) {
    for r in &e.rows {
        println!(
            "{:<6} seed {:>4}  GMV {:>10.2}  ORR {:.4}  ADP {:>8.4}  AAT {:>6.2}",
            e.dispatcher, r.seed, r.summary.gmv, r.summary.orr, r.summary.adp, r.summary.aat
        );
    }
    println!(
        "{:<6} mean       GMV {:>10.2} ± {:.2}  ORR {:.4} ± {:.4}  ADP {:.4} ± {:.4}  AAT {:.2} ± {:.2}",
        e.dispatcher, e.gmv.mean, e.gmv.std, e.orr.mean, e.orr.std, e.adp.mean, e.adp.std, e.aat.mean, e.aat.std
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let out = run_training(&cfg, cfg.seeds[0])?;
            for e in &out.record.episodes {
                println!(
                    "episode {:>3}  T {:.4}  GMV {:>10.2}  ORR {:.4}  ADP {:.4}",
                    e.episode, e.temperature, e.summary.gmv, e.summary.orr, e.summary.adp
                );
            }
            if let Some(msg) = &out.record.diverged {
                eprintln!("training stopped: {msg}");
            }
            if let Some(dir) = &cfg.output_dir {
                write_run_record(&out.record, dir)?;
            }
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let nets = match (&checkpoint, cfg.dispatcher.is_learning()) {
                (Some(dir), true) => Some(load_checkpoint(&cfg, dir)?),
                _ => None,
            };
            let days = eval_days(&cfg, nets.as_ref(), &cfg.seeds)?;
            if let Some(dir) = &cfg.output_dir {
                for d in &days {
                    emit_outputs(d, &dir.join(format!("{}-seed{}", d.dispatcher, d.seed)))?;
                }
            }
            let rows = days
                .iter()
                .map(|d| Ok(EvalRow { seed: d.seed, summary: d.summary()? }))
                .collect::<Result<Vec<_>>>()?;
            print_eval(&EvalSummary::from_rows(cfg.dispatcher, rows));
        }
        Command::Compare { common, with } => {
            let cfg = common.load()?;
            let kinds = with.split(',').map(str::parse).collect::<Result<Vec<DispatcherKind>>>()?;
            let (evals, rows) = compare(&kinds, &cfg, &cfg.seeds, DispatcherKind::Ran)?;
            evals.iter().for_each(print_eval);
            for r in &rows {
                let agg = r.aggregate.map_or("NA".into(), |v| format!("{v:+.2}%"));
                println!("{:<6} {:<4} {agg}", r.dispatcher, r.metric.name());
            }
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir)?;
                write_compare(&rows, &dir.join("compare.csv"))?;
            }
        }
        Command::Mfq { seed, updates, out } => {
            let game = coordination_game();
            let settings = ConvergenceSettings { updates, ..ConvergenceSettings::for_game(&game) };
            let basis = FeatureBasis::one_hot(game.domain());
            let report = run_convergence_experiment(&game, &basis, &settings, seed)?;
            let text = report.to_jsonl()?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
