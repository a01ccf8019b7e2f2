use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dmimo_adv::bench::{EvalReport, ExperimentSpec, ExportFormat, SweepAxis};
use dmimo_adv::mmf::{solve_mmf, SolverConfig};
use dmimo_adv::nn::{train, Activation, MlpModel, TrainConfig};
use dmimo_adv::radio::{BetaMatrix, SpectralMetrics};
use dmimo_adv::scenario::{gen_dataset_mmf, sample_scenario, Dataset, DatasetOptions, NetworkConfig};
use dmimo_adv::Result;

#[derive(Parser)]
#[command(name = "dmimo-adv", version, about = "D-MIMO power allocation and adversarial evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset labelled by the max-min fair solver.
    GenData {
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.975)]
        train_fraction: f64,
        /// JSON network config; defaults otherwise
        #[arg(long)]
        config: Option<PathBuf>,
        /// overrides the config's master seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// also write the samples as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve max-min fairness for one instance and print it as JSON.
    Solve {
        /// JSON file with `{"num_rus", "num_ues", "beta_db": [...]}`
        #[arg(long, conflicts_with = "index")]
        beta: Option<PathBuf>,
        /// draw scenario `index` from the config's seed instead
        #[arg(long)]
        index: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train an allocation model on a dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// hidden widths, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = [512, 256, 128])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 1)]
        init_seed: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the attack campaign of an experiment spec.
    Attack {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run an experiment spec's campaign over an ε or malicious-fraction sweep.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Summarize a saved report, optionally re-exporting it.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        cdf_csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Epsilon,
    MaliciousFraction,
}

#[derive(serde::Deserialize)]
struct BetaFile {
    num_rus: usize,
    num_ues: usize,
    beta_db: Vec<f64>,
}

fn load_config(path: Option<&PathBuf>) -> Result<NetworkConfig> {
    let config = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => NetworkConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn summarize(report: &EvalReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "fingerprint {}", report.fingerprint_hash())?;
    writeln!(out, "{:<44} {:>10} {:>10} {:>12} {:>12}", "scenario", "median SE", "p5 SE", "median min", "mean EE")?;
    for row in &report.rows {
        writeln!(
            out,
            "{:<44} {:>10.4} {:>10.4} {:>12.4} {:>12.4e}",
            row.label,
            row.median_se(),
            row.p5_se(),
            row.median_min_se(),
            row.mean_ee()
        )?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    let stdout = &mut io::stdout().lock();
    match command {
        Command::GenData {
            samples,
            train_fraction,
            config,
            seed,
            out,
            csv,
        } => {
            let mut config = load_config(config.as_ref())?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            let options = DatasetOptions {
                n_samples: samples,
                train_fraction,
            };
            let dataset = gen_dataset_mmf(&config, &options, &SolverConfig::default())?;
            dataset.save(&out)?;
            if let Some(csv) = csv {
                dataset.write_csv(io::BufWriter::new(fs::File::create(csv)?))?;
            }
            writeln!(stdout, "wrote {} samples ({} train) to {}", dataset.samples.len(), dataset.num_train, out.display())?;
        }
        Command::Solve { beta, index, config } => {
            let config = load_config(config.as_ref())?;
            let beta = match beta {
                Some(p) => {
                    let f: BetaFile = serde_json::from_str(&fs::read_to_string(p)?)?;
                    BetaMatrix::from_db(f.num_rus, f.num_ues, &f.beta_db)?
                }
                None => sample_scenario(&config, config.master_seed, index.unwrap_or(0))?.1,
            };
            let solution = solve_mmf(&beta, config.total_power, config.noise_power, &SolverConfig::default())?;
            let metrics = SpectralMetrics::evaluate(
                &beta,
                &solution.eta,
                config.total_power,
                config.noise_power,
                config.bandwidth,
            )?;
            let out = serde_json::json!({ "solution": solution, "metrics": metrics });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&out)?)?;
        }
        Command::Train {
            data,
            hidden,
            epochs,
            lr,
            init_seed,
            seed,
            out,
        } => {
            let dataset = Dataset::load(&data)?;
            let dim = dataset.config.dim();
            let mut widths = vec![dim];
            widths.extend(hidden);
            widths.push(dim);
            let model = MlpModel::new(
                &widths,
                Activation::Silu,
                Activation::Sigmoid,
                dataset.feature_stats.clone(),
                init_seed,
            )?;
            let cfg = TrainConfig {
                max_epochs: epochs,
                learning_rate: lr,
                seed,
                ..TrainConfig::default()
            };
            let outcome = train(model, &dataset, &cfg)?;
            outcome.model.save(&out)?;
            writeln!(
                stdout,
                "best epoch {} of {}, validation MSE {:.4e}, model {}",
                outcome.best_epoch,
                outcome.history.len(),
                outcome.best_val_loss(),
                outcome.model.fingerprint()
            )?;
        }
        Command::Attack { spec } => {
            let spec: ExperimentSpec = serde_json::from_str(&fs::read_to_string(spec)?)?;
            summarize(&spec.run(None)?, stdout)?;
        }
        Command::Sweep { spec, axis, values } => {
            let spec: ExperimentSpec = serde_json::from_str(&fs::read_to_string(spec)?)?;
            let axis = match axis {
                Axis::Epsilon => SweepAxis::Epsilon,
                Axis::MaliciousFraction => SweepAxis::MaliciousFraction,
            };
            summarize(&spec.run(Some((axis, &values)))?, stdout)?;
        }
        Command::Report {
            input,
            json,
            csv,
            cdf_csv,
        } => {
            let report = EvalReport::load(&input)?;
            if let Some(p) = json {
                report.export(ExportFormat::Json, p)?;
            }
            if let Some(p) = csv {
                report.export(ExportFormat::Csv, p)?;
            }
            if let Some(p) = cdf_csv {
                report.export(ExportFormat::CdfCsv, p)?;
            }
            summarize(&report, stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
