//! Command-line front end: each pipeline stage is a subcommand operating on
//! files, so every intermediate is inspectable and diffable.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

mod config;
mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use greensentry_core::autoencoder::init;
use greensentry_core::data::{
    align_merge, forward_fill, ingest_csv, read_csv, write_csv, Dataset, SensorId, FEATURE_ORDER,
};
use greensentry_core::detect::{
    calibrate_threshold, timed_detect, write_loss_plot, write_reconstruction_plot,
};
use greensentry_core::error::{Error, Result};
use greensentry_core::inject::{inject, InjectKind, InjectionSpec};
use greensentry_core::model::ModelState;
use greensentry_core::rules::{label, scrub};
use greensentry_core::scale::{fit_minmax, split, transform, FeatureMatrix};
use greensentry_core::simulate::{reference_scenario_with_seed, simulate};
use greensentry_core::train::{reconstruction_losses, reconstructions, train, TrainReport};

use config::{Profile, RunConfig};
use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "greensentry",
    version,
    about = "Greenhouse sensor anomaly detection pipeline"
)]
struct Cli {
    /// Key=value config file merged under command-line flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file and GREENSENTRY_SEED
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts and the run manifest
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Rule set file (one `id,feature,kind,threshold,category` per line)
    #[arg(long, global = true)]
    rules: Option<PathBuf>,

    /// Hyperparameter profile
    #[arg(long, global = true, value_enum, default_value_t = Profile::Tuned)]
    profile: Profile,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV
    Simulate {
        /// Override the number of simulated days
        #[arg(long)]
        days: Option<u32>,
    },
    /// Merge five raw per-sensor CSVs into one minute-aligned dataset
    Ingest {
        #[arg(long)]
        moisture: PathBuf,
        #[arg(long)]
        light: PathBuf,
        #[arg(long)]
        air_quality: PathBuf,
        #[arg(long)]
        temperature: PathBuf,
        #[arg(long)]
        humidity: PathBuf,
    },
    /// Label a dataset CSV with the rule set
    Label {
        #[arg(long)]
        input: PathBuf,
    },
    /// Inject synthetic anomalies into a dataset CSV and relabel it
    Inject {
        #[arg(long)]
        input: PathBuf,
        /// Number of injection events
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Comma-separated subset of spike,stuck,drift
        #[arg(long, value_delimiter = ',', default_values_t = ["spike".to_string(), "stuck".to_string(), "drift".to_string()])]
        kinds: Vec<String>,
        /// Comma-separated feature names; defaults to all five
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Train the autoencoder on a labeled dataset and calibrate the threshold
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Remove labeled-anomalous records before training
        #[arg(long)]
        scrub: bool,
    },
    /// Evaluate a trained model on a labeled dataset
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the full reference scenario end to end
    Reproduce,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Numeric { .. } => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_csv(dataset, BufWriter::new(File::create(path)?))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    read_csv(BufReader::new(File::open(path)?))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut run_config = RunConfig::build(
        cli.profile,
        cli.config.as_deref(),
        cli.rules.as_deref(),
        cli.seed,
    )?;
    // subcommand flags fold into the effective config before it is echoed
    if let Command::Simulate { days: Some(days) } = &cli.command {
        run_config.sim.days = *days;
        run_config.sim.validate()?;
    }
    fs::create_dir_all(&cli.out)?;
    let mut manifest = Manifest::new(command_name(&cli.command), run_config.clone());
    if let Some(path) = &cli.config {
        manifest.record_input(path)?;
    }
    if let Some(path) = &cli.rules {
        manifest.record_input(path)?;
    }

    match &cli.command {
        Command::Simulate { .. } => {
            let dataset = simulate(&run_config.sim)?;
            let path = cli.out.join("dataset.csv");
            write_dataset(&dataset, &path)?;
            manifest.record_artifact(&path);
        }
        Command::Ingest {
            moisture,
            light,
            air_quality,
            temperature,
            humidity,
        } => {
            let sources = [
                (SensorId::Moisture, moisture),
                (SensorId::Light, light),
                (SensorId::AirQuality, air_quality),
                (SensorId::Temperature, temperature),
                (SensorId::Humidity, humidity),
            ];
            let mut filled = Vec::new();
            let mut report = serde_json::Map::new();
            for (sensor, path) in sources {
                manifest.record_input(path)?;
                let (series, warnings) = ingest_csv(BufReader::new(File::open(path)?), sensor)?;
                let result = forward_fill(&series, 1, run_config.max_fill_minutes)?;
                report.insert(
                    sensor.name().to_owned(),
                    serde_json::json!({
                        "rows": series.len(),
                        "duplicates": warnings.duplicates,
                        "out_of_order": warnings.out_of_order,
                        "segment_breaks": result.segment_breaks.len(),
                    }),
                );
                filled.push(result.series);
            }
            let (dataset, merge) = align_merge(&filled)?;
            report.insert("merge_dropped".to_owned(), serde_json::to_value(&merge)?);
            report.insert("records".to_owned(), serde_json::json!(dataset.len()));

            let path = cli.out.join("dataset.csv");
            write_dataset(&dataset, &path)?;
            manifest.record_artifact(&path);
            let report_path = cli.out.join("ingest_report.json");
            write_json(&serde_json::Value::Object(report), &report_path)?;
            manifest.record_artifact(&report_path);
        }
        Command::Label { input } => {
            manifest.record_input(input)?;
            let dataset = read_dataset(input)?;
            let (labeled, report) = label(&dataset, &run_config.rules);
            let path = cli.out.join("labeled.csv");
            write_dataset(&labeled, &path)?;
            manifest.record_artifact(&path);
            let report_path = cli.out.join("label_report.json");
            write_json(&report, &report_path)?;
            manifest.record_artifact(&report_path);
        }
        Command::Inject {
            input,
            count,
            kinds,
            features,
        } => {
            manifest.record_input(input)?;
            let dataset = read_dataset(input)?;
            let kinds = kinds
                .iter()
                .map(|k| match k.as_str() {
                    "spike" => Ok(InjectKind::Spike),
                    "stuck" => Ok(InjectKind::Stuck),
                    "drift" => Ok(InjectKind::Drift),
                    other => Err(Error::InvalidConfig(format!(
                        "unknown injection kind {other:?}"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let target_features = if features.is_empty() {
                FEATURE_ORDER.to_vec()
            } else {
                features
                    .iter()
                    .map(|f| SensorId::from_name(f))
                    .collect::<Result<Vec<_>>>()?
            };
            let spec = InjectionSpec {
                count: *count,
                kinds,
                target_features,
                seed: run_config.seed,
            };
            manifest.record_details(serde_json::to_value(&spec)?);
            let (injected, log) = inject(&dataset, &spec, &run_config.rules)?;
            let (relabeled, _) = label(&injected, &run_config.rules);

            let path = cli.out.join("injected.csv");
            write_dataset(&relabeled, &path)?;
            manifest.record_artifact(&path);
            let log_path = cli.out.join("injections.csv");
            log.write_csv(BufWriter::new(File::create(&log_path)?))?;
            manifest.record_artifact(&log_path);
        }
        Command::Train {
            input,
            scrub: scrub_flag,
        } => {
            manifest.record_input(input)?;
            let dataset = read_dataset(input)?;
            if dataset.records().iter().any(|r| r.label.is_none()) {
                return Err(Error::data(
                    "dataset not labeled; run the label subcommand first",
                ));
            }
            let anomalous = dataset
                .records()
                .iter()
                .filter(|r| r.label.as_ref().is_some_and(|l| l.is_anomalous()))
                .count();
            let dataset = if *scrub_flag {
                scrub(&dataset)?
            } else if anomalous > 0 {
                return Err(Error::data(format!(
                    "training data contains {anomalous} anomalous records; pass --scrub to remove them"
                )));
            } else {
                dataset
            };
            let (state, report) = train_pipeline(&run_config, &dataset)?;
            let model_path = cli.out.join("model.json");
            state.save(&model_path)?;
            manifest.record_artifact(&model_path);
            let report_path = cli.out.join("train_report.json");
            write_json(&report, &report_path)?;
            manifest.record_artifact(&report_path);
        }
        Command::Detect { model, input } => {
            manifest.record_input(model)?;
            manifest.record_input(input)?;
            let state = ModelState::load(model)?;
            let dataset = read_dataset(input)?;
            detect_pipeline(&state, &dataset, &cli.out, &mut manifest)?;
        }
        Command::Reproduce => {
            let scenario = reference_scenario_with_seed(run_config.seed)?;

            let train_path = cli.out.join("train.csv");
            write_dataset(&scenario.train, &train_path)?;
            manifest.record_artifact(&train_path);
            let test_path = cli.out.join("test.csv");
            write_dataset(&scenario.test, &test_path)?;
            manifest.record_artifact(&test_path);
            let log_path = cli.out.join("injections.csv");
            scenario
                .injections
                .write_csv(BufWriter::new(File::create(&log_path)?))?;
            manifest.record_artifact(&log_path);

            let (state, report) = train_pipeline(&run_config, &scenario.train)?;
            let model_path = cli.out.join("model.json");
            state.save(&model_path)?;
            manifest.record_artifact(&model_path);
            let report_path = cli.out.join("train_report.json");
            write_json(&report, &report_path)?;
            manifest.record_artifact(&report_path);

            detect_pipeline(&state, &scenario.test, &cli.out, &mut manifest)?;
        }
    }

    manifest.write(&cli.out)?;
    Ok(())
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Simulate { .. } => "simulate",
        Command::Ingest { .. } => "ingest",
        Command::Label { .. } => "label",
        Command::Inject { .. } => "inject",
        Command::Train { .. } => "train",
        Command::Detect { .. } => "detect",
        Command::Reproduce => "reproduce",
    }
}

/// Split, fit the scaler on the training side only, train, and calibrate the
/// loss threshold from validation reconstruction losses.
fn train_pipeline(config: &RunConfig, dataset: &Dataset) -> Result<(ModelState, TrainReport)> {
    let matrix = FeatureMatrix::<f64>::from_dataset(dataset);
    let (train_m, val_m) = split(&matrix, config.split_ratio, config.split_mode)?;
    let scaler = fit_minmax(&train_m)?;
    let train_n = transform(&scaler, &train_m);
    let val_n = transform(&scaler, &val_m);
    let params = init::<f64>(&config.model, config.seed)?;
    let (trained, report) = train(&params, &train_n, &val_n, &config.train)?;
    let val_losses = reconstruction_losses(&trained, &val_n)?;
    let threshold = calibrate_threshold(&val_losses, config.threshold_k)?;
    let state = ModelState::new(
        config.model.clone(),
        &trained,
        scaler,
        Some(threshold),
        config.train,
    )?;
    Ok((state, report))
}

/// Evaluate and export the report plus both plot-data files.
fn detect_pipeline(
    state: &ModelState,
    dataset: &Dataset,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let evaluation = timed_detect(state, dataset)?;

    let eval_path = out.join("evaluation.json");
    write_json(&evaluation, &eval_path)?;
    manifest.record_artifact(&eval_path);

    let timestamps: Vec<_> = dataset.timestamps().collect();
    let labels: Vec<_> = dataset
        .records()
        .iter()
        .map(|r| r.label.clone().expect("timed_detect requires labels"))
        .collect();
    let loss_path = out.join("loss_plot.csv");
    write_loss_plot(
        BufWriter::new(File::create(&loss_path)?),
        &timestamps,
        &evaluation.losses,
        &labels,
        &evaluation.threshold,
    )?;
    manifest.record_artifact(&loss_path);

    let originals = FeatureMatrix::<f64>::from_dataset(dataset);
    let params = state.parameters()?;
    let normalized = transform(&state.scaler, &originals);
    let recon_normalized = reconstructions(&params, &normalized)?;
    let recon = greensentry_core::scale::inverse_transform(&state.scaler, &recon_normalized);
    let names: Vec<&str> = FEATURE_ORDER.iter().map(|s| s.name()).collect();
    let recon_path = out.join("reconstruction_plot.csv");
    write_reconstruction_plot(
        BufWriter::new(File::create(&recon_path)?),
        &originals,
        &recon,
        &names,
    )?;
    manifest.record_artifact(&recon_path);
    Ok(())
}
