//! `hetddi` command-line tool.
//!
//! Configuration is layered: defaults, then `--config` (flat TOML), then
//! `HETDDI_*` environment variables, then `--set key=value`, then the
//! dedicated flags of each subcommand.

mod http;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use hetddi::fusion::Metrics;
use hetddi::pipeline::{
    canonicalize_pairs, class_counts, comparison_table, env_layer, fetch_pubchem, ingest, load_config, load_pairs,
    method_label, pairs_csv, parse_pairs_csv, run_experiment, split, synthetic_dataset, toml_layer, write_report,
    ExperimentConfig, FetchOptions, IngestOptions, PipelineError, Report, SynthConfig, TrainedModel, PUBCHEM_BASE,
};

type Layer = Vec<(String, String)>;

#[derive(Debug, Parser)]
#[command(name = "hetddi", version, about = "Drug-drug interaction prediction from images, SMILES and relational facts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Flat TOML file of configuration keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory holding images/, smiles.tsv, facts.pl and pairs.csv.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Where run outputs are written.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a dataset; optionally write it back normalised.
    Ingest {
        /// Write the validated dataset (PGM images) to this directory.
        #[arg(long, value_name = "DIR")]
        write: Option<PathBuf>,
    },
    /// Download one compound's structure image and SMILES from PubChem.
    Fetch {
        #[arg(long)]
        cid: u64,
        /// Fail immediately instead of touching the network.
        #[arg(long)]
        offline: bool,
        #[arg(long, default_value_t = 250, value_name = "MS")]
        delay_ms: u64,
        #[arg(long, default_value = PUBCHEM_BASE)]
        base_url: String,
    },
    /// Stratified train/test split of the pairs file.
    Split {
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Fit the embedders and the classifier, then score the test split.
    Train {
        /// Comma list from img, smiles, rel.
        #[arg(long)]
        modalities: Option<String>,
        /// Pair aggregation: sub or avg.
        #[arg(long)]
        agg: Option<String>,
        /// Put a spatial transformer in front of the image tower.
        #[arg(long)]
        stn: bool,
    },
    /// Re-score a saved run's model on its test split or another pairs file.
    Evaluate {
        /// Output directory of an earlier `train`.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        /// Pairs CSV to score instead of the run's test split.
        #[arg(long, value_name = "FILE")]
        pairs: Option<PathBuf>,
    },
    /// Run one of the image-only baselines.
    Baseline {
        /// ssim, ae or siamese.
        #[arg(long)]
        method: String,
        #[arg(long)]
        stn: bool,
        /// Distance threshold of the Siamese baseline.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Collect the reports of several runs into one table.
    Report {
        #[arg(required = true, value_name = "RUN_DIR")]
        runs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Write a synthetic dataset with a known interaction rule.
    Synth {
        #[arg(long, value_name = "DIR")]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        drugs: usize,
        #[arg(long, default_value_t = 3000)]
        pairs: usize,
        #[arg(long, default_value_t = 64)]
        image_size: usize,
    },
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        let mut msg = e.to_string();
        let mut src = e.source();
        while let Some(s) = src {
            let s_msg = s.to_string();
            if !msg.contains(&s_msg) {
                msg.push_str(&format!(": {s_msg}"));
            }
            src = s.source();
        }
        CliError(msg)
    }
}

fn fail(msg: impl Into<String>) -> CliError {
    CliError(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { write } => {
            let cfg = config(g, &[], false)?;
            let (ds, report) = ingest(&cfg.data, IngestOptions { resize: cfg.resize })?;
            let (pos, neg) = ds.class_counts();
            println!("drugs: {} images, {} SMILES; {} facts", ds.images.len(), ds.smiles.len(), ds.kb.len());
            println!("pairs: {pos} positive / {neg} negative");
            print!("{}", report.to_text());
            if let Some(dir) = write {
                ds.save(&dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Fetch { cid, offline, delay_ms, base_url } => {
            let dir = g.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"));
            let opts = FetchOptions { base_url, offline, delay: Duration::from_millis(delay_ms) };
            let got = fetch_pubchem(cid, &dir, &http::UreqTransport::new(), &opts).map_err(|e| {
                let hint = if e.is_retryable() { " (retryable)" } else { "" };
                fail(format!("{e}{hint}"))
            })?;
            println!("{}\t{}\t{}", got.drug_id, got.image_path.display(), got.smiles);
        }
        Command::Split { ratio } => {
            let cfg = config(g, &[opt("split_ratio", ratio)], true)?;
            let text = fs::read_to_string(&cfg.data.pairs_file).map_err(|e| fail(format!("{}: {e}", cfg.data.pairs_file.display())))?;
            let pairs = canonicalize_pairs(parse_pairs_csv(&text)?)?;
            let sp = split(&pairs, cfg.split_ratio, cfg.seed)?;
            write(&cfg.out_dir.join("split/train.csv"), &pairs_csv(&sp.train))?;
            write(&cfg.out_dir.join("split/test.csv"), &pairs_csv(&sp.test))?;
            let ((trp, trn), (tep, ten)) = (class_counts(&sp.train), class_counts(&sp.test));
            println!("train: {trp} positive / {trn} negative");
            println!("test:  {tep} positive / {ten} negative");
        }
        Command::Train { modalities, agg, stn } => {
            let cfg = config(
                g,
                &[
                    Some(("method".into(), "fused".into())),
                    modalities.map(|m| ("modalities".into(), m)),
                    agg.map(|a| ("agg".into(), a)),
                    stn.then(|| ("use_stn".into(), "true".into())),
                ],
                true,
            )?;
            execute(&cfg)?;
        }
        Command::Baseline { method, stn, threshold } => {
            let cfg = config(
                g,
                &[
                    Some(("method".into(), method)),
                    Some(("modalities".into(), "img".into())),
                    stn.then(|| ("use_stn".into(), "true".into())),
                    opt("distance_threshold", threshold),
                ],
                true,
            )?;
            execute(&cfg)?;
        }
        Command::Evaluate { run, pairs } => evaluate(g, &run, pairs.as_deref())?,
        Command::Report { runs, output } => {
            let reports = runs
                .iter()
                .map(|dir| {
                    let path = dir.join("report.kv");
                    let text = fs::read_to_string(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                    Report::from_kv(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let table = comparison_table(&reports);
            print!("{table}");
            if let Some(path) = output {
                write(&path, &table)?;
            }
        }
        Command::Synth { output, drugs, pairs, image_size } => {
            let seed = config(g, &[], false)?.seed;
            let (ds, _) = synthetic_dataset(&SynthConfig { n_drugs: drugs, n_pairs: pairs, image_size, seed, ..SynthConfig::default() })?;
            ds.save(&output)?;
            let (pos, neg) = ds.class_counts();
            println!("wrote {} drugs, {pos} positive / {neg} negative pairs to {}", ds.images.len(), output.display());
        }
    }
    Ok(())
}

fn opt<T: ToString>(key: &str, v: Option<T>) -> Option<(String, String)> {
    v.map(|v| (key.to_string(), v.to_string()))
}

/// Builds the layered configuration. Commands that never use the seed get a
/// default of 0 so that only experiment commands insist on one.
fn config(g: &Global, flags: &[Option<(String, String)>], needs_seed: bool) -> Result<ExperimentConfig, CliError> {
    let mut layers: Vec<Layer> = Vec::new();
    if !needs_seed {
        layers.push(vec![("seed".into(), "0".into())]);
    }
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        layers.push(toml_layer(&text).map_err(|e| fail(format!("{}: {e}", path.display())))?);
    }
    layers.push(env_layer(std::env::vars()));
    let mut cli: Layer = Vec::new();
    for kv in &g.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| fail(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cli.push((k.trim().to_string(), v.to_string()));
    }
    cli.extend(opt("seed", g.seed));
    cli.extend(g.data_dir.as_ref().map(|d| ("data_dir".to_string(), d.display().to_string())));
    cli.extend(g.out_dir.as_ref().map(|d| ("out_dir".to_string(), d.display().to_string())));
    cli.extend(flags.iter().flatten().cloned());
    layers.push(cli);
    ExperimentConfig::from_layers(&layers).map_err(|e| match e {
        PipelineError::Config(m) if m.contains("seed") => fail(format!("config: {m} (use --seed, HETDDI_SEED or `seed` in --config)")),
        other => other.into(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| fail(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn execute(cfg: &ExperimentConfig) -> Result<(), CliError> {
    log::info!("running `{}` with config {}", method_label(cfg), cfg.hash());
    let exp = run_experiment(cfg)?;
    exp.save(cfg, &cfg.out_dir)?;
    print!("{}", exp.report.to_table());
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn evaluate(g: &Global, run: &Path, pairs: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = load_config(&run.join("config.toml"))?;
    if let Some(d) = &g.data_dir {
        cfg.set("data_dir", &d.display().to_string())?;
    }
    let model_dir = run.join("model");
    if !model_dir.is_dir() {
        return Err(fail(format!("{} has no trained model; baseline runs are scored when they run", run.display())));
    }
    let model = TrainedModel::load(&model_dir, &cfg)?;
    let (ds, _) = ingest(&cfg.data, IngestOptions { resize: cfg.resize })?;
    let (pairs_path, label) = match pairs {
        Some(p) => (p.to_path_buf(), p.display().to_string()),
        None => (run.join("split/test.csv"), "the run's test split".to_string()),
    };
    let test = match pairs {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            canonicalize_pairs(parse_pairs_csv(&text)?)?
        }
        None => load_pairs(&pairs_path)?,
    };
    let train = load_pairs(&run.join("split/train.csv"))?;
    let preds = model.predict(&ds, &test, cfg.agg, cfg.threshold)?;
    let predicted: Vec<bool> = preds.iter().map(|p| p.interacts).collect();
    let actual: Vec<bool> = test.iter().map(|p| p.label).collect();
    let report = Report {
        method: method_label(&cfg),
        metrics: Metrics::from_predictions(&predicted, &actual)?,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        train_counts: class_counts(&train),
        test_counts: class_counts(&test),
        feature_dim: None,
        num_rules: None,
        notes: vec![format!("evaluated on {label}")],
        generated_unix: None,
    };
    let out = g.out_dir.clone().unwrap_or_else(|| run.join("evaluate"));
    write_report(&report, &out)?;
    print!("{}", report.to_table());
    println!("wrote {}", out.display());
    Ok(())
}
