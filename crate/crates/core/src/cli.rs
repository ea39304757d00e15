//! The `oct1d` command line: training runs, model comparison, gradient
//! verification, and the ablation pipeline.
//!
//! Settings come from flags, optionally backed by a plain `key=value`
//! config file (`--config`); flags win. The only environment variable is
//! `OCT1D_DATA_DIR`, the dataset cache root. Exit codes: 0 success, 2
//! configuration error, 3 runtime failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::data::{DatasetSource, SeriesDataset};
use crate::error::{Error, Result};
use crate::model::{ArchKind, Model, ModelHyper};
use crate::runs::{multi_run, ResultsStore};
use crate::stats::{average_ranks, holm_correct, wilcoxon_signed_rank, AccuracyTable, Metric};
use crate::train::{train, Precision, TrainConfig};

#[derive(Parser)]
#[command(name = "oct1d", version, about = "Octave-convolution time series classifiers")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one architecture on one dataset over multiple seeded runs.
    Train(TrainArgs),
    /// Pairwise Wilcoxon comparison of trained models, with a CD diagram.
    Compare(CompareArgs),
    /// Finite-difference verification of every layer family.
    Gradcheck,
    /// Feature-ablation pipeline on a freshly trained model.
    Ablate(AblateArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset name or synth:<kind>:<n>:<Q>:<seed>[:<noise>] recipe.
    #[arg(long)]
    dataset: Option<String>,
    /// One of fcn, octfcn, resnet, octresnet, lstmfcn, lstm-octfcn,
    /// alstmfcn, alstm-octfcn.
    #[arg(long)]
    model: Option<String>,
    /// Independent runs (seed = base seed + run index).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// High/low filter split of the octave layers.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lstm_units: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// desk (200 epochs, f64) or paper (500 epochs, f32).
    #[arg(long)]
    profile: Option<String>,
    /// f32 or f64; overrides the profile.
    #[arg(long)]
    precision: Option<String>,
    /// Worker threads across runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Results directory (default results/).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// key=value file supplying defaults for any of the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// runs.csv produced by `train`.
    #[arg(long)]
    results: PathBuf,
    /// Comma-separated model names to compare.
    #[arg(long)]
    models: String,
    /// mean or max accuracy per (model, dataset).
    #[arg(long, default_value = "mean")]
    metric: String,
    /// Optional CSV of externally reported accuracies (model,dataset,accuracy).
    #[arg(long)]
    external: Option<PathBuf>,
    /// Significance level for the CD diagram cliques.
    #[arg(long, default_value_t = 0.05)]
    alpha_level: f64,
    /// Report directory (default reports/).
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct AblateArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lstm_units: Option<usize>,
    #[arg(long)]
    filters_per_layer: Option<usize>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_epochs: Option<usize>,
    /// Output root (default ablation/).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// `key=value` per line; `#` comments and blank lines ignored.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("--config {}: {e}", path.display()))
            })?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::Config(format!(
                        "config line {} is not key=value: '{line}'",
                        i + 1
                    )));
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("config key '{key}': cannot parse '{raw}'"))
            }),
        }
    }
}

fn pick<T>(flag: Option<T>, file: Result<Option<T>>, default: T) -> Result<T> {
    Ok(flag.or(file?).unwrap_or(default))
}

fn require<T>(flag: Option<T>, file: Result<Option<T>>, name: &str) -> Result<T> {
    flag.or(file?)
        .ok_or_else(|| Error::Config(format!("--{name} is required")))
}

fn resolve_data_dir(flag: Option<PathBuf>, file: Result<Option<PathBuf>>) -> Result<PathBuf> {
    if let Some(dir) = flag.or(file?) {
        return Ok(dir);
    }
    Ok(std::env::var_os("OCT1D_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data")))
}

fn load_dataset(uri: &str, data_dir: &Path) -> Result<SeriesDataset> {
    let source = DatasetSource::parse(uri)?;
    if let DatasetSource::Named(name) = &source {
        let base = data_dir.join(name);
        let train = base.join(format!("{name}_TRAIN.tsv"));
        if !train.exists() {
            return Err(Error::Config(format!(
                "--dataset: file {} does not exist",
                train.display()
            )));
        }
    }
    Ok(source.load(data_dir)?.normalized())
}

struct Profile {
    epochs: usize,
    precision: Precision,
}

fn parse_profile(name: &str) -> Result<Profile> {
    match name {
        "desk" => Ok(Profile {
            epochs: 200,
            precision: Precision::Double,
        }),
        "paper" => Ok(Profile {
            epochs: 500,
            precision: Precision::Single,
        }),
        other => Err(Error::Config(format!(
            "--profile: unknown profile '{other}', expected desk|paper"
        ))),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset_uri: String = require(args.dataset, file.get("dataset"), "dataset")?;
    let model_name: String = require(args.model, file.get("model"), "model")?;
    let arch = ArchKind::parse(&model_name).map_err(|e| Error::Config(format!("--model: {e}")))?;

    let profile_name: String = pick(args.profile, file.get("profile"), "desk".into())?;
    let profile = parse_profile(&profile_name)?;
    let precision = match args.precision.or(file.get::<String>("precision")?) {
        Some(p) => Precision::parse(&p).map_err(|e| Error::Config(format!("--precision: {e}")))?,
        None => profile.precision,
    };
    let base_seed: u64 = pick(args.seed, file.get("seed"), 42)?;
    let cfg = TrainConfig {
        epochs: pick(args.epochs, file.get("epochs"), profile.epochs)?,
        batch_size: pick(args.batch_size, file.get("batch-size"), 16)?,
        learning_rate: pick(args.lr, file.get("lr"), 1e-3)?,
        seed: base_seed,
        precision,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let hyper = ModelHyper {
        alpha: pick(args.alpha, file.get("alpha"), 0.5)?,
        lstm_units: pick(args.lstm_units, file.get("lstm-units"), 8)?,
        dropout: pick(args.dropout, file.get("dropout"), 0.8)?,
    };
    let n_runs: usize = pick(args.runs, file.get("runs"), 20)?;
    let jobs: usize = pick(args.jobs, file.get("jobs"), 1)?;
    let out: PathBuf = pick(args.out, file.get("out"), PathBuf::from("results"))?;
    let data_dir = resolve_data_dir(args.data_dir, file.get("data-dir"))?;

    let dataset = load_dataset(&dataset_uri, &data_dir)?;
    println!(
        "dataset {} ({} train / {} test, Q={}, {} classes)",
        dataset.name,
        dataset.train.len(),
        dataset.test.len(),
        dataset.train.series_len(),
        dataset.num_classes
    );
    let outcome = multi_run(arch, &dataset, hyper, &cfg, n_runs, base_seed, jobs)?;

    let store = ResultsStore::new(&out);
    store.append_records(&outcome.records)?;
    store.write_aggregate(&outcome.aggregate)?;
    for r in &outcome.records {
        println!(
            "run {:>2} seed {:>4}: accuracy {:.4} ({} params, {:.1}s)",
            r.run, r.seed, r.accuracy, r.params, r.seconds
        );
    }
    println!(
        "{} on {}: mean {:.4}, max {:.4} over {} runs -> {}",
        arch.name(),
        dataset.name,
        outcome.aggregate.mean_accuracy,
        outcome.aggregate.max_accuracy,
        outcome.aggregate.n_runs,
        store.csv_path().display()
    );
    if !outcome.failures.is_empty() {
        for (run, msg) in &outcome.failures {
            eprintln!("run {run} failed: {msg}");
        }
        return Err(Error::Runtime(format!(
            "{} of {n_runs} runs failed; partial records kept",
            outcome.failures.len()
        )));
    }
    Ok(())
}

fn read_external_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Config(format!(
                "--external: expected model,dataset,accuracy rows, got {} fields",
                record.len()
            )));
        }
        let acc: f64 = record[2].parse().map_err(|_| {
            Error::Config(format!("--external: bad accuracy '{}'", &record[2]))
        })?;
        rows.push((record[0].to_string(), record[1].to_string(), acc));
    }
    Ok(rows)
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let metric =
        Metric::parse(&args.metric).map_err(|e| Error::Config(format!("--metric: {e}")))?;
    if !args.results.exists() {
        return Err(Error::Config(format!(
            "--results: file {} does not exist",
            args.results.display()
        )));
    }
    let records = crate::runs::read_records_csv(&args.results)?;
    let external = match &args.external {
        Some(p) => read_external_csv(p)?,
        None => Vec::new(),
    };
    let models: Vec<String> = args
        .models
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if models.len() < 2 {
        return Err(Error::Config("--models: need at least two models".into()));
    }
    let table = AccuracyTable::from_records(&records, &external, &models, metric)?;
    println!(
        "accuracy table: {} models x {} datasets ({} metric)",
        table.models.len(),
        table.datasets.len(),
        args.metric
    );

    let mut pairs = Vec::new();
    let mut reports = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let r = wilcoxon_signed_rank(&models[i], &models[j], table.row(i), table.row(j))?;
            pairs.push((i, j));
            reports.push(r);
        }
    }
    let raw_p: Vec<f64> = reports.iter().map(|r| r.p_value).collect();
    let adjusted = holm_correct(&raw_p)?;

    std::fs::create_dir_all(&args.out)?;
    #[derive(serde::Serialize)]
    struct WsrtFile<'a> {
        #[serde(flatten)]
        report: &'a crate::stats::ComparisonReport,
        holm_adjusted_p: f64,
        alpha: f64,
        significant: bool,
    }
    for (r, &adj) in reports.iter().zip(&adjusted) {
        let path = args
            .out
            .join(format!("wsrt_{}_vs_{}.json", r.model_a, r.model_b));
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&WsrtFile {
                report: r,
                holm_adjusted_p: adj,
                alpha: args.alpha_level,
                significant: adj <= args.alpha_level,
            })?,
        )?;
        println!(
            "{} vs {}: W={:.1} p={:.4} holm={:.4}{}",
            r.model_a,
            r.model_b,
            r.w,
            r.p_value,
            adj,
            if adj <= args.alpha_level { " *" } else { "" }
        );
    }

    let ranks = average_ranks(&table);
    for (m, r) in table.models.iter().zip(&ranks) {
        println!("rank {r:.3}  {m}");
    }
    let cd = crate::cd_diagram::cd_diagram_svg(&crate::cd_diagram::CdInput {
        models: table.models.clone(),
        ranks,
        adjusted_p: pairs
            .iter()
            .zip(&adjusted)
            .map(|(&(i, j), &p)| (i, j, p))
            .collect(),
        alpha: args.alpha_level,
    })?;
    let cd_path = args.out.join("cd.svg");
    std::fs::write(&cd_path, cd)?;
    println!("wrote {}", cd_path.display());
    Ok(())
}

fn cmd_gradcheck() -> Result<()> {
    let reports = crate::gradcheck::run_all()?;
    let mut all_ok = true;
    println!("{:<28} {:>7} {:>13} {:>9}", "op", "shapes", "max rel err", "status");
    for r in &reports {
        println!(
            "{:<28} {:>7} {:>13.3e} {:>9}",
            r.op,
            r.shapes_tested,
            r.max_rel_err,
            if r.passed { "pass" } else { "FAIL" }
        );
        all_ok &= r.passed;
    }
    if all_ok {
        println!("all layer families pass at tolerance {:.0e}", crate::gradcheck::FD_TOL);
        Ok(())
    } else {
        Err(Error::Runtime("gradient check failed".into()))
    }
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset_uri: String = require(args.dataset, file.get("dataset"), "dataset")?;
    let model_name: String = require(args.model, file.get("model"), "model")?;
    let arch = ArchKind::parse(&model_name).map_err(|e| Error::Config(format!("--model: {e}")))?;
    let seed: u64 = pick(args.seed, file.get("seed"), 42)?;
    let epochs: usize = pick(args.epochs, file.get("epochs"), 60)?;
    let filters_per_layer: usize = pick(args.filters_per_layer, file.get("filters-per-layer"), 3)?;
    let out_root: PathBuf = pick(args.out, file.get("out"), PathBuf::from("ablation"))?;
    let data_dir = resolve_data_dir(args.data_dir, file.get("data-dir"))?;
    let hyper = ModelHyper {
        alpha: pick(args.alpha, file.get("alpha"), 0.5)?,
        lstm_units: pick(args.lstm_units, file.get("lstm-units"), 8)?,
        dropout: 0.8,
    };
    let svm_cfg = crate::ablation::SvmConfig {
        c: pick(args.svm_c, file.get("svm-c"), 1.0)?,
        epochs: pick(args.svm_epochs, file.get("svm-epochs"), 200)?,
        learning_rate: 1e-2,
        seed,
    };

    let dataset = load_dataset(&dataset_uri, &data_dir)?;
    let mut model = Model::<f64>::build(
        arch,
        dataset.num_classes,
        dataset.train.series_len(),
        hyper,
        seed,
    )?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    println!("training {} on {} for {epochs} epochs...", arch.name(), dataset.name);
    train(&mut model, &dataset.train, &cfg)?;

    let out_dir = out_root.join(&dataset.name).join(arch.name());
    let report = crate::ablation::ablation_outputs(
        &mut model,
        &dataset.name,
        &dataset.train,
        &dataset.test,
        &svm_cfg,
        filters_per_layer,
        seed,
        &out_dir,
    )?;
    println!(
        "linear probe: features {:.4} vs raw series {:.4} (dim {}) -> {}",
        report.feature_accuracy,
        report.raw_accuracy,
        report.feature_dim,
        out_dir.display()
    );
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::MissingCell { .. }
        | Error::PValueRange { .. }
        | Error::LabelRange { .. } => 2,
        _ => 3,
    }
}

/// Entry point used by the binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Gradcheck => cmd_gradcheck(),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_config_merges_under_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "epochs=7\n# comment\nlr = 0.5\n").unwrap();
        let file = FileConfig::load(Some(&path)).unwrap();
        // flag wins
        assert_eq!(pick(Some(3usize), file.get("epochs"), 1).unwrap(), 3);
        // file fills the gap
        assert_eq!(pick(None::<usize>, file.get("epochs"), 1).unwrap(), 7);
        assert_eq!(pick(None::<f64>, file.get("lr"), 0.0).unwrap(), 0.5);
        // default as last resort
        assert_eq!(pick(None::<usize>, file.get("runs"), 20).unwrap(), 20);
    }

    #[test]
    fn malformed_config_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg");
        std::fs::write(&path, "epochs\n").unwrap();
        assert!(FileConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn unknown_model_is_a_config_error_naming_the_field() {
        let err = ArchKind::parse("transformer")
            .map_err(|e| Error::Config(format!("--model: {e}")))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("--model"), "{msg}");
        assert_eq!(exit_code_for(&err), 2);
    }
}
