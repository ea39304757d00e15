//! Multi-seed experiment harness: repeated training runs per
//! (model, dataset), persisted records, mean/max aggregation.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::SeriesDataset;
use crate::error::{Error, Result};
use crate::model::{ArchKind, Model, ModelHyper};
use crate::train::{evaluate, train, Precision, TrainConfig};

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub model: String,
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub params: usize,
    pub epochs: usize,
    pub seconds: f64,
}

/// Mean/max summary over the completed runs of one (dataset, model).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub model: String,
    pub n_runs: usize,
    pub mean_accuracy: f64,
    pub max_accuracy: f64,
    /// Runs that failed (aggregate covers the rest).
    pub failed_runs: usize,
}

/// All results of a `multi_run` call.
pub struct MultiRunOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<(usize, String)>,
    pub aggregate: Aggregate,
}

/// Mean and max accuracy over records.
pub fn aggregate_records(records: &[RunRecord]) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let mean = records.iter().map(|r| r.accuracy).sum::<f64>() / records.len() as f64;
    let max = records
        .iter()
        .map(|r| r.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    (mean, max)
}

fn run_once<F: crate::tensor::Real>(
    arch: ArchKind,
    dataset: &SeriesDataset,
    hyper: ModelHyper,
    cfg: &TrainConfig,
    run: usize,
    seed: u64,
) -> Result<RunRecord> {
    let started = Instant::now();
    let mut model = Model::<F>::build(
        arch,
        dataset.num_classes,
        dataset.train.series_len(),
        hyper,
        seed,
    )?;
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let history = train(&mut model, &dataset.train, &cfg)?;
    let accuracy = evaluate(&mut model, &dataset.test)?;
    Ok(RunRecord {
        dataset: dataset.name.clone(),
        model: arch.name().to_string(),
        run,
        seed,
        accuracy,
        params: model.param_count(),
        epochs: history.epochs_run,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Train `n_runs` independently seeded models (seed = base_seed + run index)
/// and aggregate their test accuracies. Runs execute on `jobs` worker
/// threads; each run is internally single-threaded and owns its RNGs, so
/// records do not depend on `jobs`.
pub fn multi_run(
    arch: ArchKind,
    dataset: &SeriesDataset,
    hyper: ModelHyper,
    cfg: &TrainConfig,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<MultiRunOutcome> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    let jobs = jobs.max(1).min(n_runs);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<RunRecord>)>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let run = next.fetch_add(1, Ordering::SeqCst);
                if run >= n_runs {
                    break;
                }
                let seed = base_seed + run as u64;
                let outcome = match cfg.precision {
                    Precision::Double => run_once::<f64>(arch, dataset, hyper, cfg, run, seed),
                    Precision::Single => run_once::<f32>(arch, dataset, hyper, cfg, run, seed),
                };
                results.lock().unwrap().push((run, outcome));
            });
        }
    });

    let mut indexed = results.into_inner().unwrap();
    indexed.sort_by_key(|(run, _)| *run);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (run, outcome) in indexed {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((run, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::Config(format!(
            "all {n_runs} runs failed; first failure: {}",
            failures[0].1
        )));
    }
    let (mean, max) = aggregate_records(&records);
    let aggregate = Aggregate {
        dataset: dataset.name.clone(),
        model: arch.name().to_string(),
        n_runs: records.len(),
        mean_accuracy: mean,
        max_accuracy: max,
        failed_runs: failures.len(),
    };
    Ok(MultiRunOutcome {
        records,
        failures,
        aggregate,
    })
}

/// Append-only results store rooted at an output directory:
/// `runs.csv` plus one aggregate JSON per (dataset, model).
pub struct ResultsStore {
    root: PathBuf,
}

impl ResultsStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultsStore { root: root.into() }
    }

    pub fn csv_path(&self) -> PathBuf {
        self.root.join("runs.csv")
    }

    pub fn aggregate_path(&self, dataset: &str, model: &str) -> PathBuf {
        self.root.join(dataset).join(format!("{model}.json"))
    }

    /// Append records to `runs.csv`, writing the header on first use.
    pub fn append_records(&self, records: &[RunRecord]) -> Result<()> {
        std::fs::create_dir_all(&self.root)?;
        let path = self.csv_path();
        let fresh = !path.exists();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if fresh {
            w.write_record([
                "dataset", "model", "run", "seed", "accuracy", "params", "epochs", "seconds",
            ])?;
        }
        for r in records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate(&self, agg: &Aggregate) -> Result<()> {
        let path = self.aggregate_path(&agg.dataset, &agg.model);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(&path, serde_json::to_string_pretty(agg)?)?;
        Ok(())
    }

    /// Read every record of `runs.csv`.
    pub fn read_records(&self) -> Result<Vec<RunRecord>> {
        read_records_csv(&self.csv_path())
    }
}

/// Parse a results CSV (the store's format).
pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_toy, SynthKind};

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn aggregate_of_known_accuracies() {
        let rec = |acc: f64| RunRecord {
            dataset: "d".into(),
            model: "m".into(),
            run: 0,
            seed: 0,
            accuracy: acc,
            params: 1,
            epochs: 1,
            seconds: 0.0,
        };
        let records = vec![rec(0.8), rec(0.9), rec(1.0)];
        let (mean, max) = aggregate_records(&records);
        assert!((mean - 0.9).abs() < 1e-12);
        assert_eq!(max, 1.0);

        let single = vec![rec(0.77)];
        let (mean, max) = aggregate_records(&single);
        assert_eq!(mean, 0.77);
        assert_eq!(max, 0.77);
    }

    #[test]
    fn multi_run_replays_identically() {
        let ds = synth_toy(SynthKind::Sine, 3, 16, 5, 0.2)
            .unwrap()
            .normalized();
        let go = || {
            multi_run(
                ArchKind::Fcn,
                &ds,
                ModelHyper::default(),
                &tiny_cfg(2),
                2,
                100,
                2,
            )
            .unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a.records.len(), 2);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.accuracy.to_bits(), rb.accuracy.to_bits());
            assert_eq!(ra.seed, rb.seed);
            assert_eq!(ra.params, rb.params);
        }
        // mean lies within [min, max]
        let accs: Vec<f64> = a.records.iter().map(|r| r.accuracy).collect();
        let lo = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(a.aggregate.mean_accuracy >= lo && a.aggregate.mean_accuracy <= hi);
        assert_eq!(a.aggregate.max_accuracy, hi);
    }

    #[test]
    fn store_appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultsStore::new(dir.path());
        let rec = RunRecord {
            dataset: "toy".into(),
            model: "fcn".into(),
            run: 0,
            seed: 42,
            accuracy: 0.5,
            params: 10,
            epochs: 3,
            seconds: 0.1,
        };
        store.append_records(&[rec.clone()]).unwrap();
        store.append_records(&[rec.clone()]).unwrap();
        let back = store.read_records().unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], rec);

        let agg = Aggregate {
            dataset: "toy".into(),
            model: "fcn".into(),
            n_runs: 2,
            mean_accuracy: 0.5,
            max_accuracy: 0.5,
            failed_runs: 0,
        };
        store.write_aggregate(&agg).unwrap();
        assert!(store.aggregate_path("toy", "fcn").exists());
    }
}
