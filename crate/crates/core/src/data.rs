//! Dataset loading, preprocessing and synthesis.
//!
//! Datasets follow the UCR archive layout: one series per line, first field
//! the class label, remaining fields the values, tab-separated. Lines may
//! have different lengths; NaN tokens and absent trailing values are
//! padding. Labels are remapped to contiguous indices in ascending order of
//! the original label.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard-deviation guard for constant series.
pub const Z_EPS: f64 = 1e-8;

/// One split of a dataset, in (N, Q, 1) layout.
#[derive(Debug, Clone)]
pub struct SeriesSplit {
    /// Series values; padding and missing positions hold 0.
    pub x: Tensor<f64>,
    /// Class indices in 0..num_classes.
    pub labels: Vec<usize>,
    /// Original length of each series (trailing padding removed).
    pub lengths: Vec<usize>,
    /// N*Q flags, true where a real value sits.
    valid: Vec<bool>,
}

impl SeriesSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn series_len(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    fn from_rows(rows: Vec<(usize, Vec<f64>)>, q: usize) -> SeriesSplit {
        let n = rows.len();
        let mut data = vec![0.0; n * q];
        let mut valid = vec![false; n * q];
        let mut labels = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        for (i, (label, values)) in rows.into_iter().enumerate() {
            let mut len = values.len();
            while len > 0 && values[len - 1].is_nan() {
                len -= 1;
            }
            for (t, &v) in values[..len].iter().enumerate() {
                if v.is_nan() {
                    continue; // interior missing value: padding
                }
                data[i * q + t] = v;
                valid[i * q + t] = true;
            }
            labels.push(label);
            lengths.push(len);
        }
        SeriesSplit {
            x: Tensor::from_vec(vec![n, q, 1], data).unwrap(),
            labels,
            lengths,
            valid,
        }
    }

    /// Per-series z-normalization over valid positions; padding stays 0.
    fn normalized(&self) -> SeriesSplit {
        let q = self.series_len();
        let mut data = self.x.data().to_vec();
        for i in 0..self.len() {
            let row = &mut data[i * q..(i + 1) * q];
            z_normalize_series(row, &self.valid[i * q..(i + 1) * q]);
        }
        SeriesSplit {
            x: Tensor::from_vec(self.x.shape().to_vec(), data).unwrap(),
            labels: self.labels.clone(),
            lengths: self.lengths.clone(),
            valid: self.valid.clone(),
        }
    }
}

/// Labeled univariate time series dataset: train and test splits sharing a
/// label map and a common padded length.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    pub name: String,
    pub train: SeriesSplit,
    pub test: SeriesSplit,
    /// Index -> original label value.
    pub label_map: Vec<f64>,
    pub num_classes: usize,
}

impl SeriesDataset {
    /// Copy with every series z-normalized in place (idempotent).
    pub fn normalized(&self) -> SeriesDataset {
        SeriesDataset {
            name: self.name.clone(),
            train: self.train.normalized(),
            test: self.test.normalized(),
            label_map: self.label_map.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// Standardize `series` to mean 0, population std 1 over positions where
/// `valid` is true; everything else becomes 0. Constant series map to
/// all-zeros via the `Z_EPS` guard.
pub fn z_normalize_series(series: &mut [f64], valid: &[bool]) {
    let vals: Vec<f64> = series
        .iter()
        .zip(valid)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    if vals.is_empty() {
        series.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for (v, &m) in series.iter_mut().zip(valid) {
        if !m {
            *v = 0.0;
        } else if std < Z_EPS {
            *v = 0.0;
        } else {
            *v = (*v - mean) / std;
        }
    }
}

fn parse_tsv_file(path: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let label_tok = fields.next().unwrap_or("");
        let label: f64 = label_tok.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail: format!("label '{label_tok}' is not numeric"),
        })?;
        if label.is_nan() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: "label column is NaN".into(),
            });
        }
        let mut values = Vec::new();
        for tok in fields {
            let tok = tok.trim();
            if tok.is_empty() {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: format!("value '{tok}' is not numeric"),
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: "line has a label but no values".into(),
            });
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            detail: "empty dataset file".into(),
        });
    }
    Ok(rows)
}

/// Load a UCR-format dataset from its train/test TSV files.
pub fn load_ucr_tsv(
    name: &str,
    path_train: &Path,
    path_test: &Path,
) -> Result<SeriesDataset> {
    let raw_train = parse_tsv_file(path_train)?;
    let raw_test = parse_tsv_file(path_test)?;

    let mut label_map: Vec<f64> = raw_train
        .iter()
        .chain(&raw_test)
        .map(|(l, _)| *l)
        .collect();
    label_map.sort_by(|a, b| a.partial_cmp(b).unwrap());
    label_map.dedup();

    let index_of = |label: f64| -> usize {
        label_map
            .iter()
            .position(|&l| l == label)
            .expect("label collected above")
    };
    for (idx, _) in label_map.iter().enumerate() {
        if !raw_train.iter().any(|(l, _)| index_of(*l) == idx) {
            return Err(Error::Config(format!(
                "class {} (label {}) never appears in the training split",
                idx, label_map[idx]
            )));
        }
    }

    let trimmed_len = |values: &[f64]| {
        let mut len = values.len();
        while len > 0 && values[len - 1].is_nan() {
            len -= 1;
        }
        len
    };
    let q = raw_train
        .iter()
        .chain(&raw_test)
        .map(|(_, v)| trimmed_len(v))
        .max()
        .unwrap_or(0);
    if q == 0 {
        return Err(Error::Parse {
            path: path_train.to_path_buf(),
            line: 0,
            detail: "all series are empty".into(),
        });
    }

    let to_rows = |raw: Vec<(f64, Vec<f64>)>| -> Vec<(usize, Vec<f64>)> {
        raw.into_iter()
            .map(|(l, v)| (index_of(l), v))
            .collect()
    };
    let num_classes = label_map.len();
    Ok(SeriesDataset {
        name: name.to_string(),
        train: SeriesSplit::from_rows(to_rows(raw_train), q),
        test: SeriesSplit::from_rows(to_rows(raw_test), q),
        label_map,
        num_classes,
    })
}

/// Write a dataset back out in UCR TSV layout; inverse of [`load_ucr_tsv`].
pub fn write_ucr_tsv(ds: &SeriesDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let train_path = dir.join(format!("{}_TRAIN.tsv", ds.name));
    let test_path = dir.join(format!("{}_TEST.tsv", ds.name));
    write_split(ds, &ds.train, &train_path)?;
    write_split(ds, &ds.test, &test_path)?;
    Ok((train_path, test_path))
}

fn write_split(ds: &SeriesDataset, split: &SeriesSplit, path: &Path) -> Result<()> {
    let q = split.series_len();
    let mut out = String::new();
    for i in 0..split.len() {
        write!(out, "{}", ds.label_map[split.labels[i]]).unwrap();
        for t in 0..split.lengths[i] {
            if split.valid[i * q + t] {
                write!(out, "\t{}", split.x.data()[i * q + t]).unwrap();
            } else {
                out.push_str("\tNaN");
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Waveform family of the synthetic three-class datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Sine,
    Square,
    NoiseTrend,
}

impl SynthKind {
    pub fn parse(s: &str) -> Result<SynthKind> {
        match s {
            "sine" => Ok(SynthKind::Sine),
            "square" => Ok(SynthKind::Square),
            "noise-trend" => Ok(SynthKind::NoiseTrend),
            other => Err(Error::Config(format!(
                "unknown synthetic kind '{other}', expected sine|square|noise-trend"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::Sine => "sine",
            SynthKind::Square => "square",
            SynthKind::NoiseTrend => "noise-trend",
        }
    }
}

/// Deterministic three-class toy dataset: `n_per_class` train and test
/// samples per class, length `q`, additive Gaussian noise of the given
/// standard deviation.
pub fn synth_toy(
    kind: SynthKind,
    n_per_class: usize,
    q: usize,
    seed: u64,
    noise: f64,
) -> Result<SeriesDataset> {
    if n_per_class == 0 || q < 2 {
        return Err(Error::Config(format!(
            "synthetic dataset needs n_per_class >= 1 and Q >= 2, got n={n_per_class} Q={q}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");

    let mut make_series = |class: usize| -> Vec<f64> {
        let phase = rng.random_range(0.0..0.2 * std::f64::consts::PI);
        let freq = [2.0, 4.0, 8.0][class];
        (0..q)
            .map(|t| {
                let angle = 2.0 * std::f64::consts::PI * freq * t as f64 / q as f64 + phase;
                let base = match kind {
                    SynthKind::Sine => angle.sin(),
                    SynthKind::Square => {
                        if angle.sin() >= 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    SynthKind::NoiseTrend => {
                        let ramp = 2.0 * t as f64 / (q - 1) as f64 - 1.0;
                        match class {
                            0 => ramp,
                            1 => 0.0,
                            _ => -ramp,
                        }
                    }
                };
                base + noise * gauss.sample(&mut rng)
            })
            .collect()
    };

    let mut build_split = |n: usize| -> SeriesSplit {
        let mut rows = Vec::new();
        for class in 0..3 {
            for _ in 0..n {
                rows.push((class, make_series(class)));
            }
        }
        SeriesSplit::from_rows(rows, q)
    };

    let train = build_split(n_per_class);
    let test = build_split(n_per_class);
    Ok(SeriesDataset {
        name: format!("synth-{}-{}-{}-{}", kind.name(), n_per_class, q, seed),
        train,
        test,
        label_map: vec![0.0, 1.0, 2.0],
        num_classes: 3,
    })
}

/// Where a dataset comes from: a synthetic recipe or named files in the
/// data directory.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synth {
        kind: SynthKind,
        n_per_class: usize,
        q: usize,
        seed: u64,
        noise: f64,
    },
    Named(String),
}

impl DatasetSource {
    /// `synth:<kind>:<n>:<Q>:<seed>[:<noise>]` or a plain dataset name.
    pub fn parse(uri: &str) -> Result<DatasetSource> {
        if let Some(rest) = uri.strip_prefix("synth:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 4 && parts.len() != 5 {
                return Err(Error::Config(format!(
                    "bad synth uri '{uri}', expected synth:<kind>:<n>:<Q>:<seed>[:<noise>]"
                )));
            }
            let kind = SynthKind::parse(parts[0])?;
            let parse_field = |s: &str, what: &str| -> Result<u64> {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad {what} '{s}' in '{uri}'")))
            };
            let n_per_class = parse_field(parts[1], "sample count")? as usize;
            let q = parse_field(parts[2], "length")? as usize;
            let seed = parse_field(parts[3], "seed")?;
            let noise = if parts.len() == 5 {
                parts[4]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad noise '{}' in '{uri}'", parts[4])))?
            } else {
                0.3
            };
            Ok(DatasetSource::Synth {
                kind,
                n_per_class,
                q,
                seed,
                noise,
            })
        } else {
            Ok(DatasetSource::Named(uri.to_string()))
        }
    }

    /// Materialize the dataset. Named sources resolve to
    /// `<data_dir>/<name>/<name>_TRAIN.tsv` and `_TEST.tsv`.
    pub fn load(&self, data_dir: &Path) -> Result<SeriesDataset> {
        match self {
            DatasetSource::Synth {
                kind,
                n_per_class,
                q,
                seed,
                noise,
            } => synth_toy(*kind, *n_per_class, *q, *seed, *noise),
            DatasetSource::Named(name) => {
                let base = data_dir.join(name);
                load_ucr_tsv(
                    name,
                    &base.join(format!("{name}_TRAIN.tsv")),
                    &base.join(format!("{name}_TEST.tsv")),
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn labels_remap_ascending_and_pad_tail() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tmp(
            dir.path(),
            "t_TRAIN.tsv",
            "2\t0.1\t0.2\t0.3\n1\t1.0\t2.0\t3.0\t4.0\t5.0\n",
        );
        let test = write_tmp(dir.path(), "t_TEST.tsv", "1\t0.5\t0.6\n2\t0.7\t0.8\n");
        let ds = load_ucr_tsv("t", &train, &test).unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.label_map, vec![1.0, 2.0]);
        // line "2 ..." gets index 1
        assert_eq!(ds.train.labels, vec![1, 0]);
        // Q = 5, first series padded with 2 trailing zeros
        assert_eq!(ds.train.series_len(), 5);
        assert_eq!(ds.train.lengths, vec![3, 5]);
        let row0 = &ds.train.x.data()[0..5];
        assert_eq!(row0, &[0.1, 0.2, 0.3, 0.0, 0.0]);
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test.len(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_tmp(dir.path(), "bad_TRAIN.tsv", "1\t0.5\nx\t0.2\n");
        let ok = write_tmp(dir.path(), "ok_TEST.tsv", "1\t0.5\n");
        let err = load_ucr_tsv("bad", &bad, &ok).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }

        let empty = write_tmp(dir.path(), "empty_TRAIN.tsv", "");
        assert!(load_ucr_tsv("e", &empty, &ok).is_err());

        let ragged = write_tmp(dir.path(), "ragged_TRAIN.tsv", "1\n");
        assert!(load_ucr_tsv("r", &ragged, &ok).is_err());
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let ds = synth_toy(SynthKind::Sine, 5, 17, 42, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (train_p, test_p) = write_ucr_tsv(&ds, dir.path()).unwrap();
        let back = load_ucr_tsv(&ds.name, &train_p, &test_p).unwrap();
        assert!(ds.train.x.bits_eq(&back.train.x));
        assert!(ds.test.x.bits_eq(&back.test.x));
        assert_eq!(ds.train.labels, back.train.labels);
        assert_eq!(ds.train.lengths, back.train.lengths);
    }

    #[test]
    fn z_normalize_matches_hand_computation() {
        // (x - 2) / sqrt(2/3)
        let mut vals = vec![1.0, 2.0, 3.0];
        z_normalize_series(&mut vals, &[true, true, true]);
        assert!((vals[0] + 1.2247448713915889).abs() < 1e-10);
        assert!(vals[1].abs() < 1e-12);
        assert!((vals[2] - 1.2247448713915889).abs() < 1e-10);
    }

    #[test]
    fn constant_series_normalizes_to_zeros() {
        let mut vals = vec![5.0, 5.0, 5.0];
        z_normalize_series(&mut vals, &[true, true, true]);
        assert_eq!(vals, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalized_output_has_unit_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut vals: Vec<f64> = (0..101).map(|_| rng.random_range(-4.0..9.0)).collect();
        let valid = vec![true; 101];
        z_normalize_series(&mut vals, &valid);
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalization_is_idempotent_and_keeps_padding_zero() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tmp(
            dir.path(),
            "p_TRAIN.tsv",
            "1\t4.0\t8.0\t6.0\n2\t1.0\t2.0\t3.0\t4.0\t9.0\n",
        );
        let test = write_tmp(dir.path(), "p_TEST.tsv", "1\t0.5\t0.6\n2\t0.7\t0.8\n");
        let ds = load_ucr_tsv("p", &train, &test).unwrap();
        let once = ds.normalized();
        let twice = once.normalized();
        assert!(once.train.x.max_abs_diff(&twice.train.x) < 1e-10);
        // padded tail of series 0 stays exactly zero
        assert_eq!(once.train.x.data()[3], 0.0);
        assert_eq!(once.train.x.data()[4], 0.0);
    }

    #[test]
    fn interior_nan_is_padding_for_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tmp(dir.path(), "m_TRAIN.tsv", "1\t2.0\tNaN\t4.0\n2\t1\t2\t3\n");
        let test = write_tmp(dir.path(), "m_TEST.tsv", "1\t0.5\t1.0\t2.0\n2\t1\t2\t3\n");
        let ds = load_ucr_tsv("m", &train, &test).unwrap();
        assert_eq!(ds.train.lengths[0], 3);
        assert_eq!(ds.train.x.data()[1], 0.0);
        let normed = ds.normalized();
        // stats over {2, 4}: mean 3, std 1 -> [-1, _, 1], hole stays 0
        let row = &normed.train.x.data()[0..3];
        assert!((row[0] + 1.0).abs() < 1e-12);
        assert_eq!(row[1], 0.0);
        assert!((row[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synth_is_deterministic_and_balanced() {
        let a = synth_toy(SynthKind::Square, 7, 32, 11, 0.3).unwrap();
        let b = synth_toy(SynthKind::Square, 7, 32, 11, 0.3).unwrap();
        assert!(a.train.x.bits_eq(&b.train.x));
        assert!(a.test.x.bits_eq(&b.test.x));
        for class in 0..3 {
            assert_eq!(a.train.labels.iter().filter(|&&l| l == class).count(), 7);
            assert_eq!(a.test.labels.iter().filter(|&&l| l == class).count(), 7);
        }
        let c = synth_toy(SynthKind::Square, 7, 32, 12, 0.3).unwrap();
        assert!(!a.train.x.bits_eq(&c.train.x));
    }

    #[test]
    fn noiseless_classes_are_one_nn_separable() {
        for kind in [SynthKind::Sine, SynthKind::Square, SynthKind::NoiseTrend] {
            let ds = synth_toy(kind, 10, 64, 5, 0.0).unwrap();
            let q = ds.train.series_len();
            let mut correct = 0;
            for i in 0..ds.test.len() {
                let tx = &ds.test.x.data()[i * q..(i + 1) * q];
                let mut best = (f64::INFINITY, 0usize);
                for j in 0..ds.train.len() {
                    let rx = &ds.train.x.data()[j * q..(j + 1) * q];
                    let d: f64 = tx.iter().zip(rx).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, ds.train.labels[j]);
                    }
                }
                if best.1 == ds.test.labels[i] {
                    correct += 1;
                }
            }
            assert_eq!(correct, ds.test.len(), "1-NN not perfect for {kind:?}");
        }
    }

    #[test]
    fn dataset_uri_parses_both_forms() {
        let s = DatasetSource::parse("synth:sine:100:64:7").unwrap();
        assert_eq!(
            s,
            DatasetSource::Synth {
                kind: SynthKind::Sine,
                n_per_class: 100,
                q: 64,
                seed: 7,
                noise: 0.3
            }
        );
        let s = DatasetSource::parse("synth:noise-trend:10:32:3:0.1").unwrap();
        match s {
            DatasetSource::Synth { noise, .. } => assert!((noise - 0.1).abs() < 1e-12),
            _ => panic!(),
        }
        assert_eq!(
            DatasetSource::parse("GunPoint").unwrap(),
            DatasetSource::Named("GunPoint".into())
        );
        assert!(DatasetSource::parse("synth:sine:100").is_err());
        assert!(DatasetSource::parse("synth:wat:1:2:3").is_err());
    }
}
