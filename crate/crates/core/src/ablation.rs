//! Feature ablation: tap the global-average-pooled features of a trained
//! convolutional stack, measure their linear separability with a
//! max-margin probe, and dump per-layer filter activations.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SeriesSplit;
use crate::error::{Error, Result};
use crate::model::{Mode, Model};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};

/// Row-major (N, D) feature matrix with labels.
pub struct FeatureSet {
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    /// Model + layer the features were tapped from.
    pub source: String,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// The raw series of a split as a feature matrix.
    pub fn from_raw_series(split: &SeriesSplit) -> FeatureSet {
        FeatureSet {
            features: split.x.data().to_vec(),
            dim: split.series_len(),
            labels: split.labels.clone(),
            source: "raw-series".to_string(),
        }
    }
}

/// Run the model in inference mode and collect the GAP output of the
/// convolutional branch for every series of the split. Deterministic.
pub fn extract_features<F: Real>(
    model: &mut Model<F>,
    split: &SeriesSplit,
) -> Result<FeatureSet> {
    let n = split.len();
    let q = split.series_len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut features: Vec<f64> = Vec::new();
    let mut dim = 0usize;
    for chunk in (0..n).collect::<Vec<_>>().chunks(64) {
        let mut data = Vec::with_capacity(chunk.len() * q);
        for &i in chunk {
            data.extend(
                split.x.data()[i * q..(i + 1) * q]
                    .iter()
                    .map(|&v| F::from_f64(v)),
            );
        }
        let batch = Tensor::from_vec(vec![chunk.len(), q, 1], data)?;
        let mut tape = Tape::new();
        let xv = tape.leaf(batch);
        let out = model.forward(&mut tape, xv, Mode::Infer, &mut rng)?;
        let feats = tape.value(out.features);
        dim = feats.shape()[1];
        features.extend(feats.data().iter().map(|v| v.as_f64()));
    }
    Ok(FeatureSet {
        features,
        dim,
        labels: split.labels.clone(),
        source: format!("{}:gap", model.arch.name()),
    })
}

/// Linear max-margin probe settings: L2-regularized hinge loss minimized
/// by full-batch subgradient descent with a 1/t learning-rate decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// One-vs-rest linear classifier: weights (K, D) and biases (K).
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub num_classes: usize,
    pub dim: usize,
}

impl LinearSvm {
    /// Decision values for one sample.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|k| {
                let w = &self.weights[k * self.dim..(k + 1) * self.dim];
                w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.biases[k]
            })
            .collect()
    }

    /// Predicted class: argmax decision value, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let d = self.decision(x);
        let mut best = 0;
        for (i, &v) in d.iter().enumerate() {
            if v > d[best] {
                best = i;
            }
        }
        best
    }
}

/// Train the one-vs-rest probe. The objective per class is
/// 0.5/C * |w|^2 + mean_i hinge(y_i, w.x_i + b); averaging the subgradient
/// makes the boundary invariant to duplicating the training set.
pub fn train_linear_svm(train: &FeatureSet, cfg: &SvmConfig) -> Result<LinearSvm> {
    let n = train.len();
    let d = train.dim;
    if n == 0 {
        return Err(Error::Config("empty SVM training set".into()));
    }
    let k = train
        .labels
        .iter()
        .copied()
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let distinct = {
        let mut seen = vec![false; k];
        train.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Config(
            "SVM needs at least two classes in the training set".into(),
        ));
    }
    let lambda = 1.0 / cfg.c;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1e-3..1e-3)).collect();
    let mut biases = vec![0.0; k];

    let mut grad_w = vec![0.0; d];
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate / (1.0 + epoch as f64);
        for class in 0..k {
            let w = &mut weights[class * d..(class + 1) * d];
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for i in 0..n {
                let y = if train.labels[i] == class { 1.0 } else { -1.0 };
                let x = &train.features[i * d..(i + 1) * d];
                let margin = y * (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + biases[class]);
                if margin < 1.0 {
                    for (g, &xv) in grad_w.iter_mut().zip(x) {
                        *g -= y * xv;
                    }
                    grad_b -= y;
                }
            }
            let inv_n = 1.0 / n as f64;
            for (wi, g) in w.iter_mut().zip(&grad_w) {
                *wi -= lr * (lambda * *wi + g * inv_n);
            }
            biases[class] -= lr * grad_b * inv_n;
        }
    }
    Ok(LinearSvm {
        weights,
        biases,
        num_classes: k,
        dim: d,
    })
}

/// Train on one feature set, report accuracy on another.
pub fn linear_svm_accuracy(
    train: &FeatureSet,
    test: &FeatureSet,
    cfg: &SvmConfig,
) -> Result<f64> {
    if train.dim != test.dim {
        return Err(Error::Config(format!(
            "feature width mismatch: train {} vs test {}",
            train.dim, test.dim
        )));
    }
    let svm = train_linear_svm(train, cfg)?;
    let correct = (0..test.len())
        .filter(|&i| svm.predict(test.row(i)) == test.labels[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Activations of randomly selected filters at one tapped layer.
pub struct LayerDump {
    pub layer: String,
    pub filter_indices: Vec<usize>,
    /// One response series per selected filter.
    pub responses: Vec<Vec<f64>>,
    pub length: usize,
}

/// Forward one series (1, Q, 1) in inference mode and dump
/// `filters_per_layer` randomly selected filter responses per tapped
/// layer. Requests beyond a layer's width are clamped (flagged in the
/// returned bool).
pub fn activation_dump<F: Real>(
    model: &mut Model<F>,
    series: &Tensor<f64>,
    filters_per_layer: usize,
    seed: u64,
) -> Result<(Vec<LayerDump>, bool)> {
    if series.shape().len() != 3 || series.shape()[0] != 1 {
        return Err(Error::dim(
            "activation_dump",
            format!("expected one series (1, Q, 1), got {:?}", series.shape()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::from_f64_tensor(series));
    let (_, trace) = model.forward_traced(&mut tape, xv, Mode::Infer, &mut fwd_rng)?;

    let mut clamped = false;
    let mut dumps = Vec::new();
    for (name, var) in trace {
        let value = tape.value(var);
        let (t_n, c_n) = (value.shape()[1], value.shape()[2]);
        let take = if filters_per_layer > c_n {
            clamped = true;
            c_n
        } else {
            filters_per_layer
        };
        let mut filter_indices: Vec<usize> = sample(&mut rng, c_n, take).into_vec();
        filter_indices.sort_unstable();
        let responses = filter_indices
            .iter()
            .map(|&f| {
                (0..t_n)
                    .map(|t| value.data()[t * c_n + f].as_f64())
                    .collect()
            })
            .collect();
        dumps.push(LayerDump {
            layer: name,
            filter_indices,
            responses,
            length: t_n,
        });
    }
    Ok((dumps, clamped))
}

/// `layer,filter,position,value` rows for every dumped response.
pub fn dumps_to_csv(dumps: &[LayerDump]) -> String {
    let mut out = String::from("layer,filter,position,value\n");
    for d in dumps {
        for (fi, response) in d.filter_indices.iter().zip(&d.responses) {
            for (pos, v) in response.iter().enumerate() {
                writeln!(out, "{},{},{},{}", d.layer, fi, pos, v).unwrap();
            }
        }
    }
    out
}

/// Line plot of the input series overlaid with the selected filter
/// responses of one layer.
pub fn layer_svg(input: &[f64], dump: &LayerDump) -> String {
    let width = 640.0;
    let height = 240.0;
    let margin = 30.0;

    let mut all: Vec<f64> = input.to_vec();
    for r in &dump.responses {
        all.extend_from_slice(r);
    }
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);

    let polyline = |vals: &[f64], color: &str, width_px: f64| -> String {
        let n = vals.len().max(2);
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = margin + i as f64 / (n - 1) as f64 * (width - 2.0 * margin);
                let y = height - margin - (v - lo) / span * (height - 2.0 * margin);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width_px}\"/>\n",
            pts.join(" ")
        )
    };

    let palette = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#8c564b", "#e377c2"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    );
    write!(
        svg,
        "  <text x=\"{margin}\" y=\"18\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
        dump.layer
    )
    .unwrap();
    svg.push_str(&polyline(input, "#555555", 1.0));
    for (i, r) in dump.responses.iter().enumerate() {
        svg.push_str(&polyline(r, palette[i % palette.len()], 1.5));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Summary persisted as `svm_report.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub dataset: String,
    pub model: String,
    pub feature_dim: usize,
    pub svm: SvmConfig,
    pub feature_accuracy: f64,
    pub raw_accuracy: f64,
    pub filters_per_layer: usize,
    pub clamped: bool,
}

/// Full ablation pipeline over a trained model: feature CSVs, the linear
/// probe on features vs raw series, and activation dumps of the first
/// test series. Writes under `out_dir`.
pub fn ablation_outputs<F: Real>(
    model: &mut Model<F>,
    dataset_name: &str,
    train: &SeriesSplit,
    test: &SeriesSplit,
    svm_cfg: &SvmConfig,
    filters_per_layer: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<AblationReport> {
    std::fs::create_dir_all(out_dir)?;
    let train_feats = extract_features(model, train)?;
    let test_feats = extract_features(model, test)?;
    std::fs::write(
        out_dir.join("features_train.csv"),
        features_to_csv(&train_feats),
    )?;
    std::fs::write(
        out_dir.join("features_test.csv"),
        features_to_csv(&test_feats),
    )?;

    let feature_accuracy = linear_svm_accuracy(&train_feats, &test_feats, svm_cfg)?;
    let raw_accuracy = linear_svm_accuracy(
        &FeatureSet::from_raw_series(train),
        &FeatureSet::from_raw_series(test),
        svm_cfg,
    )?;

    let q = test.series_len();
    let series = Tensor::from_vec(vec![1, q, 1], test.x.data()[..q].to_vec())?;
    let (dumps, clamped) = activation_dump(model, &series, filters_per_layer, seed)?;
    std::fs::write(out_dir.join("activations.csv"), dumps_to_csv(&dumps))?;
    let input: Vec<f64> = series.data().to_vec();
    for (k, dump) in dumps.iter().enumerate() {
        std::fs::write(
            out_dir.join(format!("layer{}.svg", k + 1)),
            layer_svg(&input, dump),
        )?;
    }

    let report = AblationReport {
        dataset: dataset_name.to_string(),
        model: model.arch.name().to_string(),
        feature_dim: train_feats.dim,
        svm: svm_cfg.clone(),
        feature_accuracy,
        raw_accuracy,
        filters_per_layer,
        clamped,
    };
    std::fs::write(
        out_dir.join("svm_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

fn features_to_csv(fs: &FeatureSet) -> String {
    let mut out = String::from("label");
    for i in 0..fs.dim {
        write!(out, ",f{i}").unwrap();
    }
    out.push('\n');
    for i in 0..fs.len() {
        write!(out, "{}", fs.labels[i]).unwrap();
        for v in fs.row(i) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
