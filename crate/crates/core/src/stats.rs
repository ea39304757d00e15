//! Pairwise model comparison: Wilcoxon signed-rank tests over per-dataset
//! accuracies, Holm step-down correction, and average ranks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runs::RunRecord;

/// Which paired sample the test favors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AFavored,
    BFavored,
    Tied,
}

/// How the p-value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PMethod {
    /// Exact distribution of the signed-rank sum (n_used <= 25).
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

/// Result of one two-sided Wilcoxon signed-rank test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model_a: String,
    pub model_b: String,
    pub n_total: usize,
    /// Pairs remaining after zero differences are dropped.
    pub n_used: usize,
    pub zero_diffs: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Test statistic W = min(W+, W-).
    pub w: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub method: PMethod,
    /// True when every difference was zero (p fixed at 1).
    pub degenerate: bool,
}

/// Average ranks of |d| with ties sharing the mean rank, plus tie-group
/// sizes for the variance correction. Returned ranks are doubled so they
/// stay integral (a tie between ranks 2 and 3 yields 2.5, doubled 5).
fn doubled_ranks(abs_diffs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let n = abs_diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| abs_diffs[i].partial_cmp(&abs_diffs[j]).unwrap());
    let mut ranks2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share ranks i+1..=j+1; doubled mean = i+j+2
        let doubled = (i + j + 2) as u64;
        for &idx in &order[i..=j] {
            ranks2[idx] = doubled;
        }
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    (ranks2, tie_sizes)
}

/// Exact number of sign assignments whose doubled rank sum is <= `limit`.
///
/// Dynamic program over the doubled ranks; an independent brute-force
/// enumeration over all 2^n assignments must agree with this count exactly.
fn count_at_most(ranks2: &[u64], limit: u64) -> u64 {
    let total: u64 = ranks2.iter().sum();
    let cap = total.min(limit) as usize;
    // counts[s] = assignments reaching doubled sum s
    let mut counts = vec![0u64; cap + 1];
    counts[0] = 1;
    let mut overflow = 0u64; // assignments pushed past the cap
    for &r in ranks2 {
        let r = r as usize;
        let mut next = vec![0u64; cap + 1];
        let mut next_overflow = overflow * 2;
        for (s, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            next[s] += c;
            if s + r <= cap {
                next[s + r] += c;
            } else {
                next_overflow += c;
            }
        }
        counts = next;
        overflow = next_overflow;
    }
    counts.iter().sum()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped (their count is reported); tied absolute
/// differences share average ranks. The p-value is exact for up to 25
/// effective pairs and a tie- and continuity-corrected normal
/// approximation beyond that.
pub fn wilcoxon_signed_rank(
    model_a: &str,
    model_b: &str,
    a: &[f64],
    b: &[f64],
) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Config("wilcoxon needs at least one pair".into()));
    }
    let n_total = a.len();
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let zero_diffs = n_total - diffs.len();
    let n = diffs.len();
    if n == 0 {
        return Ok(ComparisonReport {
            model_a: model_a.into(),
            model_b: model_b.into(),
            n_total,
            n_used: 0,
            zero_diffs,
            w_plus: 0.0,
            w_minus: 0.0,
            w: 0.0,
            p_value: 1.0,
            direction: Direction::Tied,
            method: PMethod::Exact,
            degenerate: true,
        });
    }

    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks2, tie_sizes) = doubled_ranks(&abs);
    let w2_plus: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w2_minus = total2 - w2_plus;
    let w2_min = w2_plus.min(w2_minus);

    let (p, method) = if n <= 25 {
        let count = count_at_most(&ranks2, w2_min);
        let p = (2.0 * count as f64 / 2f64.powi(n as i32)).min(1.0);
        (p, PMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_sizes
            .iter()
            .map(|&t| {
                let t = t as f64;
                (t * t * t - t) / 48.0
            })
            .sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let w = w2_min as f64 / 2.0;
        let z = (w - mean + 0.5) / var.sqrt();
        let p = (2.0 * normal_cdf(z)).clamp(0.0, 1.0);
        (p, PMethod::Normal)
    };

    let direction = match w2_plus.cmp(&w2_minus) {
        std::cmp::Ordering::Greater => Direction::AFavored,
        std::cmp::Ordering::Less => Direction::BFavored,
        std::cmp::Ordering::Equal => Direction::Tied,
    };
    Ok(ComparisonReport {
        model_a: model_a.into(),
        model_b: model_b.into(),
        n_total,
        n_used: n,
        zero_diffs,
        w_plus: w2_plus as f64 / 2.0,
        w_minus: w2_minus as f64 / 2.0,
        w: w2_min as f64 / 2.0,
        p_value: p,
        direction,
        method,
        degenerate: false,
    })
}

/// Holm step-down correction. Input order is preserved in the output.
pub fn holm_correct(p_values: &[f64]) -> Result<Vec<f64>> {
    if p_values.is_empty() {
        return Err(Error::Config("holm correction needs at least one p".into()));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PValueRange { value: p });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (pos, &idx) in order.iter().enumerate() {
        let scaled = ((m - pos) as f64 * p_values[idx]).min(1.0);
        running_max = running_max.max(scaled);
        adjusted[idx] = running_max;
    }
    Ok(adjusted)
}

/// Accuracy aggregation used for the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mean,
    Max,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "mean" => Ok(Metric::Mean),
            "max" => Ok(Metric::Max),
            other => Err(Error::Config(format!(
                "unknown metric '{other}', expected mean|max"
            ))),
        }
    }
}

/// Complete model x dataset accuracy table.
#[derive(Debug, Clone)]
pub struct AccuracyTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// Row-major models x datasets.
    pub cells: Vec<f64>,
}

impl AccuracyTable {
    /// Aggregate run records (plus optional externally reported single
    /// accuracies) into a complete table for `models`. Datasets are the
    /// union over the selected models; any hole is an error naming the
    /// missing cell.
    pub fn from_records(
        records: &[RunRecord],
        external: &[(String, String, f64)],
        models: &[String],
        metric: Metric,
    ) -> Result<AccuracyTable> {
        let mut by_cell: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in records {
            if models.contains(&r.model) {
                by_cell
                    .entry((r.model.clone(), r.dataset.clone()))
                    .or_default()
                    .push(r.accuracy);
            }
        }
        for (model, dataset, acc) in external {
            if models.contains(model) {
                by_cell
                    .entry((model.clone(), dataset.clone()))
                    .or_default()
                    .push(*acc);
            }
        }
        let mut datasets: Vec<String> = by_cell.keys().map(|(_, d)| d.clone()).collect();
        datasets.sort();
        datasets.dedup();
        if datasets.is_empty() {
            return Err(Error::Config(
                "no accuracies found for the requested models".into(),
            ));
        }
        let mut cells = Vec::with_capacity(models.len() * datasets.len());
        for model in models {
            for dataset in &datasets {
                let accs = by_cell
                    .get(&(model.clone(), dataset.clone()))
                    .ok_or_else(|| Error::MissingCell {
                        model: model.clone(),
                        dataset: dataset.clone(),
                    })?;
                let value = match metric {
                    Metric::Mean => accs.iter().sum::<f64>() / accs.len() as f64,
                    Metric::Max => accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                cells.push(value);
            }
        }
        Ok(AccuracyTable {
            models: models.to_vec(),
            datasets,
            cells,
        })
    }

    pub fn row(&self, model_idx: usize) -> &[f64] {
        let d = self.datasets.len();
        &self.cells[model_idx * d..(model_idx + 1) * d]
    }
}

/// Mean rank per model over datasets: rank 1 is the highest accuracy,
/// ties share the average rank.
pub fn average_ranks(table: &AccuracyTable) -> Vec<f64> {
    let k = table.models.len();
    let d = table.datasets.len();
    let mut sums = vec![0.0; k];
    for col in 0..d {
        let accs: Vec<f64> = (0..k).map(|m| table.cells[m * d + col]).collect();
        for m in 0..k {
            // rank = 1 + #better + (#equal - 1) / 2
            let better = accs.iter().filter(|&&a| a > accs[m]).count() as f64;
            let equal = accs.iter().filter(|&&a| a == accs[m]).count() as f64;
            sums[m] += 1.0 + better + (equal - 1.0) / 2.0;
        }
    }
    sums.iter().map(|s| s / d as f64).collect()
}
