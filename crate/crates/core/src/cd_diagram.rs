//! Critical difference diagrams: a horizontal rank axis with each model at
//! its mean rank and thick bars joining maximal cliques of models whose
//! pairwise differences are not significant after Holm correction.
//!
//! Output is plain SVG text with fixed-precision coordinates, so the same
//! input always produces the same bytes.

use std::fmt::Write;

use crate::error::{Error, Result};

/// Everything the diagram needs.
pub struct CdInput {
    pub models: Vec<String>,
    /// Mean rank per model, aligned with `models`.
    pub ranks: Vec<f64>,
    /// Holm-adjusted p-value per unordered model pair (indices into
    /// `models`).
    pub adjusted_p: Vec<(usize, usize, f64)>,
    pub alpha: f64,
}

/// Maximal cliques (size >= 2) of mutually non-significant models,
/// deterministic order.
pub fn non_significant_cliques(input: &CdInput) -> Vec<Vec<usize>> {
    let k = input.models.len();
    let mut ok = vec![vec![false; k]; k];
    for i in 0..k {
        ok[i][i] = true;
    }
    for &(i, j, p) in &input.adjusted_p {
        if p > input.alpha {
            ok[i][j] = true;
            ok[j][i] = true;
        }
    }
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for mask in 1u32..(1 << k) {
        if (mask.count_ones() as usize) < 2 {
            continue;
        }
        let members: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let is_clique = members
            .iter()
            .enumerate()
            .all(|(a, &i)| members[a + 1..].iter().all(|&j| ok[i][j]));
        if !is_clique {
            continue;
        }
        // keep only maximal cliques
        let grows = (0..k).any(|extra| {
            mask >> extra & 1 == 0 && members.iter().all(|&i| ok[i][extra])
        });
        if !grows {
            cliques.push(members);
        }
    }
    cliques.sort();
    cliques
}

/// Render the diagram. Models must be at least one; pairwise entries must
/// reference valid indices.
pub fn cd_diagram_svg(input: &CdInput) -> Result<String> {
    let k = input.models.len();
    if k == 0 || input.ranks.len() != k {
        return Err(Error::Config(
            "cd diagram needs aligned models and ranks".into(),
        ));
    }
    if k > 31 {
        return Err(Error::Config("cd diagram supports at most 31 models".into()));
    }
    for &(i, j, p) in &input.adjusted_p {
        if i >= k || j >= k {
            return Err(Error::Config(format!("pair ({i}, {j}) out of range")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PValueRange { value: p });
        }
    }

    let width = 640.0;
    let margin = 90.0;
    let axis_y = 50.0;
    let axis_w = width - 2.0 * margin;
    let lo = 1.0;
    let hi = k.max(2) as f64;
    let x_of = |rank: f64| margin + (rank - lo) / (hi - lo) * axis_w;

    // models sorted by rank; best (lowest rank) labels on the left
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        input.ranks[a]
            .partial_cmp(&input.ranks[b])
            .unwrap()
            .then(input.models[a].cmp(&input.models[b]))
    });

    let cliques = non_significant_cliques(input);
    let clique_y0 = axis_y + 18.0;
    let clique_step = 10.0;
    let label_y0 = clique_y0 + cliques.len() as f64 * clique_step + 18.0;
    let label_step = 16.0;
    let left_count = k.div_ceil(2);
    let rows_per_side = left_count.max(k - left_count);
    let height = label_y0 + rows_per_side as f64 * label_step + 10.0;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    )
    .unwrap();
    writeln!(
        svg,
        "  <style>text {{ font-family: monospace; font-size: 12px; }}</style>"
    )
    .unwrap();
    writeln!(
        svg,
        "  <line x1=\"{:.2}\" y1=\"{axis_y:.2}\" x2=\"{:.2}\" y2=\"{axis_y:.2}\" stroke=\"black\" stroke-width=\"1.5\"/>",
        x_of(lo),
        x_of(hi)
    )
    .unwrap();
    let mut tick = lo;
    while tick <= hi + 1e-9 {
        let x = x_of(tick);
        writeln!(
            svg,
            "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{axis_y:.2}\" stroke=\"black\"/>",
            axis_y - 6.0
        )
        .unwrap();
        writeln!(
            svg,
            "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{tick:.0}</text>",
            axis_y - 10.0
        )
        .unwrap();
        tick += 1.0;
    }

    // clique bars under the axis
    for (c, members) in cliques.iter().enumerate() {
        let min_rank = members
            .iter()
            .map(|&m| input.ranks[m])
            .fold(f64::INFINITY, f64::min);
        let max_rank = members
            .iter()
            .map(|&m| input.ranks[m])
            .fold(f64::NEG_INFINITY, f64::max);
        let y = clique_y0 + c as f64 * clique_step;
        writeln!(
            svg,
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\" stroke-width=\"4\"/>",
            x_of(min_rank) - 2.0,
            x_of(max_rank) + 2.0
        )
        .unwrap();
    }

    // model markers and labels, alternating sides like the usual layout
    for (pos, &m) in order.iter().enumerate() {
        let rank = input.ranks[m];
        let x = x_of(rank);
        let on_left = pos < left_count;
        let row = if on_left { pos } else { pos - left_count };
        let label_y = label_y0 + row as f64 * label_step;
        let label_x = if on_left { margin - 70.0 } else { width - margin + 70.0 };
        let anchor = if on_left { "end" } else { "start" };
        writeln!(
            svg,
            "  <path d=\"M {x:.2} {axis_y:.2} L {x:.2} {:.2} L {label_x:.2} {:.2}\" fill=\"none\" stroke=\"black\"/>",
            label_y - 4.0,
            label_y - 4.0
        )
        .unwrap();
        writeln!(
            svg,
            "  <text x=\"{label_x:.2}\" y=\"{label_y:.2}\" text-anchor=\"{anchor}\">{} ({:.4})</text>",
            xml_escape(&input.models[m]),
            rank
        )
        .unwrap();
    }
    writeln!(svg, "</svg>").unwrap();
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
