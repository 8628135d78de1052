//! Topic images and CSV dumps, plus topic matching for comparing fits.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Writes `phi.csv` and, when a grid is requested, `topic_<k>.pgm` per topic.
///
/// The CSV is written before the grid check so a non-square vocabulary still
/// leaves the raw matrix behind.
pub fn export_topics(phi: &Array2<f64>, grid_side: Option<usize>, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("phi.csv");
    fs::write(&csv_path, phi_csv(phi)).map_err(|e| Error::io(&csv_path, e))?;
    let Some(side) = grid_side else {
        return Ok(());
    };
    let v = phi.ncols();
    if side == 0 || side.checked_mul(side) != Some(v) {
        return Err(Error::invalid(format!(
            "vocabulary size {v} is not {side}x{side}; grid images skipped"
        )));
    }
    for (k, row) in phi.rows().into_iter().enumerate() {
        let path = out_dir.join(format!("topic_{k}.pgm"));
        let row = row.to_slice().expect("standard layout");
        fs::write(&path, topic_pgm(row, side)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn phi_csv(phi: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in phi.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Plain P2 image of one topic, each pixel scaled by the topic's own maximum.
pub fn topic_pgm(row: &[f64], side: usize) -> Result<String> {
    if side == 0 || row.len() != side * side {
        return Err(Error::dim(format!("{} values do not fill a {side}x{side} grid", row.len())));
    }
    if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::numerical("topic has negative or non-finite entries"));
    }
    let max = row.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P2\n# per-topic max normalization, max={max:e}\n{side} {side}\n255\n");
    for r in 0..side {
        let cells: Vec<String> = row[r * side..(r + 1) * side]
            .iter()
            .map(|&x| {
                let px = if max > 0.0 { (255.0 * x / max).round() } else { 0.0 };
                (px as u32).to_string()
            })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a plain P2 image into (width, height, maxval, pixels).
pub fn parse_pgm(text: &str) -> Result<(usize, usize, u32, Vec<u32>)> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(Error::Format("missing P2 magic".into()));
    }
    let mut num = |what: &str| -> Result<u64> {
        tokens
            .next()
            .ok_or_else(|| Error::Format(format!("missing {what}")))?
            .parse::<u64>()
            .map_err(|e| Error::Format(format!("bad {what}: {e}")))
    };
    let w = num("width")? as usize;
    let h = num("height")? as usize;
    let maxval = num("maxval")? as u32;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::Format("image too large".into()))?;
    let mut pixels = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let p = num("pixel")? as u32;
        if p > maxval {
            return Err(Error::Format(format!("pixel {p} exceeds maxval {maxval}")));
        }
        pixels.push(p);
    }
    Ok((w, h, maxval, pixels))
}

/// Total-variation distance between two distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Greedily pairs the rows of `a` and `b` by smallest total variation.
///
/// Returns `(pairs, mean_distance)`, each pair being `(row_in_a, row_in_b)`.
pub fn match_topics(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Vec<(usize, usize)>, f64)> {
    if a.dim() != b.dim() {
        return Err(Error::dim(format!("topic shapes {:?} and {:?} differ", a.dim(), b.dim())));
    }
    let k = a.nrows();
    if k == 0 {
        return Err(Error::invalid("no topics to match"));
    }
    let mut cand = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let d = total_variation(
                a.row(i).as_slice().expect("standard layout"),
                b.row(j).as_slice().expect("standard layout"),
            );
            cand.push((d, i, j));
        }
    }
    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; k];
    let mut used_b = vec![false; k];
    let mut pairs = Vec::with_capacity(k);
    let mut total = 0.0;
    for (d, i, j) in cand {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
            total += d;
        }
    }
    pairs.sort_unstable();
    Ok((pairs, total / k as f64))
}
