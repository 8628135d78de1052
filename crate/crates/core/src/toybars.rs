//! Synthetic bars benchmark.
//!
//! Words are pixels of a square grid. Documents are generated from six bar
//! topics (three horizontal, three vertical, each a band `grid_side / 3`
//! cells thick), but labels come from a ten-topic representation that adds
//! four pairwise combinations of bars. Combinations carry positive label
//! weight and single bars negative weight, so the topics that best explain
//! the words are not the ones that best predict the labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;

use crate::corpus::{write_corpus, write_vocabulary, Corpus, Document, Vocabulary};
use crate::embed::{embed_map, EmbedConfig};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};
use crate::model::{seeded_rng, DEFAULT_ALPHA};

/// Bar pairs (horizontal index, vertical index) forming the combination topics.
pub const COMBINATIONS: [(usize, usize); 4] = [(0, 0), (1, 1), (2, 2), (0, 1)];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBarsConfig {
    pub grid_side: usize,
    pub n_docs: usize,
    pub tokens_per_doc: usize,
    /// Symmetric Dirichlet concentration for per-document bar proportions.
    pub doc_alpha: f64,
    /// Label weights over the ten topics: four combinations, then six bars.
    pub label_coeffs: [f64; 10],
    /// Draw labels from the logistic model; otherwise threshold it at 0.5.
    pub label_noise: bool,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ToyBarsConfig {
    fn default() -> Self {
        Self {
            grid_side: 12,
            n_docs: 1000,
            tokens_per_doc: 50,
            doc_alpha: 0.5,
            label_coeffs: [4.0, 4.0, 4.0, 4.0, -2.0, -2.0, -2.0, -2.0, -2.0, -2.0],
            label_noise: false,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl ToyBarsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side < 3 || self.grid_side % 3 != 0 {
            return Err(Error::invalid(format!(
                "grid side must be a multiple of 3 and at least 3, got {}",
                self.grid_side
            )));
        }
        if self.n_docs == 0 {
            return Err(Error::invalid("need at least one document"));
        }
        if self.tokens_per_doc == 0 {
            return Err(Error::invalid("need at least one token per document"));
        }
        if !(self.doc_alpha > 0.0 && self.doc_alpha.is_finite()) {
            return Err(Error::invalid("document concentration must be positive"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test fraction must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "grid_side={}", self.grid_side);
        let _ = writeln!(out, "n_docs={}", self.n_docs);
        let _ = writeln!(out, "tokens_per_doc={}", self.tokens_per_doc);
        let _ = writeln!(out, "doc_alpha={}", self.doc_alpha);
        let coeffs: Vec<String> = self.label_coeffs.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "label_coeffs={}", coeffs.join(","));
        let _ = writeln!(out, "label_noise={}", self.label_noise);
        let _ = writeln!(out, "test_fraction={}", self.test_fraction);
        let _ = writeln!(out, "seed={}", self.seed);
        out
    }
}

/// Pixel ids covered by horizontal bar `i`.
pub fn horizontal_bar(grid_side: usize, i: usize) -> Vec<usize> {
    let band = grid_side / 3;
    (i * band..(i + 1) * band)
        .flat_map(|r| (0..grid_side).map(move |c| r * grid_side + c))
        .collect()
}

/// Pixel ids covered by vertical bar `j`.
pub fn vertical_bar(grid_side: usize, j: usize) -> Vec<usize> {
    let band = grid_side / 3;
    (0..grid_side)
        .flat_map(|r| (j * band..(j + 1) * band).map(move |c| r * grid_side + c))
        .collect()
}

fn uniform_row(v: usize, cells: &[usize]) -> Vec<f64> {
    let mut row = vec![0.0; v];
    for &c in cells {
        row[c] = 1.0;
    }
    let n = row.iter().filter(|&&x| x > 0.0).count() as f64;
    row.iter_mut().for_each(|x| *x /= n);
    row
}

/// Returns the six generating bars (h0, h1, h2, v0, v1, v2) and the ten
/// labeling topics (the four combinations followed by the six bars).
pub fn make_true_topics(cfg: &ToyBarsConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    let side = cfg.grid_side;
    let v = cfg.vocab_size();
    let bars: Vec<Vec<usize>> = (0..3)
        .map(|i| horizontal_bar(side, i))
        .chain((0..3).map(|j| vertical_bar(side, j)))
        .collect();
    let mut phi6 = Array2::zeros((6, v));
    for (k, cells) in bars.iter().enumerate() {
        phi6.row_mut(k).assign(&ndarray::Array1::from(uniform_row(v, cells)));
    }
    let mut phi10 = Array2::zeros((10, v));
    for (k, &(h, vb)) in COMBINATIONS.iter().enumerate() {
        let cells: Vec<usize> = bars[h].iter().chain(&bars[3 + vb]).copied().collect();
        phi10.row_mut(k).assign(&ndarray::Array1::from(uniform_row(v, &cells)));
    }
    for k in 0..6 {
        phi10.row_mut(4 + k).assign(&phi6.row(k));
    }
    Ok((phi6, phi10))
}

#[derive(Debug, Clone)]
pub struct ToyBarsTruth {
    pub phi6: Array2<f64>,
    pub phi10: Array2<f64>,
    pub eta_true: Vec<f64>,
    /// Bar proportions that generated each document, train then test order.
    pub train_pi6: Vec<Vec<f64>>,
    pub test_pi6: Vec<Vec<f64>>,
    /// Ten-topic MAP proportions used for labeling.
    pub train_pi10: Vec<Vec<f64>>,
    pub test_pi10: Vec<Vec<f64>>,
}

pub struct ToyBarsDataset {
    pub train: Corpus,
    pub test: Corpus,
    pub truth: ToyBarsTruth,
}

/// Pixel vocabulary with terms `r<row>c<col>`.
pub fn pixel_vocabulary(grid_side: usize) -> Result<Vocabulary> {
    let width = (grid_side - 1).to_string().len();
    Vocabulary::new(
        (0..grid_side * grid_side)
            .map(|id| format!("r{:0w$}c{:0w$}", id / grid_side, id % grid_side, w = width))
            .collect(),
    )
}

fn sample_dirichlet<R: Rng>(rng: &mut R, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            // Clamp so proportions stay strictly positive for tiny shapes.
            let mut pi: Vec<f64> = draws.iter().map(|g| (g / total).max(1e-300)).collect();
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            return pi;
        }
    }
}

struct Generated {
    doc: Document,
    pi6: Vec<f64>,
    pi10: Vec<f64>,
}

fn generate_doc<R: Rng>(
    rng: &mut R,
    cfg: &ToyBarsConfig,
    phi6: &Array2<f64>,
    phi10: &Array2<f64>,
    embed_cfg: &EmbedConfig,
) -> Result<Generated> {
    let pi6 = sample_dirichlet(rng, cfg.doc_alpha, 6);
    let mixture: Vec<f64> = (0..cfg.vocab_size())
        .map(|v| (0..6).map(|k| pi6[k] * phi6[[k, v]]).sum())
        .collect();
    let dist = WeightedIndex::new(&mixture).map_err(|e| Error::numerical(e.to_string()))?;
    let tokens: Vec<usize> = (0..cfg.tokens_per_doc).map(|_| dist.sample(rng)).collect();
    let mut doc = Document::from_tokens(&tokens, None);
    let pi10 = embed_map(&doc, phi10, DEFAULT_ALPHA, embed_cfg)?.pi;
    let p = sigmoid(dot(&cfg.label_coeffs, &pi10));
    let y = if cfg.label_noise {
        rng.random::<f64>() < p
    } else {
        p >= 0.5
    };
    doc.set_label(Some(y));
    Ok(Generated { doc, pi6, pi10 })
}

/// Generates a labeled train/test split. Deterministic in `cfg`.
pub fn generate(cfg: &ToyBarsConfig) -> Result<ToyBarsDataset> {
    let (phi6, phi10) = make_true_topics(cfg)?;
    let mut rng = seeded_rng(cfg.seed);
    let embed_cfg = EmbedConfig::converge();
    let all = (0..cfg.n_docs)
        .map(|_| generate_doc(&mut rng, cfg, &phi6, &phi10, &embed_cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..cfg.n_docs).collect();
    order.shuffle(&mut rng);
    let n_test = (cfg.n_docs as f64 * cfg.test_fraction).round() as usize;
    let n_train = cfg.n_docs - n_test;
    let (train_idx, test_idx) = order.split_at(n_train);
    let vocab = pixel_vocabulary(cfg.grid_side)?;
    let pick = |idx: &[usize]| -> Result<(Corpus, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let docs = idx.iter().map(|&i| all[i].doc.clone()).collect();
        Ok((
            Corpus::new(vocab.clone(), docs)?,
            idx.iter().map(|&i| all[i].pi6.clone()).collect(),
            idx.iter().map(|&i| all[i].pi10.clone()).collect(),
        ))
    };
    let (train, train_pi6, train_pi10) = pick(train_idx)?;
    let (test, test_pi6, test_pi10) = pick(test_idx)?;
    Ok(ToyBarsDataset {
        train,
        test,
        truth: ToyBarsTruth {
            phi6,
            phi10,
            eta_true: cfg.label_coeffs.to_vec(),
            train_pi6,
            test_pi6,
            train_pi10,
            test_pi10,
        },
    })
}

pub(crate) fn matrix_csv<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `train.txt`, `test.txt`, `vocab.txt` and a `truth/` directory.
pub fn write_dataset(dir: &Path, data: &ToyBarsDataset, cfg: &ToyBarsConfig) -> Result<()> {
    let truth_dir = dir.join("truth");
    fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
    write_vocabulary(data.train.vocabulary(), dir.join("vocab.txt"))?;
    write_corpus(&data.train, dir.join("train.txt"))?;
    write_corpus(&data.test, dir.join("test.txt"))?;
    let t = &data.truth;
    let rows = |m: &Array2<f64>| -> String {
        matrix_csv(m.rows().into_iter().map(|r| r.to_slice().expect("standard layout")))
    };
    write_file(&truth_dir.join("phi6.csv"), &rows(&t.phi6))?;
    write_file(&truth_dir.join("phi10.csv"), &rows(&t.phi10))?;
    write_file(&truth_dir.join("eta_true.csv"), &matrix_csv([t.eta_true.as_slice()]))?;
    write_file(
        &truth_dir.join("train_pi6.csv"),
        &matrix_csv(t.train_pi6.iter().map(Vec::as_slice)),
    )?;
    write_file(
        &truth_dir.join("test_pi6.csv"),
        &matrix_csv(t.test_pi6.iter().map(Vec::as_slice)),
    )?;
    write_file(&truth_dir.join("config.txt"), &cfg.to_key_value())?;
    Ok(())
}
