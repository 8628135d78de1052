//! Model parameters and priors.
//!
//! Topics are stored as unconstrained logits; the topic-word matrix is the
//! row-wise softmax of those logits, so every optimizer step is plain
//! unconstrained gradient ascent.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{ln_dirichlet_norm, softmax_in_place};

/// Default symmetric Dirichlet concentration on document proportions.
pub const DEFAULT_ALPHA: f64 = 1.01;
/// Default symmetric Dirichlet concentration on topics (flat).
pub const DEFAULT_BETA: f64 = 1.0;

/// The deterministic generator used for every seeded draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// K x V unconstrained logits.
    pub topic_logits: Array2<f64>,
    /// Regression weights mapping proportions to the label logit.
    pub eta: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(topic_logits: Array2<f64>, eta: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let params = Self {
            topic_logits,
            eta,
            alpha,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, v) = self.topic_logits.dim();
        if k == 0 || v == 0 {
            return Err(Error::invalid("model needs K >= 1 and V >= 1"));
        }
        if self.eta.len() != k {
            return Err(Error::dim(format!("eta has {} entries, K = {k}", self.eta.len())));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn num_topics(&self) -> usize {
        self.topic_logits.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.topic_logits.ncols()
    }

    pub fn phi(&self) -> Result<Array2<f64>> {
        phi_from_logits(&self.topic_logits)
    }

    pub fn is_finite(&self) -> bool {
        self.topic_logits.iter().all(|x| x.is_finite()) && self.eta.iter().all(|x| x.is_finite())
    }
}

/// Relative importance of the word and label terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub w_x: f64,
    pub w_y: f64,
}

impl PenaltyWeights {
    pub fn new(w_x: f64, w_y: f64) -> Result<Self> {
        if !(w_x >= 0.0 && w_x.is_finite() && w_y >= 0.0 && w_y.is_finite()) {
            return Err(Error::invalid(format!(
                "penalty weights must be finite and nonnegative, got w_x={w_x}, w_y={w_y}"
            )));
        }
        Ok(Self { w_x, w_y })
    }

    /// Weights usable for training: at least one must be positive.
    pub fn for_training(w_x: f64, w_y: f64) -> Result<Self> {
        let w = Self::new(w_x, w_y)?;
        if w_x == 0.0 && w_y == 0.0 {
            return Err(Error::invalid("degenerate weights: w_x and w_y are both zero"));
        }
        Ok(w)
    }

    pub fn scaled(self, c: f64) -> Self {
        Self {
            w_x: self.w_x * c,
            w_y: self.w_y * c,
        }
    }
}

/// Row-wise softmax of a K x V logit matrix.
pub fn phi_from_logits(topic_logits: &Array2<f64>) -> Result<Array2<f64>> {
    if topic_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite topic logit"));
    }
    let mut phi = topic_logits.clone();
    for mut row in phi.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    Ok(phi)
}

/// Sum over topics of the symmetric Dirichlet log-density, normalizer included.
pub fn log_prior_phi(phi: &Array2<f64>, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if phi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::invalid("topic-word probabilities must be positive"));
    }
    let (k, v) = phi.dim();
    let norm = ln_dirichlet_norm(beta, v);
    let log_sum: f64 = if beta == 1.0 {
        0.0
    } else {
        phi.iter().map(|p| p.ln()).sum()
    };
    Ok(k as f64 * norm + (beta - 1.0) * log_sum)
}

/// Logits drawn i.i.d. uniform in `[-scale, scale]` from [`SeededRng`], eta at zero.
pub fn init_params(k: usize, v: usize, seed: u64, scale: f64) -> Result<ModelParams> {
    let mut rng = seeded_rng(seed);
    init_params_with(k, v, &mut rng, scale, DEFAULT_ALPHA, DEFAULT_BETA)
}

pub fn init_params_with<R: Rng>(
    k: usize,
    v: usize,
    rng: &mut R,
    scale: f64,
    alpha: f64,
    beta: f64,
) -> Result<ModelParams> {
    if k == 0 || v == 0 {
        return Err(Error::invalid("model needs K >= 1 and V >= 1"));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("init scale must be nonnegative, got {scale}")));
    }
    let logits = Array2::from_shape_simple_fn((k, v), || {
        if scale == 0.0 {
            0.0
        } else {
            rng.random_range(-scale..=scale)
        }
    });
    ModelParams::new(logits, vec![0.0; k], alpha, beta)
}
