//! Amortized embedding: a one-hidden-layer network mapping a document and the
//! topics to proportions, fit by KL regression onto the MAP embedding.
//!
//! For topic `k` and hidden unit `h` the pre-activation is
//! `a[h,k] = sum_v hidden[h,v] * x_v * phi[k,v]`; the topic score is
//! `s_k = sum_h output[h,k] * sigmoid(a[h,k])` and the output is `softmax(s)`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::Document;
use crate::embed::{embed_map, DocView, EmbedConfig};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softmax_in_place};
use crate::model::seeded_rng;

pub const DEFAULT_HIDDEN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionParams {
    /// H x V input weights.
    pub hidden: Array2<f64>,
    /// H x K output weights.
    pub output: Array2<f64>,
}

impl RecognitionParams {
    pub fn new(hidden: Array2<f64>, output: Array2<f64>) -> Result<Self> {
        let p = Self { hidden, output };
        p.validate()?;
        Ok(p)
    }

    /// Hidden weights uniform in `[-0.1, 0.1]`, output weights zero, so the
    /// initial embedding is exactly uniform.
    pub fn init<R: Rng>(h: usize, v: usize, k: usize, rng: &mut R) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("recognition network needs H >= 1"));
        }
        let hidden = Array2::from_shape_simple_fn((h, v), || rng.random_range(-0.1..=0.1));
        Self::new(hidden, Array2::zeros((h, k)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.nrows() == 0 {
            return Err(Error::invalid("recognition network needs H >= 1"));
        }
        if self.hidden.nrows() != self.output.nrows() {
            return Err(Error::dim(format!(
                "hidden has {} rows, output has {}",
                self.hidden.nrows(),
                self.output.nrows()
            )));
        }
        if self.hidden.iter().chain(self.output.iter()).any(|x| !x.is_finite()) {
            return Err(Error::numerical("non-finite recognition weight"));
        }
        Ok(())
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn num_topics(&self) -> usize {
        self.output.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.hidden.ncols()
    }

    fn check_dims(&self, view: &DocView, v: usize) -> Result<()> {
        if self.hidden.ncols() != v {
            return Err(Error::dim(format!(
                "recognition input width {} but vocabulary has {v} terms",
                self.hidden.ncols()
            )));
        }
        if self.output.ncols() != view.k {
            return Err(Error::dim(format!(
                "recognition output width {} but K = {}",
                self.output.ncols(),
                view.k
            )));
        }
        Ok(())
    }
}

/// Forward activations kept for the reverse pass.
pub(crate) struct Activations {
    /// H x K sigmoid activations, row-major.
    pub act: Vec<f64>,
    pub pi: Vec<f64>,
}

pub(crate) fn forward_view(view: &DocView, lam: &RecognitionParams) -> Activations {
    let k = view.k;
    let h_size = lam.hidden_size();
    let mut act = vec![0.0; h_size * k];
    for i in 0..view.nnz() {
        let id = view.ids[i];
        let x = view.counts[i];
        let col = view.col(i);
        for h in 0..h_size {
            let c = lam.hidden[[h, id]] * x;
            let row = &mut act[h * k..(h + 1) * k];
            for (a, p) in row.iter_mut().zip(col) {
                *a += c * p;
            }
        }
    }
    act.iter_mut().for_each(|a| *a = sigmoid(*a));
    let mut scores = vec![0.0; k];
    for h in 0..h_size {
        for (t, s) in scores.iter_mut().enumerate() {
            *s += lam.output[[h, t]] * act[h * k + t];
        }
    }
    softmax_in_place(&mut scores);
    Activations { act, pi: scores }
}

/// Gradients in the document's local coordinates.
pub(crate) struct LocalGrads {
    /// H x nnz gradient of the hidden weights at the document's terms.
    pub d_hidden: Vec<f64>,
    /// H x K gradient of the output weights.
    pub d_output: Vec<f64>,
    /// nnz x K gradient of the gathered topic columns.
    pub d_cols: Vec<f64>,
}

/// Reverse pass given the gradient with respect to the softmax scores.
pub(crate) fn backward_scores(
    view: &DocView,
    lam: &RecognitionParams,
    acts: &Activations,
    s_bar: &[f64],
    want_cols: bool,
) -> LocalGrads {
    let k = view.k;
    let h_size = lam.hidden_size();
    let nnz = view.nnz();
    let mut d_output = vec![0.0; h_size * k];
    let mut a_bar = vec![0.0; h_size * k];
    for h in 0..h_size {
        for t in 0..k {
            let s = acts.act[h * k + t];
            d_output[h * k + t] = s_bar[t] * s;
            a_bar[h * k + t] = lam.output[[h, t]] * s_bar[t] * s * (1.0 - s);
        }
    }
    let mut d_hidden = vec![0.0; h_size * nnz];
    let mut d_cols = if want_cols { vec![0.0; nnz * k] } else { Vec::new() };
    for i in 0..nnz {
        let id = view.ids[i];
        let x = view.counts[i];
        let col = view.col(i);
        for h in 0..h_size {
            let ab = &a_bar[h * k..(h + 1) * k];
            d_hidden[h * nnz + i] = x * crate::math::dot(ab, col);
            if want_cols {
                let c = lam.hidden[[h, id]] * x;
                for (d, a) in d_cols[i * k..(i + 1) * k].iter_mut().zip(ab) {
                    *d += a * c;
                }
            }
        }
    }
    LocalGrads {
        d_hidden,
        d_output,
        d_cols,
    }
}

/// Gradient with respect to softmax scores of `upstream . softmax(s)`.
pub(crate) fn softmax_backward(pi: &[f64], upstream: &[f64]) -> Vec<f64> {
    let u_dot = crate::math::dot(pi, upstream);
    pi.iter().zip(upstream).map(|(p, u)| p * (u - u_dot)).collect()
}

pub fn recog_forward(x: &Document, phi: &Array2<f64>, lam: &RecognitionParams) -> Result<Vec<f64>> {
    let view = DocView::new(x, phi)?;
    lam.check_dims(&view, phi.ncols())?;
    let pi = forward_view(&view, lam).pi;
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(Error::numerical("non-finite recognition output"));
    }
    Ok(pi)
}

/// Gradients of `upstream_grad . recog_forward(x, phi, lam)` with respect to
/// the network weights and the topic matrix.
pub fn recog_forward_grads(
    x: &Document,
    phi: &Array2<f64>,
    lam: &RecognitionParams,
    upstream_grad: &[f64],
) -> Result<(RecognitionParams, Array2<f64>)> {
    let view = DocView::new(x, phi)?;
    lam.check_dims(&view, phi.ncols())?;
    if upstream_grad.len() != view.k {
        return Err(Error::dim(format!(
            "upstream gradient has {} entries, K = {}",
            upstream_grad.len(),
            view.k
        )));
    }
    let acts = forward_view(&view, lam);
    let s_bar = softmax_backward(&acts.pi, upstream_grad);
    let g = backward_scores(&view, lam, &acts, &s_bar, true);
    let h_size = lam.hidden_size();
    let nnz = view.nnz();
    let mut d_hidden = Array2::zeros(lam.hidden.dim());
    for h in 0..h_size {
        for (i, &id) in view.ids.iter().enumerate() {
            d_hidden[[h, id]] = g.d_hidden[h * nnz + i];
        }
    }
    let d_output = Array2::from_shape_vec((h_size, view.k), g.d_output).expect("shape");
    let mut d_phi = Array2::zeros(phi.dim());
    crate::embed::scatter_cols(&view, &g.d_cols, &mut d_phi);
    Ok((
        RecognitionParams {
            hidden: d_hidden,
            output: d_output,
        },
        d_phi,
    ))
}

/// `KL(target || approx)`.
pub fn kl_loss(target: &[f64], approx: &[f64]) -> Result<f64> {
    if target.len() != approx.len() {
        return Err(Error::dim(format!(
            "distributions have {} and {} entries",
            target.len(),
            approx.len()
        )));
    }
    if target.iter().chain(approx).any(|&p| !(p > 0.0)) {
        return Err(Error::invalid("KL divergence needs strictly positive distributions"));
    }
    Ok(target
        .iter()
        .zip(approx)
        .map(|(t, a)| t * (t.ln() - a.ln()))
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecogTrainConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for RecogTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            step_size: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecogTrainReport {
    pub params: RecognitionParams,
    /// Mean KL over the sample before training.
    pub initial_kl: f64,
    /// Mean KL of the returned parameters.
    pub final_kl: f64,
}

/// Mean `KL(target_d || recog(x_d))` over a set of precomputed targets.
pub fn mean_kl(
    docs: &[Document],
    targets: &[Vec<f64>],
    phi: &Array2<f64>,
    lam: &RecognitionParams,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in docs.iter().zip(targets) {
        let q = recog_forward(x, phi, lam)?;
        total += kl_loss(t, &q)?;
    }
    Ok(total / docs.len() as f64)
}

/// Adam moments for both weight matrices.
struct Adam {
    m: RecognitionParams,
    v: RecognitionParams,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(like: &RecognitionParams) -> Self {
        let zeros = || RecognitionParams {
            hidden: Array2::zeros(like.hidden.dim()),
            output: Array2::zeros(like.output.dim()),
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn descend(&mut self, p: &mut RecognitionParams, g: &RecognitionParams, step: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let update = |w: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>| {
            ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *w -= step * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
        };
        update(&mut p.hidden, &g.hidden, &mut self.m.hidden, &mut self.v.hidden);
        update(&mut p.output, &g.output, &mut self.m.output, &mut self.v.output);
    }
}

/// Fits the network to the MAP embeddings of `docs` by per-document Adam on
/// `KL(target || approx)`. Returns the best parameters seen, so the final
/// mean KL never exceeds the initial one.
pub fn train_recognition(
    docs: &[Document],
    phi: &Array2<f64>,
    alpha: f64,
    lam: &RecognitionParams,
    embed_cfg: &EmbedConfig,
    opt_cfg: &RecogTrainConfig,
) -> Result<RecogTrainReport> {
    if docs.is_empty() {
        return Err(Error::invalid("recognition training needs a nonempty sample"));
    }
    if !(opt_cfg.step_size > 0.0) {
        return Err(Error::invalid("recognition step size must be positive"));
    }
    let targets = docs
        .iter()
        .map(|x| embed_map(x, phi, alpha, embed_cfg).map(|r| r.pi))
        .collect::<Result<Vec<_>>>()?;
    train_recognition_on_targets(docs, &targets, phi, lam, opt_cfg)
}

pub fn train_recognition_on_targets(
    docs: &[Document],
    targets: &[Vec<f64>],
    phi: &Array2<f64>,
    lam: &RecognitionParams,
    opt_cfg: &RecogTrainConfig,
) -> Result<RecogTrainReport> {
    if docs.is_empty() {
        return Err(Error::invalid("recognition training needs a nonempty sample"));
    }
    let views = docs
        .iter()
        .map(|x| DocView::new(x, phi))
        .collect::<Result<Vec<_>>>()?;
    lam.check_dims(&views[0], phi.ncols())?;
    let initial_kl = mean_kl(docs, targets, phi, lam)?;
    let mut best = lam.clone();
    let mut best_kl = initial_kl;
    let mut current = lam.clone();
    let mut rng = seeded_rng(opt_cfg.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let k = views[0].k;
    let h_size = current.hidden_size();
    let mut grad = RecognitionParams {
        hidden: Array2::zeros(current.hidden.dim()),
        output: Array2::zeros(current.output.dim()),
    };
    let mut adam = Adam::new(&current);
    for _ in 0..opt_cfg.epochs {
        order.shuffle(&mut rng);
        for &d in &order {
            let view = &views[d];
            let acts = forward_view(view, &current);
            // d KL / d scores = approx - target
            let s_bar: Vec<f64> = acts.pi.iter().zip(&targets[d]).map(|(q, t)| q - t).collect();
            let g = backward_scores(view, &current, &acts, &s_bar, false);
            let nnz = view.nnz();
            grad.hidden.fill(0.0);
            for h in 0..h_size {
                for (i, &id) in view.ids.iter().enumerate() {
                    grad.hidden[[h, id]] = g.d_hidden[h * nnz + i];
                }
                for t in 0..k {
                    grad.output[[h, t]] = g.d_output[h * k + t];
                }
            }
            adam.descend(&mut current, &grad, opt_cfg.step_size);
        }
        if current.validate().is_err() {
            break;
        }
        let kl = mean_kl(docs, targets, phi, &current)?;
        if kl < best_kl {
            best_kl = kl;
            best = current.clone();
        }
    }
    Ok(RecogTrainReport {
        params: best,
        initial_kl,
        final_kl: best_kl,
    })
}
