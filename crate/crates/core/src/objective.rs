//! Penalized training objectives.
//!
//! The instantiated objective treats every document's proportions as free
//! variables:
//!
//! ```text
//! w_y * sum_d log p(y_d | pi_d, eta)
//!   + w_x * (log p(phi) + sum_d log p(x_d | pi_d, phi) + sum_d log Dir(pi_d | alpha))
//! ```
//!
//! The embedded objective replaces `pi_d` with an embedding of the words
//! (MAP or recognition network), so the proportion prior drops out.
//! The multinomial coefficient is omitted everywhere since it does not depend
//! on any parameter.

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::embed::{backward_unrolled, run_embed, DocView, EmbedConfig, EmbedMode};
use crate::error::{Error, Result};
use crate::math::{dot, ln_dirichlet_norm, sigmoid, softplus};
use crate::model::{log_prior_phi, ModelParams, PenaltyWeights};
use crate::recognition::{backward_scores, forward_view, softmax_backward, RecognitionParams};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    pub label_term: f64,
    pub word_term: f64,
    pub pi_prior_term: f64,
    pub phi_prior_term: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn combine(
        weights: &PenaltyWeights,
        label_term: f64,
        word_term: f64,
        pi_prior_term: f64,
        phi_prior_term: f64,
    ) -> Self {
        let total = weights.w_y * label_term
            + weights.w_x * (word_term + pi_prior_term + phi_prior_term);
        Self {
            label_term,
            word_term,
            pi_prior_term,
            phi_prior_term,
            total,
        }
    }
}

/// Which terms enter the objective beyond the weighted likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectiveOptions {
    /// Keep `log p(phi)` inside the word bracket.
    pub phi_prior: bool,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        Self { phi_prior: true }
    }
}

/// The map from words to proportions used by the embedded objective.
#[derive(Debug, Clone, Copy)]
pub enum Embedder<'a> {
    /// MAP proportions by exponentiated gradient.
    Ideal(EmbedConfig),
    /// Recognition network. When `phi_path` is false the network's dependence
    /// on the topics is held constant during differentiation.
    Approx {
        params: &'a RecognitionParams,
        phi_path: bool,
    },
}

impl Embedder<'_> {
    /// Proportions for one document.
    pub fn embed(&self, x: &Document, phi: &Array2<f64>, alpha: f64) -> Result<Vec<f64>> {
        match self {
            Embedder::Ideal(cfg) => crate::embed::embed_map(x, phi, alpha, cfg).map(|r| r.pi),
            Embedder::Approx { params, .. } => crate::recognition::recog_forward(x, phi, params),
        }
    }
}

/// Word log-likelihood `sum_v x_v log(sum_k pi_k phi_kv)`.
pub fn log_lik_words(x: &Document, pi: &[f64], phi: &Array2<f64>) -> Result<f64> {
    let view = DocView::new(x, phi)?;
    if pi.len() != view.k {
        return Err(Error::dim(format!("pi has {} entries, K = {}", pi.len(), view.k)));
    }
    view.log_lik(pi)
}

/// Bernoulli-logistic log-likelihood of label `y` given logit `eta . pi`.
pub fn log_lik_label(y: bool, pi: &[f64], eta: &[f64]) -> f64 {
    label_term_from_logit(y, dot(eta, pi))
}

#[inline]
fn label_term_from_logit(y: bool, s: f64) -> f64 {
    if y {
        -softplus(-s)
    } else {
        -softplus(s)
    }
}

#[inline]
fn yf(y: bool) -> f64 {
    if y {
        1.0
    } else {
        0.0
    }
}

fn check_labels(corpus: &Corpus, weights: &PenaltyWeights) -> Result<()> {
    if weights.w_y > 0.0 && !corpus.is_fully_labeled() {
        return Err(Error::invalid("label weight is positive but some documents are unlabeled"));
    }
    Ok(())
}

fn phi_prior(phi: &Array2<f64>, beta: f64, opts: &ObjectiveOptions) -> Result<f64> {
    if opts.phi_prior && beta == 1.0 {
        // Flat prior: constant, and defined even where a probability underflowed.
        Ok(phi.nrows() as f64 * ln_dirichlet_norm(1.0, phi.ncols()))
    } else if opts.phi_prior {
        log_prior_phi(phi, beta)
    } else {
        Ok(0.0)
    }
}

pub fn objective_instantiated(
    corpus: &Corpus,
    params: &ModelParams,
    pis: &[Vec<f64>],
    weights: &PenaltyWeights,
    opts: &ObjectiveOptions,
) -> Result<ObjectiveBreakdown> {
    if pis.len() != corpus.len() {
        return Err(Error::dim(format!(
            "{} proportion vectors for {} documents",
            pis.len(),
            corpus.len()
        )));
    }
    check_labels(corpus, weights)?;
    let phi = params.phi()?;
    let k = params.num_topics();
    let per_doc = corpus
        .documents()
        .par_iter()
        .zip(pis.par_iter())
        .map(|(x, pi)| -> Result<(f64, f64, f64)> {
            if pi.len() != k || pi.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::invalid("proportions must be positive K-vectors"));
            }
            let view = DocView::new(x, &phi)?;
            let words = view.log_lik(pi)?;
            let prior = crate::embed::log_dirichlet_pi(pi, params.alpha);
            let label = match (weights.w_y > 0.0, x.label()) {
                (true, Some(y)) => log_lik_label(y, pi, &params.eta),
                _ => 0.0,
            };
            Ok((label, words, prior))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut label, mut words, mut prior) = (0.0, 0.0, 0.0);
    for (l, w, p) in per_doc {
        label += l;
        words += w;
        prior += p;
    }
    let phi_term = phi_prior(&phi, params.beta, opts)?;
    Ok(ObjectiveBreakdown::combine(weights, label, words, prior, phi_term))
}

/// Per-document quantities from one pass of the embedded objective.
pub(crate) struct DocPass {
    pub pi: Vec<f64>,
    pub label: f64,
    pub words: f64,
    /// Gradient with respect to the gathered topic columns (nnz x K), or
    /// empty when gradients were not requested.
    pub d_cols: Vec<f64>,
    pub view_ids: Vec<usize>,
}

/// Aggregated result of a full pass over the corpus.
pub struct EmbeddedPass {
    pub breakdown: ObjectiveBreakdown,
    pub d_logits: Option<Array2<f64>>,
    pub d_eta: Option<Vec<f64>>,
    /// Proportions assigned to every document by the embedder.
    pub pis: Vec<Vec<f64>>,
}

fn doc_pass(
    x: &Document,
    phi: &Array2<f64>,
    params: &ModelParams,
    weights: &PenaltyWeights,
    embedder: &Embedder<'_>,
    want_grads: bool,
) -> Result<DocPass> {
    if x.token_total() == 0 {
        return Err(Error::invalid("cannot embed an empty document"));
    }
    let view = DocView::new(x, phi)?;
    let k = view.k;
    let label = if weights.w_y > 0.0 { x.label() } else { None };

    enum Fwd {
        Ideal(Vec<Vec<f64>>),
        Approx(crate::recognition::Activations),
    }
    let (pi, fwd) = match embedder {
        Embedder::Ideal(cfg) => {
            let r = run_embed(&view, params.alpha, cfg, want_grads)?;
            (r.pi, r.trajectory.map(Fwd::Ideal))
        }
        Embedder::Approx { params: lam, .. } => {
            let acts = forward_view(&view, lam);
            if acts.pi.iter().any(|p| !p.is_finite()) {
                return Err(Error::numerical("non-finite recognition output"));
            }
            (acts.pi.clone(), Some(Fwd::Approx(acts)))
        }
    };
    let words = view.log_lik(&pi)?;
    let s = dot(&params.eta, &pi);
    let label_term = label.map_or(0.0, |y| label_term_from_logit(y, s));
    if !want_grads {
        return Ok(DocPass {
            pi,
            label: label_term,
            words,
            d_cols: Vec::new(),
            view_ids: Vec::new(),
        });
    }

    // Gradient of this document's objective with respect to its proportions.
    let mut upstream = vec![0.0; k];
    if weights.w_x > 0.0 {
        view.log_lik_grad(&pi, &mut upstream);
        upstream.iter_mut().for_each(|u| *u *= weights.w_x);
    }
    if let Some(y) = label {
        let r = weights.w_y * (yf(y) - sigmoid(s));
        for (u, e) in upstream.iter_mut().zip(&params.eta) {
            *u += r * e;
        }
    }

    let mut d_cols = match fwd.expect("gradients requested") {
        Fwd::Ideal(traj) => {
            let cfg = match embedder {
                Embedder::Ideal(cfg) => cfg,
                Embedder::Approx { .. } => unreachable!(),
            };
            backward_unrolled(&view, params.alpha, cfg.step_size, &traj, &upstream)?
        }
        Fwd::Approx(acts) => {
            let (lam, phi_path) = match embedder {
                Embedder::Approx { params, phi_path } => (*params, *phi_path),
                Embedder::Ideal(_) => unreachable!(),
            };
            if phi_path {
                let s_bar = softmax_backward(&acts.pi, &upstream);
                backward_scores(&view, lam, &acts, &s_bar, true).d_cols
            } else {
                vec![0.0; view.nnz() * k]
            }
        }
    };

    // Direct appearance of the topics in the word term.
    if weights.w_x > 0.0 {
        let mut mix = Vec::new();
        view.mixture(&pi, &mut mix);
        for i in 0..view.nnz() {
            let r = weights.w_x * view.counts[i] / mix[i];
            for (d, p) in d_cols[i * k..(i + 1) * k].iter_mut().zip(&pi) {
                *d += r * p;
            }
        }
    }
    Ok(DocPass {
        pi,
        label: label_term,
        words,
        d_cols,
        view_ids: view.ids,
    })
}

/// Gradient of a scalar with respect to logits given its gradient with
/// respect to the row-softmax output `phi`.
pub fn softmax_rows_backward(phi: &Array2<f64>, d_phi: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(phi.dim());
    for ((p_row, g_row), mut o_row) in phi.rows().into_iter().zip(d_phi.rows()).zip(out.rows_mut()) {
        let inner: f64 = p_row.iter().zip(g_row.iter()).map(|(p, g)| p * g).sum();
        for ((o, p), g) in o_row.iter_mut().zip(p_row.iter()).zip(g_row.iter()) {
            *o = p * (g - inner);
        }
    }
    out
}

/// Evaluates the embedded objective and, when `want_grads`, its gradients
/// with respect to the topic logits and eta. Gradients require a fixed-unroll
/// configuration for the ideal embedder.
pub fn embedded_pass(
    corpus: &Corpus,
    params: &ModelParams,
    weights: &PenaltyWeights,
    embedder: &Embedder<'_>,
    opts: &ObjectiveOptions,
    want_grads: bool,
) -> Result<EmbeddedPass> {
    check_labels(corpus, weights)?;
    if want_grads {
        if let Embedder::Ideal(cfg) = embedder {
            if cfg.mode != EmbedMode::FixedUnroll {
                return Err(Error::invalid(
                    "gradients through the MAP embedding need a fixed-unroll configuration",
                ));
            }
        }
    }
    if let Embedder::Approx { params: lam, .. } = embedder {
        if lam.num_topics() != params.num_topics() || lam.vocab_size() != params.vocab_size() {
            return Err(Error::dim("recognition network does not match the model shape"));
        }
    }
    let phi = params.phi()?;
    let passes = corpus
        .documents()
        .par_iter()
        .map(|x| doc_pass(x, &phi, params, weights, embedder, want_grads))
        .collect::<Result<Vec<_>>>()?;

    let k = params.num_topics();
    let mut label = 0.0;
    let mut words = 0.0;
    let mut d_phi = want_grads.then(|| Array2::<f64>::zeros(phi.dim()));
    let mut d_eta = want_grads.then(|| vec![0.0; k]);
    for (x, p) in corpus.documents().iter().zip(&passes) {
        label += p.label;
        words += p.words;
        if let Some(d_phi) = d_phi.as_mut() {
            for (i, &id) in p.view_ids.iter().enumerate() {
                for t in 0..k {
                    d_phi[[t, id]] += p.d_cols[i * k + t];
                }
            }
        }
        if let (Some(d_eta), Some(y)) = (d_eta.as_mut(), x.label()) {
            if weights.w_y > 0.0 {
                let r = weights.w_y * (yf(y) - sigmoid(dot(&params.eta, &p.pi)));
                for (g, pk) in d_eta.iter_mut().zip(&p.pi) {
                    *g += r * pk;
                }
            }
        }
    }
    let phi_term = phi_prior(&phi, params.beta, opts)?;
    let breakdown = ObjectiveBreakdown::combine(weights, label, words, 0.0, phi_term);
    let d_logits = d_phi.map(|mut d_phi| {
        if opts.phi_prior && params.beta != 1.0 && weights.w_x > 0.0 {
            let c = weights.w_x * (params.beta - 1.0);
            d_phi.zip_mut_with(&phi, |g, p| *g += c / p);
        }
        softmax_rows_backward(&phi, &d_phi)
    });
    if let Some(d) = &d_logits {
        if d.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("non-finite topic gradient"));
        }
    }
    Ok(EmbeddedPass {
        breakdown,
        d_logits,
        d_eta,
        pis: passes.into_iter().map(|p| p.pi).collect(),
    })
}

pub fn objective_embedded(
    corpus: &Corpus,
    params: &ModelParams,
    weights: &PenaltyWeights,
    embedder: &Embedder<'_>,
    opts: &ObjectiveOptions,
) -> Result<ObjectiveBreakdown> {
    embedded_pass(corpus, params, weights, embedder, opts, false).map(|p| p.breakdown)
}

/// Gradients of the embedded objective with respect to topic logits and eta.
pub fn objective_embedded_grads(
    corpus: &Corpus,
    params: &ModelParams,
    weights: &PenaltyWeights,
    embedder: &Embedder<'_>,
    opts: &ObjectiveOptions,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let pass = embedded_pass(corpus, params, weights, embedder, opts, true)?;
    Ok((
        pass.d_logits.expect("gradients requested"),
        pass.d_eta.expect("gradients requested"),
    ))
}
