//! MAP document embedding by exponentiated gradient, and reverse-mode
//! differentiation through a fixed number of unrolled iterations.
//!
//! Starting from the uniform vector, each iteration multiplies every entry by
//! `exp(step * grad_k)` and renormalizes. The exponent is shifted by its
//! maximum before exponentiation; the shift cancels in the normalization.

use ndarray::Array2;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::math::ln_dirichlet_norm;

pub const DEFAULT_STEP_SIZE: f64 = 0.005;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_UNROLL_ITERS: usize = 200;
pub const DEFAULT_CONVERGE_ITERS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    /// Stop when the largest coordinate change drops below `tol`.
    Converge,
    /// Run exactly `max_iters` iterations.
    FixedUnroll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub mode: EmbedMode,
}

impl EmbedConfig {
    pub fn converge() -> Self {
        Self {
            step_size: DEFAULT_STEP_SIZE,
            max_iters: DEFAULT_CONVERGE_ITERS,
            tol: DEFAULT_TOL,
            mode: EmbedMode::Converge,
        }
    }

    pub fn fixed_unroll() -> Self {
        Self {
            step_size: DEFAULT_STEP_SIZE,
            max_iters: DEFAULT_UNROLL_ITERS,
            tol: DEFAULT_TOL,
            mode: EmbedMode::FixedUnroll,
        }
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("embedding needs at least one iteration"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self::converge()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResult {
    pub pi: Vec<f64>,
    pub iters_used: usize,
    pub converged: bool,
    /// Iterates `pi^0 ..= pi^T`, kept only when differentiation is requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// A document's columns of the topic matrix gathered word-major:
/// `cols[i * k + t]` is topic `t`'s probability of the `i`-th present term.
pub(crate) struct DocView {
    pub ids: Vec<usize>,
    pub counts: Vec<f64>,
    pub cols: Vec<f64>,
    pub k: usize,
}

impl DocView {
    pub fn new(x: &Document, phi: &Array2<f64>) -> Result<Self> {
        let (k, v) = phi.dim();
        if k == 0 {
            return Err(Error::dim("topic matrix has no rows"));
        }
        if let Some(id) = x.max_id().filter(|&id| id >= v) {
            return Err(Error::dim(format!("term id {id} outside vocabulary of size {v}")));
        }
        let nnz = x.nnz();
        let mut ids = Vec::with_capacity(nnz);
        let mut counts = Vec::with_capacity(nnz);
        let mut cols = Vec::with_capacity(nnz * k);
        for &(id, c) in x.entries() {
            ids.push(id);
            counts.push(f64::from(c));
            cols.extend(phi.column(id).iter().copied());
        }
        Ok(Self { ids, counts, cols, k })
    }

    #[inline]
    pub fn col(&self, i: usize) -> &[f64] {
        &self.cols[i * self.k..(i + 1) * self.k]
    }

    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    /// Mixture probability of each present term under proportions `pi`.
    pub fn mixture(&self, pi: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.nnz()).map(|i| crate::math::dot(self.col(i), pi)));
    }

    pub fn log_lik(&self, pi: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.nnz() {
            let m = crate::math::dot(self.col(i), pi);
            if !(m > 0.0) {
                return Err(Error::numerical(format!(
                    "term {} has nonpositive mixture probability",
                    self.ids[i]
                )));
            }
            total += self.counts[i] * m.ln();
        }
        Ok(total)
    }

    /// Gradient of the word log-likelihood with respect to `pi`, written to `out`.
    pub fn log_lik_grad(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..self.nnz() {
            let col = self.col(i);
            let m = crate::math::dot(col, pi);
            let r = self.counts[i] / m;
            for (g, p) in out.iter_mut().zip(col) {
                *g += r * p;
            }
        }
    }
}

fn check_pi(pi: &[f64], k: usize) -> Result<()> {
    if pi.len() != k {
        return Err(Error::dim(format!("pi has {} entries, K = {k}", pi.len())));
    }
    if let Some(p) = pi.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::invalid(format!("proportions must be positive, got {p}")));
    }
    Ok(())
}

/// Log-posterior of proportions `pi`: word log-likelihood plus symmetric
/// Dirichlet log-density, normalizer included.
pub fn doc_objective(pi: &[f64], x: &Document, phi: &Array2<f64>, alpha: f64) -> Result<f64> {
    let view = DocView::new(x, phi)?;
    check_pi(pi, view.k)?;
    Ok(view.log_lik(pi)? + log_dirichlet_pi(pi, alpha))
}

pub(crate) fn log_dirichlet_pi(pi: &[f64], alpha: f64) -> f64 {
    let k = pi.len();
    let log_sum: f64 = if alpha == 1.0 {
        0.0
    } else {
        pi.iter().map(|p| p.ln()).sum()
    };
    ln_dirichlet_norm(alpha, k) + (alpha - 1.0) * log_sum
}

pub fn doc_objective_grad(
    pi: &[f64],
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
) -> Result<Vec<f64>> {
    let view = DocView::new(x, phi)?;
    check_pi(pi, view.k)?;
    let mut g = vec![0.0; view.k];
    objective_grad(&view, pi, alpha, &mut g);
    Ok(g)
}

#[inline]
fn objective_grad(view: &DocView, pi: &[f64], alpha: f64, out: &mut [f64]) {
    view.log_lik_grad(pi, out);
    if alpha != 1.0 {
        for (g, p) in out.iter_mut().zip(pi) {
            *g += (alpha - 1.0) / p;
        }
    }
}

/// One exponentiated-gradient step from `prev` to `next` using gradient `grad`.
#[inline]
pub(crate) fn eg_step(prev: &[f64], grad: &[f64], step: f64, next: &mut [f64]) -> Result<()> {
    let shift = grad
        .iter()
        .map(|g| step * g)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::numerical("non-finite gradient in exponentiated-gradient step"));
    }
    let mut total = 0.0;
    for ((n, p), g) in next.iter_mut().zip(prev).zip(grad) {
        *n = p * (step * g - shift).exp();
        total += *n;
    }
    for n in next.iter_mut() {
        *n /= total;
    }
    // Entries can underflow for extreme steps; keep the iterate interior.
    if next.iter().any(|&p| !(p > 0.0)) {
        for n in next.iter_mut() {
            *n = n.max(f64::MIN_POSITIVE);
        }
        let total: f64 = next.iter().sum();
        for n in next.iter_mut() {
            *n /= total;
        }
    }
    debug_assert!(crate::math::is_open_simplex(next, 1e-9));
    Ok(())
}

pub(crate) fn run_embed(
    view: &DocView,
    alpha: f64,
    cfg: &EmbedConfig,
    keep_trajectory: bool,
) -> Result<EmbedResult> {
    cfg.validate()?;
    let k = view.k;
    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut trajectory = keep_trajectory.then(|| {
        let mut t = Vec::with_capacity(cfg.max_iters + 1);
        t.push(pi.clone());
        t
    });
    let mut converged = false;
    let mut iters_used = 0;
    for t in 1..=cfg.max_iters {
        objective_grad(view, &pi, alpha, &mut grad);
        eg_step(&pi, &grad, cfg.step_size, &mut next)?;
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if let Some(traj) = trajectory.as_mut() {
            traj.push(pi.clone());
        }
        iters_used = t;
        if delta < cfg.tol {
            converged = true;
            if cfg.mode == EmbedMode::Converge {
                break;
            }
        }
    }
    Ok(EmbedResult {
        pi,
        iters_used,
        converged,
        trajectory,
    })
}

/// MAP proportions of `x` under topics `phi` by exponentiated gradient.
pub fn embed_map(
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
    cfg: &EmbedConfig,
) -> Result<EmbedResult> {
    embed_map_inner(x, phi, alpha, cfg, false)
}

/// Same as [`embed_map`] but keeps every iterate for differentiation.
pub fn embed_map_traced(
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
    cfg: &EmbedConfig,
) -> Result<EmbedResult> {
    embed_map_inner(x, phi, alpha, cfg, true)
}

fn embed_map_inner(
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
    cfg: &EmbedConfig,
    keep: bool,
) -> Result<EmbedResult> {
    if x.token_total() == 0 {
        return Err(Error::invalid("cannot embed an empty document"));
    }
    let view = DocView::new(x, phi)?;
    run_embed(&view, alpha, cfg, keep)
}

/// Reverse pass through stored iterates. Returns the gradient with respect to
/// the gathered topic columns (layout of [`DocView::cols`]).
pub(crate) fn backward_unrolled(
    view: &DocView,
    alpha: f64,
    step: f64,
    trajectory: &[Vec<f64>],
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let k = view.k;
    let nnz = view.nnz();
    let mut d_cols = vec![0.0; nnz * k];
    let mut u = upstream.to_vec();
    let mut z_bar = vec![0.0; k];
    let mut g_bar = vec![0.0; k];
    let mut u_prev = vec![0.0; k];
    let mut mix = Vec::with_capacity(nnz);
    for t in (1..trajectory.len()).rev() {
        let prev = &trajectory[t - 1];
        let next = &trajectory[t];
        let u_dot = crate::math::dot(&u, next);
        for j in 0..k {
            z_bar[j] = next[j] * (u[j] - u_dot);
            g_bar[j] = step * z_bar[j];
            u_prev[j] = z_bar[j] / prev[j] - g_bar[j] * (alpha - 1.0) / (prev[j] * prev[j]);
        }
        view.mixture(prev, &mut mix);
        for i in 0..nnz {
            let col = view.col(i);
            let m = mix[i];
            let x = view.counts[i];
            let w = crate::math::dot(&g_bar, col);
            let a = x * w / (m * m);
            let dcol = &mut d_cols[i * k..(i + 1) * k];
            for j in 0..k {
                u_prev[j] -= a * col[j];
                dcol[j] += x * g_bar[j] / m - a * prev[j];
            }
        }
        std::mem::swap(&mut u, &mut u_prev);
    }
    if d_cols.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite value while differentiating the embedding"));
    }
    Ok(d_cols)
}

pub(crate) fn scatter_cols(view: &DocView, d_cols: &[f64], out: &mut Array2<f64>) {
    let k = view.k;
    for (i, &id) in view.ids.iter().enumerate() {
        for t in 0..k {
            out[[t, id]] += d_cols[i * k + t];
        }
    }
}

/// Vector-Jacobian product of the unrolled embedding with respect to `phi`,
/// using the iterates stored in `result`.
pub fn vjp_from_result(
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
    cfg: &EmbedConfig,
    result: &EmbedResult,
    upstream_grad: &[f64],
) -> Result<Array2<f64>> {
    let trajectory = result
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::invalid("embedding trajectory was not retained"))?;
    let view = DocView::new(x, phi)?;
    if upstream_grad.len() != view.k {
        return Err(Error::dim(format!(
            "upstream gradient has {} entries, K = {}",
            upstream_grad.len(),
            view.k
        )));
    }
    let d_cols = backward_unrolled(&view, alpha, cfg.step_size, trajectory, upstream_grad)?;
    let mut out = Array2::zeros(phi.dim());
    scatter_cols(&view, &d_cols, &mut out);
    Ok(out)
}

/// Gradient with respect to `phi` of `upstream_grad . embed(x, phi)` through
/// `cfg.max_iters` unrolled iterations. Requires [`EmbedMode::FixedUnroll`].
pub fn embed_map_vjp(
    x: &Document,
    phi: &Array2<f64>,
    alpha: f64,
    cfg: &EmbedConfig,
    upstream_grad: &[f64],
) -> Result<Array2<f64>> {
    if cfg.mode != EmbedMode::FixedUnroll {
        return Err(Error::invalid(
            "differentiation requires a fixed-unroll embedding configuration",
        ));
    }
    let result = embed_map_traced(x, phi, alpha, cfg)?;
    vjp_from_result(x, phi, alpha, cfg, &result, upstream_grad)
}
