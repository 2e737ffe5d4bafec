use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::FitData;
use crate::error::{Result, SimError};
use crate::network::RatingGraph;
use crate::rng::{stream, Stream};

/// How the squared-error and penalty terms are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossNormalization {
    /// Mean squared error plus each penalty averaged over its entities, as in
    /// the open-source scorer.
    Mean,
    /// Plain sums: squared error summed over ratings, penalties summed over
    /// entities.
    Sum,
}

/// Multiplicity of the global-intercept penalty under [`LossNormalization::Sum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuPenalty {
    PerRating,
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Exact block minimization: each rater's (intercept, factor) pair, each
    /// note's pair and the global intercept are solved in closed form in
    /// turn.
    Alternating,
    /// Full-batch gradient descent with per-parameter curvature scaling and
    /// step halving on loss increase.
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitHyper {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub normalization: LossNormalization,
    pub mu_penalty: MuPenalty,
    pub optimizer: Optimizer,
    /// Initial step for [`Optimizer::GradientDescent`].
    pub learning_rate: f64,
    /// Scale gradient steps by the diagonal curvature of each parameter.
    pub precondition: bool,
    pub max_epochs: usize,
    /// Stop once the relative loss change of an epoch drops below this.
    pub tol: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for FitHyper {
    fn default() -> Self {
        FitHyper {
            lambda_i: 0.15,
            lambda_f: 0.03,
            normalization: LossNormalization::Mean,
            mu_penalty: MuPenalty::PerRating,
            optimizer: Optimizer::Alternating,
            learning_rate: 0.2,
            precondition: true,
            max_epochs: 2000,
            tol: 1e-9,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

impl FitHyper {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.validation_errors(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs.join("; ")))
        }
    }

    pub(crate) fn validation_errors(&self, errs: &mut Vec<String>) {
        if !(self.lambda_i >= 0.0 && self.lambda_f >= 0.0) {
            errs.push("fit.lambda_i and fit.lambda_f must be >= 0".into());
        }
        if !(self.learning_rate > 0.0) {
            errs.push("fit.learning_rate must be > 0".into());
        }
        if !(self.tol > 0.0) {
            errs.push("fit.tol must be > 0".into());
        }
        if !(self.init_scale >= 0.0) {
            errs.push("fit.init_scale must be >= 0".into());
        }
        if self.max_epochs == 0 {
            errs.push("fit.max_epochs must be positive".into());
        }
    }
}

/// Inferred parameters, indexed by global rater and note id. Entities absent
/// from the fitted ratings carry zeros and a `false` presence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedParams {
    pub mu: f64,
    pub rater_intercept: Vec<f64>,
    pub rater_factor: Vec<f64>,
    pub note_intercept: Vec<f64>,
    pub note_factor: Vec<f64>,
    pub rater_fitted: Vec<bool>,
    pub note_fitted: Vec<bool>,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub converged: bool,
    /// Loss after each accepted epoch.
    pub loss_trace: Vec<f64>,
}

impl FittedParams {
    pub fn zeros(n_raters: usize, n_notes: usize) -> Self {
        FittedParams {
            mu: 0.0,
            rater_intercept: vec![0.0; n_raters],
            rater_factor: vec![0.0; n_raters],
            note_intercept: vec![0.0; n_notes],
            note_factor: vec![0.0; n_notes],
            rater_fitted: vec![false; n_raters],
            note_fitted: vec![false; n_notes],
            final_loss: 0.0,
            epochs_run: 0,
            converged: true,
            loss_trace: Vec::new(),
        }
    }

    /// Negates every factor; predictions are unchanged.
    pub fn flip_factors(&mut self) {
        self.rater_factor.iter_mut().for_each(|f| *f = -*f);
        self.note_factor.iter_mut().for_each(|f| *f = -*f);
    }
}

/// Local (compact) parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Params {
    pub mu: f64,
    pub a: Vec<f64>,
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub y: Vec<f64>,
}

/// Objective `data * Σ(r - r̂)² + mu * μ² + Σ_u (rater_i a_u² + rater_f x_u²)
/// + Σ_n (note_i b_n² + note_f y_n²)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weights {
    pub data: f64,
    pub mu: f64,
    pub rater_i: f64,
    pub rater_f: f64,
    pub note_i: f64,
    pub note_f: f64,
}

impl Weights {
    pub fn new(h: &FitHyper, n_ratings: usize, n_raters: usize, n_notes: usize) -> Self {
        let e = n_ratings as f64;
        match h.normalization {
            LossNormalization::Mean => Weights {
                data: 1.0 / e,
                mu: h.lambda_i,
                rater_i: h.lambda_i / n_raters as f64,
                rater_f: h.lambda_f / n_raters as f64,
                note_i: h.lambda_i / n_notes as f64,
                note_f: h.lambda_f / n_notes as f64,
            },
            LossNormalization::Sum => Weights {
                data: 1.0,
                mu: match h.mu_penalty {
                    MuPenalty::PerRating => h.lambda_i * e,
                    MuPenalty::Once => h.lambda_i,
                },
                rater_i: h.lambda_i,
                rater_f: h.lambda_f,
                note_i: h.lambda_i,
                note_f: h.lambda_f,
            },
        }
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn objective(p: &Params, d: &FitData, w: &Weights) -> f64 {
    let mut sse = 0.0;
    for u in 0..d.n_raters() {
        let (au, xu) = (p.a[u], p.x[u]);
        for (n, r) in d.rater_entries(u) {
            let e = r - (p.mu + au + p.b[n] + xu * p.y[n]);
            sse += e * e;
        }
    }
    w.data * sse
        + w.mu * p.mu * p.mu
        + w.rater_i * sum_sq(&p.a)
        + w.rater_f * sum_sq(&p.x)
        + w.note_i * sum_sq(&p.b)
        + w.note_f * sum_sq(&p.y)
}

pub(crate) fn objective_gradient(p: &Params, d: &FitData, w: &Weights) -> Params {
    let mut g = Params {
        mu: 2.0 * w.mu * p.mu,
        a: p.a.iter().map(|v| 2.0 * w.rater_i * v).collect(),
        x: p.x.iter().map(|v| 2.0 * w.rater_f * v).collect(),
        b: p.b.iter().map(|v| 2.0 * w.note_i * v).collect(),
        y: p.y.iter().map(|v| 2.0 * w.note_f * v).collect(),
    };
    for u in 0..d.n_raters() {
        let (au, xu) = (p.a[u], p.x[u]);
        for (n, r) in d.rater_entries(u) {
            let e = r - (p.mu + au + p.b[n] + xu * p.y[n]);
            let c = -2.0 * w.data * e;
            g.mu += c;
            g.a[u] += c;
            g.x[u] += c * p.y[n];
            g.b[n] += c;
            g.y[n] += c * xu;
        }
    }
    g
}

/// Minimizes over each rater's (intercept, factor) with notes fixed.
fn rater_sweep(p: &mut Params, d: &FitData, w: &Weights) {
    let (ri, rf) = (w.rater_i / w.data, w.rater_f / w.data);
    for u in 0..d.n_raters() {
        let (mut sy, mut syy, mut st, mut sty) = (0.0, 0.0, 0.0, 0.0);
        for (n, r) in d.rater_entries(u) {
            let t = r - p.mu - p.b[n];
            let yn = p.y[n];
            sy += yn;
            syy += yn * yn;
            st += t;
            sty += t * yn;
        }
        let s1 = d.rater_degree(u) as f64;
        let (a, x) = solve_pair(s1 + ri, sy, syy + rf, st, sty, p.x[u]);
        p.a[u] = a;
        p.x[u] = x;
    }
}

fn note_sweep(p: &mut Params, d: &FitData, w: &Weights) {
    let (ni, nf) = (w.note_i / w.data, w.note_f / w.data);
    for n in 0..d.n_notes() {
        let (mut sx, mut sxx, mut st, mut stx) = (0.0, 0.0, 0.0, 0.0);
        for (u, r) in d.note_entries(n) {
            let t = r - p.mu - p.a[u];
            let xu = p.x[u];
            sx += xu;
            sxx += xu * xu;
            st += t;
            stx += t * xu;
        }
        let s1 = d.note_degree(n) as f64;
        let (b, y) = solve_pair(s1 + ni, sx, sxx + nf, st, stx, p.y[n]);
        p.b[n] = b;
        p.y[n] = y;
    }
}

/// Solves `[a11 a12; a12 a22] [i; f] = [r1; r2]`. When the system is
/// singular (no penalty and a degenerate factor column) only the intercept
/// moves.
fn solve_pair(a11: f64, a12: f64, a22: f64, r1: f64, r2: f64, f_old: f64) -> (f64, f64) {
    let det = a11 * a22 - a12 * a12;
    if det > 1e-12 * a11.abs().max(1.0) * a22.abs().max(1e-300) && det.is_finite() {
        ((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det)
    } else {
        ((r1 - a12 * f_old) / a11, f_old)
    }
}

fn mu_update(p: &mut Params, d: &FitData, w: &Weights) {
    let mut s = 0.0;
    for u in 0..d.n_raters() {
        let (au, xu) = (p.a[u], p.x[u]);
        for (n, r) in d.rater_entries(u) {
            s += r - au - p.b[n] - xu * p.y[n];
        }
    }
    p.mu = s / (d.n_ratings() as f64 + w.mu / w.data);
}

fn init_params(d: &FitData, h: &FitHyper) -> Params {
    let mut rng = stream(h.seed, Stream::FitInit);
    let s = h.init_scale;
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })
            .collect()
    };
    let mu = draw(1)[0];
    let a = draw(d.n_raters());
    let x = draw(d.n_raters());
    let b = draw(d.n_notes());
    let y = draw(d.n_notes());
    Params { mu, a, x, b, y }
}

fn converged(prev: f64, cur: f64, tol: f64) -> bool {
    (prev - cur).abs() <= tol * cur.abs().max(f64::MIN_POSITIVE)
}

// Slack for round-off when checking that an exact block update did not
// raise the loss.
const MONOTONE_SLACK: f64 = 1e-12;

fn run_alternating(p: &mut Params, d: &FitData, w: &Weights, h: &FitHyper) -> Result<(usize, bool, Vec<f64>)> {
    let mut prev = objective(p, d, w);
    let mut trace = Vec::new();
    for epoch in 1..=h.max_epochs {
        rater_sweep(p, d, w);
        note_sweep(p, d, w);
        mu_update(p, d, w);
        let cur = objective(p, d, w);
        if !cur.is_finite() {
            return Err(SimError::Optimization {
                epochs: epoch,
                loss: cur,
                step: 1.0,
                msg: "non-finite loss during block updates".into(),
            });
        }
        debug_assert!(
            cur <= prev * (1.0 + MONOTONE_SLACK) + 1e-300,
            "loss rose from {prev} to {cur} at epoch {epoch}"
        );
        trace.push(cur);
        if converged(prev, cur, h.tol) {
            return Ok((epoch, true, trace));
        }
        prev = cur;
    }
    Ok((h.max_epochs, false, trace))
}

/// Diagonal of the objective's Hessian with the bilinear cross terms
/// dropped; used to scale gradient steps per parameter.
fn curvature(p: &Params, d: &FitData, w: &Weights) -> Params {
    let mut c = Params {
        mu: 2.0 * (w.data * d.n_ratings() as f64 + w.mu),
        a: vec![2.0 * w.rater_i; d.n_raters()],
        x: vec![2.0 * w.rater_f; d.n_raters()],
        b: vec![2.0 * w.note_i; d.n_notes()],
        y: vec![2.0 * w.note_f; d.n_notes()],
    };
    for u in 0..d.n_raters() {
        for (n, _) in d.rater_entries(u) {
            c.a[u] += 2.0 * w.data;
            c.x[u] += 2.0 * w.data * p.y[n] * p.y[n];
            c.b[n] += 2.0 * w.data;
            c.y[n] += 2.0 * w.data * p.x[u] * p.x[u];
        }
    }
    c
}

const MIN_STEP: f64 = 1e-12;

fn run_gradient_descent(p: &mut Params, d: &FitData, w: &Weights, h: &FitHyper) -> Result<(usize, bool, Vec<f64>)> {
    let mut cur = objective(p, d, w);
    let mut step = h.learning_rate;
    let mut trace = Vec::new();
    let scaled = |g: f64, c: f64| if c > 0.0 { g / c } else { g };
    for epoch in 1..=h.max_epochs {
        let g = objective_gradient(p, d, w);
        let c = if h.precondition {
            curvature(p, d, w)
        } else {
            Params {
                mu: 0.0,
                a: vec![0.0; p.a.len()],
                x: vec![0.0; p.x.len()],
                b: vec![0.0; p.b.len()],
                y: vec![0.0; p.y.len()],
            }
        };
        loop {
            let cand = Params {
                mu: p.mu - step * scaled(g.mu, c.mu),
                a: p.a
                    .iter()
                    .zip(&g.a)
                    .zip(&c.a)
                    .map(|((v, g), c)| v - step * scaled(*g, *c))
                    .collect(),
                x: p.x
                    .iter()
                    .zip(&g.x)
                    .zip(&c.x)
                    .map(|((v, g), c)| v - step * scaled(*g, *c))
                    .collect(),
                b: p.b
                    .iter()
                    .zip(&g.b)
                    .zip(&c.b)
                    .map(|((v, g), c)| v - step * scaled(*g, *c))
                    .collect(),
                y: p.y
                    .iter()
                    .zip(&g.y)
                    .zip(&c.y)
                    .map(|((v, g), c)| v - step * scaled(*g, *c))
                    .collect(),
            };
            let next = objective(&cand, d, w);
            if next.is_finite() && next <= cur {
                *p = cand;
                trace.push(next);
                let done = converged(cur, next, h.tol);
                cur = next;
                if done {
                    return Ok((epoch, true, trace));
                }
                step = (step * 1.25).min(h.learning_rate);
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                // no descent step left: stationary up to round-off
                if g.mu.abs() < 1e-10 && next.is_finite() {
                    return Ok((epoch, true, trace));
                }
                return Err(SimError::Optimization {
                    epochs: epoch,
                    loss: cur,
                    step,
                    msg: "step halving reached the floor without decreasing the loss".into(),
                });
            }
        }
    }
    Ok((h.max_epochs, false, trace))
}

/// Fits the factorization model to the rated edges in `data`.
pub fn fit_data(data: &FitData, h: &FitHyper) -> Result<FittedParams> {
    h.validate()?;
    let w = Weights::new(h, data.n_ratings(), data.n_raters(), data.n_notes());
    let mut p = init_params(data, h);
    let (epochs, converged, trace) = match h.optimizer {
        Optimizer::Alternating => run_alternating(&mut p, data, &w, h)?,
        Optimizer::GradientDescent => run_gradient_descent(&mut p, data, &w, h)?,
    };
    let final_loss = objective(&p, data, &w);
    Ok(to_global(&p, data, final_loss, epochs, converged, trace))
}

fn to_global(p: &Params, d: &FitData, loss: f64, epochs: usize, converged: bool, trace: Vec<f64>) -> FittedParams {
    let mut out = FittedParams::zeros(d.n_raters_total, d.n_notes_total);
    out.mu = p.mu;
    for (l, &g) in d.rater_ids.iter().enumerate() {
        out.rater_intercept[g as usize] = p.a[l];
        out.rater_factor[g as usize] = p.x[l];
        out.rater_fitted[g as usize] = true;
    }
    for (l, &g) in d.note_ids.iter().enumerate() {
        out.note_intercept[g as usize] = p.b[l];
        out.note_factor[g as usize] = p.y[l];
        out.note_fitted[g as usize] = true;
    }
    out.final_loss = loss;
    out.epochs_run = epochs;
    out.converged = converged;
    out.loss_trace = trace;
    out
}

fn to_local(f: &FittedParams, d: &FitData) -> Params {
    Params {
        mu: f.mu,
        a: d.rater_ids.iter().map(|&g| f.rater_intercept[g as usize]).collect(),
        x: d.rater_ids.iter().map(|&g| f.rater_factor[g as usize]).collect(),
        b: d.note_ids.iter().map(|&g| f.note_intercept[g as usize]).collect(),
        y: d.note_ids.iter().map(|&g| f.note_factor[g as usize]).collect(),
    }
}

/// Fits every rated edge of `graph`.
pub fn fit(graph: &RatingGraph, h: &FitHyper) -> Result<FittedParams> {
    fit_data(&FitData::from_graph(graph, None)?, h)
}

/// Objective value of `params` on the rated edges of `graph`.
pub fn loss(params: &FittedParams, graph: &RatingGraph, h: &FitHyper) -> Result<f64> {
    let d = FitData::from_graph(graph, None)?;
    let w = Weights::new(h, d.n_ratings(), d.n_raters(), d.n_notes());
    Ok(objective(&to_local(params, &d), &d, &w))
}

/// Analytic gradient of [`loss`], returned in the same layout as the
/// parameters (entries for entities without ratings are zero).
pub fn gradient(params: &FittedParams, graph: &RatingGraph, h: &FitHyper) -> Result<FittedParams> {
    let d = FitData::from_graph(graph, None)?;
    let w = Weights::new(h, d.n_ratings(), d.n_raters(), d.n_notes());
    let g = objective_gradient(&to_local(params, &d), &d, &w);
    Ok(to_global(&g, &d, f64::NAN, 0, true, Vec::new()))
}
