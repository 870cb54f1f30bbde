//! MAP estimation by accelerated forward-backward splitting and automatic
//! selection of the regularisation parameter.
//!
//! Both prior forms share one monotone FISTA loop. Whenever an accelerated
//! step would raise the objective, the momentum is reset and a plain
//! forward-backward step is taken from the last iterate instead, so the
//! objective trace never increases.
//!
//! The synthesis prox is soft-thresholding. The analysis prox
//! `argmin_u 1/2 ||u - v||^2 + t ||Psi^dagger u||_1` is computed on the dual:
//! `u = v - Psi w` with `|w_j| <= t`, iterating projected gradient steps
//! `w <- clip(w + Psi^dagger (v - Psi w), t)` (unit step since `||Psi|| = 1`),
//! warm-started from the previous outer iteration. For an orthonormal `Psi`
//! the first step from any start already lands on the closed form.

use crate::error::{Error, Result};
use crate::linops::op_norm;
use crate::model::{Point, PosteriorModel, PriorForm};

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the relative objective change stays below this for
    /// `stall_window` consecutive iterations.
    pub rel_tol: f64,
    pub stall_window: usize,
    /// Step size is `step_safety / Lipschitz`.
    pub step_safety: f64,
    /// Dual iterations per analysis prox evaluation.
    pub inner_iters: usize,
    pub inner_tol: f64,
    pub norm_tol: f64,
    pub mu_select_iters: usize,
    pub mu_init: f64,
    pub gamma_hp: f64,
    pub beta_hp: f64,
    pub k_hp: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-8,
            stall_window: 5,
            step_safety: 0.99,
            inner_iters: 50,
            inner_tol: 1e-8,
            norm_tol: 1e-8,
            mu_select_iters: 10,
            mu_init: 1.0,
            gamma_hp: 1.0,
            beta_hp: 1.0,
            k_hp: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::InvalidParameter(
                "step_safety must lie in (0, 1]".into(),
            ));
        }
        if self.inner_iters == 0 || self.stall_window == 0 {
            return Err(Error::InvalidParameter(
                "inner_iters and stall_window must be positive".into(),
            ));
        }
        if !(self.mu_init > 0.0) || !(self.k_hp > 0.0) {
            return Err(Error::InvalidParameter("mu_init and k_hp must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolverDiagnostics {
    /// `||Phi Psi||^2` (synthesis) or `||Phi||^2` (analysis).
    pub operator_norm: f64,
    pub step: f64,
    pub restarts: usize,
    /// Analysis prox evaluations that hit `inner_iters` before the dual tolerance.
    pub inner_unconverged: usize,
}

#[derive(Clone, Debug)]
pub struct MapResult {
    pub point: Point,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the starting point followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl MapResult {
    /// Wrap a stored estimate, e.g. one read back from disk.
    pub fn at_point(m: &PosteriorModel, point: Point) -> Result<Self> {
        let objective_value = m.objective(&point)?;
        Ok(Self {
            point,
            objective_value,
            iterations: 0,
            converged: false,
            objective_trace: vec![objective_value],
            diagnostics: SolverDiagnostics::default(),
        })
    }
}

/// Componentwise `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {t}"
        )));
    }
    Ok(shrink(v, t))
}

fn shrink(v: &[f64], t: f64) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let mag = x.abs() - t;
            if mag > 0.0 {
                mag.copysign(x)
            } else {
                0.0
            }
        })
        .collect()
}

/// Proximal map of `t ||Psi^dagger .||_1` with a persistent dual variable.
pub(crate) struct AnalysisProx<'a> {
    model: &'a PosteriorModel,
    dual: Vec<f64>,
    tol: f64,
    pub unconverged: usize,
}

impl<'a> AnalysisProx<'a> {
    pub(crate) fn new(model: &'a PosteriorModel, tol: f64) -> Self {
        Self {
            model,
            dual: vec![0.0; model.dict().coeff_len()],
            tol,
            unconverged: 0,
        }
    }

    /// Drop the warm start.
    pub(crate) fn reset(&mut self) {
        self.dual.fill(0.0);
    }

    /// Accelerated projected gradient on the dual
    /// `min_{|w| <= t} ||v - Psi w||^2 / 2`, returning `v - Psi w`.
    /// The unit step is valid because `||Psi|| <= 1` for every dictionary.
    pub(crate) fn apply(&mut self, v: &[f64], t: f64, iters: usize) -> Vec<f64> {
        let dict = self.model.dict();
        let mut extrap = self.dual.clone();
        let mut momentum = 1.0f64;
        let mut u = v.to_vec();
        let mut prev = v.to_vec();
        let mut converged = false;
        for k in 0..iters {
            let synth = dict.synthesize_slice(&extrap);
            let mut change = 0.0;
            let mut size = 0.0;
            for (((ui, pi), vi), si) in u.iter_mut().zip(prev.iter_mut()).zip(v).zip(&synth) {
                *pi = *ui;
                *ui = vi - si;
                change += (*ui - *pi) * (*ui - *pi);
                size += *ui * *ui;
            }
            if k > 0 && change <= self.tol * self.tol * size.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
            let step = dict.analyze_slice(&u);
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next_momentum;
            momentum = next_momentum;
            for ((w, e), s) in self.dual.iter_mut().zip(extrap.iter_mut()).zip(step) {
                let next = (*e + s).clamp(-t, t);
                *e = next + beta * (next - *w);
                *w = next;
            }
        }
        if !converged {
            self.unconverged += 1;
        }
        let synth = dict.synthesize_slice(&self.dual);
        v.iter().zip(synth).map(|(vi, si)| vi - si).collect()
    }
}

/// Relative objective increase still accepted as non-increasing; absorbs
/// rounding in steps taken at the optimum.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Consecutive rejected iterations after which a solve gives up.
pub const MAX_REJECTIONS: usize = 100;

pub fn solve_map_synthesis(m: &PosteriorModel, cfg: &SolverConfig) -> Result<MapResult> {
    if m.prior_form() != PriorForm::Synthesis {
        return Err(Error::InvalidParameter(
            "solve_map_synthesis needs a synthesis model".into(),
        ));
    }
    solve_map_from(m, cfg, None)
}

pub fn solve_map_analysis(m: &PosteriorModel, cfg: &SolverConfig) -> Result<MapResult> {
    if m.prior_form() != PriorForm::Analysis {
        return Err(Error::InvalidParameter(
            "solve_map_analysis needs an analysis model".into(),
        ));
    }
    solve_map_from(m, cfg, None)
}

pub fn solve_map(m: &PosteriorModel, cfg: &SolverConfig) -> Result<MapResult> {
    solve_map_from(m, cfg, None)
}

/// Operator norm that sets the step size for `m`.
pub fn lipschitz_norm(m: &PosteriorModel, cfg: &SolverConfig) -> Result<f64> {
    match m.prior_form() {
        PriorForm::Synthesis => op_norm(m.op(), Some(m.dict()), cfg.norm_tol),
        PriorForm::Analysis => op_norm(m.op(), None, cfg.norm_tol),
    }
}

/// MAP solve, optionally warm-started from `start`.
pub fn solve_map_from(
    m: &PosteriorModel,
    cfg: &SolverConfig,
    start: Option<&Point>,
) -> Result<MapResult> {
    cfg.validate()?;
    let opnorm = lipschitz_norm(m, cfg)?;
    solve_with_norm(m, cfg, start, opnorm)
}

fn solve_with_norm(
    m: &PosteriorModel,
    cfg: &SolverConfig,
    start: Option<&Point>,
    opnorm: f64,
) -> Result<MapResult> {
    let x0 = match start {
        Some(p) => {
            let v = p.values().to_vec();
            m.point_from_values(v)?;
            p.values().to_vec()
        }
        None => vec![0.0; m.dim()],
    };
    let sigma2 = m.sigma() * m.sigma();
    let lipschitz = opnorm / sigma2;
    let step = if lipschitz > 0.0 {
        cfg.step_safety / lipschitz
    } else {
        // zero operator: the data term is constant and any step is exact
        1.0
    };
    let threshold = step * m.mu();

    let mut diagnostics = SolverDiagnostics {
        operator_norm: opnorm,
        step,
        ..Default::default()
    };

    let mut analysis = match m.prior_form() {
        PriorForm::Analysis => Some(AnalysisProx::new(m, cfg.inner_tol)),
        PriorForm::Synthesis => None,
    };
    let mut prox = |v: &[f64]| -> Vec<f64> {
        match analysis.as_mut() {
            Some(p) => p.apply(v, threshold, cfg.inner_iters),
            None => shrink(v, threshold),
        }
    };
    let forward = |v: &[f64]| -> Vec<f64> {
        let (_, grad) = m.likelihood_and_gradient(v);
        v.iter().zip(grad).map(|(a, g)| a - step * g).collect()
    };

    let mut x = x0;
    let mut fx = m.objective_from_values(&x);
    if !fx.is_finite() {
        return Err(Error::Diverged(0));
    }
    let mut trace = vec![fx];
    let mut extrap = x.clone();
    let mut momentum = 1.0f64;
    let mut quiet = 0usize;
    let mut rejected = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        let mut z = prox(&forward(&extrap));
        let mut fz = m.objective_from_values(&z);
        if !fz.is_finite() {
            return Err(Error::Diverged(it));
        }
        if fz > fx + MONOTONE_SLACK * fx.abs() {
            diagnostics.restarts += 1;
            momentum = 1.0;
            z = prox(&forward(&x));
            fz = m.objective_from_values(&z);
            if !fz.is_finite() {
                return Err(Error::Diverged(it));
            }
            if fz > fx + MONOTONE_SLACK * fx.abs() {
                // no progress with the current inner accuracy; the warm
                // started dual keeps improving on the next pass
                extrap.clone_from(&x);
                trace.push(fx);
                quiet = 0;
                rejected += 1;
                if rejected >= MAX_REJECTIONS {
                    break;
                }
                continue;
            }
            extrap.clone_from(&z);
            rejected = 0;
        } else {
            rejected = 0;
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            for ((e, zi), xi) in extrap.iter_mut().zip(&z).zip(&x) {
                *e = zi + beta * (zi - xi);
            }
            momentum = next;
        }
        let rel = (fx - fz).abs() / fz.abs().max(f64::MIN_POSITIVE);
        x = z;
        fx = fz;
        trace.push(fx);
        if rel < cfg.rel_tol {
            quiet += 1;
            if quiet >= cfg.stall_window {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    if let Some(p) = analysis {
        diagnostics.inner_unconverged = p.unconverged;
    }
    let point = m.point_from_values(x)?;
    let objective_value = m.objective(&point)?;
    Ok(MapResult {
        point,
        objective_value,
        iterations,
        converged,
        objective_trace: trace,
        diagnostics,
    })
}

#[derive(Clone, Debug)]
pub struct MuSelection {
    pub mu: f64,
    /// MAP solve at the returned `mu`.
    pub result: MapResult,
    /// `mu^(0)` followed by every update.
    pub mu_trace: Vec<f64>,
}

/// `(dim / k + gamma - 1) / (f + beta)`.
pub fn mu_update(dim: usize, prior_value: f64, cfg: &SolverConfig) -> Result<f64> {
    let denom = prior_value + cfg.beta_hp;
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "f(x) + beta vanished in the mu update".into(),
        ));
    }
    let mu = (dim as f64 / cfg.k_hp + cfg.gamma_hp - 1.0) / denom;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mu update produced {mu}"
        )));
    }
    Ok(mu)
}

/// Relative residual of the mu fixed point: `|mu (f + beta) - c| / c`.
pub fn mu_fixed_point_residual(dim: usize, prior_value: f64, mu: f64, cfg: &SolverConfig) -> f64 {
    let target = dim as f64 / cfg.k_hp + cfg.gamma_hp - 1.0;
    (mu * (prior_value + cfg.beta_hp) - target).abs() / target
}

/// Alternate MAP solves with the hierarchical-Bayes mu update for
/// `cfg.mu_select_iters` rounds, then solve once more at the final mu.
/// The dimension in the update is that of the model variable.
pub fn select_mu(template: &PosteriorModel, cfg: &SolverConfig) -> Result<MuSelection> {
    cfg.validate()?;
    if cfg.mu_select_iters == 0 {
        return Err(Error::InvalidParameter(
            "mu_select_iters must be at least 1".into(),
        ));
    }
    let opnorm = lipschitz_norm(template, cfg)?;
    let dim = template.dim();
    let mut mu = cfg.mu_init;
    let mut mu_trace = vec![mu];
    let mut start: Option<Point> = None;
    for _ in 0..cfg.mu_select_iters {
        let model = template.with_mu(mu)?;
        let res = solve_with_norm(&model, cfg, start.as_ref(), opnorm)?;
        let f = model.prior_f(&res.point)?;
        mu = mu_update(dim, f, cfg)?;
        mu_trace.push(mu);
        start = Some(res.point);
    }
    let model = template.with_mu(mu)?;
    let result = solve_with_norm(&model, cfg, start.as_ref(), opnorm)?;
    Ok(MuSelection {
        mu,
        result,
        mu_trace,
    })
}

/// Largest violation of the synthesis optimality conditions at `a`:
/// with `r = Psi^dagger Phi^dagger (Phi Psi a - y) / sigma^2`, nonzero entries
/// need `r_j + mu sign(a_j) = 0` and zero entries need `|r_j| <= mu`.
pub fn synthesis_kkt_violation(m: &PosteriorModel, a: &[f64]) -> Result<f64> {
    if m.prior_form() != PriorForm::Synthesis || a.len() != m.dim() {
        return Err(Error::InvalidParameter(
            "KKT check needs synthesis coefficients".into(),
        ));
    }
    let (_, r) = m.likelihood_and_gradient(a);
    let mu = m.mu();
    Ok(a.iter().zip(&r).fold(0.0, |worst: f64, (&aj, &rj)| {
        let v = if aj != 0.0 {
            (rj + mu * aj.signum()).abs()
        } else {
            (rj.abs() - mu).max(0.0)
        };
        worst.max(v)
    }))
}

#[cfg(test)]
pub(crate) fn relative_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    crate::linops::norm(&diff) / crate::linops::norm(b).max(f64::MIN_POSITIVE)
}
