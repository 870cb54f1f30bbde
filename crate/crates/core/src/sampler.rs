//! Proximal MALA reference sampler for small instances.
//!
//! The proposal mean is a forward-backward step on the full objective,
//! `m(x) = prox_{lambda mu f}(x - lambda grad g(x))`, which approximates the
//! Moreau-Yosida drift `x - (delta/2) grad U_lambda(x)` when
//! `lambda = delta / 2`. Proposals are `N(m(x), delta I)` and corrected by an
//! exact Metropolis-Hastings step. For analysis priors over non-orthonormal
//! dictionaries the prox is evaluated with a fixed number of dual iterations
//! from a zero start, so `m` is a deterministic function of `x` and the
//! correction stays exact.

use crate::error::{Error, Result};
use crate::linops::ImageGrid;
use crate::model::{PosteriorModel, PriorForm};
use crate::rng::SeededRng;
use crate::solver::{soft_threshold, AnalysisProx};
use crate::uq::{CredibleIntervalMap, Interval, SuperpixelPartition};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    /// Total iterations including burn-in.
    pub n_samples: usize,
    pub burn_in: usize,
    pub step_delta: f64,
    pub my_lambda: f64,
    pub thin: usize,
    pub seed: u64,
    /// Dual iterations used for the analysis prox.
    pub prox_iters: usize,
}

impl ChainConfig {
    /// 20% burn-in, no thinning, `my_lambda = step_delta / 2`.
    pub fn new(n_samples: usize, step_delta: f64, seed: u64) -> Self {
        Self {
            n_samples,
            burn_in: n_samples / 5,
            step_delta,
            my_lambda: step_delta / 2.0,
            thin: 1,
            seed,
            prox_iters: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples <= self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "n_samples ({}) must exceed burn_in ({})",
                self.n_samples, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if !(self.step_delta > 0.0 && self.step_delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step_delta must be positive, got {}",
                self.step_delta
            )));
        }
        if !(self.my_lambda > 0.0 && self.my_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "my_lambda must be positive, got {}",
                self.my_lambda
            )));
        }
        if self.prox_iters == 0 {
            return Err(Error::InvalidParameter("prox_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainResult {
    pub samples: Vec<ImageGrid>,
    pub acceptance_rate: f64,
    /// Objective of each stored sample.
    pub objective_trace: Vec<f64>,
    pub accepted: usize,
    pub proposed: usize,
    /// Set when the post burn-in acceptance rate is outside `[0.1, 0.9]`.
    pub warning: Option<String>,
    /// Model variable after the last iteration.
    pub final_state: Vec<f64>,
}

struct Drift<'a> {
    m: &'a PosteriorModel,
    lambda: f64,
    prox: Option<AnalysisProx<'a>>,
    iters: usize,
}

impl<'a> Drift<'a> {
    fn new(m: &'a PosteriorModel, cfg: &ChainConfig) -> Self {
        let (prox, iters) = match m.prior_form() {
            PriorForm::Analysis if m.dict().is_orthonormal() => (Some(AnalysisProx::new(m, 0.0)), 1),
            PriorForm::Analysis => (Some(AnalysisProx::new(m, 0.0)), cfg.prox_iters),
            PriorForm::Synthesis => (None, 0),
        };
        Self {
            m,
            lambda: cfg.my_lambda,
            prox,
            iters,
        }
    }

    /// Objective at `v` and the proposal mean from `v`.
    fn eval(&mut self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (g, grad) = self.m.likelihood_and_gradient(v);
        let objective = g + self.m.mu() * self.m.prior_from_values(v);
        let step: Vec<f64> = v.iter().zip(&grad).map(|(x, d)| x - self.lambda * d).collect();
        let t = self.lambda * self.m.mu();
        let mean = match self.prox.as_mut() {
            Some(prox) => {
                prox.reset();
                prox.apply(&step, t, self.iters)
            }
            None => soft_threshold(&step, t)?,
        };
        Ok((objective, mean))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Chain started from the zero point.
pub fn run_pxmala(m: &PosteriorModel, cfg: &ChainConfig) -> Result<ChainResult> {
    let start = vec![0.0; m.dim()];
    run_pxmala_from(m, cfg, &start)
}

pub fn run_pxmala_from(m: &PosteriorModel, cfg: &ChainConfig, start: &[f64]) -> Result<ChainResult> {
    cfg.validate()?;
    if start.len() != m.dim() {
        return Err(Error::Dimension(format!(
            "start has {} entries, model needs {}",
            start.len(),
            m.dim()
        )));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut drift = Drift::new(m, cfg);
    let delta = cfg.step_delta;
    let scale = delta.sqrt();

    let mut x = start.to_vec();
    let (mut u_x, mut mean_x) = drift.eval(&x)?;
    if !u_x.is_finite() {
        return Err(Error::Diverged(0));
    }

    let kept = (cfg.n_samples - cfg.burn_in).div_ceil(cfg.thin);
    let mut samples = Vec::with_capacity(kept);
    let mut objective_trace = Vec::with_capacity(kept);
    let (mut accepted, mut proposed) = (0, 0);

    for it in 0..cfg.n_samples {
        let proposal: Vec<f64> = mean_x.iter().map(|mu| mu + scale * rng.standard_normal()).collect();
        let (u_p, mean_p) = drift.eval(&proposal)?;
        let log_ratio = -u_p + u_x - sq_dist(&x, &mean_p) / (2.0 * delta)
            + sq_dist(&proposal, &mean_x) / (2.0 * delta);
        let accept = u_p.is_finite() && rng.uniform().ln() < log_ratio;
        if it >= cfg.burn_in {
            proposed += 1;
        }
        if accept {
            x = proposal;
            u_x = u_p;
            mean_x = mean_p;
            if it >= cfg.burn_in {
                accepted += 1;
            }
        }
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            samples.push(ImageGrid::from_raw(m.rows(), m.cols(), m.image_from_values(&x)));
            objective_trace.push(u_x);
        }
    }

    let acceptance_rate = accepted as f64 / proposed as f64;
    let warning = (!(0.1..=0.9).contains(&acceptance_rate)).then(|| {
        format!("acceptance rate {acceptance_rate:.3} outside [0.1, 0.9]; adjust step_delta")
    });
    Ok(ChainResult {
        samples,
        acceptance_rate,
        objective_trace,
        accepted,
        proposed,
        warning,
        final_state: x,
    })
}

/// Result of [`tune_step_delta`].
#[derive(Clone, Debug)]
pub struct StepTuning {
    pub step_delta: f64,
    /// `|rate - 1/2|` of the kept pilot.
    pub pilot_gap: f64,
    /// Last state of the pilot sequence, a warmed-up starting point.
    pub state: Vec<f64>,
}

const PILOT_ITERS: usize = 1500;
const PILOT_BURN_IN: usize = 500;
const MAX_BRACKET_STEPS: usize = 20;
const BISECTION_STEPS: usize = 6;

fn pilot(m: &PosteriorModel, start: &[f64], delta: f64, seed: u64) -> Result<ChainResult> {
    let mut cfg = ChainConfig::new(PILOT_ITERS, delta, seed);
    cfg.burn_in = PILOT_BURN_IN;
    cfg.thin = PILOT_ITERS;
    run_pxmala_from(m, &cfg, start)
}

/// Chooses `step_delta` by a sequence of short pilot chains, each started
/// where the previous one ended: brackets an acceptance rate of one half by
/// factors of 4 around `min(sigma^2, 1 / (mu^2 dim))`, then bisects on
/// `log delta`. Keeps the piloted step whose rate was closest to one half.
pub fn tune_step_delta(m: &PosteriorModel, start: &[f64], seed: u64) -> Result<StepTuning> {
    let sigma2 = m.sigma() * m.sigma();
    let mut delta = if m.mu() > 0.0 {
        sigma2.min(1.0 / (m.mu() * m.mu() * m.dim() as f64))
    } else {
        sigma2
    };
    let mut best = (delta, f64::INFINITY);
    let mut state = start.to_vec();
    let mut round = 0u64;
    let mut probe = |delta: f64, best: &mut (f64, f64)| -> Result<f64> {
        let res = pilot(m, &state, delta, seed.wrapping_add(round))?;
        round += 1;
        state = res.final_state;
        let rate = res.acceptance_rate;
        if (rate - 0.5).abs() < best.1 {
            *best = (delta, (rate - 0.5).abs());
        }
        Ok(rate)
    };

    let rate = probe(delta, &mut best)?;
    let up = rate > 0.5;
    let (mut lo, mut hi) = (delta, delta);
    for _ in 0..MAX_BRACKET_STEPS {
        delta = if up { delta * 4.0 } else { delta / 4.0 };
        let rate = probe(delta, &mut best)?;
        if up {
            (lo, hi) = (hi, delta);
            if rate <= 0.5 {
                break;
            }
        } else {
            (hi, lo) = (lo, delta);
            if rate > 0.5 {
                break;
            }
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        if probe(mid, &mut best)? > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StepTuning {
        step_delta: best.0,
        pilot_gap: best.1,
        state,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-region `(alpha/2, 1 - alpha/2)` quantiles of the spatial mean.
pub fn intervals_from_chain(
    res: &ChainResult,
    part: &SuperpixelPartition,
    alpha: f64,
) -> Result<CredibleIntervalMap> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let need = (50.0 / alpha).ceil() as usize;
    if res.samples.len() < need {
        return Err(Error::TooFewSamples {
            have: res.samples.len(),
            need,
        });
    }
    let first = &res.samples[0];
    if first.rows() != part.rows || first.cols() != part.cols {
        return Err(Error::Dimension(format!(
            "samples are {}x{}, partition is {}x{}",
            first.rows(),
            first.cols(),
            part.rows,
            part.cols
        )));
    }
    let mut means = vec![Vec::with_capacity(res.samples.len()); part.len()];
    for s in &res.samples {
        for (region, out) in part.regions.iter().zip(means.iter_mut()) {
            let total: f64 = region.iter().map(|&p| s.values()[p]).sum();
            out.push(total / region.len() as f64);
        }
    }
    let intervals = means
        .into_iter()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            Interval {
                lower: quantile_sorted(&v, alpha / 2.0),
                upper: quantile_sorted(&v, 1.0 - alpha / 2.0),
            }
        })
        .collect();
    Ok(CredibleIntervalMap::from_intervals(part.clone(), alpha, intervals))
}
