//! Randomised check that every bound brackets the exact value it bounds.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::experiments::config::{BetaGrid, ExperimentConfig, Seeds};
use crate::experiments::problem::{Problem, Violation};
use crate::observation::HVariant;
use crate::rng;

pub const MAX_STATE_DIM: usize = 60;
const MIN_STATE_DIM: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub config: ExperimentConfig,
    pub beta_unpreconditioned: f64,
    pub beta_preconditioned: f64,
    pub checks: usize,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub seed: u64,
    pub checks: usize,
    pub failed_trials: Vec<TrialOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failed_trials.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.failed_trials.iter().map(|t| t.violations.len()).sum()
    }
}

fn log_uniform(r: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo.ln()..hi.ln())).exp()
}

/// One random small configuration with `p < n`, so `K` is singular as the
/// lower bounds require.
pub fn random_config(r: &mut ChaCha20Rng) -> ExperimentConfig {
    let n = r.random_range(MIN_STATE_DIM..=MAX_STATE_DIM);
    let h_variant = HVariant::ALL[r.random_range(0..4)];
    let p = if matches!(h_variant, HVariant::EveryNthPoint | HVariant::FivePointAverage) {
        let divisors: Vec<usize> = (1..n).filter(|d| n % d == 0).collect();
        divisors[r.random_range(0..divisors.len())]
    } else {
        r.random_range(1..n)
    };
    let window = [0, 0, 1, 2][r.random_range(0..4)];
    ExperimentConfig {
        n,
        radius: 1.0,
        m: r.random_range(2..n),
        p,
        beta_grid: BetaGrid::Auto,
        l0: log_uniform(r, 0.02, 0.6),
        lens: log_uniform(r, 0.02, 0.6),
        sigma2_b0: log_uniform(r, 0.25, 4.0),
        sigma2_pf: log_uniform(r, 0.25, 4.0),
        sigma2_r: log_uniform(r, 0.25, 4.0),
        h_variant,
        window,
        seeds: Seeds {
            ensemble: r.random(),
            placement: r.random(),
            rhs: r.random(),
        },
        preconditioned: false,
        figure_id: None,
    }
}

/// Weights for a trial: the unpreconditioned one stays below 1, the
/// preconditioned one hits the endpoints every few trials.
fn random_betas(r: &mut ChaCha20Rng, trial: usize) -> (f64, f64) {
    let beta = match trial % 10 {
        0 => 0.0,
        _ => r.random_range(0.0..0.99),
    };
    let prec = match trial % 10 {
        5 => 1.0,
        _ => beta,
    };
    (beta, prec)
}

fn run_trial(trial: usize, config: ExperimentConfig, betas: (f64, f64)) -> TrialOutcome {
    let mut outcome = TrialOutcome {
        trial,
        config,
        beta_unpreconditioned: betas.0,
        beta_preconditioned: betas.1,
        checks: 0,
        violations: Vec::new(),
        error: None,
    };
    let run = || -> Result<(usize, Vec<Violation>)> {
        let mut cfg = outcome.config.clone();
        cfg.preconditioned = true;
        let problem = Problem::build(&cfg)?;
        let unprec = problem.evaluate_unpreconditioned(betas.0)?;
        let prec = problem.evaluate_preconditioned(betas.1)?;
        let checks = 2 * (unprec.bounds.len() + prec.bounds.len());
        Ok((checks, [unprec.violations, prec.violations].concat()))
    };
    match run() {
        Ok((checks, violations)) => {
            outcome.checks = checks;
            outcome.violations = violations;
        }
        Err(e) => outcome.error = Some(format!("{}: {e}", e.kind())),
    }
    outcome
}

/// Draws `trials` configurations from `seed` and checks every bound on each.
pub fn run_sandwich_suite(trials: usize, seed: u64) -> ValidationReport {
    let mut r = rng::stream_rng(seed, rng::VALIDATION_STREAM);
    let drawn: Vec<_> = (0..trials)
        .map(|t| {
            let cfg = random_config(&mut r);
            (t, cfg, random_betas(&mut r, t))
        })
        .collect();
    let outcomes: Vec<TrialOutcome> = drawn
        .into_par_iter()
        .map(|(t, cfg, betas)| run_trial(t, cfg, betas))
        .collect();
    ValidationReport {
        trials,
        seed,
        checks: outcomes.iter().map(|o| o.checks).sum(),
        failed_trials: outcomes
            .into_iter()
            .filter(|o| !o.violations.is_empty() || o.error.is_some())
            .collect(),
    }
}
