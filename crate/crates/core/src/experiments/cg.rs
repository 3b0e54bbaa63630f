use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, Theorem};
use crate::covariance;
use crate::error::Result;
use crate::experiments::config::{linspace, BetaGrid, ExperimentConfig};
use crate::experiments::problem::Problem;
use crate::hessian;
use crate::solver::{self, CgSweepRow, RhsSpec, MAX_ITER_FACTOR};

pub const DEFAULT_CG_POINTS: usize = 20;

/// Weights for a CG study: the configured grid, or 20 points on the default
/// range when the grid is left automatic.
pub fn cg_betas(config: &ExperimentConfig) -> Vec<f64> {
    match config.beta_grid {
        BetaGrid::Auto if config.preconditioned => linspace(0.0, 1.0, DEFAULT_CG_POINTS),
        BetaGrid::Auto => linspace(0.0, 0.99, DEFAULT_CG_POINTS),
        _ => config.betas(),
    }
}

/// One CG solve per `(beta, tol)` on the configured Hessian form. The same
/// right-hand side vectors are used at every weight. Per-weight failures
/// end up in the `error` field of that weight's rows.
pub fn cg_sweep(config: &ExperimentConfig, betas: &[f64], tols: &[f64]) -> Result<Vec<CgSweepRow>> {
    let problem = Problem::build(config)?;
    let spec = RhsSpec::sample(config.n, config.p, config.seeds.rhs);
    let rows: Vec<Vec<CgSweepRow>> = betas
        .par_iter()
        .map(|&beta| cg_at_weight(&problem, &spec, beta, tols))
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn cg_at_weight(problem: &Problem, spec: &RhsSpec, beta: f64, tols: &[f64]) -> Vec<CgSweepRow> {
    let preconditioned = problem.config.preconditioned;
    let bound = if preconditioned { Theorem::Thm5 } else { Theorem::Thm4 };
    let row = |tol: f64| CgSweepRow {
        beta,
        tol,
        preconditioned,
        iterations: None,
        converged: false,
        kappa: f64::INFINITY,
        bound_upper: f64::NAN,
        bound,
        seed: spec.seed,
        error: None,
    };

    let (l1_b0, ln_b0, l1_pf, l1_k) = (
        problem.lambda_max_b0,
        problem.lambda_min_b0,
        problem.lambda_max_pf,
        problem.lambda_max_k,
    );
    let upper = if preconditioned {
        bounds::bounds_thm5(l1_b0, ln_b0, l1_pf, l1_k, beta)
    } else {
        bounds::bounds_thm4(l1_b0, ln_b0, problem.kappa_b0(), l1_pf, l1_k, beta)
    }
    .map(|r| r.upper);

    let system = upper.and_then(|upper| {
        let (s, rhs) = if preconditioned {
            let uh = problem.cvt_factor(beta)?;
            let s = hessian::assemble_preconditioned(&uh, &problem.k)?;
            let rhs = solver::build_rhs_preconditioned(&uh, problem.h.matrix(), spec)?;
            (s, rhs)
        } else {
            let b = covariance::hybrid_b(&problem.b0, &problem.pf, beta)?;
            let s = hessian::assemble_unpreconditioned(&b, &problem.k)?;
            let rhs = solver::build_rhs(&b, problem.h.matrix(), spec)?;
            (s, rhs)
        };
        let kappa = bounds::spectral_summary(s.data())?.kappa;
        Ok((s, rhs, kappa, upper))
    });

    let (s, rhs, kappa, upper) = match system {
        Ok(v) => v,
        Err(e) => {
            return tols
                .iter()
                .map(|&tol| CgSweepRow {
                    error: Some(e.kind().to_string()),
                    ..row(tol)
                })
                .collect()
        }
    };
    let max_iter = MAX_ITER_FACTOR * s.dim();
    tols.iter()
        .map(|&tol| {
            let base = CgSweepRow {
                kappa,
                bound_upper: upper,
                ..row(tol)
            };
            match solver::cg_solve(s.data(), &rhs, tol, max_iter) {
                Ok(res) => CgSweepRow {
                    iterations: Some(res.iterations),
                    converged: res.converged,
                    ..base
                },
                Err(e) => CgSweepRow {
                    error: Some(e.kind().to_string()),
                    ..base
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgStudy {
    pub unpreconditioned: Vec<CgSweepRow>,
    pub preconditioned: Vec<CgSweepRow>,
}

/// CG sweeps on both Hessian forms over the configured weights.
pub fn run_cg_study(config: &ExperimentConfig, tols: &[f64]) -> Result<CgStudy> {
    let mut unprec = config.clone();
    unprec.preconditioned = false;
    let mut prec = config.clone();
    prec.preconditioned = true;
    Ok(CgStudy {
        unpreconditioned: cg_sweep(&unprec, &cg_betas(&unprec), tols)?,
        preconditioned: cg_sweep(&prec, &cg_betas(&prec), tols)?,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Keeps the rows of `rows` solved at tolerance `tol`.
pub fn rows_at_tol(rows: &[CgSweepRow], tol: f64) -> Vec<&CgSweepRow> {
    rows.iter().filter(|r| r.tol == tol).collect()
}
