use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{self, GridGeometry};
use crate::error::{Error, Result};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::problem::{ensemble_lambda_max, Problem, SweepRecord};
use crate::linalg::SymEigen;
use crate::observation::HVariant;

/// Weight sweep over one configuration, records in grid order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub config: ExperimentConfig,
    pub lambda_max_b0: f64,
    pub lambda_min_b0: f64,
    pub lambda_max_pf: f64,
    pub lambda_max_k: f64,
    pub switch_point: f64,
    pub records: Vec<SweepRecord>,
}

impl Sweep {
    pub fn violation_count(&self) -> usize {
        self.records.iter().map(|r| r.violations.len()).sum()
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.kappa).collect()
    }
}

pub fn run_beta_sweep(config: &ExperimentConfig) -> Result<Sweep> {
    let problem = Problem::build(config)?;
    sweep_problem(&problem)
}

pub fn sweep_problem(problem: &Problem) -> Result<Sweep> {
    let records = problem
        .config
        .betas()
        .into_par_iter()
        .map(|beta| problem.evaluate(beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        config: problem.config.clone(),
        lambda_max_b0: problem.lambda_max_b0,
        lambda_min_b0: problem.lambda_min_b0,
        lambda_max_pf: problem.lambda_max_pf,
        lambda_max_k: problem.lambda_max_k,
        switch_point: problem.switch_point()?,
        records,
    })
}

/// The parameter varied across a family of sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    L0,
    Lens,
    Sigma2B0,
    Sigma2Pf,
    Sigma2R,
    HVariant,
    P,
    M,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::L0,
        Family::Lens,
        Family::Sigma2B0,
        Family::Sigma2Pf,
        Family::Sigma2R,
        Family::HVariant,
        Family::P,
        Family::M,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::L0 => "l0",
            Family::Lens => "lens",
            Family::Sigma2B0 => "sigma2_b0",
            Family::Sigma2Pf => "sigma2_pf",
            Family::Sigma2R => "sigma2_r",
            Family::HVariant => "h_variant",
            Family::P => "p",
            Family::M => "m",
        }
    }

    /// `config` with this parameter set to `value`. Operator variants are
    /// given by number, counts must be whole.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs a whole number, got {value}", self.name())))
            }
        };
        match self {
            Family::L0 => c.l0 = value,
            Family::Lens => c.lens = value,
            Family::Sigma2B0 => c.sigma2_b0 = value,
            Family::Sigma2Pf => c.sigma2_pf = value,
            Family::Sigma2R => c.sigma2_r = value,
            Family::HVariant => {
                c.h_variant = u8::try_from(count()?)
                    .ok()
                    .and_then(HVariant::from_number)
                    .ok_or_else(|| Error::Config(format!("no observation operator H{value}")))?
            }
            Family::P => c.p = count()?,
            Family::M => c.m = count()?,
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let key = match key.as_str() {
            "sigma_b0" => "sigma2_b0",
            "sigma_pf" => "sigma2_pf",
            "sigma_r" => "sigma2_r",
            "h" => "h_variant",
            k => k,
        };
        Family::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown parameter family {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyMember {
    pub value: f64,
    pub sweep: Sweep,
}

/// One sweep per value. Seeds come from `config` unchanged so only the
/// named parameter differs between members.
pub fn run_parameter_family(
    config: &ExperimentConfig,
    family: Family,
    values: &[f64],
) -> Result<Vec<FamilyMember>> {
    values
        .iter()
        .map(|&value| {
            let member = family.apply(config, value)?;
            Ok(FamilyMember {
                value,
                sweep: run_beta_sweep(&member)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenCurveRow {
    pub length_scale: f64,
    pub lambda_max_b0: f64,
    pub lambda_max_pf_mean: f64,
    /// Sample standard deviation across seeds (zero for a single seed).
    pub lambda_max_pf_std: f64,
    pub lambda_max_pf: Vec<f64>,
}

/// `lambda_1(B_0)` and `lambda_1(P_f)` with both length scales set to each
/// value of `lengths`; `P_f` is resampled with every seed in `seeds`.
pub fn run_eigen_vs_lengthscale(
    config: &ExperimentConfig,
    lengths: &[f64],
    seeds: &[u64],
) -> Result<Vec<EigenCurveRow>> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("need at least one ensemble seed".into()));
    }
    let geom = GridGeometry::new(config.n, config.radius)?;
    lengths
        .par_iter()
        .map(|&length| {
            let d = covariance::build_soar(&geom, length)?;
            let eig = SymEigen::new(d.data());
            let root = eig.reconstruct_with(|v| (config.sigma2_pf * v.max(0.0)).sqrt());
            let lambda_max_pf = seeds
                .iter()
                .map(|&seed| {
                    let x = covariance::sample_ensemble_factor_with_root(&root, config.m, seed)?;
                    Ok(ensemble_lambda_max(&x))
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = mean_std(&lambda_max_pf);
            Ok(EigenCurveRow {
                length_scale: length,
                lambda_max_b0: config.sigma2_b0 * eig.largest(),
                lambda_max_pf_mean: mean,
                lambda_max_pf_std: std,
                lambda_max_pf,
            })
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
