use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport, Bounded, Theorem};
use crate::covariance::{self, CovarianceMatrix, EnsembleFactor, GridGeometry};
use crate::error::{Error, Result};
use crate::experiments::config::ExperimentConfig;
use crate::hessian::{self, CvtFactor};
use crate::linalg::{self, SymEigen};
use crate::observation::{self, ObservationOperator, ObservationSetup, ObservationTime};

/// Everything about a configuration that does not depend on the weight.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub b0: CovarianceMatrix,
    pub ensemble: EnsembleFactor,
    pub pf: CovarianceMatrix,
    pub h: ObservationOperator,
    pub k: DMatrix<f64>,
    pub lambda_max_b0: f64,
    pub lambda_min_b0: f64,
    pub lambda_max_pf: f64,
    pub lambda_max_k: f64,
    /// Symmetric square root of `B_0`; present when the config is preconditioned.
    pub b0_root: Option<DMatrix<f64>>,
}

impl Problem {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geom = GridGeometry::new(config.n, config.radius)?;

        let b0 = covariance::build_static_b(&geom, config.l0, config.sigma2_b0)?;
        let b0_eig = SymEigen::new(b0.data());
        let b0_root = config
            .preconditioned
            .then(|| b0_eig.reconstruct_with(|v| v.max(0.0).sqrt()));

        let b1_root = if config.lens == config.l0 {
            let scale = (config.sigma2_pf / config.sigma2_b0).sqrt();
            match &b0_root {
                Some(root) => root * scale,
                None => b0_eig.reconstruct_with(|v| v.max(0.0).sqrt()) * scale,
            }
        } else {
            let b1 = covariance::build_static_b(&geom, config.lens, config.sigma2_pf)?;
            covariance::sym_sqrt(&b1)?
        };
        let ensemble =
            covariance::sample_ensemble_factor_with_root(&b1_root, config.m, config.seeds.ensemble)?;
        let pf = covariance::ensemble_covariance(&ensemble);
        let lambda_max_pf = ensemble_lambda_max(&ensemble);

        let h = observation::build_h(config.h_variant, config.n, config.p, Some(config.seeds.placement))?;
        let k = observation_term(&h, config.sigma2_r, config.window)?;
        let lambda_max_k = linalg::eigenvalues_desc(&k)[0];

        Ok(Problem {
            config: config.clone(),
            lambda_max_b0: b0_eig.largest(),
            lambda_min_b0: b0_eig.smallest(),
            b0,
            ensemble,
            pf,
            h,
            k,
            lambda_max_pf,
            lambda_max_k,
            b0_root,
        })
    }

    pub fn kappa_b0(&self) -> f64 {
        self.lambda_max_b0 / self.lambda_min_b0
    }

    pub fn switch_point(&self) -> Result<f64> {
        bounds::switch_point(self.lambda_max_b0, self.lambda_max_pf)
    }

    pub fn b0_root(&self) -> Result<DMatrix<f64>> {
        match &self.b0_root {
            Some(u) => Ok(u.clone()),
            None => covariance::sym_sqrt(&self.b0),
        }
    }

    pub fn cvt_factor(&self, beta: f64) -> Result<CvtFactor> {
        match &self.b0_root {
            Some(u) => hessian::assemble_cvt_factor(u, &self.ensemble, beta),
            None => hessian::assemble_cvt_factor(&self.b0_root()?, &self.ensemble, beta),
        }
    }

    pub fn evaluate(&self, beta: f64) -> Result<SweepRecord> {
        if self.config.preconditioned {
            self.evaluate_preconditioned(beta)
        } else {
            self.evaluate_unpreconditioned(beta)
        }
    }

    /// Exact spectrum of `B` and `S = B^{-1} + K` plus every bound on them.
    /// A numerically singular `B` gives a record with infinite condition
    /// numbers instead of an error.
    pub fn evaluate_unpreconditioned(&self, beta: f64) -> Result<SweepRecord> {
        let start = Instant::now();
        let b = covariance::hybrid_b(&self.b0, &self.pf, beta)?;
        let eig = SymEigen::new(b.data());
        let (l1_b, ln_b) = (eig.largest(), eig.smallest());

        let (s_summary, near_singular) = match hessian::inverse_from_eigen(&eig) {
            Ok(b_inv) => {
                let s = linalg::symmetrize(&(b_inv + &self.k));
                (bounds::spectral_summary(&s)?, false)
            }
            Err(Error::NearSingularBackground { .. }) => (
                bounds::SpectralSummary::from_extremes(f64::INFINITY, 0.0),
                true,
            ),
            Err(e) => return Err(e),
        };
        let kappa_b = if near_singular || ln_b <= 0.0 {
            f64::INFINITY
        } else {
            l1_b / ln_b
        };

        let (l1_b0, ln_b0, l1_pf, l1_k) =
            (self.lambda_max_b0, self.lambda_min_b0, self.lambda_max_pf, self.lambda_max_k);
        let (lemma1_top, lemma1_bottom) = bounds::bounds_lemma1(l1_b0, ln_b0, l1_pf, beta)?;
        let mut reports = vec![
            lemma1_top,
            lemma1_bottom,
            bounds::bounds_kappa_b(l1_b0, ln_b0, l1_pf, beta)?,
        ];
        reports.push(if kappa_b.is_finite() {
            bounds::bounds_thm3(kappa_b, l1_b, ln_b, l1_k)?
        } else {
            BoundReport::diverged(Theorem::Thm3, Bounded::KappaS, "lambda_n(B) = 0")
        });
        reports.push(bounds::bounds_thm4(l1_b0, ln_b0, self.kappa_b0(), l1_pf, l1_k, beta)?);
        if self.coro2_applies() {
            reports.push(bounds::bounds_coro2(
                l1_b0,
                ln_b0,
                self.kappa_b0(),
                l1_pf,
                self.config.sigma2_r,
                beta,
            )?);
        }

        let exact = Exact {
            kappa_s: s_summary.kappa,
            kappa_b,
            lambda_max_b: l1_b,
            lambda_min_b: ln_b,
        };
        let violations = exact.violations(&reports, beta);
        Ok(SweepRecord {
            beta,
            preconditioned: false,
            near_singular,
            kappa: s_summary.kappa,
            lambda_max: s_summary.lambda_max,
            lambda_min: s_summary.lambda_min,
            kappa_b: Some(kappa_b),
            lambda_max_b: Some(l1_b),
            lambda_min_b: Some(ln_b),
            bounds: reports,
            violations,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }

    /// Exact spectrum of `S_P = I + U_h^T K U_h` plus its bounds.
    pub fn evaluate_preconditioned(&self, beta: f64) -> Result<SweepRecord> {
        let start = Instant::now();
        let uh = self.cvt_factor(beta)?;
        let s = hessian::assemble_preconditioned(&uh, &self.k)?;
        let summary = bounds::spectral_summary(s.data())?;

        let (l1_b0, ln_b0, l1_pf, l1_k) =
            (self.lambda_max_b0, self.lambda_min_b0, self.lambda_max_pf, self.lambda_max_k);
        let reports = vec![
            bounds::bounds_thm5(l1_b0, ln_b0, l1_pf, l1_k, beta)?,
            bounds::bounds_thm6(l1_b0, l1_pf, l1_k, beta)?,
        ];
        let exact = Exact {
            kappa_s: summary.kappa,
            kappa_b: f64::NAN,
            lambda_max_b: f64::NAN,
            lambda_min_b: f64::NAN,
        };
        let violations = exact.violations(&reports, beta);
        Ok(SweepRecord {
            beta,
            preconditioned: true,
            near_singular: false,
            kappa: summary.kappa,
            lambda_max: summary.lambda_max,
            lambda_min: summary.lambda_min,
            kappa_b: None,
            lambda_max_b: None,
            lambda_min_b: None,
            bounds: reports,
            violations,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }

    /// The `sigma_R^{-2}` shortcut for `lambda_1(K)` needs one observation
    /// time and an operator whose rows each pick a single grid point.
    pub fn coro2_applies(&self) -> bool {
        self.config.window == 0 && self.config.h_variant.is_selection()
    }
}

/// `lambda_1(X X^T)` through the m x m Gram matrix `X^T X`.
pub fn ensemble_lambda_max(x: &EnsembleFactor) -> f64 {
    let gram = linalg::symmetrize(&(x.data().transpose() * x.data()));
    linalg::eigenvalues_desc(&gram)[0]
}

/// `K` for `window + 1` observation times sharing `H` and `R = sigma2 I`,
/// with identity propagators.
pub fn observation_term(h: &ObservationOperator, sigma2_r: f64, window: usize) -> Result<DMatrix<f64>> {
    let r = observation::build_r(h.p(), sigma2_r)?;
    let times = (0..=window)
        .map(|_| ObservationTime {
            h: h.matrix().clone(),
            r: r.clone(),
            propagator: None,
        })
        .collect();
    observation::build_k(&ObservationSetup::new(h.n(), times)?)
}

struct Exact {
    kappa_s: f64,
    kappa_b: f64,
    lambda_max_b: f64,
    lambda_min_b: f64,
}

impl Exact {
    fn violations(&self, reports: &[BoundReport], beta: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for r in reports {
            let (value, floor) = match r.quantity {
                Bounded::KappaS => (self.kappa_s, 0.0),
                Bounded::KappaB => (self.kappa_b, 0.0),
                // Computed eigenvalues carry absolute error of order
                // eps * lambda_1, which dominates near a zero eigenvalue.
                Bounded::LambdaMaxB | Bounded::LambdaMinB => {
                    let v = if r.quantity == Bounded::LambdaMaxB {
                        self.lambda_max_b
                    } else {
                        self.lambda_min_b
                    };
                    (v, linalg::PSD_TOL * self.lambda_max_b.abs())
                }
            };
            let slack = bounds::sandwich_slack(value);
            if !bounds::within(r.lower - floor, value, slack) {
                out.push(Violation::new(r, beta, value, Side::Lower));
            }
            if !bounds::within(value, r.upper + floor, slack) {
                out.push(Violation::new(r, beta, value, Side::Upper));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// A bound that failed to bracket the exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub theorem: Theorem,
    pub quantity: Bounded,
    pub side: Side,
    pub beta: f64,
    #[serde(with = "crate::sentinel::float")]
    pub bound: f64,
    #[serde(with = "crate::sentinel::float")]
    pub exact: f64,
}

impl Violation {
    fn new(r: &BoundReport, beta: f64, exact: f64, side: Side) -> Self {
        Violation {
            theorem: r.theorem,
            quantity: r.quantity,
            side,
            beta,
            bound: match side {
                Side::Lower => r.lower,
                Side::Upper => r.upper,
            },
            exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub beta: f64,
    pub preconditioned: bool,
    pub near_singular: bool,
    #[serde(with = "crate::sentinel::float")]
    pub kappa: f64,
    #[serde(with = "crate::sentinel::float")]
    pub lambda_max: f64,
    #[serde(with = "crate::sentinel::float")]
    pub lambda_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_min_b: Option<f64>,
    pub bounds: Vec<BoundReport>,
    pub violations: Vec<Violation>,
    /// Seconds spent on this weight.
    pub wall_time: f64,
}

impl SweepRecord {
    pub fn report(&self, theorem: Theorem) -> Option<&BoundReport> {
        self.bounds
            .iter()
            .find(|r| r.theorem == theorem && r.quantity == Bounded::KappaS)
            .or_else(|| self.bounds.iter().find(|r| r.theorem == theorem))
    }

    pub fn upper(&self, theorem: Theorem) -> Option<f64> {
        self.report(theorem).map(|r| r.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::BetaGrid;
    use crate::observation::HVariant;

    fn small(preconditioned: bool) -> ExperimentConfig {
        ExperimentConfig {
            n: 40,
            m: 8,
            p: 10,
            l0: 0.2,
            lens: 0.1,
            preconditioned,
            beta_grid: BetaGrid::Values(vec![0.0, 0.5, 1.0]),
            ..Default::default()
        }
    }

    #[test]
    fn beta_zero_matches_static_assembly() {
        let problem = Problem::build(&small(false)).unwrap();
        let rec = problem.evaluate(0.0).unwrap();
        let s = hessian::assemble_unpreconditioned(&problem.b0, &problem.k).unwrap();
        let kappa = bounds::spectral_summary(s.data()).unwrap().kappa;
        assert!((rec.kappa - kappa).abs() <= 1e-10 * kappa);
        assert!(rec.violations.is_empty(), "{:?}", rec.violations);
        let thm3 = rec.report(Theorem::Thm3).unwrap();
        assert!((rec.kappa_b.unwrap() - problem.kappa_b0()).abs() < 1e-8 * problem.kappa_b0());
        assert!(thm3.upper >= rec.kappa);
    }

    #[test]
    fn singular_background_yields_infinite_record() {
        let problem = Problem::build(&small(false)).unwrap();
        let rec = problem.evaluate(1.0).unwrap();
        assert!(rec.near_singular);
        assert_eq!(rec.kappa, f64::INFINITY);
        assert_eq!(rec.upper(Theorem::Thm4), Some(f64::INFINITY));
        assert!(rec.violations.is_empty(), "{:?}", rec.violations);
    }

    #[test]
    fn preconditioned_record_is_finite_at_one() {
        let problem = Problem::build(&small(true)).unwrap();
        for beta in [0.0, 0.5, 1.0] {
            let rec = problem.evaluate(beta).unwrap();
            assert!(rec.kappa.is_finite());
            assert!((rec.lambda_min - 1.0).abs() < 1e-8);
            assert!(rec.violations.is_empty(), "{:?}", rec.violations);
            let inner = rec.lambda_max - 1.0;
            assert!(rec.upper(Theorem::Thm6).unwrap() >= 1.0 + inner);
        }
    }

    #[test]
    fn coro2_only_for_selection_operators() {
        let mut cfg = small(false);
        assert!(Problem::build(&cfg).unwrap().coro2_applies());
        cfg.h_variant = HVariant::FivePointAverage;
        let problem = Problem::build(&cfg).unwrap();
        assert!(!problem.coro2_applies());
        assert!(problem.evaluate(0.3).unwrap().report(Theorem::Coro2).is_none());
    }

    #[test]
    fn gram_eigenvalue_matches_full_covariance() {
        let problem = Problem::build(&small(false)).unwrap();
        let full = linalg::eigenvalues_desc(problem.pf.data())[0];
        assert!((problem.lambda_max_pf - full).abs() < 1e-12 * full);
    }

    #[test]
    fn selection_operator_lambda_k() {
        let mut cfg = small(false);
        cfg.sigma2_r = 0.5;
        let problem = Problem::build(&cfg).unwrap();
        assert!((problem.lambda_max_k - 2.0).abs() < 1e-12);
        cfg.window = 2;
        assert!((Problem::build(&cfg).unwrap().lambda_max_k - 6.0).abs() < 1e-12);
    }
}
