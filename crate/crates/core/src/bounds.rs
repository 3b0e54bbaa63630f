//! Exact condition numbers and the analytic bounds on them.
//!
//! Every bound here is a scalar formula in precomputed extreme eigenvalues;
//! none of them touches a matrix. Intermediate quantities are kept in
//! [`BoundReport::terms`] under fixed names so a report can be audited
//! without re-deriving anything:
//!
//! | name               | meaning                                   |
//! |--------------------|-------------------------------------------|
//! | `Gamma_lambda_n_B` | upper bound on `lambda_n(B)`              |
//! | `gamma_kappa_B`    | lower bound on `kappa(B)`                 |
//! | `Gamma_kappa_B`    | upper bound on `kappa(B)`                 |
//!
//! Diverging bounds (the unpreconditioned family at `beta = 1`) are reported
//! as `+inf` with the vanishing denominator named in [`BoundReport::divergence`].

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PSD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    #[serde(with = "crate::sentinel::float")]
    pub lambda_max: f64,
    #[serde(with = "crate::sentinel::float")]
    pub lambda_min: f64,
    /// `lambda_max / lambda_min`, `+inf` when `lambda_min <= 0`.
    #[serde(with = "crate::sentinel::float")]
    pub kappa: f64,
    pub method: SpectralMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    FullEigensolve,
}

impl SpectralSummary {
    pub fn from_extremes(lambda_max: f64, lambda_min: f64) -> Self {
        let kappa = if lambda_min <= 0.0 {
            f64::INFINITY
        } else {
            lambda_max / lambda_min
        };
        SpectralSummary {
            lambda_max,
            lambda_min,
            kappa,
            method: SpectralMethod::FullEigensolve,
        }
    }
}

/// Extreme eigenvalues and condition number by a full symmetric eigensolve.
pub fn spectral_summary(a: &DMatrix<f64>) -> Result<SpectralSummary> {
    linalg::ensure_symmetric(a)?;
    let values = linalg::eigenvalues_desc(a);
    Ok(SpectralSummary::from_extremes(values[0], values[values.len() - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Extreme eigenvalues of the hybrid covariance.
    Lemma1,
    /// Condition number of the hybrid covariance.
    Lemma2,
    /// Unpreconditioned Hessian in terms of the spectrum of `B` itself.
    Thm3,
    /// Unpreconditioned Hessian in terms of `B_0`, `P_f` and `beta`.
    Thm4,
    /// The `B_0`, `P_f`, `beta` form specialised to selection operators with `R = sigma^2 I`.
    Coro2,
    /// Preconditioned Hessian, split into block-diagonal and cross terms.
    Thm5,
    /// Preconditioned Hessian, direct product inequality.
    Thm6,
}

impl Theorem {
    pub fn tag(self) -> &'static str {
        match self {
            Theorem::Lemma1 => "lemma1",
            Theorem::Lemma2 => "lemma2",
            Theorem::Thm3 => "thm3",
            Theorem::Thm4 => "thm4",
            Theorem::Coro2 => "coro2",
            Theorem::Thm5 => "thm5",
            Theorem::Thm6 => "thm6",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Which quantity a report brackets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bounded {
    KappaS,
    KappaB,
    LambdaMaxB,
    LambdaMinB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub quantity: Bounded,
    #[serde(with = "crate::sentinel::float")]
    pub lower: f64,
    #[serde(with = "crate::sentinel::float")]
    pub upper: f64,
    #[serde(with = "crate::sentinel::float_map")]
    pub terms: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<String>,
}

impl BoundReport {
    fn new(theorem: Theorem, quantity: Bounded, lower: f64, upper: f64) -> Self {
        BoundReport {
            theorem,
            quantity,
            lower,
            upper,
            terms: BTreeMap::new(),
            divergence: None,
        }
    }

    fn term(mut self, name: &str, value: f64) -> Self {
        self.terms.insert(name.to_string(), value);
        self
    }

    /// Report for a bounded quantity that is itself infinite.
    pub fn diverged(theorem: Theorem, quantity: Bounded, reason: &str) -> Self {
        let mut r = BoundReport::new(theorem, quantity, f64::INFINITY, f64::INFINITY);
        r.divergence = Some(reason.to_string());
        r
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }

    /// `lower <= value <= upper` up to relative `slack`.
    pub fn brackets(&self, value: f64, slack: f64) -> bool {
        within(self.lower, value, slack) && within(value, self.upper, slack)
    }
}

/// Relative slack for sandwich assertions on a condition number of size `kappa`.
pub fn sandwich_slack(kappa: f64) -> f64 {
    if kappa > 1e10 {
        1e-6
    } else {
        1e-9
    }
}

/// `a <= b` up to relative slack (exact comparison for infinities).
pub fn within(a: f64, b: f64, slack: f64) -> bool {
    if a <= b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    a - b <= slack * a.abs().max(b.abs())
}

fn check_extremes(l1: f64, ln: f64, what: &str) -> Result<()> {
    if !(l1 >= ln && ln > 0.0) {
        return Err(Error::DegenerateInputs(format!(
            "need lambda_1({what}) >= lambda_n({what}) > 0, got {l1} and {ln}"
        )));
    }
    Ok(())
}

fn check_nonnegative(v: f64, what: &str) -> Result<()> {
    if !(v >= 0.0) {
        return Err(Error::DegenerateInputs(format!("{what} must be >= 0, got {v}")));
    }
    Ok(())
}

/// Terms shared by the `kappa(B)` bounds and the `B_0`, `P_f`, `beta` Hessian bounds.
#[derive(Debug, Clone, Copy)]
struct HybridRatio {
    /// `beta lambda_1(P_f) / ((1 - beta) lambda_1(B_0))`
    ratio: f64,
    kappa_b0: f64,
    gamma_kappa_b: f64,
    big_gamma_kappa_b: f64,
    diverges: bool,
}

impl HybridRatio {
    fn new(l1_b0: f64, kappa_b0: f64, l1_pf: f64, beta: f64) -> Self {
        let ensemble = beta * l1_pf;
        let static_part = (1.0 - beta) * l1_b0;
        let (ratio, diverges) = if static_part == 0.0 {
            if ensemble == 0.0 {
                (0.0, true)
            } else {
                (f64::INFINITY, true)
            }
        } else {
            (ensemble / static_part, false)
        };
        let t = 1.0 / kappa_b0 + ratio;
        let (gamma_kappa_b, big_gamma_kappa_b) = if diverges {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (t.max(1.0 / t), kappa_b0 * (1.0 + ratio))
        };
        HybridRatio {
            ratio,
            kappa_b0,
            gamma_kappa_b,
            big_gamma_kappa_b,
            diverges,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::WeightOutOfRange(beta));
    }
    Ok(())
}

const DIVERGENCE_NOTE: &str = "(1 - beta) * lambda_1(B0) = 0";

/// Bounds on the extreme eigenvalues of `B = (1 - beta) B_0 + beta P_f`
/// for rank-deficient `P_f`: `(lambda_1 report, lambda_n report)`.
pub fn bounds_lemma1(l1_b0: f64, ln_b0: f64, l1_pf: f64, beta: f64) -> Result<(BoundReport, BoundReport)> {
    check_extremes(l1_b0, ln_b0, "B0")?;
    check_nonnegative(l1_pf, "lambda_1(Pf)")?;
    check_beta(beta)?;
    let static_top = (1.0 - beta) * l1_b0;
    let mixed = beta * l1_pf + (1.0 - beta) * ln_b0;
    let top = BoundReport::new(
        Theorem::Lemma1,
        Bounded::LambdaMaxB,
        static_top.max(mixed),
        static_top + beta * l1_pf,
    );
    let bottom = BoundReport::new(
        Theorem::Lemma1,
        Bounded::LambdaMinB,
        (1.0 - beta) * ln_b0,
        static_top.min(mixed),
    );
    let tag = |r: BoundReport| {
        r.term("lambda_1_B0", l1_b0)
            .term("lambda_n_B0", ln_b0)
            .term("lambda_1_Pf", l1_pf)
            .term("beta", beta)
    };
    Ok((tag(top), tag(bottom)))
}

/// Bounds on `kappa(B)`.
pub fn bounds_kappa_b(l1_b0: f64, ln_b0: f64, l1_pf: f64, beta: f64) -> Result<BoundReport> {
    check_extremes(l1_b0, ln_b0, "B0")?;
    check_nonnegative(l1_pf, "lambda_1(Pf)")?;
    check_beta(beta)?;
    let h = HybridRatio::new(l1_b0, l1_b0 / ln_b0, l1_pf, beta);
    let mut report = BoundReport::new(
        Theorem::Lemma2,
        Bounded::KappaB,
        h.gamma_kappa_b,
        h.big_gamma_kappa_b,
    )
    .term("kappa_B0", h.kappa_b0)
    .term("ensemble_ratio", h.ratio)
    .term("gamma_kappa_B", h.gamma_kappa_b)
    .term("Gamma_kappa_B", h.big_gamma_kappa_b)
    .term("lambda_1_B0", l1_b0)
    .term("lambda_n_B0", ln_b0)
    .term("lambda_1_Pf", l1_pf)
    .term("beta", beta);
    if h.diverges {
        report.divergence = Some(DIVERGENCE_NOTE.into());
    }
    Ok(report)
}

/// Bounds on `kappa(S)` from the exact spectrum of `B` and `lambda_1(K)`.
/// The lower bound assumes `K` is singular (fewer observations than states).
pub fn bounds_thm3(kappa_b: f64, l1_b: f64, ln_b: f64, l1_k: f64) -> Result<BoundReport> {
    check_extremes(l1_b, ln_b, "B")?;
    check_nonnegative(l1_k, "lambda_1(K)")?;
    let growth = 1.0 + l1_b * l1_k;
    let lower = (kappa_b / growth).max(growth / kappa_b);
    let upper = (1.0 + ln_b * l1_k) * kappa_b;
    Ok(BoundReport::new(Theorem::Thm3, Bounded::KappaS, lower, upper)
        .term("kappa_B", kappa_b)
        .term("lambda_1_B", l1_b)
        .term("lambda_n_B", ln_b)
        .term("lambda_1_K", l1_k))
}

/// Bounds on `kappa(S)` in terms of `B_0`, `P_f` and `beta` only.
pub fn bounds_thm4(
    l1_b0: f64,
    ln_b0: f64,
    kappa_b0: f64,
    l1_pf: f64,
    l1_k: f64,
    beta: f64,
) -> Result<BoundReport> {
    check_extremes(l1_b0, ln_b0, "B0")?;
    check_nonnegative(l1_pf, "lambda_1(Pf)")?;
    check_nonnegative(l1_k, "lambda_1(K)")?;
    check_beta(beta)?;
    let h = HybridRatio::new(l1_b0, kappa_b0, l1_pf, beta);
    let gamma_ln_b = ((1.0 - beta) * ln_b0 + beta * l1_pf).min((1.0 - beta) * l1_b0);
    let first = 1.0 / h.big_gamma_kappa_b + (1.0 - beta) * ln_b0 * l1_k;
    let second = 1.0 / (1.0 / h.gamma_kappa_b + gamma_ln_b * l1_k);
    let lower = first.max(second).max(1.0);
    let lambda_1_b_upper = (1.0 - beta) * l1_b0 + beta * l1_pf;
    let upper = h.big_gamma_kappa_b + lambda_1_b_upper * l1_k;
    let mut report = BoundReport::new(Theorem::Thm4, Bounded::KappaS, lower, upper)
        .term("Gamma_lambda_n_B", gamma_ln_b)
        .term("gamma_kappa_B", h.gamma_kappa_b)
        .term("Gamma_kappa_B", h.big_gamma_kappa_b)
        .term("Gamma_lambda_1_B", lambda_1_b_upper)
        .term("lambda_1_B0", l1_b0)
        .term("lambda_n_B0", ln_b0)
        .term("kappa_B0", kappa_b0)
        .term("lambda_1_Pf", l1_pf)
        .term("lambda_1_K", l1_k)
        .term("beta", beta);
    if h.diverges {
        report.divergence = Some(DIVERGENCE_NOTE.into());
    }
    Ok(report)
}

/// `bounds_thm4` with `lambda_1(K) = 1 / sigma_R^2`, valid when every row of
/// `H_0` selects one grid point and `R_0 = sigma_R^2 I`.
pub fn bounds_coro2(
    l1_b0: f64,
    ln_b0: f64,
    kappa_b0: f64,
    l1_pf: f64,
    sigma2_r: f64,
    beta: f64,
) -> Result<BoundReport> {
    if !(sigma2_r > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2_r));
    }
    let mut report = bounds_thm4(l1_b0, ln_b0, kappa_b0, l1_pf, 1.0 / sigma2_r, beta)?;
    report.theorem = Theorem::Coro2;
    report.terms.insert("sigma2_R".into(), sigma2_r);
    Ok(report)
}

/// Bounds on `kappa(S_P)` from the block split of `U_h^T K U_h`, using
/// `lambda_1(K^2) = lambda_1(K)^2` for symmetric PSD `K`.
pub fn bounds_thm5(l1_b0: f64, ln_b0: f64, l1_pf: f64, l1_k: f64, beta: f64) -> Result<BoundReport> {
    check_extremes(l1_b0, ln_b0, "B0")?;
    check_nonnegative(l1_pf, "lambda_1(Pf)")?;
    check_nonnegative(l1_k, "lambda_1(K)")?;
    check_beta(beta)?;
    let l1_k2 = l1_k * l1_k;
    let mix = (beta - beta * beta).max(0.0);
    let static_term = (1.0 - beta) * l1_b0 * l1_k;
    let ensemble_term = beta * l1_pf * l1_k;
    let cross_upper = (mix * l1_b0 * l1_pf * l1_k2).sqrt();
    let cross_lower = (mix * ln_b0 * l1_pf * l1_k2).sqrt();
    let upper = 1.0 + cross_upper + static_term.max(ensemble_term);
    let lower = 1.0 + ((1.0 - beta) * l1_k * ln_b0).max(cross_lower);
    Ok(BoundReport::new(Theorem::Thm5, Bounded::KappaS, lower, upper)
        .term("static_term", static_term)
        .term("ensemble_term", ensemble_term)
        .term("cross_term_upper", cross_upper)
        .term("cross_term_lower", cross_lower)
        .term("lambda_1_K2", l1_k2)
        .term("lambda_1_B0", l1_b0)
        .term("lambda_n_B0", ln_b0)
        .term("lambda_1_Pf", l1_pf)
        .term("lambda_1_K", l1_k)
        .term("beta", beta))
}

/// Bounds on `kappa(S_P)` from `lambda_1(B K) <= lambda_1(B) lambda_1(K)`.
pub fn bounds_thm6(l1_b0: f64, l1_pf: f64, l1_k: f64, beta: f64) -> Result<BoundReport> {
    check_nonnegative(l1_b0, "lambda_1(B0)")?;
    check_nonnegative(l1_pf, "lambda_1(Pf)")?;
    check_nonnegative(l1_k, "lambda_1(K)")?;
    check_beta(beta)?;
    let upper = 1.0 + ((1.0 - beta) * l1_b0 + beta * l1_pf) * l1_k;
    Ok(BoundReport::new(Theorem::Thm6, Bounded::KappaS, 1.0, upper)
        .term("lambda_1_B0", l1_b0)
        .term("lambda_1_Pf", l1_pf)
        .term("lambda_1_K", l1_k)
        .term("beta", beta))
}

/// The weight `beta*` solving `(1 - beta) lambda_1(B_0) = beta lambda_1(P_f)`,
/// where the max term of the `bounds_thm5` upper bound changes branch.
pub fn switch_point(l1_b0: f64, l1_pf: f64) -> Result<f64> {
    if !(l1_b0 >= 0.0 && l1_pf >= 0.0) || l1_b0 + l1_pf == 0.0 {
        return Err(Error::DegenerateInputs(format!(
            "switch point needs non-negative, not both zero eigenvalues; got {l1_b0}, {l1_pf}"
        )));
    }
    Ok(l1_b0 / (l1_b0 + l1_pf))
}

/// Weyl's inequality for every `k`:
/// `lambda_k(A1) + lambda_n(A2) <= lambda_k(A1 + A2) <= lambda_k(A1) + lambda_1(A2)`.
pub fn check_weyl(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Result<bool> {
    linalg::ensure_symmetric(a1)?;
    linalg::ensure_symmetric(a2)?;
    if a1.shape() != a2.shape() {
        return Err(Error::DimensionMismatch("Weyl check needs equal shapes".into()));
    }
    let e1 = linalg::eigenvalues_desc(a1);
    let e2 = linalg::eigenvalues_desc(a2);
    let es = linalg::eigenvalues_desc(&(a1 + a2));
    let (top2, bottom2) = (e2[0], e2[e2.len() - 1]);
    let scale = e1.iter().chain(&e2).fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    Ok(e1
        .iter()
        .zip(&es)
        .all(|(l1, ls)| l1 + bottom2 <= ls + tol && *ls <= l1 + top2 + tol))
}

/// Product inequality for PSD matrices:
/// `max[l1(A1) ln(A2), ln(A1) l1(A2)] <= l1(A1 A2) <= l1(A1) l1(A2)`,
/// within `1e-10` relative slack.
pub fn check_product_inequality(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Result<bool> {
    linalg::ensure_symmetric(a1)?;
    linalg::ensure_symmetric(a2)?;
    if a1.shape() != a2.shape() {
        return Err(Error::DimensionMismatch("product check needs equal shapes".into()));
    }
    let e1 = linalg::eigenvalues_desc(a1);
    let e2 = linalg::eigenvalues_desc(a2);
    for e in [&e1, &e2] {
        let (top, bottom) = (e[0], e[e.len() - 1]);
        if bottom < -PSD_TOL * top.abs() {
            return Err(Error::NotPositiveSemidefinite {
                lambda_min: bottom,
                lambda_max: top,
            });
        }
    }
    let root = crate::covariance::sym_sqrt_matrix(a1)?;
    let clamp = |v: f64| v.max(0.0);
    let (l1a, lna) = (clamp(e1[0]), clamp(e1[e1.len() - 1]));
    let (l1b, lnb) = (clamp(e2[0]), clamp(e2[e2.len() - 1]));
    // A1 A2 is similar to A1^{1/2} A2 A1^{1/2}, which is symmetric PSD.
    let similar = linalg::symmetrize(&(&root * a2 * &root));
    let prod = linalg::eigenvalues_desc(&similar)[0];
    let lower = (l1a * lnb).max(lna * l1b);
    let upper = l1a * l1b;
    let abs_tol = 1e-12 * upper.max(1.0);
    Ok((within(lower, prod, 1e-10) || lower - prod <= abs_tol)
        && (within(prod, upper, 1e-10) || prod - upper <= abs_tol))
}
