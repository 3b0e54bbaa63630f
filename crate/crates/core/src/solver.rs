//! Conjugate gradients on the dense Hessian systems of the convergence study.
//!
//! Plain CG from `x_0 = 0`: no restarts and no inner preconditioner. The
//! control variable transform enters only through the matrix handed in.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::hessian::{self, CvtFactor};
use crate::linalg::{self, SymEigen};
use crate::rng;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Iteration cap as a multiple of the system dimension.
pub const MAX_ITER_FACTOR: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub solution: DVector<f64>,
    /// Number of CG steps taken; equal to the index of the last residual.
    pub iterations: usize,
    /// `||b - S x_k|| / ||b||` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

/// Solves `S x = b` until the relative residual drops to `tol` or
/// `max_iter` steps have been taken. Running out of iterations is not an
/// error: the result comes back with `converged == false`.
pub fn cg_solve(s: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<CgResult> {
    linalg::ensure_square(s, "CG system matrix")?;
    if b.len() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, matrix is {}x{}",
            b.len(),
            s.nrows(),
            s.ncols()
        )));
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Err(Error::ZeroRightHandSide);
    }

    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut history = vec![1.0];
    let mut converged = false;

    for k in 1..=max_iter {
        let sp = s * &p;
        let curvature = p.dot(&sp);
        if !(curvature > 0.0) {
            return Err(Error::IndefiniteDetected {
                iteration: k,
                curvature,
            });
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &sp, 1.0);

        let true_residual = (b - s * &x).norm() / b_norm;
        history.push(true_residual);
        if true_residual <= tol {
            converged = true;
            break;
        }

        let rr_next = r.dot(&r);
        if rr_next == 0.0 {
            // No search direction left; the recursion has nothing more to give.
            break;
        }
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }

    Ok(CgResult {
        iterations: history.len() - 1,
        solution: x,
        residual_history: history,
        converged,
        tolerance: tol,
    })
}

/// Random vectors `x_b - x_0` (length n) and innovation `d` (length p),
/// drawn once per trial and reused across the weight sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsSpec {
    pub x_diff: DVector<f64>,
    pub d: DVector<f64>,
    pub seed: u64,
}

impl RhsSpec {
    pub fn sample(n: usize, p: usize, seed: u64) -> Self {
        let mut stream = rng::stream_rng(seed, rng::RHS_STREAM);
        let x_diff = DVector::from_vec(rng::standard_normals(&mut stream, n));
        let d = DVector::from_vec(rng::standard_normals(&mut stream, p));
        RhsSpec { x_diff, d, seed }
    }
}

fn check_rhs_shapes(n: usize, h0: &DMatrix<f64>, spec: &RhsSpec) -> Result<()> {
    if h0.ncols() != n || spec.x_diff.len() != n || spec.d.len() != h0.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "rhs: state dimension {n}, H0 is {}x{}, x_diff has {} entries, d has {}",
            h0.nrows(),
            h0.ncols(),
            spec.x_diff.len(),
            spec.d.len()
        )));
    }
    Ok(())
}

/// `b = B^{-1} (x_b - x_0) - H_0^T d`.
pub fn build_rhs(b: &CovarianceMatrix, h0: &DMatrix<f64>, spec: &RhsSpec) -> Result<DVector<f64>> {
    check_rhs_shapes(b.dim(), h0, spec)?;
    let b_inv = hessian::background_inverse(b.data())?;
    Ok(b_inv * &spec.x_diff - h0.transpose() * &spec.d)
}

/// Relative eigenvalue cutoff of the pseudo-inverse used for the
/// preconditioned right-hand side.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-12;

/// Right-hand side of the transformed system, `U_h^T b` with `b` as in
/// [`build_rhs`] and `B = U_h U_h^T`. When `B` is singular (`beta = 1`),
/// `B^{-1}` is replaced by the pseudo-inverse, i.e. `U_h^T B^+ (x_b - x_0)`
/// is the minimum-norm control increment reproducing the projected state
/// increment; for non-singular `B` the two agree exactly.
pub fn build_rhs_preconditioned(uh: &CvtFactor, h0: &DMatrix<f64>, spec: &RhsSpec) -> Result<DVector<f64>> {
    check_rhs_shapes(uh.n(), h0, spec)?;
    let eig = SymEigen::new(&uh.background());
    let cutoff = PSEUDO_INVERSE_CUTOFF * eig.largest();
    let coeffs = eig.vectors.transpose() * &spec.x_diff;
    let scaled = DVector::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(eig.values.iter())
            .map(|(c, &l)| if l > cutoff { c / l } else { 0.0 }),
    );
    let state = &eig.vectors * scaled - h0.transpose() * &spec.d;
    Ok(uh.data().transpose() * state)
}

/// One row of a CG sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgSweepRow {
    pub beta: f64,
    pub tol: f64,
    pub preconditioned: bool,
    pub iterations: Option<usize>,
    pub converged: bool,
    #[serde(with = "crate::sentinel::float")]
    pub kappa: f64,
    #[serde(with = "crate::sentinel::float")]
    pub bound_upper: f64,
    pub bound: crate::bounds::Theorem,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub use crate::experiments::cg::cg_sweep;
