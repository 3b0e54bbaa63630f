//! Background error covariances on a periodic one-dimensional grid.
//!
//! Grid points sit uniformly on a circle of radius `r`. Correlations follow
//! the second-order auto-regressive (SOAR) function of the chordal distance
//!
//! ```text
//! rho_ij  = 2 r sin(theta_ij / 2) / L
//! D_L(ij) = (1 + rho_ij) exp(-rho_ij)
//! ```
//!
//! Note the decaying exponential: a growing `exp(+(1 + rho))` would give a
//! diagonal of `e` and correlations that increase with distance, which is not
//! a correlation matrix. The decaying form is the standard SOAR function.
//!
//! The ensemble covariance is `P_f = X_f X_f^T` (n x n) with `X_f` the n x m
//! matrix of scaled deviations from the ensemble mean, so that
//! `U_h U_h^T = (1 - beta) B_0 + beta P_f` holds dimensionally.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen, PSD_TOL};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    n: usize,
    radius: f64,
}

impl GridGeometry {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGeometry(format!("need n >= 2, got {n}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(GridGeometry { n, radius })
    }

    /// Unit circle with `n` points.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Shortest angular separation between points `i` and `j`.
    pub fn angle_between(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j) % self.n;
        let d = d.min(self.n - d);
        2.0 * PI * d as f64 / self.n as f64
    }

    pub fn chordal_distance(&self, i: usize, j: usize) -> f64 {
        2.0 * self.radius * (self.angle_between(i, j) / 2.0).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    Static,
    Ensemble,
    Hybrid,
}

/// Parameters a covariance was built from. Unset fields do not apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    data: DMatrix<f64>,
    kind: CovarianceKind,
    params: CovarianceParams,
}

impl CovarianceMatrix {
    /// Wraps an arbitrary matrix after checking squareness and symmetry.
    /// Positive semidefiniteness is checked lazily by [`check_invariants`].
    ///
    /// [`check_invariants`]: CovarianceMatrix::check_invariants
    pub fn from_matrix(
        data: DMatrix<f64>,
        kind: CovarianceKind,
        params: CovarianceParams,
    ) -> Result<Self> {
        linalg::ensure_symmetric(&data)?;
        Ok(CovarianceMatrix { data, kind, params })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn params(&self) -> &CovarianceParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Full check of the type invariants: symmetry, PSD within tolerance,
    /// strict definiteness for static matrices.
    pub fn check_invariants(&self) -> Result<()> {
        linalg::ensure_symmetric(&self.data)?;
        let values = linalg::eigenvalues_desc(&self.data);
        let (top, bottom) = (values[0], values[values.len() - 1]);
        if bottom < -PSD_TOL * top.abs() {
            return Err(Error::NotPositiveSemidefinite {
                lambda_min: bottom,
                lambda_max: top,
            });
        }
        if self.kind == CovarianceKind::Static && bottom <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "static covariance has lambda_min = {bottom:e}"
            )));
        }
        Ok(())
    }
}

/// SOAR correlation matrix `D_L` on `geom`.
pub fn build_soar(geom: &GridGeometry, length_scale: f64) -> Result<CovarianceMatrix> {
    if !(length_scale > 0.0) || !length_scale.is_finite() {
        return Err(Error::NonPositiveLengthScale(length_scale));
    }
    let n = geom.n();
    // Circulant: the entry depends only on the index offset.
    let offsets: Vec<f64> = (0..n)
        .map(|d| {
            let rho = geom.chordal_distance(0, d) / length_scale;
            (1.0 + rho) * (-rho).exp()
        })
        .collect();
    let data = DMatrix::from_fn(n, n, |i, j| offsets[i.abs_diff(j)]);
    Ok(CovarianceMatrix {
        data,
        kind: CovarianceKind::Static,
        params: CovarianceParams {
            length_scale: Some(length_scale),
            variance: Some(1.0),
            ..Default::default()
        },
    })
}

/// `sigma2 * D_L`: the static covariance `B_0`, or the sampling covariance `B_1`.
pub fn build_static_b(
    geom: &GridGeometry,
    length_scale: f64,
    variance: f64,
) -> Result<CovarianceMatrix> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::NonPositiveVariance(variance));
    }
    let mut b = build_soar(geom, length_scale)?;
    if variance != 1.0 {
        b.data *= variance;
    }
    b.params.variance = Some(variance);
    Ok(b)
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues within the
/// PSD tolerance below zero are clamped to zero first.
pub fn sym_sqrt(a: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    sym_sqrt_matrix(a.data())
}

pub fn sym_sqrt_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::ensure_symmetric(a)?;
    let eig = SymEigen::new(a);
    let (top, bottom) = (eig.largest(), eig.smallest());
    if bottom < -PSD_TOL * top.abs() {
        return Err(Error::NotPositiveSemidefinite {
            lambda_min: bottom,
            lambda_max: top,
        });
    }
    Ok(eig.reconstruct_with(|v| v.max(0.0).sqrt()))
}

/// Scaled ensemble deviations `X_f` (n x m).
#[derive(Debug, Clone)]
pub struct EnsembleFactor {
    data: DMatrix<f64>,
    seed: u64,
}

impl EnsembleFactor {
    /// Wraps a deviation matrix, enforcing `2 <= m < n` and zero row sums.
    pub fn from_matrix(data: DMatrix<f64>, seed: u64) -> Result<Self> {
        let (n, m) = data.shape();
        if m < 2 {
            return Err(Error::EnsembleTooSmall(m));
        }
        if m >= n {
            return Err(Error::EnsembleTooLarge { m, n });
        }
        let scale = linalg::max_abs(&data).max(1.0);
        for (i, row) in data.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s.abs() > 1e-10 * scale {
                return Err(Error::DegenerateInputs(format!(
                    "ensemble deviations must have zero mean; row {i} sums to {s:e}"
                )));
            }
        }
        Ok(EnsembleFactor { data, seed })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `m` members `x_k = B_1^{1/2} w_k` with `w_k ~ N(0, I)`, removes the
/// ensemble mean and scales by `1 / sqrt(m - 1)`.
pub fn sample_ensemble_factor(
    b1: &CovarianceMatrix,
    m: usize,
    seed: u64,
) -> Result<EnsembleFactor> {
    let root = sym_sqrt(b1)?;
    sample_ensemble_factor_with_root(&root, m, seed)
}

/// Same as [`sample_ensemble_factor`] with a precomputed square root of `B_1`.
pub fn sample_ensemble_factor_with_root(
    b1_root: &DMatrix<f64>,
    m: usize,
    seed: u64,
) -> Result<EnsembleFactor> {
    let n = b1_root.nrows();
    if m < 2 {
        return Err(Error::EnsembleTooSmall(m));
    }
    if m >= n {
        return Err(Error::EnsembleTooLarge { m, n });
    }
    let mut stream = rng::stream_rng(seed, rng::ENSEMBLE_STREAM);
    // Column k is w_k, filled in draw order.
    let noise = DMatrix::from_vec(n, m, rng::standard_normals(&mut stream, n * m));
    let mut members = b1_root * noise;
    for mut row in members.row_iter_mut() {
        let mean = row.iter().sum::<f64>() / m as f64;
        row.add_scalar_mut(-mean);
    }
    members /= ((m - 1) as f64).sqrt();
    Ok(EnsembleFactor {
        data: members,
        seed,
    })
}

/// `P_f = X_f X_f^T`.
pub fn ensemble_covariance(x: &EnsembleFactor) -> CovarianceMatrix {
    let data = linalg::symmetrize(&(x.data() * x.data().transpose()));
    CovarianceMatrix {
        data,
        kind: CovarianceKind::Ensemble,
        params: CovarianceParams {
            ensemble_size: Some(x.m()),
            seed: Some(x.seed()),
            ..Default::default()
        },
    }
}

pub fn check_weight(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::WeightOutOfRange(beta));
    }
    Ok(())
}

/// `B = (1 - beta) B_0 + beta P_f`.
pub fn hybrid_b(b0: &CovarianceMatrix, pf: &CovarianceMatrix, beta: f64) -> Result<CovarianceMatrix> {
    check_weight(beta)?;
    if b0.dim() != pf.dim() {
        return Err(Error::DimensionMismatch(format!(
            "B0 is {0}x{0} but Pf is {1}x{1}",
            b0.dim(),
            pf.dim()
        )));
    }
    let data = b0.data() * (1.0 - beta) + pf.data() * beta;
    Ok(CovarianceMatrix {
        data,
        kind: CovarianceKind::Hybrid,
        params: CovarianceParams {
            beta: Some(beta),
            ensemble_size: pf.params().ensemble_size,
            seed: pf.params().seed,
            ..Default::default()
        },
    })
}
