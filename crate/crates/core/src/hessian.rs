//! Hessians of the linearised hybrid variational problem.
//!
//! Unpreconditioned: `S = B^{-1} + K` with `B = (1 - beta) B_0 + beta P_f`.
//! Preconditioned with the control variable transform `dx = U_h dv`,
//! `U_h = [sqrt(1 - beta) U, sqrt(beta) X_f]`: `S_P = I + U_h^T K U_h`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{check_weight, CovarianceMatrix, EnsembleFactor};
use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};

/// Below this `lambda_n(B) / lambda_1(B)` the background is treated as singular.
pub const SINGULARITY_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HessianProvenance {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_seed: Option<u64>,
    /// Largest eigenvalue of the observation term, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max_k: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HessianMatrix {
    data: DMatrix<f64>,
    preconditioned: bool,
    beta: f64,
    provenance: HessianProvenance,
}

impl HessianMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn preconditioned(&self) -> bool {
        self.preconditioned
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn provenance(&self) -> &HessianProvenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// `B^{-1}` through the eigendecomposition of `B`, refusing numerically
/// singular backgrounds.
pub fn background_inverse(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::ensure_symmetric(b)?;
    let eig = SymEigen::new(b);
    inverse_from_eigen(&eig)
}

pub(crate) fn inverse_from_eigen(eig: &SymEigen) -> Result<DMatrix<f64>> {
    let (top, bottom) = (eig.largest(), eig.smallest());
    let ratio = if top > 0.0 { bottom / top } else { f64::NEG_INFINITY };
    if !(ratio >= SINGULARITY_RATIO) {
        return Err(Error::NearSingularBackground { ratio });
    }
    Ok(eig.reconstruct_with(|v| 1.0 / v))
}

/// `S = B^{-1} + K`, symmetrised.
pub fn assemble_unpreconditioned(b: &CovarianceMatrix, k: &DMatrix<f64>) -> Result<HessianMatrix> {
    if k.shape() != (b.dim(), b.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}, background is {2}x{2}",
            k.nrows(),
            k.ncols(),
            b.dim()
        )));
    }
    let b_inv = background_inverse(b.data())?;
    Ok(HessianMatrix {
        data: linalg::symmetrize(&(b_inv + k)),
        preconditioned: false,
        beta: b.params().beta.unwrap_or(0.0),
        provenance: HessianProvenance {
            n: b.dim(),
            ensemble_size: b.params().ensemble_size,
            ensemble_seed: b.params().seed,
            lambda_max_k: None,
        },
    })
}

/// `U_h = [sqrt(1 - beta) U, sqrt(beta) X_f]`, n x (n + m).
#[derive(Debug, Clone)]
pub struct CvtFactor {
    data: DMatrix<f64>,
    beta: f64,
    n: usize,
    m: usize,
    u: DMatrix<f64>,
    x_f: DMatrix<f64>,
}

impl CvtFactor {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The static square root `U`, unweighted.
    pub fn static_root(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// The ensemble deviations `X_f`, unweighted.
    pub fn ensemble_block(&self) -> &DMatrix<f64> {
        &self.x_f
    }

    /// `U_h U_h^T`, which equals the hybrid background covariance.
    pub fn background(&self) -> DMatrix<f64> {
        linalg::symmetrize(&(&self.data * self.data.transpose()))
    }
}

pub fn assemble_cvt_factor(u: &DMatrix<f64>, x_f: &EnsembleFactor, beta: f64) -> Result<CvtFactor> {
    check_weight(beta)?;
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "U must be square, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    if x_f.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "X_f has {} rows, U is {n}x{n}",
            x_f.n()
        )));
    }
    let m = x_f.m();
    let mut data = DMatrix::zeros(n, n + m);
    data.columns_mut(0, n).copy_from(&(u * (1.0 - beta).sqrt()));
    data.columns_mut(n, m).copy_from(&(x_f.data() * beta.sqrt()));
    Ok(CvtFactor {
        data,
        beta,
        n,
        m,
        u: u.clone(),
        x_f: x_f.data().clone(),
    })
}

/// `S_P = I_{n+m} + U_h^T K U_h`. Defined for every `beta` in `[0, 1]`.
pub fn assemble_preconditioned(uh: &CvtFactor, k: &DMatrix<f64>) -> Result<HessianMatrix> {
    if k.shape() != (uh.n, uh.n) {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}, U_h has {} rows",
            k.nrows(),
            k.ncols(),
            uh.n
        )));
    }
    let dim = uh.n + uh.m;
    let ku = k * &uh.data;
    let inner = uh.data.transpose() * ku;
    let data = linalg::symmetrize(&(DMatrix::identity(dim, dim) + inner));
    Ok(HessianMatrix {
        data,
        preconditioned: true,
        beta: uh.beta,
        provenance: HessianProvenance {
            n: uh.n,
            ensemble_size: Some(uh.m),
            ensemble_seed: None,
            lambda_max_k: None,
        },
    })
}

/// Splits `U_h^T K U_h = A_1 + A_2` into its block-diagonal part
/// `A_1 = diag((1 - beta) U^T K U, beta X_f^T K X_f)` and off-diagonal part
/// `A_2` with blocks `sqrt(beta - beta^2) U^T K X_f` and its transpose.
pub fn split_a1_a2(uh: &CvtFactor, k: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if k.shape() != (uh.n, uh.n) {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}, U_h has {} rows",
            k.nrows(),
            k.ncols(),
            uh.n
        )));
    }
    let (n, m, beta) = (uh.n, uh.m, uh.beta);
    let u = uh.static_root();
    let x = uh.ensemble_block();
    let ku = k * u;
    let kx = k * x;
    let dim = n + m;

    let mut a1 = DMatrix::zeros(dim, dim);
    a1.view_mut((0, 0), (n, n))
        .copy_from(&(u.transpose() * &ku * (1.0 - beta)));
    a1.view_mut((n, n), (m, m))
        .copy_from(&(x.transpose() * &kx * beta));

    let cross = u.transpose() * &kx * (beta - beta * beta).max(0.0).sqrt();
    let mut a2 = DMatrix::zeros(dim, dim);
    a2.view_mut((0, n), (n, m)).copy_from(&cross);
    a2.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());

    Ok((linalg::symmetrize(&a1), a2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{
        build_static_b, ensemble_covariance, hybrid_b, sample_ensemble_factor, sym_sqrt,
        CovarianceKind, CovarianceParams, GridGeometry,
    };
    use crate::observation::{build_h, build_k, HVariant, ObservationSetup};
    use nalgebra::DVector;

    fn identity_background(n: usize) -> CovarianceMatrix {
        CovarianceMatrix::from_matrix(
            DMatrix::identity(n, n),
            CovarianceKind::Hybrid,
            CovarianceParams::default(),
        )
        .unwrap()
    }

    struct Small {
        b0: CovarianceMatrix,
        pf: CovarianceMatrix,
        u: DMatrix<f64>,
        x: EnsembleFactor,
        k: DMatrix<f64>,
    }

    fn small() -> Small {
        let g = GridGeometry::unit(12).unwrap();
        let b0 = build_static_b(&g, 0.4, 1.5).unwrap();
        let b1 = build_static_b(&g, 0.2, 0.8).unwrap();
        let x = sample_ensemble_factor(&b1, 4, 21).unwrap();
        let pf = ensemble_covariance(&x);
        let u = sym_sqrt(&b0).unwrap();
        let h = build_h(HVariant::RandomPlacement, 12, 5, Some(2)).unwrap();
        let k = build_k(&ObservationSetup::single_time(&h, 0.7).unwrap()).unwrap();
        Small { b0, pf, u, x, k }
    }

    #[test]
    fn identity_background_no_obs() {
        let s = assemble_unpreconditioned(&identity_background(4), &DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(s.data(), &DMatrix::identity(4, 4));
        assert!(!s.preconditioned());
    }

    #[test]
    fn identity_background_first_p() {
        let h = build_h(HVariant::RowsFirstP, 5, 2, None).unwrap();
        let k = build_k(&ObservationSetup::single_time(&h, 1.0).unwrap()).unwrap();
        let s = assemble_unpreconditioned(&identity_background(5), &k).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0, 1.0, 1.0]));
        assert!(linalg::relative_frobenius_error(s.data(), &expected) < 1e-15);
    }

    #[test]
    fn singular_background_rejected() {
        let sm = small();
        let b = hybrid_b(&sm.b0, &sm.pf, 1.0).unwrap();
        assert!(matches!(
            assemble_unpreconditioned(&b, &sm.k),
            Err(Error::NearSingularBackground { .. })
        ));
    }

    #[test]
    fn cvt_endpoints() {
        let sm = small();
        let uh0 = assemble_cvt_factor(&sm.u, &sm.x, 0.0).unwrap();
        assert_eq!(uh0.data().columns(0, 12).into_owned(), sm.u);
        assert!(uh0.data().columns(12, 4).iter().all(|&v| v == 0.0));
        let uh1 = assemble_cvt_factor(&sm.u, &sm.x, 1.0).unwrap();
        assert!(uh1.data().columns(0, 12).iter().all(|&v| v == 0.0));
        assert_eq!(&uh1.data().columns(12, 4).into_owned(), sm.x.data());
        assert!(matches!(
            assemble_cvt_factor(&sm.u, &sm.x, 1.01),
            Err(Error::WeightOutOfRange(_))
        ));
    }

    #[test]
    fn cvt_reproduces_hybrid_background() {
        let sm = small();
        for beta in [0.0, 0.3, 0.77, 1.0] {
            let uh = assemble_cvt_factor(&sm.u, &sm.x, beta).unwrap();
            let b = hybrid_b(&sm.b0, &sm.pf, beta).unwrap();
            assert!(linalg::relative_frobenius_error(&uh.background(), b.data()) < 1e-10);
        }
    }

    #[test]
    fn preconditioned_without_observations_is_identity() {
        let sm = small();
        let uh = assemble_cvt_factor(&sm.u, &sm.x, 0.4).unwrap();
        let sp = assemble_preconditioned(&uh, &DMatrix::zeros(12, 12)).unwrap();
        assert_eq!(sp.data(), &DMatrix::identity(16, 16));
        assert!(sp.preconditioned());
    }

    #[test]
    fn preconditioned_spectrum_starts_at_one() {
        let sm = small();
        for beta in [0.0, 0.5, 1.0] {
            let uh = assemble_cvt_factor(&sm.u, &sm.x, beta).unwrap();
            let sp = assemble_preconditioned(&uh, &sm.k).unwrap();
            let values = linalg::eigenvalues_desc(sp.data());
            let bottom = *values.last().unwrap();
            assert!((bottom - 1.0).abs() < 1e-8, "lambda_min = {bottom}");
        }
    }

    #[test]
    fn split_endpoints_have_no_cross_term() {
        let sm = small();
        for beta in [0.0, 1.0] {
            let uh = assemble_cvt_factor(&sm.u, &sm.x, beta).unwrap();
            let (_, a2) = split_a1_a2(&uh, &sm.k).unwrap();
            assert!(a2.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn split_sums_to_inner_product() {
        let sm = small();
        let uh = assemble_cvt_factor(&sm.u, &sm.x, 0.35).unwrap();
        let (a1, a2) = split_a1_a2(&uh, &sm.k).unwrap();
        let inner = uh.data().transpose() * &sm.k * uh.data();
        assert!(linalg::relative_frobenius_error(&(a1 + a2), &inner) < 1e-10);
    }
}
