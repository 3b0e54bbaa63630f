//! Linear observation operators and the observation term of the Hessian.
//!
//! Indexing convention: operators are described with 1-based row index
//! `i = 1..=p` and column index `j = 1..=n`; matrices are stored 0-based, so
//! 1-based column `j` lives at index `j - 1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum HVariant {
    /// Observes the first `p` grid points.
    RowsFirstP,
    /// Observes every `(n/p)`-th point: 1-based columns `(n/p) i`.
    EveryNthPoint,
    /// Five-point average centred on `(n/p) i`, wrapping modulo `n`.
    FivePointAverage,
    /// `p` distinct random points.
    RandomPlacement,
}

impl HVariant {
    pub const ALL: [HVariant; 4] = [
        HVariant::RowsFirstP,
        HVariant::EveryNthPoint,
        HVariant::FivePointAverage,
        HVariant::RandomPlacement,
    ];

    /// 1-based operator number used in figure labels.
    pub fn number(self) -> u8 {
        match self {
            HVariant::RowsFirstP => 1,
            HVariant::EveryNthPoint => 2,
            HVariant::FivePointAverage => 3,
            HVariant::RandomPlacement => 4,
        }
    }

    pub fn from_number(k: u8) -> Option<Self> {
        HVariant::ALL.get(usize::from(k).checked_sub(1)?).copied()
    }

    /// Every row selects exactly one grid point with unit weight.
    pub fn is_selection(self) -> bool {
        !matches!(self, HVariant::FivePointAverage)
    }
}

impl fmt::Display for HVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}", self.number())
    }
}

impl FromStr for HVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.trim_start_matches(['H', 'h']);
        if let Ok(k) = digits.parse::<u8>() {
            if let Some(v) = HVariant::from_number(k) {
                return Ok(v);
            }
        }
        match t {
            "RowsFirstP" | "first" => Ok(HVariant::RowsFirstP),
            "EveryNthPoint" | "every-nth" => Ok(HVariant::EveryNthPoint),
            "FivePointAverage" | "five-point" => Ok(HVariant::FivePointAverage),
            "RandomPlacement" | "random" => Ok(HVariant::RandomPlacement),
            _ => Err(Error::Config(format!("unknown observation operator {s:?}"))),
        }
    }
}

impl From<HVariant> for String {
    fn from(v: HVariant) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for HVariant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone)]
pub struct ObservationOperator {
    variant: HVariant,
    matrix: DMatrix<f64>,
    seed: Option<u64>,
}

impl ObservationOperator {
    pub fn variant(&self) -> HVariant {
        self.variant
    }

    /// The `p x n` matrix `H`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Builds `H` for the given variant. `seed` is only read by
/// [`HVariant::RandomPlacement`] (defaults to 0 when absent).
pub fn build_h(variant: HVariant, n: usize, p: usize, seed: Option<u64>) -> Result<ObservationOperator> {
    if p == 0 {
        return Err(Error::Config("need at least one observation".into()));
    }
    if p > n {
        return Err(Error::TooManyObservations { n, p });
    }
    let mut h = DMatrix::zeros(p, n);
    match variant {
        HVariant::RowsFirstP => {
            for i in 0..p {
                h[(i, i)] = 1.0;
            }
        }
        HVariant::EveryNthPoint => {
            let stride = stride(n, p)?;
            for i in 0..p {
                // 1-based column stride * (i + 1)
                h[(i, stride * (i + 1) - 1)] = 1.0;
            }
        }
        HVariant::FivePointAverage => {
            let stride = stride(n, p)?;
            if n < 5 {
                return Err(Error::IncompatibleObservationCount { n, p });
            }
            for i in 0..p {
                let centre = (stride * (i + 1)) as i64;
                for offset in -2..=2_i64 {
                    // 1-based column c maps to 0-based (c - 1) mod n, so that
                    // index 0 (mod n) is column n.
                    let col = (centre + offset - 1).rem_euclid(n as i64) as usize;
                    h[(i, col)] += 0.2;
                }
            }
        }
        HVariant::RandomPlacement => {
            let cols = random_columns(n, p, seed.unwrap_or(0));
            for (i, &c) in cols.iter().enumerate() {
                h[(i, c)] = 1.0;
            }
        }
    }
    let seed = match variant {
        HVariant::RandomPlacement => Some(seed.unwrap_or(0)),
        _ => None,
    };
    Ok(ObservationOperator {
        variant,
        matrix: h,
        seed,
    })
}

fn stride(n: usize, p: usize) -> Result<usize> {
    if !n.is_multiple_of(p) {
        return Err(Error::IncompatibleObservationCount { n, p });
    }
    Ok(n / p)
}

/// `p` distinct columns from a seeded partial Fisher-Yates shuffle.
fn random_columns(n: usize, p: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut stream = rng::stream_rng(seed, rng::PLACEMENT_STREAM);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..p {
        let j = stream.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(p);
    pool
}

/// `R = sigma2 * I_p`.
pub fn build_r(p: usize, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    Ok(DMatrix::identity(p, p) * sigma2)
}

/// One observation time: the operator `H_i` and its error covariance `R_i`.
#[derive(Debug, Clone)]
pub struct ObservationTime {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Linearised propagator `M_{i,0}`; `None` means the identity.
    pub propagator: Option<DMatrix<f64>>,
}

/// Observations over the window `i = 0..=N`.
#[derive(Debug, Clone)]
pub struct ObservationSetup {
    n: usize,
    times: Vec<ObservationTime>,
}

impl ObservationSetup {
    pub fn new(n: usize, times: Vec<ObservationTime>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::DimensionMismatch("need at least one observation time".into()));
        }
        for (i, t) in times.iter().enumerate() {
            if t.h.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "H_{i} has {} columns, state dimension is {n}",
                    t.h.ncols()
                )));
            }
            if t.r.nrows() != t.h.nrows() || t.r.ncols() != t.h.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "R_{i} is {}x{} but H_{i} has {} rows",
                    t.r.nrows(),
                    t.r.ncols(),
                    t.h.nrows()
                )));
            }
            linalg::ensure_symmetric(&t.r)?;
            if let Some(m) = &t.propagator {
                if m.shape() != (n, n) {
                    return Err(Error::DimensionMismatch(format!(
                        "M_{i},0 is {}x{}, expected {n}x{n}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
            }
        }
        Ok(ObservationSetup { n, times })
    }

    /// 3D case: one time, `H_0`, `R_0 = sigma2 I`.
    pub fn single_time(h: &ObservationOperator, sigma2_r: f64) -> Result<Self> {
        let r = build_r(h.p(), sigma2_r)?;
        Self::new(
            h.n(),
            vec![ObservationTime {
                h: h.matrix().clone(),
                r,
                propagator: None,
            }],
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observation times minus one.
    pub fn window_length(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[ObservationTime] {
        &self.times
    }

    /// Total observation count `p (N + 1)` (rows of the stacked operator).
    pub fn total_observations(&self) -> usize {
        self.times.iter().map(|t| t.h.nrows()).sum()
    }
}

/// `K = sum_i (H_i M_{i,0})^T R_i^{-1} (H_i M_{i,0})`.
pub fn build_k(setup: &ObservationSetup) -> Result<DMatrix<f64>> {
    let n = setup.n();
    let mut k = DMatrix::zeros(n, n);
    for (i, t) in setup.times().iter().enumerate() {
        let g = match &t.propagator {
            Some(m) => &t.h * m,
            None => t.h.clone(),
        };
        let chol = t.r.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!("observation error covariance R_{i}"))
        })?;
        let weighted = chol.solve(&g);
        k += g.transpose() * weighted;
    }
    Ok(linalg::symmetrize(&k))
}
