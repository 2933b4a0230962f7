//! Case B: the PU band is known, its spectrum shape is not.
//!
//! The per-carrier periodogram minus its known contributions,
//! `Z(q) = (1/N) Σ_n |Y_q(n)|² − (1/N) Σ_n |Ĥ_q(n)|² − σ̂²`, is modeled over the
//! band as `Hμ` plus white noise, with `H` spanning low-order power
//! profiles. The matched-subspace statistic
//!
//! `T_B = [(B − r − 1)/(r + 1)] · zᵀP_H z / zᵀ(I − P_H)z`
//!
//! is `F(r+1, B−r−1)` under noise only, whatever the noise scale.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::{f_upper_quantile, noncentral_f_sf};
use crate::ofdm::ObservationBlock;
use crate::{Result, SenseError};

/// Relative size of `zᵀ(I − P_H)z` below which `z` counts as lying in span(H).
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `h_i(n) = nⁱ`, `n = 0..B−1`.
    Monomial,
    Custom,
}

/// Signal subspace spanned by the columns of `H` (`B × (r+1)`).
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    basis: DMatrix<f64>,
    /// Orthonormal basis of the same column space.
    orthonormal: DMatrix<f64>,
    kind: BasisKind,
}

impl SubspaceModel {
    /// Monomial profiles of order `r` over `width` carriers.
    pub fn monomial(width: usize, order: usize) -> Result<Self> {
        let h = DMatrix::from_fn(width, order + 1, |n, i| (n as f64).powi(i as i32));
        Self::build(h, BasisKind::Monomial)
    }

    pub fn custom(basis: DMatrix<f64>) -> Result<Self> {
        Self::build(basis, BasisKind::Custom)
    }

    fn build(basis: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        let (b, cols) = basis.shape();
        if cols == 0 || cols + 1 > b {
            return Err(SenseError::config(format!(
                "a {b}-carrier band supports at most {} basis vectors, got {cols}",
                b.saturating_sub(1)
            )));
        }
        if basis.iter().any(|x| !x.is_finite()) {
            return Err(SenseError::config("basis entries must be finite"));
        }
        // Column-scaled Gram-Schmidt through QR. Scaling first keeps nⁱ columns comparable.
        let scaled = DMatrix::from_fn(b, cols, |i, j| {
            let norm = basis.column(j).norm();
            if norm > 0.0 {
                basis[(i, j)] / norm
            } else {
                0.0
            }
        });
        let qr = scaled.qr();
        let r = qr.r();
        let max_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..cols {
            if !(r[(i, i)].abs() > 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
                return Err(SenseError::config("basis is not of full column rank"));
            }
        }
        let orthonormal = qr.q();
        Ok(Self {
            basis,
            orthonormal,
            kind,
        })
    }

    /// Number of band carriers `B`.
    pub fn width(&self) -> usize {
        self.basis.nrows()
    }

    /// Polynomial order `r` (columns minus one).
    pub fn order(&self) -> usize {
        self.basis.ncols() - 1
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Degrees of freedom `(r + 1, B − r − 1)` of the null distribution.
    pub fn dof(&self) -> (usize, usize) {
        (self.order() + 1, self.width() - self.order() - 1)
    }

    /// `P_H z`.
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.orthonormal * (self.orthonormal.transpose() * z)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for row in self.basis.row_iter() {
            w.write_record(row.iter().map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a basis written by [`write_csv`](Self::write_csv) as a custom model.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| SenseError::config(format!("basis CSV: {e}")))?;
            rows.push(row);
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
            return Err(SenseError::config("basis CSV must be a rectangular matrix"));
        }
        Self::custom(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }
}

/// Mean-subtracted periodogram over a band.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyObservation {
    pub band: (usize, usize),
    pub z: DVector<f64>,
    /// Raw periodogram `Z̄(q)`.
    pub zbar: DVector<f64>,
    /// Subtracted means `m(q)`.
    pub m: DVector<f64>,
}

/// Builds `Z(q) = Z̄(q) − m(q)` over `band`.
///
/// `h_est` holds channel estimates `Ĥ_q(n)` for all carriers (`Q × N`);
/// pass `None` when the cognitive system is silent.
pub fn build_observation(
    obs: &ObservationBlock,
    band: (usize, usize),
    h_est: Option<&DMatrix<Complex64>>,
    noise_var_est: f64,
) -> Result<FrequencyObservation> {
    let (q_count, n_count) = obs.y.shape();
    if band.0 > band.1 || band.1 >= q_count {
        return Err(SenseError::config(format!(
            "band {band:?} outside [0, {}]",
            q_count - 1
        )));
    }
    if let Some(h) = h_est {
        if h.shape() != (q_count, n_count) {
            return Err(SenseError::config(format!(
                "channel estimate is {:?}, expected ({q_count}, {n_count})",
                h.shape()
            )));
        }
    }
    if !(noise_var_est >= 0.0 && noise_var_est.is_finite()) {
        return Err(SenseError::domain(
            "noise variance estimate must be finite and >= 0",
        ));
    }
    let width = band.1 - band.0 + 1;
    let n = n_count as f64;
    let zbar = DVector::from_fn(width, |b, _| {
        obs.y
            .row(band.0 + b)
            .iter()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            / n
    });
    let m = DVector::from_fn(width, |b, _| {
        let cu = h_est.map_or(0.0, |h| {
            h.row(band.0 + b).iter().map(|v| v.norm_sqr()).sum::<f64>() / n
        });
        cu + noise_var_est
    });
    Ok(FrequencyObservation {
        band,
        z: &zbar - &m,
        zbar,
        m,
    })
}

/// Plug-in noise variance: mean periodogram over carriers known to be idle.
pub fn estimate_noise_var(obs: &ObservationBlock, idle: &[usize]) -> Result<f64> {
    if idle.is_empty() {
        return Err(SenseError::config("need at least one idle carrier"));
    }
    let n = obs.y.ncols() as f64;
    let mut total = 0.0;
    for &q in idle {
        if q >= obs.y.nrows() {
            return Err(SenseError::config(format!("idle carrier {q} out of range")));
        }
        total += obs.y.row(q).iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    }
    Ok(total / idle.len() as f64)
}

/// Value of `T_B`; infinite when `z` lies in span(H).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubspaceStatistic {
    pub value: f64,
    pub degenerate: bool,
}

pub fn matched_subspace_statistic(
    z: &DVector<f64>,
    model: &SubspaceModel,
) -> Result<SubspaceStatistic> {
    if z.len() != model.width() {
        return Err(SenseError::config(format!(
            "observation has {} carriers, model expects {}",
            z.len(),
            model.width()
        )));
    }
    let energy = z.norm_squared();
    if !(energy > 0.0) {
        return Err(SenseError::domain(
            "matched subspace statistic of a zero or non-finite vector",
        ));
    }
    let coeffs = model.orthonormal.transpose() * z;
    let inside = coeffs.norm_squared();
    let residual = (z - &model.orthonormal * &coeffs).norm_squared();
    if residual < DEGENERATE_TOL * energy {
        return Ok(SubspaceStatistic {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    let (d1, d2) = model.dof();
    Ok(SubspaceStatistic {
        value: (d2 as f64 / d1 as f64) * inside / residual,
        degenerate: false,
    })
}

fn check_dof(order: usize, width: usize) -> Result<(f64, f64)> {
    if width < order + 2 {
        return Err(SenseError::domain(format!(
            "order {order} over {width} carriers leaves no noise degrees of freedom"
        )));
    }
    Ok(((order + 1) as f64, (width - order - 1) as f64))
}

/// Upper-`α` point of `F(r+1, B−r−1)`.
pub fn threshold_from_alpha(alpha: f64, order: usize, width: usize) -> Result<f64> {
    let (d1, d2) = check_dof(order, width)?;
    f_upper_quantile(alpha, d1, d2)
}

/// `P(F'(r+1, B−r−1; λ) > γ)`.
pub fn predicted_detection_probability(
    gamma: f64,
    order: usize,
    width: usize,
    lambda: f64,
) -> Result<f64> {
    let (d1, d2) = check_dof(order, width)?;
    noncentral_f_sf(gamma, d1, d2, lambda)
}

/// Noncentrality `‖P_H s‖² / σ₁²` for mean vector `s` and noise variance `σ₁²`.
pub fn noncentrality(model: &SubspaceModel, mean: &DVector<f64>, sigma1_sq: f64) -> Result<f64> {
    if mean.len() != model.width() {
        return Err(SenseError::config(
            "mean vector does not match the model width",
        ));
    }
    if !(sigma1_sq > 0.0) {
        return Err(SenseError::domain("noise variance must be positive"));
    }
    Ok(model.project(mean).norm_squared() / sigma1_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseBDecision {
    pub statistic: f64,
    pub threshold: f64,
    pub detected: bool,
    /// `z` lay in span(H); the test detects by convention.
    pub degenerate: bool,
}

pub fn detect(z: &DVector<f64>, model: &SubspaceModel, alpha: f64) -> Result<CaseBDecision> {
    let threshold = threshold_from_alpha(alpha, model.order(), model.width())?;
    let stat = matched_subspace_statistic(z, model)?;
    Ok(CaseBDecision {
        statistic: stat.value,
        threshold,
        detected: stat.degenerate || stat.value > threshold,
        degenerate: stat.degenerate,
    })
}
