//! Primary-user signal models and their normalized per-carrier covariances.
//!
//! Both models describe the PU contribution `I_q = [I_q(0), ..., I_q(N−1)]ᵀ`
//! at a sub-carrier as zero-mean with covariance `P_I(q) · C_q`, where `C_q`
//! has unit diagonal and `P_I(q)` is the received power at that carrier.

mod ar;
mod tonal;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::numerics::linalg::frobenius;
use crate::numerics::{hermitian_eig, EigenSystem};
use crate::ofdm::OfdmConfig;
use crate::{Result, SenseError};

pub use crate::ofdm::PuContribution;
pub use ar::{ar_covariance, generate_ar, ArGenerator, ArPuConfig};
pub use tonal::{generate_tonal, tonal_covariance, Fading, TonalGenerator, TonalPuConfig};

const UNIT_DIAG_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

/// Per-carrier `N×N` Hermitian PSD covariance with unit diagonal, with its
/// eigendecomposition cached.
#[derive(Debug, Clone)]
pub struct NormalizedCovariance {
    c: DMatrix<Complex64>,
    carrier: usize,
    eigen: EigenSystem,
}

impl NormalizedCovariance {
    /// Validates the invariants and factors `c`.
    pub fn new(c: DMatrix<Complex64>, carrier: usize) -> Result<Self> {
        let eigen = hermitian_eig(&c)
            .map_err(|e| SenseError::Degenerate(format!("covariance at carrier {carrier}: {e}")))?;
        for i in 0..c.nrows() {
            let d = c[(i, i)];
            if (d.re - 1.0).abs() >= UNIT_DIAG_TOL || d.im.abs() >= UNIT_DIAG_TOL {
                return Err(SenseError::Degenerate(format!(
                    "covariance at carrier {carrier} has diagonal {d} at {i}"
                )));
            }
        }
        let min = eigen.values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(SenseError::Degenerate(format!(
                "covariance at carrier {carrier} is not PSD (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { c, carrier, eigen })
    }

    pub fn identity(n: usize, carrier: usize) -> Self {
        Self::new(DMatrix::identity(n, n), carrier).expect("identity is a valid covariance")
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.c
    }

    pub fn carrier(&self) -> usize {
        self.carrier
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    /// `tr(C²) = Σ λ_i²`.
    pub fn trace_of_square(&self) -> f64 {
        self.eigen.values.iter().map(|l| l * l).sum()
    }

    /// `y† C y` through the eigendecomposition.
    pub fn quadratic_form(&self, y: &DVector<Complex64>) -> f64 {
        self.eigen
            .projections(y)
            .iter()
            .zip(self.eigen.values.iter())
            .map(|(p, l)| p * l)
            .sum()
    }

    /// Writes the matrix as CSV: one row per matrix row, `re,im` pairs per entry.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for row in self.c.row_iter() {
            let fields: Vec<String> = row
                .iter()
                .flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)])
                .collect();
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a matrix written by [`write_csv`](Self::write_csv) and re-validates it.
    pub fn read_csv<R: Read>(reader: R, carrier: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() % 2 != 0 {
                return Err(SenseError::config("covariance CSV rows need re,im pairs"));
            }
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| SenseError::config(format!("covariance CSV: {e}")))?;
            rows.push(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
        }
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(SenseError::config(
                "covariance CSV must hold a square matrix",
            ));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]), carrier)
    }

    /// Relative Frobenius distance `‖a − C‖_F / ‖C‖_F`.
    pub fn relative_error(&self, other: &DMatrix<Complex64>) -> f64 {
        frobenius(&(other - &self.c)) / frobenius(&self.c)
    }
}

/// Either PU model, dispatching covariance and generation.
#[derive(Debug, Clone, PartialEq)]
pub enum PuModel {
    Tonal(TonalPuConfig),
    Ar(ArPuConfig),
}

impl PuModel {
    pub fn band(&self) -> (usize, usize) {
        match self {
            PuModel::Tonal(c) => c.band,
            PuModel::Ar(c) => c.band,
        }
    }

    pub fn covariance(&self, sys: &OfdmConfig, q: usize) -> Result<NormalizedCovariance> {
        match self {
            PuModel::Tonal(c) => tonal_covariance(c, sys, q),
            PuModel::Ar(c) => ar_covariance(c, sys, q),
        }
    }

    /// Covariances for every carrier of the band.
    pub fn band_covariances(&self, sys: &OfdmConfig) -> Result<Vec<NormalizedCovariance>> {
        let (q0, q1) = self.band();
        (q0..=q1).map(|q| self.covariance(sys, q)).collect()
    }

    pub fn generator(&self, sys: &OfdmConfig) -> Result<PuGenerator> {
        Ok(match self {
            PuModel::Tonal(c) => PuGenerator::Tonal(TonalGenerator::new(c, sys)?),
            PuModel::Ar(c) => PuGenerator::Ar(ArGenerator::new(c, sys)?),
        })
    }
}

/// Precomputed generator for repeated draws from one model.
#[derive(Debug, Clone)]
pub enum PuGenerator {
    Tonal(TonalGenerator),
    Ar(ArGenerator),
}

impl PuGenerator {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> PuContribution {
        match self {
            PuGenerator::Tonal(g) => g.generate(rng),
            PuGenerator::Ar(g) => g.generate(rng),
        }
    }

    /// Same generator with new target powers over the band.
    pub fn with_powers(&self, powers: &[f64]) -> Result<Self> {
        Ok(match self {
            PuGenerator::Tonal(g) => PuGenerator::Tonal(g.with_powers(powers)?),
            PuGenerator::Ar(g) => PuGenerator::Ar(g.with_powers(powers)?),
        })
    }
}

pub(crate) fn check_powers(band: (usize, usize), powers: &[f64]) -> Result<()> {
    let width = band.1 + 1 - band.0;
    if powers.len() != width {
        return Err(SenseError::config(format!(
            "{} carrier powers given for a band of {width}",
            powers.len()
        )));
    }
    if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(SenseError::config("carrier powers must be finite and >= 0"));
    }
    Ok(())
}

/// Sample covariance `(1/M) Σ I_q I_q†` of one band row over many blocks.
pub fn sample_covariance(blocks: &[DVector<Complex64>]) -> DMatrix<Complex64> {
    let n = blocks.first().map_or(0, |b| b.len());
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for b in blocks {
        acc.gerc(Complex64::new(1.0, 0.0), b, b, Complex64::new(1.0, 0.0));
    }
    acc / Complex64::new(blocks.len() as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_broken_invariants() {
        let mut off_diag = DMatrix::<Complex64>::identity(3, 3);
        off_diag[(1, 1)] = Complex64::new(1.1, 0.0);
        assert!(NormalizedCovariance::new(off_diag, 0).is_err());

        // unit diagonal but indefinite
        let mut indef = DMatrix::<Complex64>::identity(2, 2);
        indef[(0, 1)] = Complex64::new(2.0, 0.0);
        indef[(1, 0)] = Complex64::new(2.0, 0.0);
        assert!(NormalizedCovariance::new(indef, 0).is_err());

        let mut skew = DMatrix::<Complex64>::identity(2, 2);
        skew[(0, 1)] = Complex64::new(0.0, 0.5);
        assert!(NormalizedCovariance::new(skew, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut c = DMatrix::<Complex64>::identity(3, 3);
        c[(0, 1)] = Complex64::new(0.25, -0.5);
        c[(1, 0)] = c[(0, 1)].conj();
        let cov = NormalizedCovariance::new(c, 7).unwrap();
        let mut buf = Vec::new();
        cov.write_csv(&mut buf).unwrap();
        let back = NormalizedCovariance::read_csv(buf.as_slice(), 7).unwrap();
        assert_eq!(back.matrix(), cov.matrix());
        assert!(NormalizedCovariance::read_csv("1,0,0\n".as_bytes(), 0).is_err());
    }

    #[test]
    fn quadratic_form_of_identity_is_energy() {
        let cov = NormalizedCovariance::identity(4, 0);
        let y = DVector::from_fn(4, |i, _| Complex64::new(i as f64, 1.0));
        assert!((cov.quadratic_form(&y) - y.norm_squared()).abs() < 1e-12);
        assert!((cov.trace_of_square() - 4.0).abs() < 1e-12);
    }
}
