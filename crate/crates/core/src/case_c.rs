//! Case C: neither the PU band nor its spectrum shape is known.
//!
//! The band is found as the segment `[a0, a1]` minimizing
//!
//! `δ0(0, a0−1) + δ1(a0, a1) + δ0(a1+1, Q−1)`
//!
//! where `δ0` sums `Z(q)²` outside the segment and `δ1` is the residual of a
//! least-squares polynomial fit of order `r` inside it. Dynamic programming
//! splits the search as `e(l) = min_{a0 ≤ l−r} δ0(0, a0−1) + δ1(a0, l)`
//! followed by `min_{a1} e(a1) + δ0(a1+1, Q−1)`. The matched-subspace test of
//! Case B then runs on the estimated band.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::case_b::{build_observation, detect, CaseBDecision, SubspaceModel};
use crate::ofdm::ObservationBlock;
use crate::{Result, SenseError};

/// Relative tolerance under which two objective values are tied.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandEstimate {
    pub q0: usize,
    pub q1: usize,
    /// Minimized objective. Least-squares error for [`band_search`], log
    /// GLRT denominator for [`glrt_band_search`].
    pub objective: f64,
    /// Fitted gains `μ̂` of `h_i(n) = nⁱ`, `n = 0..q1−q0`.
    pub gain: Vec<f64>,
}

impl BandEstimate {
    pub fn width(&self) -> usize {
        self.q1 - self.q0 + 1
    }

    /// Both edges within `tol` carriers of `truth`.
    pub fn hits(&self, truth: (usize, usize), tol: usize) -> bool {
        self.q0.abs_diff(truth.0) <= tol && self.q1.abs_diff(truth.1) <= tol
    }
}

/// DP state of one band search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpTable {
    /// `e(l)` for `l = r..Q−1`, stored at index `l − r`.
    pub e: Vec<f64>,
    /// Minimizing `a0` of each `e(l)`.
    pub argmin_a0: Vec<usize>,
    /// `delta0_prefix[k] = Σ_{q<k} Z(q)²`.
    pub delta0_prefix: Vec<f64>,
}

impl DpTable {
    /// `δ0(a, b)`, zero for an empty range.
    pub fn delta0(&self, a: usize, b_exclusive: usize) -> f64 {
        if b_exclusive <= a {
            0.0
        } else {
            self.delta0_prefix[b_exclusive] - self.delta0_prefix[a]
        }
    }
}

/// `a` strictly better than `b` beyond the tie tolerance.
fn clearly_less(a: f64, b: f64) -> bool {
    a < b && !tied(a, b)
}

fn tied(a: f64, b: f64) -> bool {
    a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()))
}

/// Incremental least squares by Givens rotations: rows are folded into an
/// upper-triangular factor and the residual sum of squares accumulates the
/// part of each observation the current fit cannot explain.
struct SequentialLs {
    r: DMatrix<f64>,
    d: DVector<f64>,
    rss: f64,
}

impl SequentialLs {
    fn new(p: usize) -> Self {
        Self {
            r: DMatrix::zeros(p, p),
            d: DVector::zeros(p),
            rss: 0.0,
        }
    }

    fn push(&mut self, mut x: Vec<f64>, mut z: f64) {
        let p = x.len();
        for i in 0..p {
            if x[i] == 0.0 {
                continue;
            }
            let (a, b) = (self.r[(i, i)], x[i]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for j in i..p {
                let (rij, xj) = (self.r[(i, j)], x[j]);
                self.r[(i, j)] = c * rij + s * xj;
                x[j] = -s * rij + c * xj;
            }
            let di = self.d[i];
            self.d[i] = c * di + s * z;
            z = -s * di + c * z;
        }
        self.rss += z * z;
    }
}

fn check_input(z: &[f64], order: usize) -> Result<()> {
    if z.len() < order + 2 {
        return Err(SenseError::config(format!(
            "band search over {} carriers needs more than {} carriers for order {order}",
            z.len(),
            order + 1
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(SenseError::domain("observation contains non-finite values"));
    }
    Ok(())
}

fn prefix_squares(z: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(z.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in z {
        acc += v * v;
        prefix.push(acc);
    }
    prefix
}

/// Least-squares band search with its DP table.
pub fn band_search_with_table(z: &[f64], order: usize) -> Result<(BandEstimate, DpTable)> {
    check_input(z, order)?;
    let q_count = z.len();
    let p = order + 1;
    let prefix = prefix_squares(z);
    let scale = q_count as f64;

    let mut e = vec![f64::INFINITY; q_count - order];
    let mut argmin = vec![0usize; q_count - order];
    for a0 in 0..q_count - order {
        let mut ls = SequentialLs::new(p);
        for l in a0..q_count {
            let u = (l - a0) as f64 / scale;
            let mut x = Vec::with_capacity(p);
            let mut pow = 1.0;
            for _ in 0..p {
                x.push(pow);
                pow *= u;
            }
            ls.push(x, z[l]);
            if l < a0 + order {
                continue;
            }
            let cand = prefix[a0] + ls.rss;
            let slot = l - order;
            // a0 ascends, so ties keep the earlier start: the widest segment ending at l.
            if clearly_less(cand, e[slot]) {
                e[slot] = cand;
                argmin[slot] = a0;
            }
        }
    }

    let total = prefix[q_count];
    let mut best: Option<(f64, usize, usize)> = None;
    for a1 in order..q_count {
        let slot = a1 - order;
        let value = e[slot] + (total - prefix[a1 + 1]);
        let a0 = argmin[slot];
        if prefer(value, a0, a1, best) {
            best = Some((value, a0, a1));
        }
    }
    let (objective, q0, q1) = best.expect("at least one admissible segment");
    let (_, gain) = ls_segment_error(z, q0, q1, order)?;
    Ok((
        BandEstimate {
            q0,
            q1,
            objective,
            gain: gain.iter().copied().collect(),
        },
        DpTable {
            e,
            argmin_a0: argmin,
            delta0_prefix: prefix,
        },
    ))
}

/// Whether candidate `(value, a0, a1)` beats `best`: lower objective, then
/// on ties the wider band, then the smaller start.
fn prefer(value: f64, a0: usize, a1: usize, best: Option<(f64, usize, usize)>) -> bool {
    let Some((bv, b0, b1)) = best else {
        return true;
    };
    if clearly_less(value, bv) {
        return true;
    }
    if !tied(value, bv) {
        return false;
    }
    let (w, bw) = (a1 - a0, b1 - b0);
    w > bw || (w == bw && a0 < b0)
}

/// Least-squares band search over the full-spectrum observation `z`.
pub fn band_search(z: &[f64], order: usize) -> Result<BandEstimate> {
    band_search_with_table(z, order).map(|(est, _)| est)
}

/// Fit of `h_i(n) = nⁱ` over `z[a..=b]`: residual `δ1(a, b)` and gains `μ̂`.
pub fn ls_segment_error(
    z: &[f64],
    a: usize,
    b: usize,
    order: usize,
) -> Result<(f64, DVector<f64>)> {
    if b >= z.len() || a > b {
        return Err(SenseError::domain(format!(
            "segment [{a}, {b}] outside 0..{}",
            z.len()
        )));
    }
    if b - a < order {
        return Err(SenseError::domain(format!(
            "segment [{a}, {b}] is shorter than {} points",
            order + 1
        )));
    }
    let len = b - a + 1;
    let h = DMatrix::from_fn(len, order + 1, |n, i| (n as f64).powi(i as i32));
    let y = DVector::from_column_slice(&z[a..=b]);
    let svd = h.clone().svd(true, true);
    let mu = svd
        .solve(&y, 1e-14)
        .map_err(|e| SenseError::Numerical(format!("segment least squares: {e}")))?;
    let residual = (&y - &h * &mu).norm_squared();
    Ok((residual, mu))
}

/// Objective `δ0(0, a0−1) + δ1(a0, a1) + δ0(a1+1, Q−1)` evaluated directly.
pub fn segment_objective(z: &[f64], a0: usize, a1: usize, order: usize) -> Result<f64> {
    let (d1, _) = ls_segment_error(z, a0, a1, order)?;
    let outside: f64 = z[..a0].iter().chain(&z[a1 + 1..]).map(|v| v * v).sum();
    Ok(outside + d1)
}

/// Exhaustive minimization of [`segment_objective`] with the same tie rule
/// as [`band_search`]. `O(Q²)` segments; meant for checking.
pub fn exhaustive_band_search(z: &[f64], order: usize) -> Result<BandEstimate> {
    check_input(z, order)?;
    let mut best: Option<(f64, usize, usize)> = None;
    for a0 in 0..z.len() {
        for a1 in a0 + order..z.len() {
            let v = segment_objective(z, a0, a1, order)?;
            if prefer(v, a0, a1, best) {
                best = Some((v, a0, a1));
            }
        }
    }
    let (objective, q0, q1) = best.expect("at least one admissible segment");
    let (_, gain) = ls_segment_error(z, q0, q1, order)?;
    Ok(BandEstimate {
        q0,
        q1,
        objective,
        gain: gain.iter().copied().collect(),
    })
}

/// Exact GLRT band estimate: minimizes
/// `(Q−B)/2 · ln σ̂0² + B/2 · ln σ̂1²` over segments of width `B ≥ r + 2`,
/// where `σ̂0²` is the mean square outside the segment and `σ̂1²` the mean
/// squared fit residual inside it. Exhaustive, for small `Q`.
pub fn glrt_band_search(z: &[f64], order: usize) -> Result<BandEstimate> {
    check_input(z, order)?;
    let q_count = z.len();
    let prefix = prefix_squares(z);
    let mut best: Option<(f64, usize, usize)> = None;
    for a0 in 0..q_count {
        for a1 in a0 + order + 1..q_count {
            let width = a1 - a0 + 1;
            let (d1, _) = ls_segment_error(z, a0, a1, order)?;
            let outside_n = q_count - width;
            let outside = prefix[a0] + prefix[q_count] - prefix[a1 + 1];
            let mut v = 0.5 * width as f64 * (d1 / width as f64).ln();
            if outside_n > 0 {
                v += 0.5 * outside_n as f64 * (outside / outside_n as f64).ln();
            }
            if prefer(v, a0, a1, best) {
                best = Some((v, a0, a1));
            }
        }
    }
    let (objective, q0, q1) = best.expect("at least one admissible segment");
    let (_, gain) = ls_segment_error(z, q0, q1, order)?;
    Ok(BandEstimate {
        q0,
        q1,
        objective,
        gain: gain.iter().copied().collect(),
    })
}

/// Band search state for offline inspection.
#[derive(Debug, Clone, Serialize)]
pub struct BandSearchTrace {
    pub z: Vec<f64>,
    pub order: usize,
    pub table: DpTable,
    pub estimate: BandEstimate,
}

pub fn trace_band_search(z: &[f64], order: usize) -> Result<BandSearchTrace> {
    let (estimate, table) = band_search_with_table(z, order)?;
    Ok(BandSearchTrace {
        z: z.to_vec(),
        order,
        table,
        estimate,
    })
}

/// Outcome of band search followed by the matched-subspace test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepResult {
    pub estimate: BandEstimate,
    /// Absent when the estimated band was too short for the F test.
    pub decision: Option<CaseBDecision>,
    pub detected: bool,
    /// The estimated band leaves no noise degrees of freedom.
    pub band_too_short: bool,
}

/// Band search and per-band F test on a full-spectrum `z`. The threshold
/// uses `(r+1, q̂1 − q̂0 − r)` degrees of freedom.
pub fn two_step_detect_spectrum(z: &[f64], alpha: f64, order: usize) -> Result<TwoStepResult> {
    two_step_detect_split(z, z, alpha, order)
}

/// Band search on `search`, then the F test on the same carriers of `test`.
///
/// With `search` and `test` built from disjoint OFDM symbols the test
/// statistic is independent of the band selection, so the F threshold
/// holds its nominal false-alarm rate.
pub fn two_step_detect_split(
    search: &[f64],
    test: &[f64],
    alpha: f64,
    order: usize,
) -> Result<TwoStepResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SenseError::config(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if search.len() != test.len() {
        return Err(SenseError::config(format!(
            "search spectrum has {} carriers, test spectrum {}",
            search.len(),
            test.len()
        )));
    }
    let estimate = band_search(search, order)?;
    if estimate.q1 - estimate.q0 < order + 1 {
        return Ok(TwoStepResult {
            estimate,
            decision: None,
            detected: false,
            band_too_short: true,
        });
    }
    let model = SubspaceModel::monomial(estimate.width(), order)?;
    let seg = DVector::from_column_slice(&test[estimate.q0..=estimate.q1]);
    let decision = detect(&seg, &model, alpha)?;
    Ok(TwoStepResult {
        estimate,
        detected: decision.detected,
        decision: Some(decision),
        band_too_short: false,
    })
}

/// Two-step detection on a silent-CU observation with noise variance
/// estimate `noise_var_est`.
pub fn two_step_detect(
    obs: &ObservationBlock,
    alpha: f64,
    order: usize,
    noise_var_est: f64,
) -> Result<TwoStepResult> {
    let full = build_observation(obs, (0, obs.y.nrows() - 1), None, noise_var_est)?;
    two_step_detect_spectrum(full.z.as_slice(), alpha, order)
}
