//! Per-user SINR, sum-rate and transmit-power accounting.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::precoding::HybridPrecoder;

/// Relative slack allowed on the total-power constraint.
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Per-user transmit powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Allocated power `p_k` in milliwatts.
    pub powers_mw: Vec<f64>,
    /// Un-normalized weights the powers were derived from.
    pub raw: Vec<f64>,
}

impl PowerAllocation {
    pub fn num_users(&self) -> usize {
        self.powers_mw.len()
    }
}

/// Scales non-negative `raw` weights so that `Σ p_k b_kᴴb_k = P_T`:
/// `p_k = raw_k · P_T / Σ_t raw_t b_tᴴb_t`.
pub fn normalize_full_power(raw: &[f64], bb_gains: &[f64], p_total: f64) -> Result<PowerAllocation> {
    if raw.len() != bb_gains.len() {
        return Err(Error::Dimension {
            context: "normalize_full_power: users",
            expected: bb_gains.len(),
            found: raw.len(),
        });
    }
    if raw.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::Validation("power weights must be finite and non-negative".into()));
    }
    let denom: f64 = raw.iter().zip(bb_gains).map(|(r, g)| r * g).sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateScaling("zero power-normalization denominator"));
    }
    let scale = p_total / denom;
    Ok(PowerAllocation {
        powers_mw: raw.iter().map(|r| r * scale).collect(),
        raw: raw.to_vec(),
    })
}

/// Squared end-to-end gains `|h_kᵀ F b_t|²` and baseband precoder gains
/// `b_kᴴ b_k` of one realization. Everything the SINR needs besides the
/// powers and the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    /// `K × K`, entry `[k, t]` is `|h_kᵀ F b_t|²`.
    pub gain_sq: Array2<f64>,
    pub bb_gains: Vec<f64>,
}

impl LinkGains {
    pub fn new(
        channels: ArrayView2<'_, Complex64>,
        rf: ArrayView2<'_, Complex64>,
        bb: ArrayView2<'_, Complex64>,
    ) -> Result<Self> {
        check_dims(channels, rf, bb)?;
        let end_to_end = channels.dot(&rf).dot(&bb);
        Ok(Self {
            gain_sq: end_to_end.mapv(|v| v.norm_sqr()),
            bb_gains: column_gains(bb),
        })
    }

    /// Uses the stored effective channel `H̃ = H F` of the precoder.
    pub fn from_precoder(precoder: &HybridPrecoder) -> Self {
        let end_to_end = precoder.effective.dot(&precoder.bb);
        Self {
            gain_sq: end_to_end.mapv(|v| v.norm_sqr()),
            bb_gains: precoder.bb_gains(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.bb_gains.len()
    }

    /// Same arithmetic as `sum_rate(&sinr_from_gains(..))`, without
    /// allocating.
    pub fn sum_rate(&self, powers_mw: &[f64], sigma2: f64) -> f64 {
        let gain_sq = self.gain_sq.view();
        (0..powers_mw.len())
            .map(|k| (1.0 + user_sinr(gain_sq, powers_mw, sigma2, k)).log2())
            .sum()
    }
}

fn check_dims(
    channels: ArrayView2<'_, Complex64>,
    rf: ArrayView2<'_, Complex64>,
    bb: ArrayView2<'_, Complex64>,
) -> Result<()> {
    if channels.ncols() != rf.nrows() {
        return Err(Error::Dimension {
            context: "channels vs RF beamformer",
            expected: rf.nrows(),
            found: channels.ncols(),
        });
    }
    if rf.ncols() != bb.nrows() {
        return Err(Error::Dimension {
            context: "RF beamformer vs baseband precoder",
            expected: rf.ncols(),
            found: bb.nrows(),
        });
    }
    if bb.ncols() != channels.nrows() {
        return Err(Error::Dimension {
            context: "baseband precoder vs users",
            expected: channels.nrows(),
            found: bb.ncols(),
        });
    }
    Ok(())
}

fn column_gains(bb: ArrayView2<'_, Complex64>) -> Vec<f64> {
    bb.columns().into_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
}

/// `SINR_k = p_k G[k,k] / (Σ_{t≠k} p_t G[k,t] + σ²)`.
pub fn sinr_from_gains(gain_sq: ArrayView2<'_, f64>, powers_mw: &[f64], sigma2: f64) -> Vec<f64> {
    (0..powers_mw.len())
        .map(|user| user_sinr(gain_sq, powers_mw, sigma2, user))
        .collect()
}

#[inline]
fn user_sinr(gain_sq: ArrayView2<'_, f64>, powers_mw: &[f64], sigma2: f64, user: usize) -> f64 {
    let row = gain_sq.row(user);
    let mut interference = sigma2;
    for (t, (&g, &p)) in row.iter().zip(powers_mw).enumerate() {
        if t != user {
            interference += p * g;
        }
    }
    powers_mw[user] * row[user] / interference
}

pub fn sinr_per_user(
    channels: ArrayView2<'_, Complex64>,
    rf: ArrayView2<'_, Complex64>,
    bb: ArrayView2<'_, Complex64>,
    alloc: &PowerAllocation,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let gains = LinkGains::new(channels, rf, bb)?;
    if alloc.num_users() != gains.num_users() {
        return Err(Error::Dimension {
            context: "sinr_per_user: allocation",
            expected: gains.num_users(),
            found: alloc.num_users(),
        });
    }
    Ok(sinr_from_gains(gains.gain_sq.view(), &alloc.powers_mw, sigma2))
}

/// `Σ_k log2(1 + SINR_k)` in bps/Hz.
pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReport {
    /// `Σ p_k b_kᴴ Fᴴ F b_k`.
    pub consumed_mw: f64,
    /// `Σ p_k b_kᴴ b_k`, equal to `consumed_mw` for unitary `F`.
    pub consumed_unitary_mw: f64,
    pub feasible: bool,
}

impl PowerReport {
    pub fn forms_relative_gap(&self) -> f64 {
        let scale = self.consumed_mw.abs().max(self.consumed_unitary_mw.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.consumed_mw - self.consumed_unitary_mw).abs() / scale
        }
    }
}

/// Evaluates the total-power constraint in both its full and unitary forms.
/// Feasible when every power is non-negative and the full-form consumption
/// is at most `P_T·(1 + 1e-9)`.
pub fn check_power_constraint(
    alloc: &PowerAllocation,
    bb: ArrayView2<'_, Complex64>,
    rf: ArrayView2<'_, Complex64>,
    p_total: f64,
) -> PowerReport {
    let precoded = rf.dot(&bb);
    let full = column_gains(precoded.view());
    let unitary = column_gains(bb);
    let consumed_mw = alloc.powers_mw.iter().zip(&full).map(|(p, g)| p * g).sum();
    let consumed_unitary_mw = alloc.powers_mw.iter().zip(&unitary).map(|(p, g)| p * g).sum();
    let feasible = alloc.powers_mw.iter().all(|&p| p >= 0.0) && consumed_mw <= p_total * (1.0 + POWER_TOLERANCE);
    PowerReport {
        consumed_mw,
        consumed_unitary_mw,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sum_rate_closed_forms() {
        assert_eq!(sum_rate(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(sum_rate(&[1.0, 3.0]), 3.0);
    }

    #[test]
    fn sinr_by_substitution() {
        let g = array![[1.0, 0.1], [0.1, 1.0]];
        let s = sinr_from_gains(g.view(), &[1.0, 1.0], 0.1);
        assert!((s[0] - 5.0).abs() < 1e-12);
        assert!((s[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_user_has_no_interference() {
        let g = array![[2.5]];
        let s = sinr_from_gains(g.view(), &[4.0], 0.5);
        assert_eq!(s, vec![20.0]);
    }

    #[test]
    fn zero_power_is_feasible() {
        let bb = Array2::from_elem((2, 2), Complex64::new(1.0, 0.0));
        let rf = Array2::from_diag(&ndarray::arr1(&[Complex64::new(1.0, 0.0); 2]));
        let alloc = PowerAllocation {
            powers_mw: vec![0.0, 0.0],
            raw: vec![0.0, 0.0],
        };
        let r = check_power_constraint(&alloc, bb.view(), rf.view(), 1.0);
        assert_eq!(r.consumed_mw, 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn orthonormal_equal_split_consumes_budget() {
        let one = Complex64::new(1.0, 0.0);
        let bb = Array2::from_diag(&ndarray::arr1(&[one; 3]));
        let rf = bb.clone();
        let alloc = normalize_full_power(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 100.0).unwrap();
        assert!(alloc.powers_mw.iter().all(|&p| (p - 100.0 / 3.0).abs() < 1e-12));
        let r = check_power_constraint(&alloc, bb.view(), rf.view(), 100.0);
        assert!((r.consumed_mw - 100.0).abs() < 1e-12);
        assert!(r.feasible);
    }

    #[test]
    fn negative_or_excess_power_is_infeasible() {
        let one = Complex64::new(1.0, 0.0);
        let eye = Array2::from_diag(&ndarray::arr1(&[one; 2]));
        let neg = PowerAllocation {
            powers_mw: vec![-1.0, 0.5],
            raw: vec![0.0; 2],
        };
        assert!(!check_power_constraint(&neg, eye.view(), eye.view(), 10.0).feasible);
        let over = PowerAllocation {
            powers_mw: vec![6.0, 5.0],
            raw: vec![0.0; 2],
        };
        assert!(!check_power_constraint(&over, eye.view(), eye.view(), 10.0).feasible);
    }

    #[test]
    fn normalization_rejects_degenerate_input() {
        assert!(normalize_full_power(&[0.0, 0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(normalize_full_power(&[-1.0, 2.0], &[1.0, 2.0], 1.0).is_err());
        assert!(normalize_full_power(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }
}
