//! Input features and output labels of the power-allocation network.

use ndarray::ArrayView2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::{normalize_full_power, PowerAllocation};

/// `L₀ = (4·N_RF + 2)·K`.
pub fn input_size(num_rf_chains: usize, num_users: usize) -> usize {
    (4 * num_rf_chains + 2) * num_users
}

/// Max-abs scaled network input for one realization.
///
/// Layout, each block in user order:
/// 1. `α₁·[Re h̃_k, Im h̃_k]` for every user (`2·N_RF` values each)
/// 2. `α₂·[Re b_k, Im b_k]` for every user
/// 3. `α₃·b_kᴴb_k`
/// 4. `α₄/(b_kᴴb_k)`
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// `(α₁, α₂, α₃, α₄)`.
    pub scaling: [f64; 4],
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds the feature vector from the effective channel `H̃` (`K × N_RF`)
/// and the baseband precoder `B` (`N_RF × K`).
pub fn build_features(effective: ArrayView2<'_, Complex64>, bb: ArrayView2<'_, Complex64>) -> Result<FeatureVector> {
    let (k, n_rf) = effective.dim();
    if bb.dim() != (n_rf, k) {
        return Err(Error::Dimension {
            context: "build_features: precoder shape",
            expected: n_rf * k,
            found: bb.nrows() * bb.ncols(),
        });
    }
    let max_abs = |it: &mut dyn Iterator<Item = &Complex64>| it.fold(0.0f64, |m, v| m.max(v.re.abs()).max(v.im.abs()));
    let h_max = max_abs(&mut effective.iter());
    let b_max = max_abs(&mut bb.iter());
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::DegenerateScaling("effective channel is all zero"));
    }
    if !(b_max > 0.0 && b_max.is_finite()) {
        return Err(Error::DegenerateScaling("baseband precoder is all zero"));
    }
    let gains: Vec<f64> = bb.columns().into_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect();
    let g_max = gains.iter().copied().fold(0.0, f64::max);
    let g_min = gains.iter().copied().fold(f64::INFINITY, f64::min);
    if !(g_min > 0.0) {
        return Err(Error::DegenerateScaling("a baseband precoder column is zero"));
    }
    let alpha = [1.0 / h_max, 1.0 / b_max, 1.0 / g_max, g_min];

    let mut values = Vec::with_capacity(input_size(n_rf, k));
    for row in effective.rows() {
        values.extend(row.iter().map(|v| alpha[0] * v.re));
        values.extend(row.iter().map(|v| alpha[0] * v.im));
    }
    for col in bb.columns() {
        values.extend(col.iter().map(|v| alpha[1] * v.re));
        values.extend(col.iter().map(|v| alpha[1] * v.im));
    }
    values.extend(gains.iter().map(|g| alpha[2] * g));
    values.extend(gains.iter().map(|g| alpha[3] / g));
    debug_assert_eq!(values.len(), input_size(n_rf, k));
    Ok(FeatureVector { values, scaling: alpha })
}

/// `p̄_k = p_k / max_t p_t`.
pub fn scale_labels(p_opt: &[f64]) -> Result<Vec<f64>> {
    let max = p_opt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::DegenerateScaling("label maximum must be positive"));
    }
    Ok(p_opt.iter().map(|p| p / max).collect())
}

/// Final multi-user power allocation from network outputs:
/// `p_k = p̂_k · P_T / Σ_t p̂_t b_tᴴb_t`.
pub fn power_matrix(p_hat: &[f64], bb_gains: &[f64], p_total: f64) -> Result<PowerAllocation> {
    normalize_full_power(p_hat, bb_gains, p_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn paper_scale_input_size() {
        assert_eq!(input_size(12, 3), 150);
    }

    #[test]
    fn single_user_gain_blocks() {
        let h = array![[c(0.3, -0.1)]];
        let b = array![[c(0.0, 2.0)]];
        let f = build_features(h.view(), b.view()).unwrap();
        assert_eq!(f.scaling[2], 0.25);
        assert_eq!(f.scaling[3], 4.0);
        assert_eq!(&f.values[4..], &[1.0, 1.0]);
    }

    #[test]
    fn max_abs_attained_per_block() {
        let h = array![[c(0.3, -0.7), c(0.1, 0.2)], [c(-0.05, 0.4), c(0.6, 0.0)]];
        let b = array![[c(3.0, 1.0), c(-0.5, 0.2)], [c(0.1, -8.0), c(1.0, 1.0)]];
        let f = build_features(h.view(), b.view()).unwrap();
        assert_eq!(f.len(), input_size(2, 2));
        let channel_block = &f.values[..8];
        let precoder_block = &f.values[8..16];
        let peak = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak(channel_block), 1.0);
        assert_eq!(peak(precoder_block), 1.0);
        assert!(f.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_inputs_are_degenerate() {
        let h = Array2::<Complex64>::zeros((1, 2));
        let b = array![[c(1.0, 0.0)], [c(0.0, 0.0)]];
        assert!(matches!(build_features(h.view(), b.view()), Err(Error::DegenerateScaling(_))));
        let h = array![[c(1.0, 0.0), c(0.0, 0.0)]];
        let b = Array2::<Complex64>::zeros((2, 1));
        assert!(matches!(build_features(h.view(), b.view()), Err(Error::DegenerateScaling(_))));
    }

    #[test]
    fn label_scaling() {
        assert_eq!(scale_labels(&[2.0, 4.0, 1.0]).unwrap(), vec![0.5, 1.0, 0.25]);
        assert_eq!(scale_labels(&[3.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        assert!(scale_labels(&[0.0, 0.0]).is_err());
        assert!(scale_labels(&[]).is_err());
    }

    #[test]
    fn power_matrix_closed_forms() {
        let p = power_matrix(&[0.7, 0.7, 0.7], &[1.0, 1.0, 1.0], 90.0).unwrap();
        assert!(p.powers_mw.iter().all(|&v| (v - 30.0).abs() < 1e-12));
        for p_hat in [0.01, 0.5, 0.99] {
            let p = power_matrix(&[p_hat], &[5.0], 100.0).unwrap();
            assert!((p.powers_mw[0] - 20.0).abs() < 1e-12);
        }
        assert!(power_matrix(&[0.0, 0.0], &[1.0, 1.0], 1.0).is_err());
    }
}
