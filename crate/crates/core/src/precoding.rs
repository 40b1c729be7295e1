//! Angular-based hybrid precoding.
//!
//! The analog stage is built from orthogonal quantized steering vectors that
//! cover each group's angle-of-departure support; the digital stage is a
//! regularized zero-forcing precoder on the reduced `K × N_RF` effective
//! channel.

use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::channel::{phase_response, ChannelRealization};
use crate::error::{Error, Result};
use crate::linalg::{hermitian, solve_hpd};
use crate::scenario::{ArrayGeometry, GroupAngularSupport, Scenario};

/// Samples per axis of the `(θ, ψ)` rectangle when approximating a group's
/// support in direction-cosine space. Endpoints are included, so the
/// boundary is sampled at the same density as the interior.
pub const SUPPORT_SAMPLES: usize = 128;

/// Orthogonal grid `λ_u = −1 + (2u − 1)/Mx`, `u = 1..=Mx` (same for y).
///
/// Steering vectors of distinct grid pairs are mutually orthogonal for
/// half-wavelength spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedAngleGrid {
    pub lambda_x: Vec<f64>,
    pub lambda_y: Vec<f64>,
}

/// One grid pair, with its 0-based grid indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    pub u: usize,
    pub c: usize,
    pub lambda_x: f64,
    pub lambda_y: f64,
}

impl QuantizedAngleGrid {
    pub fn new(geom: &ArrayGeometry) -> Self {
        let axis = |n: usize| (1..=n).map(|i| -1.0 + (2 * i - 1) as f64 / n as f64).collect();
        Self {
            lambda_x: axis(geom.mx),
            lambda_y: axis(geom.my),
        }
    }

    pub fn len(&self) -> usize {
        self.lambda_x.len() * self.lambda_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All pairs, x index major.
    pub fn pairs(&self) -> impl Iterator<Item = AnglePair> + '_ {
        self.lambda_x.iter().enumerate().flat_map(move |(u, &lambda_x)| {
            self.lambda_y.iter().enumerate().map(move |(c, &lambda_y)| AnglePair {
                u,
                c,
                lambda_x,
                lambda_y,
            })
        })
    }

    fn half_widths(&self) -> (f64, f64) {
        (1.0 / self.lambda_x.len() as f64, 1.0 / self.lambda_y.len() as f64)
    }
}

pub fn quantized_grid(geom: &ArrayGeometry) -> QuantizedAngleGrid {
    QuantizedAngleGrid::new(geom)
}

/// Dense sample of the support image `{(sinθ cosψ, sinθ sinψ)}` over the
/// clamped elevation interval and the azimuth interval.
pub fn support_samples(support: &GroupAngularSupport) -> Vec<(f64, f64)> {
    let (t_lo, t_hi) = support.eaod_range_deg();
    let (p_lo, p_hi) = support.aaod_range_deg();
    let n = SUPPORT_SAMPLES;
    let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let theta = at(t_lo, t_hi, i).to_radians();
        let (s, _) = theta.sin_cos();
        for j in 0..n {
            let psi = at(p_lo, p_hi, j).to_radians();
            out.push((s * psi.cos(), s * psi.sin()));
        }
    }
    out
}

/// Grid pairs whose quantization cell lies within `margin` of the sampled
/// support. The cell of a pair is the axis-aligned square of half-width
/// `1/Mx × 1/My` around it, so with `margin = 0` a pair is kept when its cell
/// intersects the support.
pub fn covering_pairs(grid: &QuantizedAngleGrid, support: &GroupAngularSupport, margin: f64) -> Vec<AnglePair> {
    let samples = support_samples(support);
    let (hx, hy) = grid.half_widths();
    let margin_sq = margin * margin;
    grid.pairs()
        .filter(|pair| {
            samples.iter().any(|&(gx, gy)| {
                let dx = (gx - pair.lambda_x).abs() - hx;
                let dy = (gy - pair.lambda_y).abs() - hy;
                dx.max(0.0).powi(2) + dy.max(0.0).powi(2) <= margin_sq
            })
        })
        .collect()
}

/// Selects the angle pairs of every group. A pair covered by several groups
/// goes to the group whose support center is nearest, ties to the lower
/// group index.
pub fn select_group_pairs(
    grid: &QuantizedAngleGrid,
    supports: &[GroupAngularSupport],
    margin: f64,
) -> Result<Vec<Vec<AnglePair>>> {
    if !(margin >= 0.0) {
        return Err(Error::config("selection margin must be non-negative"));
    }
    let covered: Vec<Vec<AnglePair>> = supports.iter().map(|s| covering_pairs(grid, s, margin)).collect();
    let centers: Vec<(f64, f64)> = supports.iter().map(GroupAngularSupport::center).collect();
    let owner = |pair: &AnglePair| -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for (g, list) in covered.iter().enumerate() {
            if list.iter().any(|p| p.u == pair.u && p.c == pair.c) {
                let (cx, cy) = centers[g];
                let d = (pair.lambda_x - cx).powi(2) + (pair.lambda_y - cy).powi(2);
                if d < best.0 {
                    best = (d, g);
                }
            }
        }
        best.1
    };
    let selections: Vec<Vec<AnglePair>> = covered
        .iter()
        .enumerate()
        .map(|(g, list)| list.iter().copied().filter(|p| owner(p) == g).collect())
        .collect();
    if let Some(group) = selections.iter().position(Vec::is_empty) {
        return Err(Error::EmptySelection { group });
    }
    Ok(selections)
}

/// Analog RF beamformer `F = [F_1, …, F_G]` with its per-group column blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RfBeamformer {
    /// `M × N_RF`.
    pub matrix: Array2<Complex64>,
    pub group_blocks: Vec<Range<usize>>,
}

impl RfBeamformer {
    pub fn num_rf_chains(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Steering vector `(1/√M)·conj(φ(λx, λy))` for every selected pair, grouped
/// contiguously in group order.
pub fn build_rf_beamformer(
    selections: &[Vec<AnglePair>],
    geom: &ArrayGeometry,
    num_users: usize,
) -> Result<RfBeamformer> {
    if let Some(group) = selections.iter().position(Vec::is_empty) {
        return Err(Error::EmptySelection { group });
    }
    let n_rf: usize = selections.iter().map(Vec::len).sum();
    if n_rf > geom.m() {
        return Err(Error::config(format!(
            "{n_rf} angle pairs selected for an array of {} antennas",
            geom.m()
        )));
    }
    if n_rf < num_users {
        return Err(Error::Infeasible {
            rf_chains: n_rf,
            users: num_users,
        });
    }
    let scale = 1.0 / (geom.m() as f64).sqrt();
    let mut matrix = Array2::zeros((geom.m(), n_rf));
    let mut group_blocks = Vec::with_capacity(selections.len());
    let mut col = 0;
    for pairs in selections {
        let start = col;
        for pair in pairs {
            let phi = phase_response(pair.lambda_x, pair.lambda_y, geom);
            matrix.column_mut(col).assign(&phi.mapv(|v| v.conj() * scale));
            col += 1;
        }
        group_blocks.push(start..col);
    }
    Ok(RfBeamformer { matrix, group_blocks })
}

/// `H̃ = H F`.
pub fn effective_channel(
    channels: ArrayView2<'_, Complex64>,
    rf: ArrayView2<'_, Complex64>,
) -> Result<Array2<Complex64>> {
    if channels.ncols() != rf.nrows() {
        return Err(Error::Dimension {
            context: "effective_channel: antennas",
            expected: rf.nrows(),
            found: channels.ncols(),
        });
    }
    Ok(channels.dot(&rf))
}

/// Regularized zero-forcing precoder
/// `B = (H̃ᴴH̃ + K·σ²/P_T·I)⁻¹ H̃ᴴ`, `N_RF × K`.
///
/// When `K < N_RF` the equivalent `K × K` system
/// `B = H̃ᴴ (H̃H̃ᴴ + K·σ²/P_T·I)⁻¹` is factorized instead. With zero
/// regularization and `K < N_RF` the `N_RF × N_RF` Gram matrix has rank at
/// most `K` and [`Error::Singular`] is returned.
pub fn rzf_precoder(effective: ArrayView2<'_, Complex64>, sigma2: f64, p_total: f64) -> Result<Array2<Complex64>> {
    let (k, n_rf) = effective.dim();
    if k == 0 || n_rf == 0 {
        return Err(Error::Dimension {
            context: "rzf_precoder: users",
            expected: 1,
            found: k.min(n_rf),
        });
    }
    if effective.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("effective channel has non-finite entries".into()));
    }
    if !(sigma2 >= 0.0 && p_total > 0.0) {
        return Err(Error::config("noise power must be >= 0 and total power > 0"));
    }
    let reg = k as f64 * sigma2 / p_total;
    let h_herm = hermitian(effective);
    if k < n_rf {
        if reg == 0.0 {
            return Err(Error::Singular);
        }
        let mut gram = effective.dot(&h_herm);
        for i in 0..k {
            gram[[i, i]] += reg;
        }
        // (H̃H̃ᴴ + cI) Z = H̃  ⇒  B = Zᴴ
        let z = solve_hpd(gram.view(), effective)?;
        Ok(hermitian(z.view()))
    } else {
        let mut gram = h_herm.dot(&effective);
        for i in 0..n_rf {
            gram[[i, i]] += reg;
        }
        solve_hpd(gram.view(), h_herm.view())
    }
}

/// Complete hybrid precoder for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    /// `M × N_RF`.
    pub rf: Array2<Complex64>,
    /// `N_RF × K`.
    pub bb: Array2<Complex64>,
    /// `K × N_RF`.
    pub effective: Array2<Complex64>,
    pub group_blocks: Vec<Range<usize>>,
}

impl HybridPrecoder {
    pub fn num_users(&self) -> usize {
        self.bb.ncols()
    }

    pub fn num_rf_chains(&self) -> usize {
        self.rf.ncols()
    }

    /// `b_kᴴ b_k` for every user.
    pub fn bb_gains(&self) -> Vec<f64> {
        self.bb.columns().into_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
    }
}

/// Analog stage for a fixed scenario. Group supports do not change between
/// realizations, so the RF beamformer is computed once and reused.
#[derive(Debug, Clone)]
pub struct AbHpDesign {
    pub selections: Vec<Vec<AnglePair>>,
    pub rf: RfBeamformer,
    pub noise_power_mw: f64,
    pub total_power_mw: f64,
}

impl AbHpDesign {
    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let grid = QuantizedAngleGrid::new(&scenario.geometry);
        let selections = select_group_pairs(&grid, &scenario.groups, scenario.selection_margin)?;
        let rf = build_rf_beamformer(&selections, &scenario.geometry, scenario.num_users())?;
        Ok(Self {
            selections,
            rf,
            noise_power_mw: scenario.noise_power_mw(),
            total_power_mw: scenario.total_power_mw(),
        })
    }

    pub fn num_rf_chains(&self) -> usize {
        self.rf.num_rf_chains()
    }

    pub fn precode(&self, realization: &ChannelRealization) -> Result<HybridPrecoder> {
        let effective = effective_channel(realization.channels.view(), self.rf.matrix.view())?;
        let bb = rzf_precoder(effective.view(), self.noise_power_mw, self.total_power_mw)?;
        Ok(HybridPrecoder {
            rf: self.rf.matrix.clone(),
            bb,
            effective,
            group_blocks: self.rf.group_blocks.clone(),
        })
    }
}
