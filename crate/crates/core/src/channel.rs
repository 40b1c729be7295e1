//! 3D geometric mmWave channel model for a uniform rectangular array.
//!
//! The channel of user `k` is a sum over `Q` paths,
//! `h_k = Σ_l τ_l^(−η) z_l φ(γx_l, γy_l)`, where `z_l ~ CN(0, 1/Q)` and `φ` is
//! the URA phase response at direction cosines `γx = sinθ cosψ`,
//! `γy = sinθ sinψ`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scenario::{ArrayGeometry, Scenario, MAX_EAOD_DEG, MIN_EAOD_DEG};

/// URA phase response at direction cosines `(gamma_x, gamma_y)`.
///
/// Entry `u·my + c` is `exp(−j2πd·u·γx)·exp(−j2πd·c·γy)`, i.e. the x-axis
/// vector Kronecker the y-axis vector.
pub fn phase_response(gamma_x: f64, gamma_y: f64, geom: &ArrayGeometry) -> Array1<Complex64> {
    let axis = |n: usize, gamma: f64| -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(1.0, -2.0 * PI * geom.spacing * i as f64 * gamma))
            .collect()
    };
    let x = axis(geom.mx, gamma_x);
    let y = axis(geom.my, gamma_y);
    let mut out = Array1::zeros(geom.m());
    for (u, xu) in x.iter().enumerate() {
        for (c, yc) in y.iter().enumerate() {
            out[u * geom.my + c] = xu * yc;
        }
    }
    out
}

pub fn direction_cosines(eaod_deg: f64, aaod_deg: f64) -> (f64, f64) {
    let (theta, psi) = (eaod_deg.to_radians(), aaod_deg.to_radians());
    (theta.sin() * psi.cos(), theta.sin() * psi.sin())
}

/// One propagation path of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRecord {
    /// BS–UE distance in meters.
    pub distance_m: f64,
    pub gain: Complex64,
    pub eaod_deg: f64,
    pub aaod_deg: f64,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

impl PathRecord {
    pub fn new(distance_m: f64, gain: Complex64, eaod_deg: f64, aaod_deg: f64) -> Self {
        let (gamma_x, gamma_y) = direction_cosines(eaod_deg, aaod_deg);
        Self {
            distance_m,
            gain,
            eaod_deg,
            aaod_deg,
            gamma_x,
            gamma_y,
        }
    }
}

/// Sums the per-path contributions of one user into its channel vector.
pub fn assemble_channel(paths: &[PathRecord], geom: &ArrayGeometry, pathloss_exponent: f64) -> Array1<Complex64> {
    let mut h = Array1::zeros(geom.m());
    for path in paths {
        let amplitude = path.gain * path.distance_m.powf(-pathloss_exponent);
        h.scaled_add(amplitude, &phase_response(path.gamma_x, path.gamma_y, geom));
    }
    h
}

/// Channels of all users for one network realization, with the path
/// parameters that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `K × M`, row `k` is `h_k`.
    pub channels: Array2<Complex64>,
    pub paths: Vec<Vec<PathRecord>>,
    pub group_of_user: Vec<usize>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.channels.nrows()
    }

    /// Builds a realization from explicit path records.
    pub fn from_paths(
        paths: Vec<Vec<PathRecord>>,
        group_of_user: Vec<usize>,
        geom: &ArrayGeometry,
        pathloss_exponent: f64,
    ) -> Result<Self> {
        if paths.len() != group_of_user.len() {
            return Err(Error::Dimension {
                context: "group_of_user",
                expected: paths.len(),
                found: group_of_user.len(),
            });
        }
        let mut channels = Array2::zeros((paths.len(), geom.m()));
        for (k, user_paths) in paths.iter().enumerate() {
            channels
                .row_mut(k)
                .assign(&assemble_channel(user_paths, geom, pathloss_exponent));
        }
        Ok(Self {
            channels,
            paths,
            group_of_user,
            seed: 0,
        })
    }

    /// Largest relative deviation between the stored channels and a
    /// reconstruction from the stored path records.
    pub fn reconstruction_error(&self, geom: &ArrayGeometry, pathloss_exponent: f64) -> f64 {
        self.paths
            .iter()
            .zip(self.channels.rows())
            .map(|(paths, stored)| {
                let rebuilt = assemble_channel(paths, geom, pathloss_exponent);
                let diff: f64 = stored.iter().zip(&rebuilt).map(|(a, b)| (a - b).norm_sqr()).sum();
                let norm: f64 = stored.iter().map(|a| a.norm_sqr()).sum();
                if norm == 0.0 {
                    diff.sqrt()
                } else {
                    (diff / norm).sqrt()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Draws one network realization. Deterministic in `(scenario, seed)`.
///
/// Per user, in order: horizontal distance, UE height, then per path the
/// elevation, azimuth and the real and imaginary parts of the path gain. All
/// paths of a user share the user's BS–UE distance.
pub fn sample_realization(scenario: &Scenario, seed: u64) -> Result<ChannelRealization> {
    scenario.validate()?;
    let q = scenario.num_paths;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain_component = Normal::new(0.0, (0.5 / q as f64).sqrt()).expect("positive std-dev");
    let (d_lo, d_hi) = scenario.horizontal_distance_m;
    let (h_lo, h_hi) = scenario.ue_height_m;

    let group_of_user = scenario.group_of_user();
    let mut paths = Vec::with_capacity(group_of_user.len());
    for &g in &group_of_user {
        let support = &scenario.groups[g];
        let horizontal = uniform(&mut rng, d_lo, d_hi);
        let ue_height = uniform(&mut rng, h_lo, h_hi);
        let distance = horizontal.hypot(scenario.bs_height_m - ue_height);
        let (t_lo, t_hi) = (
            support.mean_eaod_deg - support.eaod_spread_deg,
            support.mean_eaod_deg + support.eaod_spread_deg,
        );
        let (p_lo, p_hi) = support.aaod_range_deg();
        let user_paths = (0..q)
            .map(|_| {
                let theta = uniform(&mut rng, t_lo, t_hi).clamp(MIN_EAOD_DEG, MAX_EAOD_DEG);
                let psi = uniform(&mut rng, p_lo, p_hi);
                let gain = Complex64::new(gain_component.sample(&mut rng), gain_component.sample(&mut rng));
                PathRecord::new(distance, gain, theta, psi)
            })
            .collect();
        paths.push(user_paths);
    }

    let mut realization =
        ChannelRealization::from_paths(paths, group_of_user, &scenario.geometry, scenario.pathloss_exponent)?;
    realization.seed = seed;
    Ok(realization)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_direction_gives_all_ones() {
        let geom = ArrayGeometry::square(4);
        let phi = phase_response(0.0, 0.0, &geom);
        assert!(phi.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn two_by_two_closed_form() {
        let geom = ArrayGeometry::square(2);
        let phi = phase_response(1.0, 0.0, &geom);
        let expected = [1.0, 1.0, -1.0, -1.0];
        for (v, e) in phi.iter().zip(expected) {
            assert!(close(v.re, e, 1e-15) && close(v.im, 0.0, 1e-15), "{v}");
        }
    }

    #[test]
    fn single_path_identity() {
        let geom = ArrayGeometry::square(4);
        let path = PathRecord::new(1.0, Complex64::new(1.0, 0.0), 50.0, 30.0);
        let h = assemble_channel(&[path], &geom, 3.76);
        let phi = phase_response(path.gamma_x, path.gamma_y, &geom);
        assert_eq!(h, phi);
    }

    #[test]
    fn same_seed_same_realization() {
        let scenario = Scenario::microcell(4, 2, 4);
        let a = sample_realization(&scenario, 99).unwrap();
        let b = sample_realization(&scenario, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_realization(&scenario, 100).unwrap();
        assert_ne!(a.channels, c.channels);
    }

    #[test]
    fn sampled_geometry_within_ranges() {
        let scenario = Scenario::microcell(4, 2, 4);
        let r = sample_realization(&scenario, 5).unwrap();
        for (k, paths) in r.paths.iter().enumerate() {
            let support = &scenario.groups[r.group_of_user[k]];
            for p in paths {
                assert!(p.distance_m >= 10.0 && p.distance_m <= (90f64.powi(2) + 8.5f64.powi(2)).sqrt());
                assert!((p.eaod_deg - support.mean_eaod_deg).abs() <= support.eaod_spread_deg + 1e-12);
                assert!((p.aaod_deg - support.mean_aaod_deg).abs() <= support.aaod_spread_deg + 1e-12);
                assert!(p.gamma_x.powi(2) + p.gamma_y.powi(2) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn elevation_is_clamped() {
        let mut scenario = Scenario::microcell(2, 1, 2);
        scenario.groups[0].mean_eaod_deg = 2.0;
        scenario.groups[0].eaod_spread_deg = 10.0;
        let r = sample_realization(&scenario, 1).unwrap();
        assert!(r.paths.iter().flatten().all(|p| p.eaod_deg >= 1.0));
    }

    #[test]
    fn inconsistent_scenario_is_rejected() {
        let mut scenario = Scenario::microcell(4, 1, 3);
        scenario.groups[0].users = 0;
        assert!(matches!(sample_realization(&scenario, 0), Err(Error::Config(_))));
    }
}
