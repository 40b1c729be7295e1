//! Particle-swarm power allocation oracle.
//!
//! Maximizes the sum-rate over per-user powers for a fixed hybrid precoder.
//! The sum-rate optimum always uses the whole power budget (scaling every
//! power up raises every SINR), so particles search the direction of the
//! power vector: each particle is a weight vector in `[0, 1]^K`, normalized
//! to consume exactly `P_T` before evaluation.

use ndarray::ArrayView2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{normalize_full_power, LinkGains, PowerAllocation};

/// Global-best PSO hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub cognitive_c1: f64,
    pub social_c2: f64,
    /// Velocity limit as a fraction of the `[0, 1]` search range.
    pub velocity_clamp: f64,
    /// Stop after this many consecutive iterations without an improvement
    /// larger than [`STALL_EPSILON`].
    pub stall_iters: usize,
    /// Start one particle at equal per-beam transmit power
    /// (`p_k ∝ 1/b_kᴴb_k`), the high-SNR zero-forcing optimum.
    pub seed_beam_power: bool,
    pub seed: u64,
}

pub const STALL_EPSILON: f64 = 1e-9;

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            max_iters: 500,
            inertia_start: 0.9,
            inertia_end: 0.4,
            cognitive_c1: 2.0,
            social_c2: 2.0,
            velocity_clamp: 0.2,
            stall_iters: 75,
            seed_beam_power: true,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::config("swarm_size must be at least 2"));
        }
        if !(0.0 < self.inertia_end && self.inertia_end <= self.inertia_start && self.inertia_start < 1.5) {
            return Err(Error::config("inertia must satisfy 0 < end <= start < 1.5"));
        }
        if !(self.cognitive_c1 > 0.0 && self.social_c2 > 0.0) {
            return Err(Error::config("acceleration coefficients must be positive"));
        }
        if !(self.velocity_clamp > 0.0 && self.velocity_clamp.is_finite()) {
            return Err(Error::config("velocity clamp must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    /// Best particle, before power normalization.
    pub best_raw: Vec<f64>,
    /// Sum-rate of `best_raw` after normalization, bps/Hz.
    pub best_fitness: f64,
    pub iterations_used: usize,
    /// Global best after initialization and after every iteration.
    pub fitness_trace: Vec<f64>,
}

impl PsoResult {
    pub fn allocation(&self, gains: &LinkGains, p_total: f64) -> Result<PowerAllocation> {
        normalize_full_power(&self.best_raw, &gains.bb_gains, p_total)
    }
}

/// Sum-rate of a weight vector after full-power normalization. An all-zero
/// weight vector transmits nothing and scores 0.
fn fitness(gains: &LinkGains, raw: &[f64], sigma2: f64, p_total: f64, powers: &mut [f64]) -> f64 {
    let denom: f64 = raw.iter().zip(&gains.bb_gains).map(|(r, g)| r * g).sum();
    if !(denom > 0.0) {
        return 0.0;
    }
    let scale = p_total / denom;
    for (p, r) in powers.iter_mut().zip(raw) {
        *p = r * scale;
    }
    gains.sum_rate(powers, sigma2)
}

/// Re-evaluates the normalized sum-rate of a weight vector.
pub fn evaluate_raw(gains: &LinkGains, raw: &[f64], sigma2: f64, p_total: f64) -> f64 {
    let mut powers = vec![0.0; raw.len()];
    fitness(gains, raw, sigma2, p_total, &mut powers)
}

pub fn pso_optimize(gains: &LinkGains, sigma2: f64, p_total: f64, cfg: &PsoConfig) -> Result<PsoResult> {
    cfg.validate()?;
    let k = gains.num_users();
    if k == 0 {
        return Err(Error::config("PSO needs at least one user"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vmax = cfg.velocity_clamp;
    let n = cfg.swarm_size;
    let mut powers = vec![0.0; k];

    // particle 0 sits at equal powers, particle 1 optionally at equal
    // per-beam transmit power
    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if i == 0 {
                vec![1.0; k]
            } else if i == 1 && cfg.seed_beam_power {
                equal_beam_power_weights(&gains.bb_gains)
            } else {
                (0..k).map(|_| rng.random::<f64>()).collect()
            }
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-vmax..=vmax)).collect())
        .collect();
    let mut personal_best = positions.clone();
    let mut personal_fit: Vec<f64> = positions
        .iter()
        .map(|x| fitness(gains, x, sigma2, p_total, &mut powers))
        .collect();
    let mut best_idx = argmax(&personal_fit);
    let mut global_best = personal_best[best_idx].clone();
    let mut global_fit = personal_fit[best_idx];

    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(global_fit);
    let mut stall = 0;
    let mut iterations_used = 0;
    let span = cfg.max_iters.saturating_sub(1).max(1) as f64;

    for it in 0..cfg.max_iters {
        let w = cfg.inertia_start - (cfg.inertia_start - cfg.inertia_end) * it as f64 / span;
        for i in 0..n {
            let x = &mut positions[i];
            let v = &mut velocities[i];
            let pb = &personal_best[i];
            for d in 0..k {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let vel = w * v[d] + cfg.cognitive_c1 * r1 * (pb[d] - x[d]) + cfg.social_c2 * r2 * (global_best[d] - x[d]);
                v[d] = vel.clamp(-vmax, vmax);
                x[d] = (x[d] + v[d]).clamp(0.0, 1.0);
            }
            let f = fitness(gains, x, sigma2, p_total, &mut powers);
            if f > personal_fit[i] {
                personal_fit[i] = f;
                personal_best[i].copy_from_slice(x);
            }
        }
        best_idx = argmax(&personal_fit);
        let improvement = personal_fit[best_idx] - global_fit;
        if improvement > 0.0 {
            global_fit = personal_fit[best_idx];
            global_best.copy_from_slice(&personal_best[best_idx]);
        }
        iterations_used = it + 1;
        trace.push(global_fit);
        if improvement > STALL_EPSILON {
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_iters {
                break;
            }
        }
    }

    Ok(PsoResult {
        best_raw: global_best,
        best_fitness: global_fit,
        iterations_used,
        fitness_trace: trace,
    })
}

/// Weights `min_t(b_tᴴb_t) / b_kᴴb_k`, largest weight exactly 1.
pub fn equal_beam_power_weights(bb_gains: &[f64]) -> Vec<f64> {
    let min = bb_gains.iter().copied().fold(f64::INFINITY, f64::min);
    bb_gains.iter().map(|g| if *g > 0.0 { min / g } else { 1.0 }).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Equal weights, normalized to consume the full budget.
pub fn equal_power_allocation(bb: ArrayView2<'_, Complex64>, p_total: f64) -> Result<PowerAllocation> {
    let gains: Vec<f64> = bb.columns().into_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect();
    equal_power_from_gains(&gains, p_total)
}

pub fn equal_power_from_gains(bb_gains: &[f64], p_total: f64) -> Result<PowerAllocation> {
    if bb_gains.is_empty() {
        return Err(Error::config("equal power allocation needs at least one user"));
    }
    normalize_full_power(&vec![1.0; bb_gains.len()], bb_gains, p_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn synthetic(gain_sq: Array2<f64>, bb_gains: Vec<f64>) -> LinkGains {
        LinkGains { gain_sq, bb_gains }
    }

    #[test]
    fn single_user_matches_closed_form() {
        let gains = synthetic(array![[3.0]], vec![4.0]);
        let (p_total, sigma2) = (100.0, 0.5);
        let res = pso_optimize(&gains, sigma2, p_total, &PsoConfig::default()).unwrap();
        let closed = (1.0 + p_total * 3.0 / (4.0 * sigma2)).log2();
        assert!((res.best_fitness - closed).abs() < 1e-12);
    }

    #[test]
    fn trace_is_monotone_and_best_reevaluates() {
        let gains = synthetic(array![[1.0, 0.02, 0.01], [0.03, 0.5, 0.02], [0.01, 0.01, 0.1]], vec![1.0, 2.0, 10.0]);
        let res = pso_optimize(&gains, 0.01, 10.0, &PsoConfig::default().with_seed(3)).unwrap();
        assert!(res.fitness_trace.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(res.fitness_trace.len(), res.iterations_used + 1);
        assert_eq!(*res.fitness_trace.last().unwrap(), res.best_fitness);
        let again = evaluate_raw(&gains, &res.best_raw, 0.01, 10.0);
        assert!((again - res.best_fitness).abs() <= 1e-12);
        assert!(res.best_raw.iter().all(|&r| (0.0..=1.0).contains(&r)));
        let eq = equal_power_from_gains(&gains.bb_gains, 10.0).unwrap();
        assert!(res.best_fitness >= gains.sum_rate(&eq.powers_mw, 0.01));
    }

    #[test]
    fn deterministic_given_seed() {
        let gains = synthetic(array![[1.0, 0.1], [0.2, 0.3]], vec![1.0, 3.0]);
        let cfg = PsoConfig::default().with_seed(11);
        assert_eq!(
            pso_optimize(&gains, 0.05, 1.0, &cfg).unwrap(),
            pso_optimize(&gains, 0.05, 1.0, &cfg).unwrap()
        );
    }

    #[test]
    fn equal_allocation_closed_forms() {
        let one = Complex64::new(1.0, 0.0);
        let eye = Array2::from_diag(&ndarray::arr1(&[one; 4]));
        let eq = equal_power_allocation(eye.view(), 100.0).unwrap();
        assert!(eq.powers_mw.iter().all(|&p| (p - 25.0).abs() < 1e-12));
        let b = array![[Complex64::new(2.0, 0.0)]];
        let eq = equal_power_allocation(b.view(), 100.0).unwrap();
        assert!((eq.powers_mw[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let gains = synthetic(array![[1.0]], vec![1.0]);
        let bad = PsoConfig {
            swarm_size: 1,
            ..PsoConfig::default()
        };
        assert!(pso_optimize(&gains, 1.0, 1.0, &bad).is_err());
        let bad = PsoConfig {
            inertia_end: 1.0,
            inertia_start: 0.5,
            ..PsoConfig::default()
        };
        assert!(pso_optimize(&gains, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn beam_power_weights_equalize_transmit_power() {
        let w = equal_beam_power_weights(&[2.0, 0.5, 8.0]);
        assert_eq!(w, vec![0.25, 1.0, 0.0625]);
        let products: Vec<f64> = w.iter().zip([2.0, 0.5, 8.0]).map(|(a, g)| a * g).collect();
        assert!(products.iter().all(|p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn seeded_particle_is_never_beaten_by_its_start() {
        // diagonal link: equal per-beam power is optimal at high SNR
        let gains = synthetic(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], vec![1.0, 40.0, 900.0]);
        let start = evaluate_raw(&gains, &equal_beam_power_weights(&gains.bb_gains), 1e-6, 1.0);
        let seeded = pso_optimize(&gains, 1e-6, 1.0, &PsoConfig::default().with_seed(5)).unwrap();
        assert!(seeded.fitness_trace[0] >= start);
        assert!(seeded.best_fitness >= start);
        let plain = PsoConfig {
            seed_beam_power: false,
            max_iters: 0,
            ..PsoConfig::default().with_seed(5)
        };
        let unseeded = pso_optimize(&gains, 1e-6, 1.0, &plain).unwrap();
        assert!(unseeded.fitness_trace[0] < start);
    }
}
