#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((rows, cols), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Entries of `FᴴF − I`, largest magnitude.
pub fn unitarity_error(f: &Array2<Complex64>) -> f64 {
    let gram = f.t().mapv(|v| v.conj()).dot(f);
    let mut worst: f64 = 0.0;
    for ((i, j), v) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - Complex64::new(target, 0.0)).norm());
    }
    worst
}

use dlpa_core::net::{LossKind, MlpModel};

/// Gradient entries smaller than this are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Largest relative deviation between backpropagated gradients and central
/// finite differences (step 1e-5) over every parameter of a random
/// `6 → 4 → 3 → 2` model on a random batch of five samples.
pub fn gradient_probe(seed: u64, kind: LossKind) -> f64 {
    let mut g = rng(seed);
    let mut model = MlpModel::new(&[6, 4, 3, 2], seed).unwrap();
    for layer in &mut model.layers {
        layer.bias.mapv_inplace(|_| g.random_range(-0.2..0.2));
    }
    let x = Array2::from_shape_fn((5, 6), |_| g.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((5, 2), |_| g.random_range(0.05..0.95));
    let (_, grads) = model.backward(x.view(), y.view(), kind).unwrap();
    let h = 1e-5;
    let loss_at = |m: &MlpModel| m.backward(x.view(), y.view(), kind).unwrap().0;
    let mut worst: f64 = 0.0;
    for l in 0..model.layers.len() {
        let n_w = model.layers[l].weights.len();
        for idx in 0..n_w + model.layers[l].bias.len() {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let (analytic, cell_p, cell_m) = if idx < n_w {
                (
                    grads[l].weights.as_slice().unwrap()[idx],
                    &mut plus.layers[l].weights.as_slice_mut().unwrap()[idx],
                    &mut minus.layers[l].weights.as_slice_mut().unwrap()[idx],
                )
            } else {
                (
                    grads[l].bias[idx - n_w],
                    &mut plus.layers[l].bias.as_slice_mut().unwrap()[idx - n_w],
                    &mut minus.layers[l].bias.as_slice_mut().unwrap()[idx - n_w],
                )
            };
            *cell_p += h;
            *cell_m -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
