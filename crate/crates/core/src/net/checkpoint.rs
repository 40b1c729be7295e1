//! Model checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "DLPA-MLP"
//! version      u32
//! layers       u32      n
//! sizes        (n+1) × u32
//! parameters   per layer: weights (out × in, row-major) f64, then bias f64
//! has_adam     u8       0 or 1
//! [adam]       step u64, learning rate, beta1, beta2, epsilon (f64),
//!              first moments, second moments (same layout as parameters)
//! crc32        u32      over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Dense, MlpModel};
use super::train::AdamState;
use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DLPA-MLP";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Guards against absurd allocations from a corrupt header.
const MAX_LAYER_WIDTH: u32 = 1 << 20;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub adam: Option<AdamState>,
}

fn put_layers(enc: &mut Encoder, layers: &[Dense]) {
    for l in layers {
        enc.f64s(l.weights.iter());
        enc.f64s(l.bias.iter());
    }
}

fn get_layers(dec: &mut Decoder<'_>, sizes: &[usize]) -> Result<Vec<Dense>> {
    sizes
        .windows(2)
        .map(|w| {
            let weights = Array2::from_shape_vec((w[1], w[0]), dec.f64s(w[0] * w[1])?)
                .map_err(|e| Error::format(e.to_string()))?;
            let bias = Array1::from(dec.f64s(w[1])?);
            Ok(Dense { weights, bias })
        })
        .collect()
}

impl Checkpoint {
    pub fn new(model: MlpModel, adam: Option<AdamState>) -> Self {
        Self { model, adam }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(CHECKPOINT_MAGIC);
        enc.u32(CHECKPOINT_VERSION);
        let sizes = self.model.layer_sizes();
        enc.u32(self.model.layers.len() as u32);
        for s in &sizes {
            enc.u32(*s as u32);
        }
        put_layers(&mut enc, &self.model.layers);
        match &self.adam {
            None => enc.u8(0),
            Some(a) => {
                enc.u8(1);
                enc.u64(a.step);
                enc.f64s([a.learning_rate, a.beta1, a.beta2, a.epsilon].iter());
                put_layers(&mut enc, &a.m);
                put_layers(&mut enc, &a.v);
            }
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut head = Decoder::unchecked(bytes, "checkpoint");
        if head.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format("not a model checkpoint (bad magic)"));
        }
        let version = head.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let mut dec = Decoder::checked(bytes, "checkpoint")?;
        dec.take(12)?;
        let n = dec.u32()?;
        if n == 0 || n > 64 {
            return Err(Error::format(format!("implausible layer count {n}")));
        }
        let sizes = (0..=n)
            .map(|_| {
                let s = dec.u32()?;
                if s == 0 || s > MAX_LAYER_WIDTH {
                    return Err(Error::format(format!("implausible layer width {s}")));
                }
                Ok(s as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        let model = MlpModel {
            layers: get_layers(&mut dec, &sizes)?,
        };
        let adam = match dec.u8()? {
            0 => None,
            1 => {
                let step = dec.u64()?;
                let h = dec.f64s(4)?;
                let m = get_layers(&mut dec, &sizes)?;
                let v = get_layers(&mut dec, &sizes)?;
                Some(AdamState {
                    step,
                    learning_rate: h[0],
                    beta1: h[1],
                    beta2: h[2],
                    epsilon: h[3],
                    m,
                    v,
                })
            }
            flag => return Err(Error::format(format!("invalid optimizer flag {flag}"))),
        };
        dec.expect_end()?;
        if !model.is_finite() {
            return Err(Error::Validation("checkpoint holds non-finite parameters".into()));
        }
        Ok(Self { model, adam })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
