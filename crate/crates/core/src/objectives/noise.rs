use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::rng::Stream;

/// Additive zero-mean gradient noise with `E|xi|^2 = sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseModel {
    #[default]
    None,
    /// Isotropic Gaussian, per-coordinate variance `sigma^2 / m`.
    Gaussian { sigma: f64 },
    /// Uniform on the sphere of radius `sigma`.
    Sphere { sigma: f64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } | NoiseModel::Sphere { sigma } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if !s.is_finite() || s < 0.0 {
            return Err(Error::invalid(format!(
                "noise scale must be finite and >= 0, got {s}"
            )));
        }
        Ok(())
    }

    /// Adds one noise draw to `out` in place.
    pub fn perturb(&self, rng: &mut Stream, out: &mut [f64]) {
        match *self {
            NoiseModel::None => {}
            NoiseModel::Gaussian { sigma } => {
                let scale = sigma / (out.len() as f64).sqrt();
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o += scale * z;
                }
            }
            NoiseModel::Sphere { sigma } => {
                let mut dir = vec![0.0; out.len()];
                let r2 = loop {
                    for d in dir.iter_mut() {
                        *d = rng.sample(StandardNormal);
                    }
                    let r2 = norm_sq(&dir);
                    if r2 > 0.0 {
                        break r2;
                    }
                };
                let scale = sigma / r2.sqrt();
                for (o, d) in out.iter_mut().zip(&dir) {
                    *o += scale * d;
                }
            }
        }
    }
}
