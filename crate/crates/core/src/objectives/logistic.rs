use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{NoiseModel, Objective};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{substream, Domain, Stream};

/// Synthetic non-IID logistic regression: client `n` holds mostly one label.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSpec {
    pub clients: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Fraction of a client's samples carrying its majority label.
    pub majority_fraction: f64,
    /// l2 regularisation coefficient.
    pub reg: f64,
    /// Minibatch size for stochastic gradients; `None` uses the full client
    /// dataset plus any additive noise.
    pub batch: Option<usize>,
}

impl LogisticSpec {
    pub fn new(clients: usize, dim: usize, samples_per_client: usize) -> Self {
        Self {
            clients,
            dim,
            samples_per_client,
            separation: 1.0,
            majority_fraction: 0.95,
            reg: 0.01,
            batch: None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<LogisticPopulation> {
        if self.clients == 0 || self.dim == 0 || self.samples_per_client == 0 {
            return Err(Error::invalid(
                "logistic population needs clients, dimension and samples",
            ));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(Error::invalid("reg must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.majority_fraction) || !self.separation.is_finite() {
            return Err(Error::invalid(
                "majority_fraction must lie in [0, 1] and separation be finite",
            ));
        }
        if let Some(b) = self.batch {
            if b == 0 || b > self.samples_per_client {
                return Err(Error::invalid("batch must lie in 1..=samples_per_client"));
            }
        }
        let m = self.dim;
        let mut rng = substream(seed, Domain::Population, &[2]);
        let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = linalg::norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|d| *d *= self.separation / norm);

        let majority = (self.majority_fraction * self.samples_per_client as f64).round() as usize;
        let mut features = Vec::with_capacity(self.clients);
        let mut labels = Vec::with_capacity(self.clients);
        for n in 0..self.clients {
            let major = if n % 2 == 0 { 1.0 } else { -1.0 };
            let mut xs = Vec::with_capacity(self.samples_per_client);
            let mut ys = Vec::with_capacity(self.samples_per_client);
            for s in 0..self.samples_per_client {
                let y = if s < majority { major } else { -major };
                let x: Vec<f64> = dir
                    .iter()
                    .map(|d| y * d + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                xs.push(x);
                ys.push(y);
            }
            features.push(xs);
            labels.push(ys);
        }
        let lipschitz = self.reg
            + features
                .iter()
                .map(|xs: &Vec<Vec<f64>>| linalg::gram_lambda_max(xs, m) / (4.0 * xs.len() as f64))
                .fold(0.0, f64::max);
        Ok(LogisticPopulation {
            dim: m,
            features,
            labels,
            reg: self.reg,
            lipschitz,
            batch: self.batch,
        })
    }
}

/// Regularised logistic loss averaged over each client's local samples.
#[derive(Debug, Clone)]
pub struct LogisticPopulation {
    dim: usize,
    features: Vec<Vec<Vec<f64>>>,
    labels: Vec<Vec<f64>>,
    reg: f64,
    lipschitz: f64,
    batch: Option<usize>,
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticPopulation {
    pub fn batch(&self) -> Option<usize> {
        self.batch
    }

    pub fn samples(&self, n: usize) -> usize {
        self.labels[n].len()
    }

    fn accumulate_sample(&self, n: usize, s: usize, w: &[f64], out: &mut [f64]) {
        let x = &self.features[n][s];
        let y = self.labels[n][s];
        let coef = -y * sigmoid(-y * linalg::dot(w, x));
        linalg::axpy(coef, x, out);
    }
}

impl Objective for LogisticPopulation {
    fn num_clients(&self) -> usize {
        self.features.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// `reg + max_n lambda_max(X_n^T X_n) / (4 |D_n|)`.
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn client_value_unchecked(&self, n: usize, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (x, y) in self.features[n].iter().zip(&self.labels[n]) {
            s += softplus(-y * linalg::dot(w, x));
        }
        s / self.labels[n].len() as f64 + 0.5 * self.reg * linalg::norm_sq(w)
    }

    fn client_grad_into(&self, n: usize, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let len = self.labels[n].len();
        for s in 0..len {
            self.accumulate_sample(n, s, w, out);
        }
        let inv = 1.0 / len as f64;
        for (o, wi) in out.iter_mut().zip(w) {
            *o = *o * inv + self.reg * wi;
        }
    }

    /// Minibatch gradient over `batch` samples drawn without replacement
    /// (when configured), plus any additive noise.
    fn stochastic_grad_into(
        &self,
        n: usize,
        w: &[f64],
        noise: &NoiseModel,
        rng: &mut Stream,
        out: &mut [f64],
    ) {
        match self.batch {
            Some(b) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let mut picks = index::sample(rng, self.labels[n].len(), b).into_vec();
                picks.sort_unstable();
                for s in picks {
                    self.accumulate_sample(n, s, w, out);
                }
                let inv = 1.0 / b as f64;
                for (o, wi) in out.iter_mut().zip(w) {
                    *o = *o * inv + self.reg * wi;
                }
            }
            None => self.client_grad_into(n, w, out),
        }
        noise.perturb(rng, out);
    }
}
