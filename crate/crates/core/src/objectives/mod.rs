//! Client objective populations and gradient oracles.
//!
//! A population is `N` client objectives `F_n` over `R^m`; the global
//! objective is their plain average `f = (1/N) sum_n F_n`. Quadratic
//! populations expose their smoothness, divergence and optimum constants
//! exactly, which is what lets the analysis module check bounds against the
//! true constants rather than estimates.

mod logistic;
mod noise;
mod quadratic;

pub use logistic::{LogisticPopulation, LogisticSpec};
pub use noise::NoiseModel;
pub use quadratic::{build_quadratic, Curvature, QuadraticPopulation, QuadraticSpec};

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::rng::Stream;

/// A federated objective: `N` clients sharing one parameter space.
///
/// The `*_into` methods skip validation and are what the engine calls in its
/// inner loops; the checked wrappers validate client index and dimension.
pub trait Objective: Sync {
    fn num_clients(&self) -> usize;
    fn dim(&self) -> usize;

    /// An upper bound on every client's gradient Lipschitz constant.
    fn lipschitz(&self) -> f64;

    /// `f*` when it is known exactly.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    fn client_value_unchecked(&self, n: usize, x: &[f64]) -> f64;
    fn client_grad_into(&self, n: usize, x: &[f64], out: &mut [f64]);

    /// One draw of the stochastic gradient `g_n(x)`. The default adds noise
    /// from `noise` to the exact gradient.
    fn stochastic_grad_into(
        &self,
        n: usize,
        x: &[f64],
        noise: &NoiseModel,
        rng: &mut Stream,
        out: &mut [f64],
    ) {
        self.client_grad_into(n, x, out);
        noise.perturb(rng, out);
    }

    /// The quadratic view of this objective, if it is one.
    fn as_quadratic(&self) -> Option<&QuadraticPopulation> {
        None
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::invalid("point has non-finite coordinates"));
        }
        Ok(())
    }

    fn check_client(&self, n: usize) -> Result<()> {
        if n >= self.num_clients() {
            return Err(Error::ClientOutOfRange {
                index: n,
                clients: self.num_clients(),
            });
        }
        Ok(())
    }

    /// `∇F_n(x)`; clients are indexed from zero.
    fn grad(&self, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_client(n)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.client_grad_into(n, x, &mut out);
        Ok(out)
    }

    fn client_value(&self, n: usize, x: &[f64]) -> Result<f64> {
        self.check_client(n)?;
        self.check_point(x)?;
        Ok(self.client_value_unchecked(n, x))
    }

    fn stochastic_grad(
        &self,
        n: usize,
        x: &[f64],
        noise: &NoiseModel,
        rng: &mut Stream,
    ) -> Result<Vec<f64>> {
        self.check_client(n)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.stochastic_grad_into(n, x, noise, rng, &mut out);
        Ok(out)
    }

    /// `∇f(x)`, summed over clients in ascending index order.
    fn global_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(global_grad_unchecked(self, x))
    }

    /// `f(x)`, summed over clients in ascending index order.
    fn global_value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(global_value_unchecked(self, x))
    }
}

pub(crate) fn global_grad_unchecked<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> Vec<f64> {
    let m = pop.dim();
    let mut acc = vec![0.0; m];
    let mut g = vec![0.0; m];
    for n in 0..pop.num_clients() {
        pop.client_grad_into(n, x, &mut g);
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi;
        }
    }
    let inv = pop.num_clients() as f64;
    acc.iter_mut().for_each(|a| *a /= inv);
    acc
}

pub(crate) fn global_value_unchecked<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for n in 0..pop.num_clients() {
        s += pop.client_value_unchecked(n, x);
    }
    s / pop.num_clients() as f64
}

/// Every client gradient at `x`, in index order.
pub fn all_client_grads<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> Vec<Vec<f64>> {
    (0..pop.num_clients())
        .map(|n| {
            let mut g = vec![0.0; pop.dim()];
            pop.client_grad_into(n, x, &mut g);
            g
        })
        .collect()
}

/// Either population kind, for callers that pick one at runtime.
#[derive(Debug, Clone)]
pub enum Population {
    Quadratic(QuadraticPopulation),
    Logistic(LogisticPopulation),
}

impl Objective for Population {
    fn num_clients(&self) -> usize {
        match self {
            Population::Quadratic(p) => p.num_clients(),
            Population::Logistic(p) => p.num_clients(),
        }
    }
    fn dim(&self) -> usize {
        match self {
            Population::Quadratic(p) => p.dim(),
            Population::Logistic(p) => p.dim(),
        }
    }
    fn lipschitz(&self) -> f64 {
        match self {
            Population::Quadratic(p) => p.lipschitz(),
            Population::Logistic(p) => p.lipschitz(),
        }
    }
    fn optimum_value(&self) -> Option<f64> {
        match self {
            Population::Quadratic(p) => p.optimum_value(),
            Population::Logistic(p) => p.optimum_value(),
        }
    }
    fn client_value_unchecked(&self, n: usize, x: &[f64]) -> f64 {
        match self {
            Population::Quadratic(p) => p.client_value_unchecked(n, x),
            Population::Logistic(p) => p.client_value_unchecked(n, x),
        }
    }
    fn client_grad_into(&self, n: usize, x: &[f64], out: &mut [f64]) {
        match self {
            Population::Quadratic(p) => p.client_grad_into(n, x, out),
            Population::Logistic(p) => p.client_grad_into(n, x, out),
        }
    }
    fn stochastic_grad_into(
        &self,
        n: usize,
        x: &[f64],
        noise: &NoiseModel,
        rng: &mut Stream,
        out: &mut [f64],
    ) {
        match self {
            Population::Quadratic(p) => p.stochastic_grad_into(n, x, noise, rng, out),
            Population::Logistic(p) => p.stochastic_grad_into(n, x, noise, rng, out),
        }
    }
    fn as_quadratic(&self) -> Option<&QuadraticPopulation> {
        match self {
            Population::Quadratic(p) => Some(p),
            Population::Logistic(_) => None,
        }
    }
}

impl From<QuadraticPopulation> for Population {
    fn from(p: QuadraticPopulation) -> Self {
        Population::Quadratic(p)
    }
}

impl From<LogisticPopulation> for Population {
    fn from(p: LogisticPopulation) -> Self {
        Population::Logistic(p)
    }
}
