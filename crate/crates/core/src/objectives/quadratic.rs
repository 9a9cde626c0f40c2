use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Objective;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{substream, Domain};

/// Curvature of a quadratic population.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    /// One matrix shared by every client. Gradient differences are then
    /// constant in `x`, so every divergence constant is exact.
    Shared(Matrix),
    /// One matrix per client (stress mode; divergence is unbounded in `x`).
    PerClient(Vec<Matrix>),
}

/// `F_n(x) = 1/2 (x - c_n)^T A_n (x - c_n)`.
#[derive(Debug, Clone)]
pub struct QuadraticPopulation {
    curvature: Curvature,
    centers: Vec<Vec<f64>>,
    mean_center: Vec<f64>,
    optimum: Vec<f64>,
    f_star: f64,
    lipschitz: f64,
    /// `A(c_bar - c_n)` per client, shared curvature only.
    offsets: Option<Vec<Vec<f64>>>,
    divergence: Option<f64>,
}

/// Parameters for a seeded random quadratic population.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub clients: usize,
    pub dim: usize,
    /// Largest eigenvalue of the curvature, i.e. the smoothness constant.
    pub lipschitz: f64,
    /// Standard deviation of client centers around their group center.
    pub spread: f64,
    /// Smallest eigenvalue as a fraction of `lipschitz`, in `(0, 1]`.
    pub curvature_floor: f64,
    /// Number of contiguous client groups sharing a group center.
    pub groups: usize,
    /// Standard deviation of group centers.
    pub group_spread: f64,
    /// Draw a separate spectrum for every client (same eigenbasis).
    pub per_client_curvature: bool,
}

impl QuadraticSpec {
    pub fn new(clients: usize, dim: usize, lipschitz: f64, spread: f64) -> Self {
        Self {
            clients,
            dim,
            lipschitz,
            spread,
            curvature_floor: 0.1,
            groups: 1,
            group_spread: 0.0,
            per_client_curvature: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.dim == 0 {
            return Err(Error::invalid(
                "quadratic population needs at least one client and one dimension",
            ));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(Error::invalid(format!(
                "lipschitz must be finite and > 0, got {}",
                self.lipschitz
            )));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::invalid(format!(
                "spread must be finite and >= 0, got {}",
                self.spread
            )));
        }
        if !(self.group_spread.is_finite() && self.group_spread >= 0.0) {
            return Err(Error::invalid("group_spread must be finite and >= 0"));
        }
        if !(self.curvature_floor > 0.0 && self.curvature_floor <= 1.0) {
            return Err(Error::invalid("curvature_floor must lie in (0, 1]"));
        }
        if self.groups == 0 || self.groups > self.clients {
            return Err(Error::invalid("groups must lie in 1..=clients"));
        }
        Ok(())
    }

    /// Builds the population; a pure function of the spec and `seed`.
    pub fn build(&self, seed: u64) -> Result<QuadraticPopulation> {
        self.validate()?;
        let (n_clients, m, l) = (self.clients, self.dim, self.lipschitz);
        let mut rng = substream(seed, Domain::Population, &[0]);
        let q = linalg::random_orthogonal(m, &mut rng);
        let spectrum = |rng: &mut crate::rng::Stream| -> Vec<f64> {
            let mut ev = Vec::with_capacity(m);
            ev.push(l);
            for _ in 1..m {
                let u: f64 = rng.random();
                ev.push(l * (self.curvature_floor + (1.0 - self.curvature_floor) * u));
            }
            ev
        };
        let curvature = if self.per_client_curvature {
            Curvature::PerClient(
                (0..n_clients)
                    .map(|_| Matrix::from_spectrum(&q, &spectrum(&mut rng)))
                    .collect(),
            )
        } else {
            Curvature::Shared(Matrix::from_spectrum(&q, &spectrum(&mut rng)))
        };

        let mut crng = substream(seed, Domain::Population, &[1]);
        let group_centers: Vec<Vec<f64>> = (0..self.groups)
            .map(|_| {
                (0..m)
                    .map(|_| self.group_spread * crng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut centers: Vec<Vec<f64>> = (0..n_clients)
            .map(|n| {
                let g = n * self.groups / n_clients;
                group_centers[g]
                    .iter()
                    .map(|z| z + self.spread * crng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mean = mean_of(&centers);
        for c in centers.iter_mut() {
            for (ci, mi) in c.iter_mut().zip(&mean) {
                *ci -= mi;
            }
        }
        QuadraticPopulation::assemble(curvature, centers, l)
    }
}

fn mean_of(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Random quadratic population with shared curvature of top eigenvalue `lipschitz`.
pub fn build_quadratic(
    clients: usize,
    dim: usize,
    lipschitz: f64,
    spread: f64,
    seed: u64,
) -> Result<QuadraticPopulation> {
    QuadraticSpec::new(clients, dim, lipschitz, spread).build(seed)
}

fn check_psd(a: &Matrix) -> Result<f64> {
    let scale = (0..a.dim()).map(|i| a.get(i, i).abs()).fold(1.0, f64::max);
    if a.asymmetry() > 1e-12 * scale {
        return Err(Error::invalid("curvature matrix is not symmetric"));
    }
    let ev = a.symmetric_eigenvalues();
    let top = *ev.last().unwrap();
    if ev[0] < -1e-12 * top.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "curvature matrix has negative eigenvalue {}",
            ev[0]
        )));
    }
    if !(top > 0.0) {
        return Err(Error::invalid("curvature matrix is zero"));
    }
    Ok(top)
}

impl QuadraticPopulation {
    /// Population with explicit shared curvature `a` and client centers.
    pub fn new(a: Matrix, centers: Vec<Vec<f64>>) -> Result<Self> {
        let l = check_psd(&a)?;
        Self::check_centers(&centers, a.dim())?;
        Self::assemble(Curvature::Shared(a), centers, l)
    }

    /// Population with one explicit curvature matrix per client.
    pub fn with_client_curvatures(curvatures: Vec<Matrix>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if curvatures.len() != centers.len() {
            return Err(Error::invalid("one curvature matrix per client required"));
        }
        let mut l: f64 = 0.0;
        for a in &curvatures {
            l = l.max(check_psd(a)?);
        }
        Self::check_centers(&centers, curvatures[0].dim())?;
        if curvatures.iter().any(|a| a.dim() != curvatures[0].dim()) {
            return Err(Error::invalid("curvature matrices differ in dimension"));
        }
        Self::assemble(Curvature::PerClient(curvatures), centers, l)
    }

    fn check_centers(centers: &[Vec<f64>], m: usize) -> Result<()> {
        if centers.is_empty() {
            return Err(Error::invalid("at least one client required"));
        }
        for c in centers {
            if c.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: c.len(),
                });
            }
            if !linalg::all_finite(c) {
                return Err(Error::invalid("non-finite client center"));
            }
        }
        Ok(())
    }

    fn assemble(curvature: Curvature, centers: Vec<Vec<f64>>, lipschitz: f64) -> Result<Self> {
        let mean_center = mean_of(&centers);
        let m = mean_center.len();
        let n = centers.len() as f64;
        let (optimum, offsets, divergence, f_star) = match &curvature {
            Curvature::Shared(a) => {
                let offsets: Vec<Vec<f64>> = centers
                    .iter()
                    .map(|c| a.mul_vec(&linalg::sub(&mean_center, c)))
                    .collect();
                let d2 = offsets
                    .iter()
                    .map(|g| linalg::norm_sq(g))
                    .fold(0.0, f64::max);
                let mut f_star = 0.0;
                for c in &centers {
                    let diff = linalg::sub(c, &mean_center);
                    f_star += linalg::dot(&diff, &a.mul_vec(&diff));
                }
                f_star /= 2.0 * n;
                (mean_center.clone(), Some(offsets), Some(d2), f_star)
            }
            Curvature::PerClient(mats) => {
                let mut h = DMatrix::<f64>::zeros(m, m);
                let mut b = DVector::<f64>::zeros(m);
                for (a, c) in mats.iter().zip(&centers) {
                    let an = a.to_nalgebra();
                    b += &an * DVector::from_column_slice(c);
                    h += an;
                }
                let sol = h.lu().solve(&b).ok_or_else(|| {
                    Error::invalid("summed curvature is singular; optimum not unique")
                })?;
                let x: Vec<f64> = sol.iter().copied().collect();
                let mut f = 0.0;
                for (a, c) in mats.iter().zip(&centers) {
                    let diff = linalg::sub(&x, c);
                    f += 0.5 * linalg::dot(&diff, &a.mul_vec(&diff));
                }
                (x, None, None, f / n)
            }
        };
        Ok(Self {
            curvature,
            centers,
            mean_center,
            optimum,
            f_star,
            lipschitz,
            offsets,
            divergence,
        })
    }

    pub fn curvature(&self) -> &Curvature {
        &self.curvature
    }

    pub fn shared_curvature(&self) -> Option<&Matrix> {
        match &self.curvature {
            Curvature::Shared(a) => Some(a),
            Curvature::PerClient(_) => None,
        }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn mean_center(&self) -> &[f64] {
        &self.mean_center
    }

    /// The global minimiser `x*`.
    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `d^2 = max_n |A(c_bar - c_n)|^2`; `None` for per-client curvature,
    /// where the divergence grows without bound in `x`.
    pub fn divergence(&self) -> Option<f64> {
        self.divergence
    }

    /// The constant gradient differences `∇F_n - ∇f = A(c_bar - c_n)`.
    pub fn gradient_offsets(&self) -> Option<&[Vec<f64>]> {
        self.offsets.as_deref()
    }

    /// The same population with every objective multiplied by `factor > 0`.
    /// The minimiser is unchanged; `L`, `d`, and `f*` scale accordingly.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::invalid("scale factor must be finite and > 0"));
        }
        let scale = |a: &Matrix| {
            let rows: Vec<Vec<f64>> = (0..a.dim())
                .map(|i| a.row(i).iter().map(|v| v * factor).collect())
                .collect();
            Matrix::from_rows(&rows).expect("square")
        };
        let curvature = match &self.curvature {
            Curvature::Shared(a) => Curvature::Shared(scale(a)),
            Curvature::PerClient(ms) => Curvature::PerClient(ms.iter().map(scale).collect()),
        };
        Self::assemble(curvature, self.centers.clone(), self.lipschitz * factor)
    }

    #[inline]
    fn matrix(&self, n: usize) -> &Matrix {
        match &self.curvature {
            Curvature::Shared(a) => a,
            Curvature::PerClient(ms) => &ms[n],
        }
    }
}

impl Objective for QuadraticPopulation {
    fn num_clients(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.mean_center.len()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn client_value_unchecked(&self, n: usize, x: &[f64]) -> f64 {
        let a = self.matrix(n);
        let c = &self.centers[n];
        let mut s = 0.0;
        for i in 0..x.len() {
            let mut row = 0.0;
            for (j, (xj, cj)) in x.iter().zip(c).enumerate() {
                row += a.get(i, j) * (xj - cj);
            }
            s += (x[i] - c[i]) * row;
        }
        0.5 * s
    }

    #[inline]
    fn client_grad_into(&self, n: usize, x: &[f64], out: &mut [f64]) {
        let a = self.matrix(n);
        let c = &self.centers[n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for ((aij, xj), cj) in a.row(i).iter().zip(x).zip(c) {
                s += aij * (xj - cj);
            }
            *o = s;
        }
    }

    fn as_quadratic(&self) -> Option<&QuadraticPopulation> {
        Some(self)
    }
}
