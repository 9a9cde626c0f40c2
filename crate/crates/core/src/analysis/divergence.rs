//! Divergence constants of a (population, schedule) pair.
//!
//! With `g_n(x) = ∇F_n(x) - ∇f(x)` and round weights `q_t`:
//! `β(t) = |Σ q g|^2`, `ν(t) = Σ q |g - Σ q g|^2`, and for an aligned window
//! starting at `t0`, `δ(P) = |(1/P) Σ_t Σ_n q g|^2`. They satisfy
//! `Σ q |g|^2 = β(t) + ν(t) <= max_n |g_n|^2`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{axpy, norm_sq};
use crate::objectives::{global_grad_unchecked, Objective, QuadraticPopulation};
use crate::participation::WeightSchedule;
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub interval: usize,
    /// `max_n |g_n|^2`.
    pub d2: f64,
    pub beta2: f64,
    pub nu2: f64,
    /// Largest over complete aligned windows of length `interval`.
    pub delta2: f64,
    /// `max_t (β(t) + ν(t))`, which never exceeds `d2`. The separate maxima
    /// `beta2` and `nu2` may be attained in different rounds, so their sum
    /// can.
    pub pair_sum: f64,
    /// `max_t |β(t) + ν(t) - Σ q |g|^2|`, relative to `Σ q |g|^2`.
    pub decomposition_residual: f64,
    /// False when values are maxima over sample points, i.e. lower bounds.
    pub exact: bool,
    pub points: usize,
}

impl DivergenceReport {
    fn empty(interval: usize, exact: bool) -> Self {
        Self {
            interval,
            d2: 0.0,
            beta2: 0.0,
            nu2: 0.0,
            delta2: 0.0,
            pair_sum: 0.0,
            decomposition_residual: 0.0,
            exact,
            points: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.d2 = self.d2.max(other.d2);
        self.beta2 = self.beta2.max(other.beta2);
        self.nu2 = self.nu2.max(other.nu2);
        self.delta2 = self.delta2.max(other.delta2);
        self.pair_sum = self.pair_sum.max(other.pair_sum);
        self.decomposition_residual = self
            .decomposition_residual
            .max(other.decomposition_residual);
        self.points += other.points;
    }
}

/// Per-round terms of the decomposition `lhs = nu + beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTerms {
    /// `Σ q |g_n|^2`.
    pub lhs: f64,
    /// `Σ q |g_n - Σ q g|^2`.
    pub nu: f64,
    /// `|Σ q g|^2`.
    pub beta: f64,
}

impl RoundTerms {
    pub fn relative_residual(&self) -> f64 {
        let r = (self.nu + self.beta - self.lhs).abs();
        if self.lhs > 0.0 {
            r / self.lhs
        } else {
            r
        }
    }
}

/// Decomposition terms for one round given the differences `g_n`.
pub fn round_terms(diffs: &[Vec<f64>], row: &[(usize, f64)]) -> RoundTerms {
    let m = diffs.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; m];
    let mut lhs = 0.0;
    for &(n, q) in row {
        axpy(q, &diffs[n], &mut mean);
        lhs += q * norm_sq(&diffs[n]);
    }
    let mut nu = 0.0;
    for &(n, q) in row {
        let s: f64 = diffs[n]
            .iter()
            .zip(&mean)
            .map(|(g, w)| (g - w).powi(2))
            .sum();
        nu += q * s;
    }
    RoundTerms {
        lhs,
        nu,
        beta: norm_sq(&mean),
    }
}

fn check_interval(schedule: &WeightSchedule, interval: usize) -> Result<()> {
    if interval == 0 || interval > schedule.rounds() {
        return Err(Error::invalid(format!(
            "interval must lie in 1..={}, got {interval}",
            schedule.rounds()
        )));
    }
    Ok(())
}

/// All three quantities for fixed differences `g_n`.
fn report_for(
    diffs: &[Vec<f64>],
    schedule: &WeightSchedule,
    interval: usize,
    exact: bool,
) -> DivergenceReport {
    let mut r = DivergenceReport::empty(interval, exact);
    r.points = 1;
    r.d2 = diffs.iter().map(|g| norm_sq(g)).fold(0.0, f64::max);
    for row in schedule.rows() {
        let terms = round_terms(diffs, row);
        r.beta2 = r.beta2.max(terms.beta);
        r.nu2 = r.nu2.max(terms.nu);
        r.pair_sum = r.pair_sum.max(terms.beta + terms.nu);
        r.decomposition_residual = r.decomposition_residual.max(terms.relative_residual());
    }
    let m = diffs.first().map_or(0, Vec::len);
    let p = interval as f64;
    for k in 0..schedule.rounds() / interval {
        let sums = schedule.window_sums(k * interval, interval);
        let mut avg = vec![0.0; m];
        for (g, s) in diffs.iter().zip(&sums) {
            if *s != 0.0 {
                axpy(s / p, g, &mut avg);
            }
        }
        r.delta2 = r.delta2.max(norm_sq(&avg));
    }
    r
}

fn check_clients(n: usize, schedule: &WeightSchedule) -> Result<()> {
    if schedule.clients() != n {
        return Err(Error::invalid(format!(
            "schedule has {} clients but population has {n}",
            schedule.clients()
        )));
    }
    Ok(())
}

/// Closed-form report for a shared-curvature quadratic, whose gradient
/// differences do not depend on `x`.
pub fn divergence_exact(
    pop: &QuadraticPopulation,
    schedule: &WeightSchedule,
    interval: usize,
) -> Result<DivergenceReport> {
    check_clients(pop.num_clients(), schedule)?;
    check_interval(schedule, interval)?;
    let diffs = pop.gradient_offsets().ok_or(Error::NotExact)?;
    Ok(report_for(diffs, schedule, interval, true))
}

/// Points at which [`divergence_sampled`] evaluates the differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Points drawn uniformly from the ball; the first `k` draws do not
    /// depend on the total count.
    pub ball_points: usize,
    /// Extra points, typically recorded iterates.
    pub iterates: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SampleSpec {
    pub fn ball(center: Vec<f64>, radius: f64, ball_points: usize, seed: u64) -> Self {
        Self {
            center,
            radius,
            ball_points,
            iterates: Vec::new(),
            seed,
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let m = self.center.len();
        let mut rng = substream(self.seed, Domain::Sampling, &[]);
        let mut pts = self.iterates.clone();
        for _ in 0..self.ball_points {
            let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let norm = norm_sq(&dir).sqrt();
            let u: f64 = rng.random();
            let r = if norm > 0.0 {
                self.radius * u.powf(1.0 / m as f64) / norm
            } else {
                0.0
            };
            dir.iter_mut()
                .zip(&self.center)
                .for_each(|(d, c)| *d = c + r * *d);
            pts.push(dir);
        }
        pts
    }
}

fn differences<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> Vec<Vec<f64>> {
    let global = global_grad_unchecked(pop, x);
    (0..pop.num_clients())
        .map(|n| {
            let mut g = vec![0.0; x.len()];
            pop.client_grad_into(n, x, &mut g);
            g.iter_mut().zip(&global).for_each(|(a, b)| *a -= b);
            g
        })
        .collect()
}

/// Maxima of the three quantities over sample points. The result is a lower
/// bound on the suprema over all `x`, and is marked inexact.
pub fn divergence_sampled<O: Objective + ?Sized>(
    pop: &O,
    schedule: &WeightSchedule,
    interval: usize,
    samples: &SampleSpec,
) -> Result<DivergenceReport> {
    check_clients(pop.num_clients(), schedule)?;
    check_interval(schedule, interval)?;
    if !(samples.radius.is_finite() && samples.radius >= 0.0) {
        return Err(Error::invalid("sample radius must be finite and >= 0"));
    }
    pop.check_point(&samples.center)?;
    let points = samples.points();
    if points.is_empty() {
        return Err(Error::invalid("sample set is empty"));
    }
    for p in &points {
        pop.check_point(p)?;
    }
    let per_point = exec::map_ordered(&points, |x| {
        report_for(&differences(pop, x), schedule, interval, false)
    });
    let mut out = DivergenceReport::empty(interval, false);
    for r in &per_point {
        out.merge(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// Largest relative residual of `Σ q |g|^2 = ν + β` over points and rounds.
    pub max_relative_residual: f64,
    /// Largest `β + ν - d^2` over points and rounds; at most rounding error.
    pub max_excess_over_d2: f64,
    pub checks: usize,
}

/// Evaluates the decomposition at every point and round.
pub fn decomposition_check<O: Objective + ?Sized>(
    pop: &O,
    schedule: &WeightSchedule,
    points: &[Vec<f64>],
) -> Result<DecompositionReport> {
    check_clients(pop.num_clients(), schedule)?;
    for p in points {
        pop.check_point(p)?;
    }
    let per_point = exec::map_ordered(points, |x| {
        let diffs = differences(pop, x);
        let d2 = diffs.iter().map(|g| norm_sq(g)).fold(0.0, f64::max);
        let mut res: f64 = 0.0;
        let mut excess = f64::NEG_INFINITY;
        for row in schedule.rows() {
            let t = round_terms(&diffs, row);
            res = res.max(t.relative_residual());
            excess = excess.max(t.beta + t.nu - d2);
        }
        (res, excess)
    });
    let mut out = DecompositionReport {
        max_relative_residual: 0.0,
        max_excess_over_d2: f64::NEG_INFINITY,
        checks: 0,
    };
    for (r, e) in per_point {
        out.max_relative_residual = out.max_relative_residual.max(r);
        out.max_excess_over_d2 = out.max_excess_over_d2.max(e);
    }
    out.checks = points.len() * schedule.rounds();
    Ok(out)
}
