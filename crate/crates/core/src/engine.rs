//! Generalized FedAvg with periodic update amplification, and the
//! wait-for-all baselines.
//!
//! Each round, every participating client starts from the global parameter,
//! runs `I` local SGD steps and reports its change `Δ_t^n`. The server adds
//! the weighted sum `Σ_n q_t^n Δ_t^n` to the parameter and to an accumulator
//! `u`; every `P` rounds the parameter is moved to `x_{t0} + η u` and the
//! accumulator is cleared.

use crate::error::{Error, Result};
use crate::exec;
use crate::fmt::{read_csv, sig17};
use crate::linalg::{all_finite, axpy, norm_sq};
use crate::objectives::{global_grad_unchecked, global_value_unchecked, NoiseModel, Objective};
use crate::participation::WeightSchedule;
use crate::rng::{substream, Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Local updates every round, amplification every `P` rounds.
    Generalized,
    /// Freeze for `P` rounds, average each client's repeated stochastic
    /// gradients, then take one `I`-step local update round.
    WaitMinibatch,
    /// As [`Mode::WaitMinibatch`] with exact client gradients.
    WaitFull,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Generalized => "generalized",
            Mode::WaitMinibatch => "wait-minibatch",
            Mode::WaitFull => "wait-full",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Local learning rate.
    pub gamma: f64,
    /// Amplification factor.
    pub eta: f64,
    pub local_steps: usize,
    /// Amplification interval (generalized) or wait window (baselines).
    pub interval: usize,
    pub rounds: usize,
    /// Checkpoint cadence in rounds; every multiple of `interval` is also a
    /// checkpoint, as are round 0 and the final round.
    pub eval_every: usize,
    pub mode: Mode,
    pub x0: Vec<f64>,
    /// Compute local updates for non-participants too (weighted by zero).
    pub simulate_all: bool,
}

impl RunConfig {
    pub fn new(
        gamma: f64,
        eta: f64,
        local_steps: usize,
        interval: usize,
        rounds: usize,
        x0: Vec<f64>,
    ) -> Self {
        Self {
            gamma,
            eta,
            local_steps,
            interval,
            rounds,
            eval_every: interval.max(1),
            mode: Mode::Generalized,
            x0,
            simulate_all: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be finite and > 0, got {}",
                self.gamma
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!(
                "eta must be finite and > 0, got {}",
                self.eta
            )));
        }
        if self.local_steps == 0 {
            return Err(Error::invalid("local_steps must be >= 1"));
        }
        if self.interval == 0 || self.interval > self.rounds {
            return Err(Error::invalid(format!(
                "interval must lie in 1..=rounds ({}), got {}",
                self.rounds, self.interval
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be >= 1"));
        }
        if !all_finite(&self.x0) {
            return Err(Error::invalid("x0 has non-finite coordinates"));
        }
        Ok(())
    }

    fn is_checkpoint(&self, t: usize) -> bool {
        t == 0
            || t == self.rounds
            || t.is_multiple_of(self.eval_every)
            || t.is_multiple_of(self.interval)
    }
}

/// Server state of the generalized loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub x: Vec<f64>,
    /// Accumulated update since the last amplification.
    pub u: Vec<f64>,
    /// Parameter at the start of the current interval.
    pub x_start: Vec<f64>,
    pub t0: usize,
    /// Rounds completed so far.
    pub t: usize,
}

impl RunState {
    pub fn new(x0: Vec<f64>) -> Self {
        let m = x0.len();
        Self {
            x_start: x0.clone(),
            x: x0,
            u: vec![0.0; m],
            t0: 0,
            t: 0,
        }
    }

    /// Applies one round's aggregate: `x += agg`, `u += agg`.
    pub fn apply_round(&mut self, agg: &[f64]) {
        for ((x, u), a) in self.x.iter_mut().zip(self.u.iter_mut()).zip(agg) {
            *x += a;
            *u += a;
        }
        self.t += 1;
    }

    pub fn at_boundary(&self, interval: usize) -> bool {
        self.t - self.t0 == interval
    }

    /// `x += (η - 1) u`, then starts a new interval. Returns the relative
    /// deviation of the result from `x_{t0} + η u`.
    pub fn amplify(&mut self, eta: f64, interval: usize) -> Result<f64> {
        if !self.at_boundary(interval) {
            return Err(Error::Contract(format!(
                "amplify called after {} rounds of a {interval}-round interval",
                self.t - self.t0
            )));
        }
        axpy(eta - 1.0, &self.u, &mut self.x);
        let mut diff = 0.0;
        let mut scale = 0.0;
        for ((x, s), u) in self.x.iter().zip(&self.x_start).zip(&self.u) {
            let target = s + eta * u;
            diff += (x - target).powi(2);
            scale += target * target;
        }
        let scale = scale
            .max(norm_sq(&self.x_start))
            .max(eta * eta * norm_sq(&self.u));
        let residual = if scale > 0.0 {
            (diff / scale).sqrt()
        } else {
            diff.sqrt()
        };
        self.u.iter_mut().for_each(|v| *v = 0.0);
        self.t0 = self.t;
        self.x_start.clone_from(&self.x);
        Ok(residual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    /// Running minimum of `grad_norm_sq` over checkpoints so far.
    pub min_grad_norm_sq: f64,
    pub is_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub config: RunConfig,
    pub seed: u64,
    pub rho: f64,
    pub pattern: String,
    pub amplifications: usize,
    pub max_amplification_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub checkpoints: Vec<Checkpoint>,
    pub meta: RunMeta,
    pub final_x: Vec<f64>,
}

pub const TRACE_CSV_HEADER: &str = "t,f,grad_norm_sq,min_grad_norm_sq,is_boundary";

impl Trace {
    /// `min_t |∇f(x_t)|^2` over checkpoints.
    pub fn min_grad_norm_sq(&self) -> f64 {
        self.checkpoints
            .last()
            .map_or(f64::INFINITY, |c| c.min_grad_norm_sq)
    }

    pub fn final_grad_norm_sq(&self) -> f64 {
        self.checkpoints
            .last()
            .map_or(f64::INFINITY, |c| c.grad_norm_sq)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRACE_CSV_HEADER);
        s.push('\n');
        for c in &self.checkpoints {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                c.t,
                sig17(c.f),
                sig17(c.grad_norm_sq),
                sig17(c.min_grad_norm_sq),
                u8::from(c.is_boundary)
            ));
        }
        s
    }

    /// Run metadata as `key = value` lines.
    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        let c = &m.config;
        let x0: Vec<String> = c.x0.iter().map(|v| sig17(*v)).collect();
        format!(
            "mode = {}\ngamma = {}\neta = {}\nlocal_steps = {}\ninterval = {}\nrounds = {}\neval_every = {}\n\
             x0 = [{}]\nseed = {}\nrho = {}\npattern = {}\namplifications = {}\nmax_amplification_residual = {}\n",
            c.mode.name(),
            sig17(c.gamma),
            sig17(c.eta),
            c.local_steps,
            c.interval,
            c.rounds,
            c.eval_every,
            x0.join(", "),
            m.seed,
            sig17(m.rho),
            m.pattern,
            m.amplifications,
            sig17(m.max_amplification_residual)
        )
    }
}

/// Parses checkpoint rows written by [`Trace::to_csv`].
pub fn checkpoints_from_csv(text: &str) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    for (line, f) in read_csv(text, TRACE_CSV_HEADER)? {
        let err = |m: &str| Error::Parse {
            line,
            message: m.to_string(),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        out.push(Checkpoint {
            t: f[0].parse().map_err(|_| err("bad round"))?,
            f: num(&f[1])?,
            grad_norm_sq: num(&f[2])?,
            min_grad_norm_sq: num(&f[3])?,
            is_boundary: match &f[4] {
                "1" => true,
                "0" => false,
                _ => return Err(err("bad boundary flag")),
            },
        });
    }
    Ok(out)
}

/// `(f(x), |∇f(x)|^2)` from exact full-batch evaluation.
pub fn checkpoint_eval<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> Result<(f64, f64)> {
    pop.check_point(x)?;
    Ok(eval_unchecked(pop, x))
}

fn eval_unchecked<O: Objective + ?Sized>(pop: &O, x: &[f64]) -> (f64, f64) {
    (
        global_value_unchecked(pop, x),
        norm_sq(&global_grad_unchecked(pop, x)),
    )
}

struct Recorder {
    checkpoints: Vec<Checkpoint>,
    min: f64,
}

impl Recorder {
    fn new() -> Self {
        Self {
            checkpoints: Vec::new(),
            min: f64::INFINITY,
        }
    }

    fn record<O: Objective + ?Sized>(
        &mut self,
        pop: &O,
        cfg: &RunConfig,
        t: usize,
        x: &[f64],
    ) -> Result<()> {
        if !cfg.is_checkpoint(t) {
            return Ok(());
        }
        let (f, g) = eval_unchecked(pop, x);
        if !(f.is_finite() && g.is_finite()) {
            return Err(Error::Diverged {
                round: t,
                norm: norm_sq(x).sqrt(),
            });
        }
        self.min = self.min.min(g);
        self.checkpoints.push(Checkpoint {
            t,
            f,
            grad_norm_sq: g,
            min_grad_norm_sq: self.min,
            is_boundary: t.is_multiple_of(cfg.interval),
        });
        Ok(())
    }
}

fn validate_inputs<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    schedule: &WeightSchedule,
    cfg: &RunConfig,
) -> Result<()> {
    cfg.validate()?;
    noise.validate()?;
    if cfg.x0.len() != pop.dim() {
        return Err(Error::DimensionMismatch {
            expected: pop.dim(),
            actual: cfg.x0.len(),
        });
    }
    if schedule.clients() != pop.num_clients() {
        return Err(Error::invalid(format!(
            "schedule has {} clients but population has {}",
            schedule.clients(),
            pop.num_clients()
        )));
    }
    if schedule.rounds() < cfg.rounds {
        return Err(Error::invalid(format!(
            "schedule covers {} rounds, run needs {}",
            schedule.rounds(),
            cfg.rounds
        )));
    }
    Ok(())
}

/// `I` local SGD steps from `x` on client `n` in round `t`; returns `Δ_t^n`.
fn local_update<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    cfg: &RunConfig,
    seed: u64,
    t: usize,
    n: usize,
    x: &[f64],
) -> Vec<f64> {
    let mut rng = substream(seed, Domain::LocalStep, &[t as u64, n as u64]);
    let mut y = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..cfg.local_steps {
        pop.stochastic_grad_into(n, &y, noise, &mut rng, &mut g);
        axpy(-cfg.gamma, &g, &mut y);
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= xi;
    }
    y
}

/// Runs the configured mode over `schedule` with randomness keyed by `seed`.
pub fn run<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    schedule: &WeightSchedule,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trace> {
    match cfg.mode {
        Mode::Generalized => run_generalized(pop, noise, schedule, cfg, seed),
        Mode::WaitMinibatch | Mode::WaitFull => run_wait_baseline(pop, noise, schedule, cfg, seed),
    }
}

fn run_generalized<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    schedule: &WeightSchedule,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trace> {
    validate_inputs(pop, noise, schedule, cfg)?;
    let m = pop.dim();
    let all: Vec<usize> = (0..pop.num_clients()).collect();
    let mut state = RunState::new(cfg.x0.clone());
    let mut rec = Recorder::new();
    let mut amplifications = 0;
    let mut worst_residual: f64 = 0.0;
    rec.record(pop, cfg, 0, &state.x)?;

    let mut participants = Vec::new();
    for t in 0..cfg.rounds {
        let row = schedule.row(t);
        let mut agg = vec![0.0; m];
        if cfg.simulate_all {
            let deltas = exec::map_ordered(&all, |&n| {
                local_update(pop, noise, cfg, seed, t, n, &state.x)
            });
            let mut weights = vec![0.0; all.len()];
            for &(n, q) in row {
                weights[n] = q;
            }
            for (q, d) in weights.iter().zip(&deltas) {
                axpy(*q, d, &mut agg);
            }
        } else {
            participants.clear();
            participants.extend(row.iter().map(|&(n, _)| n));
            let deltas = exec::map_ordered(&participants, |&n| {
                local_update(pop, noise, cfg, seed, t, n, &state.x)
            });
            for (&(_, q), d) in row.iter().zip(&deltas) {
                axpy(q, d, &mut agg);
            }
        }
        state.apply_round(&agg);
        if state.at_boundary(cfg.interval) {
            worst_residual = worst_residual.max(state.amplify(cfg.eta, cfg.interval)?);
            amplifications += 1;
        }
        if !all_finite(&state.x) {
            return Err(Error::Diverged {
                round: t + 1,
                norm: norm_sq(&state.x).sqrt(),
            });
        }
        rec.record(pop, cfg, t + 1, &state.x)?;
    }

    Ok(Trace {
        checkpoints: rec.checkpoints,
        meta: RunMeta {
            config: cfg.clone(),
            seed,
            rho: schedule.rho(),
            pattern: schedule.describe(),
            amplifications,
            max_amplification_residual: worst_residual,
        },
        final_x: state.x,
    })
}

/// Mean of `draws` independent stochastic gradients of client `n` at `x`.
pub fn averaged_stochastic_grad<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    n: usize,
    x: &[f64],
    draws: usize,
    rng: &mut Stream,
    out: &mut [f64],
) {
    let mut g = vec![0.0; x.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for _ in 0..draws {
        pop.stochastic_grad_into(n, x, noise, rng, &mut g);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += gi;
        }
    }
    let inv = draws as f64;
    out.iter_mut().for_each(|o| *o /= inv);
}

#[allow(clippy::too_many_arguments)]
fn wait_update<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    cfg: &RunConfig,
    seed: u64,
    t0: usize,
    n: usize,
    appearances: usize,
    x: &[f64],
) -> Vec<f64> {
    let mut rng = substream(seed, Domain::WaitSample, &[t0 as u64, n as u64]);
    let mut y = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..cfg.local_steps {
        match cfg.mode {
            Mode::WaitFull => pop.client_grad_into(n, &y, &mut g),
            _ => averaged_stochastic_grad(pop, noise, n, &y, appearances, &mut rng, &mut g),
        }
        axpy(-cfg.gamma, &g, &mut y);
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= xi;
    }
    y
}

/// Wait-for-all baseline over windows of `cfg.interval` rounds.
///
/// The parameter stays frozen for each window. Every client that appears in
/// the window at least once contributes one `I`-step local update from the
/// frozen point, using per-step gradients averaged over its `M`
/// appearances (`WaitMinibatch`) or exact gradients (`WaitFull`). The
/// contributions are averaged with equal weights and applied at the end of
/// the window. A trailing partial window is never applied; `eta` is unused.
pub fn run_wait_baseline<O: Objective + ?Sized>(
    pop: &O,
    noise: &NoiseModel,
    schedule: &WeightSchedule,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Trace> {
    validate_inputs(pop, noise, schedule, cfg)?;
    if cfg.mode == Mode::Generalized {
        return Err(Error::invalid(
            "wait baseline needs mode wait-minibatch or wait-full",
        ));
    }
    let n_clients = pop.num_clients();
    let p = cfg.interval;
    let mut x = cfg.x0.clone();
    let mut rec = Recorder::new();
    rec.record(pop, cfg, 0, &x)?;

    let mut t0 = 0;
    while t0 + p <= cfg.rounds {
        let mut counts = vec![0usize; n_clients];
        for t in t0..t0 + p {
            for &(n, _) in schedule.row(t) {
                counts[n] += 1;
            }
        }
        let members: Vec<(usize, usize)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(n, &c)| (n, c))
            .collect();
        let deltas = exec::map_ordered(&members, |&(n, c)| {
            wait_update(pop, noise, cfg, seed, t0, n, c, &x)
        });
        let w = 1.0 / members.len() as f64;
        let mut agg = vec![0.0; x.len()];
        for d in &deltas {
            axpy(w, d, &mut agg);
        }
        for t in t0 + 1..t0 + p {
            rec.record(pop, cfg, t, &x)?;
        }
        for (xi, a) in x.iter_mut().zip(&agg) {
            *xi += a;
        }
        if !all_finite(&x) {
            return Err(Error::Diverged {
                round: t0 + p,
                norm: norm_sq(&x).sqrt(),
            });
        }
        rec.record(pop, cfg, t0 + p, &x)?;
        t0 += p;
    }
    for t in t0 + 1..=cfg.rounds {
        rec.record(pop, cfg, t, &x)?;
    }

    Ok(Trace {
        checkpoints: rec.checkpoints,
        meta: RunMeta {
            config: cfg.clone(),
            seed,
            rho: schedule.rho(),
            pattern: schedule.describe(),
            amplifications: 0,
            max_amplification_residual: 0.0,
        },
        final_x: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objectives::{build_quadratic, QuadraticPopulation};
    use crate::participation::{generate_schedule, PatternSpec};

    fn scalar_pop(centers: &[f64]) -> QuadraticPopulation {
        QuadraticPopulation::new(
            Matrix::identity_scaled(1, 1.0),
            centers.iter().map(|&c| vec![c]).collect(),
        )
        .unwrap()
    }

    fn alternating(rounds: usize) -> WeightSchedule {
        WeightSchedule::from_rows(2, (0..rounds).map(|t| vec![(t % 2, 1.0)]).collect()).unwrap()
    }

    #[test]
    fn plain_gradient_descent_recursion() {
        let pop = scalar_pop(&[0.0]);
        let sched = generate_schedule(&PatternSpec::Full, 1, 2, 0).unwrap();
        let mut cfg = RunConfig::new(0.1, 1.0, 1, 1, 2, vec![2.0]);
        cfg.eval_every = 1;
        let tr = run(&pop, &NoiseModel::None, &sched, &cfg, 0).unwrap();
        assert!((tr.final_x[0] - 1.62).abs() < 1e-15);
        let cfg1 = RunConfig { rounds: 1, ..cfg };
        let tr1 = run(&pop, &NoiseModel::None, &sched, &cfg1, 0).unwrap();
        assert!((tr1.final_x[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn alternating_participation_matches_hand_value() {
        // x0 = 2, gamma = 0.05, I = 2, P = 2, eta = 3 on centers (-1, +1):
        // round 0 moves to 1.7075, round 1 to 1.63851875, u = -0.36148125,
        // amplification lands on 2 + 3u = 0.91555625.
        let pop = scalar_pop(&[-1.0, 1.0]);
        let cfg = RunConfig::new(0.05, 3.0, 2, 2, 2, vec![2.0]);
        let tr = run(&pop, &NoiseModel::None, &alternating(2), &cfg, 0).unwrap();
        assert!((tr.final_x[0] - 0.91555625).abs() < 1e-14);
        assert_eq!(tr.meta.amplifications, 1);
    }

    #[test]
    fn amplify_examples() {
        let mut s = RunState::new(vec![0.0]);
        s.apply_round(&[0.5]);
        s.amplify(10.0, 1).unwrap();
        assert_eq!(s.x, vec![5.0]);
        assert_eq!(s.u, vec![0.0]);
        assert_eq!(s.t0, 1);

        let mut s = RunState::new(vec![1.0, 2.0]);
        s.apply_round(&[0.25, -0.5]);
        let before = s.x.clone();
        s.amplify(1.0, 1).unwrap();
        assert_eq!(s.x, before);

        let mut s = RunState::new(vec![3.0]);
        s.apply_round(&[0.0]);
        s.amplify(7.0, 1).unwrap();
        assert_eq!(s.x, vec![3.0]);
    }

    #[test]
    fn amplify_off_boundary_is_a_contract_error() {
        let mut s = RunState::new(vec![0.0]);
        s.apply_round(&[1.0]);
        assert!(matches!(s.amplify(2.0, 2), Err(Error::Contract(_))));
    }

    #[test]
    fn checkpoint_examples() {
        let pop = scalar_pop(&[-1.0, 1.0]);
        assert_eq!(checkpoint_eval(&pop, &[0.0]).unwrap(), (0.5, 0.0));
        assert_eq!(checkpoint_eval(&pop, &[1.0]).unwrap(), (1.0, 1.0));
        let q = build_quadratic(5, 3, 1.0, 1.0, 4).unwrap();
        let x = [0.3, -1.2, 0.7];
        let (_, g2) = checkpoint_eval(&q, &x).unwrap();
        assert_eq!(g2, norm_sq(&q.global_grad(&x).unwrap()));
    }

    #[test]
    fn checkpoints_cover_boundaries() {
        let pop = build_quadratic(4, 2, 1.0, 1.0, 1).unwrap();
        let sched = generate_schedule(
            &PatternSpec::IndependentUniform { participants: 2 },
            4,
            10,
            1,
        )
        .unwrap();
        let mut cfg = RunConfig::new(0.05, 2.0, 2, 3, 10, vec![1.0, 1.0]);
        cfg.eval_every = 4;
        let tr = run(&pop, &NoiseModel::Gaussian { sigma: 0.1 }, &sched, &cfg, 3).unwrap();
        let ts: Vec<usize> = tr.checkpoints.iter().map(|c| c.t).collect();
        assert_eq!(ts, vec![0, 3, 4, 6, 8, 9, 10]);
        assert!(tr
            .checkpoints
            .windows(2)
            .all(|w| w[1].min_grad_norm_sq <= w[0].min_grad_norm_sq));
        assert_eq!(tr.meta.amplifications, 3);
        let parsed = checkpoints_from_csv(&tr.to_csv()).unwrap();
        assert_eq!(parsed, tr.checkpoints);
    }

    #[test]
    fn divergence_is_reported_with_round() {
        let pop = scalar_pop(&[0.0]);
        let sched = generate_schedule(&PatternSpec::Full, 1, 2000, 0).unwrap();
        let cfg = RunConfig::new(10.0, 1.0, 1, 1, 2000, vec![1.0]);
        match run(&pop, &NoiseModel::None, &sched, &cfg, 0) {
            Err(Error::Diverged { round, .. }) => assert!(round > 100 && round < 400, "{round}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let pop = build_quadratic(4, 2, 1.0, 1.0, 1).unwrap();
        let sched = generate_schedule(&PatternSpec::Full, 3, 10, 1).unwrap();
        let cfg = RunConfig::new(0.1, 1.0, 1, 1, 10, vec![0.0, 0.0]);
        assert!(run(&pop, &NoiseModel::None, &sched, &cfg, 0).is_err());
        let sched = generate_schedule(&PatternSpec::Full, 4, 5, 1).unwrap();
        assert!(run(&pop, &NoiseModel::None, &sched, &cfg, 0).is_err());
        let sched = generate_schedule(&PatternSpec::Full, 4, 10, 1).unwrap();
        let bad = RunConfig {
            gamma: -1.0,
            ..cfg.clone()
        };
        assert!(run(&pop, &NoiseModel::None, &sched, &bad, 0).is_err());
        let bad = RunConfig {
            interval: 11,
            ..cfg.clone()
        };
        assert!(run(&pop, &NoiseModel::None, &sched, &bad, 0).is_err());
        let bad = RunConfig {
            x0: vec![0.0],
            ..cfg
        };
        assert!(run(&pop, &NoiseModel::None, &sched, &bad, 0).is_err());
    }

    #[test]
    fn wait_full_degenerate_window_is_gradient_descent() {
        let pop = build_quadratic(1, 3, 1.0, 1.0, 8).unwrap();
        let sched = generate_schedule(&PatternSpec::Full, 1, 20, 0).unwrap();
        let x0 = vec![1.0, -2.0, 0.5];
        let mut cfg = RunConfig::new(0.3, 1.0, 1, 1, 20, x0.clone());
        let gen = run(&pop, &NoiseModel::None, &sched, &cfg, 0).unwrap();
        cfg.mode = Mode::WaitFull;
        let wait = run(&pop, &NoiseModel::Gaussian { sigma: 5.0 }, &sched, &cfg, 0).unwrap();
        assert_eq!(gen.final_x, wait.final_x);
        let mut x = x0;
        for _ in 0..20 {
            let g = pop.grad(0, &x).unwrap();
            axpy(-0.3, &g, &mut x);
        }
        for (a, b) in x.iter().zip(&wait.final_x) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn wait_freezes_within_window() {
        let pop = build_quadratic(4, 2, 1.0, 1.0, 2).unwrap();
        let sched = generate_schedule(
            &PatternSpec::RegularizedPermutation { participants: 1 },
            4,
            10,
            2,
        )
        .unwrap();
        let mut cfg = RunConfig::new(0.1, 1.0, 2, 4, 10, vec![2.0, 2.0]);
        cfg.mode = Mode::WaitMinibatch;
        cfg.eval_every = 1;
        let tr = run(&pop, &NoiseModel::Gaussian { sigma: 0.5 }, &sched, &cfg, 5).unwrap();
        assert_eq!(tr.checkpoints.len(), 11);
        for t in 1..4 {
            assert_eq!(
                tr.checkpoints[t].grad_norm_sq,
                tr.checkpoints[0].grad_norm_sq
            );
        }
        assert_ne!(
            tr.checkpoints[4].grad_norm_sq,
            tr.checkpoints[0].grad_norm_sq
        );
        assert_eq!(
            tr.checkpoints[9].grad_norm_sq,
            tr.checkpoints[8].grad_norm_sq
        );
        assert_eq!(
            tr.checkpoints[10].grad_norm_sq,
            tr.checkpoints[8].grad_norm_sq
        );
    }

    #[test]
    fn averaged_gradient_variance_shrinks_with_draws() {
        // Var of the mean of M draws is sigma^2 / M.
        let pop = build_quadratic(2, 4, 1.0, 1.0, 3).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let exact = pop.grad(1, &x).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 2.0 };
        let mut rng = substream(77, Domain::WaitSample, &[]);
        let windows = 10_000;
        for draws in [1usize, 4, 10] {
            let mut out = vec![0.0; 4];
            let mut acc = 0.0;
            for _ in 0..windows {
                averaged_stochastic_grad(&pop, &noise, 1, &x, draws, &mut rng, &mut out);
                acc += crate::linalg::dist_sq(&out, &exact);
            }
            let var = acc / windows as f64;
            let want = 4.0 / draws as f64;
            assert!(
                (var - want).abs() < 0.05 * want,
                "M={draws}: {var} vs {want}"
            );
        }
    }
}
