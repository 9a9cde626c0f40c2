//! Monte Carlo checks of window-average concentration.
//!
//! For an aligned window of `P` rounds, `qbar^n = (1/P) Σ_t q_t^n` has mean
//! `1/N`. Independent-across-rounds patterns satisfy a Hoeffding bound on
//! `(qbar^n - 1/N)^2`; mixing patterns satisfy a Chebyshev bound driven by
//! `υ^2 = Var(q) + 2 Σ_p Cov(q_t, q_{t+p})`.

use rand::RngCore;

use super::slope::ols;
use crate::error::{Error, Result};
use crate::exec;
use crate::fmt::sig17;
use crate::participation::{generate_schedule, PatternSpec};
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Hoeffding,
    Chebyshev,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Hoeffding => "hoeffding",
            BoundKind::Chebyshev => "chebyshev",
        }
    }
}

pub const BOUNDS_CSV_HEADER: &str = "bound,P,c,threshold,trials,violation_rate,pass";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub kind: BoundKind,
    pub interval: usize,
    /// Nominal failure probability.
    pub c: f64,
    /// Threshold on `(qbar^n - 1/N)^2`.
    pub threshold: f64,
    /// Simulated windows; each contributes one sample per client.
    pub trials: usize,
    pub violation_rate: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(
        kind: BoundKind,
        interval: usize,
        c: f64,
        threshold: f64,
        trials: usize,
        violations: usize,
        samples: usize,
    ) -> Self {
        let violation_rate = violations as f64 / samples as f64;
        let pass = violation_rate <= c + binomial_slack(c, trials);
        Self {
            kind,
            interval,
            c,
            threshold,
            trials,
            violation_rate,
            pass,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind.name(),
            self.interval,
            sig17(self.c),
            sig17(self.threshold),
            self.trials,
            sig17(self.violation_rate),
            u8::from(self.pass)
        )
    }

    pub fn csv_header() -> &'static str {
        BOUNDS_CSV_HEADER
    }
}

/// Three binomial standard errors at rate `c` over `trials` samples.
pub fn binomial_slack(c: f64, trials: usize) -> f64 {
    3.0 * (c * (1.0 - c) / trials as f64).sqrt()
}

fn trial_seed(seed: u64, k: usize) -> u64 {
    substream(seed, Domain::MonteCarlo, &[k as u64]).next_u64()
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
    }
    Ok(())
}

/// Violation rate of `(qbar^n - 1/N)^2 > ln(2/c) / (2P)` over `trials`
/// independent windows and all clients.
pub fn hoeffding_check(
    spec: &PatternSpec,
    clients: usize,
    interval: usize,
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundCheck> {
    if !matches!(
        spec,
        PatternSpec::Full | PatternSpec::IndependentUniform { .. }
    ) {
        return Err(Error::invalid(format!(
            "hoeffding check needs a pattern independent across rounds, got {spec}"
        )));
    }
    spec.validate(clients)?;
    check_c(c)?;
    if interval == 0 || trials == 0 {
        return Err(Error::invalid("interval and trials must be >= 1"));
    }
    let threshold = (2.0 / c).ln() / (2.0 * interval as f64);
    let mean = 1.0 / clients as f64;
    let counts = exec::map_range(trials, |k| -> Result<usize> {
        let s = generate_schedule(spec, clients, interval, trial_seed(seed, k))?;
        let sums = s.window_sums(0, interval);
        Ok(sums
            .iter()
            .filter(|&&v| (v / interval as f64 - mean).powi(2) > threshold)
            .count())
    });
    let mut violations = 0;
    for c in counts {
        violations += c?;
    }
    Ok(BoundCheck::new(
        BoundKind::Hoeffding,
        interval,
        c,
        threshold,
        trials,
        violations,
        trials * clients,
    ))
}

/// Settings for [`chebyshev_mixing_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSpec {
    /// Window lengths, typically geometric.
    pub intervals: Vec<usize>,
    pub c: f64,
    pub trials: usize,
    /// Longest lag of the covariance series.
    pub max_lag: usize,
    /// Lags `1..=ratio_lags` used to fit the per-lag covariance ratio.
    pub ratio_lags: usize,
}

impl MixingSpec {
    pub fn new(intervals: Vec<usize>, c: f64, trials: usize) -> Self {
        Self {
            intervals,
            c,
            trials,
            max_lag: 64,
            ratio_lags: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingReport {
    pub intervals: Vec<usize>,
    /// Mean of `(qbar^n - 1/N)^2` per interval.
    pub variances: Vec<f64>,
    /// Fitted slope of log variance against log interval; `None` when some
    /// variance is zero.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// `Cov(q_t^n, q_{t+p}^n)` for `p = 0..=max_lag`, about `1/N`.
    pub lag_covariance: Vec<f64>,
    /// Truncated estimate of `υ^2`.
    pub upsilon_sq: f64,
    /// First lag with `|Cov| < 1e-4 Var(q)`; the sum stops before it.
    pub truncation_lag: Option<usize>,
    /// False when the cutoff was not reached within `max_lag`.
    pub converged: bool,
    /// Geometric per-lag decay of the covariance over lags `1..=ratio_lags`.
    pub cov_ratio: Option<f64>,
    pub checks: Vec<BoundCheck>,
}

/// Relative covariance level below which the `υ^2` sum is truncated.
pub const COVARIANCE_CUTOFF: f64 = 1e-4;

struct TrialStats {
    /// `dev[i][n]` for interval `i`.
    dev: Vec<Vec<f64>>,
    lag_sums: Vec<f64>,
}

/// Estimates window-average variance as a function of `P`, the long-run
/// variance `υ^2`, and Chebyshev violation rates at `υ^2 / (c P)`.
///
/// Each trial simulates one schedule of `max(intervals)` rounds and uses its
/// leading window for every interval.
pub fn chebyshev_mixing_check(
    spec: &PatternSpec,
    clients: usize,
    mix: &MixingSpec,
    seed: u64,
) -> Result<MixingReport> {
    spec.validate(clients)?;
    check_c(mix.c)?;
    if mix.intervals.is_empty() || mix.intervals.contains(&0) || mix.trials == 0 {
        return Err(Error::invalid(
            "mixing check needs non-empty intervals >= 1 and trials >= 1",
        ));
    }
    let len = *mix.intervals.iter().max().unwrap_or(&1);
    let max_lag = mix.max_lag.min(len - 1);
    let mean = 1.0 / clients as f64;

    let stats = exec::map_range(mix.trials, |k| -> Result<TrialStats> {
        let s = generate_schedule(spec, clients, len, trial_seed(seed, k))?;
        let dense: Vec<Vec<f64>> = s
            .dense_by_client()
            .into_iter()
            .map(|v| v.into_iter().map(|q| q - mean).collect())
            .collect();
        let dev = mix
            .intervals
            .iter()
            .map(|&p| {
                dense
                    .iter()
                    .map(|v| (v[..p].iter().sum::<f64>() / p as f64).powi(2))
                    .collect()
            })
            .collect();
        let lag_sums = (0..=max_lag)
            .map(|lag| {
                dense
                    .iter()
                    .map(|v| v.iter().zip(&v[lag..]).map(|(a, b)| a * b).sum::<f64>())
                    .sum()
            })
            .collect();
        Ok(TrialStats { dev, lag_sums })
    });
    let stats: Vec<TrialStats> = stats.into_iter().collect::<Result<_>>()?;

    let mut lag_covariance = vec![0.0; max_lag + 1];
    for st in &stats {
        for (acc, v) in lag_covariance.iter_mut().zip(&st.lag_sums) {
            *acc += v;
        }
    }
    for (lag, c) in lag_covariance.iter_mut().enumerate() {
        *c /= (mix.trials * clients * (len - lag)) as f64;
    }

    let var = lag_covariance[0];
    let truncation_lag = (1..=max_lag).find(|&p| lag_covariance[p].abs() < COVARIANCE_CUTOFF * var);
    let end = truncation_lag.unwrap_or(max_lag + 1);
    let upsilon_sq = var + 2.0 * lag_covariance[1..end].iter().sum::<f64>();

    let ratio_pts: Vec<(f64, f64)> = (1..=mix.ratio_lags.min(max_lag))
        .map_while(|p| (lag_covariance[p] > 0.0).then(|| (p as f64, lag_covariance[p].ln())))
        .collect();
    let cov_ratio = (ratio_pts.len() >= 2).then(|| ols(&ratio_pts).slope.exp());

    let samples = mix.trials * clients;
    let mut variances = Vec::with_capacity(mix.intervals.len());
    let mut checks = Vec::with_capacity(mix.intervals.len());
    for (i, &p) in mix.intervals.iter().enumerate() {
        let threshold = upsilon_sq / (mix.c * p as f64);
        let mut sum = 0.0;
        let mut violations = 0;
        for st in &stats {
            for &d in &st.dev[i] {
                sum += d;
                violations += usize::from(d > threshold);
            }
        }
        variances.push(sum / samples as f64);
        checks.push(BoundCheck::new(
            BoundKind::Chebyshev,
            p,
            mix.c,
            threshold,
            mix.trials,
            violations,
            samples,
        ));
    }

    let fit = (variances.iter().all(|&v| v > 0.0) && mix.intervals.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = mix
            .intervals
            .iter()
            .zip(&variances)
            .map(|(&p, &v)| ((p as f64).ln(), v.ln()))
            .collect();
        ols(&pts)
    });

    Ok(MixingReport {
        intervals: mix.intervals.clone(),
        variances,
        slope: fit.map(|f| f.slope),
        slope_stderr: fit.map(|f| f.stderr),
        lag_covariance,
        upsilon_sq,
        truncation_lag,
        converged: truncation_lag.is_some(),
        cov_ratio,
        checks,
    })
}
