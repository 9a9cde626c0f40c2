//! Learning-rate plans and amplification-interval choice.
//!
//! The convergence guarantee needs `γ <= 1/(12 L I P)`, `γ η <= 1/(L I P)`
//! and `P <= T/2`. Every plan records whether it meets all three.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSource {
    /// `γ = 1/(12 L I P √T)`, `η = min(12 P √(L I ℱ) / (σ ρ), 12 √T)`.
    NoiseAdaptive,
    /// `γ = 1/(12 L I P √T)`, `η = 12 P √(L I ℱ) / ρ`, valid only when
    /// `√ℱ / (ρ √(L I T)) <= 1/(L I P)`.
    NoiseAgnostic,
    /// Largest `γ` meeting both step-size caps for a given `η`.
    TheoremCaps,
    Manual,
}

impl PlanSource {
    pub fn name(self) -> &'static str {
        match self {
            PlanSource::NoiseAdaptive => "noise-adaptive",
            PlanSource::NoiseAgnostic => "noise-agnostic",
            PlanSource::TheoremCaps => "theorem-caps",
            PlanSource::Manual => "manual",
        }
    }
}

/// Problem constants a plan depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanInputs {
    pub lipschitz: f64,
    /// Initial optimality gap `ℱ = f(x_0) - f*`.
    pub gap: f64,
    pub sigma: f64,
    /// Participation constant `ρ` in `(0, 1]`.
    pub rho: f64,
    pub local_steps: usize,
    pub interval: usize,
    pub rounds: usize,
}

impl PlanInputs {
    fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        pos(self.lipschitz, "lipschitz")?;
        pos(self.gap, "gap")?;
        pos(self.rho, "rho")?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if self.local_steps == 0 || self.interval == 0 || self.rounds == 0 {
            return Err(Error::invalid(
                "local_steps, interval and rounds must be >= 1",
            ));
        }
        Ok(())
    }

    fn lip(&self) -> f64 {
        self.lipschitz * self.local_steps as f64 * self.interval as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LRPlan {
    pub gamma: f64,
    pub eta: f64,
    pub source: PlanSource,
    pub valid: bool,
    pub notes: Vec<String>,
}

impl LRPlan {
    fn checked(
        gamma: f64,
        eta: f64,
        source: PlanSource,
        lip: f64,
        interval: usize,
        rounds: usize,
        mut notes: Vec<String>,
    ) -> Self {
        let mut valid = notes.is_empty();
        if !(gamma.is_finite() && gamma > 0.0 && eta.is_finite() && eta > 0.0) {
            notes.push(format!(
                "non-positive or non-finite rates: gamma = {gamma}, eta = {eta}"
            ));
            valid = false;
        }
        if gamma > 1.0 / (12.0 * lip) {
            notes.push(format!(
                "gamma = {gamma:e} exceeds 1/(12 L I P) = {:e}",
                1.0 / (12.0 * lip)
            ));
            valid = false;
        }
        if gamma * eta > 1.0 / lip {
            notes.push(format!(
                "gamma * eta = {:e} exceeds 1/(L I P) = {:e}",
                gamma * eta,
                1.0 / lip
            ));
            valid = false;
        }
        if 2 * interval > rounds {
            notes.push(format!(
                "P = {interval} exceeds T/2 = {}",
                rounds as f64 / 2.0
            ));
            valid = false;
        }
        Self {
            gamma,
            eta,
            source,
            valid,
            notes,
        }
    }
}

/// Lowers `eta` by at most a few ulps so that `gamma * eta <= cap` holds in
/// floating point whenever it holds exactly.
fn fit_product(gamma: f64, mut eta: f64, cap: f64) -> f64 {
    for _ in 0..4 {
        if gamma * eta <= cap {
            break;
        }
        eta = eta.next_down();
    }
    eta
}

/// Plan with `η` capped by the noise level.
pub fn lr_noise_adaptive(p: &PlanInputs) -> Result<LRPlan> {
    p.validate()?;
    let lip = p.lip();
    let sqrt_t = (p.rounds as f64).sqrt();
    let gamma = 1.0 / (12.0 * lip * sqrt_t);
    let li = p.lipschitz * p.local_steps as f64;
    let noise_branch = if p.sigma > 0.0 {
        12.0 * p.interval as f64 * (li * p.gap).sqrt() / (p.sigma * p.rho)
    } else {
        f64::INFINITY
    };
    let eta = fit_product(gamma, noise_branch.min(12.0 * sqrt_t), 1.0 / lip);
    Ok(LRPlan::checked(
        gamma,
        eta,
        PlanSource::NoiseAdaptive,
        lip,
        p.interval,
        p.rounds,
        Vec::new(),
    ))
}

/// Plan with `η` independent of the noise level; requires
/// `√ℱ / (ρ √(L I T)) <= 1/(L I P)`.
pub fn lr_noise_agnostic(p: &PlanInputs) -> Result<LRPlan> {
    p.validate()?;
    let lip = p.lip();
    let gamma = 1.0 / (12.0 * lip * (p.rounds as f64).sqrt());
    let li = p.lipschitz * p.local_steps as f64;
    let mut eta = 12.0 * p.interval as f64 * (li * p.gap).sqrt() / p.rho;
    let ratio = p.gap.sqrt() / (p.rho * (li * p.rounds as f64).sqrt());
    let mut notes = Vec::new();
    if ratio > 1.0 / lip {
        notes.push(format!(
            "precondition fails: sqrt(F)/(rho sqrt(L I T)) = {ratio:e} > 1/(L I P) = {:e}",
            1.0 / lip
        ));
    } else {
        eta = fit_product(gamma, eta, 1.0 / lip);
    }
    Ok(LRPlan::checked(
        gamma,
        eta,
        PlanSource::NoiseAgnostic,
        lip,
        p.interval,
        p.rounds,
        notes,
    ))
}

/// `γ = min(1/(12 L I P), 1/(η L I P))` for the given `η`.
pub fn lr_theorem_caps(
    lipschitz: f64,
    local_steps: usize,
    interval: usize,
    rounds: usize,
    eta: f64,
) -> Result<LRPlan> {
    let p = PlanInputs {
        lipschitz,
        gap: 1.0,
        sigma: 0.0,
        rho: 1.0,
        local_steps,
        interval,
        rounds,
    };
    p.validate()?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!(
            "eta must be finite and > 0, got {eta}"
        )));
    }
    let lip = p.lip();
    let mut gamma = (1.0 / (12.0 * lip)).min(1.0 / (eta * lip));
    for _ in 0..4 {
        if gamma * eta <= 1.0 / lip {
            break;
        }
        gamma = gamma.next_down();
    }
    Ok(LRPlan::checked(
        gamma,
        eta,
        PlanSource::TheoremCaps,
        lip,
        interval,
        rounds,
        Vec::new(),
    ))
}

/// User-supplied rates, checked against the caps.
pub fn lr_manual(
    gamma: f64,
    eta: f64,
    lipschitz: f64,
    local_steps: usize,
    interval: usize,
    rounds: usize,
) -> Result<LRPlan> {
    let p = PlanInputs {
        lipschitz,
        gap: 1.0,
        sigma: 0.0,
        rho: 1.0,
        local_steps,
        interval,
        rounds,
    };
    p.validate()?;
    Ok(LRPlan::checked(
        gamma,
        eta,
        PlanSource::Manual,
        p.lip(),
        interval,
        rounds,
        Vec::new(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalClamp {
    Floor,
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalChoice {
    pub interval: usize,
    /// `υ^2 N^{5/2} √(I T)` before rounding and clamping.
    pub raw: f64,
    pub clamp: Option<IntervalClamp>,
}

/// `P = round(υ^2 N^{5/2} √(I T))`, clamped to `[1, ⌊T/2⌋]`.
pub fn choose_amplification_interval(
    upsilon_sq: f64,
    clients: usize,
    local_steps: usize,
    rounds: usize,
) -> Result<IntervalChoice> {
    if !(upsilon_sq.is_finite() && upsilon_sq >= 0.0) {
        return Err(Error::invalid(format!(
            "upsilon^2 must be finite and >= 0, got {upsilon_sq}"
        )));
    }
    if clients == 0 || local_steps == 0 || rounds < 2 {
        return Err(Error::invalid(
            "need clients >= 1, local_steps >= 1 and rounds >= 2",
        ));
    }
    let raw = upsilon_sq * (clients as f64).powf(2.5) * ((local_steps * rounds) as f64).sqrt();
    let ceiling = rounds / 2;
    let rounded = raw.round();
    let (interval, clamp) = if rounded < 1.0 {
        (1, Some(IntervalClamp::Floor))
    } else if rounded > ceiling as f64 {
        (ceiling, Some(IntervalClamp::Ceiling))
    } else {
        (rounded as usize, None)
    };
    Ok(IntervalChoice {
        interval,
        raw,
        clamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(sigma: f64) -> PlanInputs {
        PlanInputs {
            lipschitz: 1.0,
            gap: 1.0,
            sigma,
            rho: 0.5,
            local_steps: 5,
            interval: 4,
            rounds: 10_000,
        }
    }

    #[test]
    fn noise_adaptive_examples() {
        let p = lr_noise_adaptive(&inputs(1.0)).unwrap();
        assert!((p.gamma - 1.0 / 24_000.0).abs() < 1e-20);
        assert!((p.eta - 214.66).abs() < 5e-3);
        assert!((p.eta - 96.0 * 5f64.sqrt()).abs() < 1e-12);
        assert!(p.valid, "{:?}", p.notes);
        let p0 = lr_noise_adaptive(&inputs(0.0)).unwrap();
        assert!((p0.eta - 1200.0).abs() < 1e-9);
        assert!(p0.valid);
    }

    #[test]
    fn noise_agnostic_examples() {
        let p = lr_noise_agnostic(&inputs(1.0)).unwrap();
        assert!((p.eta - 214.66).abs() < 5e-3);
        assert!(p.valid);
        let tiny = PlanInputs {
            gap: 1e-12,
            rho: 1.0,
            ..inputs(1.0)
        };
        assert!(lr_noise_agnostic(&tiny).unwrap().valid);
        let huge = PlanInputs {
            interval: 4000,
            ..inputs(1.0)
        };
        let plan = lr_noise_agnostic(&huge).unwrap();
        assert!(!plan.valid);
        assert!(plan.notes[0].contains("precondition"));
    }

    #[test]
    fn long_interval_is_invalid() {
        let p = lr_noise_adaptive(&PlanInputs {
            interval: 6000,
            ..inputs(1.0)
        })
        .unwrap();
        assert!(!p.valid);
        assert!(p.notes.iter().any(|n| n.contains("T/2")));
    }

    #[test]
    fn theorem_caps_and_manual() {
        let p = lr_theorem_caps(1.0, 5, 100, 2000, 10.0).unwrap();
        assert!((p.gamma - 1.0 / 6000.0).abs() < 1e-18);
        let p = lr_theorem_caps(1.0, 5, 1, 2000, 1.0).unwrap();
        assert!((p.gamma - 1.0 / 60.0).abs() < 1e-16);
        assert!(p.valid);
        assert!(!lr_manual(1.0, 1.0, 1.0, 5, 1, 10).unwrap().valid);
        assert!(!lr_manual(-1.0, 1.0, 1.0, 5, 1, 10)
            .unwrap()
            .notes
            .is_empty());
        assert!(lr_noise_adaptive(&PlanInputs {
            lipschitz: 0.0,
            ..inputs(1.0)
        })
        .is_err());
    }

    #[test]
    fn interval_examples() {
        let c = choose_amplification_interval(0.01, 8, 5, 1000).unwrap();
        assert_eq!(c.interval, 128);
        assert_eq!(c.clamp, None);
        let c = choose_amplification_interval(0.0, 8, 5, 1000).unwrap();
        assert_eq!((c.interval, c.clamp), (1, Some(IntervalClamp::Floor)));
        let c = choose_amplification_interval(1.0, 16, 5, 1000).unwrap();
        assert_eq!((c.interval, c.clamp), (500, Some(IntervalClamp::Ceiling)));
    }

    proptest! {
        #[test]
        fn valid_plans_meet_the_caps(
            l in 0.01f64..100.0, gap in 1e-6f64..1e6, sigma in 0.0f64..100.0, rho in 0.01f64..1.0,
            i in 1usize..20, p in 1usize..200, t in 2usize..100_000, eta in 0.1f64..1000.0,
        ) {
            let inp = PlanInputs { lipschitz: l, gap, sigma, rho, local_steps: i, interval: p, rounds: t };
            let lip = l * i as f64 * p as f64;
            let plans = [
                lr_noise_adaptive(&inp).unwrap(),
                lr_noise_agnostic(&inp).unwrap(),
                lr_theorem_caps(l, i, p, t, eta).unwrap(),
            ];
            for plan in plans {
                if plan.valid {
                    prop_assert!(plan.gamma <= 1.0 / (12.0 * lip));
                    prop_assert!(plan.gamma * plan.eta <= 1.0 / lip);
                    prop_assert!(2 * p <= t);
                }
            }
        }
    }
}
