//! Turns a parsed config into fully built populations, schedules and run
//! settings, failing before any simulation starts.

use fedamp_core::analysis::{
    lr_manual, lr_noise_adaptive, lr_noise_agnostic, lr_theorem_caps, LRPlan, PlanInputs,
};
use fedamp_core::engine::{Mode, RunConfig};
use fedamp_core::objectives::{LogisticSpec, NoiseModel, Objective, Population, QuadraticSpec};
use fedamp_core::participation::{generate_schedule, Offset, PatternSpec, WeightSchedule};

use crate::config::{
    ExperimentConfig, IntervalSetting, ModeName, NoiseConfig, NoiseKind, OffsetSetting,
    PatternConfig, PatternKind, PlannerName, PopulationConfig, PopulationKind, StartSetting,
};
use crate::seeds::{seed_set, SeedSet};
use crate::CliError;

pub struct Resolved {
    pub seeds: SeedSet,
    pub population: Population,
    pub noise: NoiseModel,
    pub pattern: PatternSpec,
    pub schedule: WeightSchedule,
    pub run: RunConfig,
    pub plan: LRPlan,
}

fn cfg_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

pub fn build_population(p: &PopulationConfig, seed: u64) -> Result<Population, CliError> {
    Ok(match p.kind {
        PopulationKind::Quadratic => QuadraticSpec {
            clients: p.clients,
            dim: p.dim,
            lipschitz: p.lipschitz,
            spread: p.spread,
            curvature_floor: p.curvature_floor,
            groups: p.groups,
            group_spread: p.group_spread,
            per_client_curvature: p.per_client_curvature,
        }
        .build(seed)?
        .into(),
        PopulationKind::Logistic => LogisticSpec {
            clients: p.clients,
            dim: p.dim,
            samples_per_client: p.samples_per_client,
            separation: p.separation,
            majority_fraction: p.majority_fraction,
            reg: p.reg,
            batch: p.batch,
        }
        .build(seed)?
        .into(),
    })
}

pub fn build_noise(n: &NoiseConfig) -> Result<NoiseModel, CliError> {
    let model = match n.kind {
        NoiseKind::None => NoiseModel::None,
        NoiseKind::Gaussian => NoiseModel::Gaussian { sigma: n.sigma },
        NoiseKind::Sphere => NoiseModel::Sphere { sigma: n.sigma },
    };
    model.validate()?;
    Ok(model)
}

pub fn pattern_spec(p: &PatternConfig, clients: usize) -> Result<PatternSpec, CliError> {
    let need = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| cfg_err(format!("pattern.{name} is required for this pattern")))
    };
    let spec = match p.kind {
        PatternKind::Full => PatternSpec::Full,
        PatternKind::Independent => PatternSpec::IndependentUniform {
            participants: need(p.participants, "participants")?,
        },
        PatternKind::Permutation => PatternSpec::RegularizedPermutation {
            participants: need(p.participants, "participants")?,
        },
        PatternKind::Periodic => PatternSpec::PeriodicGroups {
            groups: need(p.groups, "groups")?,
            block: need(p.block, "block")?,
            participants: need(p.participants, "participants")?,
            offset: match &p.offset {
                None => Offset::Random,
                Some(OffsetSetting::Fixed(o)) => Offset::Fixed(*o),
                Some(OffsetSetting::Named(s)) if s == "random" => Offset::Random,
                Some(OffsetSetting::Named(s)) => {
                    return Err(cfg_err(format!(
                        "pattern.offset must be \"random\" or an integer, got {s:?}"
                    )))
                }
            },
        },
        PatternKind::Markov => PatternSpec::MarkovAvailability {
            stay_available: p
                .stay_available
                .ok_or_else(|| cfg_err("pattern.stay_available is required for markov"))?,
            stay_unavailable: p
                .stay_unavailable
                .ok_or_else(|| cfg_err("pattern.stay_unavailable is required for markov"))?,
            participants: need(p.participants, "participants")?,
        },
    };
    spec.validate(clients)?;
    Ok(spec)
}

/// `"aligned"` is the permutation period `N/S`, the periodic cycle `G B`,
/// or 1 for full participation.
pub fn resolve_interval(
    setting: &IntervalSetting,
    spec: &PatternSpec,
    clients: usize,
) -> Result<usize, CliError> {
    match setting {
        IntervalSetting::Fixed(p) => Ok(*p),
        IntervalSetting::Named(s) if s == "aligned" => match *spec {
            PatternSpec::PeriodicGroups { groups, block, .. } => Ok(groups * block),
            _ => spec
                .regular_interval(clients)
                .ok_or_else(|| cfg_err(format!("pattern {spec} has no aligned interval"))),
        },
        IntervalSetting::Named(s) => Err(cfg_err(format!(
            "run.interval must be an integer or \"aligned\", got {s:?}"
        ))),
    }
}

fn mode(m: ModeName) -> Mode {
    match m {
        ModeName::Generalized => Mode::Generalized,
        ModeName::WaitMinibatch => Mode::WaitMinibatch,
        ModeName::WaitFull => Mode::WaitFull,
    }
}

fn start(x0: &StartSetting, dim: usize) -> Result<Vec<f64>, CliError> {
    match x0 {
        StartSetting::Fill(v) => Ok(vec![*v; dim]),
        StartSetting::Point(p) if p.len() == dim => Ok(p.clone()),
        StartSetting::Point(p) => Err(cfg_err(format!(
            "run.x0 has {} coordinates, population dim is {dim}",
            p.len()
        ))),
    }
}

/// Interval used in the step-size caps: runs that never amplify (`η = 1`
/// or a wait baseline) are capped as if `P = 1`.
pub fn cap_interval(eta: f64, mode: Mode, interval: usize) -> usize {
    if eta == 1.0 || mode != Mode::Generalized {
        1
    } else {
        interval
    }
}

fn plan(
    cfg: &ExperimentConfig,
    pop: &Population,
    noise: &NoiseModel,
    schedule: &WeightSchedule,
    run: &RunConfig,
) -> Result<LRPlan, CliError> {
    let r = &cfg.rates;
    let l = pop.lipschitz();
    let (i, p, t) = (run.local_steps, run.interval, run.rounds);
    let plan = match r.planner {
        PlannerName::Manual => {
            let gamma = r
                .gamma
                .ok_or_else(|| cfg_err("rates.gamma is required with the manual planner"))?;
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(cfg_err(format!(
                    "rates.gamma must be finite and > 0, got {gamma}"
                )));
            }
            return Ok(lr_manual(
                gamma,
                r.eta.unwrap_or(1.0),
                l,
                i,
                cap_interval(r.eta.unwrap_or(1.0), run.mode, p),
                t,
            )?);
        }
        PlannerName::TheoremCaps => {
            let eta = r.eta.unwrap_or(1.0);
            lr_theorem_caps(l, i, cap_interval(eta, run.mode, p), t, eta)?
        }
        PlannerName::NoiseAdaptive | PlannerName::NoiseAgnostic => {
            let gap = match (r.gap, pop.optimum_value()) {
                (Some(g), _) => g,
                (None, Some(f_star)) => pop.global_value(&run.x0)? - f_star,
                (None, None) => {
                    return Err(cfg_err(
                        "rates.gap is required when the optimum is not known in closed form",
                    ))
                }
            };
            let inputs = PlanInputs {
                lipschitz: l,
                gap,
                sigma: noise.sigma(),
                rho: schedule.rho(),
                local_steps: i,
                interval: p,
                rounds: t,
            };
            if r.planner == PlannerName::NoiseAdaptive {
                lr_noise_adaptive(&inputs)?
            } else {
                lr_noise_agnostic(&inputs)?
            }
        }
    };
    if !plan.valid {
        return Err(cfg_err(format!(
            "{} plan is invalid: {}",
            plan.source.name(),
            plan.notes.join("; ")
        )));
    }
    Ok(plan)
}

/// Builds replication `r` of `cfg`.
pub fn resolve(cfg: &ExperimentConfig, replication: usize) -> Result<Resolved, CliError> {
    let seeds = seed_set(cfg.seeds.master, replication);
    let pc = &cfg.population;
    let population = build_population(pc, seeds.population)?;
    let noise = build_noise(&cfg.noise)?;
    let pattern = pattern_spec(&cfg.pattern, pc.clients)?;
    let interval = resolve_interval(&cfg.run.interval, &pattern, pc.clients)?;
    let schedule = generate_schedule(&pattern, pc.clients, cfg.run.rounds, seeds.schedule)?;
    let mut run = RunConfig::new(
        1.0,
        1.0,
        cfg.run.local_steps,
        interval,
        cfg.run.rounds,
        start(&cfg.run.x0, pc.dim)?,
    );
    run.mode = mode(cfg.run.mode);
    run.simulate_all = cfg.run.simulate_all;
    if let Some(e) = cfg.run.eval_every {
        run.eval_every = e;
    }
    run.validate()?;
    let plan = plan(cfg, &population, &noise, &schedule, &run)?;
    run.gamma = plan.gamma;
    run.eta = plan.eta;
    run.validate()?;
    Ok(Resolved {
        seeds,
        population,
        noise,
        pattern,
        schedule,
        run,
        plan,
    })
}

/// All replications of `cfg`.
pub fn resolve_all(cfg: &ExperimentConfig) -> Result<Vec<Resolved>, CliError> {
    if cfg.seeds.replications == 0 {
        return Err(cfg_err("seeds.replications must be >= 1"));
    }
    (0..cfg.seeds.replications)
        .map(|r| resolve(cfg, r))
        .collect()
}
