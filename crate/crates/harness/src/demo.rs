//! Periodic-availability comparison of amplified updates against plain
//! FedAvg and the wait-for-all baselines.
//!
//! Clients fall into `G` groups that take turns being available for `B`
//! rounds each, so one cycle lasts `G B` rounds. The amplified arm uses
//! `P = G B` and `η > 1`. Every arm's `γ` is the largest the step-size caps
//! allow for that arm, and every arm is scored on the same grid of rounds
//! (multiples of the cycle).

use std::path::PathBuf;

use fedamp_core::analysis::lr_theorem_caps;
use fedamp_core::engine::{run, Mode, RunConfig, Trace};
use fedamp_core::exec;
use fedamp_core::fmt::sig17;
use fedamp_core::objectives::{NoiseModel, QuadraticPopulation, QuadraticSpec};
use fedamp_core::participation::{generate_schedule, Offset, PatternSpec, WeightSchedule};
use fedamp_core::rng::derive_seed;

use crate::commands::Options;
use crate::config::{self, DemoConfig, DemoFile};
use crate::metrics::{self, MetricsRow};
use crate::plot::{render_svg, series_from_metrics};
use crate::resolve::cap_interval;
use crate::seeds::{seed_set, DERIVATION};
use crate::{io_error, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Amplified,
    UnitEta,
    WaitMinibatch,
    WaitFull,
    /// Amplification every round, for contrast with `P = G B`.
    AmplifiedEveryRound,
}

impl Arm {
    pub const ALL: [Arm; 5] = [
        Arm::Amplified,
        Arm::UnitEta,
        Arm::WaitMinibatch,
        Arm::WaitFull,
        Arm::AmplifiedEveryRound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Amplified => "amplified",
            Arm::UnitEta => "eta-one",
            Arm::WaitMinibatch => "wait-minibatch",
            Arm::WaitFull => "wait-full",
            Arm::AmplifiedEveryRound => "amplified-p1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub seed: usize,
    pub gamma: f64,
    pub eta: f64,
    pub interval: usize,
    /// Minimum of `|∇f|^2` over multiples of the cycle length.
    pub score: f64,
    pub final_grad_norm_sq: f64,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub results: Vec<ArmResult>,
    /// Seeds where amplified < both wait arms < eta-one.
    pub ordered: Vec<bool>,
    /// Seeds where the amplified arm beats amplifying every round.
    pub interval_helps: Vec<bool>,
    pub passed: bool,
}

impl DemoOutcome {
    pub fn score(&self, seed: usize, arm: Arm) -> f64 {
        self.results
            .iter()
            .find(|r| r.seed == seed && r.arm == arm)
            .map_or(f64::NAN, |r| r.score)
    }

    pub fn ranking(&self, seed: usize) -> String {
        let mut rs: Vec<&ArmResult> = self.results.iter().filter(|r| r.seed == seed).collect();
        rs.sort_by(|a, b| a.score.total_cmp(&b.score));
        rs.iter()
            .map(|r| format!("{} ({:.3e})", r.arm.name(), r.score))
            .collect::<Vec<_>>()
            .join(" < ")
    }
}

fn arm_config(d: &DemoConfig, arm: Arm, x0: &[f64]) -> Result<RunConfig, CliError> {
    let cycle = d.groups * d.block;
    let (eta, interval, mode) = match arm {
        Arm::Amplified => (d.eta, cycle, Mode::Generalized),
        Arm::UnitEta => (1.0, cycle, Mode::Generalized),
        Arm::WaitMinibatch => (1.0, cycle, Mode::WaitMinibatch),
        Arm::WaitFull => (1.0, cycle, Mode::WaitFull),
        Arm::AmplifiedEveryRound => (d.eta, 1, Mode::Generalized),
    };
    let plan = lr_theorem_caps(
        1.0,
        d.local_steps,
        cap_interval(eta, mode, interval),
        d.rounds,
        eta,
    )?;
    let mut cfg = RunConfig::new(
        plan.gamma,
        eta,
        d.local_steps,
        interval,
        d.rounds,
        x0.to_vec(),
    );
    cfg.mode = mode;
    cfg.eval_every = cycle;
    Ok(cfg)
}

fn instance(
    d: &DemoConfig,
    master: u64,
    k: usize,
) -> Result<(QuadraticPopulation, WeightSchedule, u64), CliError> {
    let s = seed_set(master, k);
    let spec = QuadraticSpec {
        groups: d.groups,
        group_spread: d.group_spread,
        curvature_floor: d.curvature_floor,
        ..QuadraticSpec::new(d.clients, d.dim, 1.0, d.spread)
    };
    let pop = spec.build(s.population)?;
    let pattern = PatternSpec::PeriodicGroups {
        groups: d.groups,
        block: d.block,
        participants: d.participants,
        offset: Offset::Random,
    };
    let sched = generate_schedule(&pattern, d.clients, d.rounds, s.schedule)?;
    Ok((pop, sched, s.run))
}

pub fn run_demo(d: &DemoConfig, master: u64) -> Result<DemoOutcome, CliError> {
    if d.seeds == 0 || d.required > d.seeds {
        return Err(CliError::Config(
            "demo.seeds must be >= 1 and >= demo.required".into(),
        ));
    }
    let x0 = vec![d.x0; d.dim];
    let noise = NoiseModel::Gaussian { sigma: d.sigma };
    noise.validate()?;
    let instances = (0..d.seeds)
        .map(|k| instance(d, master, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tasks = Vec::new();
    for k in 0..d.seeds {
        for arm in Arm::ALL {
            tasks.push((k, arm, arm_config(d, arm, &x0)?));
        }
    }
    let cycle = d.groups * d.block;
    let traces = exec::map_ordered(&tasks, |(k, arm, cfg)| {
        let (pop, sched, seed) = &instances[*k];
        run(pop, &noise, sched, cfg, derive_seed(*seed, arm.name()))
    });
    let mut results = Vec::with_capacity(tasks.len());
    for ((k, arm, cfg), tr) in tasks.into_iter().zip(traces) {
        let trace =
            tr.map_err(|e| CliError::Failure(format!("{} arm, seed {k}: {e}", arm.name())))?;
        let score = trace
            .checkpoints
            .iter()
            .filter(|c| c.t % cycle == 0)
            .map(|c| c.grad_norm_sq)
            .fold(f64::INFINITY, f64::min);
        let final_grad_norm_sq = trace.final_grad_norm_sq();
        results.push(ArmResult {
            arm,
            seed: k,
            gamma: cfg.gamma,
            eta: cfg.eta,
            interval: cfg.interval,
            score,
            final_grad_norm_sq,
            trace,
        });
    }
    let mut out = DemoOutcome {
        results,
        ordered: Vec::new(),
        interval_helps: Vec::new(),
        passed: false,
    };
    for k in 0..d.seeds {
        let amp = out.score(k, Arm::Amplified);
        let (wm, wf) = (
            out.score(k, Arm::WaitMinibatch),
            out.score(k, Arm::WaitFull),
        );
        let one = out.score(k, Arm::UnitEta);
        out.ordered.push(amp < wm.min(wf) && wm.max(wf) < one);
        out.interval_helps
            .push(amp < out.score(k, Arm::AmplifiedEveryRound));
    }
    out.passed = out.ordered.iter().filter(|&&o| o).count() >= d.required;
    Ok(out)
}

pub fn demo_table(out: &DemoOutcome) -> String {
    metrics::write_table(
        &[
            "arm",
            "seed",
            "gamma",
            "eta",
            "interval",
            "min_grad_norm_sq",
            "final_grad_norm_sq",
        ],
        out.results.iter().map(|r| {
            vec![
                r.arm.name().to_string(),
                r.seed.to_string(),
                sig17(r.gamma),
                sig17(r.eta),
                r.interval.to_string(),
                sig17(r.score),
                sig17(r.final_grad_norm_sq),
            ]
        }),
    )
}

pub fn demo_rows(out: &DemoOutcome) -> Vec<MetricsRow> {
    out.results
        .iter()
        .flat_map(|r| {
            metrics::metrics_rows(
                &format!("{}/seed{}", r.arm.name(), r.seed),
                r.trace.meta.seed,
                &r.trace,
            )
        })
        .collect()
}

pub fn cmd_paperdemo(opts: &Options) -> Result<String, CliError> {
    let mut file: DemoFile = match &opts.config {
        Some(p) => config::load(p, &opts.sets)?,
        None => config::parse_with_overrides("", &opts.sets)?,
    };
    if let Some(s) = opts.seed {
        file.seeds.master = s;
    }
    let out = run_demo(&file.demo, file.seeds.master)?;
    let dir = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&file.output.dir));
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let put = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| io_error(&p, e))
    };
    put("demo.csv", &demo_table(&out))?;
    let rows = demo_rows(&out);
    put("demo_metrics.csv", &metrics::write_metrics(&rows))?;
    let first: Vec<MetricsRow> = rows
        .into_iter()
        .filter(|r| r.run.ends_with("/seed0"))
        .collect();
    put(
        "demo.svg",
        &render_svg(
            &series_from_metrics(&first, None),
            "periodic availability, seed 0",
        )?,
    )?;
    let mut meta = format!("# config\n{}\n# seeds\nmaster = {}\nderivation = {DERIVATION}; arm run seed = derive(run, arm name)\n", config::to_toml(&file), file.seeds.master);
    for k in 0..file.demo.seeds {
        meta.push_str(&format!("seed{k} = {}\n", out.ranking(k)));
    }
    put("meta.txt", &meta)?;
    let wins = out.ordered.iter().filter(|&&o| o).count();
    if !out.passed {
        let rankings: Vec<String> = (0..file.demo.seeds)
            .map(|k| format!("seed {k}: {}", out.ranking(k)))
            .collect();
        return Err(CliError::Failure(format!(
            "expected ordering held in {wins} of {} seeds (need {}): {}",
            file.demo.seeds,
            file.demo.required,
            rankings.join("; ")
        )));
    }
    Ok(format!(
        "ordering held in {wins} of {} seeds; written to {}",
        file.demo.seeds,
        dir.display()
    ))
}
