//! The CLI subcommands, as library functions.
//!
//! Each command resolves and validates its whole plan before simulating,
//! runs replications and sweep points concurrently, and writes its files in
//! a fixed order from a single thread.

use std::fs;
use std::path::{Path, PathBuf};

use fedamp_core::analysis::{
    chebyshev_mixing_check, divergence_exact, divergence_sampled, hoeffding_check, BoundCheck,
    DivergenceReport, MixingReport, MixingSpec, SampleSpec,
};
use fedamp_core::engine::{run, Trace};
use fedamp_core::exec;
use fedamp_core::fmt::sig17;
use fedamp_core::objectives::Population;
use fedamp_core::rng::derive_seed;
use fedamp_core::Error;

use crate::config::{
    self, BoundName, DiagnoseMethod, ExperimentConfig, IntervalSetting, PlotFile, SweepAxis,
};
use crate::metrics::{self, MetricsRow, SweepRow};
use crate::plot::{render_svg, series_from_metrics};
use crate::resolve::{pattern_spec, resolve, resolve_all, Resolved};
use crate::seeds::{bounds_seed, DERIVATION};
use crate::{io_error, CliError};

/// Command-line inputs shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
}

pub fn load_experiment(opts: &Options) -> Result<ExperimentConfig, CliError> {
    let path = opts
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg: ExperimentConfig = config::load(path, &opts.sets)?;
    if let Some(s) = opts.seed {
        cfg.seeds.master = s;
    }
    Ok(cfg)
}

fn out_dir(opts: &Options, configured: &str) -> PathBuf {
    opts.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(configured))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| io_error(&p, e))
}

fn header_meta(cfg: &ExperimentConfig) -> String {
    format!(
        "# config\n{}\n# seeds\nmaster = {}\nderivation = {DERIVATION}\n",
        config::to_toml(cfg),
        cfg.seeds.master
    )
}

fn run_meta(label: &str, r: &Resolved, trace: Option<&Trace>) -> String {
    let mut s = format!(
        "\n# {label}\nreplication = {}\npopulation_seed = {}\nschedule_seed = {}\nrun_seed = {}\nplanner = {}\nplan_valid = {}\n",
        r.seeds.replication,
        r.seeds.population,
        r.seeds.schedule,
        r.seeds.run,
        r.plan.source.name(),
        r.plan.valid
    );
    for n in &r.plan.notes {
        s.push_str(&format!("plan_note = {n}\n"));
    }
    s.push_str(&format!(
        "fallback_rounds = {}\n",
        r.schedule.fallback_rounds()
    ));
    if let Some(o) = r.schedule.offset() {
        s.push_str(&format!("offset = {o}\n"));
    }
    if let Some(t) = trace {
        s.push_str(&t.meta_text());
    }
    s
}

/// Runs every resolved replication concurrently.
pub fn execute(resolved: &[Resolved]) -> Vec<Result<Trace, Error>> {
    exec::map_ordered(resolved, |r| {
        run(&r.population, &r.noise, &r.schedule, &r.run, r.seeds.run)
    })
}

pub struct RunOutcome {
    pub rows: Vec<MetricsRow>,
    pub traces: Vec<Result<Trace, Error>>,
    pub meta: String,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let resolved = resolve_all(cfg)?;
    let traces = execute(&resolved);
    let mut rows = Vec::new();
    let mut meta = header_meta(cfg);
    for (r, t) in resolved.iter().zip(&traces) {
        let label = format!("rep{}", r.seeds.replication);
        if let Ok(t) = t {
            rows.extend(metrics::metrics_rows(&label, r.seeds.run, t));
        }
        meta.push_str(&run_meta(&label, r, t.as_ref().ok()));
        if let Err(e) = t {
            meta.push_str(&format!("error = {e}\n"));
        }
    }
    Ok(RunOutcome { rows, traces, meta })
}

pub fn cmd_run(opts: &Options) -> Result<String, CliError> {
    let cfg = load_experiment(opts)?;
    let out = run_experiment(&cfg)?;
    let dir = out_dir(opts, &cfg.output.dir);
    write(&dir, "metrics.csv", &metrics::write_metrics(&out.rows))?;
    write(&dir, "meta.txt", &out.meta)?;
    let failures: Vec<String> = out
        .traces
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.as_ref().err().map(|e| format!("replication {i}: {e}")))
        .collect();
    if !failures.is_empty() {
        return Err(CliError::Failure(failures.join("; ")));
    }
    Ok(format!(
        "{} run(s) written to {}",
        out.traces.len(),
        dir.display()
    ))
}

/// Config for one sweep point.
pub fn sweep_point(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    value: usize,
    product: Option<usize>,
) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    c.sweep = None;
    match axis {
        SweepAxis::Rounds => c.run.rounds = value,
        SweepAxis::Interval => c.run.interval = IntervalSetting::Fixed(value),
        SweepAxis::Participants => {
            c.pattern.participants = Some(value);
            if let Some(p) = product {
                if value == 0 || p % value != 0 {
                    return Err(CliError::Config(format!(
                        "sweep.hold_product {p} is not divisible by {value}"
                    )));
                }
                c.run.rounds = p / value;
            }
        }
    }
    Ok(c)
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// `(value, replication, run seed, min |∇f|^2 or the error)`.
    pub runs: Vec<(usize, usize, u64, Result<f64, String>)>,
    pub slope: Option<fedamp_core::analysis::SlopeFit>,
}

fn axis_name(a: SweepAxis) -> &'static str {
    match a {
        SweepAxis::Rounds => "rounds",
        SweepAxis::Interval => "interval",
        SweepAxis::Participants => "participants",
    }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, CliError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("a [sweep] section is required".into()))?;
    if sw.values.is_empty() {
        return Err(CliError::Config("sweep.values is empty".into()));
    }
    if sw.hold_product.is_some() && sw.axis != SweepAxis::Participants {
        return Err(CliError::Config(
            "sweep.hold_product only applies to the participants axis".into(),
        ));
    }
    let mut points = Vec::new();
    for &v in &sw.values {
        let c = sweep_point(cfg, sw.axis, v, sw.hold_product)?;
        points.push((v, resolve_all(&c)?));
    }
    let flat: Vec<(usize, &Resolved)> = points
        .iter()
        .flat_map(|(v, rs)| rs.iter().map(move |r| (*v, r)))
        .collect();
    let results = exec::map_ordered(&flat, |(_, r)| {
        run(&r.population, &r.noise, &r.schedule, &r.run, r.seeds.run).map(|t| t.min_grad_norm_sq())
    });

    let mut runs = Vec::with_capacity(flat.len());
    for ((v, r), res) in flat.iter().zip(results) {
        runs.push((
            *v,
            r.seeds.replication,
            r.seeds.run,
            res.map_err(|e| e.to_string()),
        ));
    }
    let rows: Vec<SweepRow> = points
        .iter()
        .map(|(v, rs)| {
            let vals: Vec<Option<f64>> = runs
                .iter()
                .filter(|r| r.0 == *v)
                .map(|r| r.3.as_ref().ok().copied())
                .collect();
            let first = &rs[0];
            SweepRow::from_values(
                axis_name(sw.axis),
                *v,
                first.run.rounds,
                first.run.interval,
                first.pattern.participants(first.schedule.clients()),
                &vals,
            )
        })
        .collect();
    let slope = if sw.axis == SweepAxis::Rounds {
        metrics::sweep_slope(&rows).ok()
    } else {
        None
    };
    Ok(SweepOutcome { rows, runs, slope })
}

pub fn cmd_sweep(opts: &Options) -> Result<String, CliError> {
    let cfg = load_experiment(opts)?;
    let out = run_sweep(&cfg)?;
    let dir = out_dir(opts, &cfg.output.dir);
    write(&dir, "sweep.csv", &metrics::write_sweep(&out.rows))?;
    let runs = metrics::write_table(
        &["value", "replication", "seed", "min_grad_norm_sq", "status"],
        out.runs.iter().map(|(v, r, s, res)| {
            let (val, status) = match res {
                Ok(x) => (sig17(*x), "ok".to_string()),
                Err(e) => ("NaN".to_string(), e.clone()),
            };
            vec![v.to_string(), r.to_string(), s.to_string(), val, status]
        }),
    );
    write(&dir, "sweep_runs.csv", &runs)?;
    if let Some(f) = &out.slope {
        write(&dir, "slope.txt", &metrics::slope_summary(f))?;
    }
    write(&dir, "meta.txt", &header_meta(&cfg))?;
    if out.runs.iter().all(|r| r.3.is_err()) {
        return Err(CliError::Failure("every sweep run failed".into()));
    }
    let mut msg = format!(
        "{} point(s), {} run(s) written to {}",
        out.rows.len(),
        out.runs.len(),
        dir.display()
    );
    if let Some(f) = &out.slope {
        msg.push_str(&format!(
            "; slope {:.4} (stderr {:.4})",
            f.fit.slope, f.fit.stderr
        ));
    }
    Ok(msg)
}

pub fn run_diagnose(cfg: &ExperimentConfig) -> Result<Vec<DivergenceReport>, CliError> {
    let d = cfg
        .diagnose
        .as_ref()
        .ok_or_else(|| CliError::Config("a [diagnose] section is required".into()))?;
    if d.intervals.is_empty() {
        return Err(CliError::Config("diagnose.intervals is empty".into()));
    }
    let r = resolve(cfg, 0)?;
    let quad = match &r.population {
        Population::Quadratic(q) if q.gradient_offsets().is_some() => Some(q),
        _ => None,
    };
    let exact = match (d.method, quad) {
        (DiagnoseMethod::Exact, None) => {
            return Err(CliError::Config(
                "exact divergence needs a quadratic population with shared curvature".into(),
            ));
        }
        (DiagnoseMethod::Sampled, _) | (DiagnoseMethod::Auto, None) => None,
        (_, Some(q)) => Some(q),
    };
    let samples = if exact.is_none() {
        let mut s = SampleSpec::ball(
            r.run.x0.clone(),
            d.radius,
            d.ball_points,
            derive_seed(r.seeds.base, "divergence"),
        );
        s.iterates.push(r.run.x0.clone());
        if let Ok(t) = run(&r.population, &r.noise, &r.schedule, &r.run, r.seeds.run) {
            s.iterates.push(t.final_x);
        }
        Some(s)
    } else {
        None
    };
    d.intervals
        .iter()
        .map(|&p| match (exact, &samples) {
            (Some(q), _) => Ok(divergence_exact(q, &r.schedule, p)?),
            (None, Some(s)) => Ok(divergence_sampled(&r.population, &r.schedule, p, s)?),
            (None, None) => unreachable!("samples are built whenever exact mode is off"),
        })
        .collect()
}

pub fn cmd_diagnose(opts: &Options) -> Result<String, CliError> {
    let cfg = load_experiment(opts)?;
    let reports = run_diagnose(&cfg)?;
    let dir = out_dir(opts, &cfg.output.dir);
    write(&dir, "divergence.csv", &metrics::write_divergence(&reports))?;
    let mut meta = header_meta(&cfg);
    for r in &reports {
        meta.push_str(&format!(
            "\n# P = {}\npair_sum = {}\ndecomposition_residual = {}\npoints = {}\nexact = {}\n",
            r.interval,
            sig17(r.pair_sum),
            sig17(r.decomposition_residual),
            r.points,
            r.exact
        ));
    }
    write(&dir, "meta.txt", &meta)?;
    Ok(format!(
        "{} interval(s) written to {}",
        reports.len(),
        dir.display()
    ))
}

pub struct BoundsOutcome {
    pub checks: Vec<BoundCheck>,
    pub mixing: Option<MixingReport>,
}

pub fn run_bounds(cfg: &ExperimentConfig) -> Result<BoundsOutcome, CliError> {
    let b = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Config("a [bounds] section is required".into()))?;
    if b.checks.is_empty() || b.intervals.is_empty() {
        return Err(CliError::Config(
            "bounds.checks and bounds.intervals must be non-empty".into(),
        ));
    }
    let n = cfg.population.clients;
    let spec = pattern_spec(&cfg.pattern, n)?;
    let seed = bounds_seed(cfg.seeds.master);
    let mut checks = Vec::new();
    let mut mixing = None;
    for check in &b.checks {
        match check {
            BoundName::Hoeffding => {
                for &p in &b.intervals {
                    checks.push(hoeffding_check(
                        &spec,
                        n,
                        p,
                        b.c,
                        b.trials,
                        derive_seed(seed, &format!("hoeffding/{p}")),
                    )?);
                }
            }
            BoundName::Chebyshev => {
                let mix = MixingSpec {
                    intervals: b.intervals.clone(),
                    c: b.c,
                    trials: b.trials,
                    max_lag: b.max_lag,
                    ratio_lags: b.ratio_lags,
                };
                let report =
                    chebyshev_mixing_check(&spec, n, &mix, derive_seed(seed, "chebyshev"))?;
                checks.extend(report.checks.iter().copied());
                mixing = Some(report);
            }
        }
    }
    Ok(BoundsOutcome { checks, mixing })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), sig17)
}

pub fn cmd_bounds(opts: &Options) -> Result<String, CliError> {
    let cfg = load_experiment(opts)?;
    let out = run_bounds(&cfg)?;
    let dir = out_dir(opts, &cfg.output.dir);
    write(&dir, "bounds.csv", &metrics::write_bounds(&out.checks))?;
    let mut meta = header_meta(&cfg);
    if let Some(m) = &out.mixing {
        meta.push_str(&format!(
            "\n# mixing\nslope = {}\nslope_stderr = {}\nupsilon_sq = {}\ntruncation_lag = {}\nconverged = {}\ncov_ratio = {}\n\
             note = finite-P thresholds are a calibration of an asymptotic statement\n",
            opt(m.slope),
            opt(m.slope_stderr),
            sig17(m.upsilon_sq),
            m.truncation_lag.map_or_else(|| "none".to_string(), |l| l.to_string()),
            m.converged,
            opt(m.cov_ratio)
        ));
    }
    write(&dir, "meta.txt", &meta)?;
    let failed: Vec<String> = out
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} at P = {}", c.kind.name(), c.interval))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Failure(format!(
            "bound check(s) failed: {}",
            failed.join(", ")
        )));
    }
    if let Some(m) = &out.mixing {
        if !m.converged {
            return Err(CliError::Failure(
                "covariance series did not reach the truncation cutoff".into(),
            ));
        }
    }
    Ok(format!(
        "{} check(s) passed, written to {}",
        out.checks.len(),
        dir.display()
    ))
}

/// Renders metrics CSV files into one chart.
pub fn plot_files(inputs: &[PathBuf], title: &str) -> Result<String, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("no input CSV files given".into()));
    }
    let mut series = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let rows = metrics::read_metrics(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
        series.extend(series_from_metrics(
            &rows,
            (inputs.len() > 1).then_some(stem),
        ));
    }
    render_svg(&series, title)
}

pub fn cmd_plot(opts: &Options) -> Result<String, CliError> {
    let file: PlotFile = match &opts.config {
        Some(p) => config::load(p, &opts.sets)?,
        None => config::parse_with_overrides("", &opts.sets)?,
    };
    let inputs: Vec<PathBuf> = if opts.inputs.is_empty() {
        file.plot.inputs.iter().map(PathBuf::from).collect()
    } else {
        opts.inputs.clone()
    };
    let svg = plot_files(&inputs, &file.plot.title)?;
    let dir = out_dir(opts, &file.output.dir);
    write(&dir, "plot.svg", &svg)?;
    Ok(format!(
        "chart written to {}",
        dir.join("plot.svg").display()
    ))
}
