//! CSV tables written and read by the commands.

use fedamp_core::analysis::{fit_convergence_slope, BoundCheck, DivergenceReport, SlopeFit};
use fedamp_core::engine::Trace;
use fedamp_core::fmt::sig17;

use crate::CliError;

pub const METRICS_HEADER: [&str; 7] = [
    "run",
    "seed",
    "t",
    "f",
    "grad_norm_sq",
    "min_grad_norm_sq",
    "is_boundary",
];
pub const SWEEP_HEADER: [&str; 10] = [
    "axis",
    "value",
    "rounds",
    "interval",
    "participants",
    "runs",
    "failed",
    "mean_min_grad_norm_sq",
    "std_min_grad_norm_sq",
    "median_min_grad_norm_sq",
];
pub const DIVERGENCE_HEADER: [&str; 6] = ["P", "beta2", "nu2", "delta2", "d2", "exact"];

pub fn write_table<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Reads a table whose header must equal `header`; errors name the line.
fn read_table(text: &str, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let found = r
        .headers()
        .map_err(|e| CliError::Config(format!("line 1: {e}")))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Config(format!(
            "line 1: expected header `{}`",
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Config(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    line: u64,
    name: &str,
) -> Result<T, CliError> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| {
            CliError::Config(format!(
                "line {line}: bad {name} value {:?}",
                rec.get(i).unwrap_or("")
            ))
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: String,
    pub seed: u64,
    pub t: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub min_grad_norm_sq: f64,
    pub is_boundary: bool,
}

pub fn metrics_rows(run: &str, seed: u64, trace: &Trace) -> Vec<MetricsRow> {
    trace
        .checkpoints
        .iter()
        .map(|c| MetricsRow {
            run: run.to_string(),
            seed,
            t: c.t,
            f: c.f,
            grad_norm_sq: c.grad_norm_sq,
            min_grad_norm_sq: c.min_grad_norm_sq,
            is_boundary: c.is_boundary,
        })
        .collect()
}

pub fn write_metrics(rows: &[MetricsRow]) -> String {
    write_table(
        &METRICS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.run.clone(),
                r.seed.to_string(),
                r.t.to_string(),
                sig17(r.f),
                sig17(r.grad_norm_sq),
                sig17(r.min_grad_norm_sq),
                u8::from(r.is_boundary).to_string(),
            ]
        }),
    )
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>, CliError> {
    read_table(text, &METRICS_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let flag: u8 = field(&rec, 6, line, "is_boundary")?;
            if flag > 1 {
                return Err(CliError::Config(format!(
                    "line {line}: is_boundary must be 0 or 1"
                )));
            }
            Ok(MetricsRow {
                run: rec[0].to_string(),
                seed: field(&rec, 1, line, "seed")?,
                t: field(&rec, 2, line, "t")?,
                f: field(&rec, 3, line, "f")?,
                grad_norm_sq: field(&rec, 4, line, "grad_norm_sq")?,
                min_grad_norm_sq: field(&rec, 5, line, "min_grad_norm_sq")?,
                is_boundary: flag == 1,
            })
        })
        .collect()
}

/// Per-point aggregate of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: usize,
    pub rounds: usize,
    pub interval: usize,
    pub participants: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl SweepRow {
    /// Aggregates `min |∇f|^2` over the runs that finished.
    pub fn from_values(
        axis: &str,
        value: usize,
        rounds: usize,
        interval: usize,
        participants: usize,
        values: &[Option<f64>],
    ) -> Self {
        let mut ok: Vec<f64> = values.iter().flatten().copied().collect();
        let n = ok.len();
        let (mean, std, median) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = ok.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            ok.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 {
                ok[n / 2]
            } else {
                0.5 * (ok[n / 2 - 1] + ok[n / 2])
            };
            (mean, std, median)
        };
        Self {
            axis: axis.to_string(),
            value,
            rounds,
            interval,
            participants,
            runs: values.len(),
            failed: values.len() - n,
            mean,
            std,
            median,
        }
    }
}

pub fn write_sweep(rows: &[SweepRow]) -> String {
    write_table(
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.axis.clone(),
                r.value.to_string(),
                r.rounds.to_string(),
                r.interval.to_string(),
                r.participants.to_string(),
                r.runs.to_string(),
                r.failed.to_string(),
                sig17(r.mean),
                sig17(r.std),
                sig17(r.median),
            ]
        }),
    )
}

pub fn read_sweep(text: &str) -> Result<Vec<SweepRow>, CliError> {
    read_table(text, &SWEEP_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(SweepRow {
                axis: rec[0].to_string(),
                value: field(&rec, 1, line, "value")?,
                rounds: field(&rec, 2, line, "rounds")?,
                interval: field(&rec, 3, line, "interval")?,
                participants: field(&rec, 4, line, "participants")?,
                runs: field(&rec, 5, line, "runs")?,
                failed: field(&rec, 6, line, "failed")?,
                mean: field(&rec, 7, line, "mean")?,
                std: field(&rec, 8, line, "std")?,
                median: field(&rec, 9, line, "median")?,
            })
        })
        .collect()
}

/// Slope of log median `min |∇f|^2` against log rounds.
pub fn sweep_slope(rows: &[SweepRow]) -> Result<SlopeFit, CliError> {
    let pts: Vec<(f64, Option<f64>)> = rows
        .iter()
        .map(|r| (r.rounds as f64, (r.failed < r.runs).then_some(r.median)))
        .collect();
    Ok(fit_convergence_slope(&pts)?)
}

pub fn slope_summary(fit: &SlopeFit) -> String {
    format!(
        "slope = {}\nintercept = {}\nstderr = {}\nused = {}\nexcluded = {:?}\n",
        sig17(fit.fit.slope),
        sig17(fit.fit.intercept),
        sig17(fit.fit.stderr),
        fit.used,
        fit.excluded
    )
}

pub fn write_divergence(reports: &[DivergenceReport]) -> String {
    write_table(
        &DIVERGENCE_HEADER,
        reports.iter().map(|r| {
            vec![
                r.interval.to_string(),
                sig17(r.beta2),
                sig17(r.nu2),
                sig17(r.delta2),
                sig17(r.d2),
                u8::from(r.exact).to_string(),
            ]
        }),
    )
}

pub fn write_bounds(checks: &[BoundCheck]) -> String {
    let header: Vec<&str> = BoundCheck::csv_header().split(',').collect();
    write_table(
        &header,
        checks
            .iter()
            .map(|c| c.csv_row().split(',').map(str::to_string).collect()),
    )
}
