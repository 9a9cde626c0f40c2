//! Participation-weight schedules `{q_t^n}`.
//!
//! A [`WeightSchedule`] stores, for every round, the clients that participate
//! and their weights. Generated schedules always give equal weight to every
//! participant of a round; unequal weights can only come from a loaded CSV.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fmt::{read_csv, sig17};
use crate::rng::{substream, Domain, Stream};

/// Tolerance on `|sum_n q_t^n - 1|`.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offset {
    /// Drawn from the schedule seed, uniform in `[0, groups * block)`.
    Random,
    Fixed(usize),
}

/// The participation process that generates a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternSpec {
    /// Every client, weight `1/N`, every round.
    Full,
    /// A fresh uniformly random `S`-subset every round.
    IndependentUniform { participants: usize },
    /// A fresh random permutation of all clients every `N/S` rounds,
    /// consumed `S` at a time.
    RegularizedPermutation { participants: usize },
    /// `groups` equal contiguous client groups take turns being available for
    /// `block` rounds each; `participants` clients are picked per round by
    /// cycling through permutations of the available group.
    PeriodicGroups {
        groups: usize,
        block: usize,
        participants: usize,
        offset: Offset,
    },
    /// Each client follows an independent two-state availability chain;
    /// up to `participants` of the available clients are picked per round.
    MarkovAvailability {
        stay_available: f64,
        stay_unavailable: f64,
        participants: usize,
    },
}

impl PatternSpec {
    pub fn validate(&self, clients: usize) -> Result<()> {
        if clients == 0 {
            return Err(Error::invalid("schedule needs at least one client"));
        }
        let check_s = |s: usize| {
            if s == 0 || s > clients {
                Err(Error::invalid(format!(
                    "participants must lie in 1..={clients}, got {s}"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            PatternSpec::Full => Ok(()),
            PatternSpec::IndependentUniform { participants } => check_s(participants),
            PatternSpec::RegularizedPermutation { participants } => {
                check_s(participants)?;
                if !clients.is_multiple_of(participants) {
                    return Err(Error::invalid(format!(
                        "permutation participation needs participants ({participants}) to divide clients ({clients})"
                    )));
                }
                Ok(())
            }
            PatternSpec::PeriodicGroups {
                groups,
                block,
                participants,
                offset,
            } => {
                check_s(participants)?;
                if groups == 0 || !clients.is_multiple_of(groups) {
                    return Err(Error::invalid(format!(
                        "groups ({groups}) must divide clients ({clients})"
                    )));
                }
                if block == 0 {
                    return Err(Error::invalid("block length must be >= 1"));
                }
                if let Offset::Fixed(o) = offset {
                    if o >= groups * block {
                        return Err(Error::invalid("fixed offset must be below groups * block"));
                    }
                }
                Ok(())
            }
            PatternSpec::MarkovAvailability {
                stay_available,
                stay_unavailable,
                participants,
            } => {
                check_s(participants)?;
                for p in [stay_available, stay_unavailable] {
                    if !(p > 0.0 && p < 1.0) {
                        return Err(Error::invalid(format!(
                            "stay probabilities must lie in (0, 1), got {p}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Nominal participants per round.
    pub fn participants(&self, clients: usize) -> usize {
        match *self {
            PatternSpec::Full => clients,
            PatternSpec::IndependentUniform { participants }
            | PatternSpec::RegularizedPermutation { participants }
            | PatternSpec::PeriodicGroups { participants, .. }
            | PatternSpec::MarkovAvailability { participants, .. } => participants,
        }
    }

    /// Smallest interval over which every client's averaged weight is equal,
    /// when the pattern guarantees one.
    pub fn regular_interval(&self, clients: usize) -> Option<usize> {
        match *self {
            PatternSpec::Full => Some(1),
            PatternSpec::RegularizedPermutation { participants } => Some(clients / participants),
            _ => None,
        }
    }

    /// Stationary availability probability of the Markov pattern.
    pub fn stationary_availability(&self) -> Option<f64> {
        match *self {
            PatternSpec::MarkovAvailability {
                stay_available,
                stay_unavailable,
                ..
            } => Some((1.0 - stay_unavailable) / (2.0 - stay_available - stay_unavailable)),
            _ => None,
        }
    }
}

impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PatternSpec::Full => write!(f, "full"),
            PatternSpec::IndependentUniform { participants } => {
                write!(f, "independent(S={participants})")
            }
            PatternSpec::RegularizedPermutation { participants } => {
                write!(f, "permutation(S={participants})")
            }
            PatternSpec::PeriodicGroups {
                groups,
                block,
                participants,
                offset,
            } => {
                let off = match offset {
                    Offset::Random => "random".to_string(),
                    Offset::Fixed(o) => o.to_string(),
                };
                write!(
                    f,
                    "periodic(G={groups},B={block},S={participants},offset={off})"
                )
            }
            PatternSpec::MarkovAvailability {
                stay_available,
                stay_unavailable,
                participants,
            } => {
                write!(
                    f,
                    "markov(p_aa={stay_available},p_uu={stay_unavailable},S={participants})"
                )
            }
        }
    }
}

pub type Row = Vec<(usize, f64)>;

/// Participation weights for `T` rounds over `N` clients.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    clients: usize,
    rows: Vec<Row>,
    pattern: Option<PatternSpec>,
    seed: Option<u64>,
    fallback_rounds: usize,
    offset: Option<usize>,
    availability: Option<Vec<u64>>,
}

impl WeightSchedule {
    /// Wraps explicit rows. Each row lists `(client, weight)` pairs; indices
    /// must be in range and unique within the row, and weights finite and
    /// non-negative. Row sums are *not* checked here, see [`verify_simplex`].
    pub fn from_rows(clients: usize, rows: Vec<Row>) -> Result<Self> {
        if clients == 0 {
            return Err(Error::invalid("schedule needs at least one client"));
        }
        let mut rows = rows;
        for (t, row) in rows.iter_mut().enumerate() {
            row.retain(|&(_, q)| q != 0.0);
            row.sort_by_key(|&(n, _)| n);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::invalid(format!(
                        "client {} listed twice in round {t}",
                        w[0].0
                    )));
                }
            }
            for &(n, q) in row.iter() {
                if n >= clients {
                    return Err(Error::ClientOutOfRange { index: n, clients });
                }
                if !(q.is_finite() && q >= 0.0) {
                    return Err(Error::invalid(format!(
                        "round {t} client {n}: weight {q} must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(Self {
            clients,
            rows,
            pattern: None,
            seed: None,
            fallback_rounds: 0,
            offset: None,
            availability: None,
        })
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn rounds(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[(usize, f64)] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn pattern(&self) -> Option<&PatternSpec> {
        self.pattern.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Markov rounds where no client was available and the uniform fallback
    /// was used.
    pub fn fallback_rounds(&self) -> usize {
        self.fallback_rounds
    }

    /// Resolved cycle offset of a periodic schedule.
    pub fn offset(&self) -> Option<usize> {
        self.offset
    }

    /// Per-client count of rounds spent available (periodic and Markov only).
    pub fn availability_counts(&self) -> Option<&[u64]> {
        self.availability.as_deref()
    }

    pub fn describe(&self) -> String {
        match &self.pattern {
            Some(p) => p.to_string(),
            None => "explicit".to_string(),
        }
    }

    pub fn weight(&self, t: usize, n: usize) -> f64 {
        self.rows[t]
            .iter()
            .find(|&&(c, _)| c == n)
            .map_or(0.0, |&(_, q)| q)
    }

    /// `sum_{t in [t0, t0+len)} q_t^n` for every client.
    pub fn window_sums(&self, t0: usize, len: usize) -> Vec<f64> {
        let mut sums = vec![0.0; self.clients];
        for row in &self.rows[t0..t0 + len] {
            for &(n, q) in row {
                sums[n] += q;
            }
        }
        sums
    }

    /// The weight series of one client, one entry per round.
    pub fn series(&self, n: usize) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().find(|&&(c, _)| c == n).map_or(0.0, |&(_, q)| q))
            .collect()
    }

    /// All client series at once: `out[n][t] = q_t^n`.
    pub fn dense_by_client(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.rows.len()]; self.clients];
        for (t, row) in self.rows.iter().enumerate() {
            for &(n, q) in row {
                out[n][t] = q;
            }
        }
        out
    }

    pub fn rho_sq(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(_, q)| q * q).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `rho = sqrt(max_t sum_n (q_t^n)^2)`.
    pub fn rho(&self) -> f64 {
        self.rho_sq().sqrt()
    }

    /// CSV with header `t,n,q`, one line per non-zero weight.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,n,q\n");
        for (t, row) in self.rows.iter().enumerate() {
            for &(n, q) in row {
                s.push_str(&format!("{t},{n},{}\n", sig17(q)));
            }
        }
        s
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv). The client count
    /// is `clients` if given, otherwise one past the largest index seen.
    /// The result is checked with [`verify_simplex`].
    pub fn from_csv(text: &str, clients: Option<usize>) -> Result<Self> {
        let mut entries = Vec::new();
        for (line, rec) in read_csv(text, "t,n,q")? {
            let field = |i: usize, what: &str| {
                rec.get(i).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing {what}"),
                })
            };
            let parse_err = |m: &str| Error::Parse {
                line,
                message: m.to_string(),
            };
            let t: usize = field(0, "round")?
                .parse()
                .map_err(|_| parse_err("bad round index"))?;
            let n: usize = field(1, "client")?
                .parse()
                .map_err(|_| parse_err("bad client index"))?;
            let q: f64 = field(2, "weight")?
                .parse()
                .map_err(|_| parse_err("bad weight"))?;
            entries.push((t, n, q));
        }
        let rounds = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let clients = clients.unwrap_or_else(|| entries.iter().map(|e| e.1 + 1).max().unwrap_or(0));
        let mut rows = vec![Vec::new(); rounds];
        for (t, n, q) in entries {
            rows[t].push((n, q));
        }
        let s = Self::from_rows(clients, rows)?;
        verify_simplex(&s)?;
        Ok(s)
    }
}

/// Result of a successful simplex check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexReport {
    pub max_row_error: f64,
    pub rho_sq: f64,
}

/// Checks `sum_n q_t^n = 1` (within [`SIMPLEX_TOL`]) and `q >= 0` for every
/// round, and `rho^2 <= 1`.
pub fn verify_simplex(schedule: &WeightSchedule) -> Result<SimplexReport> {
    let mut bad = Vec::new();
    let mut max_err: f64 = 0.0;
    for (t, row) in schedule.rows.iter().enumerate() {
        if let Some(&(n, q)) = row.iter().find(|&&(_, q)| !(q >= 0.0)) {
            bad.push((t, format!("client {n} has weight {q}")));
            continue;
        }
        let sum: f64 = row.iter().map(|&(_, q)| q).sum();
        let err = (sum - 1.0).abs();
        max_err = max_err.max(err);
        if !(err <= SIMPLEX_TOL) {
            bad.push((t, format!("weights sum to {sum}")));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Simplex { rounds: bad });
    }
    let rho_sq = schedule.rho_sq();
    if rho_sq > 1.0 + SIMPLEX_TOL {
        return Err(Error::Simplex {
            rounds: vec![(0, format!("rho^2 = {rho_sq} exceeds 1"))],
        });
    }
    Ok(SimplexReport {
        max_row_error: max_err,
        rho_sq,
    })
}

/// `rho` of a schedule.
pub fn rho_bound(schedule: &WeightSchedule) -> f64 {
    schedule.rho()
}

fn equal_row(mut picked: Vec<usize>) -> Row {
    picked.sort_unstable();
    let w = 1.0 / picked.len() as f64;
    picked.into_iter().map(|n| (n, w)).collect()
}

fn sample_subset(rng: &mut Stream, pool: &[usize], k: usize) -> Vec<usize> {
    index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Generates `rounds` rows of the given pattern; a pure function of its inputs.
pub fn generate_schedule(
    spec: &PatternSpec,
    clients: usize,
    rounds: usize,
    seed: u64,
) -> Result<WeightSchedule> {
    spec.validate(clients)?;
    let mut rng = substream(seed, Domain::Schedule, &[]);
    let all: Vec<usize> = (0..clients).collect();
    let mut rows = Vec::with_capacity(rounds);
    let mut fallback_rounds = 0;
    let mut offset_used = None;
    let mut availability = None;

    match *spec {
        PatternSpec::Full => {
            let w = 1.0 / clients as f64;
            let row: Row = all.iter().map(|&n| (n, w)).collect();
            rows.resize(rounds, row);
        }
        PatternSpec::IndependentUniform { participants } => {
            for _ in 0..rounds {
                rows.push(equal_row(sample_subset(&mut rng, &all, participants)));
            }
        }
        PatternSpec::RegularizedPermutation { participants } => {
            let mut perm = all.clone();
            for t in 0..rounds {
                let slot = t % (clients / participants);
                if slot == 0 {
                    perm.shuffle(&mut rng);
                }
                rows.push(equal_row(
                    perm[slot * participants..(slot + 1) * participants].to_vec(),
                ));
            }
        }
        PatternSpec::PeriodicGroups {
            groups,
            block,
            participants,
            offset,
        } => {
            let cycle = groups * block;
            let off = match offset {
                Offset::Random => rng.random_range(0..cycle),
                Offset::Fixed(o) => o,
            };
            offset_used = Some(off);
            let size = clients / groups;
            let take = participants.min(size);
            let mut counts = vec![0u64; clients];
            let mut queue: VecDeque<usize> = VecDeque::new();
            let mut current = usize::MAX;
            for t in 0..rounds {
                let g = ((t + off) % cycle) / block;
                if g != current {
                    current = g;
                    queue.clear();
                }
                let members: Vec<usize> = (g * size..(g + 1) * size).collect();
                for &n in &members {
                    counts[n] += 1;
                }
                let mut picked = Vec::with_capacity(take);
                let mut deferred = Vec::new();
                while picked.len() < take {
                    if queue.is_empty() {
                        let mut p = members.clone();
                        p.shuffle(&mut rng);
                        queue.extend(p);
                    }
                    let c = queue.pop_front().unwrap();
                    if picked.contains(&c) {
                        deferred.push(c);
                    } else {
                        picked.push(c);
                    }
                }
                for c in deferred.into_iter().rev() {
                    queue.push_front(c);
                }
                rows.push(equal_row(picked));
            }
            availability = Some(counts);
        }
        PatternSpec::MarkovAvailability {
            stay_available,
            stay_unavailable,
            participants,
        } => {
            let pi = spec.stationary_availability().unwrap();
            let mut state: Vec<bool> = (0..clients).map(|_| rng.random::<f64>() < pi).collect();
            let mut counts = vec![0u64; clients];
            let mut avail = Vec::with_capacity(clients);
            for t in 0..rounds {
                if t > 0 {
                    for s in state.iter_mut() {
                        let u: f64 = rng.random();
                        *s = if *s {
                            u < stay_available
                        } else {
                            u >= stay_unavailable
                        };
                    }
                }
                avail.clear();
                avail.extend((0..clients).filter(|&n| state[n]));
                for &n in &avail {
                    counts[n] += 1;
                }
                let picked = if avail.is_empty() {
                    fallback_rounds += 1;
                    sample_subset(&mut rng, &all, participants)
                } else {
                    sample_subset(&mut rng, &avail, participants.min(avail.len()))
                };
                rows.push(equal_row(picked));
            }
            availability = Some(counts);
        }
    }

    Ok(WeightSchedule {
        clients,
        rows,
        pattern: Some(*spec),
        seed: Some(seed),
        fallback_rounds,
        offset: offset_used,
        availability,
    })
}

/// Aligned-window statistics of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub interval: usize,
    /// `t0 = 0, P, 2P, ...` for every complete window.
    pub window_starts: Vec<usize>,
    /// `averages[k][n]` is client `n`'s averaged weight over window `k`.
    pub averages: Vec<Vec<f64>>,
    /// The window mean, fixed to `1/N`.
    pub mean: f64,
    pub max_abs_deviation: f64,
    /// Mean of `(qbar - 1/N)^2` over all windows and clients.
    pub variance: f64,
    /// The same, per client.
    pub client_variance: Vec<f64>,
    /// `Cov(q_t^n, q_{t+p}^n)` for `p = 0..=max_lag`, pooled over clients
    /// and computed about the mean `1/N`.
    pub lag_covariance: Vec<f64>,
    /// Rounds after the last complete window (excluded from the averages).
    pub trailing_rounds: usize,
}

impl WindowStats {
    /// Squared deviations `(qbar - 1/N)^2` for every window and client.
    pub fn squared_deviations(&self) -> impl Iterator<Item = f64> + '_ {
        self.averages
            .iter()
            .flatten()
            .map(move |q| (q - self.mean).powi(2))
    }
}

pub fn window_averages(
    schedule: &WeightSchedule,
    interval: usize,
    max_lag: usize,
) -> Result<WindowStats> {
    let t_len = schedule.rounds();
    if interval == 0 || interval > t_len {
        return Err(Error::invalid(format!(
            "interval must lie in 1..={t_len}, got {interval}"
        )));
    }
    let n_clients = schedule.clients();
    let mean = 1.0 / n_clients as f64;
    let windows = t_len / interval;
    let window_starts: Vec<usize> = (0..windows).map(|k| k * interval).collect();
    let averages: Vec<Vec<f64>> = window_starts
        .iter()
        .map(|&t0| {
            schedule
                .window_sums(t0, interval)
                .into_iter()
                .map(|s| s / interval as f64)
                .collect()
        })
        .collect();
    let mut client_variance = vec![0.0; n_clients];
    let mut max_abs_deviation: f64 = 0.0;
    for row in &averages {
        for (n, q) in row.iter().enumerate() {
            let d = q - mean;
            client_variance[n] += d * d;
            max_abs_deviation = max_abs_deviation.max(d.abs());
        }
    }
    client_variance
        .iter_mut()
        .for_each(|v| *v /= windows as f64);
    let variance = client_variance.iter().sum::<f64>() / n_clients as f64;

    let max_lag = max_lag.min(t_len - 1);
    let dense = schedule.dense_by_client();
    let lag_covariance = (0..=max_lag)
        .map(|p| {
            let mut s = 0.0;
            for series in &dense {
                for t in 0..t_len - p {
                    s += (series[t] - mean) * (series[t + p] - mean);
                }
            }
            s / ((t_len - p) * n_clients) as f64
        })
        .collect();

    Ok(WindowStats {
        interval,
        window_starts,
        averages,
        mean,
        max_abs_deviation,
        variance,
        client_variance,
        lag_covariance,
        trailing_rounds: t_len - windows * interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_rows_are_uniform() {
        let s = generate_schedule(&PatternSpec::Full, 4, 3, 0).unwrap();
        for row in s.rows() {
            assert_eq!(row, &vec![(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
        }
        assert_eq!(verify_simplex(&s).unwrap().max_row_error, 0.0);
        assert!((rho_bound(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn permutation_pairs_cover_both_clients() {
        let s = generate_schedule(
            &PatternSpec::RegularizedPermutation { participants: 1 },
            2,
            4,
            3,
        )
        .unwrap();
        for k in 0..2 {
            let mut seen: Vec<usize> = (2 * k..2 * k + 2).map(|t| s.row(t)[0].0).collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1]);
        }
        let w = window_averages(&s, 2, 0).unwrap();
        for row in &w.averages {
            assert_eq!(row, &vec![0.5, 0.5]);
        }
    }

    #[test]
    fn rho_examples() {
        let s = generate_schedule(
            &PatternSpec::IndependentUniform { participants: 10 },
            40,
            5,
            1,
        )
        .unwrap();
        assert!((rho_bound(&s) - 0.31623).abs() < 5e-6);
        let r = WeightSchedule::from_rows(4, vec![vec![(0, 0.5), (1, 0.5)]]).unwrap();
        assert!((rho_bound(&r) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hand_built_bad_row_is_rejected() {
        let s =
            WeightSchedule::from_rows(3, vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.4), (2, 0.5)]])
                .unwrap();
        match verify_simplex(&s) {
            Err(Error::Simplex { rounds }) => assert_eq!(rounds[0].0, 1),
            other => panic!("expected simplex error, got {other:?}"),
        }
        assert!(WeightSchedule::from_rows(2, vec![vec![(2, 1.0)]]).is_err());
        assert!(WeightSchedule::from_rows(2, vec![vec![(0, -1.0), (1, 2.0)]]).is_err());
        assert!(WeightSchedule::from_rows(2, vec![vec![(0, 0.5), (0, 0.5)]]).is_err());
    }

    #[test]
    fn permutation_requires_divisibility() {
        assert!(generate_schedule(
            &PatternSpec::RegularizedPermutation { participants: 3 },
            8,
            4,
            0
        )
        .is_err());
        assert!(generate_schedule(
            &PatternSpec::IndependentUniform { participants: 0 },
            8,
            4,
            0
        )
        .is_err());
        assert!(generate_schedule(
            &PatternSpec::MarkovAvailability {
                stay_available: 1.0,
                stay_unavailable: 0.5,
                participants: 2
            },
            8,
            4,
            0
        )
        .is_err());
    }

    #[test]
    fn markov_availability_matches_stationary_law() {
        // pi = (1 - p_uu) / (2 - p_aa - p_uu) = 0.2 / 0.3
        let spec = PatternSpec::MarkovAvailability {
            stay_available: 0.9,
            stay_unavailable: 0.8,
            participants: 5,
        };
        let t = 100_000;
        let s = generate_schedule(&spec, 5, t, 21).unwrap();
        for &c in s.availability_counts().unwrap() {
            let freq = c as f64 / t as f64;
            assert!((freq - 2.0 / 3.0).abs() < 0.02 * 2.0 / 3.0, "{freq}");
        }
    }

    #[test]
    fn markov_fallback_keeps_simplex() {
        let spec = PatternSpec::MarkovAvailability {
            stay_available: 0.2,
            stay_unavailable: 0.95,
            participants: 1,
        };
        let s = generate_schedule(&spec, 2, 2000, 4).unwrap();
        assert!(s.fallback_rounds() > 0);
        verify_simplex(&s).unwrap();
    }

    #[test]
    fn markov_is_stationary() {
        // First- and second-half participation frequencies agree within
        // three standard errors (batch-means estimate over 50-round blocks).
        let spec = PatternSpec::MarkovAvailability {
            stay_available: 0.9,
            stay_unavailable: 0.8,
            participants: 3,
        };
        let s = generate_schedule(&spec, 6, 40_000, 8).unwrap();
        for series in s.dense_by_client() {
            let ind: Vec<f64> = series
                .iter()
                .map(|&q| if q > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let half = ind.len() / 2;
            let block_means = |v: &[f64]| -> Vec<f64> {
                v.chunks(50).map(|c| c.iter().sum::<f64>() / 50.0).collect()
            };
            let (a, b) = (block_means(&ind[..half]), block_means(&ind[half..]));
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
            };
            let se = (var(&a) / a.len() as f64 + var(&b) / b.len() as f64).sqrt();
            assert!((mean(&a) - mean(&b)).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn periodic_groups_follow_the_cycle() {
        let spec = PatternSpec::PeriodicGroups {
            groups: 5,
            block: 20,
            participants: 5,
            offset: Offset::Fixed(37),
        };
        let s = generate_schedule(&spec, 50, 300, 2).unwrap();
        assert_eq!(s.offset(), Some(37));
        for t in 0..300 {
            let g = ((t + 37) % 100) / 20;
            assert_eq!(s.row(t).len(), 5);
            assert!(s.row(t).iter().all(|&(n, _)| n / 10 == g));
        }
        // Every full cycle gives every group exactly 20 rounds of 5 picks.
        let w = window_averages(&s, 100, 0).unwrap();
        for row in &w.averages {
            let group_sum: Vec<f64> = (0..5)
                .map(|g| row[g * 10..(g + 1) * 10].iter().sum())
                .collect();
            for v in group_sum {
                assert!((v - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_visit_is_regular_within_a_block() {
        let spec = PatternSpec::PeriodicGroups {
            groups: 2,
            block: 4,
            participants: 2,
            offset: Offset::Fixed(0),
        };
        let s = generate_schedule(&spec, 8, 8, 5).unwrap();
        // Four rounds of two picks from a group of four: each member twice.
        let sums = s.window_sums(0, 4);
        assert_eq!(&sums[..4], &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn independent_window_variance_oracle() {
        // q in {0, 1} with probability 1/2: Var(q) = 1/4, so Var(qbar) = 1/16 at P = 4.
        let s = generate_schedule(
            &PatternSpec::IndependentUniform { participants: 1 },
            2,
            400_000,
            6,
        )
        .unwrap();
        let w = window_averages(&s, 4, 2).unwrap();
        assert!(
            (w.variance - 1.0 / 16.0).abs() < 0.02 / 16.0 * 4.0,
            "{}",
            w.variance
        );
        assert!((w.lag_covariance[0] - 0.25).abs() < 0.005);
        assert!(w.lag_covariance[1].abs() < 0.005);
    }

    #[test]
    fn trailing_window_is_reported() {
        let s = generate_schedule(&PatternSpec::Full, 3, 10, 0).unwrap();
        let w = window_averages(&s, 4, 0).unwrap();
        assert_eq!(w.window_starts, vec![0, 4]);
        assert_eq!(w.trailing_rounds, 2);
        assert_eq!(w.max_abs_deviation, 0.0);
        assert!(window_averages(&s, 0, 0).is_err());
        assert!(window_averages(&s, 11, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = generate_schedule(
            &PatternSpec::IndependentUniform { participants: 3 },
            7,
            20,
            9,
        )
        .unwrap();
        let back = WeightSchedule::from_csv(&s.to_csv(), Some(7)).unwrap();
        assert_eq!(back.rows(), s.rows());
        assert!(WeightSchedule::from_csv("t,n,q\n0,0,0.9\n", None).is_err());
        assert!(WeightSchedule::from_csv("a,b\n", None).is_err());
    }

    fn any_spec() -> impl Strategy<Value = (PatternSpec, usize)> {
        prop_oneof![
            (1usize..12).prop_map(|n| (PatternSpec::Full, n)),
            (1usize..12).prop_flat_map(|n| (1..=n)
                .prop_map(move |s| (PatternSpec::IndependentUniform { participants: s }, n))),
            (1usize..6, 1usize..4).prop_map(|(s, k)| (
                PatternSpec::RegularizedPermutation { participants: s },
                s * k
            )),
            (1usize..4, 1usize..5, 1usize..4, 1usize..6).prop_map(|(g, b, per, s)| (
                PatternSpec::PeriodicGroups {
                    groups: g,
                    block: b,
                    participants: s.min(g * per),
                    offset: Offset::Random
                },
                g * per
            )),
            (0.05f64..0.95, 0.05f64..0.95, 1usize..10).prop_flat_map(|(a, u, n)| (1..=n).prop_map(
                move |s| (
                    PatternSpec::MarkovAvailability {
                        stay_available: a,
                        stay_unavailable: u,
                        participants: s
                    },
                    n
                )
            )),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generated_schedules_are_valid((spec, n) in any_spec(), seed in any::<u64>()) {
            let s = generate_schedule(&spec, n, 40, seed).unwrap();
            let rep = verify_simplex(&s).unwrap();
            prop_assert!(rep.max_row_error <= SIMPLEX_TOL);
            let rho = s.rho();
            prop_assert!(rho <= 1.0 + 1e-12);
            prop_assert!(rho >= 1.0 / (n as f64).sqrt() - 1e-12);
            prop_assert_eq!(generate_schedule(&spec, n, 40, seed).unwrap(), s);
        }

        #[test]
        fn permutation_windows_are_regular(s in 1usize..6, k in 1usize..6, seed in any::<u64>()) {
            let n = s * k;
            let sched = generate_schedule(&PatternSpec::RegularizedPermutation { participants: s }, n, 4 * k, seed).unwrap();
            let w = window_averages(&sched, k, 0).unwrap();
            prop_assert!(w.max_abs_deviation <= 1e-15);
        }
    }
}
