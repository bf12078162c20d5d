//! Discrete-event simulation of N Poisson sources sharing an FCFS
//! exponential server, with an infinite or finite (blocking) buffer.
//!
//! Arrivals form a merged Poisson stream of rate `sum(lambdas)`; each arrival
//! is labeled source `i` with probability `lambda_i / lambda`. Service is
//! exponential with rate `mu`, one update at a time, in arrival order. When
//! the update of source `i` generated at time `t` departs at time `t'`, the
//! monitor age of source `i` resets to `t' - t`; between deliveries it grows
//! at unit rate. Per-source age integrals are accumulated exactly as
//! piecewise-linear areas, and standard errors come from non-overlapping
//! batch means.
//!
//! Randomness: a ChaCha stream cipher with 8 rounds
//! ([`rand_chacha::ChaCha8Rng`]), seeded via `seed_from_u64`. Exponential
//! variates use the inverse CDF `-ln(1 - U) / rate` on 53-bit uniforms
//! `U ∈ [0, 1)`. A given (config, seed) pair therefore reproduces its
//! estimate bit for bit on the same build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

/// Fewest departures a run may simulate.
pub const MIN_EVENTS: u64 = 10_000;
/// Occupancy bins tracked for an infinite buffer; the last bin absorbs
/// deeper backlogs (negligible mass at stable loads).
const TRACKED_OCCUPANCY: usize = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unstable load: total offered load {0} >= 1 with an infinite buffer")]
    UnstableLoad(f64),
    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),
}

/// Queue capacity, counting the update in service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Buffer {
    Infinite,
    /// At most `m` updates in the system; arrivals finding it full are
    /// discarded.
    Finite(usize),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Service rate.
    pub mu: f64,
    /// Per-source arrival rates; all must be strictly positive.
    pub lambdas: Vec<f64>,
    pub buffer: Buffer,
    /// Total departures to simulate, warmup included.
    pub num_events: u64,
    /// Fraction of departures discarded before measurement starts.
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Batch count for batch-means standard errors.
    pub batches: usize,
}

impl SimConfig {
    /// Configuration with the default 10% warmup and 30 batches.
    pub fn new(mu: f64, lambdas: Vec<f64>, buffer: Buffer, num_events: u64, seed: u64) -> Self {
        Self {
            mu,
            lambdas,
            buffer,
            num_events,
            warmup_fraction: 0.1,
            seed,
            batches: 30,
        }
    }

    pub fn total_lambda(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(SimError::DegenerateConfig(format!(
                "service rate {} must be positive",
                self.mu
            )));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(SimError::DegenerateConfig(
                "every source needs a strictly positive arrival rate".into(),
            ));
        }
        if self.num_events < MIN_EVENTS {
            return Err(SimError::DegenerateConfig(format!(
                "num_events {} below minimum {MIN_EVENTS}",
                self.num_events
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::DegenerateConfig(format!(
                "warmup fraction {} must lie in [0, 1)",
                self.warmup_fraction
            )));
        }
        if self.batches < 2 {
            return Err(SimError::DegenerateConfig(
                "batch means need at least 2 batches".into(),
            ));
        }
        if self.measured_events() < self.batches as u64 {
            return Err(SimError::DegenerateConfig(
                "fewer post-warmup departures than batches".into(),
            ));
        }
        if let Buffer::Finite(m) = self.buffer {
            if m < 1 {
                return Err(SimError::DegenerateConfig("buffer size must be >= 1".into()));
            }
        }
        if self.buffer == Buffer::Infinite && self.total_lambda() >= self.mu {
            return Err(SimError::UnstableLoad(self.total_lambda() / self.mu));
        }
        Ok(())
    }

    fn warmup_events(&self) -> u64 {
        (self.warmup_fraction * self.num_events as f64).floor() as u64
    }

    fn measured_events(&self) -> u64 {
        self.num_events - self.warmup_events()
    }
}

/// Per-source time-average age with batch-means standard errors, plus the
/// structural statistics used to validate the run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeEstimate {
    /// Time-average age of each source over the measurement window.
    pub mean_age: Vec<f64>,
    /// Batch-means standard error of each mean.
    pub age_se: Vec<f64>,
    /// Length of the measurement window (time units).
    pub horizon: f64,
    /// Departures measured (post-warmup).
    pub events: u64,
    /// Fraction of time with k updates in the system.
    pub occupancy: Vec<f64>,
    pub occupancy_se: Vec<f64>,
    /// Time-average number of updates in the system.
    pub avg_in_system: f64,
    /// Mean over batches of (time-average occupancy - delivered system time
    /// per unit time); zero in expectation by Little's law.
    pub little_gap: f64,
    pub little_gap_se: f64,
    /// Measured deliveries per source.
    pub delivered: Vec<u64>,
    /// Arrivals discarded because the buffer was full.
    pub blocked: u64,
    /// Mean system time of measured deliveries.
    pub mean_system_time: f64,
}

/// Runs the event-driven simulation described by `config`.
pub fn simulate(config: &SimConfig) -> Result<AgeEstimate, SimError> {
    config.validate()?;
    Ok(Engine::new(config).run())
}

/// Time-weighted occupancy distribution of a finite-buffer run; requires
/// `Buffer::Finite`.
pub fn blocking_occupancy(config: &SimConfig) -> Result<Vec<f64>, SimError> {
    if !matches!(config.buffer, Buffer::Finite(_)) {
        return Err(SimError::DegenerateConfig(
            "occupancy validation needs a finite buffer".into(),
        ));
    }
    Ok(simulate(config)?.occupancy)
}

/// Accumulators for one batch.
#[derive(Clone)]
struct Batch {
    start: f64,
    age_integral: Vec<f64>,
    occupancy_time: Vec<f64>,
    in_system_integral: f64,
    system_time_sum: f64,
    delivered: u64,
}

impl Batch {
    fn new(start: f64, sources: usize, bins: usize) -> Self {
        Self {
            start,
            age_integral: vec![0.0; sources],
            occupancy_time: vec![0.0; bins],
            in_system_integral: 0.0,
            system_time_sum: 0.0,
            delivered: 0,
        }
    }
}

struct Engine<'a> {
    config: &'a SimConfig,
    rng: ChaCha8Rng,
    /// Cumulative arrival rates for source labeling.
    cum_rates: Vec<f64>,
    lambda: f64,
    /// FIFO of (source, generation time); front is in service.
    queue: VecDeque<(u32, f64)>,
    next_arrival: f64,
    /// Infinity while the server idles.
    next_departure: f64,
    /// Generation time of the freshest delivered update per source.
    freshest: Vec<f64>,
    /// Per-source time up to which the age integral is accumulated.
    anchor: Vec<f64>,
    /// Time of the last occupancy tally.
    last_tally: f64,
    occupancy_bins: usize,
    measuring: bool,
    departures: u64,
    blocked: u64,
    delivered: Vec<u64>,
    batch: Batch,
    finished: Vec<Batch>,
    batch_ends: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig) -> Self {
        let mut cum = 0.0;
        let cum_rates = config
            .lambdas
            .iter()
            .map(|l| {
                cum += l;
                cum
            })
            .collect();
        let sources = config.lambdas.len();
        let occupancy_bins = match config.buffer {
            Buffer::Finite(m) => m + 1,
            Buffer::Infinite => TRACKED_OCCUPANCY,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let lambda = config.total_lambda();
        let first_arrival = exp_variate(&mut rng, lambda);
        Self {
            config,
            rng,
            cum_rates,
            lambda,
            queue: VecDeque::new(),
            next_arrival: first_arrival,
            next_departure: f64::INFINITY,
            freshest: vec![0.0; sources],
            anchor: vec![0.0; sources],
            last_tally: 0.0,
            occupancy_bins,
            measuring: false,
            departures: 0,
            blocked: 0,
            delivered: vec![0; sources],
            batch: Batch::new(0.0, sources, occupancy_bins),
            finished: Vec::with_capacity(config.batches),
            batch_ends: Vec::with_capacity(config.batches),
        }
    }

    fn exp(&mut self, rate: f64) -> f64 {
        exp_variate(&mut self.rng, rate)
    }

    fn draw_source(&mut self) -> u32 {
        let r: f64 = self.rng.random::<f64>() * self.lambda;
        let idx = self
            .cum_rates
            .iter()
            .position(|&c| r < c)
            .unwrap_or(self.cum_rates.len() - 1);
        idx as u32
    }

    /// Accumulates occupancy time from the last tally up to `t`.
    fn tally_occupancy(&mut self, t: f64) {
        if self.measuring {
            let dt = t - self.last_tally;
            let bin = self.queue.len().min(self.occupancy_bins - 1);
            self.batch.occupancy_time[bin] += dt;
            self.batch.in_system_integral += self.queue.len() as f64 * dt;
        }
        self.last_tally = t;
    }

    /// Adds the age area of source `i` from its anchor up to `t`.
    fn flush_source(&mut self, i: usize, t: f64) {
        let dt = t - self.anchor[i];
        let start_age = self.anchor[i] - self.freshest[i];
        self.batch.age_integral[i] += dt * (start_age + 0.5 * dt);
        self.anchor[i] = t;
    }

    fn start_measurement(&mut self, t: f64) {
        self.measuring = true;
        self.last_tally = t;
        for a in self.anchor.iter_mut() {
            *a = t;
        }
        self.batch = Batch::new(t, self.config.lambdas.len(), self.occupancy_bins);
    }

    fn close_batch(&mut self, t: f64) {
        for i in 0..self.config.lambdas.len() {
            self.flush_source(i, t);
        }
        self.tally_occupancy(t);
        let sources = self.config.lambdas.len();
        let mut done = Batch::new(t, sources, self.occupancy_bins);
        std::mem::swap(&mut done, &mut self.batch);
        self.finished.push(done);
        self.batch_ends.push(t);
    }

    fn run(mut self) -> AgeEstimate {
        let warmup = self.config.warmup_events();
        let measured = self.config.measured_events();
        let batches = self.config.batches as u64;
        if warmup == 0 {
            self.start_measurement(0.0);
        }
        // Post-warmup departure counts at which batches close.
        let mut boundaries = (1..=batches).map(|b| measured * b / batches);
        let mut next_boundary = boundaries.next().unwrap();

        while self.departures < self.config.num_events {
            if self.next_arrival <= self.next_departure {
                self.arrival();
            } else {
                let warmup_done = self.departure(warmup);
                if warmup_done {
                    continue;
                }
                if self.measuring && self.departures - warmup == next_boundary {
                    self.close_batch(self.last_tally);
                    if let Some(b) = boundaries.next() {
                        next_boundary = b;
                    }
                }
            }
        }
        self.summarize()
    }

    fn arrival(&mut self) {
        let t = self.next_arrival;
        self.tally_occupancy(t);
        let source = self.draw_source();
        let accept = match self.config.buffer {
            Buffer::Finite(m) => self.queue.len() < m,
            Buffer::Infinite => true,
        };
        if accept {
            if self.queue.is_empty() {
                self.next_departure = t + self.exp(self.config.mu);
            }
            self.queue.push_back((source, t));
        } else {
            self.blocked += 1;
        }
        self.next_arrival = t + self.exp(self.lambda);
    }

    /// Processes one departure; returns true when it completed the warmup.
    fn departure(&mut self, warmup: u64) -> bool {
        let t = self.next_departure;
        self.tally_occupancy(t);
        let (source, gen) = self.queue.pop_front().expect("departure from empty queue");
        let i = source as usize;
        self.departures += 1;
        self.next_departure = if self.queue.is_empty() {
            f64::INFINITY
        } else {
            t + self.exp(self.config.mu)
        };

        // FCFS delivers each source's updates in generation order, so the
        // delivered timestamp strictly advances and the reset age t - gen
        // is a real system time.
        debug_assert!(gen >= self.freshest[i]);
        debug_assert!(t - gen > 0.0);
        if self.measuring {
            self.flush_source(i, t);
            self.batch.system_time_sum += t - gen;
            self.batch.delivered += 1;
            self.delivered[i] += 1;
        }
        self.freshest[i] = gen;
        self.last_tally = t;

        if !self.measuring && self.departures == warmup {
            self.start_measurement(t);
            return true;
        }
        false
    }

    fn summarize(self) -> AgeEstimate {
        let sources = self.config.lambdas.len();
        let batches = self.finished.len();
        let t0 = self.finished[0].start;
        let horizon = self.batch_ends[batches - 1] - t0;
        let durations: Vec<f64> = self
            .finished
            .iter()
            .zip(&self.batch_ends)
            .map(|(b, end)| end - b.start)
            .collect();

        let mut mean_age = vec![0.0; sources];
        let mut age_se = vec![0.0; sources];
        for i in 0..sources {
            let total: f64 = self.finished.iter().map(|b| b.age_integral[i]).sum();
            let grand = total / horizon;
            mean_age[i] = grand;
            let means = self
                .finished
                .iter()
                .zip(&durations)
                .map(|(b, d)| b.age_integral[i] / d);
            age_se[i] = batch_standard_error(means, grand, batches);
        }

        let bins = self.occupancy_bins;
        let mut occupancy = vec![0.0; bins];
        let mut occupancy_se = vec![0.0; bins];
        for k in 0..bins {
            let total: f64 = self.finished.iter().map(|b| b.occupancy_time[k]).sum();
            let grand = total / horizon;
            occupancy[k] = grand;
            let fractions = self
                .finished
                .iter()
                .zip(&durations)
                .map(|(b, d)| b.occupancy_time[k] / d);
            occupancy_se[k] = batch_standard_error(fractions, grand, batches);
        }

        let in_system_total: f64 = self.finished.iter().map(|b| b.in_system_integral).sum();
        let avg_in_system = in_system_total / horizon;
        let system_time_total: f64 = self.finished.iter().map(|b| b.system_time_sum).sum();
        let delivered_total: u64 = self.finished.iter().map(|b| b.delivered).sum();

        // Little's law, integral form: the time-average backlog equals the
        // delivered system time per unit time, up to boundary jobs.
        let gaps: Vec<f64> = self
            .finished
            .iter()
            .zip(&durations)
            .map(|(b, d)| (b.in_system_integral - b.system_time_sum) / d)
            .collect();
        let little_gap = (in_system_total - system_time_total) / horizon;
        let little_gap_se = batch_standard_error(gaps.iter().copied(), little_gap, batches);

        AgeEstimate {
            mean_age,
            age_se,
            horizon,
            events: delivered_total,
            occupancy,
            occupancy_se,
            avg_in_system,
            little_gap,
            little_gap_se,
            delivered: self.delivered,
            blocked: self.blocked,
            mean_system_time: system_time_total / delivered_total as f64,
        }
    }
}

fn exp_variate(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn batch_standard_error(means: impl Iterator<Item = f64>, grand: f64, batches: usize) -> f64 {
    let ss: f64 = means.map(|m| (m - grand) * (m - grand)).sum();
    (ss / (batches - 1) as f64 / batches as f64).sqrt()
}
