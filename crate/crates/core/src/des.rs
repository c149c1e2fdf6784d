//! Event-driven simulation of the scenario queues, used as the measurement
//! oracle for the closed-form results in [`crate::queueing`].
//!
//! One simulation run is a strictly sequential single-server system:
//!
//! * `Mm1` — Poisson arrivals, exponential service.
//! * `BatchCdn` — the request volume `lambda` arrives as Poisson bursts of
//!   size `b` (burst rate `lambda / b`), members served one by one.
//! * `BatchInfra` — the same burst process at volume `lambda / b`.
//! * `Priority` — two Poisson classes at rates `q lambda` and
//!   `(1 - q) lambda`, shared exponential service, non-preemptive, legal
//!   class first, FCFS within a class.
//!
//! Randomness comes from ChaCha8 keyed by the config seed, with one stream
//! per draw purpose (stream 0: arrivals, 1: services, 2: second arrival
//! class). Exponential variates use the inverse transform
//! `-ln(1 - u) / rate`, so a run is reproducible bit for bit from its
//! config alone. Replications derive seeds as `seed, seed + 1, ...`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::queueing::{
    batch_cdn_time, infra_time, mm1_time, priority_times, PriorityEconParams, QueueError,
    QueueParams, ScenarioKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// Scenario selector plus the parameters it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "kebab-case")]
pub enum ScenarioParams {
    Mm1(QueueParams),
    BatchCdn(QueueParams),
    BatchInfra(QueueParams),
    Priority(PriorityEconParams),
}

impl ScenarioParams {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioParams::Mm1(_) => ScenarioKind::Mm1,
            ScenarioParams::BatchCdn(_) => ScenarioKind::BatchCdn,
            ScenarioParams::BatchInfra(_) => ScenarioKind::BatchInfra,
            ScenarioParams::Priority(_) => ScenarioKind::Priority,
        }
    }

    /// Customers delivered by one arrival event.
    fn batch_size(&self) -> u64 {
        match self {
            ScenarioParams::Mm1(_) | ScenarioParams::Priority(_) => 1,
            ScenarioParams::BatchCdn(p) | ScenarioParams::BatchInfra(p) => p.b as u64,
        }
    }

    /// Validates parameters and the scenario's stability condition.
    fn check(&self) -> Result<(), QueueError> {
        match self {
            ScenarioParams::Mm1(p) => mm1_time(p).map(|_| ()),
            ScenarioParams::BatchCdn(p) => batch_cdn_time(p).map(|_| ()),
            ScenarioParams::BatchInfra(p) => infra_time(p).map(|_| ()),
            ScenarioParams::Priority(p) => priority_times(p).map(|_| ()),
        }
    }
}

/// One simulation run, fully determined by its fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(flatten)]
    pub scenario: ScenarioParams,
    pub seed: u64,
    /// Arrival events to generate (bursts for the batch scenarios).
    pub arrivals: u64,
    /// Completed customers discarded before statistics start.
    pub warmup: u64,
    /// Batch count for the batch-means confidence interval.
    pub ci_batches: u64,
}

impl SimConfig {
    pub const DEFAULT_CI_BATCHES: u64 = 20;

    /// Config with the default warmup (1% of generated customers) and the
    /// default CI batch count.
    pub fn new(scenario: ScenarioParams, seed: u64, arrivals: u64) -> Self {
        let warmup = arrivals.saturating_mul(scenario.batch_size()) / 100;
        Self {
            scenario,
            seed,
            arrivals,
            warmup,
            ci_batches: Self::DEFAULT_CI_BATCHES,
        }
    }

    fn total_customers(&self) -> u64 {
        self.arrivals.saturating_mul(self.scenario.batch_size())
    }

    fn validate(&self) -> Result<(), SimError> {
        self.scenario.check()?;
        if self.arrivals == 0 {
            return Err(SimError::InvalidConfig("arrivals must be >= 1".into()));
        }
        if self.warmup >= self.total_customers() {
            return Err(SimError::InvalidConfig(format!(
                "warmup {} leaves no customers to measure out of {}",
                self.warmup,
                self.total_customers()
            )));
        }
        if self.ci_batches < 2 {
            return Err(SimError::InvalidConfig("ci_batches must be >= 2".into()));
        }
        Ok(())
    }
}

/// Post-warmup statistics of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Mean queue waiting time; `None` when the class completed nothing.
    pub mean_wait: Option<f64>,
    pub completed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassStats {
    pub legal: ClassStats,
    pub illegal: ClassStats,
}

/// Measurements of one run, all taken after the warmup completions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: ScenarioKind,
    /// Mean queue waiting time (excluding service).
    pub mean_wait: f64,
    /// Mean time in system (waiting plus service).
    pub mean_system_time: f64,
    /// 95% batch-means half-width of the run's headline metric: time in
    /// system for the scenario queues, queue waiting for the priority queue.
    pub ci95_half_width: f64,
    /// Customers measured (completions after warmup).
    pub completed: u64,
    /// Time-average number in system over the measurement window.
    pub mean_in_system: f64,
    /// Measured completions divided by the measurement-window span.
    pub effective_arrival_rate: f64,
    /// Per-class breakdown, present for the priority scenario.
    pub per_class: Option<PerClassStats>,
}

/// Two-sided 97.5% Student-t quantile for `df` degrees of freedom; falls
/// back to the normal value above 30 df.
fn t_quantile_975(df: u64) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[(df - 1) as usize],
        _ => 1.96,
    }
}

/// `-ln(1 - u) / rate` with `u` uniform in `[0, 1)`.
fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Streaming mean plus batch-means accumulator over a known sample count.
struct BatchMeans {
    per_batch: u64,
    batch_sums: Vec<f64>,
    sum: f64,
    count: u64,
}

impl BatchMeans {
    fn new(total: u64, batches: u64) -> Self {
        Self {
            per_batch: (total / batches).max(1),
            batch_sums: Vec::with_capacity(batches as usize),
            sum: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, value: f64) {
        let batch = (self.count / self.per_batch) as usize;
        if batch == self.batch_sums.len() {
            self.batch_sums.push(0.0);
        }
        self.batch_sums[batch] += value;
        self.sum += value;
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// 95% half-width from the complete batches.
    fn ci95(&self) -> f64 {
        let full: Vec<f64> = self
            .batch_sums
            .iter()
            .enumerate()
            .filter(|&(i, _)| ((i as u64 + 1) * self.per_batch) <= self.count)
            .map(|(_, s)| s / self.per_batch as f64)
            .collect();
        let n = full.len();
        if n < 2 {
            return 0.0;
        }
        let mean = full.iter().sum::<f64>() / n as f64;
        let var = full.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        t_quantile_975(n as u64 - 1) * (var / n as f64).sqrt()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Legal,
    Illegal,
}

/// Single-server non-preemptive engine shared by all scenarios.
///
/// The scenario queues use only the legal queue; the priority scenario adds
/// the illegal one, served when no legal customer waits.
struct Engine {
    now: f64,
    in_system: u64,
    area: f64,
    legal_queue: VecDeque<f64>,
    illegal_queue: VecDeque<f64>,
    /// `(arrival, wait, class)` of the customer in service, if any.
    in_service: Option<(f64, f64, Class)>,
    departure_at: f64,
    service_rng: ChaCha8Rng,
    mu: f64,
}

impl Engine {
    fn new(seed: u64, mu: f64) -> Self {
        Self {
            now: 0.0,
            in_system: 0,
            area: 0.0,
            legal_queue: VecDeque::new(),
            illegal_queue: VecDeque::new(),
            in_service: None,
            departure_at: f64::INFINITY,
            service_rng: stream_rng(seed, 1),
            mu,
        }
    }

    fn advance_to(&mut self, t: f64) {
        self.area += self.in_system as f64 * (t - self.now);
        self.now = t;
    }

    fn admit(&mut self, arrival: f64, class: Class) {
        self.in_system += 1;
        match class {
            Class::Legal => self.legal_queue.push_back(arrival),
            Class::Illegal => self.illegal_queue.push_back(arrival),
        }
        if self.in_service.is_none() {
            self.start_next();
        }
    }

    fn start_next(&mut self) {
        let (arrival, class) = if let Some(a) = self.legal_queue.pop_front() {
            (a, Class::Legal)
        } else if let Some(a) = self.illegal_queue.pop_front() {
            (a, Class::Illegal)
        } else {
            return;
        };
        let wait = self.now - arrival;
        let service = exp_sample(&mut self.service_rng, self.mu);
        self.in_service = Some((arrival, wait, class));
        self.departure_at = self.now + service;
    }

    /// Completes the in-service customer; returns `(wait, system, class)`.
    fn depart(&mut self) -> (f64, f64, Class) {
        let (arrival, wait, class) = self.in_service.take().expect("departure without service");
        self.in_system -= 1;
        let system = self.now - arrival;
        self.departure_at = f64::INFINITY;
        self.start_next();
        (wait, system, class)
    }
}

/// Arrival process: batches of a fixed size on one Poisson stream, or two
/// single-customer Poisson streams for the priority classes.
enum ArrivalKind {
    Batch {
        rng: ChaCha8Rng,
        rate: f64,
        size: u64,
        next_at: f64,
    },
    TwoClass {
        legal_rng: ChaCha8Rng,
        illegal_rng: ChaCha8Rng,
        legal_rate: f64,
        illegal_rate: f64,
        legal_next: f64,
        illegal_next: f64,
    },
}

impl ArrivalKind {
    fn for_config(cfg: &SimConfig) -> Self {
        match &cfg.scenario {
            ScenarioParams::Mm1(p) => Self::batch(cfg.seed, p.lambda, 1),
            // Request volume lambda grouped in bursts of b.
            ScenarioParams::BatchCdn(p) => {
                Self::batch(cfg.seed, p.lambda / p.b as f64, p.b as u64)
            }
            // Same burst structure at volume lambda / b.
            ScenarioParams::BatchInfra(p) => {
                Self::batch(cfg.seed, p.lambda / p.b as f64 / p.b as f64, p.b as u64)
            }
            ScenarioParams::Priority(p) => {
                let legal_rate = p.q * p.lambda;
                let illegal_rate = (1.0 - p.q) * p.lambda;
                let mut legal_rng = stream_rng(cfg.seed, 0);
                let mut illegal_rng = stream_rng(cfg.seed, 2);
                let legal_next = if legal_rate > 0.0 {
                    exp_sample(&mut legal_rng, legal_rate)
                } else {
                    f64::INFINITY
                };
                let illegal_next = if illegal_rate > 0.0 {
                    exp_sample(&mut illegal_rng, illegal_rate)
                } else {
                    f64::INFINITY
                };
                ArrivalKind::TwoClass {
                    legal_rng,
                    illegal_rng,
                    legal_rate,
                    illegal_rate,
                    legal_next,
                    illegal_next,
                }
            }
        }
    }

    fn batch(seed: u64, rate: f64, size: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let next_at = exp_sample(&mut rng, rate);
        ArrivalKind::Batch {
            rng,
            rate,
            size,
            next_at,
        }
    }

    fn next_time(&self) -> f64 {
        match self {
            ArrivalKind::Batch { next_at, .. } => *next_at,
            ArrivalKind::TwoClass {
                legal_next,
                illegal_next,
                ..
            } => legal_next.min(*illegal_next),
        }
    }

    /// Delivers the pending arrival event into the engine and schedules the
    /// following one.
    fn deliver(&mut self, engine: &mut Engine) {
        match self {
            ArrivalKind::Batch {
                rng,
                rate,
                size,
                next_at,
            } => {
                let t = *next_at;
                for _ in 0..*size {
                    engine.admit(t, Class::Legal);
                }
                *next_at = t + exp_sample(rng, *rate);
            }
            ArrivalKind::TwoClass {
                legal_rng,
                illegal_rng,
                legal_rate,
                illegal_rate,
                legal_next,
                illegal_next,
            } => {
                if *legal_next <= *illegal_next {
                    let t = *legal_next;
                    engine.admit(t, Class::Legal);
                    *legal_next = t + exp_sample(legal_rng, *legal_rate);
                } else {
                    let t = *illegal_next;
                    engine.admit(t, Class::Illegal);
                    *illegal_next = t + exp_sample(illegal_rng, *illegal_rate);
                }
            }
        }
    }
}

struct ClassAccumulator {
    sum_wait: f64,
    completed: u64,
}

/// Runs one simulation to completion (all generated customers served).
pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mu = match &cfg.scenario {
        ScenarioParams::Mm1(p) | ScenarioParams::BatchCdn(p) | ScenarioParams::BatchInfra(p) => {
            p.mu
        }
        ScenarioParams::Priority(p) => p.mu,
    };

    let mut engine = Engine::new(cfg.seed, mu);
    let mut arrivals_left = cfg.arrivals;
    let mut process = ArrivalKind::for_config(cfg);

    let total = cfg.total_customers();
    let measured_target = total - cfg.warmup;
    let mut waits = BatchMeans::new(measured_target, cfg.ci_batches);
    let mut systems = BatchMeans::new(measured_target, cfg.ci_batches);
    let mut legal = ClassAccumulator {
        sum_wait: 0.0,
        completed: 0,
    };
    let mut illegal = ClassAccumulator {
        sum_wait: 0.0,
        completed: 0,
    };

    let mut completions: u64 = 0;
    let mut window_start_time = 0.0;
    let mut window_start_area = 0.0;

    while completions < total {
        let next_arrival = if arrivals_left > 0 {
            process.next_time()
        } else {
            f64::INFINITY
        };
        if next_arrival < engine.departure_at {
            engine.advance_to(next_arrival);
            process.deliver(&mut engine);
            arrivals_left -= 1;
        } else {
            engine.advance_to(engine.departure_at);
            let (wait, system, class) = engine.depart();
            completions += 1;
            if completions == cfg.warmup {
                window_start_time = engine.now;
                window_start_area = engine.area;
            }
            if completions > cfg.warmup {
                waits.push(wait);
                systems.push(system);
                let acc = match class {
                    Class::Legal => &mut legal,
                    Class::Illegal => &mut illegal,
                };
                acc.sum_wait += wait;
                acc.completed += 1;
            }
        }
    }

    let span = engine.now - window_start_time;
    let mean_in_system = if span > 0.0 {
        (engine.area - window_start_area) / span
    } else {
        0.0
    };
    let effective_arrival_rate = if span > 0.0 {
        measured_target as f64 / span
    } else {
        0.0
    };

    let is_priority = matches!(cfg.scenario, ScenarioParams::Priority(_));
    let class_stats = |acc: &ClassAccumulator| ClassStats {
        mean_wait: (acc.completed > 0).then(|| acc.sum_wait / acc.completed as f64),
        completed: acc.completed,
    };

    Ok(SimResult {
        scenario: cfg.scenario.kind(),
        mean_wait: waits.mean(),
        mean_system_time: systems.mean(),
        ci95_half_width: if is_priority {
            waits.ci95()
        } else {
            systems.ci95()
        },
        completed: measured_target,
        mean_in_system,
        effective_arrival_rate,
        per_class: is_priority.then(|| PerClassStats {
            legal: class_stats(&legal),
            illegal: class_stats(&illegal),
        }),
    })
}

/// Runs independent replications with seeds `seed, seed + 1, ...`; results
/// are returned in that order. The first failing replication aborts the
/// batch.
pub fn replicate(cfg: &SimConfig, replications: u64) -> Result<Vec<SimResult>, SimError> {
    replicate_threaded(cfg, replications, 1)
}

/// [`replicate`] spread over up to `threads` worker threads. The result
/// order still follows the seed derivation order.
pub fn replicate_threaded(
    cfg: &SimConfig,
    replications: u64,
    threads: usize,
) -> Result<Vec<SimResult>, SimError> {
    if replications == 0 {
        return Err(SimError::InvalidConfig("replications must be >= 1".into()));
    }
    let configs: Vec<SimConfig> = (0..replications)
        .map(|i| SimConfig {
            seed: cfg.seed.wrapping_add(i),
            ..*cfg
        })
        .collect();

    if threads <= 1 {
        return configs.iter().map(simulate).collect();
    }

    let mut slots: Vec<Option<Result<SimResult, SimError>>> = vec![None; configs.len()];
    let chunk = configs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        for (slot_chunk, cfg_chunk) in slots.chunks_mut(chunk).zip(configs.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, c) in slot_chunk.iter_mut().zip(cfg_chunk) {
                    *slot = Some(simulate(c));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("replication slot not filled"))
        .collect()
}
