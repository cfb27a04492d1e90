//! Discrete-time mini-slot CSMA simulator.
//!
//! Each slot is evaluated in two phases against the previous slot's channel
//! state. Phase one: a link is blocked iff a neighbor is transmitting; an
//! unblocked idle link with backoff 0 starts, any other unblocked idle link
//! decrements its backoff unless a neighbor starts in the same slot (see
//! [`Sensing`]), and blocked links freeze. Phase two: every starter
//! transmits for `t_tx` slots (the start slot included) and is marked
//! collided iff a neighbor started in the same slot. A link redraws its
//! backoff in the last slot of its transmission.
//!
//! Randomness comes from `ChaCha8Rng`, seeded per replication by
//! [`replication_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gicn::LinkMetrics;
use crate::graph::ContentionGraph;

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("initial contention window must be at least 1")]
    ZeroWindow,
    #[error("cw_max ({cw_max}) is below cw0 ({cw0})")]
    WindowCap { cw0: u32, cw_max: u32 },
    #[error("transmission length must be at least 1 slot")]
    ZeroTxLength,
    #[error("warmup ({warmup}) must be shorter than the run ({total})")]
    Warmup { warmup: u64, total: u64 },
    #[error("at least two replications are needed, got {0}")]
    TooFewReplications(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BackoffDist {
    /// Uniform integer on `[0, CW]`.
    #[default]
    Uniform,
    /// Geometric on `{0, 1, ..}` with mean `CW/2`.
    Geometric,
}

/// When an idle, unblocked link may decrement its backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sensing {
    /// Only if no neighbor was transmitting in the previous slot and none
    /// starts in this one; a neighbor's start slot counts as busy.
    #[default]
    StartSlotBusy,
    /// Only if no neighbor was transmitting in the previous slot.
    PreviousSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cw0: u32,
    pub cw_max: u32,
    pub beb_enabled: bool,
    pub t_tx: u32,
    pub total_slots: u64,
    pub warmup_slots: u64,
    pub seed: u64,
    pub backoff_dist: BackoffDist,
    pub sensing: Sensing,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::with_slots(10_000_000)
    }
}

impl SimConfig {
    /// Defaults with the given run length and a 5% warmup.
    pub fn with_slots(total_slots: u64) -> Self {
        SimConfig {
            cw0: 31,
            cw_max: 1023,
            beb_enabled: false,
            t_tx: 83,
            total_slots,
            warmup_slots: total_slots / 20,
            seed: 1,
            backoff_dist: BackoffDist::Uniform,
            sensing: Sensing::StartSlotBusy,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cw0 == 0 {
            return Err(SimError::ZeroWindow);
        }
        if self.cw_max < self.cw0 {
            return Err(SimError::WindowCap {
                cw0: self.cw0,
                cw_max: self.cw_max,
            });
        }
        if self.t_tx == 0 {
            return Err(SimError::ZeroTxLength);
        }
        if self.warmup_slots >= self.total_slots {
            return Err(SimError::Warmup {
                warmup: self.warmup_slots,
                total: self.total_slots,
            });
        }
        Ok(())
    }

    pub fn measured_slots(&self) -> u64 {
        self.total_slots - self.warmup_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkRuntimeState {
    pub backoff: u32,
    /// Slots left in the current transmission; 0 when idle.
    pub tx_remaining: u32,
    pub collided_current: bool,
    pub current_cw: u32,
}

/// What happened in one slot, as link bitmasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotEvents {
    pub blocked: u64,
    pub decremented: u64,
    pub starters: u64,
    pub collided_starters: u64,
    pub finished: u64,
}

/// Per-link counters over the measured window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkCounters {
    pub success_slots: u64,
    pub collided_slots: u64,
    pub countdown_slots: u64,
    pub frozen_slots: u64,
    pub attempts: u64,
    pub collided_attempts: u64,
}

impl LinkCounters {
    fn add(&mut self, o: &LinkCounters) {
        self.success_slots += o.success_slots;
        self.collided_slots += o.collided_slots;
        self.countdown_slots += o.countdown_slots;
        self.frozen_slots += o.frozen_slots;
        self.attempts += o.attempts;
        self.collided_attempts += o.collided_attempts;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub replications: usize,
    pub throughput_half_width: Vec<f64>,
    pub collision_half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub counters: Vec<LinkCounters>,
    /// Measured slots (summed over replications when aggregated).
    pub simulated_slots: u64,
    pub seed: u64,
    pub metrics: LinkMetrics,
    pub intervals: Option<ConfidenceIntervals>,
}

/// Graph, per-link state, and RNG of a running simulation.
pub struct World {
    neighbors: Vec<u64>,
    links: Vec<LinkRuntimeState>,
    config: SimConfig,
    rng: ChaCha8Rng,
    geometric_ln: Vec<f64>,
}

impl World {
    pub fn new(g: &ContentionGraph, config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut world = World {
            neighbors: g.neighbor_masks().iter().map(|s| s.bits()).collect(),
            links: vec![LinkRuntimeState::default(); g.len()],
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            geometric_ln: Vec::new(),
        };
        for i in 0..world.links.len() {
            world.links[i].current_cw = config.cw0;
            world.links[i].backoff = world.draw_backoff(config.cw0);
        }
        Ok(world)
    }

    pub fn links(&self) -> &[LinkRuntimeState] {
        &self.links
    }

    /// Overrides per-link state, e.g. to start from a chosen configuration.
    pub fn set_link(&mut self, i: usize, state: LinkRuntimeState) {
        self.links[i] = state;
    }

    /// Bitmask of links with a transmission in progress.
    pub fn transmitting(&self) -> u64 {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.tx_remaining > 0)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    fn draw_backoff(&mut self, cw: u32) -> u32 {
        match self.config.backoff_dist {
            BackoffDist::Uniform => self.rng.random_range(0..=cw),
            BackoffDist::Geometric => {
                // success probability 2/(cw+2) gives mean cw/2
                let p = 2.0 / (f64::from(cw) + 2.0);
                if self.geometric_ln.len() <= cw as usize {
                    self.geometric_ln.resize(cw as usize + 1, f64::NAN);
                }
                let ln_q = match self.geometric_ln[cw as usize] {
                    v if v.is_nan() => {
                        let v = (1.0 - p).ln();
                        self.geometric_ln[cw as usize] = v;
                        v
                    }
                    v => v,
                };
                let u: f64 = self.rng.random();
                ((1.0 - u).ln() / ln_q).floor() as u32
            }
        }
    }

    /// Advances one slot.
    pub fn step(&mut self) -> SlotEvents {
        let transmitting = self.transmitting();
        let mut ev = SlotEvents::default();
        let mut counting = 0u64;
        for (i, link) in self.links.iter().enumerate() {
            if link.tx_remaining > 0 {
                continue;
            }
            if self.neighbors[i] & transmitting != 0 {
                ev.blocked |= 1 << i;
            } else if link.backoff == 0 {
                ev.starters |= 1 << i;
            } else {
                counting |= 1 << i;
            }
        }
        for i in 0..self.links.len() {
            let bit = 1u64 << i;
            if counting & bit == 0 {
                continue;
            }
            let idle = match self.config.sensing {
                Sensing::StartSlotBusy => self.neighbors[i] & ev.starters == 0,
                Sensing::PreviousSlot => true,
            };
            if idle {
                self.links[i].backoff -= 1;
                ev.decremented |= bit;
            }
        }
        let t_tx = self.config.t_tx;
        for i in 0..self.links.len() {
            let bit = 1u64 << i;
            if ev.starters & bit != 0 {
                let collided = self.neighbors[i] & ev.starters != 0;
                let link = &mut self.links[i];
                link.tx_remaining = t_tx;
                link.collided_current = collided;
                if collided {
                    ev.collided_starters |= bit;
                }
            }
            if self.links[i].tx_remaining > 0 {
                self.links[i].tx_remaining -= 1;
                if self.links[i].tx_remaining == 0 {
                    ev.finished |= bit;
                    self.finish(i);
                }
            }
        }
        ev
    }

    fn finish(&mut self, i: usize) {
        let cfg = &self.config;
        let link = self.links[i];
        let cw = if !cfg.beb_enabled {
            cfg.cw0
        } else if link.collided_current {
            (2 * (link.current_cw + 1) - 1).min(cfg.cw_max)
        } else {
            cfg.cw0
        };
        let backoff = self.draw_backoff(cw);
        let link = &mut self.links[i];
        link.current_cw = cw;
        link.backoff = backoff;
    }

    /// Steps through the run, accumulating counters after the warmup.
    pub fn run_counters(&mut self) -> Vec<LinkCounters> {
        let n = self.links.len();
        let mut counters = vec![LinkCounters::default(); n];
        for _ in 0..self.config.warmup_slots {
            self.step();
        }
        for _ in self.config.warmup_slots..self.config.total_slots {
            let ev = self.step();
            for (i, c) in counters.iter_mut().enumerate() {
                let bit = 1u64 << i;
                let link = &self.links[i];
                if ev.finished & bit != 0 {
                    c.attempts += 1;
                    if link.collided_current {
                        c.collided_attempts += 1;
                    }
                }
                if link.tx_remaining > 0 || ev.finished & bit != 0 {
                    if link.collided_current {
                        c.collided_slots += 1;
                    } else {
                        c.success_slots += 1;
                    }
                } else if ev.decremented & bit != 0 {
                    c.countdown_slots += 1;
                } else {
                    c.frozen_slots += 1;
                }
            }
        }
        counters
    }
}

fn metrics_from_counters(counters: &[LinkCounters], slots: u64) -> LinkMetrics {
    let th = counters
        .iter()
        .map(|c| c.success_slots as f64 / slots as f64)
        .collect();
    let p = counters
        .iter()
        .map(|c| {
            if c.attempts == 0 {
                0.0
            } else {
                c.collided_attempts as f64 / c.attempts as f64
            }
        })
        .collect();
    LinkMetrics::new(th, p, 1.0)
}

/// One seeded run. Metrics carry normalized throughput; the rate column
/// equals it (rate constant 1) until rescaled by the caller.
pub fn run(g: &ContentionGraph, config: &SimConfig) -> Result<SimResult, SimError> {
    let mut world = World::new(g, config)?;
    let counters = world.run_counters();
    let slots = config.measured_slots();
    Ok(SimResult {
        metrics: metrics_from_counters(&counters, slots),
        counters,
        simulated_slots: slots,
        seed: config.seed,
        intervals: None,
    })
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `i`: `mix64(base ^ i)`.
pub fn replication_seed(base: u64, i: usize) -> u64 {
    mix64(base ^ i as u64)
}

/// Independent replications in parallel; metrics are per-replication means
/// with 95% normal-approximation half-widths, counters are summed.
pub fn run_replications(
    g: &ContentionGraph,
    config: &SimConfig,
    n_reps: usize,
) -> Result<SimResult, SimError> {
    if n_reps < 2 {
        return Err(SimError::TooFewReplications(n_reps));
    }
    config.validate()?;
    let reps: Vec<SimResult> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                seed: replication_seed(config.seed, i),
                ..config.clone()
            };
            run(g, &cfg)
        })
        .collect::<Result<_, _>>()?;
    Ok(aggregate(&reps, config.seed))
}

/// Combines replication results in index order.
pub fn aggregate(reps: &[SimResult], seed: u64) -> SimResult {
    let n = reps[0].counters.len();
    let mut counters = vec![LinkCounters::default(); n];
    for r in reps {
        for (acc, c) in counters.iter_mut().zip(&r.counters) {
            acc.add(c);
        }
    }
    let th: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.metrics.throughput_normalized.clone())
        .collect();
    let pc: Vec<Vec<f64>> = reps
        .iter()
        .map(|r| r.metrics.collision_prob.clone())
        .collect();
    let (th_mean, th_hw) = mean_and_half_width(&th, n);
    let (p_mean, p_hw) = mean_and_half_width(&pc, n);
    SimResult {
        counters,
        simulated_slots: reps.iter().map(|r| r.simulated_slots).sum(),
        seed,
        metrics: LinkMetrics::new(th_mean, p_mean, 1.0),
        intervals: Some(ConfidenceIntervals {
            replications: reps.len(),
            throughput_half_width: th_hw,
            collision_half_width: p_hw,
        }),
    }
}

fn mean_and_half_width(samples: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    let k = samples.len() as f64;
    let mut means = vec![0.0; n];
    let mut hw = vec![0.0; n];
    for i in 0..n {
        let mean = samples.iter().map(|s| s[i]).sum::<f64>() / k;
        let var = samples.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        means[i] = mean;
        hw[i] = Z_975 * (var / k).sqrt();
    }
    (means, hw)
}

impl SimResult {
    /// Copy with the rate column recomputed for `rate` per unit airtime.
    pub fn with_rate(mut self, rate: f64) -> Self {
        self.metrics = LinkMetrics::new(
            self.metrics.throughput_normalized,
            self.metrics.collision_prob,
            rate,
        );
        self
    }
}
