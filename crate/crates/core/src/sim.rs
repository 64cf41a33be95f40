//! Slot-by-slot Monte-Carlo engine.
//!
//! Random draws per slot, always in this order and always all of them
//! (whatever the policy or traffic mode, so runs with the same seed see the
//! same channel and arrival realisations):
//!
//! 1. arrival uniforms for users `0..N`
//! 2. channel uniforms for users `0..N`
//! 3. one coin uniform for the FixedP baseline
//!
//! A Bernoulli(p) event is `u < p` with `u` uniform on `[0, 1)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{fixedp_decide, CoinParams};
use crate::model::{
    rate, update_data_queue, update_rt_virtual_queue, ConfigError, NrtTraffic, SlotDecision,
    SystemConfig, UserState, VirtualPowerQueue,
};
use crate::policy::decide_slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Algorithm1,
    #[serde(rename = "fixedp")]
    FixedP,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::Algorithm1, PolicyKind::FixedP];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Algorithm1 => "algorithm1",
            PolicyKind::FixedP => "fixedp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "algorithm1" => Ok(PolicyKind::Algorithm1),
            "fixedp" => Ok(PolicyKind::FixedP),
            other => Err(format!(
                "unknown policy `{other}` (expected algorithm1 or fixedp)"
            )),
        }
    }
}

/// Finite-horizon estimates of the long-run quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub slots_run: u64,
    /// Packets per slot served, per NRT user.
    pub nrt_throughput: Vec<f64>,
    /// Packets per slot admitted, per NRT user.
    pub admitted_rate: Vec<f64>,
    pub avg_power: f64,
    /// Delivered / arrived, per RT user (0 when nothing arrived).
    pub rt_delivery_ratio: Vec<f64>,
    /// `Y_i(K)/K` per RT user.
    pub rt_queue_over_k: Vec<f64>,
    /// `Q_i(K)/K` per NRT user.
    pub nrt_queue_over_k: Vec<f64>,
    /// `X(K)/K`
    pub power_queue_over_k: f64,
    pub sum_nrt_throughput: f64,
}

/// Running sums over the horizon so far.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Totals {
    pub admitted_bits: Vec<f64>,
    pub served_bits: Vec<f64>,
    /// Service that found the queue already empty (lost to the `(·)⁺`).
    pub projection_slack: Vec<f64>,
    pub rt_arrivals: Vec<u64>,
    pub rt_delivered: Vec<u64>,
    pub energy: f64,
}

/// Marks NRT arrivals for the slot and, in saturated mode, tops every NRT
/// buffer up to one slot of peak-rate service. Returns the top-up in nats
/// per NRT user.
pub fn nrt_traffic(cfg: &SystemConfig, users: &mut [UserState], arrival_draws: &[f64]) -> Vec<f64> {
    let floor = cfg.slot_seconds * cfg.max_rate();
    cfg.nrt_users()
        .map(|i| match cfg.nrt_traffic {
            NrtTraffic::Saturated => {
                users[i].arrival = true;
                let top_up = (floor - users[i].data_queue).max(0.0);
                users[i].data_queue += top_up;
                top_up
            }
            NrtTraffic::Bernoulli => {
                users[i].arrival = arrival_draws[i] < cfg.arrival_rate[i];
                0.0
            }
        })
        .collect()
}

pub struct Simulation {
    cfg: SystemConfig,
    policy: PolicyKind,
    coin: CoinParams,
    rng: ChaCha8Rng,
    users: Vec<UserState>,
    power_queue: VirtualPowerQueue,
    slot: u64,
    totals: Totals,
    draws: Vec<f64>,
}

impl Simulation {
    pub fn new(cfg: SystemConfig, policy: PolicyKind) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let n = cfg.n_users();
        Ok(Self {
            coin: CoinParams::from_config(&cfg),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            users: vec![UserState::default(); n],
            power_queue: VirtualPowerQueue::default(),
            slot: 0,
            totals: Totals {
                admitted_bits: vec![0.0; cfg.n_nrt],
                served_bits: vec![0.0; cfg.n_nrt],
                projection_slack: vec![0.0; cfg.n_nrt],
                rt_arrivals: vec![0; cfg.n_rt],
                rt_delivered: vec![0; cfg.n_rt],
                energy: 0.0,
            },
            draws: vec![0.0; 2 * n + 1],
            cfg,
            policy,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn power_queue(&self) -> f64 {
        self.power_queue.x
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn totals(&self) -> &Totals {
        &self.totals
    }

    /// Advances one slot and returns the decision taken in it.
    pub fn step(&mut self) -> SlotDecision {
        let cfg = &self.cfg;
        let n = cfg.n_users();
        for d in &mut self.draws {
            *d = self.rng.random::<f64>();
        }
        let (arrival_draws, rest) = self.draws.split_at(n);
        let (channel_draws, coin) = rest.split_at(n);

        for ((u, &draw), &p) in self
            .users
            .iter_mut()
            .zip(channel_draws)
            .zip(&cfg.channel_on_prob)
        {
            u.channel = draw < p;
        }
        for ((u, &draw), &p) in self.users[..cfg.n_rt]
            .iter_mut()
            .zip(arrival_draws)
            .zip(&cfg.arrival_rate)
        {
            u.arrival = draw < p;
        }
        let top_up = nrt_traffic(cfg, &mut self.users, arrival_draws);

        let x = self.power_queue.x;
        let decision = match self.policy {
            PolicyKind::Algorithm1 => decide_slot(cfg, &self.users, x),
            PolicyKind::FixedP => fixedp_decide(cfg, &self.users, x, self.coin, coin[0]),
        };

        for i in 0..cfg.n_rt {
            let u = &mut self.users[i];
            let served = decision.is_scheduled(i);
            if u.arrival {
                self.totals.rt_arrivals[i] += 1;
                if served {
                    self.totals.rt_delivered[i] += 1;
                }
            }
            u.rt_virtual_queue = update_rt_virtual_queue(
                u.rt_virtual_queue,
                u.arrival,
                cfg.delivery_ratio[i],
                served,
            );
        }
        for (j, i) in cfg.nrt_users().enumerate() {
            let u = &mut self.users[i];
            let admitted = if decision.admit[j] {
                cfg.packet_bits
            } else {
                0.0
            };
            let served = decision.duration[i] * rate(decision.power[i], u.channel);
            let before = u.data_queue + admitted;
            u.data_queue = update_data_queue(u.data_queue, admitted, served);
            self.totals.admitted_bits[j] += admitted + top_up[j];
            self.totals.served_bits[j] += served.min(before);
            self.totals.projection_slack[j] += (served - before).max(0.0);
        }
        self.power_queue.update(decision.slot_power, cfg.p_avg);
        self.totals.energy += decision.slot_power;
        self.slot += 1;
        decision
    }

    pub fn report(&self) -> MetricsReport {
        let cfg = &self.cfg;
        let k = self.slot.max(1) as f64;
        let per_slot = |bits: &f64| bits / (cfg.packet_bits * k);
        let nrt_throughput: Vec<f64> = self.totals.served_bits.iter().map(per_slot).collect();
        MetricsReport {
            slots_run: self.slot,
            sum_nrt_throughput: nrt_throughput.iter().sum(),
            nrt_throughput,
            admitted_rate: self.totals.admitted_bits.iter().map(per_slot).collect(),
            avg_power: self.totals.energy / k,
            rt_delivery_ratio: self
                .totals
                .rt_arrivals
                .iter()
                .zip(&self.totals.rt_delivered)
                .map(|(&a, &d)| if a == 0 { 0.0 } else { d as f64 / a as f64 })
                .collect(),
            rt_queue_over_k: self.users[..cfg.n_rt]
                .iter()
                .map(|u| u.rt_virtual_queue / k)
                .collect(),
            nrt_queue_over_k: self.users[cfg.n_rt..]
                .iter()
                .map(|u| u.data_queue / k)
                .collect(),
            power_queue_over_k: self.power_queue.x / k,
        }
    }
}

/// Runs `cfg.horizon_slots` slots under `policy`.
pub fn run(cfg: &SystemConfig, policy: PolicyKind) -> Result<MetricsReport, ConfigError> {
    let mut sim = Simulation::new(cfg.clone(), policy)?;
    for _ in 0..cfg.horizon_slots {
        sim.step();
    }
    Ok(sim.report())
}
