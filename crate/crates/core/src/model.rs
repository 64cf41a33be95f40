//! System parameters, per-user state, slot decisions and queue dynamics.
//!
//! Users are indexed `0..n_rt` (real-time) followed by `n_rt..n_rt + n_nrt`
//! (non-real-time). All logarithms are natural, so packet sizes are in nats
//! and `e^(L/Ts) - 1` is exactly the power that sends one packet in `Ts`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

impl ConfigError {
    fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key,
            reason: reason.into(),
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Self::Invalid { key, .. } => key,
        }
    }
}

/// How NRT packets enter the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NrtTraffic {
    /// Every NRT user has an arrival every slot and its buffer is never
    /// allowed to fall below one full slot of service at peak rate.
    #[default]
    Saturated,
    /// Bernoulli arrivals at the configured per-user rate.
    Bernoulli,
}

/// Default RT arrival rate (packets per slot per user).
pub const DEFAULT_RT_ARRIVAL_RATE: f64 = 0.2;

/// Static description of one simulated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_rt: usize,
    pub n_nrt: usize,
    /// Packet size `L` in nats.
    pub packet_bits: f64,
    /// Slot length `Ts` in seconds.
    pub slot_seconds: f64,
    pub p_max: f64,
    pub p_avg: f64,
    /// Required delivery ratio `q_i`, one per RT user.
    pub delivery_ratio: Vec<f64>,
    /// Arrival probability `λ_i`, one per user (RT first).
    pub arrival_rate: Vec<f64>,
    /// Admission threshold `V` on NRT queue lengths.
    pub admit_threshold: f64,
    /// Probability `γ̄_i` that the channel is on, one per user.
    pub channel_on_prob: Vec<f64>,
    pub horizon_slots: u64,
    pub rng_seed: u64,
    pub nrt_traffic: NrtTraffic,
}

impl SystemConfig {
    /// Simulation defaults: `L = 1`, `Ts = 1`, `Pmax = 200`, `Pavg = 10`,
    /// `q = 0.3`, `V = 1e4`, always-on channels, saturated NRT traffic.
    pub fn default_cell(n_rt: usize, n_nrt: usize) -> Self {
        let n = n_rt + n_nrt;
        let mut arrival_rate = vec![DEFAULT_RT_ARRIVAL_RATE; n];
        arrival_rate[n_rt..].fill(1.0);
        Self {
            n_rt,
            n_nrt,
            packet_bits: 1.0,
            slot_seconds: 1.0,
            p_max: 200.0,
            p_avg: 10.0,
            delivery_ratio: vec![0.3; n_rt],
            arrival_rate,
            admit_threshold: 1e4,
            channel_on_prob: vec![1.0; n],
            horizon_slots: 1_000_000,
            rng_seed: 1,
            nrt_traffic: NrtTraffic::Saturated,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_rt + self.n_nrt
    }

    pub fn is_rt(&self, user: usize) -> bool {
        user < self.n_rt
    }

    pub fn nrt_users(&self) -> std::ops::Range<usize> {
        self.n_rt..self.n_users()
    }

    /// Peak rate `Rmax = ln(1 + Pmax)`.
    pub fn max_rate(&self) -> f64 {
        self.p_max.ln_1p()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_users();
        positive("packet_bits", self.packet_bits)?;
        positive("slot_seconds", self.slot_seconds)?;
        positive("admit_threshold", self.admit_threshold)?;
        if !(self.p_max.is_finite() && self.p_max >= 0.0) {
            return Err(ConfigError::invalid("p_max", "must be finite and >= 0"));
        }
        if !(self.p_avg.is_finite() && self.p_avg >= 0.0) {
            return Err(ConfigError::invalid("p_avg", "must be finite and >= 0"));
        }
        if self.p_avg > self.p_max {
            return Err(ConfigError::invalid(
                "p_avg",
                format!("{} exceeds p_max = {}", self.p_avg, self.p_max),
            ));
        }
        if self.delivery_ratio.len() != self.n_rt {
            return Err(ConfigError::invalid(
                "delivery_ratio",
                format!(
                    "expected {} entries, got {}",
                    self.n_rt,
                    self.delivery_ratio.len()
                ),
            ));
        }
        if let Some(q) = self
            .delivery_ratio
            .iter()
            .find(|q| !(**q > 0.0 && **q <= 1.0))
        {
            return Err(ConfigError::invalid(
                "delivery_ratio",
                format!("{q} is outside (0, 1]"),
            ));
        }
        per_user_probability("arrival_rate", &self.arrival_rate, n)?;
        per_user_probability("channel_on_prob", &self.channel_on_prob, n)?;
        if self.horizon_slots == 0 {
            return Err(ConfigError::invalid("horizon_slots", "must be >= 1"));
        }
        Ok(())
    }
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(
            key,
            format!("{v} must be finite and > 0"),
        ))
    }
}

fn per_user_probability(key: &'static str, values: &[f64], n: usize) -> Result<(), ConfigError> {
    if values.len() != n {
        return Err(ConfigError::invalid(
            key,
            format!("expected {n} entries, got {}", values.len()),
        ));
    }
    match values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(ConfigError::invalid(key, format!("{p} is outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Dynamic state of one user at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UserState {
    /// `Q_i(k)`, nats buffered. Always zero for RT users.
    pub data_queue: f64,
    /// `Y_i(k)`, delivery-ratio debt. Always zero for NRT users.
    pub rt_virtual_queue: f64,
    /// `γ_i(k)`
    pub channel: bool,
    /// `a_i(k)`
    pub arrival: bool,
}

/// Average-power debt `X(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VirtualPowerQueue {
    pub x: f64,
}

impl VirtualPowerQueue {
    pub fn update(&mut self, slot_power: f64, p_avg: f64) {
        self.x = update_power_virtual_queue(self.x, slot_power, p_avg);
    }
}

/// Everything a policy decides for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// Scheduled RT users, in scheduling order.
    pub rt_set: Vec<usize>,
    /// The single NRT user given the residual slot time, if any.
    pub nrt_user: Option<usize>,
    /// `P_i(k)` per user.
    pub power: Vec<f64>,
    /// `μ_i(k)` per user, seconds.
    pub duration: Vec<f64>,
    /// `r_i(k)` per NRT user (indexed from 0 within the NRT group).
    pub admit: Vec<bool>,
    /// `P(k)`
    pub slot_power: f64,
}

impl SlotDecision {
    pub fn idle(cfg: &SystemConfig) -> Self {
        let n = cfg.n_users();
        Self {
            rt_set: Vec::new(),
            nrt_user: None,
            power: vec![0.0; n],
            duration: vec![0.0; n],
            admit: vec![false; cfg.n_nrt],
            slot_power: 0.0,
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.duration.iter().sum()
    }

    pub fn is_scheduled(&self, user: usize) -> bool {
        self.duration[user] > 0.0
    }
}

/// Shannon rate `ln(1 + P·γ)` in nats per second.
pub fn rate(power: f64, channel: bool) -> f64 {
    if channel {
        power.ln_1p()
    } else {
        0.0
    }
}

/// `(q + admitted - served)⁺`
pub fn update_data_queue(q: f64, admitted_bits: f64, served_bits: f64) -> f64 {
    (q + admitted_bits - served_bits).max(0.0)
}

/// `(y + a·q_req - served)⁺`
pub fn update_rt_virtual_queue(y: f64, arrival: bool, q_req: f64, served: bool) -> f64 {
    let a = if arrival { q_req } else { 0.0 };
    let s = if served { 1.0 } else { 0.0 };
    (y + a - s).max(0.0)
}

/// `(x + P(k) - Pavg)⁺`
pub fn update_power_virtual_queue(x: f64, slot_power: f64, p_avg: f64) -> f64 {
    (x + slot_power - p_avg).max(0.0)
}

/// Energy-per-slot normalised power `(1/Ts)·Σ P_i μ_i`.
pub fn slot_power(power: &[f64], duration: &[f64], slot_seconds: f64) -> f64 {
    power
        .iter()
        .zip(duration)
        .map(|(p, mu)| p * mu)
        .sum::<f64>()
        / slot_seconds
}

/// Constant `C₁` of the one-slot Lyapunov drift bound.
pub fn drift_constant_c1(cfg: &SystemConfig) -> f64 {
    let rt: f64 = cfg.delivery_ratio.iter().map(|q| q * q + 1.0).sum();
    let r_max = cfg.max_rate();
    let nrt =
        cfg.n_nrt as f64 * (cfg.packet_bits.powi(2) + cfg.slot_seconds.powi(2) * r_max * r_max);
    0.5 * (rt + cfg.p_max.powi(2) + cfg.p_avg.powi(2) + nrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn rate_values() {
        assert_eq!(rate(0.0, true), 0.0);
        assert_eq!(rate(37.0, false), 0.0);
        assert!((rate(E - 1.0, true) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn data_queue_examples() {
        assert_eq!(update_data_queue(5.0, 1.0, 2.0), 4.0);
        assert_eq!(update_data_queue(1.0, 0.0, 3.0), 0.0);
        assert_eq!(update_data_queue(2.0, 1.0, 0.0), 3.0);
    }

    #[test]
    fn rt_virtual_queue_examples() {
        assert!((update_rt_virtual_queue(1.0, true, 0.3, false) - 1.3).abs() < 1e-15);
        assert_eq!(update_rt_virtual_queue(0.5, true, 0.3, true), 0.0);
        assert_eq!(update_rt_virtual_queue(2.0, false, 0.3, true), 1.0);
    }

    #[test]
    fn power_queue_examples() {
        assert_eq!(update_power_virtual_queue(0.0, 10.0, 10.0), 0.0);
        assert_eq!(update_power_virtual_queue(3.0, 12.0, 10.0), 5.0);
        assert_eq!(update_power_virtual_queue(1.0, 0.0, 10.0), 0.0);
        let mut vq = VirtualPowerQueue::default();
        vq.update(25.0, 10.0);
        assert_eq!(vq.x, 15.0);
    }

    #[test]
    fn slot_power_examples() {
        assert_eq!(slot_power(&[], &[], 1.0), 0.0);
        assert_eq!(slot_power(&[4.0], &[2.0], 2.0), 4.0);
        assert_eq!(slot_power(&[2.0, 6.0], &[0.5, 0.5], 1.0), 4.0);
    }

    #[test]
    fn drift_constant() {
        let mut cfg = SystemConfig::default_cell(1, 1);
        // 0.5·(1.09 + 40000 + 100 + 1 + ln²201), ln 201 from mpmath.
        assert!((drift_constant_c1(&cfg) - 20_065.107_521_473_92).abs() < 1e-8);

        let base = drift_constant_c1(&cfg);
        let per_nrt = 0.5 * (1.0 + cfg.max_rate().powi(2));
        cfg.n_nrt = 2;
        assert!((drift_constant_c1(&cfg) - base - per_nrt).abs() < 1e-9);

        let empty = SystemConfig {
            p_max: 0.0,
            p_avg: 0.0,
            ..SystemConfig::default_cell(0, 0)
        };
        assert_eq!(drift_constant_c1(&empty), 0.0);
    }

    #[test]
    fn validation_names_the_key() {
        let mut cfg = SystemConfig::default_cell(2, 2);
        assert!(cfg.validate().is_ok());
        cfg.p_avg = 300.0;
        assert_eq!(cfg.validate().unwrap_err().key(), "p_avg");

        let mut cfg = SystemConfig::default_cell(2, 2);
        cfg.channel_on_prob[3] = 1.5;
        assert_eq!(cfg.validate().unwrap_err().key(), "channel_on_prob");

        let mut cfg = SystemConfig::default_cell(2, 2);
        cfg.delivery_ratio = vec![0.3];
        assert_eq!(cfg.validate().unwrap_err().key(), "delivery_ratio");

        let mut cfg = SystemConfig::default_cell(2, 2);
        cfg.slot_seconds = 0.0;
        assert_eq!(cfg.validate().unwrap_err().key(), "slot_seconds");
    }

    proptest! {
        #[test]
        fn queue_updates_nonnegative_and_lipschitz(
            a in 0.0..100.0f64, b in 0.0..100.0f64,
            adm in 0.0..10.0f64, srv in 0.0..10.0f64,
            arrival: bool, served: bool, q in 0.01..1.0f64,
            p in 0.0..200.0f64, pavg in 0.0..20.0f64,
        ) {
            let pairs = [
                (update_data_queue(a, adm, srv), update_data_queue(b, adm, srv)),
                (update_rt_virtual_queue(a, arrival, q, served),
                 update_rt_virtual_queue(b, arrival, q, served)),
                (update_power_virtual_queue(a, p, pavg), update_power_virtual_queue(b, p, pavg)),
            ];
            for (fa, fb) in pairs {
                prop_assert!(fa >= 0.0 && fb >= 0.0);
                prop_assert!((fa - fb).abs() <= (a - b).abs() + 1e-12);
            }
            // Bounded one-slot decrease.
            prop_assert!(update_data_queue(a, adm, srv) >= a - srv);
            prop_assert!(update_rt_virtual_queue(a, arrival, q, served) >= a - 1.0);
            prop_assert!(update_power_virtual_queue(a, p, pavg) >= a - pavg);
        }

        #[test]
        fn rate_increasing_and_concave(p in 0.0..199.0f64, h in 0.01..1.0f64) {
            let (r0, r1, r2) = (rate(p, true), rate(p + h, true), rate(p + 2.0 * h, true));
            prop_assert!(r1 > r0);
            prop_assert!(r2 - r1 <= r1 - r0 + 1e-15);
        }
    }
}
