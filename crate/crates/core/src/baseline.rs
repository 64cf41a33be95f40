//! FixedP comparison policy.
//!
//! Every scheduled user transmits at `Pmax`. A biased coin picks the group
//! for the slot: with probability `q` the RT users, sorted by `Y`, are
//! packed one whole packet at a time until the next one would not fit;
//! otherwise the longest-queue NRT user gets the entire slot.
//!
//! Transmitting at `Pmax` alone ignores the average-power budget, so the
//! policy stays silent while the power debt `X(k)` is positive. This gives a
//! duty cycle of roughly `Pavg / Pmax` and keeps its long-run power at
//! `Pavg`, the same budget the main policy works under.

use crate::model::{slot_power, SlotDecision, SystemConfig, UserState};
use crate::policy::{admission, select_nrt_user};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinParams {
    /// Probability that the coin selects the RT group.
    pub rt_prob: f64,
}

impl CoinParams {
    /// Coin bias equal to the (common) delivery ratio requirement; the mean
    /// is used when requirements differ.
    pub fn from_config(cfg: &SystemConfig) -> Self {
        let rt_prob = if cfg.delivery_ratio.is_empty() {
            0.0
        } else {
            cfg.delivery_ratio.iter().sum::<f64>() / cfg.delivery_ratio.len() as f64
        };
        Self { rt_prob }
    }
}

pub fn fixedp_decide(
    cfg: &SystemConfig,
    users: &[UserState],
    x: f64,
    coin: CoinParams,
    coin_draw: f64,
) -> SlotDecision {
    let mut decision = SlotDecision::idle(cfg);
    decision.admit = admission(cfg, users);
    if x > 0.0 {
        return decision;
    }

    let (ts, p_max) = (cfg.slot_seconds, cfg.p_max);
    if coin_draw < coin.rt_prob {
        let mut rt: Vec<usize> = (0..cfg.n_rt)
            .filter(|&i| users[i].channel && users[i].arrival)
            .collect();
        rt.sort_by(|&a, &b| {
            users[b]
                .rt_virtual_queue
                .total_cmp(&users[a].rt_virtual_queue)
                .then(a.cmp(&b))
        });
        let mu = cfg.packet_bits / p_max.ln_1p();
        let mut used = 0.0;
        for i in rt {
            if used + mu > ts {
                break;
            }
            used += mu;
            decision.power[i] = p_max;
            decision.duration[i] = mu;
            decision.rt_set.push(i);
        }
    } else {
        let queues: Vec<f64> = cfg.nrt_users().map(|i| users[i].data_queue).collect();
        let eligible: Vec<bool> = cfg
            .nrt_users()
            .map(|i| users[i].channel && users[i].data_queue > 0.0)
            .collect();
        if let Some(j) = select_nrt_user(&queues, &eligible) {
            let i = j + cfg.n_rt;
            decision.power[i] = p_max;
            decision.duration[i] = ts;
            decision.nrt_user = Some(i);
        }
    }
    decision.slot_power = slot_power(&decision.power, &decision.duration, ts);
    decision
}
