//! Per-slot joint scheduling and power allocation.
//!
//! Each slot the policy maximises the drift-plus-penalty surrogate
//!
//! ```text
//! Σ_{i∈S_R} [Y_i - L·X·P_i / (Ts·ln(1+P_i))] + [Q_i*·ln(1+P_i*) - X·P_i*/Ts]·μ_i*
//! ```
//!
//! in closed form:
//!
//! 1. RT users with an arrival and an on channel are sorted by `Y` (desc).
//! 2. The NRT user with the longest queue, `i*`, is the only NRT candidate;
//!    its power is water-filling-like, `(Q/X - 1)⁺` capped at `Pmax`, and its
//!    best per-second value is `Ψ*`.
//! 3. RT users share a common Lambert power derived from `Ψ*` and `X`. If at
//!    most zero RT packets fit in a slot at that power (condition 1), or the
//!    RT backlog dominates (condition 2), the slot goes to RT users only at
//!    the power that exactly fills it. Otherwise RT users above a threshold
//!    get the Lambert power and `i*` takes the remaining time.
//!
//! `X` is floored at [`X_FLOOR`] in every ratio.

use std::cmp::Ordering;

use crate::lambertw::lambert_w0;
use crate::model::{rate, slot_power, SlotDecision, SystemConfig, UserState};

/// Floor applied to `X(k)` inside ratios; `X(0) = 0` by initialisation.
pub const X_FLOOR: f64 = 1e-9;

/// Water-filling-like NRT power `min((q/X - 1)⁺, Pmax)`.
pub fn nrt_power(q: f64, x: f64, p_max: f64) -> f64 {
    (q / x.max(X_FLOOR) - 1.0).clamp(0.0, p_max)
}

/// Longest eligible queue, lowest index on ties.
pub fn select_nrt_user(queues: &[f64], eligible: &[bool]) -> Option<usize> {
    queues
        .iter()
        .zip(eligible)
        .enumerate()
        .filter(|(_, (_, &e))| e)
        .fold(
            None,
            |best: Option<(usize, f64)>, (i, (&q, _))| match best {
                Some((_, bq)) if bq >= q => best,
                _ => Some((i, q)),
            },
        )
        .map(|(i, _)| i)
}

/// Best per-second NRT value `q·ln(1+P*) - X·P*` at the capped optimum
/// `P* = nrt_power(q, x, p_max)`. Zero whenever `q ≤ X`.
pub fn psi_nr_star(q: f64, x: f64, p_max: f64) -> f64 {
    let p = nrt_power(q, x, p_max);
    if p == 0.0 {
        return 0.0;
    }
    (q * p.ln_1p() - x * p).max(0.0)
}

/// Common RT power `z / W₀(z) - 1` with `z = Ts·Ψ*/X - 1`, clamped to
/// `[0, Pmax]`. Zero when `z ≤ 0`.
pub fn rt_lambert_power(psi_star: f64, x: f64, ts: f64, p_max: f64) -> f64 {
    let z = ts * psi_star / x.max(X_FLOOR) - 1.0;
    if z <= 0.0 {
        return 0.0;
    }
    let w = lambert_w0(z).expect("W0 is defined for every positive finite argument");
    (z / w - 1.0).clamp(0.0, p_max)
}

/// Power at which `n` RT packets exactly fill one slot, `e^(nL/Ts) - 1`.
/// Not capped: callers compare against `Pmax`.
pub fn rt_exclusive_power(n_scheduled: usize, packet_bits: f64, ts: f64) -> f64 {
    (n_scheduled as f64 * packet_bits / ts).exp_m1()
}

/// Number of RT packets that fit in one slot at `lambert_power`, capped at
/// the number of eligible RT users.
pub fn critical_index(
    lambert_power: f64,
    packet_bits: f64,
    ts: f64,
    n_rt_eligible: usize,
) -> usize {
    if lambert_power <= 0.0 {
        return 0;
    }
    let mu = packet_bits / lambert_power.ln_1p();
    let fit = (ts / mu).floor();
    if fit >= n_rt_eligible as f64 {
        n_rt_eligible
    } else {
        fit as usize
    }
}

/// Which branch of the slot decision applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Not even one RT packet fits at the Lambert power.
    Condition1,
    /// RT backlog dominates: the slot goes to RT users only.
    Condition2,
    Neither,
}

/// Per-slot quantities shared by the branch tests and the set builders.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotContext {
    /// Eligible RT users sorted by `Y` descending, lowest id first on ties.
    pub sorted_rt: Vec<usize>,
    /// `Y` of `sorted_rt`, same order.
    pub sorted_y: Vec<f64>,
    /// Eligible NRT users (global ids).
    pub eligible_nrt: Vec<usize>,
    /// Selected NRT user `i*` (global id).
    pub nrt_user: Option<usize>,
    pub x: f64,
    pub psi_star: f64,
}

impl SlotContext {
    pub fn build(cfg: &SystemConfig, users: &[UserState], x: f64) -> Self {
        let mut sorted_rt: Vec<usize> = (0..cfg.n_rt)
            .filter(|&i| users[i].channel && users[i].arrival)
            .collect();
        sorted_rt.sort_by(|&a, &b| {
            users[b]
                .rt_virtual_queue
                .partial_cmp(&users[a].rt_virtual_queue)
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let sorted_y = sorted_rt
            .iter()
            .map(|&i| users[i].rt_virtual_queue)
            .collect();

        let nrt = cfg.nrt_users();
        let queues: Vec<f64> = nrt.clone().map(|i| users[i].data_queue).collect();
        let eligible: Vec<bool> = nrt
            .clone()
            .map(|i| users[i].channel && users[i].data_queue > 0.0)
            .collect();
        let eligible_nrt = nrt.clone().filter(|&i| eligible[i - cfg.n_rt]).collect();
        let nrt_user = select_nrt_user(&queues, &eligible).map(|j| j + cfg.n_rt);
        let psi_star = nrt_user
            .map(|i| psi_nr_star(users[i].data_queue, x, cfg.p_max))
            .unwrap_or(0.0);

        Self {
            sorted_rt,
            sorted_y,
            eligible_nrt,
            nrt_user,
            x,
            psi_star,
        }
    }

    pub fn n_rt_eligible(&self) -> usize {
        self.sorted_rt.len()
    }
}

/// Branch test. `l` is the critical index, `lambert_power` and `mu` the
/// common RT power and the resulting per-packet duration.
pub fn check_conditions(
    ctx: &SlotContext,
    l: usize,
    lambert_power: f64,
    mu: f64,
    packet_bits: f64,
    ts: f64,
) -> Condition {
    if l == 0 {
        return Condition::Condition1;
    }
    let n = ctx.n_rt_eligible();
    if l > n {
        return Condition::Neither;
    }
    let (x, psi) = (ctx.x, ctx.psi_star);
    // Positions are 1-based in the conditions; sorted_y is 0-based.
    let y_l = ctx.sorted_y[l - 1];
    let first = y_l > (x * lambert_power + psi) * mu;
    let second = if l < n {
        let l_f = l as f64;
        let rhs = x * (ts * rt_exclusive_power(l + 1, packet_bits, ts) - lambert_power * l_f * mu)
            + psi * (ts - l_f * mu);
        ctx.sorted_y[l] >= rhs
    } else {
        true
    };
    if first && second {
        Condition::Condition2
    } else {
        Condition::Neither
    }
}

/// RT-only schedule: the longest prefix of `sorted_rt` whose `i`-th member
/// beats `X·Ts·(e^(iL/Ts) - e^((i-1)L/Ts))`, shrunk until the slot-filling
/// power `e^(nL/Ts) - 1` is within `Pmax`.
pub fn schedule_rt_exclusive(
    ctx: &SlotContext,
    packet_bits: f64,
    ts: f64,
    p_max: f64,
) -> Vec<usize> {
    let mut n = 0;
    for (pos, &y) in ctx.sorted_y.iter().enumerate() {
        let i = pos + 1;
        let threshold = ctx.x
            * ts
            * (rt_exclusive_power(i, packet_bits, ts) - rt_exclusive_power(i - 1, packet_bits, ts));
        if y > threshold {
            n = i;
        } else {
            break;
        }
    }
    while n > 0 && rt_exclusive_power(n, packet_bits, ts) > p_max {
        n -= 1;
    }
    ctx.sorted_rt[..n].to_vec()
}

/// Shared schedule: the prefix of `sorted_rt` with `Y > (X·P + Ψ*)·μ`,
/// truncated to the `l` packets that fit.
pub fn schedule_rt_shared(ctx: &SlotContext, lambert_power: f64, mu: f64, l: usize) -> Vec<usize> {
    let threshold = (ctx.x * lambert_power + ctx.psi_star) * mu;
    ctx.sorted_rt
        .iter()
        .zip(&ctx.sorted_y)
        .take(l)
        .take_while(|(_, &y)| y > threshold)
        .map(|(&i, _)| i)
        .collect()
}

/// Admission `r_i = a_i·1{Q_i < V}` for every NRT user.
pub fn admission(cfg: &SystemConfig, users: &[UserState]) -> Vec<bool> {
    cfg.nrt_users()
        .map(|i| users[i].arrival && users[i].data_queue < cfg.admit_threshold)
        .collect()
}

/// Full slot decision. Pure in `(cfg, users, x)`.
pub fn decide_slot(cfg: &SystemConfig, users: &[UserState], x: f64) -> SlotDecision {
    let (l_bits, ts, p_max) = (cfg.packet_bits, cfg.slot_seconds, cfg.p_max);
    let ctx = SlotContext::build(cfg, users, x);

    let lambert = rt_lambert_power(ctx.psi_star, x, ts, p_max);
    let mu = if lambert > 0.0 {
        l_bits / lambert.ln_1p()
    } else {
        f64::INFINITY
    };
    let l = critical_index(lambert, l_bits, ts, ctx.n_rt_eligible());

    let mut decision = SlotDecision::idle(cfg);
    decision.admit = admission(cfg, users);

    let condition = check_conditions(&ctx, l, lambert, mu, l_bits, ts);
    if condition != Condition::Neither && ctx.n_rt_eligible() > 0 {
        let rt = schedule_rt_exclusive(&ctx, l_bits, ts, p_max);
        if !rt.is_empty() {
            let p = rt_exclusive_power(rt.len(), l_bits, ts);
            let d = l_bits / rate(p, true);
            for &i in &rt {
                decision.power[i] = p;
                decision.duration[i] = d;
            }
            decision.rt_set = rt;
            decision.slot_power = slot_power(&decision.power, &decision.duration, ts);
            return decision;
        }
        // Nobody clears the RT-only thresholds: fall through to the shared
        // layout, which then hands the whole slot to i*.
    }

    let rt = if condition == Condition::Neither {
        schedule_rt_shared(&ctx, lambert, mu, l)
    } else {
        Vec::new()
    };
    for &i in &rt {
        decision.power[i] = lambert;
        decision.duration[i] = mu;
    }
    let used: f64 = rt.iter().map(|&i| decision.duration[i]).sum();
    decision.rt_set = rt;

    if let Some(i) = ctx.nrt_user {
        let p = nrt_power(users[i].data_queue, x, p_max);
        let remaining = (ts - used).max(0.0);
        if p > 0.0 && remaining > 0.0 {
            decision.power[i] = p;
            decision.duration[i] = remaining;
            decision.nrt_user = Some(i);
        }
    }
    decision.slot_power = slot_power(&decision.power, &decision.duration, ts);
    decision
}
