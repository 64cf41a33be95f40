//! Exhaustive per-slot maximiser used to certify the closed-form policy.
//!
//! The objective is the drift-plus-penalty surrogate
//!
//! ```text
//! Σ_{i∈S_R} [Y_i - L·X·P_i / (Ts·ln(1+P_i))] + [Q_j·ln(1+P_j) - X·P_j/Ts]·μ_j
//! ```
//!
//! subject to `0 ≤ P ≤ Pmax`, RT durations `L/ln(1+P_i)` and total duration
//! at most `Ts`. The search enumerates every subset of eligible RT users with
//! a common power from a grid, plus (for at most three RT users) independent
//! per-user powers from a coarser grid. The single NRT user gets whatever
//! time is left; its best user and power are also chosen from the grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{slot_power, SlotDecision, SystemConfig, UserState};
use crate::policy::{
    admission, decide_slot, psi_nr_star, rt_exclusive_power, rt_lambert_power, X_FLOOR,
};

pub const MAX_RT_USERS: usize = 8;
pub const MAX_NRT_USERS: usize = 4;

/// Independent per-user RT powers are searched up to this many RT users.
const REFINE_MAX_RT: usize = 3;

/// Relative slack on the duration constraint, absorbing rounding in
/// `L / ln(1 + P)` at the slot-filling powers.
const DURATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {n_rt} RT / {n_nrt} NRT users (max {MAX_RT_USERS} / {MAX_NRT_USERS})")]
    InstanceTooLarge { n_rt: usize, n_nrt: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    /// Log-spaced points over `(0, Pmax]` for the common-power pass.
    pub power_points: usize,
    /// Log-spaced points for the per-user refinement pass.
    pub refine_points: usize,
    pub max_rt_subset: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            power_points: 400,
            refine_points: 24,
            max_rt_subset: MAX_RT_USERS,
        }
    }
}

/// Objective value of `decision` in the given state.
pub fn slot_objective(
    cfg: &SystemConfig,
    users: &[UserState],
    x: f64,
    decision: &SlotDecision,
) -> f64 {
    let (l, ts) = (cfg.packet_bits, cfg.slot_seconds);
    let rt: f64 = decision
        .rt_set
        .iter()
        .map(|&i| rt_term(users[i].rt_virtual_queue, decision.power[i], x, l, ts))
        .sum();
    let nrt = decision.nrt_user.map_or(0.0, |i| {
        nrt_rate_value(users[i].data_queue, decision.power[i], x, ts) * decision.duration[i]
    });
    rt + nrt
}

fn rt_term(y: f64, p: f64, x: f64, l: f64, ts: f64) -> f64 {
    y - l * x * p / (ts * p.ln_1p())
}

fn nrt_rate_value(q: f64, p: f64, x: f64, ts: f64) -> f64 {
    q * p.ln_1p() - x * p / ts
}

/// Log-spaced grid over `[Pmax·1e-6, Pmax]` plus `0`, `Pmax` and the
/// closed-form candidates: `(Q/X - 1)` for each NRT user, the Lambert power
/// for each NRT user as `i*`, and every slot-filling RT power.
pub fn power_grid(cfg: &SystemConfig, users: &[UserState], x: f64, points: usize) -> Vec<f64> {
    let p_max = cfg.p_max;
    let mut grid = vec![0.0, p_max];
    if points > 1 && p_max > 0.0 {
        let lo = (p_max * 1e-6).ln();
        let hi = p_max.ln();
        let step = (hi - lo) / (points - 1) as f64;
        grid.extend((0..points).map(|k| (lo + step * k as f64).exp()));
    }
    for i in cfg.nrt_users() {
        let q = users[i].data_queue;
        grid.push(q / x.max(X_FLOOR) - 1.0);
        let psi = psi_nr_star(q, x, p_max);
        grid.push(rt_lambert_power(psi, x, cfg.slot_seconds, p_max));
    }
    for n in 1..=cfg.n_rt {
        grid.push(rt_exclusive_power(n, cfg.packet_bits, cfg.slot_seconds));
    }
    grid.retain(|p| (0.0..=p_max).contains(p));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Best `(objective, decision)` found by exhaustive search.
pub fn best_slot_objective(
    cfg: &SystemConfig,
    users: &[UserState],
    x: f64,
    grid: GridSpec,
) -> Result<(f64, SlotDecision), OracleError> {
    if cfg.n_rt > MAX_RT_USERS.min(grid.max_rt_subset) || cfg.n_nrt > MAX_NRT_USERS {
        return Err(OracleError::InstanceTooLarge {
            n_rt: cfg.n_rt,
            n_nrt: cfg.n_nrt,
        });
    }
    let (l, ts) = (cfg.packet_bits, cfg.slot_seconds);
    let powers = power_grid(cfg, users, x, grid.power_points);
    let eligible_rt: Vec<usize> = (0..cfg.n_rt)
        .filter(|&i| users[i].channel && users[i].arrival)
        .collect();

    // Best NRT value per second of residual time; 0 means leave it idle.
    let mut nrt_best: Option<(usize, f64, f64)> = None;
    for i in cfg.nrt_users() {
        if !(users[i].channel && users[i].data_queue > 0.0) {
            continue;
        }
        for &p in &powers {
            let v = nrt_rate_value(users[i].data_queue, p, x, ts);
            if v > nrt_best.map_or(0.0, |(_, _, b)| b) {
                nrt_best = Some((i, p, v));
            }
        }
    }
    let nrt_value = nrt_best.map_or(0.0, |(_, _, v)| v);

    let mut best = Candidate {
        objective: nrt_value * ts,
        rt: Vec::new(),
    };

    let m = eligible_rt.len();
    for mask in 1u32..(1 << m) {
        let members: Vec<usize> = (0..m)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| eligible_rt[b])
            .collect();
        let n = members.len() as f64;
        let y_sum: f64 = members.iter().map(|&i| users[i].rt_virtual_queue).sum();
        for &p in powers.iter().filter(|&&p| p > 0.0) {
            let mu = l / p.ln_1p();
            let used = n * mu;
            if used > ts * (1.0 + DURATION_SLACK) {
                continue;
            }
            let objective =
                y_sum - n * l * x * p / (ts * p.ln_1p()) + nrt_value * (ts - used).max(0.0);
            if objective > best.objective {
                best = Candidate {
                    objective,
                    rt: members.iter().map(|&i| (i, p)).collect(),
                };
            }
        }
    }

    if m <= REFINE_MAX_RT {
        let coarse = power_grid(cfg, users, x, grid.refine_points);
        let coarse: Vec<f64> = coarse.into_iter().filter(|&p| p > 0.0).collect();
        for mask in 1u32..(1 << m) {
            let members: Vec<usize> = (0..m)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| eligible_rt[b])
                .collect();
            let mut idx = vec![0usize; members.len()];
            loop {
                let mut used = 0.0;
                let mut objective = 0.0;
                for (k, &i) in members.iter().enumerate() {
                    let p = coarse[idx[k]];
                    used += l / p.ln_1p();
                    objective += rt_term(users[i].rt_virtual_queue, p, x, l, ts);
                }
                if used <= ts * (1.0 + DURATION_SLACK) {
                    objective += nrt_value * (ts - used).max(0.0);
                    if objective > best.objective {
                        best = Candidate {
                            objective,
                            rt: members
                                .iter()
                                .enumerate()
                                .map(|(k, &i)| (i, coarse[idx[k]]))
                                .collect(),
                        };
                    }
                }
                if !advance(&mut idx, coarse.len()) {
                    break;
                }
            }
        }
    }

    Ok((best.objective, best.into_decision(cfg, users, nrt_best)))
}

struct Candidate {
    objective: f64,
    /// `(user, power)` for each scheduled RT user.
    rt: Vec<(usize, f64)>,
}

impl Candidate {
    fn into_decision(
        self,
        cfg: &SystemConfig,
        users: &[UserState],
        nrt_best: Option<(usize, f64, f64)>,
    ) -> SlotDecision {
        let mut d = SlotDecision::idle(cfg);
        d.admit = admission(cfg, users);
        let mut used = 0.0;
        for &(i, p) in &self.rt {
            d.power[i] = p;
            d.duration[i] = cfg.packet_bits / p.ln_1p();
            used += d.duration[i];
            d.rt_set.push(i);
        }
        let remaining = (cfg.slot_seconds - used).max(0.0);
        if let Some((i, p, _)) = nrt_best {
            if remaining > 0.0 && p > 0.0 {
                d.power[i] = p;
                d.duration[i] = remaining;
                d.nrt_user = Some(i);
            }
        }
        d.slot_power = slot_power(&d.power, &d.duration, cfg.slot_seconds);
        d
    }
}

/// Odometer increment over `[0, radix)^len`; false once it wraps.
fn advance(idx: &mut [usize], radix: usize) -> bool {
    for digit in idx.iter_mut() {
        *digit += 1;
        if *digit < radix {
            return true;
        }
        *digit = 0;
    }
    false
}

/// Parameters of a randomized policy-versus-oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSpec {
    pub states: usize,
    pub seed: u64,
    pub max_rt: usize,
    pub max_nrt: usize,
    /// `Y`, `Q` and `X` are drawn uniformly from `[0, queue_max)`.
    pub queue_max: f64,
    /// Probability that a channel is on, and that an RT user has a packet.
    pub on_prob: f64,
    pub grid: GridSpec,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            states: 1000,
            seed: 1,
            max_rt: 4,
            max_nrt: 3,
            queue_max: 50.0,
            on_prob: 0.7,
            grid: GridSpec::default(),
        }
    }
}

/// Relative tolerance on the policy's shortfall from the oracle maximum.
pub const CHECK_REL_TOL: f64 = 0.01;

/// Grid term of the tolerance. The oracle only visits feasible grid points,
/// so it cannot beat the continuous optimum; the one exception is the
/// duration slack, worth far less than this.
pub const GRID_BOUND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateOutcome {
    pub index: usize,
    pub n_rt: usize,
    pub n_nrt: usize,
    pub x: f64,
    pub policy_objective: f64,
    pub oracle_objective: f64,
}

impl StateOutcome {
    pub fn tolerance(&self) -> f64 {
        CHECK_REL_TOL * self.oracle_objective.abs()
            + GRID_BOUND * (1.0 + self.oracle_objective.abs())
    }

    pub fn shortfall(&self) -> f64 {
        self.oracle_objective - self.policy_objective
    }

    pub fn passed(&self) -> bool {
        self.shortfall() <= self.tolerance()
    }
}

/// Random state with `1..=max_rt + max_nrt` users.
pub fn random_state(rng: &mut impl Rng, spec: &CheckSpec) -> (SystemConfig, Vec<UserState>, f64) {
    let (n_rt, n_nrt) = loop {
        let n_rt = rng.random_range(0..=spec.max_rt);
        let n_nrt = rng.random_range(0..=spec.max_nrt);
        if n_rt + n_nrt > 0 {
            break (n_rt, n_nrt);
        }
    };
    let cfg = SystemConfig::default_cell(n_rt, n_nrt);
    let users = (0..n_rt + n_nrt)
        .map(|i| {
            let rt = i < n_rt;
            let level = rng.random_range(0.0..spec.queue_max);
            UserState {
                data_queue: if rt { 0.0 } else { level },
                rt_virtual_queue: if rt { level } else { 0.0 },
                channel: rng.random_bool(spec.on_prob),
                arrival: !rt || rng.random_bool(spec.on_prob),
            }
        })
        .collect();
    let x = rng.random_range(0.0..spec.queue_max);
    (cfg, users, x)
}

/// Compares [`decide_slot`] with the oracle on `spec.states` random states.
pub fn check_policy(spec: &CheckSpec) -> Result<Vec<StateOutcome>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.states)
        .map(|index| {
            let (cfg, users, x) = random_state(&mut rng, spec);
            let decision = decide_slot(&cfg, &users, x);
            let (oracle_objective, _) = best_slot_objective(&cfg, &users, x, spec.grid)?;
            Ok(StateOutcome {
                index,
                n_rt: cfg.n_rt,
                n_nrt: cfg.n_nrt,
                x,
                policy_objective: slot_objective(&cfg, &users, x, &decision),
                oracle_objective,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::nrt_power;

    fn state(ys: &[f64], qs: &[f64]) -> (SystemConfig, Vec<UserState>) {
        let cfg = SystemConfig::default_cell(ys.len(), qs.len());
        let users = ys
            .iter()
            .map(|&y| UserState {
                rt_virtual_queue: y,
                channel: true,
                arrival: true,
                ..Default::default()
            })
            .chain(qs.iter().map(|&q| UserState {
                data_queue: q,
                channel: true,
                ..Default::default()
            }))
            .collect();
        (cfg, users)
    }

    #[test]
    fn empty_instance() {
        let (cfg, mut users) = state(&[3.0], &[5.0]);
        for u in &mut users {
            u.channel = false;
        }
        let (v, d) = best_slot_objective(&cfg, &users, 1.0, GridSpec::default()).unwrap();
        assert_eq!(v, 0.0);
        assert!(d.rt_set.is_empty() && d.nrt_user.is_none());
        assert_eq!(slot_objective(&cfg, &users, 1.0, &d), 0.0);
    }

    #[test]
    fn objective_examples() {
        let (cfg, users) = state(&[2.0], &[6.0]);
        let idle = SlotDecision::idle(&cfg);
        assert_eq!(slot_objective(&cfg, &users, 1.0, &idle), 0.0);

        // Y = L·X·P/(Ts·ln(1+P)) zeroes the RT contribution.
        let p: f64 = 5.0;
        let x = 2.0 * p.ln_1p() / p;
        let mut d = SlotDecision::idle(&cfg);
        d.rt_set = vec![0];
        d.power[0] = p;
        d.duration[0] = 1.0 / p.ln_1p();
        assert!(slot_objective(&cfg, &users, x, &d).abs() < 1e-12);

        // NRT only, full slot: Ts·(Q·ln(1+P) - X·P/Ts)
        let mut d = SlotDecision::idle(&cfg);
        d.nrt_user = Some(1);
        d.power[1] = 3.0;
        d.duration[1] = 1.0;
        let expect = 6.0 * 4f64.ln() - 1.5 * 3.0;
        assert!((slot_objective(&cfg, &users, 1.5, &d) - expect).abs() < 1e-12);
    }

    #[test]
    fn interior_nrt_optimum() {
        // Q = 2X: optimum power Q/X - 1 = 1.
        let (cfg, users) = state(&[], &[4.0]);
        let (v, d) = best_slot_objective(&cfg, &users, 2.0, GridSpec::default()).unwrap();
        assert_eq!(d.nrt_user, Some(0));
        assert!((d.power[0] - nrt_power(4.0, 2.0, 200.0)).abs() < 1e-12);
        assert!((v - (4.0 * 2f64.ln() - 2.0)).abs() < 1e-12);

        // Without the closed-form candidate the grid still lands close.
        let coarse = power_grid(&cfg, &users, 2.0, 400);
        let best_grid = coarse
            .iter()
            .filter(|&&p| (p - 1.0).abs() > 1e-9)
            .map(|&p| 4.0 * p.ln_1p() - 2.0 * p)
            .fold(f64::MIN, f64::max);
        assert!(v - best_grid < 1e-3);
    }

    #[test]
    fn too_large() {
        let (cfg, users) = state(&[1.0; 9], &[1.0]);
        assert!(matches!(
            best_slot_objective(&cfg, &users, 1.0, GridSpec::default()),
            Err(OracleError::InstanceTooLarge { .. })
        ));
        let (cfg, users) = state(&[1.0], &[1.0; 5]);
        assert!(best_slot_objective(&cfg, &users, 1.0, GridSpec::default()).is_err());
    }

    #[test]
    fn refining_never_hurts() {
        let (cfg, users) = state(&[12.0, 7.0, 3.0], &[20.0, 9.0]);
        let mut last = f64::MIN;
        for points in [10, 50, 200, 400] {
            let spec = GridSpec {
                power_points: points,
                ..GridSpec::default()
            };
            let (v, d) = best_slot_objective(&cfg, &users, 4.0, spec).unwrap();
            assert!((slot_objective(&cfg, &users, 4.0, &d) - v).abs() < 1e-9);
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn oracle_dominates_feasible_decisions() {
        let (cfg, users) = state(&[12.0, 7.0, 3.0], &[20.0, 9.0]);
        let x = 4.0;
        let (v, _) = best_slot_objective(&cfg, &users, x, GridSpec::default()).unwrap();
        let grid = power_grid(&cfg, &users, x, 400);
        // Any single-RT + NRT split drawn from the grid.
        for &p in grid.iter().filter(|&&p| p > 0.0).step_by(7) {
            let mu = 1.0 / p.ln_1p();
            if mu > 1.0 {
                continue;
            }
            let mut d = SlotDecision::idle(&cfg);
            d.rt_set = vec![0];
            d.power[0] = p;
            d.duration[0] = mu;
            d.nrt_user = Some(3);
            d.power[3] = 2.0;
            d.duration[3] = 1.0 - mu;
            assert!(slot_objective(&cfg, &users, x, &d) <= v + 1e-12);
        }
    }
}
