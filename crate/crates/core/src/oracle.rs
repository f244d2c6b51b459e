//! Exhaustive solvers for small instances.
//!
//! For a fixed controller set `S` both objectives decompose per node, so the
//! search runs over subsets of the candidates only. Subsets are visited in
//! Gray-code order, which lets the summed controller distances
//! `s_j = Σ_{k∈S} d(x_j, x_k)` be updated with one add or subtract per step.

use std::time::{Duration, Instant};

use crate::error::{EcpError, Result};
use crate::exec::Exec;
use crate::network::{evaluate_lb, evaluate_ll, NetworkInstance, ObjectiveBreakdown, Placement};

/// Largest candidate set the oracles accept.
pub const MAX_ORACLE_CANDIDATES: usize = 20;

/// Gray-code steps per work unit. Each unit rebuilds `s` from scratch, so
/// rounding does not depend on how units are scheduled.
const CHUNK: u64 = 1 << 12;

const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub placement: Placement,
    pub objective: f64,
    /// Subsets whose cost was evaluated (those within the size limit).
    pub subsets_enumerated: u64,
    pub wall_time: Duration,
}

#[derive(Clone, Copy)]
enum Kind {
    LeaderLess,
    LeaderBased,
}

struct Tables {
    n: usize,
    c: usize,
    /// `n x c` node-to-candidate distances.
    node_cand: Vec<f64>,
    /// `c x c` candidate-to-candidate distances.
    cand_cand: Vec<f64>,
}

impl Tables {
    fn new(instance: &NetworkInstance) -> Self {
        let cands = instance.candidates();
        let (n, c) = (instance.len(), cands.len());
        let node_cand = (0..n)
            .flat_map(|i| cands.iter().map(move |&j| (i, j)))
            .map(|(i, j)| instance.node_distance(i, j))
            .collect();
        let cand_cand = cands
            .iter()
            .flat_map(|&a| cands.iter().map(move |&b| (a, b)))
            .map(|(a, b)| instance.node_distance(a, b))
            .collect();
        Self {
            n,
            c,
            node_cand,
            cand_cand,
        }
    }

    fn spread_from_scratch(&self, mask: u64) -> Vec<f64> {
        (0..self.c)
            .map(|j| bits(mask).map(|k| self.cand_cand[j * self.c + k]).sum())
            .collect()
    }

    fn cost(&self, kind: Kind, mask: u64, spread: &[f64], gamma: f64) -> f64 {
        match kind {
            Kind::LeaderLess => (0..self.n)
                .map(|i| {
                    let row = &self.node_cand[i * self.c..(i + 1) * self.c];
                    bits(mask)
                        .map(|j| row[j] + gamma * spread[j])
                        .fold(f64::INFINITY, f64::min)
                })
                .sum(),
            Kind::LeaderBased => {
                let delay: f64 = (0..self.n)
                    .map(|i| {
                        let row = &self.node_cand[i * self.c..(i + 1) * self.c];
                        bits(mask).map(|j| row[j]).fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                let lead = bits(mask).map(|j| spread[j]).fold(f64::INFINITY, f64::min);
                delay + gamma * self.n as f64 * lead
            }
        }
    }
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let b = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(b)
        }
    })
}

fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}

/// Set order: ascending member lists compared lexicographically.
fn lex_less(a: u64, b: u64) -> bool {
    bits(a).lt(bits(b))
}

#[derive(Clone, Copy)]
struct Best {
    cost: f64,
    mask: u64,
}

fn better(cand: Best, cur: Option<Best>) -> bool {
    match cur {
        None => true,
        Some(cur) => {
            let tol = TIE_REL * cur.cost.abs().max(1.0);
            cand.cost < cur.cost - tol
                || (cand.cost <= cur.cost + tol && lex_less(cand.mask, cur.mask))
        }
    }
}

fn scan_chunk(
    t: &Tables,
    kind: Kind,
    gamma: f64,
    limit: u32,
    start: u64,
    end: u64,
) -> (Option<Best>, u64) {
    let mut mask = gray(start);
    let mut spread = t.spread_from_scratch(mask);
    let mut best = None;
    let mut count = 0;
    for k in start..end {
        if k > start {
            let b = k.trailing_zeros() as usize;
            let sign = if mask & (1 << b) == 0 { 1.0 } else { -1.0 };
            mask ^= 1 << b;
            for (j, s) in spread.iter_mut().enumerate() {
                *s += sign * t.cand_cand[j * t.c + b];
            }
        }
        let size = mask.count_ones();
        if size == 0 || size > limit {
            continue;
        }
        count += 1;
        let cand = Best {
            cost: t.cost(kind, mask, &spread, gamma),
            mask,
        };
        if better(cand, best) {
            best = Some(cand);
        }
    }
    (best, count)
}

fn search(
    instance: &NetworkInstance,
    kind: Kind,
    max_controllers: Option<usize>,
    exec: Exec,
) -> Result<OracleReport> {
    let start = Instant::now();
    let cands = instance.candidates();
    if cands.len() > MAX_ORACLE_CANDIDATES {
        return Err(EcpError::TooLarge {
            candidates: cands.len(),
            limit: MAX_ORACLE_CANDIDATES,
        });
    }
    let limit = max_controllers.unwrap_or(cands.len());
    if limit == 0 {
        return Err(EcpError::InvalidConfig(
            "max_controllers must be >= 1".into(),
        ));
    }
    let t = Tables::new(instance);
    let total = 1u64 << t.c;
    let ranges: Vec<(u64, u64)> = (0..total.div_ceil(CHUNK))
        .map(|u| (u * CHUNK, ((u + 1) * CHUNK).min(total)))
        .collect();
    let gamma = instance.gamma();
    let parts = exec.map_jobs(&ranges, |&(a, b)| {
        scan_chunk(&t, kind, gamma, limit as u32, a, b)
    });

    let mut best = None;
    let mut enumerated = 0;
    for (b, count) in parts {
        enumerated += count;
        if let Some(b) = b {
            if better(b, best) {
                best = Some(b);
            }
        }
    }
    let best = best.expect("at least one singleton subset is feasible");
    let controllers: Vec<usize> = bits(best.mask).map(|j| cands[j]).collect();
    let spread = t.spread_from_scratch(best.mask);
    let mut placement = match kind {
        Kind::LeaderLess => {
            let penalty: Vec<f64> = bits(best.mask).map(|j| gamma * spread[j]).collect();
            let assignment = Placement::assign_with_penalty(instance, &controllers, &penalty);
            Placement {
                controllers,
                assignment,
                leader: None,
                objective: ObjectiveBreakdown::default(),
            }
        }
        Kind::LeaderBased => {
            let mut leader = controllers[0];
            let mut lead = f64::INFINITY;
            for (j, &c) in bits(best.mask).zip(&controllers) {
                if spread[j] < lead {
                    lead = spread[j];
                    leader = c;
                }
            }
            let assignment = Placement::assign_with_penalty(
                instance,
                &controllers,
                &vec![0.0; controllers.len()],
            );
            Placement {
                controllers,
                assignment,
                leader: Some(leader),
                objective: ObjectiveBreakdown::default(),
            }
        }
    };
    placement.objective = match kind {
        Kind::LeaderLess => evaluate_ll(instance, &placement)?,
        Kind::LeaderBased => evaluate_lb(instance, &placement)?,
    };
    Ok(OracleReport {
        objective: placement.objective.total,
        placement,
        subsets_enumerated: enumerated,
        wall_time: start.elapsed(),
    })
}

/// Exact leader-less optimum over controller sets of size at most
/// `max_controllers` (all candidates when `None`).
pub fn ll_brute_force(
    instance: &NetworkInstance,
    max_controllers: Option<usize>,
) -> Result<OracleReport> {
    ll_brute_force_with(instance, max_controllers, Exec::default())
}

pub fn ll_brute_force_with(
    instance: &NetworkInstance,
    max_controllers: Option<usize>,
    exec: Exec,
) -> Result<OracleReport> {
    search(instance, Kind::LeaderLess, max_controllers, exec)
}

/// Exact leader-based optimum. For a fixed set the best leader minimizes the
/// summed distance to the other controllers, so leaders need no separate
/// enumeration.
pub fn lb_brute_force(
    instance: &NetworkInstance,
    max_controllers: Option<usize>,
) -> Result<OracleReport> {
    lb_brute_force_with(instance, max_controllers, Exec::default())
}

pub fn lb_brute_force_with(
    instance: &NetworkInstance,
    max_controllers: Option<usize>,
    exec: Exec,
) -> Result<OracleReport> {
    search(instance, Kind::LeaderBased, max_controllers, exec)
}
