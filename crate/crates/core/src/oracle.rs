//! Brute-force optima for small instances.
//!
//! These scans are deliberately independent of the solver modules: they
//! enumerate first-stage sets directly, average over every realization of
//! the visible neighborhood, and optimize each second stage exhaustively.
//! Ground sets are restricted to mask width so values can be tabulated.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{second_stage_opt, AdaptiveExecutor, OptMode};
use crate::functions::{Objective, ValueOracle};
use crate::instance::{for_each_weighted_subset, Instance, Realization, XSet};
use crate::policy::NonAdaptivePolicy;
use crate::Caps;

/// Exact optimum of the fully adaptive problem, with the first-stage set
/// attaining it (lowest-indexed among ties).
#[derive(Debug, Clone)]
pub struct AdaptiveOpt {
    pub first: XSet,
    pub value: f64,
}

/// Exact optimum over non-adaptive pairs (S, T) with |S| + C(T) <= k.
#[derive(Debug, Clone)]
pub struct NonAdaptiveOpt {
    pub policy: NonAdaptivePolicy,
    pub value: f64,
}

/// Both optima and their ratio, with names for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub opt_adaptive: f64,
    pub best_first_stage: Vec<String>,
    pub opt_nonadaptive: f64,
    pub nonadaptive_first: Vec<String>,
    pub nonadaptive_second: Vec<String>,
    /// opt_nonadaptive / opt_adaptive; 1 when the adaptive optimum is 0.
    pub gap_ratio: f64,
}

fn check_oracle_limits(inst: &Instance, caps: &Caps) -> Result<()> {
    if inst.n_x() as u64 > caps.oracle_x_limit {
        return Err(Error::CapExceeded {
            what: "oracle first-stage universe",
            needed: inst.n_x() as u64,
            cap: caps.oracle_x_limit,
        });
    }
    if inst.n_ground() as u64 > caps.oracle_ground_limit {
        return Err(Error::CapExceeded {
            what: "oracle ground set",
            needed: inst.n_ground() as u64,
            cap: caps.oracle_ground_limit,
        });
    }
    Ok(())
}

fn mask_of(items: &[u32]) -> u64 {
    items.iter().fold(0u64, |m, &j| m | 1u64 << j)
}

/// f tabulated over every ground subset, indexed by bit mask.
fn value_table(f: &Objective, n_ground: usize) -> Vec<f64> {
    let size = 1usize << n_ground;
    let mut table = vec![0.0; size];
    let mut buf: Vec<u32> = Vec::with_capacity(n_ground);
    for mask in 0..size {
        buf.clear();
        for j in 0..n_ground {
            if mask >> j & 1 == 1 {
                buf.push(j as u32);
            }
        }
        table[mask] = f.value(&buf);
    }
    table
}

/// Exact adaptive optimum by scanning all first-stage sets, enumerating
/// every realization of the visible neighborhood, and taking the best
/// budget-limited subset of each realization.
pub fn opt_adaptive_bruteforce(
    inst: &Instance,
    f: &Objective,
    caps: &Caps,
) -> Result<AdaptiveOpt> {
    check_oracle_limits(inst, caps)?;
    let table = value_table(f, inst.n_ground());
    let k = inst.budget();
    let mut memo: HashMap<(u64, u32), f64> = HashMap::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_first = XSet::new();
    for s_mask in 0u64..1 << inst.n_x() {
        if u64::from(s_mask.count_ones()) > k {
            continue;
        }
        let first: Vec<u32> = (0..inst.n_x() as u32).filter(|i| s_mask >> i & 1 == 1).collect();
        let leftover = (k - u64::from(s_mask.count_ones())).min(inst.n_ground() as u64) as u32;
        let visible = inst.neighbors_of_set(first.iter().copied());
        let mut expected = 0.0;
        for_each_weighted_subset(inst.probs(), &visible, &mut |realized, w| {
            let r_mask = mask_of(realized);
            let t_eff = leftover.min(realized.len() as u32);
            let best = *memo
                .entry((r_mask, t_eff))
                .or_insert_with(|| best_subset_value(&table, r_mask, t_eff));
            expected += w * best;
        });
        if expected > best_val + 1e-15 {
            best_val = expected;
            best_first = first.into_iter().collect();
        }
    }
    Ok(AdaptiveOpt {
        first: best_first,
        value: best_val.max(0.0),
    })
}

/// Max of table over submasks of `mask` with at most `limit` bits.
fn best_subset_value(table: &[f64], mask: u64, limit: u32) -> f64 {
    let mut best = table[0];
    let mut sub = mask;
    while sub != 0 {
        if sub.count_ones() <= limit && table[sub as usize] > best {
            best = table[sub as usize];
        }
        sub = (sub - 1) & mask;
    }
    best
}

/// Exact non-adaptive optimum: for every S, search all T within the
/// neighborhood of S whose probability mass fits the leftover budget.
pub fn opt_nonadaptive_bruteforce(
    inst: &Instance,
    f: &Objective,
    caps: &Caps,
) -> Result<NonAdaptiveOpt> {
    check_oracle_limits(inst, caps)?;
    let table = value_table(f, inst.n_ground());
    // F[mask] = expected value of the realized part of the mask.
    let f_expected = expectation_table(inst, &table);
    let k = inst.budget();
    let mut candidates: u64 = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut best: Option<(Vec<u32>, Vec<u32>)> = None;
    for s_mask in 0u64..1 << inst.n_x() {
        if u64::from(s_mask.count_ones()) > k {
            continue;
        }
        let first: Vec<u32> = (0..inst.n_x() as u32).filter(|i| s_mask >> i & 1 == 1).collect();
        let budget_left = (k - u64::from(s_mask.count_ones())) as f64 + 1e-9;
        let visible = inst.neighbors_of_set(first.iter().copied());
        let mut stack: Vec<u32> = Vec::new();
        dfs_second(
            inst,
            &visible,
            0,
            0.0,
            budget_left,
            0u64,
            &mut stack,
            &mut candidates,
            caps,
            &mut |t_mask, t: &[u32]| {
                let v = f_expected[t_mask as usize];
                if v > best_val + 1e-15 {
                    best_val = v;
                    best = Some((first.clone(), t.to_vec()));
                }
            },
        )?;
    }
    let (first, second) = best.unwrap_or_default();
    Ok(NonAdaptiveOpt {
        policy: NonAdaptivePolicy {
            first: first.into_iter().collect(),
            second: second.into_iter().collect(),
        },
        value: best_val.max(0.0),
    })
}

/// E[f(mask ∩ R)] for every ground mask, by direct submask averaging.
fn expectation_table(inst: &Instance, table: &[f64]) -> Vec<f64> {
    let n = inst.n_ground();
    let mut out = vec![0.0; 1 << n];
    for mask in 0u64..1 << n {
        let mut total = 0.0;
        let mut sub = mask;
        loop {
            let mut w = 1.0;
            for j in 0..n {
                if mask >> j & 1 == 1 {
                    let p = inst.prob(j as u32);
                    w *= if sub >> j & 1 == 1 { p } else { 1.0 - p };
                }
            }
            total += w * table[sub as usize];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        out[mask as usize] = total;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn dfs_second(
    inst: &Instance,
    visible: &[u32],
    from: usize,
    cost: f64,
    budget: f64,
    mask: u64,
    stack: &mut Vec<u32>,
    candidates: &mut u64,
    caps: &Caps,
    visit: &mut impl FnMut(u64, &[u32]),
) -> Result<()> {
    *candidates += 1;
    if *candidates > caps.subset_cap {
        return Err(Error::CapExceeded {
            what: "non-adaptive oracle candidates",
            needed: *candidates,
            cap: caps.subset_cap,
        });
    }
    visit(mask, stack);
    for i in from..visible.len() {
        let j = visible[i];
        let c = inst.prob(j);
        if cost + c > budget {
            continue;
        }
        stack.push(j);
        dfs_second(
            inst,
            visible,
            i + 1,
            cost + c,
            budget,
            mask | 1 << j,
            stack,
            candidates,
            caps,
            visit,
        )?;
        stack.pop();
    }
    Ok(())
}

/// Runs both brute-force scans and packages them for reporting.
pub fn oracle_report(inst: &Instance, f: &Objective, caps: &Caps) -> Result<OracleReport> {
    let ad = opt_adaptive_bruteforce(inst, f, caps)?;
    let na = opt_nonadaptive_bruteforce(inst, f, caps)?;
    let gap_ratio = if ad.value > 0.0 { na.value / ad.value } else { 1.0 };
    Ok(OracleReport {
        opt_adaptive: ad.value,
        best_first_stage: ad.first.iter().map(|&i| inst.x_name(i).to_string()).collect(),
        opt_nonadaptive: na.value,
        nonadaptive_first: na
            .policy
            .first
            .iter()
            .map(|&i| inst.x_name(i).to_string())
            .collect(),
        nonadaptive_second: na
            .policy
            .second
            .iter()
            .map(|&j| inst.ground_name(j).to_string())
            .collect(),
        gap_ratio,
    })
}

/// The exact adaptive policy in executable form: the brute-force first
/// stage plus exhaustive per-realization second-stage optimization.
pub struct OracleExecutor<'a> {
    f: &'a Objective,
    first: XSet,
    visible: Vec<u32>,
    leftover: u32,
}

impl AdaptiveExecutor for OracleExecutor<'_> {
    fn first_stage(&self) -> &XSet {
        &self.first
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn select(&self, _inst: &Instance, r: &Realization, _rng: &mut ChaCha8Rng) -> Vec<u32> {
        let realized = r.filter_sorted(&self.visible);
        // The construction-time limits bound this search, so lift the
        // subset cap rather than threading a fallible path through here.
        let caps = Caps {
            subset_cap: u64::MAX,
            ..Caps::default()
        };
        let (t, _) = second_stage_opt(self.f, &[], &realized, self.leftover, OptMode::Exact, &caps)
            .expect("exhaustive second stage within oracle limits");
        t
    }
}

/// Builds the exact adaptive executor and returns it with its value.
pub fn optimal_executor<'a>(
    inst: &Instance,
    f: &'a Objective,
    caps: &Caps,
) -> Result<(OracleExecutor<'a>, f64)> {
    let opt = opt_adaptive_bruteforce(inst, f, caps)?;
    let visible = inst.neighbors_of_set(opt.first.iter().copied());
    let leftover = inst
        .budget()
        .saturating_sub(opt.first.len() as u64)
        .min(u32::MAX as u64) as u32;
    Ok((
        OracleExecutor {
            f,
            first: opt.first,
            visible,
            leftover,
        },
        opt.value,
    ))
}
