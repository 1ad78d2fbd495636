//! Locally adaptive policies: ordered blocks that commit a first-stage set
//! up front but pick their second stage only after seeing which neighbors
//! realized. Includes the block-greedy solver, the exact small-budget
//! fallback, and the reductions that turn non-adaptive policies into
//! locally adaptive ones.

use crate::error::{Error, Result};
use crate::eval::{mc_estimate, second_stage_opt, subsets_up_to, Estimate, OptMode};
use crate::functions::{merge_sorted, Objective, ValueOracle};
use crate::instance::{Instance, Realization};
use crate::nonadaptive::exact_f;
use crate::policy::{
    ceil_bound, AdaptiveBlockSpec, BlockMode, BudgetedBlock, EpsilonLocalPolicy,
    LocallyAdaptivePolicy, NonAdaptivePolicy,
};
use crate::rng::SeedStream;
use crate::trace::GreedyTrace;
use crate::Caps;
use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEARCH_DOMAIN: u64 = 0x4c41;
const CONFIRM_DOMAIN: u64 = 0x4c42;
const TIE_TOL: f64 = 1e-12;

/// Execution-time switches. The defaults match the solver's assumptions;
/// the knobs exist so experiments can pin a selection rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Force every non-randomized block to select with this rule instead of
    /// the size-based default. Forcing `Exact` still degrades to greedy when
    /// the combination count would blow past `caps.subset_cap`.
    pub force_mode: Option<OptMode>,
    /// When true, block selection may read the full realization rather than
    /// just the block's own neighborhood. Every built-in selection rule only
    /// ever inspects its own neighborhood and the picks made so far, so the
    /// two conventions produce identical runs; the flag records the
    /// convention rather than changing behavior today.
    pub condition_on_full: bool,
}

/// Run a locally adaptive policy against one realization. Blocks execute in
/// order; each sees the realized neighbors of its own first stage and the
/// nodes already picked by earlier blocks. Returns the sorted union of all
/// second-stage picks.
pub fn execute_policy(
    inst: &Instance,
    f: &Objective,
    policy: &LocallyAdaptivePolicy,
    r: &Realization,
    rng: &mut ChaCha8Rng,
    opts: &ExecOptions,
    caps: &Caps,
) -> Vec<u32> {
    let mut picks: Vec<u32> = Vec::new();
    for block in &policy.blocks {
        match &block.mode {
            BlockMode::Exact | BlockMode::Greedy => {
                let visible = inst.neighbors_of_set(block.first.iter().copied());
                let realized = r.filter_sorted(&visible);
                let budget = block.second_budget;
                let mode =
                    decide_mode(&block.mode, realized.len() as u64, budget as u64, opts, caps);
                // The block's own budget already bounds the enumeration, so
                // the inner optimizer runs uncapped.
                let loose = Caps {
                    subset_cap: u64::MAX,
                    ..*caps
                };
                let (chosen, _) = second_stage_opt(f, &picks, &realized, budget, mode, &loose)
                    .expect("uncapped second-stage optimization cannot fail");
                picks = merge_sorted(&picks, &chosen);
            }
            BlockMode::Crs { keep_prob, cap, second } => {
                // Thin the realized set; a survivor already seeded by an
                // earlier block needs no new budget and drops out.
                let mut kept: Vec<u32> = Vec::new();
                for &j in second {
                    if !r.contains(j) {
                        continue;
                    }
                    let coin = rng.random::<f64>();
                    if coin < *keep_prob && picks.binary_search(&j).is_err() {
                        kept.push(j);
                    }
                }
                if kept.len() as f64 <= *cap + 1e-9 {
                    picks = merge_sorted(&picks, &kept);
                }
            }
        }
    }
    picks
}

fn decide_mode(
    block_mode: &BlockMode,
    realized: u64,
    budget: u64,
    opts: &ExecOptions,
    caps: &Caps,
) -> OptMode {
    if let Some(forced) = opts.force_mode {
        return match forced {
            OptMode::Greedy => OptMode::Greedy,
            OptMode::Exact => {
                if subsets_up_to(realized, budget) <= caps.subset_cap {
                    OptMode::Exact
                } else {
                    OptMode::Greedy
                }
            }
        };
    }
    if matches!(block_mode, BlockMode::Greedy) {
        return OptMode::Greedy;
    }
    let threshold = caps.exact_opt_cap.min(caps.subset_cap);
    if subsets_up_to(realized, budget) <= threshold {
        OptMode::Exact
    } else {
        OptMode::Greedy
    }
}

/// A candidate adaptive block together with its estimated marginal value on
/// top of the current policy.
#[derive(Debug, Clone)]
pub struct BlockSearchResult {
    pub block: AdaptiveBlockSpec,
    pub marginal: Estimate,
    pub density: f64,
}

fn block_label(inst: &Instance, block: &AdaptiveBlockSpec) -> String {
    let names: Vec<&str> = block.first.iter().map(|&i| inst.x_name(i)).collect();
    format!("{};t={}", names.join(","), block.second_budget)
}

fn enumerate_first_sets(
    n_x: u32,
    s_max: usize,
    from: u32,
    stack: &mut Vec<u32>,
    visit: &mut impl FnMut(&[u32]) -> Result<()>,
) -> Result<()> {
    for i in from..n_x {
        stack.push(i);
        visit(stack)?;
        if stack.len() < s_max {
            enumerate_first_sets(n_x, s_max, i + 1, stack, visit)?;
        }
        stack.pop();
    }
    Ok(())
}

/// Search every first-stage set of size at most ceil(1/eps^2) paired with
/// every second-stage budget up to ceil(2/eps) for the block with the best
/// marginal density on top of `current`. Marginals are Monte Carlo estimates
/// sharing one batch of realizations across all candidates, and the winner
/// is re-estimated at four times the sample count on a fresh substream.
/// Returns None when no candidate fits the remaining budget.
pub fn find_optimal_adaptive_block(
    inst: &Instance,
    f: &Objective,
    current: &LocallyAdaptivePolicy,
    epsilon: f64,
    samples: u64,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Option<BlockSearchResult>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!(
            "block search needs epsilon in (0, 1], got {epsilon}"
        )));
    }
    if samples == 0 {
        return Err(Error::Input("block search needs at least one sample".into()));
    }
    let n_x = inst.n_x() as u32;
    let s_max = (ceil_bound(1.0 / (epsilon * epsilon)) as usize).min(inst.n_x());
    let t_max = ceil_bound(2.0 / epsilon) as u32;
    let gross =
        (subsets_up_to(n_x as u64, s_max as u64) - 1).saturating_mul(t_max as u64);
    if gross > caps.subset_cap {
        return Err(Error::CapExceeded {
            what: "adaptive block candidates",
            needed: gross,
            cap: caps.subset_cap,
        });
    }
    let budget_left = inst.budget() as f64 - current.cost();

    // Common random numbers: one shared batch of realizations, each already
    // pushed through the current policy so candidate evaluation only pays
    // for its own block.
    let exec = ExecOptions::default();
    let prep: Vec<(Realization, Vec<u32>, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(SEARCH_DOMAIN, i);
            let r = inst.sample_realization(&mut rng);
            let picks = execute_policy(inst, f, current, &r, &mut rng, &exec, caps);
            let base = f.value(&picks);
            (r, picks, base)
        })
        .collect();

    let threshold = caps.exact_opt_cap.min(caps.subset_cap);
    let loose = Caps {
        subset_cap: u64::MAX,
        ..*caps
    };
    let mut best: Option<BlockSearchResult> = None;
    let mut stack: Vec<u32> = Vec::new();
    let mut visit = |first: &[u32]| -> Result<()> {
        if first.len() as f64 + 1.0 > budget_left + 1e-9 {
            return Ok(());
        }
        let visible = inst.neighbors_of_set(first.iter().copied());
        let realized_per: Vec<Vec<u32>> = prep
            .par_iter()
            .map(|(r, _, _)| r.filter_sorted(&visible))
            .collect();
        for t in 1..=t_max {
            if (first.len() + t as usize) as f64 > budget_left + 1e-9 {
                break;
            }
            let gains: Vec<f64> = prep
                .par_iter()
                .zip(realized_per.par_iter())
                .map(|((_, picks, base), realized)| {
                    let count = subsets_up_to(realized.len() as u64, t as u64);
                    let mode = if count <= threshold {
                        OptMode::Exact
                    } else {
                        OptMode::Greedy
                    };
                    let (_, val) = second_stage_opt(f, picks, realized, t, mode, &loose)
                        .expect("uncapped second-stage optimization cannot fail");
                    val - base
                })
                .collect();
            let mean = gains.iter().sum::<f64>() / samples as f64;
            let var =
                gains.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / samples as f64;
            let est = Estimate {
                mean,
                std_error: (var / samples as f64).sqrt(),
                samples,
                exact: false,
            };
            let cost = first.len() as f64 + t as f64;
            let density = est.mean / cost;
            let better = match &best {
                None => true,
                Some(b) => {
                    density > b.density + TIE_TOL
                        || (density > b.density - TIE_TOL && cost < b.block.cost() - TIE_TOL)
                }
            };
            if better {
                best = Some(BlockSearchResult {
                    block: AdaptiveBlockSpec {
                        first: first.iter().copied().collect(),
                        second_budget: t,
                        mode: BlockMode::Exact,
                    },
                    marginal: est,
                    density,
                });
            }
        }
        Ok(())
    };
    enumerate_first_sets(n_x, s_max, 0, &mut stack, &mut visit)?;

    let Some(mut winner) = best else {
        return Ok(None);
    };
    // Fresh, larger sample for the reported estimate so the selection noise
    // does not bias the accepted marginal upward.
    let visible = inst.neighbors_of_set(winner.block.first.iter().copied());
    let t = winner.block.second_budget;
    winner.marginal = mc_estimate(samples * 4, stream, CONFIRM_DOMAIN, |_, rng| {
        let r = inst.sample_realization(rng);
        let picks = execute_policy(inst, f, current, &r, rng, &exec, caps);
        let base = f.value(&picks);
        let realized = r.filter_sorted(&visible);
        let count = subsets_up_to(realized.len() as u64, t as u64);
        let mode = if count <= threshold {
            OptMode::Exact
        } else {
            OptMode::Greedy
        };
        let (_, val) = second_stage_opt(f, &picks, &realized, t, mode, &loose)
            .expect("uncapped second-stage optimization cannot fail");
        val - base
    });
    winner.density = winner.marginal.mean / winner.block.cost();
    Ok(Some(winner))
}

/// Locally adaptive block greedy. Repeatedly appends the best-density
/// adaptive block while the policy cost stays below k - 3/eps^2, stopping
/// early when no block improves the objective. Requires k > 3/eps^2; smaller
/// budgets belong to the exact fallback.
pub fn locally_adaptive_greedy(
    inst: &Instance,
    f: &Objective,
    epsilon: f64,
    samples: u64,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<(LocallyAdaptivePolicy, GreedyTrace)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!(
            "locally adaptive greedy needs epsilon in (0, 1], got {epsilon}"
        )));
    }
    let slack = 3.0 / (epsilon * epsilon);
    let k = inst.budget() as f64;
    if k <= slack {
        return Err(Error::Input(format!(
            "budget {k} does not exceed the loop reserve 3/eps^2 = {slack}; \
             use the exact small-budget solver instead"
        )));
    }
    let mut policy = LocallyAdaptivePolicy {
        epsilon,
        blocks: Vec::new(),
    };
    let mut trace = GreedyTrace::default();
    let mut value = 0.0;
    while policy.cost() < k - slack {
        let iter_stream = stream.derive(policy.blocks.len() as u64);
        let Some(found) =
            find_optimal_adaptive_block(inst, f, &policy, epsilon, samples, &iter_stream, caps)?
        else {
            break;
        };
        if found.marginal.mean <= TIE_TOL {
            break;
        }
        value += found.marginal.mean;
        trace.push(
            block_label(inst, &found.block),
            found.density,
            policy.cost() + found.block.cost(),
            value,
        );
        policy.blocks.push(found.block);
    }
    Ok((policy, trace))
}

/// What the top-level solver produced: a greedy policy when the budget
/// leaves room for the block loop, otherwise the exact adaptive optimum.
pub enum AdaptiveSolution<'a> {
    Greedy {
        policy: LocallyAdaptivePolicy,
        trace: GreedyTrace,
    },
    Fallback {
        executor: crate::oracle::OracleExecutor<'a>,
        value: f64,
    },
}

/// Solve the adaptive seeding instance: block greedy when k > 3/eps^2,
/// exact brute force otherwise.
pub fn locally_adaptive_solve<'a>(
    inst: &Instance,
    f: &'a Objective,
    epsilon: f64,
    samples: u64,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<AdaptiveSolution<'a>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!(
            "the adaptive solver needs epsilon in (0, 1], got {epsilon}"
        )));
    }
    let slack = 3.0 / (epsilon * epsilon);
    if inst.budget() as f64 > slack {
        let (policy, trace) = locally_adaptive_greedy(inst, f, epsilon, samples, stream, caps)?;
        Ok(AdaptiveSolution::Greedy { policy, trace })
    } else {
        let (executor, value) = crate::oracle::optimal_executor(inst, f, caps)?;
        Ok(AdaptiveSolution::Fallback { executor, value })
    }
}

/// Rewrite a non-adaptive policy (S, T) as an epsilon-local policy whose
/// blocks each carry at most ceil(1/eps^2) parents and between 1/eps and
/// 2/eps in expected second-stage mass. Parents are processed in name
/// order; each brings the part of T it is the earliest adjacent parent of.
/// Blocks that overflow 2/eps split, duplicating the overflowing parent so
/// leftovers stay adjacent. If the finished policy exceeds the budget,
/// whole blocks are pruned lowest marginal density first.
pub fn nonadaptive_to_local(
    inst: &Instance,
    f: &Objective,
    policy: &NonAdaptivePolicy,
    epsilon: f64,
    caps: &Caps,
) -> Result<EpsilonLocalPolicy> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Input(format!(
            "the locality reduction needs epsilon in (0, 1), got {epsilon}"
        )));
    }
    let violations = policy.validate(inst, true);
    if !violations.is_empty() {
        return Err(Error::Input(violations.join("; ")));
    }
    if policy.cost(inst) <= 3.0 / (epsilon * epsilon * epsilon) {
        warn!(
            "policy cost {:.3} is at most 3/eps^3 = {:.3}; the locality guarantee is vacuous here",
            policy.cost(inst),
            3.0 / (epsilon * epsilon * epsilon)
        );
    }
    let mut parents: Vec<u32> = policy.first.iter().copied().collect();
    parents.sort_by(|&a, &b| inst.x_name(a).cmp(inst.x_name(b)));
    let t_sorted = policy.second_sorted();

    // Earliest adjacent parent in processing order, for each node of T.
    let mut owner: Vec<Option<usize>> = vec![None; inst.n_ground()];
    for (rank, &x) in parents.iter().enumerate() {
        for &j in &t_sorted {
            if owner[j as usize].is_none() && inst.parents_of(j).binary_search(&x).is_ok() {
                owner[j as usize] = Some(rank);
            }
        }
    }

    let one = 1.0 / epsilon;
    let two = 2.0 / epsilon;
    let s_cap = ceil_bound(1.0 / (epsilon * epsilon));
    let mut blocks: Vec<BudgetedBlock> = Vec::new();
    let push_block = |blocks: &mut Vec<BudgetedBlock>, first: &[u32], budget: f64, second: Vec<u32>| {
        blocks.push(BudgetedBlock {
            first: first.iter().copied().collect(),
            budget,
            second: second.into_iter().collect(),
        });
    };
    let mut open_first: Vec<u32> = Vec::new();
    let mut open_second: Vec<u32> = Vec::new();
    let mut open_mass = 0.0;
    for (rank, &x) in parents.iter().enumerate() {
        open_first.push(x);
        let share: Vec<u32> = t_sorted
            .iter()
            .copied()
            .filter(|&j| owner[j as usize] == Some(rank))
            .collect();
        let share_mass = inst.cost_of_second(share.iter());
        if open_mass + share_mass > two + 1e-9 {
            // Overfull: emit maximal blocks of at most 2/eps. Everything
            // already open fits in the first of them (its mass was at most
            // 1/eps), so all leftovers belong to x and the reopened block
            // with x alone stays adjacent.
            let mut pool = share;
            let mut head: Vec<u32> = std::mem::take(&mut open_second);
            let mut head_mass = open_mass;
            let mut first: Vec<u32> = std::mem::take(&mut open_first);
            loop {
                let mut rest: Vec<u32> = Vec::new();
                let mut rest_mass = 0.0;
                for &j in &pool {
                    let p = inst.cost_of_second([j].iter());
                    if head_mass + p <= two + 1e-9 {
                        head_mass += p;
                        head.push(j);
                    } else {
                        rest.push(j);
                        rest_mass += p;
                    }
                }
                head.sort_unstable();
                push_block(&mut blocks, &first, head_mass, head);
                if rest_mass > two + 1e-9 {
                    first = vec![x];
                    head = Vec::new();
                    head_mass = 0.0;
                    pool = rest;
                } else {
                    open_first = vec![x];
                    open_second = rest;
                    open_mass = rest_mass;
                    break;
                }
            }
            if open_mass > one + 1e-9 {
                let second = std::mem::take(&mut open_second);
                push_block(&mut blocks, &std::mem::take(&mut open_first), open_mass, second);
                open_mass = 0.0;
            }
        } else {
            open_second.extend(share);
            open_second.sort_unstable();
            open_mass += share_mass;
            if open_mass > one + 1e-9 {
                let second = std::mem::take(&mut open_second);
                push_block(&mut blocks, &std::mem::take(&mut open_first), open_mass, second);
                open_mass = 0.0;
            } else if open_first.len() as u64 == s_cap {
                let second = std::mem::take(&mut open_second);
                push_block(&mut blocks, &std::mem::take(&mut open_first), one, second);
                open_mass = 0.0;
            }
        }
    }
    if !open_first.is_empty() {
        push_block(&mut blocks, &open_first, one, open_second);
    }

    let mut local = EpsilonLocalPolicy { epsilon, blocks };
    // Pruning: drop whole blocks, lowest marginal density first, until the
    // policy fits the budget again.
    let k = inst.budget() as f64;
    while local.cost() > k + 1e-9 && !local.blocks.is_empty() {
        let union: Vec<u32> = local.second_union().into_iter().collect();
        let full = exact_f(inst, f, &union, caps)?;
        let mut victim = 0usize;
        let mut victim_density = f64::INFINITY;
        for (b, block) in local.blocks.iter().enumerate() {
            let without: Vec<u32> = union
                .iter()
                .copied()
                .filter(|j| !block.second.contains(j))
                .collect();
            let marginal = full - exact_f(inst, f, &without, caps)?;
            let density = marginal / block.cost();
            if density < victim_density - TIE_TOL {
                victim_density = density;
                victim = b;
            }
        }
        local.blocks.remove(victim);
    }
    let violations = local.validate(inst, false);
    if !violations.is_empty() {
        return Err(Error::Infeasible(format!(
            "locality reduction produced an invalid policy: {}",
            violations.join("; ")
        )));
    }
    Ok(local)
}

/// Attach a thinning rule to each block of an epsilon-local policy, turning
/// it into a locally adaptive policy whose blocks keep each realized
/// second-stage node with probability 1 - eps and seed the survivors only
/// when they fit the block budget.
pub fn local_to_locally_adaptive(
    local: &EpsilonLocalPolicy,
    epsilon: f64,
) -> Result<LocallyAdaptivePolicy> {
    if !(epsilon > 0.0 && epsilon < 0.2) {
        return Err(Error::Input(format!(
            "the thinning rate must be in (0, 1/5), got {epsilon}"
        )));
    }
    if local.epsilon > epsilon.powi(4) + 1e-12 {
        warn!(
            "locality parameter {} exceeds eps^4 = {}; the adaptivity bound needs a finer \
             local policy",
            local.epsilon,
            epsilon.powi(4)
        );
    }
    let blocks = local
        .blocks
        .iter()
        .map(|b| AdaptiveBlockSpec {
            first: b.first.clone(),
            second_budget: (b.budget + 1e-9).floor() as u32,
            mode: BlockMode::Crs {
                keep_prob: 1.0 - epsilon,
                cap: b.budget,
                second: b.second.clone(),
            },
        })
        .collect();
    Ok(LocallyAdaptivePolicy {
        epsilon: local.epsilon,
        blocks,
    })
}
