//! Exact and Monte Carlo evaluation of policies and executors.
//!
//! Exact paths either enumerate realizations of the relevant ground subset
//! or use the closed-form expectation available for sums of capacitated
//! part ranks. Monte Carlo paths run on per-sample substreams, chunked so
//! the reduction order is fixed regardless of thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{merge_sorted, Objective, ValueOracle};
use crate::instance::{for_each_weighted_subset, Instance, Realization, XSet};
use crate::locallyadaptive::{execute_policy, ExecOptions};
use crate::policy::LocallyAdaptivePolicy;
use crate::rng::SeedStream;
use crate::Caps;

/// A value estimate; `exact` marks enumeration or closed-form results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub exact: bool,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Estimate {
            mean,
            std_error: 0.0,
            samples: 0,
            exact: true,
        }
    }
}

/// Method for expectation computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMethod {
    /// Enumerate realizations of the relevant subset (error above the cap).
    ExactEnum,
    /// Closed-form expectation; only for part-rank sums (coverage, MRS,
    /// all-or-nothing).
    ClosedForm,
    /// Monte Carlo with the given sample count.
    MonteCarlo { samples: u64 },
    /// Closed form when available, else exact enumeration when under the
    /// cap, else Monte Carlo with the default sample count.
    Auto,
}

/// Default sample count for value estimates.
pub const DEFAULT_VALUE_SAMPLES: u64 = 10_000;
/// Default per-candidate sample count inside block searches.
pub const DEFAULT_SEARCH_SAMPLES: u64 = 1_000;

const MC_CHUNK: u64 = 256;

/// Deterministic parallel Monte Carlo mean: one substream per sample index,
/// fixed chunking, sequential combination of chunk sums.
pub fn mc_estimate<F>(samples: u64, stream: &SeedStream, domain: u64, body: F) -> Estimate
where
    F: Fn(u64, &mut ChaCha8Rng) -> f64 + Sync,
{
    let result = mc_try_estimate(samples, stream, domain, |i, rng| Ok(body(i, rng)));
    result.expect("infallible body")
}

/// As [`mc_estimate`] but the body may fail; the lowest-indexed error wins.
pub fn mc_try_estimate<F>(
    samples: u64,
    stream: &SeedStream,
    domain: u64,
    body: F,
) -> Result<Estimate>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let samples = samples.max(1);
    let n_chunks = samples.div_ceil(MC_CHUNK);
    let chunk_stats: Vec<Result<(f64, f64)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * MC_CHUNK;
            let hi = (lo + MC_CHUNK).min(samples);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in lo..hi {
                let mut rng = stream.substream(domain, i);
                let v = body(i, &mut rng)?;
                sum += v;
                sumsq += v * v;
            }
            Ok((sum, sumsq))
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for s in chunk_stats {
        let (a, b) = s?;
        sum += a;
        sumsq += b;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
        exact: false,
    })
}

/// Expected value of a fixed second-stage set under independent realization:
/// the mean of f(T ∩ R).
pub fn value_nonadaptive(
    inst: &Instance,
    f: &Objective,
    second: &[u32],
    method: EvalMethod,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Estimate> {
    match method {
        EvalMethod::ClosedForm => closed_form_value(inst, f, second).map(Estimate::exact),
        EvalMethod::ExactEnum => {
            if second.len() as u64 > caps.enum_limit {
                return Err(Error::CapExceeded {
                    what: "second-stage enumeration",
                    needed: second.len() as u64,
                    cap: caps.enum_limit,
                });
            }
            let mut total = 0.0;
            for_each_weighted_subset(inst.probs(), second, &mut |sub, w| {
                total += w * f.value(sub);
            });
            Ok(Estimate::exact(total))
        }
        EvalMethod::MonteCarlo { samples } => Ok(mc_estimate(samples, stream, 1, |_, rng| {
            let present: Vec<u32> = second
                .iter()
                .copied()
                .filter(|&j| rng.random::<f64>() < inst.prob(j))
                .collect();
            f.value(&present)
        })),
        EvalMethod::Auto => {
            if closed_form_value(inst, f, second).is_ok() {
                value_nonadaptive(inst, f, second, EvalMethod::ClosedForm, stream, caps)
            } else if second.len() as u64 <= caps.enum_limit {
                value_nonadaptive(inst, f, second, EvalMethod::ExactEnum, stream, caps)
            } else {
                value_nonadaptive(
                    inst,
                    f,
                    second,
                    EvalMethod::MonteCarlo {
                        samples: DEFAULT_VALUE_SAMPLES,
                    },
                    stream,
                    caps,
                )
            }
        }
    }
}

/// Closed-form expectation of f(T ∩ R) for part-rank sums: per part, the
/// expected capped count of realized members of T, by dynamic programming
/// over the count distribution (product form for capacity one).
fn closed_form_value(inst: &Instance, f: &Objective, second: &[u32]) -> Result<f64> {
    let parts = f.flat_parts(inst.n_ground()).ok_or_else(|| {
        Error::Input("closed-form evaluation needs a part-rank value function".into())
    })?;
    let mut total = 0.0;
    for part in &parts {
        let probs: Vec<f64> = part
            .members
            .iter()
            .filter(|j| second.binary_search(j).is_ok())
            .map(|&j| inst.prob(j))
            .collect();
        total += part.weight * expected_capped_count(&probs, part.capacity);
    }
    Ok(total)
}

/// E[min(cap, N)] where N counts independent successes with the given
/// probabilities.
pub fn expected_capped_count(probs: &[f64], cap: u32) -> f64 {
    if cap == 1 {
        return 1.0 - probs.iter().map(|&p| 1.0 - p).product::<f64>();
    }
    count_distribution(probs, cap)
        .iter()
        .enumerate()
        .map(|(c, pr)| c as f64 * pr)
        .sum()
}

/// Distribution of min(N, cap) for N a sum of independent Bernoullis:
/// entry c is Pr[min(N, cap) = c], the top entry absorbing the tail.
pub fn count_distribution(probs: &[f64], cap: u32) -> Vec<f64> {
    let cap = cap as usize;
    let mut dist = vec![0.0; cap + 1];
    dist[0] = 1.0;
    if cap == 0 {
        return dist;
    }
    for &p in probs {
        dist[cap] += dist[cap - 1] * p;
        for c in (1..cap).rev() {
            dist[c] = dist[c] * (1.0 - p) + dist[c - 1] * p;
        }
        dist[0] *= 1.0 - p;
    }
    dist
}

/// Exhaustive or greedy second-stage choice: maximize f(base ∪ T) over
/// T ⊆ candidates with |T| ≤ budget. Returns the chosen T and the value of
/// base ∪ T. Ties break toward smaller, lexicographically earlier sets.
pub fn second_stage_opt(
    f: &dyn ValueOracle,
    base: &[u32],
    candidates: &[u32],
    budget: u32,
    mode: OptMode,
    caps: &Caps,
) -> Result<(Vec<u32>, f64)> {
    let cands: Vec<u32> = candidates
        .iter()
        .copied()
        .filter(|j| base.binary_search(j).is_err())
        .collect();
    let budget = (budget as usize).min(cands.len());
    match mode {
        OptMode::Exact => {
            let count = subsets_up_to(cands.len() as u64, budget as u64);
            if count > caps.subset_cap {
                return Err(Error::CapExceeded {
                    what: "second-stage combinations",
                    needed: count,
                    cap: caps.subset_cap,
                });
            }
            let mut best_set = Vec::new();
            let mut best_val = f.value(base);
            // Ascending size, lexicographic within size: the first optimum
            // found is the smallest, earliest one.
            let mut combo = Vec::with_capacity(budget);
            for size in 1..=budget {
                combos(&cands, size, 0, &mut combo, &mut |t: &[u32]| {
                    let v = f.value(&merge_sorted(base, t));
                    if v > best_val + 1e-15 {
                        best_val = v;
                        best_set = t.to_vec();
                    }
                });
            }
            Ok((best_set, best_val))
        }
        OptMode::Greedy => {
            let mut chosen: Vec<u32> = Vec::new();
            let mut cur = base.to_vec();
            let mut cur_val = f.value(&cur);
            for _ in 0..budget {
                let mut best: Option<(f64, u32)> = None;
                for &j in &cands {
                    if chosen.contains(&j) {
                        continue;
                    }
                    let v = f.value(&merge_sorted(&cur, &[j]));
                    let gain = v - cur_val;
                    // Strict improvement keeps the lowest index on ties.
                    if best.map_or(true, |(g, _)| gain > g + 1e-15) {
                        best = Some((gain, j));
                    }
                }
                match best {
                    Some((gain, j)) if gain > 1e-15 => {
                        chosen.push(j);
                        cur = merge_sorted(&cur, &[j]);
                        cur_val += gain;
                    }
                    _ => break,
                }
            }
            chosen.sort_unstable();
            Ok((chosen, cur_val))
        }
    }
}

/// Per-realization second-stage optimization mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    Exact,
    Greedy,
}

/// Number of subsets of an n-set with size at most k, saturating.
pub fn subsets_up_to(n: u64, k: u64) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u64 = 1;
    for j in 0..=k.min(n) {
        if j > 0 {
            binom = match binom.checked_mul(n - j + 1) {
                Some(v) => v / j,
                None => return u64::MAX,
            };
        }
        total = total.saturating_add(binom);
    }
    total
}

fn combos<F: FnMut(&[u32])>(items: &[u32], size: usize, from: usize, cur: &mut Vec<u32>, f: &mut F) {
    if cur.len() == size {
        f(cur);
        return;
    }
    let need = size - cur.len();
    for i in from..=items.len().saturating_sub(need) {
        cur.push(items[i]);
        combos(items, size, i + 1, cur, f);
        cur.pop();
    }
}

/// Expected value of an ordered locally adaptive policy.
pub fn value_locally_adaptive(
    inst: &Instance,
    f: &Objective,
    policy: &LocallyAdaptivePolicy,
    method: EvalMethod,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Estimate> {
    let exec = ExecOptions::default();
    match method {
        EvalMethod::ClosedForm => Err(Error::Input(
            "locally adaptive policies have no closed-form value".into(),
        )),
        EvalMethod::ExactEnum => {
            if policy.has_randomized_blocks() {
                return Err(Error::Input(
                    "exact enumeration requires deterministic block modes; use Monte Carlo".into(),
                ));
            }
            let visible = policy.visible_ground(inst);
            if visible.len() as u64 > caps.enum_limit {
                return Err(Error::CapExceeded {
                    what: "visible-ground enumeration",
                    needed: visible.len() as u64,
                    cap: caps.enum_limit,
                });
            }
            let mut total = 0.0;
            let mut r = Realization::empty(inst.n_ground());
            let mut rng = stream.rng(); // never consumed by deterministic modes
            for_each_weighted_subset(inst.probs(), &visible, &mut |sub, w| {
                for &j in &visible {
                    r.set(j, false);
                }
                for &j in sub {
                    r.set(j, true);
                }
                let seeded = execute_policy(inst, f, policy, &r, &mut rng, &exec, caps);
                total += w * f.value(&seeded);
            });
            Ok(Estimate::exact(total))
        }
        EvalMethod::MonteCarlo { samples } => Ok(mc_estimate(samples, stream, 2, |_, rng| {
            let r = inst.sample_realization(rng);
            let seeded = execute_policy(inst, f, policy, &r, rng, &exec, caps);
            f.value(&seeded)
        })),
        EvalMethod::Auto => {
            let visible = policy.visible_ground(inst);
            if !policy.has_randomized_blocks() && visible.len() as u64 <= caps.enum_limit {
                value_locally_adaptive(inst, f, policy, EvalMethod::ExactEnum, stream, caps)
            } else {
                value_locally_adaptive(
                    inst,
                    f,
                    policy,
                    EvalMethod::MonteCarlo {
                        samples: DEFAULT_VALUE_SAMPLES,
                    },
                    stream,
                    caps,
                )
            }
        }
    }
}

/// An adaptive policy in executable form: a fixed first stage plus a
/// per-realization selection rule. Selections must depend only on the
/// realized neighbors of the first stage.
pub trait AdaptiveExecutor: Sync {
    fn first_stage(&self) -> &XSet;
    /// True when `select` ignores the generator.
    fn deterministic(&self) -> bool {
        false
    }
    /// Sorted seed set for this realization. Must fit the leftover budget.
    fn select(&self, inst: &Instance, r: &Realization, rng: &mut ChaCha8Rng) -> Vec<u32>;
}

/// Monte Carlo value of an adaptive executor. Fails hard if any sampled
/// realization makes the executor exceed the leftover budget.
pub fn value_adaptive_executor(
    inst: &Instance,
    f: &Objective,
    ex: &dyn AdaptiveExecutor,
    samples: u64,
    stream: &SeedStream,
) -> Result<Estimate> {
    let leftover = inst.budget().saturating_sub(ex.first_stage().len() as u64);
    mc_try_estimate(samples, stream, 3, |i, rng| {
        let r = inst.sample_realization(rng);
        let chosen = ex.select(inst, &r, rng);
        if chosen.len() as u64 > leftover {
            return Err(Error::Infeasible(format!(
                "executor seeded {} nodes with leftover budget {leftover} on sample {i} \
                 (realized: {:?})",
                chosen.len(),
                r.present_indices()
            )));
        }
        Ok(f.value(&chosen))
    })
}

/// Exact value of a deterministic executor by enumerating realizations of
/// the first stage's neighborhood.
pub fn value_adaptive_executor_exact(
    inst: &Instance,
    f: &Objective,
    ex: &dyn AdaptiveExecutor,
    caps: &Caps,
) -> Result<f64> {
    if !ex.deterministic() {
        return Err(Error::Input(
            "exact evaluation requires a deterministic executor".into(),
        ));
    }
    let visible = inst.neighbors_of_set(ex.first_stage().iter().copied());
    if visible.len() as u64 > caps.enum_limit {
        return Err(Error::CapExceeded {
            what: "executor enumeration",
            needed: visible.len() as u64,
            cap: caps.enum_limit,
        });
    }
    let leftover = inst.budget().saturating_sub(ex.first_stage().len() as u64);
    let mut rng = SeedStream::new(0).rng();
    let mut total = 0.0;
    let mut err = None;
    let mut r = Realization::empty(inst.n_ground());
    for_each_weighted_subset(inst.probs(), &visible, &mut |sub, w| {
        if err.is_some() {
            return;
        }
        for &j in &visible {
            r.set(j, false);
        }
        for &j in sub {
            r.set(j, true);
        }
        let chosen = ex.select(inst, &r, &mut rng);
        if chosen.len() as u64 > leftover {
            err = Some(Error::Infeasible(format!(
                "executor seeded {} nodes with leftover budget {leftover} on realization {:?}",
                chosen.len(),
                sub
            )));
            return;
        }
        total += w * f.value(&chosen);
    });
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}
