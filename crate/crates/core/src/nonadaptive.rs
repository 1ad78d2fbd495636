//! Non-adaptive greedy over density-optimal blocks.
//!
//! The solver grows a pair (S, T): seed nodes S paid at unit cost and a
//! target set T inside their neighborhoods paid at probability mass. Each
//! step adds the block (x, B) of highest marginal value per unit of cost,
//! where B stays within a per-block mass budget of 1/epsilon. A policy
//! built this way can be executed adaptively through [`crs_adapt`], which
//! thins the realized targets to restore budget feasibility.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{mc_estimate, value_nonadaptive, AdaptiveExecutor, Estimate, EvalMethod};
use crate::functions::{merge_sorted, Objective, ValueOracle};
use crate::instance::{Instance, Realization, XSet};
use crate::policy::NonAdaptivePolicy;
use crate::rng::SeedStream;
use crate::trace::GreedyTrace;
use crate::Caps;

/// Marginal estimation method inside block searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchEval {
    /// Closed form when available, otherwise realization enumeration.
    Exact,
    /// Common-random-number sampling; the winning block is re-estimated
    /// on fresh substreams at four times the sample count.
    MonteCarlo { samples: u64 },
}

/// A candidate block and its scores.
#[derive(Debug, Clone)]
pub struct BlockChoice {
    pub x: u32,
    pub second: Vec<u32>,
    pub marginal: Estimate,
    pub density: f64,
    pub cost: f64,
}

const SEARCH_DOMAIN: u64 = 0x4e41;
const CONFIRM_DOMAIN: u64 = 0x4e42;
const TIE_TOL: f64 = 1e-12;

/// Exact expectation of f(T ∩ R): closed form if the function supports it,
/// otherwise realization enumeration (capped).
pub(crate) fn exact_f(inst: &Instance, f: &Objective, t: &[u32], caps: &Caps) -> Result<f64> {
    let dummy = SeedStream::new(0);
    match value_nonadaptive(inst, f, t, EvalMethod::ClosedForm, &dummy, caps) {
        Ok(e) => Ok(e.mean),
        Err(Error::Input(_)) => {
            value_nonadaptive(inst, f, t, EvalMethod::ExactEnum, &dummy, caps).map(|e| e.mean)
        }
        Err(e) => Err(e),
    }
}

/// MC estimate of F(T ∪ B) − F(T). One realization per sample index drawn
/// over the whole ground set, so estimates are coupled across candidates.
fn mc_marginal(
    inst: &Instance,
    f: &Objective,
    t: &[u32],
    with_b: &[u32],
    samples: u64,
    stream: &SeedStream,
    domain: u64,
) -> Estimate {
    mc_estimate(samples, stream, domain, |_, rng| {
        let r = inst.sample_realization(rng);
        f.value(&r.filter_sorted(with_b)) - f.value(&r.filter_sorted(t))
    })
}

/// Finds the best block (x, B): B ⊆ N(x) ∖ T, C(B) ≤ 1/epsilon, maximizing
/// marginal density F_T(B) / (1 + C(B)). Ties prefer cheaper blocks, then
/// the earliest in (x, lexicographic B) order. Returns None when no node
/// offers a non-empty candidate.
pub fn find_block_enum(
    inst: &Instance,
    f: &Objective,
    current_second: &[u32],
    epsilon: f64,
    eval: SearchEval,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Option<BlockChoice>> {
    let mass_cap = 1.0 / epsilon + 1e-9;
    let base_value = match eval {
        SearchEval::Exact => exact_f(inst, f, current_second, caps)?,
        SearchEval::MonteCarlo { .. } => 0.0, // marginals are sampled directly
    };
    let mut best: Option<BlockChoice> = None;
    let mut candidates: u64 = 0;
    for x in 0..inst.n_x() as u32 {
        let pool: Vec<u32> = inst
            .neighbors_of(x)
            .iter()
            .copied()
            .filter(|j| current_second.binary_search(j).is_err())
            .collect();
        let mut stack: Vec<u32> = Vec::new();
        enumerate_mass_bounded(inst, &pool, 0, 0.0, mass_cap, &mut stack, &mut |b, mass| {
            candidates += 1;
            if candidates > caps.subset_cap {
                return Err(Error::CapExceeded {
                    what: "block candidates",
                    needed: candidates,
                    cap: caps.subset_cap,
                });
            }
            let union = merge_sorted(current_second, b);
            let marginal = match eval {
                SearchEval::Exact => {
                    Estimate::exact(exact_f(inst, f, &union, caps)? - base_value)
                }
                SearchEval::MonteCarlo { samples } => mc_marginal(
                    inst,
                    f,
                    current_second,
                    &union,
                    samples,
                    stream,
                    SEARCH_DOMAIN,
                ),
            };
            let cost = 1.0 + mass;
            let density = marginal.mean / cost;
            let better = match &best {
                None => true,
                Some(cur) => {
                    density > cur.density + TIE_TOL
                        || (density > cur.density - TIE_TOL && cost < cur.cost - TIE_TOL)
                }
            };
            if better {
                best = Some(BlockChoice {
                    x,
                    second: b.to_vec(),
                    marginal,
                    density,
                    cost,
                });
            }
            Ok(())
        })?;
    }
    if let (Some(choice), SearchEval::MonteCarlo { samples }) = (&mut best, eval) {
        let union = merge_sorted(current_second, &choice.second);
        choice.marginal = mc_marginal(
            inst,
            f,
            current_second,
            &union,
            samples * 4,
            stream,
            CONFIRM_DOMAIN,
        );
        choice.density = choice.marginal.mean / choice.cost;
    }
    Ok(best)
}

/// Non-empty subsets of `pool` (ascending index order) with probability
/// mass at most `cap`.
pub(crate) fn enumerate_mass_bounded(
    inst: &Instance,
    pool: &[u32],
    from: usize,
    mass: f64,
    cap: f64,
    stack: &mut Vec<u32>,
    visit: &mut impl FnMut(&[u32], f64) -> Result<()>,
) -> Result<()> {
    for i in from..pool.len() {
        let j = pool[i];
        let m = mass + inst.prob(j);
        if m > cap {
            continue;
        }
        stack.push(j);
        visit(stack, m)?;
        enumerate_mass_bounded(inst, pool, i + 1, m, cap, stack, visit)?;
        stack.pop();
    }
    Ok(())
}

/// Density greedy for the non-adaptive pair (S, T). Blocks are added while
/// |S| + C(T) ≤ k − 3/epsilon, which leaves room for the final block and
/// for the adaptive execution slack. Requires k > 3/epsilon; smaller
/// budgets should be solved exactly instead.
pub fn nonadaptive_greedy(
    inst: &Instance,
    f: &Objective,
    epsilon: f64,
    eval: SearchEval,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<(NonAdaptivePolicy, GreedyTrace)> {
    let exact_value = matches!(eval, SearchEval::Exact);
    nonadaptive_greedy_with(inst, f, epsilon, exact_value, caps, |second| {
        find_block_enum(inst, f, second, epsilon, eval, stream, caps)
    })
}

/// The greedy loop with a caller-supplied block finder. The finder sees the
/// current second stage and returns the next block (or None to stop). With
/// `exact_value` the trace re-evaluates F(T) exactly after every block;
/// otherwise it accumulates the finder's marginal estimates.
pub fn nonadaptive_greedy_with<F>(
    inst: &Instance,
    f: &Objective,
    epsilon: f64,
    exact_value: bool,
    caps: &Caps,
    mut finder: F,
) -> Result<(NonAdaptivePolicy, GreedyTrace)>
where
    F: FnMut(&[u32]) -> Result<Option<BlockChoice>>,
{
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    let k = inst.budget() as f64;
    let threshold = k - 3.0 / epsilon;
    if threshold <= 0.0 {
        return Err(Error::Input(format!(
            "budget {k} is not above 3/epsilon = {}; run the exact small-budget \
             solver instead",
            3.0 / epsilon
        )));
    }
    let mut first = XSet::new();
    let mut second: Vec<u32> = Vec::new();
    let mut trace = GreedyTrace::default();
    let mut value = 0.0;
    loop {
        let cost = first.len() as f64 + inst.cost_of_second(second.iter());
        if cost > threshold + 1e-9 {
            break;
        }
        let Some(choice) = finder(&second)? else {
            break;
        };
        if choice.marginal.mean <= TIE_TOL {
            // Submodularity: no later state can make a block worthwhile.
            break;
        }
        first.insert(choice.x);
        second = merge_sorted(&second, &choice.second);
        value = if exact_value {
            exact_f(inst, f, &second, caps)?
        } else {
            value + choice.marginal.mean
        };
        let mut label = inst.x_name(choice.x).to_string();
        for &j in &choice.second {
            label.push(';');
            label.push_str(inst.ground_name(j));
        }
        let new_cost = first.len() as f64 + inst.cost_of_second(second.iter());
        trace.push(label, choice.density, new_cost, value);
    }
    Ok((
        NonAdaptivePolicy {
            first,
            second: second.into_iter().collect(),
        },
        trace,
    ))
}

/// Exact solver for budgets the greedy loop refuses (k at or below the
/// 3/epsilon reserve): delegates to the brute-force adaptive oracle, which
/// refuses instances beyond its enumeration limits.
pub fn small_k_fallback<'a>(
    inst: &Instance,
    f: &'a Objective,
    caps: &Caps,
) -> Result<(crate::oracle::OracleExecutor<'a>, f64)> {
    crate::oracle::optimal_executor(inst, f, caps)
}

/// Adaptive execution of a non-adaptive policy. Each realized target
/// survives an independent coin with probability 1 − epsilon; the surviving
/// set is seeded only when it fits the leftover budget, otherwise nothing
/// is seeded.
pub struct CrsExecutor {
    first: XSet,
    second: Vec<u32>,
    keep: f64,
    xi: u64,
}

impl CrsExecutor {
    pub fn keep_prob(&self) -> f64 {
        self.keep
    }

    pub fn capacity(&self) -> u64 {
        self.xi
    }

    pub fn second(&self) -> &[u32] {
        &self.second
    }
}

impl AdaptiveExecutor for CrsExecutor {
    fn first_stage(&self) -> &XSet {
        &self.first
    }

    fn select(&self, _inst: &Instance, r: &Realization, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::new();
        for &j in &self.second {
            if r.contains(j) && rng.random::<f64>() < self.keep {
                kept.push(j);
            }
        }
        if kept.len() as u64 <= self.xi {
            kept
        } else {
            Vec::new()
        }
    }
}

/// Wraps a non-adaptive policy in the thinning executor. Requires
/// epsilon in (0, 1/2) so the (1 - 2 epsilon) factor stays positive.
/// The proof of that factor additionally wants epsilon below 1/5 and a
/// leftover budget well above 1/epsilon^4; outside that regime the
/// executor stays feasible, so both conditions only draw a warning.
pub fn crs_adapt(inst: &Instance, policy: &NonAdaptivePolicy, epsilon: f64) -> Result<CrsExecutor> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Input(format!(
            "thinning rate must be in (0, 1/2), got {epsilon}"
        )));
    }
    if epsilon >= 0.2 {
        log::warn!(
            "thinning rate {epsilon} is at or above 1/5; the (1 - 2 epsilon) \
             guarantee is heuristic in this range"
        );
    }
    let issues = policy.validate(inst, true);
    if !issues.is_empty() {
        return Err(Error::Input(issues.join("; ")));
    }
    let xi = inst.budget().saturating_sub(policy.first.len() as u64);
    if (xi as f64) <= epsilon.powi(-4) {
        log::warn!(
            "leftover budget {xi} is not above epsilon^-4 = {:.1}; the thinning \
             guarantee does not apply",
            epsilon.powi(-4)
        );
    }
    Ok(CrsExecutor {
        first: policy.first.clone(),
        second: policy.second_sorted(),
        keep: 1.0 - epsilon,
        xi,
    })
}

/// Removes ceil(c) first-stage nodes of least value. A node's contribution
/// is the drop in F(T) from deleting the targets only it reaches; each
/// round removes the smallest contributor (lowest index on ties) together
/// with its orphaned targets.
pub fn trim_first_stage(
    inst: &Instance,
    f: &Objective,
    policy: &NonAdaptivePolicy,
    c: f64,
    caps: &Caps,
) -> Result<(NonAdaptivePolicy, f64)> {
    let rounds = crate::policy::ceil_bound(c);
    if rounds >= policy.first.len() as u64 {
        return Err(Error::Input(format!(
            "cannot trim {rounds} of {} first-stage nodes",
            policy.first.len()
        )));
    }
    let mut first = policy.first.clone();
    let mut second = policy.second_sorted();
    for _ in 0..rounds {
        let full = exact_f(inst, f, &second, caps)?;
        let mut choice: Option<(f64, u32, Vec<u32>)> = None;
        for &x in &first {
            let orphaned: Vec<u32> = second
                .iter()
                .copied()
                .filter(|&j| {
                    inst.parents_of(j)
                        .iter()
                        .all(|&p| p == x || !first.contains(&p))
                })
                .collect();
            let remaining: Vec<u32> = second
                .iter()
                .copied()
                .filter(|j| orphaned.binary_search(j).is_err())
                .collect();
            let contribution = full - exact_f(inst, f, &remaining, caps)?;
            let better = match &choice {
                None => true,
                Some((best, _, _)) => contribution < best - TIE_TOL,
            };
            if better {
                choice = Some((contribution, x, remaining));
            }
        }
        let (_, x, remaining) = choice.expect("first stage is non-empty");
        first.remove(&x);
        second = remaining;
    }
    let value = exact_f(inst, f, &second, caps)?;
    Ok((
        NonAdaptivePolicy {
            first,
            second: second.into_iter().collect(),
        },
        value,
    ))
}
