//! Seeding with small probabilities: the concave relaxation and its solver.
//!
//! A standalone problem here is a ground set of items, an upper bound p_i on
//! the seeding intensity of each item, and a real budget k on the total
//! intensity. Seeding at intensity q realizes item i with probability
//! 1 − e^{−q_i}, which makes the expected value of any weighted sum of
//! capacitated part ranks concave in q. The solver maximizes that relaxation
//! with Frank-Wolfe over the box-budget polytope, rounds with pipage moves
//! that never lose exact expected value, and resolves the one possibly
//! fractional item by a density comparison.
//!
//! The same machinery powers the combined block finder for instances that
//! mix large and small probabilities: large-probability subsets are
//! enumerated, the small-probability remainder is solved as a reduced
//! problem conditioned on the enumerated part.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::{count_distribution, expected_capped_count, Estimate};
use crate::functions::{merge_sorted, FlatPart, FunctionSpec, Objective, ValueOracle};
use crate::instance::{for_each_weighted_subset, Instance};
use crate::nonadaptive::BlockChoice;
use crate::policy::FractionalSecondStage;
use crate::Caps;

/// On-disk form of a standalone seeding problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SospProblemData {
    pub probabilities: BTreeMap<String, f64>,
    pub budget: f64,
    pub function: FunctionSpec,
}

/// A validated problem: items sorted by name, intensity bounds, budget.
#[derive(Debug, Clone)]
pub struct SospProblem {
    names: Vec<String>,
    probs: Vec<f64>,
    budget: f64,
    function: FunctionSpec,
}

impl SospProblem {
    pub fn from_data(data: SospProblemData) -> Result<Self> {
        let mut violations = Vec::new();
        if data.probabilities.is_empty() {
            violations.push("no items".to_string());
        }
        for (name, &p) in &data.probabilities {
            if !(p > 0.0 && p <= 1.0) {
                violations.push(format!("item {name} probability {p} outside (0, 1]"));
            }
        }
        if !(data.budget > 0.0 && data.budget.is_finite()) {
            violations.push(format!("budget {} is not positive", data.budget));
        }
        if !violations.is_empty() {
            return Err(Error::Input(violations.join("; ")));
        }
        let names: Vec<String> = data.probabilities.keys().cloned().collect();
        let probs: Vec<f64> = data.probabilities.values().copied().collect();
        Ok(SospProblem {
            names,
            probs,
            budget: data.budget,
            function: data.function,
        })
    }

    pub fn to_data(&self) -> SospProblemData {
        SospProblemData {
            probabilities: self
                .names
                .iter()
                .cloned()
                .zip(self.probs.iter().copied())
                .collect(),
            budget: self.budget,
            function: self.function.clone(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let data: SospProblemData = serde_json::from_str(s)
            .map_err(|e| Error::Input(format!("problem parse: {e}")))?;
        Self::from_data(data)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_data()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, i: u32) -> &str {
        &self.names[i as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Largest intensity bound; the guarantee degrades with it.
    pub fn delta(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    pub fn objective(&self) -> Result<Objective> {
        self.function.bind_ground(&self.names)
    }

    pub fn mrs_view(&self) -> Result<MrsView> {
        let f = self.objective()?;
        MrsView::from_objective(&f, self.n()).ok_or_else(|| {
            Error::Input("the concave relaxation needs a part-rank value function".into())
        })
    }
}

/// A value function in explicit part-rank form: Σ weight · min(capacity,
/// realized members). Supports exact expectations at independent marginals,
/// which is all the solver needs.
#[derive(Debug, Clone)]
pub struct MrsView {
    pub parts: Vec<FlatPart>,
    pub n: usize,
}

impl MrsView {
    pub fn from_objective(f: &Objective, n: usize) -> Option<Self> {
        f.flat_parts(n).map(|parts| MrsView { parts, n })
    }

    /// Exact expected value when member i realizes independently with
    /// probability pi[i].
    pub fn multilinear(&self, pi: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut buf: Vec<f64> = Vec::new();
        for part in &self.parts {
            buf.clear();
            buf.extend(part.members.iter().map(|&j| pi[j as usize]));
            total += part.weight * expected_capped_count(&buf, part.capacity);
        }
        total
    }

    /// Relaxation value: the multilinear at probabilities 1 − e^{−q}.
    pub fn relaxed(&self, q: &[f64]) -> f64 {
        let pi: Vec<f64> = q.iter().map(|&x| 1.0 - (-x).exp()).collect();
        self.multilinear(&pi)
    }

    /// Analytic gradient of [`relaxed`]: for item i in a part of capacity c,
    /// the part contributes weight · e^{−q_i} · Pr[other members realized
    /// ≤ c − 1]. Capacity-one parts collapse to weight · e^{−Σ q}.
    pub fn relaxed_gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for part in &self.parts {
            if part.capacity == 1 {
                let s: f64 = part.members.iter().map(|&j| q[j as usize]).sum();
                let c = part.weight * (-s).exp();
                for &j in &part.members {
                    g[j as usize] += c;
                }
                continue;
            }
            let pis: Vec<f64> = part
                .members
                .iter()
                .map(|&j| 1.0 - (-q[j as usize]).exp())
                .collect();
            let mut others: Vec<f64> = Vec::with_capacity(pis.len().saturating_sub(1));
            for (idx, &j) in part.members.iter().enumerate() {
                others.clear();
                others.extend(pis.iter().enumerate().filter(|&(i, _)| i != idx).map(|(_, &p)| p));
                let dist = count_distribution(&others, part.capacity);
                let below: f64 = dist[..part.capacity as usize].iter().sum();
                g[j as usize] += part.weight * (-q[j as usize]).exp() * below;
            }
        }
        g
    }

    /// Exact expected value of choosing the set `t`: members of `t` realize
    /// with their instance probabilities, everything else stays out.
    pub fn set_value(&self, t: &[u32], probs: &[f64]) -> f64 {
        let mut pi = vec![0.0; self.n];
        for &j in t {
            pi[j as usize] = probs[j as usize];
        }
        self.multilinear(&pi)
    }
}

fn check_feasible(problem: &SospProblem, q: &[f64]) -> Result<()> {
    if q.len() != problem.n() {
        return Err(Error::Input(format!(
            "intensity vector has {} entries for {} items",
            q.len(),
            problem.n()
        )));
    }
    let mut total = 0.0;
    for (i, &qi) in q.iter().enumerate() {
        if !(qi >= -1e-12 && qi <= problem.probs[i] + 1e-9) {
            return Err(Error::Input(format!(
                "intensity {} for item {} outside [0, {}]",
                qi, problem.names[i], problem.probs[i]
            )));
        }
        total += qi;
    }
    if total > problem.budget + 1e-9 {
        return Err(Error::Input(format!(
            "total intensity {total} exceeds budget {}",
            problem.budget
        )));
    }
    Ok(())
}

/// Relaxation value at a feasible intensity vector.
pub fn relaxed_objective(problem: &SospProblem, q: &[f64]) -> Result<f64> {
    check_feasible(problem, q)?;
    Ok(problem.mrs_view()?.relaxed(q))
}

/// Analytic gradient of the relaxation at a feasible intensity vector.
pub fn relaxed_gradient(problem: &SospProblem, q: &[f64]) -> Result<Vec<f64>> {
    check_feasible(problem, q)?;
    Ok(problem.mrs_view()?.relaxed_gradient(q))
}

/// Frank-Wolfe controls.
#[derive(Debug, Clone, Copy)]
pub struct FwOptions {
    /// Stop when the linearization gap falls to this.
    pub tol: f64,
    pub max_iters: u64,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            tol: 1e-6,
            max_iters: 10_000,
        }
    }
}

/// Solver output: the intensity vector, its relaxation value, and the
/// linearization gap certifying near-optimality.
#[derive(Debug, Clone)]
pub struct ConcaveSolution {
    pub q: FractionalSecondStage,
    pub objective: f64,
    pub certificate_gap: f64,
    pub iterations: u64,
    /// Objective after each ascent step, starting from the zero vector.
    pub trajectory: Vec<f64>,
}

/// Maximizes the concave relaxation over {0 ≤ q ≤ p, Σq ≤ k}.
pub fn solve_concave(problem: &SospProblem, opts: &FwOptions) -> Result<ConcaveSolution> {
    let view = problem.mrs_view()?;
    let (q, objective, gap, iterations, trajectory) =
        solve_concave_view(&view, &problem.probs, problem.budget, opts);
    Ok(ConcaveSolution {
        q: to_fractional(&q),
        objective,
        certificate_gap: gap,
        iterations,
        trajectory,
    })
}

/// Sparse form of an intensity vector (entries above 1e-15).
pub fn to_fractional(q: &[f64]) -> FractionalSecondStage {
    FractionalSecondStage {
        q: q.iter()
            .enumerate()
            .filter(|&(_, &v)| v > 1e-15)
            .map(|(i, &v)| (i as u32, v))
            .collect(),
    }
}

/// Dense form of a sparse intensity vector.
pub fn dense_q(fr: &FractionalSecondStage, n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n];
    for &(i, v) in &fr.q {
        q[i as usize] = v;
    }
    q
}

/// Frank-Wolfe on an explicit view. Each step moves toward the
/// budget-greedy vertex of the gradient and picks the step size by exact
/// line search (the objective is concave along the segment), so the
/// trajectory is non-decreasing by construction.
pub fn solve_concave_view(
    view: &MrsView,
    upper: &[f64],
    budget: f64,
    opts: &FwOptions,
) -> (Vec<f64>, f64, f64, u64, Vec<f64>) {
    let n = upper.len();
    let mut q = vec![0.0; n];
    let mut value = view.relaxed(&q);
    let mut trajectory = vec![value];
    let mut gap = 0.0;
    let mut iterations = 0u64;
    while iterations < opts.max_iters {
        let g = view.relaxed_gradient(&q);
        let s = lmo(&g, upper, budget);
        gap = g
            .iter()
            .zip(s.iter().zip(q.iter()))
            .map(|(gi, (si, qi))| gi * (si - qi))
            .sum();
        if gap <= opts.tol {
            break;
        }
        let d: Vec<f64> = s.iter().zip(q.iter()).map(|(si, qi)| si - qi).collect();
        let h = |gamma: f64| {
            let qt: Vec<f64> = q.iter().zip(d.iter()).map(|(qi, di)| qi + gamma * di).collect();
            view.relaxed(&qt)
        };
        let gstar = golden_max(&h);
        let mut best_gamma = 0.0;
        let mut best_val = value;
        for cand in [gstar, 1.0] {
            let v = h(cand);
            if v > best_val {
                best_gamma = cand;
                best_val = v;
            }
        }
        if best_gamma == 0.0 {
            // No representable ascent along this direction; the gap is
            // reported as the certificate.
            break;
        }
        for i in 0..n {
            q[i] = (q[i] + best_gamma * d[i]).clamp(0.0, upper[i]);
        }
        value = view.relaxed(&q);
        trajectory.push(value);
        iterations += 1;
    }
    (q, value, gap, iterations, trajectory)
}

/// Best feasible point of the linearization: fill coordinates by
/// descending gradient (ties to the lower index) until the budget or the
/// positive part of the gradient runs out.
fn lmo(g: &[f64], upper: &[f64], budget: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].partial_cmp(&g[a]).expect("finite gradient").then(a.cmp(&b)));
    let mut s = vec![0.0; g.len()];
    let mut remaining = budget;
    for &i in &order {
        if g[i] <= 0.0 || remaining <= 0.0 {
            break;
        }
        let take = upper[i].min(remaining);
        s[i] = take;
        remaining -= take;
    }
    s
}

/// Golden-section maximum of a concave function on [0, 1].
fn golden_max(h: &impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut ha = h(a);
    let mut hb = h(b);
    for _ in 0..64 {
        if ha >= hb {
            hi = b;
            b = a;
            hb = ha;
            a = hi - INV_PHI * (hi - lo);
            ha = h(a);
        } else {
            lo = a;
            a = b;
            ha = hb;
            b = lo + INV_PHI * (hi - lo);
            hb = h(b);
        }
    }
    0.5 * (lo + hi)
}

/// Pipage rounding against the exact expected value (the multilinear at
/// the intensities themselves): repeatedly pairs the two lowest-indexed
/// fractional coordinates and shifts mass to the better endpoint, which
/// never loses value because the multilinear is convex along e_i − e_j.
pub fn pipage_round(problem: &SospProblem, q: &[f64]) -> Result<Vec<f64>> {
    check_feasible(problem, q)?;
    let view = problem.mrs_view()?;
    Ok(pipage_round_view(&view, &problem.probs, q))
}

/// View-level pipage; see [`pipage_round`].
pub fn pipage_round_view(view: &MrsView, upper: &[f64], q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let snap = |v: f64, u: f64| {
        if v < 1e-12 {
            0.0
        } else if v > u - 1e-12 {
            u
        } else {
            v
        }
    };
    let mut q: Vec<f64> = q.iter().zip(upper.iter()).map(|(&v, &u)| snap(v, u)).collect();
    loop {
        let frac: Vec<usize> = (0..n).filter(|&i| q[i] > 0.0 && q[i] < upper[i]).collect();
        if frac.len() <= 1 {
            return q;
        }
        let (i, j) = (frac[0], frac[1]);
        let current = view.multilinear(&q);
        let raise = (upper[i] - q[i]).min(q[j]);
        let lower = q[i].min(upper[j] - q[j]);
        let mut qa = q.clone();
        qa[i] = snap(qa[i] + raise, upper[i]);
        qa[j] = snap(qa[j] - raise, upper[j]);
        let mut qb = q.clone();
        qb[i] = snap(qb[i] - lower, upper[i]);
        qb[j] = snap(qb[j] + lower, upper[j]);
        let va = view.multilinear(&qa);
        let vb = view.multilinear(&qb);
        let (next, val) = if va >= vb { (qa, va) } else { (qb, vb) };
        assert!(
            val >= current - 1e-9,
            "pipage step lost value: {current} -> {val}"
        );
        q = next;
    }
}

/// Solver output for the full pipeline.
#[derive(Debug, Clone)]
pub struct SospSolution {
    pub concave: ConcaveSolution,
    /// Intensities after rounding: at most one strictly inside its box.
    pub rounded_q: Vec<f64>,
    /// Item indices finally chosen.
    pub chosen: Vec<u32>,
    /// Exact expected value of the chosen set.
    pub value: f64,
    /// Probability mass of the chosen set.
    pub cost: f64,
}

/// Relax, round, and resolve the residual item. A residual that fits the
/// leftover budget is always included; when the budget admits only one of
/// the integral set and the bare item, the denser piece is kept.
pub fn sosp_solve(problem: &SospProblem, opts: &FwOptions) -> Result<SospSolution> {
    let view = problem.mrs_view()?;
    let concave = solve_concave(problem, opts)?;
    let q = dense_q(&concave.q, problem.n());
    let rounded = pipage_round_view(&view, &problem.probs, &q);
    let chosen = resolve_residual(&view, &problem.probs, problem.budget, &rounded);
    let value = view.set_value(&chosen, &problem.probs);
    let cost: f64 = chosen.iter().map(|&i| problem.probs[i as usize]).sum();
    Ok(SospSolution {
        concave,
        rounded_q: rounded,
        chosen,
        value,
        cost,
    })
}

/// Splits a rounded vector into the integral set and the residual item.
/// A fitting residual is included outright (the value function is
/// monotone, so inclusion is free). When set plus residual overshoot the
/// budget, whichever feasible piece has the higher density survives.
fn resolve_residual(view: &MrsView, probs: &[f64], budget: f64, rounded: &[f64]) -> Vec<u32> {
    let mut chosen: Vec<u32> = Vec::new();
    let mut residual: Option<u32> = None;
    for (i, &v) in rounded.iter().enumerate() {
        if v >= probs[i] {
            chosen.push(i as u32);
        } else if v > 0.0 {
            residual = Some(i as u32);
        }
    }
    let Some(item) = residual else {
        return chosen;
    };
    let cost: f64 = chosen.iter().map(|&i| probs[i as usize]).sum();
    let extra = probs[item as usize];
    if cost + extra <= budget + 1e-9 {
        chosen.push(item);
        chosen.sort_unstable();
        return chosen;
    }
    if chosen.is_empty() || extra > budget + 1e-9 {
        return chosen;
    }
    let d_set = view.set_value(&chosen, probs) / cost;
    let d_item = view.set_value(&[item], probs) / extra;
    if d_item > d_set + 1e-12 {
        vec![item]
    } else {
        chosen
    }
}

/// Exact optimum by scanning every set whose probability mass fits the
/// budget. Value via the part-rank closed form when available, otherwise
/// by enumerating realizations of the candidate (at most `enum_limit`
/// items).
pub fn sosp_bruteforce(problem: &SospProblem, caps: &Caps) -> Result<(Vec<u32>, f64)> {
    let f = problem.objective()?;
    let view = MrsView::from_objective(&f, problem.n());
    let mut best_set: Vec<u32> = Vec::new();
    let mut best_val = 0.0f64;
    let mut count: u64 = 0;
    let mut stack: Vec<u32> = Vec::new();
    sosp_dfs(
        problem,
        &f,
        view.as_ref(),
        0,
        0.0,
        &mut stack,
        &mut count,
        caps,
        &mut |t, v| {
            if v > best_val + 1e-15 {
                best_val = v;
                best_set = t.to_vec();
            }
        },
    )?;
    Ok((best_set, best_val))
}

#[allow(clippy::too_many_arguments)]
fn sosp_dfs(
    problem: &SospProblem,
    f: &Objective,
    view: Option<&MrsView>,
    from: usize,
    cost: f64,
    stack: &mut Vec<u32>,
    count: &mut u64,
    caps: &Caps,
    visit: &mut impl FnMut(&[u32], f64),
) -> Result<()> {
    *count += 1;
    if *count > caps.subset_cap {
        return Err(Error::CapExceeded {
            what: "feasible sets",
            needed: *count,
            cap: caps.subset_cap,
        });
    }
    let value = match view {
        Some(v) => v.set_value(stack, &problem.probs),
        None => {
            if stack.len() as u64 > caps.enum_limit {
                return Err(Error::CapExceeded {
                    what: "candidate realization enumeration",
                    needed: stack.len() as u64,
                    cap: caps.enum_limit,
                });
            }
            let mut total = 0.0;
            for_each_weighted_subset(&problem.probs, stack, &mut |sub, w| {
                total += w * f.value(sub);
            });
            total
        }
    };
    visit(stack, value);
    for i in from..problem.n() {
        let p = problem.probs[i];
        if cost + p > problem.budget + 1e-9 {
            continue;
        }
        stack.push(i as u32);
        sosp_dfs(problem, f, view, i + 1, cost + p, stack, count, caps, visit)?;
        stack.pop();
    }
    Ok(())
}

/// Block finder for mixed probabilities: per first-stage node, enumerate
/// the large-probability subsets (p ≥ ε/8) up to mass 8/ε, and for each,
/// solve the small-probability remainder as a reduced problem on a budget
/// grid with spacing ε/8. Returns the block of best exact marginal
/// density; block mass stays within 8/ε plus one small item.
pub fn mrs_block_finder(
    inst: &Instance,
    f: &Objective,
    current_second: &[u32],
    epsilon: f64,
    caps: &Caps,
) -> Result<Option<BlockChoice>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    let view = MrsView::from_objective(f, inst.n_ground()).ok_or_else(|| {
        Error::Input("the combined block finder needs a part-rank value function".into())
    })?;
    let sub = epsilon / 8.0; // probability threshold, grid step, mass cap
    let mass_cap = 1.0 / sub + 1e-9;
    let base_value = view.set_value(current_second, inst.probs());
    let opts = FwOptions::default();
    let mut best: Option<BlockChoice> = None;
    let mut candidates: u64 = 0;
    let tie = 1e-12;
    let mut consider = |x: u32, second: Vec<u32>, cost: f64, marginal: f64| {
        let density = marginal / cost;
        let better = match &best {
            None => true,
            Some(cur) => {
                density > cur.density + tie
                    || (density > cur.density - tie && cost < cur.cost - tie)
            }
        };
        if better {
            best = Some(BlockChoice {
                x,
                second,
                marginal: Estimate::exact(marginal),
                density,
                cost,
            });
        }
    };
    for x in 0..inst.n_x() as u32 {
        let fresh: Vec<u32> = inst
            .neighbors_of(x)
            .iter()
            .copied()
            .filter(|j| current_second.binary_search(j).is_err())
            .collect();
        let high: Vec<u32> = fresh.iter().copied().filter(|&j| inst.prob(j) >= sub).collect();
        let low: Vec<u32> = fresh.iter().copied().filter(|&j| inst.prob(j) < sub).collect();
        let low_upper: Vec<f64> = low.iter().map(|&j| inst.prob(j)).collect();
        let mut scan = |a: &[u32], a_mass: f64| -> Result<()> {
            let with_a = merge_sorted(current_second, a);
            if !a.is_empty() {
                candidates += 1;
                if candidates > caps.subset_cap {
                    return Err(Error::CapExceeded {
                        what: "block candidates",
                        needed: candidates,
                        cap: caps.subset_cap,
                    });
                }
                let marginal = view.set_value(&with_a, inst.probs()) - base_value;
                consider(x, a.to_vec(), 1.0 + a_mass, marginal);
            }
            if low.is_empty() {
                return Ok(());
            }
            let remaining = 1.0 / sub - a_mass;
            if remaining <= 1e-12 {
                return Ok(());
            }
            let grid = budget_grid(remaining, sub);
            candidates += grid.len() as u64;
            if candidates > caps.subset_cap {
                return Err(Error::CapExceeded {
                    what: "block candidates",
                    needed: candidates,
                    cap: caps.subset_cap,
                });
            }
            let reduced = reduced_view(&view, &with_a, inst.probs(), &low);
            let picks: Vec<Vec<u32>> = grid
                .par_iter()
                .map(|&b| {
                    let (q, ..) = solve_concave_view(&reduced, &low_upper, b, &opts);
                    let rounded = pipage_round_view(&reduced, &low_upper, &q);
                    resolve_residual(&reduced, &low_upper, b, &rounded)
                        .into_iter()
                        .map(|li| low[li as usize])
                        .collect()
                })
                .collect();
            for b_low in picks {
                if a.is_empty() && b_low.is_empty() {
                    continue;
                }
                let block = merge_sorted(a, &b_low);
                let full = merge_sorted(current_second, &block);
                let marginal = view.set_value(&full, inst.probs()) - base_value;
                let cost = 1.0 + a_mass + inst.cost_of_second(b_low.iter());
                consider(x, block, cost, marginal);
            }
            Ok(())
        };
        scan(&[], 0.0)?;
        let mut stack: Vec<u32> = Vec::new();
        crate::nonadaptive::enumerate_mass_bounded(
            inst,
            &high,
            0,
            0.0,
            mass_cap,
            &mut stack,
            &mut scan,
        )?;
    }
    Ok(best)
}

/// Grid {step, 2·step, …} up to the cap, always including the cap itself.
fn budget_grid(cap: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut b = step;
    while b <= cap + 1e-12 {
        grid.push(b.min(cap));
        b += step;
    }
    match grid.last() {
        Some(&last) if last >= cap - 1e-9 => {}
        _ => grid.push(cap),
    }
    grid
}

/// The marginal of a part-rank sum over `local_items`, conditioned on the
/// base set realizing at instance probabilities: each part expands into
/// one term per unsaturated base count d, with weight scaled by Pr[d] and
/// capacity reduced by d. Members are reindexed into the local ground.
fn reduced_view(view: &MrsView, base: &[u32], probs: &[f64], local_items: &[u32]) -> MrsView {
    let mut parts = Vec::new();
    for part in &view.parts {
        let members_local: Vec<u32> = part
            .members
            .iter()
            .filter_map(|j| local_items.binary_search(j).ok().map(|pos| pos as u32))
            .collect();
        if members_local.is_empty() {
            continue;
        }
        let base_probs: Vec<f64> = part
            .members
            .iter()
            .filter(|j| base.binary_search(j).is_ok())
            .map(|&j| probs[j as usize])
            .collect();
        let dist = count_distribution(&base_probs, part.capacity);
        for d in 0..part.capacity {
            let weight = part.weight * dist[d as usize];
            if weight > 1e-15 {
                parts.push(FlatPart {
                    weight,
                    capacity: part.capacity - d,
                    members: members_local.clone(),
                });
            }
        }
    }
    MrsView {
        parts,
        n: local_items.len(),
    }
}
