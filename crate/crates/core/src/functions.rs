//! Monotone submodular value oracles over the neighbor ground set.
//!
//! Five families are supported: weighted coverage, weighted sums of
//! partition-matroid ranks (MRS), the all-or-nothing indicator, an
//! edge-witness function over a graph on the ground set, and the structured
//! product-form function used by the locally adaptive gap instances.
//! All evaluations run through [`Objective`], which counts oracle queries.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;

/// Anything that can score a sorted set of ground indices.
pub trait ValueOracle: Sync {
    /// `set` must be strictly ascending.
    fn value(&self, set: &[u32]) -> f64;
}

/// Serializable descriptor of a value function. Ids refer to neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    Coverage {
        universe: BTreeMap<String, f64>,
        covers: BTreeMap<String, Vec<String>>,
    },
    Mrs {
        terms: Vec<MrsTermSpec>,
    },
    AnyNonempty,
    EdgeWitness {
        edges: Vec<(String, String)>,
    },
    ProductGap {
        m: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrsTermSpec {
    pub weight: f64,
    pub parts: Vec<MrsPartSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrsPartSpec {
    pub capacity: u32,
    pub members: Vec<String>,
}

impl FunctionSpec {
    /// Resolve ids against an instance's ground set.
    pub fn bind(&self, inst: &Instance) -> Result<Objective> {
        self.bind_names(&|name| inst.ground_index(name), inst.n_ground(), Some(inst))
    }

    /// Resolve ids against an arbitrary ordered ground set (used by
    /// standalone stochastic-selection problems that have no instance).
    pub fn bind_ground(&self, ground: &[String]) -> Result<Objective> {
        let lookup = |name: &str| {
            ground
                .binary_search_by(|g| g.as_str().cmp(name))
                .ok()
                .map(|i| i as u32)
        };
        self.bind_names(&lookup, ground.len(), None)
    }

    fn bind_names(
        &self,
        lookup: &dyn Fn(&str) -> Option<u32>,
        n_ground: usize,
        inst: Option<&Instance>,
    ) -> Result<Objective> {
        let resolve = |name: &str| {
            lookup(name).ok_or_else(|| Error::Input(format!("function references unknown id {name:?}")))
        };
        let kind = match self {
            FunctionSpec::Coverage { universe, covers } => {
                let elems: Vec<&String> = universe.keys().collect();
                let weights: Vec<f64> = universe.values().copied().collect();
                for (_, w) in universe {
                    if !(*w >= 0.0) {
                        return Err(Error::Input("coverage weights must be non-negative".into()));
                    }
                }
                let elem_idx: BTreeMap<&str, u32> = elems
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (e.as_str(), i as u32))
                    .collect();
                let mut per_item = vec![Vec::new(); n_ground];
                for (item, elist) in covers {
                    let j = resolve(item)?;
                    for e in elist {
                        let ei = *elem_idx
                            .get(e.as_str())
                            .ok_or_else(|| Error::Input(format!("covers references unknown element {e:?}")))?;
                        per_item[j as usize].push(ei);
                    }
                    per_item[j as usize].sort_unstable();
                    per_item[j as usize].dedup();
                }
                ObjKind::Coverage(Coverage {
                    weights,
                    covers: per_item,
                })
            }
            FunctionSpec::Mrs { terms } => {
                let mut flat = Vec::new();
                for t in terms {
                    if !(t.weight >= 0.0) {
                        return Err(Error::Input("mrs weights must be non-negative".into()));
                    }
                    let mut seen = vec![false; n_ground];
                    for p in &t.parts {
                        if p.capacity == 0 {
                            return Err(Error::Input("mrs part capacity must be positive".into()));
                        }
                        let mut members = Vec::with_capacity(p.members.len());
                        for m in &p.members {
                            let j = resolve(m)?;
                            if seen[j as usize] {
                                return Err(Error::Input(format!(
                                    "mrs term has overlapping parts at {m:?}"
                                )));
                            }
                            seen[j as usize] = true;
                            members.push(j);
                        }
                        members.sort_unstable();
                        flat.push(FlatPart {
                            weight: t.weight,
                            capacity: p.capacity,
                            members,
                        });
                    }
                }
                let mut memberships = vec![Vec::new(); n_ground];
                for (pi, part) in flat.iter().enumerate() {
                    for &j in &part.members {
                        memberships[j as usize].push(pi as u32);
                    }
                }
                ObjKind::Mrs(Mrs {
                    parts: flat,
                    memberships,
                })
            }
            FunctionSpec::AnyNonempty => ObjKind::AnyNonempty,
            FunctionSpec::EdgeWitness { edges } => {
                let mut adj = vec![Vec::new(); n_ground];
                for (u, v) in edges {
                    let ui = resolve(u)?;
                    let vi = resolve(v)?;
                    if ui == vi {
                        return Err(Error::Input(format!("edge_witness has self-loop at {u:?}")));
                    }
                    adj[ui as usize].push(vi);
                    adj[vi as usize].push(ui);
                }
                for l in &mut adj {
                    l.sort_unstable();
                    l.dedup();
                }
                ObjKind::EdgeWitness(EdgeWitness { adj })
            }
            FunctionSpec::ProductGap { m } => {
                let inst = inst.ok_or_else(|| {
                    Error::Input("product_gap requires an instance for its group structure".into())
                })?;
                let m = *m;
                if m == 0 {
                    return Err(Error::Input("product_gap m must be positive".into()));
                }
                if inst.n_x() as u32 != m {
                    return Err(Error::Input(format!(
                        "product_gap m = {m} but instance has {} first-stage nodes",
                        inst.n_x()
                    )));
                }
                // Per first-stage node, the lexicographically first neighbor
                // is its special node; the remaining m^2 are its regulars.
                let mut role = vec![Role::None; n_ground];
                for x in 0..inst.n_x() as u32 {
                    let l = inst.neighbors_of(x);
                    if l.len() as u64 != (m as u64) * (m as u64) + 1 {
                        return Err(Error::Input(format!(
                            "product_gap node {:?} needs m^2 + 1 = {} neighbors, has {}",
                            inst.x_name(x),
                            (m as u64) * (m as u64) + 1,
                            l.len()
                        )));
                    }
                    role[l[0] as usize] = Role::Special(x);
                    for &j in &l[1..] {
                        if role[j as usize] != Role::None {
                            return Err(Error::Input(
                                "product_gap groups must not share neighbors".into(),
                            ));
                        }
                        role[j as usize] = Role::Regular(x);
                    }
                }
                ObjKind::ProductGap(ProductGap {
                    m,
                    n_x: inst.n_x(),
                    role,
                })
            }
        };
        Ok(Objective {
            kind,
            queries: AtomicU64::new(0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    None,
    Special(u32),
    Regular(u32),
}

#[derive(Debug)]
struct Coverage {
    weights: Vec<f64>,
    covers: Vec<Vec<u32>>,
}

impl Coverage {
    fn value(&self, set: &[u32]) -> f64 {
        let words = self.weights.len().div_ceil(64);
        let mut mark = vec![0u64; words];
        let mut total = 0.0;
        for &j in set {
            for &e in &self.covers[j as usize] {
                let (w, b) = (e as usize / 64, e as usize % 64);
                if mark[w] >> b & 1 == 0 {
                    mark[w] |= 1 << b;
                    total += self.weights[e as usize];
                }
            }
        }
        total
    }
}

/// One (weight, capacity, members) triple of a rank sum. Parts originating
/// from the same term share its weight; parts within a term are disjoint.
#[derive(Debug, Clone)]
pub struct FlatPart {
    pub weight: f64,
    pub capacity: u32,
    pub members: Vec<u32>,
}

#[derive(Debug)]
struct Mrs {
    parts: Vec<FlatPart>,
    memberships: Vec<Vec<u32>>,
}

impl Mrs {
    fn value(&self, set: &[u32]) -> f64 {
        let mut counts = vec![0u32; self.parts.len()];
        let mut touched = Vec::new();
        for &j in set {
            for &pi in &self.memberships[j as usize] {
                if counts[pi as usize] == 0 {
                    touched.push(pi);
                }
                counts[pi as usize] += 1;
            }
        }
        touched
            .iter()
            .map(|&pi| {
                let part = &self.parts[pi as usize];
                part.weight * counts[pi as usize].min(part.capacity) as f64
            })
            .sum()
    }
}

#[derive(Debug)]
struct EdgeWitness {
    adj: Vec<Vec<u32>>,
}

impl EdgeWitness {
    fn value(&self, set: &[u32]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        for &v in set {
            // Two-pointer intersection of sorted adj[v] with sorted set.
            let adj = &self.adj[v as usize];
            let (mut a, mut b) = (0usize, 0usize);
            while a < adj.len() && b < set.len() {
                match adj[a].cmp(&set[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => return 1.0,
                }
            }
        }
        1.0 - (-(set.len() as f64)).exp2()
    }
}

#[derive(Debug)]
struct ProductGap {
    m: u32,
    n_x: usize,
    role: Vec<Role>,
}

impl ProductGap {
    fn value(&self, set: &[u32]) -> f64 {
        let m2 = (self.m as f64) * (self.m as f64);
        let mut special = vec![false; self.n_x];
        let mut regulars = vec![0u32; self.n_x];
        for &j in set {
            match self.role[j as usize] {
                Role::Special(x) => special[x as usize] = true,
                Role::Regular(x) => regulars[x as usize] += 1,
                Role::None => {}
            }
        }
        let mut prod = 1.0;
        for x in 0..self.n_x {
            let inner = 0.5 * f64::from(special[x]) + regulars[x] as f64 / (2.0 * m2);
            prod *= 1.0 - inner;
        }
        1.0 - prod
    }
}

#[derive(Debug)]
enum ObjKind {
    Coverage(Coverage),
    Mrs(Mrs),
    AnyNonempty,
    EdgeWitness(EdgeWitness),
    ProductGap(ProductGap),
}

/// A bound value oracle with query instrumentation.
pub struct Objective {
    kind: ObjKind,
    queries: AtomicU64,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("queries", &self.queries())
            .finish_non_exhaustive()
    }
}

impl Objective {
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Marginal gain of adding `extra` (sorted, disjoint from `base`).
    pub fn marginal(&self, base: &[u32], extra: &[u32]) -> f64 {
        self.value(&merge_sorted(base, extra)) - self.value(base)
    }

    /// Flatten to weighted capacitated parts when the function is a sum of
    /// partition ranks (coverage, MRS, or the all-or-nothing indicator).
    pub fn flat_parts(&self, n_ground: usize) -> Option<Vec<FlatPart>> {
        match &self.kind {
            ObjKind::Coverage(c) => {
                let mut per_elem = vec![Vec::new(); c.weights.len()];
                for (j, elems) in c.covers.iter().enumerate() {
                    for &e in elems {
                        per_elem[e as usize].push(j as u32);
                    }
                }
                Some(
                    c.weights
                        .iter()
                        .zip(per_elem)
                        .map(|(&w, members)| FlatPart {
                            weight: w,
                            capacity: 1,
                            members,
                        })
                        .collect(),
                )
            }
            ObjKind::Mrs(m) => Some(m.parts.clone()),
            ObjKind::AnyNonempty => Some(vec![FlatPart {
                weight: 1.0,
                capacity: 1,
                members: (0..n_ground as u32).collect(),
            }]),
            _ => None,
        }
    }
}

impl ValueOracle for Objective {
    fn value(&self, set: &[u32]) -> f64 {
        debug_assert!(set.windows(2).all(|w| w[0] < w[1]), "set must be sorted");
        self.queries.fetch_add(1, Ordering::Relaxed);
        match &self.kind {
            ObjKind::Coverage(c) => c.value(set),
            ObjKind::Mrs(m) => m.value(set),
            ObjKind::AnyNonempty => {
                if set.is_empty() {
                    0.0
                } else {
                    1.0
                }
            }
            ObjKind::EdgeWitness(e) => e.value(set),
            ObjKind::ProductGap(p) => p.value(set),
        }
    }
}

/// Merge two sorted index slices, deduplicating.
pub fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(&x), Some(&y)) if x > y => {
                j += 1;
                y
            }
            (Some(&x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Result of sampling-based oracle sanity checks.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub trials: u64,
    pub zero_ok: bool,
    pub monotone_violations: u64,
    pub submodular_violations: u64,
    pub max_violation: f64,
    pub examples: Vec<String>,
}

impl OracleCheck {
    pub fn ok(&self) -> bool {
        self.zero_ok && self.monotone_violations == 0 && self.submodular_violations == 0
    }
}

const CHECK_TOL: f64 = 1e-9;

/// Spot-check normalization, monotonicity, and diminishing returns on random
/// chains S ⊆ T and elements a ∉ T.
pub fn check_oracle(
    f: &dyn ValueOracle,
    n_ground: usize,
    trials: u64,
    rng: &mut ChaCha8Rng,
) -> OracleCheck {
    let mut report = OracleCheck {
        trials,
        zero_ok: f.value(&[]).abs() <= CHECK_TOL,
        monotone_violations: 0,
        submodular_violations: 0,
        max_violation: 0.0,
        examples: Vec::new(),
    };
    if n_ground == 0 {
        return report;
    }
    let note = |examples: &mut Vec<String>, msg: String| {
        if examples.len() < 10 {
            examples.push(msg);
        }
    };
    for _ in 0..trials {
        let mut t: Vec<u32> = Vec::new();
        let mut s: Vec<u32> = Vec::new();
        for j in 0..n_ground as u32 {
            if rng.random::<f64>() < 0.5 {
                t.push(j);
                if rng.random::<f64>() < 0.5 {
                    s.push(j);
                }
            }
        }
        let outside: Vec<u32> = (0..n_ground as u32).filter(|j| !t.contains(j)).collect();
        let fs = f.value(&s);
        let ft = f.value(&t);
        if fs > ft + CHECK_TOL {
            report.monotone_violations += 1;
            report.max_violation = report.max_violation.max(fs - ft);
            note(
                &mut report.examples,
                format!("monotonicity: f(S) = {fs} > f(T) = {ft} for S ⊆ T"),
            );
        }
        if let Some(&a) = outside.first() {
            let gain_s = f.value(&merge_sorted(&s, &[a])) - fs;
            let gain_t = f.value(&merge_sorted(&t, &[a])) - ft;
            if gain_t > gain_s + CHECK_TOL {
                report.submodular_violations += 1;
                report.max_violation = report.max_violation.max(gain_t - gain_s);
                note(
                    &mut report.examples,
                    format!("diminishing returns: gain at T = {gain_t} > gain at S = {gain_s}"),
                );
            }
        }
    }
    report
}
