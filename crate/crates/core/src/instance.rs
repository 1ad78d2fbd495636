//! Two-stage seeding instances and neighbor realizations.
//!
//! An instance has a set `X` of first-stage nodes, a neighbor list per node,
//! an independent activation probability per neighbor, an integer budget, and
//! a value-oracle descriptor over the neighbor ground set. Seeding a subset
//! `S` of `X` in the first stage makes the realized neighbors of `S`
//! available for second-stage seeding with the leftover budget.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{FunctionSpec, Objective};
use crate::Caps;

/// Set of first-stage node indices.
pub type XSet = BTreeSet<u32>;
/// Set of neighbor (ground) indices.
pub type NbrSet = BTreeSet<u32>;

/// On-disk instance representation. Field names match the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub x_nodes: Vec<String>,
    pub neighbors: BTreeMap<String, Vec<String>>,
    pub probabilities: BTreeMap<String, f64>,
    pub budget: u64,
    pub function: FunctionSpec,
}

impl InstanceData {
    /// Collect every schema violation; an empty list means the data binds.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.budget < 1 {
            v.push("budget must be at least 1".into());
        }
        if self.x_nodes.is_empty() {
            v.push("x_nodes must be non-empty".into());
        }
        let mut xs = BTreeSet::new();
        for x in &self.x_nodes {
            if !xs.insert(x.clone()) {
                v.push(format!("duplicate first-stage node id {x:?}"));
            }
        }
        for x in self.neighbors.keys() {
            if !xs.contains(x) {
                v.push(format!("neighbors entry for unknown node {x:?}"));
            }
        }
        let mut ground = BTreeSet::new();
        for (x, list) in &self.neighbors {
            let mut seen = BTreeSet::new();
            for n in list {
                if !seen.insert(n) {
                    v.push(format!("node {x:?} lists neighbor {n:?} twice"));
                }
                ground.insert(n.clone());
            }
        }
        for n in &ground {
            if xs.contains(n) {
                v.push(format!("id {n:?} is both a first-stage node and a neighbor"));
            }
            match self.probabilities.get(n) {
                None => v.push(format!("neighbor {n:?} has no probability")),
                Some(&p) => {
                    if !(p > 0.0 && p <= 1.0) {
                        v.push(format!("neighbor {n:?} has probability {p} outside (0, 1]"));
                    }
                }
            }
        }
        for n in self.probabilities.keys() {
            if !ground.contains(n) {
                v.push(format!("probability given for unknown neighbor {n:?}"));
            }
        }
        v
    }
}

/// Validated instance with interned indices.
///
/// Neighbor (ground) indices follow lexicographic id order, so "lowest index"
/// tie-breaking coincides with "lowest id". First-stage indices follow the
/// order of `x_nodes` in the input.
#[derive(Debug, Clone)]
pub struct Instance {
    x_names: Vec<String>,
    ground: Vec<String>,
    probs: Vec<f64>,
    adjacency: Vec<Vec<u32>>,
    parents: Vec<Vec<u32>>,
    budget: u64,
    function: FunctionSpec,
}

impl Instance {
    pub fn from_data(data: InstanceData) -> Result<Self> {
        let violations = data.validate();
        if !violations.is_empty() {
            return Err(Error::Input(violations.join("; ")));
        }
        let mut ground: Vec<String> = data
            .neighbors
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        ground.sort();
        let index: BTreeMap<&str, u32> = ground
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let probs: Vec<f64> = ground.iter().map(|n| data.probabilities[n]).collect();
        let adjacency: Vec<Vec<u32>> = data
            .x_nodes
            .iter()
            .map(|x| {
                let mut l: Vec<u32> = data
                    .neighbors
                    .get(x)
                    .map(|ns| ns.iter().map(|n| index[n.as_str()]).collect())
                    .unwrap_or_default();
                l.sort_unstable();
                l
            })
            .collect();
        let mut parents = vec![Vec::new(); ground.len()];
        for (xi, l) in adjacency.iter().enumerate() {
            for &j in l {
                parents[j as usize].push(xi as u32);
            }
        }
        Ok(Instance {
            x_names: data.x_nodes,
            ground,
            probs,
            adjacency,
            parents,
            budget: data.budget,
            function: data.function,
        })
    }

    /// Reconstruct the on-disk form. Neighbor lists keep any product-form
    /// ordering from the original input only up to lexicographic order, which
    /// is also how generators emit them.
    pub fn to_data(&self) -> InstanceData {
        InstanceData {
            x_nodes: self.x_names.clone(),
            neighbors: self
                .x_names
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    (
                        x.clone(),
                        self.adjacency[i]
                            .iter()
                            .map(|&j| self.ground[j as usize].clone())
                            .collect(),
                    )
                })
                .collect(),
            probabilities: self
                .ground
                .iter()
                .zip(&self.probs)
                .map(|(n, &p)| (n.clone(), p))
                .collect(),
            budget: self.budget,
            function: self.function.clone(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let data: InstanceData =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("instance JSON: {e}")))?;
        Self::from_data(data)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_data()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn n_x(&self) -> usize {
        self.x_names.len()
    }

    pub fn n_ground(&self) -> usize {
        self.ground.len()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn prob(&self, j: u32) -> f64 {
        self.probs[j as usize]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn x_name(&self, i: u32) -> &str {
        &self.x_names[i as usize]
    }

    pub fn ground_name(&self, j: u32) -> &str {
        &self.ground[j as usize]
    }

    pub fn x_index(&self, name: &str) -> Option<u32> {
        self.x_names.iter().position(|x| x == name).map(|i| i as u32)
    }

    pub fn ground_index(&self, name: &str) -> Option<u32> {
        self.ground.binary_search_by(|g| g.as_str().cmp(name)).ok().map(|i| i as u32)
    }

    pub fn neighbors_of(&self, x: u32) -> &[u32] {
        &self.adjacency[x as usize]
    }

    /// Sorted union of neighbor lists over a set of first-stage nodes.
    pub fn neighbors_of_set<I: IntoIterator<Item = u32>>(&self, s: I) -> Vec<u32> {
        let mut out: Vec<u32> = s
            .into_iter()
            .flat_map(|x| self.adjacency[x as usize].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// First-stage nodes adjacent to neighbor `j`, ascending.
    pub fn parents_of(&self, j: u32) -> &[u32] {
        &self.parents[j as usize]
    }

    pub fn function(&self) -> &FunctionSpec {
        &self.function
    }

    /// Bind the function descriptor to this instance's ground set.
    pub fn objective(&self) -> Result<Objective> {
        self.function.bind(self)
    }

    /// Expected second-stage cost of a set: the sum of its probabilities.
    pub fn cost_of_second<'a, I: IntoIterator<Item = &'a u32>>(&self, t: I) -> f64 {
        t.into_iter().map(|&j| self.probs[j as usize]).sum()
    }

    pub fn sample_realization(&self, rng: &mut ChaCha8Rng) -> Realization {
        let mut r = Realization::empty(self.ground.len());
        self.sample_realization_into(rng, &mut r);
        r
    }

    /// Draw one coin per ground index in ascending order. The fixed draw
    /// order keeps common-random-number comparisons aligned.
    pub fn sample_realization_into(&self, rng: &mut ChaCha8Rng, r: &mut Realization) {
        debug_assert_eq!(r.present.len(), self.ground.len());
        for (j, &p) in self.probs.iter().enumerate() {
            r.present[j] = rng.random::<f64>() < p;
        }
    }

    /// Iterate all realizations of `subset` (other neighbors absent), with
    /// probabilities. Probabilities over the iterator sum to one.
    pub fn enumerate_realizations<'a>(
        &'a self,
        subset: &'a [u32],
        caps: &Caps,
    ) -> Result<RealizationEnum<'a>> {
        if subset.len() as u64 > caps.enum_limit {
            return Err(Error::CapExceeded {
                what: "realization enumeration ground",
                needed: subset.len() as u64,
                cap: caps.enum_limit,
            });
        }
        Ok(RealizationEnum {
            inst: self,
            subset,
            next: 0,
            end: 1u64 << subset.len(),
        })
    }
}

/// One realization of the neighbor ground set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    present: Vec<bool>,
}

impl Realization {
    pub fn empty(n_ground: usize) -> Self {
        Realization {
            present: vec![false; n_ground],
        }
    }

    pub fn contains(&self, j: u32) -> bool {
        self.present[j as usize]
    }

    pub fn set(&mut self, j: u32, present: bool) {
        self.present[j as usize] = present;
    }

    pub fn present_indices(&self) -> Vec<u32> {
        self.present
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j as u32))
            .collect()
    }

    /// Members of a sorted index slice that are present, preserving order.
    pub fn filter_sorted(&self, items: &[u32]) -> Vec<u32> {
        items.iter().copied().filter(|&j| self.contains(j)).collect()
    }
}

/// Iterator over the realizations of a fixed neighbor subset.
pub struct RealizationEnum<'a> {
    inst: &'a Instance,
    subset: &'a [u32],
    next: u64,
    end: u64,
}

impl<'a> Iterator for RealizationEnum<'a> {
    type Item = (Realization, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let mask = self.next;
        self.next += 1;
        let mut r = Realization::empty(self.inst.n_ground());
        let mut p = 1.0;
        for (b, &j) in self.subset.iter().enumerate() {
            let pj = self.inst.prob(j);
            if mask >> b & 1 == 1 {
                r.set(j, true);
                p *= pj;
            } else {
                p *= 1.0 - pj;
            }
        }
        Some((r, p))
    }
}

/// Visit every subset of `items` (sorted indices) with its product weight:
/// included items contribute `p`, excluded ones `1 - p`. The callback gets
/// the subset as a sorted slice. Lighter than materializing realizations.
pub fn for_each_weighted_subset<F: FnMut(&[u32], f64)>(probs: &[f64], items: &[u32], f: &mut F) {
    fn rec<F: FnMut(&[u32], f64)>(
        probs: &[f64],
        items: &[u32],
        pos: usize,
        cur: &mut Vec<u32>,
        w: f64,
        f: &mut F,
    ) {
        if pos == items.len() {
            f(cur, w);
            return;
        }
        let j = items[pos];
        let p = probs[j as usize];
        rec(probs, items, pos + 1, cur, w * (1.0 - p), f);
        cur.push(j);
        rec(probs, items, pos + 1, cur, w * p, f);
        cur.pop();
    }
    rec(probs, items, 0, &mut Vec::with_capacity(items.len()), 1.0, f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn star_data() -> InstanceData {
        InstanceData {
            x_nodes: vec!["x0".into()],
            neighbors: [("x0".into(), vec!["n0".into(), "n1".into(), "n2".into()])]
                .into_iter()
                .collect(),
            probabilities: [("n0".into(), 0.5), ("n1".into(), 0.25), ("n2".into(), 1.0)]
                .into_iter()
                .collect(),
            budget: 2,
            function: FunctionSpec::AnyNonempty,
        }
    }

    #[test]
    fn valid_star_binds() {
        let inst = Instance::from_data(star_data()).unwrap();
        assert_eq!(inst.n_x(), 1);
        assert_eq!(inst.n_ground(), 3);
        assert_eq!(inst.neighbors_of(0), &[0, 1, 2]);
        assert_eq!(inst.ground_name(0), "n0");
        assert_eq!(inst.parents_of(2), &[0]);
    }

    #[test]
    fn zero_probability_is_flagged_by_name() {
        let mut d = star_data();
        d.probabilities.insert("n1".into(), 0.0);
        let v = d.validate();
        assert!(v.iter().any(|m| m.contains("n1") && m.contains("(0, 1]")), "{v:?}");
    }

    #[test]
    fn unknown_and_missing_ids_are_flagged() {
        let mut d = star_data();
        d.probabilities.remove("n2");
        d.probabilities.insert("stray".into(), 0.5);
        d.neighbors.insert("ghost".into(), vec![]);
        let v = d.validate();
        assert!(v.iter().any(|m| m.contains("n2") && m.contains("no probability")));
        assert!(v.iter().any(|m| m.contains("stray")));
        assert!(v.iter().any(|m| m.contains("ghost")));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let inst = Instance::from_data(star_data()).unwrap();
        let j1 = inst.to_json();
        let j2 = Instance::from_json(&j1).unwrap().to_json();
        assert_eq!(j1, j2);
    }

    #[test]
    fn enumeration_probabilities_sum_to_one() {
        let inst = Instance::from_data(star_data()).unwrap();
        let subset: Vec<u32> = vec![0, 1, 2];
        let total: f64 = inst
            .enumerate_realizations(&subset, &Caps::default())
            .unwrap()
            .map(|(_, p)| p)
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_respects_cap() {
        let inst = Instance::from_data(star_data()).unwrap();
        let caps = Caps {
            enum_limit: 2,
            ..Caps::default()
        };
        let subset: Vec<u32> = vec![0, 1, 2];
        assert!(matches!(
            inst.enumerate_realizations(&subset, &caps),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let inst = Instance::from_data(star_data()).unwrap();
        let s = SeedStream::new(9);
        let a = inst.sample_realization(&mut s.substream(0, 3));
        let b = inst.sample_realization(&mut s.substream(0, 3));
        assert_eq!(a, b);
        // p = 1 neighbors always realize
        assert!(a.contains(2));
    }

    #[test]
    fn weighted_subsets_cover_the_cube() {
        let inst = Instance::from_data(star_data()).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for_each_weighted_subset(inst.probs(), &[0, 1], &mut |_, w| {
            total += w;
            count += 1;
        });
        assert_eq!(count, 4);
        assert!((total - 1.0).abs() < 1e-12);
    }
}
