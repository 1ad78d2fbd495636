//! Policy classes and their JSON forms.
//!
//! Three serializable kinds: plain non-adaptive pairs (S, T), budgeted-block
//! policies whose blocks spend a real-valued budget on a fixed second-stage
//! set, and locally adaptive policies whose blocks choose per realization.
//! In-memory policies hold instance indices; the `*File` forms hold ids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, NbrSet, XSet};

/// Round a reciprocal bound like 1/eps^2 up to an integer, absorbing float
/// fuzz so that e.g. eps = 1/3 yields exactly 9.
pub fn ceil_bound(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as u64
    } else {
        v.ceil() as u64
    }
}

const COST_TOL: f64 = 1e-9;

/// First-stage set plus a fixed second-stage set chosen before realization.
/// Expected cost is |S| plus the summed probabilities of T.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NonAdaptivePolicy {
    pub first: XSet,
    pub second: NbrSet,
}

impl NonAdaptivePolicy {
    pub fn cost(&self, inst: &Instance) -> f64 {
        self.first.len() as f64 + inst.cost_of_second(&self.second)
    }

    pub fn second_sorted(&self) -> Vec<u32> {
        self.second.iter().copied().collect()
    }

    /// Violations against an instance. Budget feasibility is skipped when
    /// `waive_budget` is set (solvers with slack bounds use this).
    pub fn validate(&self, inst: &Instance, waive_budget: bool) -> Vec<String> {
        let mut v = Vec::new();
        for &x in &self.first {
            if x as usize >= inst.n_x() {
                v.push(format!("first-stage index {x} out of range"));
            }
        }
        let visible = inst.neighbors_of_set(self.first.iter().copied());
        for &j in &self.second {
            if j as usize >= inst.n_ground() {
                v.push(format!("second-stage index {j} out of range"));
            } else if visible.binary_search(&j).is_err() {
                v.push(format!(
                    "second-stage node {:?} is not a neighbor of the first stage",
                    inst.ground_name(j)
                ));
            }
        }
        if !waive_budget && self.cost(inst) > inst.budget() as f64 + COST_TOL {
            v.push(format!(
                "expected cost {} exceeds budget {}",
                self.cost(inst),
                inst.budget()
            ));
        }
        v
    }
}

/// One block of a budgeted-block policy: seed `first`, then spend up to
/// `budget` (expected cost) on the fixed set `second` as it realizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedBlock {
    pub first: XSet,
    pub budget: f64,
    pub second: NbrSet,
}

impl BudgetedBlock {
    pub fn cost(&self) -> f64 {
        self.first.len() as f64 + self.budget
    }
}

/// Blocks sized for a locality parameter epsilon: each block has at most
/// ceil(1/eps^2) first-stage nodes and budget in [1/eps, 2/eps].
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonLocalPolicy {
    pub epsilon: f64,
    pub blocks: Vec<BudgetedBlock>,
}

impl EpsilonLocalPolicy {
    pub fn cost(&self) -> f64 {
        self.blocks.iter().map(|b| b.cost()).sum()
    }

    pub fn second_union(&self) -> NbrSet {
        self.blocks.iter().flat_map(|b| b.second.iter().copied()).collect()
    }

    pub fn validate(&self, inst: &Instance, waive_budget: bool) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push(format!("epsilon {} outside (0, 1)", self.epsilon));
            return v;
        }
        let s_cap = ceil_bound(1.0 / (self.epsilon * self.epsilon));
        let lo = 1.0 / self.epsilon;
        let hi = 2.0 / self.epsilon;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.first.len() as u64 > s_cap {
                v.push(format!("block {i} has {} first-stage nodes, cap {s_cap}", b.first.len()));
            }
            if b.budget < lo - COST_TOL || b.budget > hi + COST_TOL {
                v.push(format!(
                    "block {i} budget {} outside [{lo}, {hi}]",
                    b.budget
                ));
            }
            let c = inst.cost_of_second(&b.second);
            if c > b.budget + COST_TOL {
                v.push(format!("block {i} second-stage cost {c} exceeds its budget {}", b.budget));
            }
            let visible = inst.neighbors_of_set(b.first.iter().copied());
            for &j in &b.second {
                if visible.binary_search(&j).is_err() {
                    v.push(format!(
                        "block {i} second-stage node {:?} is not adjacent to its first stage",
                        inst.ground_name(j)
                    ));
                }
            }
        }
        if !waive_budget && self.cost() > inst.budget() as f64 + COST_TOL {
            v.push(format!("policy cost {} exceeds budget {}", self.cost(), inst.budget()));
        }
        v
    }
}

/// How a locally adaptive block chooses its per-realization seeds.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMode {
    /// Exhaustive search over realized candidates (greedy above the
    /// per-realization cap).
    Exact,
    /// Marginal-gain greedy over realized candidates.
    Greedy,
    /// Keep each realized member of `second` independently with probability
    /// `keep_prob`; seed the kept set only if its size fits `cap`.
    Crs {
        keep_prob: f64,
        cap: f64,
        second: NbrSet,
    },
}

/// One locally adaptive block: seed `first`, observe its realized neighbors,
/// then seed at most `second_budget` of them according to `mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveBlockSpec {
    pub first: XSet,
    pub second_budget: u32,
    pub mode: BlockMode,
}

impl AdaptiveBlockSpec {
    pub fn cost(&self) -> f64 {
        self.first.len() as f64 + self.second_budget as f64
    }
}

/// Ordered locally adaptive blocks, executed one after another; later blocks
/// optimize given the seeds already placed.
#[derive(Debug, Clone, PartialEq)]
pub struct LocallyAdaptivePolicy {
    pub epsilon: f64,
    pub blocks: Vec<AdaptiveBlockSpec>,
}

impl LocallyAdaptivePolicy {
    pub fn cost(&self) -> f64 {
        self.blocks.iter().map(|b| b.cost()).sum()
    }

    /// Ground indices any block can see.
    pub fn visible_ground(&self, inst: &Instance) -> Vec<u32> {
        inst.neighbors_of_set(self.blocks.iter().flat_map(|b| b.first.iter().copied()))
    }

    pub fn has_randomized_blocks(&self) -> bool {
        self.blocks.iter().any(|b| matches!(b.mode, BlockMode::Crs { .. }))
    }

    pub fn validate(&self, inst: &Instance, waive_budget: bool) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            v.push(format!("epsilon {} outside (0, 1)", self.epsilon));
            return v;
        }
        let s_cap = ceil_bound(1.0 / (self.epsilon * self.epsilon));
        let t_cap = ceil_bound(2.0 / self.epsilon);
        for (i, b) in self.blocks.iter().enumerate() {
            if b.first.is_empty() {
                v.push(format!("block {i} has an empty first stage"));
            }
            if b.first.len() as u64 > s_cap {
                v.push(format!("block {i} has {} first-stage nodes, cap {s_cap}", b.first.len()));
            }
            if b.second_budget as u64 > t_cap {
                v.push(format!("block {i} budget {} exceeds cap {t_cap}", b.second_budget));
            }
            if let BlockMode::Crs { keep_prob, cap, second } = &b.mode {
                if !(*keep_prob > 0.0 && *keep_prob <= 1.0) {
                    v.push(format!("block {i} keep probability {keep_prob} outside (0, 1]"));
                }
                if *cap < 0.0 {
                    v.push(format!("block {i} has negative cap"));
                }
                let visible = inst.neighbors_of_set(b.first.iter().copied());
                for &j in second {
                    if visible.binary_search(&j).is_err() {
                        v.push(format!(
                            "block {i} thinning set contains {:?}, not adjacent to its first stage",
                            inst.ground_name(j)
                        ));
                    }
                }
            }
        }
        if !waive_budget && self.cost() > inst.budget() as f64 + COST_TOL {
            v.push(format!("policy cost {} exceeds budget {}", self.cost(), inst.budget()));
        }
        v
    }
}

/// Fractional second-stage marks: per neighbor, a mass in [0, p].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FractionalSecondStage {
    pub q: Vec<(u32, f64)>,
}

impl FractionalSecondStage {
    pub fn total(&self) -> f64 {
        self.q.iter().map(|&(_, v)| v).sum()
    }

    pub fn validate(&self, inst: &Instance, budget: f64) -> Vec<String> {
        let mut v = Vec::new();
        for &(j, q) in &self.q {
            let p = inst.prob(j);
            if !(0.0..=p + COST_TOL).contains(&q) {
                v.push(format!(
                    "mass {q} on {:?} outside [0, {p}]",
                    inst.ground_name(j)
                ));
            }
        }
        if self.total() > budget + COST_TOL {
            v.push(format!("total mass {} exceeds budget {budget}", self.total()));
        }
        v
    }
}

/// Any serializable policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    NonAdaptive(NonAdaptivePolicy),
    EpsLocal(EpsilonLocalPolicy),
    LocallyAdaptive(LocallyAdaptivePolicy),
}

impl Policy {
    pub fn cost(&self, inst: &Instance) -> f64 {
        match self {
            Policy::NonAdaptive(p) => p.cost(inst),
            Policy::EpsLocal(p) => p.cost(),
            Policy::LocallyAdaptive(p) => p.cost(),
        }
    }

    pub fn validate(&self, inst: &Instance, waive_budget: bool) -> Vec<String> {
        match self {
            Policy::NonAdaptive(p) => p.validate(inst, waive_budget),
            Policy::EpsLocal(p) => p.validate(inst, waive_budget),
            Policy::LocallyAdaptive(p) => p.validate(inst, waive_budget),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON forms

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PolicyFile {
    #[serde(rename = "nonadaptive")]
    NonAdaptive { first: Vec<String>, second: Vec<String> },
    #[serde(rename = "epslocal")]
    EpsLocal { epsilon: f64, blocks: Vec<BudgetedBlockFile> },
    #[serde(rename = "locallyadaptive")]
    LocallyAdaptive { epsilon: f64, blocks: Vec<AdaptiveBlockFile> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetedBlockFile {
    pub first: Vec<String>,
    pub budget: f64,
    pub second: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveBlockFile {
    pub first: Vec<String>,
    pub second_budget: u32,
    pub mode: BlockModeFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockModeFile {
    Exact,
    Greedy,
    Crs {
        keep_prob: f64,
        cap: f64,
        second: Vec<String>,
    },
}

fn x_ids(inst: &Instance, names: &[String]) -> Result<XSet> {
    names
        .iter()
        .map(|n| {
            inst.x_index(n)
                .ok_or_else(|| Error::Input(format!("unknown first-stage node {n:?}")))
        })
        .collect()
}

fn nbr_ids(inst: &Instance, names: &[String]) -> Result<NbrSet> {
    names
        .iter()
        .map(|n| {
            inst.ground_index(n)
                .ok_or_else(|| Error::Input(format!("unknown neighbor {n:?}")))
        })
        .collect()
}

fn x_names(inst: &Instance, set: &XSet) -> Vec<String> {
    set.iter().map(|&i| inst.x_name(i).to_string()).collect()
}

fn nbr_names(inst: &Instance, set: &NbrSet) -> Vec<String> {
    set.iter().map(|&j| inst.ground_name(j).to_string()).collect()
}

impl Policy {
    pub fn from_file(file: &PolicyFile, inst: &Instance) -> Result<Policy> {
        Ok(match file {
            PolicyFile::NonAdaptive { first, second } => Policy::NonAdaptive(NonAdaptivePolicy {
                first: x_ids(inst, first)?,
                second: nbr_ids(inst, second)?,
            }),
            PolicyFile::EpsLocal { epsilon, blocks } => Policy::EpsLocal(EpsilonLocalPolicy {
                epsilon: *epsilon,
                blocks: blocks
                    .iter()
                    .map(|b| {
                        Ok(BudgetedBlock {
                            first: x_ids(inst, &b.first)?,
                            budget: b.budget,
                            second: nbr_ids(inst, &b.second)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            }),
            PolicyFile::LocallyAdaptive { epsilon, blocks } => {
                Policy::LocallyAdaptive(LocallyAdaptivePolicy {
                    epsilon: *epsilon,
                    blocks: blocks
                        .iter()
                        .map(|b| {
                            Ok(AdaptiveBlockSpec {
                                first: x_ids(inst, &b.first)?,
                                second_budget: b.second_budget,
                                mode: match &b.mode {
                                    BlockModeFile::Exact => BlockMode::Exact,
                                    BlockModeFile::Greedy => BlockMode::Greedy,
                                    BlockModeFile::Crs { keep_prob, cap, second } => BlockMode::Crs {
                                        keep_prob: *keep_prob,
                                        cap: *cap,
                                        second: nbr_ids(inst, second)?,
                                    },
                                },
                            })
                        })
                        .collect::<Result<_>>()?,
                })
            }
        })
    }

    pub fn to_file(&self, inst: &Instance) -> PolicyFile {
        match self {
            Policy::NonAdaptive(p) => PolicyFile::NonAdaptive {
                first: x_names(inst, &p.first),
                second: nbr_names(inst, &p.second),
            },
            Policy::EpsLocal(p) => PolicyFile::EpsLocal {
                epsilon: p.epsilon,
                blocks: p
                    .blocks
                    .iter()
                    .map(|b| BudgetedBlockFile {
                        first: x_names(inst, &b.first),
                        budget: b.budget,
                        second: nbr_names(inst, &b.second),
                    })
                    .collect(),
            },
            Policy::LocallyAdaptive(p) => PolicyFile::LocallyAdaptive {
                epsilon: p.epsilon,
                blocks: p
                    .blocks
                    .iter()
                    .map(|b| AdaptiveBlockFile {
                        first: x_names(inst, &b.first),
                        second_budget: b.second_budget,
                        mode: match &b.mode {
                            BlockMode::Exact => BlockModeFile::Exact,
                            BlockMode::Greedy => BlockModeFile::Greedy,
                            BlockMode::Crs { keep_prob, cap, second } => BlockModeFile::Crs {
                                keep_prob: *keep_prob,
                                cap: *cap,
                                second: nbr_names(inst, second),
                            },
                        },
                    })
                    .collect(),
            },
        }
    }

    pub fn from_json(s: &str, inst: &Instance) -> Result<Policy> {
        let file: PolicyFile =
            serde_json::from_str(s).map_err(|e| Error::Input(format!("policy JSON: {e}")))?;
        Policy::from_file(&file, inst)
    }

    pub fn to_json(&self, inst: &Instance) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file(inst)).expect("serializable");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionSpec;
    use crate::instance::InstanceData;
    use std::collections::BTreeMap;

    fn two_star() -> Instance {
        let mut neighbors: BTreeMap<String, Vec<String>> = BTreeMap::new();
        neighbors.insert("x0".into(), vec!["a".into(), "b".into()]);
        neighbors.insert("x1".into(), vec!["c".into()]);
        Instance::from_data(InstanceData {
            x_nodes: vec!["x0".into(), "x1".into()],
            neighbors,
            probabilities: [("a".into(), 0.5), ("b".into(), 0.25), ("c".into(), 1.0)]
                .into_iter()
                .collect(),
            budget: 2,
            function: FunctionSpec::AnyNonempty,
        })
        .unwrap()
    }

    #[test]
    fn nonadaptive_cost_counts_expected_probability_mass() {
        let inst = two_star();
        let p = NonAdaptivePolicy {
            first: [0].into(),
            second: [inst.ground_index("a").unwrap(), inst.ground_index("b").unwrap()].into(),
        };
        assert!((p.cost(&inst) - 1.75).abs() < 1e-12);
        assert!(p.validate(&inst, false).is_empty());
    }

    #[test]
    fn second_stage_outside_neighborhood_is_flagged() {
        let inst = two_star();
        let p = NonAdaptivePolicy {
            first: [0].into(),
            second: [inst.ground_index("c").unwrap()].into(),
        };
        let v = p.validate(&inst, false);
        assert!(v.iter().any(|m| m.contains("\"c\"")), "{v:?}");
    }

    #[test]
    fn over_budget_is_flagged_unless_waived() {
        let inst = two_star();
        let p = NonAdaptivePolicy {
            first: [0, 1].into(),
            second: [inst.ground_index("c").unwrap()].into(),
        };
        assert!(!p.validate(&inst, false).is_empty());
        assert!(p.validate(&inst, true).is_empty());
    }

    #[test]
    fn locally_adaptive_cost_sums_blocks() {
        let p = LocallyAdaptivePolicy {
            epsilon: 0.5,
            blocks: vec![
                AdaptiveBlockSpec {
                    first: [0, 1].into(),
                    second_budget: 3,
                    mode: BlockMode::Exact,
                },
                AdaptiveBlockSpec {
                    first: [2].into(),
                    second_budget: 2,
                    mode: BlockMode::Greedy,
                },
            ],
        };
        assert_eq!(p.cost(), 8.0);
    }

    #[test]
    fn ceil_bound_absorbs_float_fuzz() {
        assert_eq!(ceil_bound(1.0 / (0.5 * 0.5)), 4);
        let third: f64 = 1.0 / 3.0;
        assert_eq!(ceil_bound(1.0 / (third * third)), 9);
        assert_eq!(ceil_bound(2.0 / 0.9), 3);
    }

    #[test]
    fn policy_json_round_trip() {
        let inst = two_star();
        let p = Policy::NonAdaptive(NonAdaptivePolicy {
            first: [0].into(),
            second: [0, 1].into(),
        });
        let json = p.to_json(&inst);
        assert!(json.contains("\"kind\": \"nonadaptive\""));
        let back = Policy::from_json(&json, &inst).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn epslocal_validation_checks_budget_window() {
        let inst = two_star();
        let p = EpsilonLocalPolicy {
            epsilon: 0.5,
            blocks: vec![BudgetedBlock {
                first: [0].into(),
                budget: 5.0, // above 2/eps = 4
                second: [0].into(),
            }],
        };
        let v = p.validate(&inst, true);
        assert!(v.iter().any(|m| m.contains("outside")), "{v:?}");
    }

    #[test]
    fn fractional_mass_bounds_are_checked() {
        let inst = two_star();
        let f = FractionalSecondStage { q: vec![(0, 0.6)] };
        let v = f.validate(&inst, 2.0);
        assert!(!v.is_empty());
        let ok = FractionalSecondStage { q: vec![(0, 0.5), (1, 0.25)] };
        assert!(ok.validate(&inst, 2.0).is_empty());
    }
}
