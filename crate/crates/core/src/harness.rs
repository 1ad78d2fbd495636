//! Reference constructions and generators: the two gap families with their
//! closed-form values, the edge-witness hardness problems, and seeded random
//! instances for experiments.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{FunctionSpec, MrsPartSpec, MrsTermSpec};
use crate::instance::{Instance, InstanceData};
use crate::policy::ceil_bound;
use crate::rng::SeedStream;
use crate::sosp::SospProblemData;

const HARDNESS_DOMAIN: u64 = 0x4857;
const RANDOM_DOMAIN: u64 = 0x4852;
const SOSP_RANDOM_DOMAIN: u64 = 0x4853;

/// Closed-form reference values for one gap instance: the adaptive optimum
/// against the value the weaker policy class is limited to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReference {
    pub family: String,
    pub parameter: f64,
    pub adaptive_value: f64,
    pub comparison_value: f64,
    /// comparison_value / adaptive_value.
    pub ratio: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Input(format!(
            "gap parameter delta must be in (0, 1], got {delta}"
        )));
    }
    Ok(())
}

/// Adaptive vs non-adaptive reference for the single-star family: one
/// first-stage node, ceil(1/delta^2) neighbors that each realize with
/// probability delta, budget 2, and the any-nonempty objective. Adapting
/// hits any realized neighbor; a fixed second stage can afford only
/// floor(1/delta) of them. The ratio approaches 1 - 1/e as delta shrinks.
pub fn gap_na_reference(delta: f64) -> Result<GapReference> {
    check_delta(delta)?;
    let n = ceil_bound(1.0 / (delta * delta));
    let adaptive_value = 1.0 - (1.0 - delta).powf(n as f64);
    let t = (1.0 / delta + 1e-9).floor();
    let comparison_value = 1.0 - (1.0 - delta).powf(t);
    Ok(GapReference {
        family: "na-gap".to_string(),
        parameter: delta,
        adaptive_value,
        comparison_value,
        ratio: comparison_value / adaptive_value,
    })
}

/// The instance behind [`gap_na_reference`].
pub fn gen_gap_na(delta: f64) -> Result<Instance> {
    check_delta(delta)?;
    let n = ceil_bound(1.0 / (delta * delta));
    if n > 1_000_000 {
        return Err(Error::Input(format!(
            "gap instance needs {n} neighbors; refusing above 1000000"
        )));
    }
    let names: Vec<String> = (0..n).map(|i| format!("n{i:06}")).collect();
    let mut neighbors = BTreeMap::new();
    neighbors.insert("x0".to_string(), names.clone());
    Instance::from_data(InstanceData {
        x_nodes: vec!["x0".to_string()],
        neighbors,
        probabilities: names.into_iter().map(|name| (name, delta)).collect(),
        budget: 2,
        function: FunctionSpec::AnyNonempty,
    })
}

fn check_gap_m(m: u32) -> Result<()> {
    if m < 2 {
        return Err(Error::Input(format!(
            "the locality gap family needs m >= 2, got {m}"
        )));
    }
    Ok(())
}

/// Adaptive vs locally adaptive reference for the product family with m
/// groups. Both values are exact binomial forms whose m -> infinity limits
/// are 1 - 1/(2e) and 1 - e^{-1/2}/2. The adaptive value is what the
/// construction's strategy earns (seed the realized special's group, or one
/// group of regulars when no special shows); at finite m the true optimum
/// is a whisker higher because the leftover pick still buys a regular
/// elsewhere, and the excess vanishes as m grows. The comparison value is
/// the limiting bound for locally adaptive play, reported as a reference
/// rather than as an achieved policy value.
pub fn gap_la_reference(m: u32) -> Result<GapReference> {
    check_gap_m(m)?;
    let mf = f64::from(m);
    let adaptive_value = 1.0 - 0.5 * (1.0 - 1.0 / mf).powi(m as i32);
    let comparison_value = 1.0 - 0.5 * (1.0 - 1.0 / (2.0 * mf)).powi(m as i32);
    Ok(GapReference {
        family: "la-gap".to_string(),
        parameter: mf,
        adaptive_value,
        comparison_value,
        ratio: comparison_value / adaptive_value,
    })
}

/// The instance behind [`gap_la_reference`]: m first-stage nodes, each with
/// one special neighbor at probability 1/m followed by m^2 sure regulars,
/// budget m^2 + m + 1, and the product objective.
pub fn gen_gap_la(m: u32) -> Result<Instance> {
    check_gap_m(m)?;
    if m > 100 {
        return Err(Error::Input(format!(
            "the locality gap instance has m^3 + m neighbors; refusing m = {m} above 100"
        )));
    }
    let mut neighbors = BTreeMap::new();
    let mut probabilities = BTreeMap::new();
    for g in 0..m {
        let special = format!("y{g:03}");
        let mut list = vec![special.clone()];
        probabilities.insert(special, 1.0 / f64::from(m));
        for r in 0..m * m {
            let name = format!("z{g:03}_{r:04}");
            probabilities.insert(name.clone(), 1.0);
            list.push(name);
        }
        neighbors.insert(format!("x{g:03}"), list);
    }
    Instance::from_data(InstanceData {
        x_nodes: (0..m).map(|g| format!("x{g:03}")).collect(),
        neighbors,
        probabilities,
        budget: u64::from(m) * u64::from(m) + u64::from(m) + 1,
        function: FunctionSpec::ProductGap { m },
    })
}

/// Graph shape for the hardness construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HardnessMode {
    /// Complete graph on the l vertices.
    Clique,
    /// Each edge present independently with the given probability.
    Sparse { edge_prob: f64 },
}

/// Stochastic-selection problem from the hardness construction: l vertices
/// with uniform probability k/l, the edge-witness objective, and fractional
/// budget k, so bidding everything spends the budget exactly.
pub fn gen_hardness(
    l: u32,
    k: f64,
    mode: HardnessMode,
    stream: &SeedStream,
) -> Result<SospProblemData> {
    if l < 2 {
        return Err(Error::Input(format!("hardness needs l >= 2, got {l}")));
    }
    if !(k > 0.0 && k <= f64::from(l)) {
        return Err(Error::Input(format!(
            "hardness budget must be in (0, l]; got k = {k} with l = {l}"
        )));
    }
    if let HardnessMode::Sparse { edge_prob } = mode {
        if !(0.0..=1.0).contains(&edge_prob) {
            return Err(Error::Input(format!(
                "edge probability must be in [0, 1], got {edge_prob}"
            )));
        }
    }
    let names: Vec<String> = (0..l).map(|i| format!("v{i:03}")).collect();
    let mut rng = stream.substream(HARDNESS_DOMAIN, 0);
    let mut edges = Vec::new();
    for u in 0..l as usize {
        for v in u + 1..l as usize {
            let keep = match mode {
                HardnessMode::Clique => true,
                HardnessMode::Sparse { edge_prob } => rng.random::<f64>() < edge_prob,
            };
            if keep {
                edges.push((names[u].clone(), names[v].clone()));
            }
        }
    }
    let p = k / f64::from(l);
    Ok(SospProblemData {
        probabilities: names.into_iter().map(|name| (name, p)).collect(),
        budget: k,
        function: FunctionSpec::EdgeWitness { edges },
    })
}

/// Exact expected clique value when every vertex is bid its full
/// probability: the witness pays 1 unless the realized set has zero or one
/// vertices, so the value is 1 - P[|T| = 1]/2 - P[|T| = 0] with
/// |T| ~ Binomial(l, k/l).
pub fn hardness_clique_value(l: u32, k: f64) -> f64 {
    let p = k / f64::from(l);
    let none = (1.0 - p).powi(l as i32);
    let one = f64::from(l) * p * (1.0 - p).powi(l as i32 - 1);
    1.0 - 0.5 * one - none
}

/// Function family for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionFamily {
    Coverage,
    AnyNonempty,
    Mrs,
    EdgeWitness,
}

/// Seeded random bipartite instance: nx first-stage nodes each adjacent to
/// deg distinct neighbors from a shared pool (so neighborhoods overlap),
/// i.i.d. probabilities in [p_low, p_high], budget nx + deg, and a random
/// function of the requested family. Identical streams give identical
/// instances.
pub fn gen_random(
    nx: u32,
    deg: u32,
    p_low: f64,
    p_high: f64,
    family: FunctionFamily,
    stream: &SeedStream,
) -> Result<Instance> {
    if nx < 1 || deg < 1 {
        return Err(Error::Input(format!(
            "random instances need nx >= 1 and deg >= 1, got nx = {nx}, deg = {deg}"
        )));
    }
    if !(0.0 < p_low && p_low <= p_high && p_high <= 1.0) {
        return Err(Error::Input(format!(
            "probability range must satisfy 0 < low <= high <= 1, got [{p_low}, {p_high}]"
        )));
    }
    let pool = ((nx as usize * deg as usize) * 2 / 3).max(deg as usize);
    if pool > 100_000 {
        return Err(Error::Input(format!(
            "random instance pool of {pool} neighbors is beyond the generator's cap"
        )));
    }
    let mut rng = stream.substream(RANDOM_DOMAIN, 0);
    // Draw order is fixed: neighborhoods in x order, then probabilities over
    // the used names in sorted order, then the function.
    let mut neighbors: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut used = std::collections::BTreeSet::new();
    for x in 0..nx {
        let picks = rand::seq::index::sample(&mut rng, pool, deg as usize);
        let mut list: Vec<String> = picks.iter().map(|i| format!("n{i:05}")).collect();
        list.sort_unstable();
        for name in &list {
            used.insert(name.clone());
        }
        neighbors.insert(format!("x{x:03}"), list);
    }
    let mut probabilities = BTreeMap::new();
    for name in &used {
        let p = p_low + rng.random::<f64>() * (p_high - p_low);
        probabilities.insert(name.clone(), p.min(p_high));
    }
    let names: Vec<String> = used.into_iter().collect();
    let function = random_function(&names, family, &mut rng);
    Instance::from_data(InstanceData {
        x_nodes: (0..nx).map(|x| format!("x{x:03}")).collect(),
        neighbors,
        probabilities,
        budget: u64::from(nx) + u64::from(deg),
        function,
    })
}

fn random_function(
    names: &[String],
    family: FunctionFamily,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> FunctionSpec {
    match family {
        FunctionFamily::AnyNonempty => FunctionSpec::AnyNonempty,
        FunctionFamily::Coverage => {
            let mut universe = BTreeMap::new();
            let mut covers: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for name in names {
                universe.insert(format!("w_{name}"), 0.5 + rng.random::<f64>());
                covers.insert(name.clone(), vec![format!("w_{name}")]);
            }
            // A second random item per neighbor makes the covers overlap.
            for name in names {
                if rng.random::<f64>() < 0.5 {
                    let other = &names[rng.random_range(0..names.len())];
                    let item = format!("w_{other}");
                    let list = covers.get_mut(name).expect("cover entry exists");
                    if !list.contains(&item) {
                        list.push(item);
                    }
                }
            }
            FunctionSpec::Coverage { universe, covers }
        }
        FunctionFamily::Mrs => FunctionSpec::Mrs {
            terms: mrs_random_terms(names, rng),
        },
        FunctionFamily::EdgeWitness => {
            let mut edges = Vec::new();
            for u in 0..names.len() {
                for v in u + 1..names.len() {
                    if rng.random::<f64>() < 0.5 {
                        edges.push((names[u].clone(), names[v].clone()));
                    }
                }
            }
            FunctionSpec::EdgeWitness { edges }
        }
    }
}

fn mrs_random_terms(names: &[String], rng: &mut rand_chacha::ChaCha8Rng) -> Vec<MrsTermSpec> {
    let mut terms: Vec<MrsTermSpec> = names
        .iter()
        .map(|name| MrsTermSpec {
            weight: 0.2 + 0.8 * rng.random::<f64>(),
            parts: vec![MrsPartSpec {
                capacity: 1,
                members: vec![name.clone()],
            }],
        })
        .collect();
    terms.push(MrsTermSpec {
        weight: 0.7,
        parts: vec![MrsPartSpec {
            capacity: 2,
            members: names.to_vec(),
        }],
    });
    terms
}

/// Seeded random stochastic-selection problem with a part-rank objective,
/// suitable for both the relaxation solver and its brute-force check.
pub fn gen_sosp_random(
    n: u32,
    p_low: f64,
    p_high: f64,
    budget: f64,
    stream: &SeedStream,
) -> Result<SospProblemData> {
    if n < 1 {
        return Err(Error::Input("random problems need n >= 1".into()));
    }
    if !(0.0 < p_low && p_low <= p_high && p_high <= 1.0) {
        return Err(Error::Input(format!(
            "probability range must satisfy 0 < low <= high <= 1, got [{p_low}, {p_high}]"
        )));
    }
    if !(budget > 0.0) {
        return Err(Error::Input(format!("budget must be positive, got {budget}")));
    }
    let mut rng = stream.substream(SOSP_RANDOM_DOMAIN, 0);
    let names: Vec<String> = (0..n).map(|i| format!("v{i:04}")).collect();
    let mut probabilities = BTreeMap::new();
    for name in &names {
        let p = p_low + rng.random::<f64>() * (p_high - p_low);
        probabilities.insert(name.clone(), p.min(p_high));
    }
    Ok(SospProblemData {
        probabilities,
        budget,
        function: FunctionSpec::Mrs {
            terms: mrs_random_terms(&names, &mut rng),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::check_oracle;
    use crate::oracle::oracle_report;
    use crate::sosp::{sosp_bruteforce, SospProblem};
    use crate::Caps;

    #[test]
    fn na_gap_reference_matches_hand_values() {
        let r = gap_na_reference(0.5).unwrap();
        assert!((r.adaptive_value - 0.9375).abs() < 1e-12);
        assert!((r.comparison_value - 0.75).abs() < 1e-12);
        assert!((r.ratio - 0.8).abs() < 1e-12);

        let r = gap_na_reference(1.0).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);

        // The ratio approaches 1 - 1/e from above as delta shrinks.
        let r = gap_na_reference(0.05).unwrap();
        let limit = 1.0 - (-1.0f64).exp();
        assert!((r.ratio - limit).abs() < 0.02, "ratio {}", r.ratio);
    }

    #[test]
    fn na_gap_reference_agrees_with_the_oracle() {
        let inst = gen_gap_na(0.5).unwrap();
        assert_eq!(inst.n_ground(), 4);
        assert_eq!(inst.budget(), 2);
        let f = inst.objective().unwrap();
        let report = oracle_report(&inst, &f, &Caps::default()).unwrap();
        let reference = gap_na_reference(0.5).unwrap();
        assert!((report.opt_adaptive - reference.adaptive_value).abs() < 1e-9);
        assert!((report.opt_nonadaptive - reference.comparison_value).abs() < 1e-9);
    }

    #[test]
    fn la_gap_reference_matches_hand_values() {
        let r = gap_la_reference(2).unwrap();
        assert!((r.adaptive_value - 0.875).abs() < 1e-12);
        assert!((r.comparison_value - 0.71875).abs() < 1e-12);
        assert!((r.ratio - 0.8214285714285714).abs() < 1e-12);

        let r = gap_la_reference(40).unwrap();
        assert!((r.ratio - 0.8525).abs() < 5e-4, "ratio {}", r.ratio);

        // Exact binomial forms drift toward the limiting constants.
        let r = gap_la_reference(200).unwrap();
        let adaptive_limit = 1.0 - 0.5 * (-1.0f64).exp();
        let comparison_limit = 1.0 - 0.5 * (-0.5f64).exp();
        let limit = comparison_limit / adaptive_limit;
        assert!((limit - 0.8537784373523968).abs() < 1e-12);
        assert!((r.ratio - limit).abs() < 3e-4, "ratio {}", r.ratio);
    }

    #[test]
    fn la_gap_adaptive_value_agrees_with_the_oracle() {
        let inst = gen_gap_la(2).unwrap();
        assert_eq!(inst.n_x(), 2);
        assert_eq!(inst.n_ground(), 10);
        assert_eq!(inst.budget(), 7);
        let f = inst.objective().unwrap();
        let report = oracle_report(&inst, &f, &Caps::default()).unwrap();
        let reference = gap_la_reference(2).unwrap();
        // The reference is the strategy value, achievable hence a lower
        // bound; the exact optimum additionally spends the leftover pick on
        // a regular of the other group when no special realizes.
        assert!(reference.adaptive_value <= report.opt_adaptive + 1e-9);
        let m = 2.0f64;
        let exact = 1.0 - (1.0 - 1.0 / m).powi(2) * 0.5 * (1.0 - 1.0 / (2.0 * m * m));
        assert!(
            (report.opt_adaptive - exact).abs() < 1e-9,
            "oracle {} vs leftover-pick form {}",
            report.opt_adaptive,
            exact
        );
        // The locally adaptive bound sits strictly below full adaptivity.
        assert!(reference.comparison_value < report.opt_adaptive);
    }

    #[test]
    fn la_gap_shape_follows_the_construction() {
        let inst = gen_gap_la(3).unwrap();
        assert_eq!(inst.n_x(), 3);
        assert_eq!(inst.n_ground(), 3 + 27);
        assert_eq!(inst.budget(), 13);
        let y = inst.ground_index("y001").unwrap();
        assert!((inst.prob(y) - 1.0 / 3.0).abs() < 1e-15);
        let z = inst.ground_index("z001_0003").unwrap();
        assert_eq!(inst.prob(z), 1.0);
        assert!(gen_gap_la(1).is_err());
    }

    #[test]
    fn hardness_clique_matches_the_binomial_closed_form() {
        let stream = SeedStream::new(7);
        let data = gen_hardness(5, 1.7, HardnessMode::Clique, &stream).unwrap();
        assert_eq!(data.probabilities.len(), 5);
        for p in data.probabilities.values() {
            assert!((p - 0.34).abs() < 1e-15);
        }
        match &data.function {
            FunctionSpec::EdgeWitness { edges } => assert_eq!(edges.len(), 10),
            other => panic!("expected an edge witness, got {other:?}"),
        }
        let problem = SospProblem::from_data(data).unwrap();
        let (chosen, value) = sosp_bruteforce(&problem, &Caps::default()).unwrap();
        assert_eq!(chosen.len(), 5);
        assert!((value - hardness_clique_value(5, 1.7)).abs() < 1e-12);
        assert!((hardness_clique_value(5, 1.7) - 0.7134814864).abs() < 1e-10);
        assert!((hardness_clique_value(20, 1.7) - 0.6736034970792557).abs() < 1e-12);
    }

    #[test]
    fn sparse_mode_zero_gives_the_empty_graph() {
        let stream = SeedStream::new(7);
        let data =
            gen_hardness(5, 1.7, HardnessMode::Sparse { edge_prob: 0.0 }, &stream).unwrap();
        match &data.function {
            FunctionSpec::EdgeWitness { edges } => assert!(edges.is_empty()),
            other => panic!("expected an edge witness, got {other:?}"),
        }
        let a = gen_hardness(6, 2.0, HardnessMode::Sparse { edge_prob: 0.5 }, &stream).unwrap();
        let b = gen_hardness(6, 2.0, HardnessMode::Sparse { edge_prob: 0.5 }, &stream).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn random_instances_are_deterministic_and_sound() {
        let stream = SeedStream::new(31);
        let a = gen_random(5, 2, 0.2, 0.9, FunctionFamily::Coverage, &stream).unwrap();
        let b = gen_random(5, 2, 0.2, 0.9, FunctionFamily::Coverage, &stream).unwrap();
        assert_eq!(
            serde_json::to_string(&a.to_data()).unwrap(),
            serde_json::to_string(&b.to_data()).unwrap()
        );
        let f = a.objective().unwrap();
        let mut rng = stream.substream(99, 0);
        let report = check_oracle(&f, a.n_ground(), 400, &mut rng);
        assert!(report.ok(), "{report:?}");

        let sure = gen_random(5, 2, 1.0, 1.0, FunctionFamily::AnyNonempty, &stream).unwrap();
        for j in 0..sure.n_ground() as u32 {
            assert_eq!(sure.prob(j), 1.0);
        }
    }

    #[test]
    fn random_sosp_problems_bind_and_round_trip() {
        let stream = SeedStream::new(5);
        let data = gen_sosp_random(8, 0.05, 0.1, 0.5, &stream).unwrap();
        let problem = SospProblem::from_data(data.clone()).unwrap();
        assert_eq!(problem.n(), 8);
        assert!(problem.delta() <= 0.1 + 1e-15);
        assert!(problem.mrs_view().is_ok(), "part-rank objective expected");
        let again = gen_sosp_random(8, 0.05, 0.1, 0.5, &stream).unwrap();
        assert_eq!(
            serde_json::to_string(&data).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
