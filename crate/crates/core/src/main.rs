//! Command-line driver: generate instances, run the solvers, evaluate
//! policies, query the exact oracles, and print gap references.
//!
//! Exit codes: 0 success, 2 input error, 3 cap exceeded, 4 infeasible
//! policy. Every run with a fixed seed is deterministic; the only varying
//! output is the wall-time column of `compare`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use adseed::error::{Error, Result};
use adseed::eval::{
    value_adaptive_executor, value_locally_adaptive, value_nonadaptive, AdaptiveExecutor,
    Estimate, EvalMethod, DEFAULT_SEARCH_SAMPLES, DEFAULT_VALUE_SAMPLES,
};
use adseed::harness::{
    gap_la_reference, gap_na_reference, gen_gap_la, gen_gap_na, gen_hardness, gen_random,
    gen_sosp_random, FunctionFamily, GapReference, HardnessMode,
};
use adseed::instance::Instance;
use adseed::locallyadaptive::{locally_adaptive_solve, AdaptiveSolution};
use adseed::nonadaptive::{crs_adapt, nonadaptive_greedy, SearchEval};
use adseed::oracle::oracle_report;
use adseed::policy::Policy;
use adseed::rng::SeedStream;
use adseed::sosp::{sosp_bruteforce, sosp_solve, FwOptions, SospProblem};
use adseed::trace::GreedyTrace;
use adseed::Caps;

#[derive(Parser)]
#[command(name = "adseed", version, about = "Two-stage adaptive seeding toolkit")]
struct Cli {
    /// Cap on candidate subsets in block searches and brute-force scans.
    #[arg(long, global = true)]
    cap_subsets: Option<u64>,
    /// Cap on the ground size for exhaustive realization enumeration.
    #[arg(long, global = true)]
    cap_enum: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write an instance or problem file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        #[arg(long, global = true, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when absent).
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run a solver on an instance (or problem) file.
    Solve {
        /// Instance file; a stochastic-selection problem file for the sosp
        /// algorithms.
        input: PathBuf,
        #[arg(long)]
        alg: Alg,
        /// Block-size parameter for the greedy solvers and thinning rate
        /// for the contention-resolution step.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Monte Carlo samples for block searches and value estimates.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Policy (or solution) file to write; stdout always gets the
        /// summary document.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Greedy trace CSV to write.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a policy file against an instance.
    Eval {
        instance: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Force Monte Carlo with this sample count; exact evaluation is
        /// used when possible otherwise.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact adaptive and non-adaptive optima of a small instance.
    Oracle {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several algorithms and tabulate their values against the
    /// adaptive optimum.
    Compare {
        instance: PathBuf,
        /// Comma-separated algorithms (the sosp pair excluded).
        #[arg(long, required = true, value_delimiter = ',')]
        algs: Vec<Alg>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form gap reference values, optionally cross-checked.
    Gap {
        #[arg(long, value_enum)]
        family: Family,
        /// Delta for the na family; integer m for the la family.
        #[arg(long)]
        param: f64,
        /// Also brute-force the generated instance and report both numbers.
        #[arg(long)]
        check: bool,
        /// Write the generated instance as well.
        #[arg(long)]
        emit_instance: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Random bipartite instance.
    Random {
        #[arg(long)]
        nx: u32,
        #[arg(long)]
        deg: u32,
        #[arg(long, default_value_t = 0.1)]
        p_low: f64,
        #[arg(long, default_value_t = 0.9)]
        p_high: f64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Coverage)]
        family: FamilyArg,
    },
    /// Star family behind the non-adaptive gap.
    GapNa {
        #[arg(long)]
        param: f64,
    },
    /// Product family behind the locality gap.
    GapLa {
        #[arg(long)]
        param: u32,
    },
    /// Edge-witness selection problem on a clique or a sparse graph.
    Hardness {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        k: f64,
        #[arg(long, value_enum, default_value_t = GraphArg::Clique)]
        graph: GraphArg,
        /// Edge probability for the sparse graph.
        #[arg(long, default_value_t = 0.5)]
        edge_prob: f64,
    },
    /// Random stochastic-selection problem with a part-rank objective.
    Sosp {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 0.02)]
        p_low: f64,
        #[arg(long, default_value_t = 0.1)]
        p_high: f64,
        #[arg(long)]
        budget: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Alg {
    #[value(name = "na-greedy")]
    NaGreedy,
    #[value(name = "na-greedy+crs")]
    NaGreedyCrs,
    #[value(name = "la-greedy")]
    LaGreedy,
    #[value(name = "sosp-fw")]
    SospFw,
    #[value(name = "sosp-bf")]
    SospBf,
    #[value(name = "bruteforce")]
    Bruteforce,
}

impl Alg {
    fn name(self) -> &'static str {
        match self {
            Alg::NaGreedy => "na-greedy",
            Alg::NaGreedyCrs => "na-greedy+crs",
            Alg::LaGreedy => "la-greedy",
            Alg::SospFw => "sosp-fw",
            Alg::SospBf => "sosp-bf",
            Alg::Bruteforce => "bruteforce",
        }
    }

    fn needs_epsilon(self) -> bool {
        matches!(self, Alg::NaGreedy | Alg::NaGreedyCrs | Alg::LaGreedy)
    }

    fn on_sosp_problem(self) -> bool {
        matches!(self, Alg::SospFw | Alg::SospBf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Na,
    La,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Coverage,
    AnyNonempty,
    Mrs,
    EdgeWitness,
}

impl From<FamilyArg> for FunctionFamily {
    fn from(a: FamilyArg) -> Self {
        match a {
            FamilyArg::Coverage => FunctionFamily::Coverage,
            FamilyArg::AnyNonempty => FunctionFamily::AnyNonempty,
            FamilyArg::Mrs => FunctionFamily::Mrs,
            FamilyArg::EdgeWitness => FunctionFamily::EdgeWitness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphArg {
    Clique,
    Sparse,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut caps = Caps::default();
    if let Some(v) = cli.cap_subsets {
        caps.subset_cap = v;
    }
    if let Some(v) = cli.cap_enum {
        caps.enum_limit = v;
    }
    match cli.cmd {
        Cmd::Gen { kind, seed, out } => cmd_gen(kind, seed, out.as_deref()),
        Cmd::Solve {
            input,
            alg,
            epsilon,
            samples,
            seed,
            out,
            trace,
        } => cmd_solve(
            &input,
            alg,
            epsilon,
            samples,
            seed,
            out.as_deref(),
            trace.as_deref(),
            &caps,
        ),
        Cmd::Eval {
            instance,
            policy,
            samples,
            seed,
            out,
        } => cmd_eval(&instance, &policy, samples, seed, out.as_deref(), &caps),
        Cmd::Oracle { instance, out } => cmd_oracle(&instance, out.as_deref(), &caps),
        Cmd::Compare {
            instance,
            algs,
            epsilon,
            samples,
            seed,
            format,
            out,
        } => cmd_compare(
            &instance,
            &algs,
            epsilon,
            samples,
            seed,
            format,
            out.as_deref(),
            &caps,
        ),
        Cmd::Gap {
            family,
            param,
            check,
            emit_instance,
            out,
        } => cmd_gap(family, param, check, emit_instance.as_deref(), out.as_deref(), &caps),
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("ADSEED_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Input(format!("ADSEED_THREADS must be a positive integer, got {raw}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))
}

// ---------------------------------------------------------------------------
// IO

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Input(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!("{name}.tmp"));
    std::fs::write(&tmp, content)
        .map_err(|e| Error::Input(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| Error::Input(format!("cannot move {} into place: {e}", tmp.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// gen

fn cmd_gen(kind: GenKind, seed: u64, out: Option<&Path>) -> Result<()> {
    let stream = SeedStream::new(seed);
    let content = match kind {
        GenKind::Random {
            nx,
            deg,
            p_low,
            p_high,
            family,
        } => gen_random(nx, deg, p_low, p_high, family.into(), &stream)?.to_json(),
        GenKind::GapNa { param } => gen_gap_na(param)?.to_json(),
        GenKind::GapLa { param } => gen_gap_la(param)?.to_json(),
        GenKind::Hardness {
            l,
            k,
            graph,
            edge_prob,
        } => {
            let mode = match graph {
                GraphArg::Clique => HardnessMode::Clique,
                GraphArg::Sparse => HardnessMode::Sparse { edge_prob },
            };
            let data = gen_hardness(l, k, mode, &stream)?;
            SospProblem::from_data(data)?.to_json()
        }
        GenKind::Sosp {
            n,
            p_low,
            p_high,
            budget,
        } => {
            let data = gen_sosp_random(n, p_low, p_high, budget, &stream)?;
            SospProblem::from_data(data)?.to_json()
        }
    };
    emit(out, &content)
}

// ---------------------------------------------------------------------------
// solve

fn require_epsilon(alg: Alg, epsilon: Option<f64>) -> Result<f64> {
    epsilon.ok_or_else(|| Error::Input(format!("{} needs --epsilon", alg.name())))
}

struct SolveOutcome {
    summary: serde_json::Value,
    /// Policy or solution document for --out.
    document: String,
    trace: GreedyTrace,
}

fn cmd_solve(
    input: &Path,
    alg: Alg,
    epsilon: Option<f64>,
    samples: Option<u64>,
    seed: u64,
    out: Option<&Path>,
    trace_path: Option<&Path>,
    caps: &Caps,
) -> Result<()> {
    let outcome = if alg.on_sosp_problem() {
        solve_sosp(input, alg, caps)?
    } else {
        let inst = Instance::from_json(&read_file(input)?)?;
        let f = inst.objective()?;
        solve_instance(&inst, &f, alg, epsilon, samples, seed, caps)?
    };
    if let Some(path) = trace_path {
        write_atomic(path, &outcome.trace.to_csv())?;
    }
    if let Some(path) = out {
        write_atomic(path, &outcome.document)?;
    }
    print!("{}", pretty(&outcome.summary));
    Ok(())
}

fn solve_sosp(input: &Path, alg: Alg, caps: &Caps) -> Result<SolveOutcome> {
    let problem = SospProblem::from_json(&read_file(input)?)?;
    let summary = match alg {
        Alg::SospFw => {
            let sol = sosp_solve(&problem, &FwOptions::default())?;
            let q: serde_json::Map<String, serde_json::Value> = sol
                .concave
                .q
                .q
                .iter()
                .map(|&(i, v)| (problem.name(i).to_string(), json!(v)))
                .collect();
            json!({
                "algorithm": "sosp-fw",
                "relaxation_value": sol.concave.objective,
                "certificate_gap": sol.concave.certificate_gap,
                "iterations": sol.concave.iterations,
                "q": q,
                "chosen": names_of(&sol.chosen, |i| problem.name(i)),
                "value": sol.value,
                "cost": sol.cost,
            })
        }
        Alg::SospBf => {
            let (chosen, value) = sosp_bruteforce(&problem, caps)?;
            json!({
                "algorithm": "sosp-bf",
                "chosen": names_of(&chosen, |i| problem.name(i)),
                "value": value,
            })
        }
        _ => unreachable!("guarded by on_sosp_problem"),
    };
    Ok(SolveOutcome {
        document: pretty(&summary),
        summary,
        trace: GreedyTrace::default(),
    })
}

fn names_of<'a>(indices: &[u32], name: impl Fn(u32) -> &'a str) -> Vec<String> {
    indices.iter().map(|&i| name(i).to_string()).collect()
}

fn solve_instance(
    inst: &Instance,
    f: &adseed::functions::Objective,
    alg: Alg,
    epsilon: Option<f64>,
    samples: Option<u64>,
    seed: u64,
    caps: &Caps,
) -> Result<SolveOutcome> {
    let stream = SeedStream::new(seed);
    let search_samples = samples.unwrap_or(DEFAULT_SEARCH_SAMPLES);
    let value_samples = samples.unwrap_or(DEFAULT_VALUE_SAMPLES);
    match alg {
        Alg::NaGreedy => {
            let eps = require_epsilon(alg, epsilon)?;
            let (policy, trace) = nonadaptive_greedy(
                inst,
                f,
                eps,
                SearchEval::MonteCarlo {
                    samples: search_samples,
                },
                &stream,
                caps,
            )?;
            let wrapped = Policy::NonAdaptive(policy);
            let est = policy_value(inst, f, &wrapped, samples, &stream.derive(10), caps)?;
            Ok(SolveOutcome {
                summary: summarize(alg, Some(eps), &est, wrapped.cost(inst), inst, &wrapped),
                document: wrapped.to_json(inst),
                trace,
            })
        }
        Alg::NaGreedyCrs => {
            let eps = require_epsilon(alg, epsilon)?;
            let (policy, trace) = nonadaptive_greedy(
                inst,
                f,
                eps,
                SearchEval::MonteCarlo {
                    samples: search_samples,
                },
                &stream,
                caps,
            )?;
            let ex = crs_adapt(inst, &policy, eps)?;
            let est = value_adaptive_executor(inst, f, &ex, value_samples, &stream.derive(11))?;
            let wrapped = Policy::NonAdaptive(policy);
            let mut summary = summarize(alg, Some(eps), &est, wrapped.cost(inst), inst, &wrapped);
            let obj = summary.as_object_mut().expect("summary is an object");
            obj.insert("keep_prob".into(), json!(ex.keep_prob()));
            obj.insert("capacity".into(), json!(ex.capacity()));
            Ok(SolveOutcome {
                summary,
                document: wrapped.to_json(inst),
                trace,
            })
        }
        Alg::LaGreedy => {
            let eps = require_epsilon(alg, epsilon)?;
            match locally_adaptive_solve(inst, f, eps, search_samples, &stream, caps)? {
                AdaptiveSolution::Greedy { policy, trace } => {
                    let wrapped = Policy::LocallyAdaptive(policy);
                    let est = policy_value(inst, f, &wrapped, samples, &stream.derive(12), caps)?;
                    Ok(SolveOutcome {
                        summary: summarize(alg, Some(eps), &est, wrapped.cost(inst), inst, &wrapped),
                        document: wrapped.to_json(inst),
                        trace,
                    })
                }
                AdaptiveSolution::Fallback { executor, value } => {
                    let first = names_of(
                        &executor.first_stage().iter().copied().collect::<Vec<_>>(),
                        |i| inst.x_name(i),
                    );
                    let doc = json!({
                        "kind": "adaptive-oracle",
                        "first": first,
                        "value": value,
                    });
                    let summary = json!({
                        "algorithm": alg.name(),
                        "epsilon": eps,
                        "fallback": true,
                        "first": first,
                        "value": value,
                        "std_error": 0.0,
                        "exact": true,
                    });
                    Ok(SolveOutcome {
                        summary,
                        document: pretty(&doc),
                        trace: GreedyTrace::default(),
                    })
                }
            }
        }
        Alg::Bruteforce => {
            let (executor, value) = adseed::oracle::optimal_executor(inst, f, caps)?;
            let first = names_of(
                &executor.first_stage().iter().copied().collect::<Vec<_>>(),
                |i| inst.x_name(i),
            );
            let doc = json!({
                "kind": "adaptive-oracle",
                "first": first,
                "value": value,
            });
            let summary = json!({
                "algorithm": alg.name(),
                "first": first,
                "value": value,
                "std_error": 0.0,
                "exact": true,
            });
            Ok(SolveOutcome {
                summary,
                document: pretty(&doc),
                trace: GreedyTrace::default(),
            })
        }
        Alg::SospFw | Alg::SospBf => Err(Error::Input(format!(
            "{} runs on a stochastic-selection problem file, not an instance",
            alg.name()
        ))),
    }
}

fn summarize(
    alg: Alg,
    epsilon: Option<f64>,
    est: &Estimate,
    cost: f64,
    inst: &Instance,
    policy: &Policy,
) -> serde_json::Value {
    let mut v = json!({
        "algorithm": alg.name(),
        "value": est.mean,
        "std_error": est.std_error,
        "samples": est.samples,
        "exact": est.exact,
        "cost": cost,
        "policy": serde_json::to_value(policy.to_file(inst)).expect("serializable"),
    });
    if let Some(eps) = epsilon {
        v.as_object_mut()
            .expect("summary is an object")
            .insert("epsilon".into(), json!(eps));
    }
    v
}

/// Value of a policy: exact (closed form or enumeration) when the caps
/// allow it and no sample count is forced, Monte Carlo otherwise.
fn policy_value(
    inst: &Instance,
    f: &adseed::functions::Objective,
    policy: &Policy,
    samples: Option<u64>,
    stream: &SeedStream,
    caps: &Caps,
) -> Result<Estimate> {
    let method = match samples {
        Some(s) => EvalMethod::MonteCarlo { samples: s },
        None => EvalMethod::Auto,
    };
    match policy {
        Policy::NonAdaptive(p) => {
            value_nonadaptive(inst, f, &p.second_sorted(), method, stream, caps)
        }
        Policy::EpsLocal(p) => {
            let second: Vec<u32> = p.second_union().into_iter().collect();
            value_nonadaptive(inst, f, &second, method, stream, caps)
        }
        Policy::LocallyAdaptive(p) => value_locally_adaptive(inst, f, p, method, stream, caps),
    }
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(
    instance: &Path,
    policy_path: &Path,
    samples: Option<u64>,
    seed: u64,
    out: Option<&Path>,
    caps: &Caps,
) -> Result<()> {
    let inst = Instance::from_json(&read_file(instance)?)?;
    let f = inst.objective()?;
    let policy = Policy::from_json(&read_file(policy_path)?, &inst)?;
    let issues = policy.validate(&inst, false);
    if !issues.is_empty() {
        return Err(Error::Infeasible(issues.join("; ")));
    }
    let stream = SeedStream::new(seed);
    let est = policy_value(&inst, &f, &policy, samples, &stream, caps)?;
    let kind = match &policy {
        Policy::NonAdaptive(_) => "nonadaptive",
        Policy::EpsLocal(_) => "epslocal",
        Policy::LocallyAdaptive(_) => "locallyadaptive",
    };
    let doc = json!({
        "kind": kind,
        "value": est.mean,
        "std_error": est.std_error,
        "samples": est.samples,
        "exact": est.exact,
        "cost": policy.cost(&inst),
    });
    emit(out, &pretty(&doc))
}

// ---------------------------------------------------------------------------
// oracle

fn cmd_oracle(instance: &Path, out: Option<&Path>, caps: &Caps) -> Result<()> {
    let inst = Instance::from_json(&read_file(instance)?)?;
    let f = inst.objective()?;
    let report = oracle_report(&inst, &f, caps)?;
    let doc = serde_json::to_value(&report).expect("serializable");
    emit(out, &pretty(&doc))
}

// ---------------------------------------------------------------------------
// compare

struct CompareRow {
    algorithm: &'static str,
    epsilon: Option<f64>,
    samples: u64,
    value: f64,
    std_error: f64,
    oracle_value: f64,
    ratio: f64,
    wall_ms: u128,
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    instance: &Path,
    algs: &[Alg],
    epsilon: Option<f64>,
    samples: Option<u64>,
    seed: u64,
    format: Format,
    out: Option<&Path>,
    caps: &Caps,
) -> Result<()> {
    let inst = Instance::from_json(&read_file(instance)?)?;
    let f = inst.objective()?;
    let id = instance
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("instance")
        .to_string();
    let report = oracle_report(&inst, &f, caps)?;
    let oracle_value = report.opt_adaptive;
    let mut rows = Vec::new();
    for (idx, &alg) in algs.iter().enumerate() {
        if alg.on_sosp_problem() {
            return Err(Error::Input(format!(
                "{} runs on problem files; compare takes instance algorithms",
                alg.name()
            )));
        }
        let start = Instant::now();
        let outcome = solve_instance(&inst, &f, alg, epsilon, samples, seed + idx as u64, caps)?;
        let wall_ms = start.elapsed().as_millis();
        let obj = outcome.summary.as_object().expect("summary is an object");
        let value = obj["value"].as_f64().expect("value is a number");
        let std_error = obj
            .get("std_error")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0);
        let est_samples = obj.get("samples").and_then(|v| v.as_u64()).unwrap_or(0);
        rows.push(CompareRow {
            algorithm: alg.name(),
            epsilon: alg.needs_epsilon().then(|| epsilon).flatten(),
            samples: est_samples,
            value,
            std_error,
            oracle_value,
            ratio: if oracle_value == 0.0 {
                1.0
            } else {
                value / oracle_value
            },
            wall_ms,
        });
    }
    let content = match format {
        Format::Csv => {
            let mut s = String::from(
                "instance-id,algorithm,epsilon,samples,value,std_error,oracle_value,ratio,wall-time-ms\n",
            );
            for r in &rows {
                let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_default();
                s.push_str(&format!(
                    "{id},{},{eps},{},{},{},{},{},{}\n",
                    r.algorithm, r.samples, r.value, r.std_error, r.oracle_value, r.ratio, r.wall_ms
                ));
            }
            s
        }
        Format::Json => {
            let arr: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "instance-id": id,
                        "algorithm": r.algorithm,
                        "epsilon": r.epsilon,
                        "samples": r.samples,
                        "value": r.value,
                        "std_error": r.std_error,
                        "oracle_value": r.oracle_value,
                        "ratio": r.ratio,
                        "wall-time-ms": r.wall_ms as u64,
                    })
                })
                .collect();
            pretty(&serde_json::Value::Array(arr))
        }
    };
    emit(out, &content)
}

// ---------------------------------------------------------------------------
// gap

fn cmd_gap(
    family: Family,
    param: f64,
    check: bool,
    emit_instance: Option<&Path>,
    out: Option<&Path>,
    caps: &Caps,
) -> Result<()> {
    let reference: GapReference = match family {
        Family::Na => gap_na_reference(param)?,
        Family::La => gap_la_reference(la_param(param)?)?,
    };
    let instance_needed = check || emit_instance.is_some();
    let inst = if instance_needed {
        Some(match family {
            Family::Na => gen_gap_na(param)?,
            Family::La => gen_gap_la(la_param(param)?)?,
        })
    } else {
        None
    };
    if let (Some(path), Some(inst)) = (emit_instance, inst.as_ref()) {
        write_atomic(path, &inst.to_json())?;
    }
    let doc = if check {
        let inst = inst.as_ref().expect("instance generated for check");
        let f = inst.objective()?;
        let report = oracle_report(inst, &f, caps)?;
        json!({
            "reference": serde_json::to_value(&reference).expect("serializable"),
            "oracle": serde_json::to_value(&report).expect("serializable"),
        })
    } else {
        serde_json::to_value(&reference).expect("serializable")
    };
    emit(out, &pretty(&doc))
}

fn la_param(param: f64) -> Result<u32> {
    if param.fract() != 0.0 || !(2.0..=4.0e9).contains(&param) {
        return Err(Error::Input(format!(
            "the la family takes an integer m >= 2, got {param}"
        )));
    }
    Ok(param as u32)
}
