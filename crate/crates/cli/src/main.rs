//! `ctlp`: command-line driver for the library's solvers and experiments.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 when a budget is exceeded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctlp::corpus::{self, CorpusLimits};
use ctlp::csp::{brute_force_opt_with_budget, evaluate, fixtures, ConstraintOracle, CspInstance, DEFAULT_BUDGET};
use ctlp::gap::{self, GapParams};
use ctlp::local::{LocalSolverParams, LpName, LpOracle};
use ctlp::lp::{build_basic_lp, solve_basic_lp, LpSolution};
use ctlp::pipeline::{normalize_packing, relax_basic_lp, to_packing, PipelineParams};
use ctlp::robust::repair_to_feasible;
use ctlp::rounding::{lp_epsilon, round, test_satisfiability, Family, RoundingParams};
use ctlp::{Error, Result};

#[derive(Parser)]
#[command(name = "ctlp", version, about = "LP-based approximation and gap experiments for bounded-degree CSPs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve BasicLP exactly and print its optimum
    SolveLp {
        #[arg(long)]
        instance: PathBuf,
        /// write the solution JSON here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transformed LPs as JSON
    Pipeline {
        #[command(subcommand)]
        cmd: PipelineCmd,
    },
    /// Query the local LP oracle
    LocalLp(LocalLpArgs),
    /// Seeded rounding trials, one CSV row each
    Round(RoundArgs),
    /// Satisfiability tester trials
    TestSat(TestSatArgs),
    /// Repair an infeasible solution into a feasible one
    Repair {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// repaired solution JSON; the loss report goes to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gap instances and their experiments
    Gap {
        #[command(subcommand)]
        cmd: GapCmd,
    },
    /// Random instance corpora
    Corpus {
        #[command(subcommand)]
        cmd: CorpusCmd,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// BasicLP, the relaxed LP, the complemented LP and its packing form
    Dump {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LocalLpArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    /// constant in front of the round count
    #[arg(long, default_value_t = 1.0)]
    rounds_kappa: f64,
    /// names like x[0][1] or mu[2][3]; repeatable
    #[arg(long)]
    query: Vec<String>,
    /// query every name of the instance
    #[arg(long)]
    assemble: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// worker threads; output order does not depend on it
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct RoundArgs {
    #[command(flatten)]
    common: TrialArgs,
    /// enumeration budget for the opt column
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Horn,
    TwoSat,
}

#[derive(Args)]
struct TestSatArgs {
    #[command(flatten)]
    common: TrialArgs,
    /// continuity modulus; overrides the family preset
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Horn)]
    family: FamilyArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Opt,
    Lp,
}

#[derive(Args)]
struct SeedArgs {
    /// seed instance JSON; a built-in seed is used when absent
    #[arg(long)]
    seed_instance: Option<PathBuf>,
    /// LP solution JSON for the seed; solved exactly when absent
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GapCmd {
    /// Draw one instance (default seed: TRIANGLE)
    Gen {
        #[command(flatten)]
        seed_args: SeedArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Opt)]
        mode: ModeArg,
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
        #[arg(long = "T", default_value_t = 1)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// mode, natural assignment, labels and sources as JSON
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Opt-family threshold and planted-value experiments (default seed: TRIANGLE)
    Verify {
        #[command(flatten)]
        seed_args: SeedArgs,
        #[arg(long = "N", default_value_t = 6)]
        n: usize,
        #[arg(long = "T", default_value_t = 32)]
        t: usize,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Collision probability of breadth-first probing (default seed: NAND)
    Collide {
        #[command(flatten)]
        seed_args: SeedArgs,
        #[arg(long = "N", default_value_t = 10_000)]
        n: usize,
        #[arg(long = "T", default_value_t = 1)]
        t: usize,
        /// comma-separated query counts
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        tau: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Horn,
    Far,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Write `count` instances as instance_NNNN.json
    Make {
        #[arg(long, value_enum, default_value_t = KindArg::Random)]
        kind: KindArg,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        q_max: usize,
        #[arg(long, default_value_t = 3)]
        s_max: usize,
        #[arg(long, default_value_t = 5)]
        t_max: usize,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 14)]
        n_max: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_budget() {
        3
    } else {
        2
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn read_instance(path: &Path) -> Result<CspInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    CspInstance::from_json(&text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("epsilon {eps} outside (0, 1)")))
    }
}

/// Runs `f` on every trial index over `jobs` threads, results in index order.
fn run_trials<T: Send>(trials: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.clamp(1, trials.max(1));
    let mut slots: Vec<Option<Result<T>>> = (0..trials).map(|_| None).collect();
    std::thread::scope(|sc| {
        let f = &f;
        let handles: Vec<_> = (0..jobs)
            .map(|j| sc.spawn(move || (j..trials).step_by(jobs).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every trial ran")).collect()
}

/// A `#` line with the command and seed, then the header row.
fn csv_head(cmd: &str, seed: Option<u64>, header: &str) -> String {
    let seed = seed.map_or("none".to_string(), |s| s.to_string());
    format!("# ctlp {cmd} seed={seed}\n{header}\n")
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::SolveLp { instance, out } => {
            let inst = read_instance(&instance)?;
            let sol = solve_basic_lp(&inst)?;
            if let Some(p) = out {
                emit(Some(&p), &sol.to_json())?;
            }
            println!("{:?}", sol.value);
            Ok(())
        }
        Cmd::Pipeline { cmd: PipelineCmd::Dump { instance, epsilon, out } } => {
            check_eps(epsilon)?;
            let inst = read_instance(&instance)?;
            let params = PipelineParams::for_instance(&inst, epsilon);
            params.validate(inst.w)?;
            let lp3 = to_packing(&inst, &params);
            let packing = normalize_packing(&lp3, &params, inst.w);
            let doc = json!({
                "params": params,
                "basic": build_basic_lp(&inst),
                "relaxed": relax_basic_lp(&inst, epsilon),
                "complemented": lp3,
                "packing": packing,
            });
            emit(out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
        }
        Cmd::LocalLp(a) => local_lp(a),
        Cmd::Round(a) => round_cmd(a),
        Cmd::TestSat(a) => test_sat(a),
        Cmd::Repair { instance, solution, out } => {
            let inst = read_instance(&instance)?;
            let text = std::fs::read_to_string(&solution).map_err(|e| Error::Io(format!("{}: {e}", solution.display())))?;
            let sol = LpSolution::from_json(&inst, &text)?;
            let rep = repair_to_feasible(&inst, &sol)?;
            if let Some(p) = out {
                emit(Some(&p), &rep.solution.to_json())?;
            }
            let doc = json!({
                "eps_in": rep.eps_in,
                "eps_surgery": rep.eps_surgery,
                "delta": rep.delta,
                "loss": rep.loss,
                "l1_bound": rep.l1_bound,
                "eps_out": rep.eps_out,
                "loss_ratio": rep.loss_ratio(&inst),
                "value_in": sol.value,
                "value_out": rep.solution.value,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Cmd::Gap { cmd } => gap_cmd(cmd),
        Cmd::Corpus { cmd } => corpus_cmd(cmd),
    }
}

fn local_lp(a: LocalLpArgs) -> Result<()> {
    check_eps(a.epsilon)?;
    if !(a.rounds_kappa > 0.0) {
        return Err(invalid("rounds-kappa must be positive"));
    }
    let inst = read_instance(&a.instance)?;
    let mut names: Vec<LpName> = a.query.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    if a.assemble {
        for v in 0..inst.n {
            names.extend((0..inst.q).map(|a| LpName::X { v, a }));
        }
        for c in 0..inst.num_constraints() {
            names.extend((0..inst.table_len(c)).map(|b| LpName::Mu { c, b }));
        }
    }
    if names.is_empty() {
        return Err(invalid("give --query or --assemble"));
    }
    for n in &names {
        let ok = match *n {
            LpName::X { v, a } => v < inst.n && a < inst.q,
            LpName::Mu { c, b } => c < inst.num_constraints() && b < inst.table_len(c),
        };
        if !ok {
            return Err(invalid(format!("name {n} is out of range")));
        }
    }
    let params = PipelineParams::for_instance(&inst, a.epsilon);
    let local = LocalSolverParams {
        kappa: a.rounds_kappa,
        ..LocalSolverParams::new(a.epsilon)
    };
    let mut o = LpOracle::with_params(ConstraintOracle::new(&inst), params, local);
    let mut out = csv_head("local-lp", None, "name,value,query_cost_queries");
    for n in names {
        let before = o.query_count();
        let val = o.query(n);
        writeln!(out, "{n},{val},{}", o.query_count() - before).expect("string write");
    }
    emit(a.csv.as_deref(), &out)
}

fn round_cmd(a: RoundArgs) -> Result<()> {
    let c = &a.common;
    check_eps(c.epsilon)?;
    let inst = read_instance(&c.instance)?;
    let opt = match brute_force_opt_with_budget(&inst, a.budget) {
        Ok((v, _)) => Some(v),
        Err(e) if e.is_budget() => None,
        Err(e) => return Err(e),
    };
    let params = RoundingParams::for_instance(&inst, c.epsilon);
    let rows = run_trials(c.trials, c.jobs, |i| {
        let seed = c.seed.wrapping_add(i as u64);
        let mut o = ConstraintOracle::new(&inst);
        let mut lp = LpOracle::new(ConstraintOracle::new(&inst), lp_epsilon(&params));
        let res = round(&mut o, &mut lp, params, seed)?;
        let val = evaluate(&inst, &res.assignment());
        Ok((seed, res.estimate, val, res.oracle_queries + res.lp_queries))
    })?;
    let mut out = csv_head(
        "round",
        Some(c.seed),
        "trial,seed,estimate_weight,value_weight,opt_weight,query_cost_queries",
    );
    let opt_s = opt.map_or(String::new(), |v| v.to_string());
    for (i, (seed, est, val, cost)) in rows.into_iter().enumerate() {
        writeln!(out, "{i},{seed},{est},{val},{opt_s},{cost}").expect("string write");
    }
    emit(c.csv.as_deref(), &out)
}

fn test_sat(a: TestSatArgs) -> Result<()> {
    let c = &a.common;
    check_eps(c.epsilon)?;
    let inst = read_instance(&c.instance)?;
    let family = match (a.delta, a.family) {
        (Some(d), _) => Family::Custom(d),
        (None, FamilyArg::Horn) => Family::Horn,
        (None, FamilyArg::TwoSat) => Family::TwoSat,
    };
    family.delta(c.epsilon)?;
    let rows = run_trials(c.trials, c.jobs, |i| {
        let seed = c.seed.wrapping_add(i as u64);
        let mut o = ConstraintOracle::new(&inst);
        let v = test_satisfiability(&mut o, family, c.epsilon, seed)?;
        Ok((seed, v))
    })?;
    let mut out = csv_head(
        "test-sat",
        Some(c.seed),
        "trial,seed,accept,estimate_weight,threshold_weight,eps_used",
    );
    for (i, (seed, v)) in rows.into_iter().enumerate() {
        writeln!(out, "{i},{seed},{},{},{},{}", v.accept as u8, v.estimate, v.threshold, v.eps_used).expect("string write");
    }
    emit(c.csv.as_deref(), &out)
}

enum DefaultSeed {
    Triangle,
    Nand,
}

fn load_seed(a: &SeedArgs, fallback: DefaultSeed, n: usize, t: usize, seed: u64) -> Result<GapParams> {
    let (inst, sol) = match &a.seed_instance {
        Some(p) => (read_instance(p)?, None),
        None => match fallback {
            DefaultSeed::Triangle => (fixtures::triangle(), None),
            DefaultSeed::Nand => {
                let (i, s) = gap::nand_seed();
                (i, Some(s))
            }
        },
    };
    let sol = match &a.solution {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Some(LpSolution::from_json(&inst, &text)?)
        }
        None => sol,
    };
    match sol {
        Some(s) => GapParams::with_solution(inst, s, n, t, seed),
        None => GapParams::new(inst, n, t, seed),
    }
}

fn gap_cmd(cmd: GapCmd) -> Result<()> {
    match cmd {
        GapCmd::Gen { seed_args, mode, n, t, seed, out, meta } => {
            let params = load_seed(&seed_args, DefaultSeed::Triangle, n, t, seed)?;
            let j = match mode {
                ModeArg::Opt => gap::gen_opt_instance(&params)?,
                ModeArg::Lp => gap::gen_lp_instance(&params)?,
            };
            if let Some(p) = meta {
                let doc = json!({
                    "mode": j.mode,
                    "N": j.copies,
                    "T": j.mult,
                    "seed": seed,
                    "alpha": j.alpha,
                    "labels": j.labels,
                    "source": j.source,
                });
                emit(Some(&p), &(serde_json::to_string(&doc)? + "\n"))?;
            }
            emit(out.as_deref(), &(j.instance.to_json() + "\n"))
        }
        GapCmd::Verify { seed_args, n, t, epsilon, trials, seed, csv, jobs } => {
            check_eps(epsilon)?;
            let params = load_seed(&seed_args, DefaultSeed::Triangle, n, t, seed)?;
            let seed_olopt = brute_force_opt_with_budget(&params.instance, DEFAULT_BUDGET)?.0 / params.instance.total_weight();
            let threshold = seed_olopt + epsilon;
            let values = run_trials(trials, jobs, |i| {
                let p = GapParams {
                    seed: seed.wrapping_add(i as u64),
                    ..params.clone()
                };
                gap::gen_opt_instance(&p)?.olopt()
            })?;
            let mut out = csv_head(
                "gap verify",
                Some(seed),
                "experiment,trial,seed,value_normalized,threshold_normalized,pass",
            );
            for (i, v) in values.iter().enumerate() {
                let pass = *v <= threshold + 1e-12;
                writeln!(out, "opt,{i},{},{v},{threshold},{}", seed.wrapping_add(i as u64), pass as u8).expect("string write");
            }
            let hits = values.iter().filter(|&&v| v <= threshold + 1e-12).count();
            writeln!(out, "opt_fraction,,,{},{},{}", hits as f64 / trials.max(1) as f64, 0.8, (hits * 5 >= trials * 4) as u8)
                .expect("string write");
            let lp = gap::lp_experiment(&params)?;
            let tol = if lp.integral { 1e-9 } else { lp.slack };
            let ok = (lp.value - lp.target).abs() <= tol;
            writeln!(out, "lp_value,0,{seed},{},{},{}", lp.value, lp.target, ok as u8).expect("string write");
            emit(csv.as_deref(), &out)
        }
        GapCmd::Collide { seed_args, n, t, tau, trials, seed, csv, jobs } => {
            let params = load_seed(&seed_args, DefaultSeed::Nand, n, t, seed)?;
            let reports = run_trials(tau.len(), jobs, |k| gap::collision_experiment(&params, tau[k], trials, seed))?;
            let mut out = csv_head(
                "gap collide",
                Some(seed),
                "tau_queries,trials,collisions,empirical_probability,bound_probability,mu,N,T",
            );
            let mu = params.min_mu();
            for r in reports {
                writeln!(out, "{},{},{},{},{},{mu},{n},{t}", r.tau, r.trials, r.collisions, r.empirical, r.bound).expect("string write");
            }
            emit(csv.as_deref(), &out)
        }
    }
}

fn corpus_cmd(cmd: CorpusCmd) -> Result<()> {
    let CorpusCmd::Make { kind, count, seed, out_dir, q_max, s_max, t_max, n_min, n_max } = cmd;
    if q_max < 2 || s_max == 0 || t_max == 0 || n_min == 0 || n_min > n_max {
        return Err(invalid("need q-max >= 2, s-max >= 1, t-max >= 1, 1 <= n-min <= n-max"));
    }
    let instances: Vec<CspInstance> = match kind {
        KindArg::Random => {
            let limits = CorpusLimits {
                q_max,
                s_max,
                t_max,
                n_min,
                n_max,
                w_max: 2.0,
                enum_cap: None,
                table_cap: q_max.pow(s_max as u32),
            };
            corpus::random_corpus(seed, count, limits)
        }
        KindArg::Horn => (0..count)
            .map(|i| {
                let mut rng = corpus::rng(seed.wrapping_add(i as u64));
                corpus::planted_horn(&mut rng, n_max, t_max, s_max)
            })
            .collect(),
        KindArg::Far => (0..count)
            .map(|i| {
                let mut rng = corpus::rng(seed.wrapping_add(i as u64));
                corpus::contradictory_units(&mut rng, n_max)
            })
            .collect(),
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    for (i, inst) in instances.iter().enumerate() {
        let p = out_dir.join(format!("instance_{i:04}.json"));
        emit(Some(&p), &(inst.to_json() + "\n"))?;
    }
    println!("wrote {} instances to {}", instances.len(), out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let tri = fixtures::triangle();
        let budget = brute_force_opt_with_budget(&tri, 2).unwrap_err();
        assert_eq!(exit_code(&budget), 3);
        assert_eq!(exit_code(&invalid("x")), 2);
        assert_eq!(exit_code(&Error::Io("gone".into())), 2);
    }

    #[test]
    fn epsilon_range() {
        assert!(check_eps(0.2).is_ok());
        for e in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(check_eps(e).is_err());
        }
    }

    #[test]
    fn trials_keep_index_order() {
        for jobs in [1, 2, 5, 40] {
            let out = run_trials(17, jobs, |i| Ok(i * i)).unwrap();
            assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
        }
        assert!(run_trials(0, 3, |i| Ok(i)).unwrap().is_empty());
        assert!(run_trials(4, 2, |i| if i == 3 { Err(invalid("bad")) } else { Ok(i) }).is_err());
    }

    #[test]
    fn csv_header_line() {
        assert_eq!(csv_head("round", Some(4), "a,b"), "# ctlp round seed=4\na,b\n");
        assert_eq!(csv_head("x", None, "a"), "# ctlp x seed=none\na\n");
    }

    #[test]
    fn argument_parsing() {
        let ok = Cli::try_parse_from(["ctlp", "gap", "collide", "--tau", "2,3", "--N", "50"]).unwrap();
        match ok.cmd {
            Cmd::Gap { cmd: GapCmd::Collide { tau, n, .. } } => {
                assert_eq!(tau, vec![2, 3]);
                assert_eq!(n, 50);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["ctlp", "round", "--instance", "a.json"]).is_err());
        assert!(Cli::try_parse_from(["ctlp", "test-sat", "--instance", "a", "--epsilon", "0.2", "--family", "cnf"]).is_err());
    }

    #[test]
    fn test_sat_reports_missing_instance() {
        let cli = Cli::try_parse_from([
            "ctlp", "test-sat", "--instance", "/nonexistent.json", "--epsilon", "0.2", "--family", "two-sat",
        ])
        .unwrap();
        assert!(run(cli.cmd).is_err());
    }

    #[test]
    fn missing_instance_is_io_error() {
        assert!(matches!(read_instance(Path::new("/nonexistent.json")), Err(Error::Io(_))));
    }
}
