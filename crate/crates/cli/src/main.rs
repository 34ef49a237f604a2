//! `dsieve`: batch front end for hidden-shift instance generation, solving,
//! pre-sieve histograms, pairing checks, backend comparison and sieve
//! profiling. Everything is seedable and reproducible; auto-picked seeds are
//! recorded in the report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use dsieve_core::distributed::{apply_usort_via_schedule, build_comparator_schedule};
use dsieve_core::error::{Error, Result};
use dsieve_core::instances::{
    check_theorem1, check_theorem1_with, generate_instance, load_table1, Decomposition,
    HiddenShiftInstance,
};
use dsieve_core::rng;
use dsieve_core::sieve::{recover_shift, run_sieve, sample_label, Mode, SieveStats};
use dsieve_core::statevector::{
    run_distributed_round, run_single_node_round, RegId, RegisterLayout, StateVector,
};
use dsieve_core::verify::compare_backends;
use dsieve_core::{Backend, DEFAULT_QUBIT_CAP};

#[derive(Parser)]
#[command(name = "dsieve", version, about = "hidden-shift sieve toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file (or emit the embedded reference instance).
    Gen(GenArgs),
    /// Recover the hidden shift of an instance.
    Solve(SolveArgs),
    /// Histogram the pre-sieve label outcomes over many shots.
    Hist(HistArgs),
    /// Check the sorted-string pairing and the sorting-network unitary.
    Check(CheckArgs),
    /// Compare circuit and analytic label distributions.
    CompareBackends(CompareArgs),
    /// Profile the sieve: fresh-label cost and per-stage statistics.
    SieveProfile(ProfileArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Distributed,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Circuit,
    Analytic,
}

#[derive(Args)]
struct GenArgs {
    /// Emit the embedded 3-bit reference instance (shift 7).
    #[arg(long, conflicts_with_all = ["n", "m", "a", "seed"])]
    table1: bool,
    #[arg(short)]
    n: Option<u32>,
    #[arg(short)]
    m: Option<u32>,
    /// Planted shift; omit together with --blind for an unplanted file.
    #[arg(short)]
    a: Option<u64>,
    /// Strip the planted shift from the emitted file.
    #[arg(long)]
    blind: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(short, default_value_t = 1)]
    t: u32,
    #[arg(long, value_enum, default_value = "circuit")]
    backend: BackendArg,
    /// Fresh-label budget per recovered bit (default scales with M).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    instance: PathBuf,
    #[arg(short, default_value_t = 1)]
    t: u32,
    #[arg(long, value_enum, default_value = "circuit")]
    backend: BackendArg,
    #[arg(long, default_value_t = 2048)]
    shots: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; the outcome is independent of this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Prefix for the emitted CSVs (<prefix>.single.csv, <prefix>.dist.csv).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    instance: PathBuf,
    #[arg(short, default_value_t = 1)]
    t: u32,
    /// Check the pairing against this suffix shift instead of the planted one
    /// (required for blind instances).
    #[arg(long)]
    a2: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    instance: PathBuf,
    /// Distributed prefix width; omit for the single-node round.
    #[arg(short)]
    t: Option<u32>,
    #[arg(long, default_value_t = 4096)]
    rounds: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Label modulus exponent: sieves at M = 2^k.
    #[arg(short, default_value_t = 12)]
    k: u32,
    #[arg(long, default_value_t = 16)]
    trials: u64,
    #[arg(long)]
    no_salvage: bool,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the first trial's per-stage CSV here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Hist(args) => cmd_hist(args),
        Command::Check(args) => cmd_check(args),
        Command::CompareBackends(args) => cmd_compare(args),
        Command::SieveProfile(args) => cmd_profile(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code: u8 = match e {
                Error::Exhausted { .. } => 4,
                Error::VerificationFailed(_) | Error::NotSievedToTarget { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn qubit_cap() -> Result<usize> {
    match std::env::var("DSIEVE_QUBIT_CAP") {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::InvalidParameters(format!("DSIEVE_QUBIT_CAP={v} is not a number"))),
        Err(_) => Ok(DEFAULT_QUBIT_CAP),
    }
}

fn pick_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::rng().random())
}

fn backend_of(arg: BackendArg, cap: usize) -> Backend {
    match arg {
        BackendArg::Circuit => Backend::Circuit { qubit_cap: cap },
        BackendArg::Analytic => Backend::Analytic,
    }
}

/// Overwrites atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> Result<HiddenShiftInstance> {
    HiddenShiftInstance::from_json(&fs::read_to_string(path)?)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let inst = if args.table1 {
        load_table1()
    } else {
        let (Some(n), Some(m)) = (args.n, args.m) else {
            return Err(Error::InvalidParameters("need -n and -m (or --table1)".into()));
        };
        let seed = pick_seed(args.seed);
        let mut r = rng::master(seed);
        let a = args.a.unwrap_or_else(|| r.random_range(0..(1u64 << n)));
        eprintln!("seed: {seed}");
        generate_instance(n, m, a, &mut r)?
    };
    let inst = if args.blind { inst.blinded() } else { inst };
    write_atomic(&args.out, &inst.to_json())?;
    eprintln!("wrote {} (n={}, m={})", args.out.display(), inst.n(), inst.m());
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let cap = qubit_cap()?;
    let mode = match args.mode {
        ModeArg::Single => Mode::SingleNode,
        ModeArg::Distributed => Mode::Distributed { t: args.t },
    };
    let backend = backend_of(args.backend, cap);
    let seed = pick_seed(args.seed);
    let report = recover_shift(&inst, mode, backend, args.budget, seed)?;

    #[derive(Serialize)]
    struct SolveDoc<'a> {
        seed: u64,
        #[serde(flatten)]
        report: &'a dsieve_core::SolveReport,
    }
    let doc = serde_json::to_string_pretty(&SolveDoc { seed, report: &report })?;
    emit(args.out.as_deref(), &doc)?;
    match report.matched {
        Some(false) => Err(Error::VerificationFailed(format!(
            "recovered a={} does not match the planted shift",
            report.a
        ))),
        _ => Ok(ExitCode::SUCCESS),
    }
}

/// Runs `shots` independent rounds, split over threads; shot i always uses
/// the child stream (seed, tag, i), so `--jobs` never changes the counts.
fn shot_histogram(
    shots: u64,
    jobs: usize,
    modulus: u64,
    shot_fn: impl Fn(u64) -> Result<u64> + Sync,
) -> Result<Vec<u64>> {
    let jobs = jobs.clamp(1, 64);
    let chunk = shots.div_ceil(jobs as u64);
    let mut counts = vec![0u64; modulus as usize];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs as u64)
            .map(|j| {
                let shot_fn = &shot_fn;
                scope.spawn(move || -> Result<Vec<u64>> {
                    let mut local = vec![0u64; modulus as usize];
                    for shot in (j * chunk)..((j + 1) * chunk).min(shots) {
                        local[shot_fn(shot)? as usize] += 1;
                    }
                    Ok(local)
                })
            })
            .collect();
        for handle in handles {
            let local = handle.join().expect("worker panicked")?;
            for (c, l) in counts.iter_mut().zip(local) {
                *c += l;
            }
        }
        Ok::<_, Error>(())
    })?;
    Ok(counts)
}

fn histogram_csv(counts: &[u64]) -> String {
    let mut csv = String::from("outcome,count\n");
    for (outcome, count) in counts.iter().enumerate() {
        csv.push_str(&format!("{outcome},{count}\n"));
    }
    csv
}

fn cmd_hist(args: HistArgs) -> Result<ExitCode> {
    if args.shots == 0 {
        return Err(Error::InvalidParameters("need at least one shot".into()));
    }
    let inst = load_instance(&args.instance)?;
    let cap = qubit_cap()?;
    let seed = pick_seed(args.seed);
    let dec = Decomposition::new(&inst, args.t)?;
    let analytic = matches!(args.backend, BackendArg::Analytic);

    let single_m = inst.domain_size();
    let single = shot_histogram(args.shots, args.jobs, single_m, |shot| {
        let mut r = rng::stream(seed, &[1, shot]);
        if analytic {
            Ok(sample_label(single_m, &mut r).value())
        } else {
            Ok(run_single_node_round(&inst, cap, &mut r)?.label.value())
        }
    })?;
    let dist_m = dec.suffix_size();
    let dist = shot_histogram(args.shots, args.jobs, dist_m, |shot| {
        let mut r = rng::stream(seed, &[2, shot]);
        if analytic {
            Ok(sample_label(dist_m, &mut r).value())
        } else {
            Ok(run_distributed_round(&dec, cap, &mut r)?.label.value())
        }
    })?;

    let single_path = args.out.with_extension("single.csv");
    let dist_path = args.out.with_extension("dist.csv");
    write_atomic(&single_path, &histogram_csv(&single))?;
    write_atomic(&dist_path, &histogram_csv(&dist))?;

    #[derive(Serialize)]
    struct HistSummary {
        seed: u64,
        shots: u64,
        single_modulus: u64,
        single_useful_count: u64,
        single_expected_useful_frequency: f64,
        distributed_modulus: u64,
        distributed_useful_count: u64,
        distributed_expected_useful_frequency: f64,
        files: [String; 2],
    }
    let summary = HistSummary {
        seed,
        shots: args.shots,
        single_modulus: single_m,
        single_useful_count: single[(single_m / 2) as usize],
        single_expected_useful_frequency: 1.0 / single_m as f64,
        distributed_modulus: dist_m,
        distributed_useful_count: dist[(dist_m / 2) as usize],
        distributed_expected_useful_frequency: 1.0 / dist_m as f64,
        files: [single_path.display().to_string(), dist_path.display().to_string()],
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

/// Exhaustive schedule-vs-direct sorting-unitary check on a miniature
/// layout with the same node count (1-bit outputs keep it enumerable).
fn usort_schedule_check(t: u32) -> Result<()> {
    let nodes = 1usize << t;
    let schedule = build_comparator_schedule(nodes, 1)?;
    let names: Vec<String> = (0..nodes).map(|i| format!("node{i}")).collect();
    let mut spec: Vec<(&str, u32)> = vec![("input", 1)];
    for name in &names {
        spec.push((name, 1));
    }
    spec.push(("sorted", nodes as u32));
    let qubits = 1 + 2 * nodes as u32;
    for basis in 0..(1usize << qubits) {
        let layout = RegisterLayout::new(&spec)?;
        let regs: Vec<RegId> = names.iter().map(|n| layout.id(n)).collect::<Result<_>>()?;
        let sorted = layout.id("sorted")?;
        let mut direct = StateVector::zero_state(layout, qubits as usize + 1)?;
        direct.set_basis(basis);
        let mut via = direct.clone();
        direct.apply_usort(&regs, sorted)?;
        apply_usort_via_schedule(&mut via, &regs, sorted, &schedule)?;
        if direct.find_single_basis() != via.find_single_basis() {
            return Err(Error::VerificationFailed(format!(
                "sorting network disagrees with direct gate on basis state {basis}"
            )));
        }
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let dec = Decomposition::new(&inst, args.t)?;
    let report = match args.a2 {
        Some(a2) => {
            if a2 >= dec.suffix_size() {
                return Err(Error::InvalidParameters(format!(
                    "a2={a2} exceeds the suffix width"
                )));
            }
            check_theorem1_with(&dec, a2)
        }
        None => check_theorem1(&dec)?,
    };
    usort_schedule_check(args.t)?;

    #[derive(Serialize)]
    struct CheckDoc {
        pairing: dsieve_core::instances::Theorem1Report,
        sorting_network_exhaustive: bool,
    }
    let pass = report.pass;
    let doc = CheckDoc { pairing: report, sorting_network_exhaustive: true };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::VerificationFailed("sorted-string pairing has a counterexample".into()))
    }
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let cap = qubit_cap()?;
    let seed = pick_seed(args.seed);
    let cmp = compare_backends(&inst, args.t, args.rounds, cap, seed)?;

    #[derive(Serialize)]
    struct CompareDoc<'a> {
        seed: u64,
        #[serde(flatten)]
        comparison: &'a dsieve_core::verify::BackendComparison,
    }
    let doc = serde_json::to_string_pretty(&CompareDoc { seed, comparison: &cmp })?;
    emit(args.out.as_deref(), &doc)?;
    if cmp.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::VerificationFailed("backend distributions disagree".into()))
    }
}

fn cmd_profile(args: ProfileArgs) -> Result<ExitCode> {
    if args.k < 2 || args.k > 40 {
        return Err(Error::InvalidParameters(format!("k={} out of range 2..=40", args.k)));
    }
    if args.trials == 0 {
        return Err(Error::InvalidParameters("need at least one trial".into()));
    }
    let modulus = 1u64 << args.k;
    let seed = pick_seed(args.seed);
    let salvage = !args.no_salvage;
    let budget = args.budget.unwrap_or(u64::MAX);

    let jobs = args.jobs.clamp(1, 64);
    let run_trial = |trial: u64| -> Result<SieveStats> {
        let mut r = rng::stream(seed, &[trial]);
        run_sieve(|rng| Ok(sample_label(modulus, rng)), modulus, budget, salvage, &mut r)
            .map(|(_, stats)| stats)
    };
    let mut all: Vec<SieveStats> = Vec::with_capacity(args.trials as usize);
    std::thread::scope(|scope| {
        let chunk = args.trials.div_ceil(jobs as u64);
        let handles: Vec<_> = (0..jobs as u64)
            .map(|j| {
                let run_trial = &run_trial;
                scope.spawn(move || -> Result<Vec<(u64, SieveStats)>> {
                    ((j * chunk)..((j + 1) * chunk).min(args.trials))
                        .map(|trial| Ok((trial, run_trial(trial)?)))
                        .collect()
                })
            })
            .collect();
        for handle in handles {
            all.extend(handle.join().expect("worker panicked")?.into_iter().map(|(_, s)| s));
        }
        Ok::<_, Error>(())
    })?;

    let mut costs: Vec<u64> = all.iter().map(|s| s.fresh_drawn).collect();
    costs.sort_unstable();
    #[derive(Serialize)]
    struct ProfileDoc<'a> {
        seed: u64,
        k: u32,
        modulus: u64,
        trials: u64,
        salvage: bool,
        fresh_labels_min: u64,
        fresh_labels_median: u64,
        fresh_labels_max: u64,
        lucky_draws: u64,
        first_trial: &'a SieveStats,
    }
    let doc = ProfileDoc {
        seed,
        k: args.k,
        modulus,
        trials: args.trials,
        salvage,
        fresh_labels_min: costs[0],
        fresh_labels_median: costs[costs.len() / 2],
        fresh_labels_max: costs[costs.len() - 1],
        lucky_draws: all.iter().filter(|s| s.lucky_draw).count() as u64,
        first_trial: &all[0],
    };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(out) = &args.out {
        write_atomic(out, &all[0].to_csv())?;
    }
    Ok(ExitCode::SUCCESS)
}
