//! Batch CLI: simulate replicates, evaluate Monte Carlo truths, run
//! estimators on a dataset, and sweep estimator performance across scenario
//! grids. Every run is reproducible from (scenario file, flags, seed); the
//! invoked flags are echoed into output files as `#` comment headers.

use clap::{Args, Parser, Subcommand};
use netsem::causaltarget::{mc_target_mean, replicate_means};
use netsem::error::{Error, Result};
use netsem::estimators::bootstrap::{bootstrap_variance, Estimator};
use netsem::estimators::experiment::{metrics_csv, scenario_sweep};
use netsem::estimators::{build_summaries, gcomp::gcomp, ipw::ipw};
use netsem::netgraph::NetworkMatrix;
use netsem::scenario::Scenario;
use netsem::simengine::{simulate, write_atomic, Dataset, RngFactory};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "netsem", version, about = "network SEM simulation and estimation")]
struct Cli {
    /// Worker threads (falls back to NETSEM_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replicate and write data + network CSVs
    Simulate(SimulateArgs),
    /// Monte Carlo evaluation of the mean counterfactual outcome
    Truth(TruthArgs),
    /// Run the estimators on one dataset
    Estimate(EstimateArgs),
    /// Replicated estimator comparison across interpolated scenarios
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Simulate under this action instead of the observed mechanism
    #[arg(long)]
    action: Option<String>,
    /// Output directory (data.csv, network.csv)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TruthArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    action: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Optional per-replicate CSV of mean outcomes
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Data CSV (written by `simulate`); requires --net for network models
    #[arg(long, conflicts_with = "simulate_fresh")]
    data: Option<PathBuf>,
    /// Network CSV matching --data
    #[arg(long, requires = "data")]
    net: Option<PathBuf>,
    /// Simulate a fresh replicate instead of reading --data
    #[arg(long)]
    simulate_fresh: bool,
    /// Units for --simulate-fresh (default: the scenario's experiment n)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Number of interpolated scenarios (default: from the scenario file)
    #[arg(long)]
    k: Option<usize>,
    /// Replicates per scenario (default: from the scenario file)
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn header(invocation: &str) -> String {
    format!("# netsem {invocation}\n")
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let scn = Scenario::load(&a.scenario)?;
    let ds = simulate(
        &scn.model,
        a.action.as_deref(),
        a.n,
        a.seed,
        "sim",
        0,
    )?;
    std::fs::create_dir_all(&a.out)?;
    let hdr = header(&format!(
        "simulate --scenario {} --n {} --seed {}{} --out {}",
        a.scenario.display(),
        a.n,
        a.seed,
        a.action
            .as_deref()
            .map_or(String::new(), |s| format!(" --action {s}")),
        a.out.display()
    ));
    write_atomic(
        &a.out.join("data.csv"),
        &format!("{hdr}{}", ds.to_csv_string()),
    )?;
    if let Some(net) = &ds.network {
        write_atomic(
            &a.out.join("network.csv"),
            &format!("{hdr}{}", net.to_csv_string()),
        )?;
    }
    println!(
        "wrote {} ({} units{})",
        a.out.join("data.csv").display(),
        ds.n,
        if ds.network.is_some() {
            ", with network.csv"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_truth(a: &TruthArgs) -> Result<()> {
    let scn = Scenario::load(&a.scenario)?;
    let outcome = scn
        .estimation
        .as_ref()
        .map(|e| e.outcome.clone())
        .map_or_else(|| scn.model.default_outcome().map(str::to_string), Ok)?;
    if scn.model.action(&a.action).is_none() {
        return Err(Error::validation(format!(
            "unknown action {:?}",
            a.action
        )));
    }
    let means = replicate_means(
        &scn.model,
        Some(&a.action),
        &outcome,
        a.n,
        a.reps,
        a.seed,
        "truth",
    )?;
    let t = mc_target_mean(&scn.model, Some(&a.action), &outcome, a.n, a.reps, a.seed)?;
    println!(
        "psi0 = {:.6}  mc_se = {:.6}  reps = {}  n = {}",
        t.psi, t.mc_se, t.replicates, a.n
    );
    if let Some(out) = &a.out {
        let hdr = header(&format!(
            "truth --scenario {} --action {} --n {} --reps {} --seed {} --out {}",
            a.scenario.display(),
            a.action,
            a.n,
            a.reps,
            a.seed,
            out.display()
        ));
        let mut body = String::from("replicate,mean_outcome\n");
        for (r, m) in means.iter().enumerate() {
            body.push_str(&format!("{r},{m}\n"));
        }
        write_atomic(out, &format!("{hdr}{body}"))?;
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let scn = Scenario::load(&a.scenario)?;
    let cfg = scn
        .estimation
        .as_ref()
        .ok_or_else(|| Error::validation("scenario has no [estimation] section"))?;
    let mut ds = match (&a.data, a.simulate_fresh) {
        (Some(path), false) => {
            let mut ds = Dataset::read_csv(path)?;
            if let Some(net_path) = &a.net {
                let net = NetworkMatrix::read_csv(net_path)?;
                if net.n() != ds.n {
                    return Err(Error::validation(format!(
                        "network has {} units, data has {}",
                        net.n(),
                        ds.n
                    )));
                }
                ds.network = Some(net);
            }
            ds
        }
        (None, true) => {
            let n = a
                .n
                .or_else(|| scn.experiment.as_ref().map(|e| e.n))
                .ok_or_else(|| {
                    Error::validation("--simulate-fresh needs --n or an [experiment] section")
                })?;
            simulate(&scn.model, None, n, a.seed, "exp", 0)?
        }
        _ => {
            return Err(Error::validation(
                "estimate needs exactly one of --data or --simulate-fresh",
            ))
        }
    };
    if ds.network.is_none() && cfg.summaries.iter().any(|s| s.expr.uses_network()) {
        return Err(Error::validation(
            "summaries use the network; pass --net with --data",
        ));
    }
    build_summaries(&mut ds, &cfg.summaries)?;

    let estimators = scn
        .experiment
        .as_ref()
        .map(|e| e.estimators.clone())
        .unwrap_or_else(|| vec![Estimator::Gcomp, Estimator::Ipw]);
    let factory = RngFactory::new(a.seed);
    let mut body = String::from("estimator,estimate,var_iid,var_boot,n_capped,n_zero_den\n");
    for est in &estimators {
        let (estimate, var_iid, n_capped, n_zero_den) = match est {
            Estimator::Gcomp => {
                let g = gcomp(&ds, cfg)?;
                (g.estimate, g.var_iid, 0, 0)
            }
            Estimator::Ipw => {
                let i = ipw(&ds, cfg)?;
                (i.estimate, i.var_iid, i.n_capped, i.n_zero_den)
            }
        };
        let var_boot = if cfg.n_bootstrap >= 2 {
            format!(
                "{:.8}",
                bootstrap_variance(
                    &ds,
                    cfg,
                    *est,
                    cfg.n_bootstrap,
                    &factory,
                    &format!("est/{}", est.name()),
                )?
            )
        } else {
            String::new()
        };
        body.push_str(&format!(
            "{},{:.8},{:.8},{var_boot},{n_capped},{n_zero_den}\n",
            est.name(),
            estimate,
            var_iid
        ));
        println!("{}: estimate = {estimate:.6}  var_iid = {var_iid:.6}", est.name());
    }
    let hdr = header(&format!(
        "estimate --scenario {}{}{}{} --seed {} --out {}",
        a.scenario.display(),
        a.data
            .as_ref()
            .map_or(String::new(), |d| format!(" --data {}", d.display())),
        a.net
            .as_ref()
            .map_or(String::new(), |m| format!(" --net {}", m.display())),
        if a.simulate_fresh {
            " --simulate-fresh".to_string()
        } else {
            String::new()
        },
        a.seed,
        a.out.display()
    ));
    write_atomic(&a.out, &format!("{hdr}{body}"))?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let scn = Scenario::load(&a.scenario)?;
    let cfg = scn
        .estimation
        .as_ref()
        .ok_or_else(|| Error::validation("scenario has no [estimation] section"))?;
    let exp_base = scn
        .experiment
        .as_ref()
        .ok_or_else(|| Error::validation("scenario has no [experiment] section"))?;
    let sweep = scn
        .sweep
        .as_ref()
        .ok_or_else(|| Error::validation("scenario has no [sweep] section"))?;
    let mut exp = exp_base.clone();
    exp.seed = a.seed;
    if let Some(reps) = a.reps {
        exp.reps = reps;
    }
    let points = a.k.unwrap_or(sweep.scenarios);
    let out = scenario_sweep(
        |coefs| scn.sweep_model(sweep, coefs),
        cfg,
        &exp,
        &sweep.start,
        &sweep.end,
        points,
    )?;
    let hdr = header(&format!(
        "sweep --scenario {} --k {points} --reps {} --seed {} --out {}",
        a.scenario.display(),
        exp.reps,
        a.seed,
        a.out.display()
    ));
    write_atomic(&a.out, &format!("{hdr}{}", metrics_csv(&out.rows)))?;
    if out.failed_replicates > 0 {
        eprintln!("warning: {} replicates failed and were skipped", out.failed_replicates);
    }
    println!("wrote {} ({} rows)", a.out.display(), out.rows.len());
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("NETSEM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run() -> Result<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage problems exit 1, --help/--version exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            std::process::exit(code);
        }
    };
    if let Some(t) = thread_count(cli.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::parameter(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truth(a) => cmd_truth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
