use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use decept_core::adversary::Allocation;
use decept_core::instance::Instance;
use decept_core::mdp;
use decept_core::report::{self, Heatmap, Transform};
use decept_core::scp::{self, REACH_SLACK};

/// Default seed for `simulate`; runs are never seeded from the clock.
const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "decept", version, about = "Deceptive patrol allocation against a prospect-theory adversary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the allocation and write report, allocation and heatmap files.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Output directory (created if missing).
        #[arg(long, default_value = "decept-out")]
        out_dir: PathBuf,
    },
    /// Exact Q and reach probability of a fixed allocation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Allocation CSV; the uniform split of the budget if omitted.
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo estimate of Q and reach probability.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check an instance file and its model.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Instance file (decept-instance/1); the bundled synthetic grid if omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

/// Input problems exit with 2, everything else with 1.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(anyhow::Error, std::io::Error, scp::ScpError, report::ArtifactError);

fn input<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Input(e.into()))
}

fn load_instance(common: &Common) -> Result<Instance, Failure> {
    let mut inst = match &common.instance {
        Some(path) => input(Instance::load(path))?,
        None => Instance::bundled(),
    };
    if let Some(h) = common.horizon {
        inst.problem.horizon = h;
    }
    if let Some(d) = common.budget {
        inst.problem.budget = d;
    }
    if let Some(l) = common.lambda {
        inst.problem.lambda = l;
    }
    input(inst.check().context("after command-line overrides"))?;
    Ok(inst)
}

fn load_allocation(path: Option<&Path>, inst: &Instance, states: usize) -> Result<Allocation, Failure> {
    match path {
        None => Ok(Allocation::uniform(states, inst.problem.budget)),
        Some(p) => {
            let text = input(fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))?;
            input(report::parse_allocation_csv(&text, states).with_context(|| p.display().to_string()))
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("documents serialize") + "\n"
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Solve {
            common,
            epsilon,
            delta0,
            eta,
            out_dir,
        } => {
            let mut inst = load_instance(&common)?;
            let mut settings = inst.scp_settings();
            settings.epsilon = epsilon.unwrap_or(settings.epsilon);
            settings.delta0 = delta0.unwrap_or(settings.delta0);
            settings.delta_max = settings.delta_max.max(settings.delta0);
            settings.eta = eta.unwrap_or(settings.eta);
            inst.scp = Some(settings);
            input(inst.check().context("after command-line overrides"))?;

            let model = input(inst.model())?;
            let profile = input(inst.profile())?;
            let p = &inst.problem;
            let rep = scp::run(
                &model,
                &profile,
                p.horizon,
                p.budget,
                p.lambda,
                &inst.scp_settings(),
                &inst.solver_settings(),
            )?;

            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            write(&out_dir, "report.json", &report::solve_json(inst.name.as_deref(), &model, &profile, &rep)?)?;
            write(
                &out_dir,
                "allocation.csv",
                &report::allocation_csv(&model, &inst.crime(), &profile, &rep.allocation),
            )?;
            if let Some(h) = Heatmap::new(&model, &rep.allocation.utilities, Transform::Log10) {
                write(&out_dir, "heatmap.csv", &h.to_csv())?;
                write(&out_dir, "heatmap.svg", &h.to_svg(&model.sensitive_states()))?;
            }

            let tau = rep.iterations.last().map_or(f64::NAN, |it| it.tau);
            println!(
                "iterations {}  Q {:.6} (uniform {:.6})  reach {:.6} (bound {})  tau {:.4}  converged {}",
                rep.iterations.len(),
                rep.q,
                rep.initial_q,
                rep.reach,
                p.lambda,
                tau,
                rep.converged
            );
            println!(
                "solver {:.2}s, total {:.2}s; artifacts in {}",
                rep.timing.solver_seconds,
                rep.timing.total_seconds,
                out_dir.display()
            );
            if let Some(f) = &rep.failure {
                eprintln!("stopped early: {f}");
            }
            let ok = rep.converged && rep.reach <= p.lambda + REACH_SLACK;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Evaluate {
            common,
            allocation,
            out_dir,
        } => {
            let inst = load_instance(&common)?;
            let model = input(inst.model())?;
            let profile = input(inst.profile())?;
            let alloc = load_allocation(allocation.as_deref(), &inst, model.num_states())?;
            let ev = input(report::evaluate_allocation(&model, &profile, &alloc, inst.problem.horizon))?;
            let text = json(&ev);
            match out_dir {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write(&dir, "evaluation.json", &text)?;
                    println!("Q {}  reach {}", ev.q, ev.reach);
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            common,
            allocation,
            paths,
            seed,
            out_dir,
        } => {
            if paths == 0 {
                return Err(Failure::Input(anyhow!("--paths must be at least 1")));
            }
            let inst = load_instance(&common)?;
            let model = input(inst.model())?;
            let profile = input(inst.profile())?;
            let alloc = load_allocation(allocation.as_deref(), &inst, model.num_states())?;
            let sim = input(report::simulate_allocation(
                &model,
                &profile,
                &alloc,
                inst.problem.horizon,
                paths,
                seed,
            ))?;
            let text = json(&sim);
            match out_dir {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    write(&dir, "simulation.json", &text)?;
                    println!(
                        "Q {} ± {} (exact {})  reach {} ± {} (exact {})",
                        sim.cost.mean, sim.cost.stderr, sim.exact_q, sim.reach.mean, sim.reach.stderr, sim.exact_reach
                    );
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { common } => {
            let inst = load_instance(&common)?;
            let model = input(inst.model())?;
            let findings = mdp::validate(&model);
            if !findings.is_valid() {
                return Err(Failure::Input(anyhow!("{findings}")));
            }
            println!(
                "ok: {} states, {} actions, {} sensitive, H={}, D={}, lambda={}",
                model.num_states(),
                model.num_actions(),
                model.sensitive_states().len(),
                inst.problem.horizon,
                inst.problem.budget,
                inst.problem.lambda
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
