use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use flashread_core::ldpc::CodeSpec;
use flashread_core::policy::save_policy;
use flashread_harness::capacity::{run_capacity_report, CapacityConfig};
use flashread_harness::compare::{run_strategy_comparison, CompareConfig};
use flashread_harness::config::load;
use flashread_harness::ldpc_cmd::{self, LdpcBuildConfig};
use flashread_harness::output::RunOutput;
use flashread_harness::policy_cmd::{self, PolicyBuildConfig, PolicyRunConfig};
use flashread_harness::propagation::{run_error_propagation, PropagationConfig};
use flashread_harness::simulate::{run_estimate, run_simulate, EstimateConfig, SimulateConfig};
use flashread_harness::table1::{self, Table1Config};

#[derive(Parser)]
#[command(name = "flashread", version, about = "Adaptive read-threshold experiments for SLC flash")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw reads at fixed thresholds.
    Simulate(Common),
    /// Estimate level parameters from a reads CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// CSV with `trial,t,y` rows, as written by `simulate`.
        #[arg(long)]
        reads: PathBuf,
    },
    /// Estimation error against read-noise amplitude.
    Propagation(Common),
    /// Codeword failure rates of a hard decoder.
    Table1(Common),
    /// Mutual information and the mismatched-decoding bound.
    Capacity(Common),
    #[command(subcommand)]
    Policy(PolicyCommand),
    #[command(subcommand)]
    Ldpc(LdpcCommand),
    /// Compare read strategies on estimation error and LDPC failures.
    Compare(Common),
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Solve the read-threshold recursion and save the policy.
    Build(Common),
    /// Print a summary of a saved policy.
    Show {
        policy: PathBuf,
    },
    /// Run a saved policy against a simulated page.
    Run {
        #[command(flatten)]
        common: Common,
        /// Policy file; overrides the config's `policy`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LdpcCommand {
    /// Construct a parity-check matrix and write it as text.
    Build(Common),
    /// Decode one word of LLRs (one per line, ln P(0)/P(1)).
    Decode {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        llr: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

macro_rules! apply {
    ($cfg:expr, $c:expr, seed) => {
        if let Some(s) = $c.seed {
            $cfg.seed = s;
        }
    };
    ($cfg:expr, $c:expr, trials) => {
        if let Some(t) = $c.trials {
            $cfg.trials = t;
        }
    };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(c) => {
            let mut cfg: SimulateConfig = load(c.config.as_deref())?;
            apply!(cfg, c, seed);
            apply!(cfg, c, trials);
            let csv = run_simulate(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("reads.csv", &csv)?;
            out.finish("simulate", &cfg, Some(cfg.seed))?;
        }
        Command::Estimate { common: c, reads } => {
            let cfg: EstimateConfig = load(c.config.as_deref())?;
            let bytes = std::fs::read(&reads).with_context(|| format!("reading {}", reads.display()))?;
            let csv = run_estimate(&cfg, &bytes)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("estimates.csv", &csv)?;
            out.finish("estimate", &cfg, None)?;
        }
        Command::Propagation(c) => {
            let mut cfg: PropagationConfig = load(c.config.as_deref())?;
            apply!(cfg, c, seed);
            apply!(cfg, c, trials);
            let report = run_error_propagation(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("propagation.csv", &report.to_csv()?)?;
            out.write_json("propagation.json", &report)?;
            out.finish("propagation", &cfg, Some(cfg.seed))?;
        }
        Command::Table1(c) => {
            let cfg: Table1Config = load(c.config.as_deref())?;
            let cells = table1::run_table1(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("table1.csv", &table1::to_csv(&cells)?)?;
            out.finish("table1", &cfg, None)?;
        }
        Command::Capacity(c) => {
            let cfg: CapacityConfig = load(c.config.as_deref())?;
            let report = run_capacity_report(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write_json("capacity.json", &report)?;
            out.finish("capacity", &cfg, None)?;
        }
        Command::Policy(PolicyCommand::Build(c)) => {
            let cfg: PolicyBuildConfig = load(c.config.as_deref())?;
            let tables = policy_cmd::run_policy_build(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            save_policy(&tables, &out.path("policy.bin"))?;
            out.record("policy.bin")?;
            out.write_json("policy.json", &policy_cmd::summarize(&tables))?;
            out.finish("policy build", &cfg, None)?;
        }
        Command::Policy(PolicyCommand::Show { policy }) => {
            let tables = policy_cmd::load(&policy)?;
            println!("{}", serde_json::to_string_pretty(&policy_cmd::summarize(&tables))?);
        }
        Command::Policy(PolicyCommand::Run { common: c, policy }) => {
            let mut cfg: PolicyRunConfig = load(c.config.as_deref())?;
            apply!(cfg, c, seed);
            apply!(cfg, c, trials);
            if policy.is_some() {
                cfg.policy = policy;
            }
            let path = cfg.policy.clone().context("no policy file given (--policy or config `policy`)")?;
            let tables = policy_cmd::load(&path)?;
            let csv = policy_cmd::run_policy(&cfg, &tables)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("policy_run.csv", &csv)?;
            out.finish("policy run", &cfg, Some(cfg.seed))?;
        }
        Command::Ldpc(LdpcCommand::Build(c)) => {
            let mut cfg: LdpcBuildConfig = load(c.config.as_deref())?;
            apply!(cfg, c, seed);
            let code = ldpc_cmd::run_ldpc_build(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("code.txt", code.to_text().as_bytes())?;
            out.write_json("code.json", &ldpc_cmd::summarize(&code))?;
            out.finish("ldpc build", &cfg, Some(cfg.seed))?;
        }
        Command::Ldpc(LdpcCommand::Decode { code, llr, out }) => {
            let spec = read_code(&code)?;
            let text = std::fs::read_to_string(&llr).with_context(|| format!("reading {}", llr.display()))?;
            let outcome = ldpc_cmd::run_ldpc_decode(&spec, &ldpc_cmd::parse_llrs(&text)?)?;
            let mut run = RunOutput::new(&out)?;
            run.write_json("decode.json", &outcome)?;
            let inputs = serde_json::json!({ "code": code, "llr": llr });
            run.finish("ldpc decode", &inputs, None)?;
        }
        Command::Compare(c) => {
            let mut cfg: CompareConfig = load(c.config.as_deref())?;
            apply!(cfg, c, seed);
            apply!(cfg, c, trials);
            let report = run_strategy_comparison(&cfg)?;
            let mut out = RunOutput::new(&c.out)?;
            out.write("compare.csv", &report.to_csv()?)?;
            out.write_json("compare.json", &report.to_table_json())?;
            out.finish("compare", &cfg, Some(cfg.seed))?;
        }
    }
    Ok(())
}

fn read_code(path: &Path) -> Result<CodeSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CodeSpec::parse(&text).with_context(|| format!("parsing {}", path.display()))
}
