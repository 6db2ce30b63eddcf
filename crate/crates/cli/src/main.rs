//! Batch runner: one scenario per invocation, configured by a TOML file.
//!
//! Exit codes: 0 success, 1 scenario failure, 2 config error.

mod config;
mod manifest;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use czlab::acceptance::DEFAULT_SEED;
use czlab::rng::GENERATOR_ID;

use config::{section, ExperimentConfig};
use manifest::RunManifest;
use scenarios::Job;

#[derive(Parser, Debug)]
#[command(
    name = "czlab",
    version,
    about = "Numerical experiments on multilinear singular integrals"
)]
struct Cli {
    #[command(subcommand)]
    scenario: Scenario,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Scenario {
    /// Certify size and regularity conditions of a built-in kernel.
    VerifyKernel(RunArgs),
    /// Lower estimate of the A_p constant over a cube family.
    ApConstant(RunArgs),
    /// Evaluate T, G or G* on sampled inputs.
    RunOperator(RunArgs),
    /// Operator norm ratios over a test set and grid sequence.
    EmpiricalRatio(RunArgs),
    /// Evaluate an iterated commutator.
    CommutatorRun(RunArgs),
    /// Truncation convergence study of an iterated commutator.
    CommutatorConvergence(RunArgs),
    /// Near and far integrals against the maximal function.
    CommutatorNearFar(RunArgs),
    /// Decay of an iterated commutator far from the symbol supports.
    CommutatorDecay(RunArgs),
    /// Translation modulus of an iterated commutator.
    TranslationModulus(RunArgs),
    /// Tail and modulus curves of a family, with a verdict.
    FkCheck(RunArgs),
    /// Greedy epsilon-net with a distance certificate.
    NetBuild(RunArgs),
    /// Run the acceptance suite.
    Acceptance(RunArgs),
}

impl Scenario {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Scenario::VerifyKernel(a) => ("verify-kernel", a),
            Scenario::ApConstant(a) => ("ap-constant", a),
            Scenario::RunOperator(a) => ("run-operator", a),
            Scenario::EmpiricalRatio(a) => ("empirical-ratio", a),
            Scenario::CommutatorRun(a) => ("commutator-run", a),
            Scenario::CommutatorConvergence(a) => ("commutator-convergence", a),
            Scenario::CommutatorNearFar(a) => ("commutator-near-far", a),
            Scenario::CommutatorDecay(a) => ("commutator-decay", a),
            Scenario::TranslationModulus(a) => ("translation-modulus", a),
            Scenario::FkCheck(a) => ("fk-check", a),
            Scenario::NetBuild(a) => ("net-build", a),
            Scenario::Acceptance(a) => ("acceptance", a),
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Scenario(anyhow::Error),
}

/// Validates the config section and returns the job with the seed it uses.
fn plan(name: &str, cfg: &ExperimentConfig, seed_flag: Option<u64>) -> Result<(Job, u64)> {
    let seed = seed_flag.or(cfg.seed);
    let need_seed = || seed.context("no seed: set `seed` in the config or pass --seed");
    Ok(match name {
        "verify-kernel" => {
            let s = need_seed()?;
            (
                scenarios::verify_kernel(section(&cfg.verify_kernel, "verify_kernel")?, s)?,
                s,
            )
        }
        "ap-constant" => (
            scenarios::ap_constant_run(section(&cfg.ap_constant, "ap_constant")?)?,
            need_seed()?,
        ),
        "run-operator" => (
            scenarios::run_operator(section(&cfg.run_operator, "run_operator")?)?,
            need_seed()?,
        ),
        "empirical-ratio" => (
            scenarios::empirical_ratio_run(section(&cfg.empirical_ratio, "empirical_ratio")?)?,
            need_seed()?,
        ),
        "commutator-run" => (
            scenarios::commutator_run(section(&cfg.commutator_run, "commutator_run")?)?,
            need_seed()?,
        ),
        "commutator-convergence" => (
            scenarios::commutator_convergence(section(
                &cfg.commutator_convergence,
                "commutator_convergence",
            )?)?,
            need_seed()?,
        ),
        "commutator-near-far" => (
            scenarios::commutator_near_far(section(
                &cfg.commutator_near_far,
                "commutator_near_far",
            )?)?,
            need_seed()?,
        ),
        "commutator-decay" => (
            scenarios::commutator_decay(section(&cfg.commutator_decay, "commutator_decay")?)?,
            need_seed()?,
        ),
        "translation-modulus" => (
            scenarios::translation_modulus(section(
                &cfg.translation_modulus,
                "translation_modulus",
            )?)?,
            need_seed()?,
        ),
        "fk-check" => (
            scenarios::fk_check(section(&cfg.fk_check, "fk_check")?)?,
            need_seed()?,
        ),
        "net-build" => (
            scenarios::net_build(section(&cfg.net_build, "net_build")?)?,
            need_seed()?,
        ),
        "acceptance" => {
            let s = seed.unwrap_or(DEFAULT_SEED);
            let c = cfg.acceptance.clone().unwrap_or_default();
            (scenarios::acceptance_run(&c, s)?, s)
        }
        other => unreachable!("unknown scenario {other}"),
    })
}

fn execute(name: &str, args: &RunArgs) -> std::result::Result<bool, Failure> {
    let started = Instant::now();
    let (cfg, digest) = match &args.config {
        Some(path) => {
            let (cfg, bytes) = config::load(path).map_err(Failure::Config)?;
            (cfg, Some(manifest::sha256_hex(&bytes)))
        }
        None if name == "acceptance" => (ExperimentConfig::default(), None),
        None => {
            return Err(Failure::Config(anyhow::anyhow!(
                "--config is required for {name}"
            )))
        }
    };
    let pool = match args.threads {
        Some(0) => {
            return Err(Failure::Config(anyhow::anyhow!(
                "--threads must be positive"
            )))
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Config(e.into()))?,
        None => rayon::ThreadPoolBuilder::new()
            .build()
            .map_err(|e| Failure::Config(e.into()))?,
    };
    pool.install(|| {
        let (job, seed) = plan(name, &cfg, args.seed).map_err(Failure::Config)?;
        let produced = job().map_err(|e| Failure::Scenario(e.context(format!("{name} failed"))))?;
        for line in &produced.lines {
            println!("{line}");
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            scenario: name.to_string(),
            config_sha256: digest,
            seed,
            rng: GENERATOR_ID,
            threads: args.threads,
            pass: produced.pass,
            outputs: manifest::entries(&produced.files),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        manifest::write_all(&args.out, &produced.files, &manifest).map_err(Failure::Scenario)?;
        Ok(produced.pass)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.scenario.parts();
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{name}: scenario did not pass");
            ExitCode::from(1)
        }
        Err(Failure::Scenario(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}
