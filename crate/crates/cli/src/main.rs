//! `vcomp`: balanced ANOVA tables, exact sum-of-squares laws, and seeded
//! Monte Carlo verification from the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 verification failure.

mod data;
mod model_file;
mod render;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vcomp::simulation::{self, LemmaReport};
use vcomp::{anova, theory, ModelParams, ModelSpec, SeedPolicy, SimReport};

use model_file::ModelSpecFile;
use render::Format;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Verification(m) => f.write_str(m),
        }
    }
}

impl From<vcomp::Error> for CliError {
    fn from(e: vcomp::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "vcomp",
    version,
    about = "Balanced ANOVA with exact sum-of-squares laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ANOVA table, EMS, F tests and variance-component estimates for a dataset.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one dataset from the model and write it as CSV.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every derived sum-of-squares law against simulation.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker streams; the result depends on this value, not on the host.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long = "alpha", default_values_t = [0.05])]
        alphas: Vec<f64>,
        /// Path for the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check against laws rescaled by 1.25 (negative control).
        #[arg(long, hide = true)]
        inject_wrong_law: bool,
    },
    /// Power of each F test at the given level.
    Power {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        scenario: Scenario,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Scenario {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Variance component of a random term, `NAME=VALUE`; repeatable.
    #[arg(long = "var", value_name = "NAME=VALUE", allow_negative_numbers = true)]
    variances: Vec<Assignment<f64>>,
    /// Effects of a fixed term in cell order, `NAME=v1,v2,...`; repeatable.
    #[arg(
        long = "fixed",
        value_name = "NAME=V1,V2,...",
        allow_negative_numbers = true
    )]
    fixed: Vec<Assignment<Vec<f64>>>,
}

#[derive(Debug, Clone)]
struct Assignment<T> {
    name: String,
    value: T,
}

impl FromStr for Assignment<f64> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, v) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
        let value = v
            .trim()
            .parse()
            .map_err(|_| format!("not a number: {v:?}"))?;
        Ok(Assignment {
            name: name.trim().to_owned(),
            value,
        })
    }
}

impl FromStr for Assignment<Vec<f64>> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, vs) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=V1,V2,..., got {s:?}"))?;
        let value = vs
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("not a number: {v:?}")))
            .collect::<Result<_, _>>()?;
        Ok(Assignment {
            name: name.trim().to_owned(),
            value,
        })
    }
}

impl Scenario {
    fn params(&self, spec: &ModelSpec) -> Result<ModelParams, CliError> {
        let mut params = ModelParams::new(self.mu, self.sigma2);
        for a in &self.variances {
            params = params.with_variance(a.name.clone(), a.value);
        }
        for a in &self.fixed {
            params = params.with_fixed(a.name.clone(), a.value.clone());
        }
        params.validate(spec)?;
        Ok(params)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<ModelSpec, CliError> {
    let file = ModelSpecFile::parse(&read(path)?)
        .map_err(|e| CliError::Validation(format!("invalid model file {}: {e}", path.display())))?;
    Ok(file.to_spec()?)
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    simulation: SimReport,
    lemma_checks: Vec<LemmaReport>,
}

fn analyze(data: &Path, model: &Path, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let spec = load_model(model)?;
    let dataset = data::parse_dataset(&read(data)?, &spec)?;
    let table = anova::attach_tests(&anova::decompose(&dataset), &spec)?;
    let components = anova::estimate_components(&table, &spec).map_err(|e| e.to_string());
    let text = match format {
        Format::Text => render::table_text(&table, &components),
        Format::Csv => render::table_csv(&table),
        Format::Json => render::table_json(&table, &components),
    };
    emit(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn verify(
    model: &Path,
    scenario: &Scenario,
    reps: usize,
    seed: u64,
    workers: usize,
    alphas: &[f64],
    out: Option<&Path>,
    inject_wrong_law: bool,
) -> Result<(), CliError> {
    let spec = load_model(model)?;
    let params = scenario.params(&spec)?;
    if workers == 0 {
        return Err(CliError::Validation("workers must be at least 1".into()));
    }
    let policy = SeedPolicy::new(seed, workers);
    let mut laws = theory::ss_laws(&spec, &params)?;
    if inject_wrong_law {
        for l in &mut laws.laws {
            l.law = l.law.rescaled(1.25)?;
        }
    }
    let sim = simulation::run_verification_against(&spec, &params, &laws, reps, alphas, policy)?;

    // each compounding step with a nondegenerate mixing law gets its own check,
    // seeded from the master seed by its position
    let mut lemma_checks = Vec::new();
    for (i, law) in laws
        .laws
        .iter()
        .filter(|l| l.derivation.c2 > 0.0)
        .enumerate()
    {
        let d = law.derivation;
        let lemma_policy = SeedPolicy::new(seed.wrapping_add(1 + i as u64), workers);
        lemma_checks.push(simulation::lemma_check(
            d.c1,
            d.df,
            d.c2,
            d.gamma2,
            reps,
            lemma_policy,
        )?);
    }
    let passed = sim.passed && lemma_checks.iter().all(|l| l.passed);

    let mut summary = format!(
        "design {} reps {} seed {} workers {}\n",
        sim.design, sim.replications, sim.master_seed, sim.worker_count
    );
    for s in &sim.sources {
        summary.push_str(&format!(
            "  {:<16} mean {} (law {})  ks p {}\n",
            s.source,
            render::num(s.empirical_mean),
            render::num(s.theoretical_mean),
            render::num(s.ks_p_value)
        ));
    }
    for r in &sim.rejection_rates {
        summary.push_str(&format!(
            "  reject {} vs {} at {}: {} (law {})\n",
            r.source,
            r.denominator,
            r.alpha,
            render::num(r.rate),
            render::num(r.expected)
        ));
    }
    if !sim.noncentral_mixing_sources.is_empty() {
        summary.push_str(&format!(
            "  noncentral mixing: {}\n",
            sim.noncentral_mixing_sources.join(", ")
        ));
    }
    for l in &lemma_checks {
        summary.push_str(&format!(
            "  compound ({}, {}, {}, {}) ks p {} mgf err {}\n",
            l.c1,
            l.df,
            l.c2,
            l.gamma2,
            render::num(l.ks_p_value),
            l.mgf_max_relative_error
                .map(render::num)
                .unwrap_or_default()
        ));
    }
    let failed: Vec<String> = sim
        .failed_checks()
        .chain(
            lemma_checks
                .iter()
                .flat_map(|l| l.checks.iter().filter(|c| !c.passed)),
        )
        .map(|c| {
            format!(
                "{} = {} (threshold {})",
                c.name,
                render::num(c.statistic),
                render::num(c.threshold)
            )
        })
        .collect();
    let total = sim.checks.len() + lemma_checks.iter().map(|l| l.checks.len()).sum::<usize>();

    let report = VerifyReport {
        passed,
        simulation: sim,
        lemma_checks,
    };
    if let Some(path) = out {
        emit(Some(path), &render::json(&report))?;
    }
    if passed {
        summary.push_str(&format!("PASS: all {total} checks passed\n"));
        print!("{summary}");
        Ok(())
    } else {
        summary.push_str(&format!(
            "FAIL: {} of {total} checks failed\n",
            failed.len()
        ));
        for f in &failed {
            summary.push_str(&format!("  {f}\n"));
        }
        print!("{summary}");
        Err(CliError::Verification("verification failed".into()))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            data,
            model,
            format,
            out,
        } => analyze(&data, &model, format, out.as_deref()),
        Command::Simulate {
            model,
            scenario,
            seed,
            out,
        } => {
            let spec = load_model(&model)?;
            let params = scenario.params(&spec)?;
            let dataset = simulation::simulate_dataset(&spec, &params, seed)?;
            emit(out.as_deref(), &data::write_dataset(&dataset))
        }
        Command::Verify {
            model,
            scenario,
            reps,
            seed,
            workers,
            alphas,
            out,
            inject_wrong_law,
        } => verify(
            &model,
            &scenario,
            reps,
            seed,
            workers,
            &alphas,
            out.as_deref(),
            inject_wrong_law,
        ),
        Command::Power {
            model,
            scenario,
            alpha,
            format,
            out,
        } => {
            let spec = load_model(&model)?;
            let params = scenario.params(&spec)?;
            let rows = anova::power(&spec, &params, alpha)?;
            emit(out.as_deref(), &render::power(&rows, alpha, format))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
