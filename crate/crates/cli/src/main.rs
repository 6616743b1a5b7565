//! `cbt`: solve, verify, and export the cumulative-Bernoulli-trials chain and
//! its Krawtchouk spectral data.
//!
//! Exit codes: 0 success; 1 verification criterion failed; 2 invalid input;
//! 3 solver failure (complex or degenerate roots, singular systems);
//! 4 condition-check failure on a solved parameter set.

use std::collections::HashSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use cbt_krawtchouk::acceptance::{run_all, AcceptanceOptions, Stage};
use cbt_krawtchouk::combinatorics::enumerate_simplex;
use cbt_krawtchouk::hypergeo::eval_f1n_at;
use cbt_krawtchouk::kernel::{build_kernel, check_detailed_balance, eigen_check};
use cbt_krawtchouk::ortho::{adjudicate_norm_formulas, dual_gram_matrix, gram_matrix};
use cbt_krawtchouk::params::{check_orthogonality_conditions, ModelParams, SpectralParamSet};
use cbt_krawtchouk::sim::{run_ensemble, SimConfig};
use cbt_krawtchouk::{CbtError, Tolerances};

const SCHEMA: &str = "cbt-krawtchouk/v1";
const DEFAULT_SEED: u64 = 424_242;

#[derive(Parser)]
#[command(
    name = "cbt",
    version,
    about = "Cumulative-Bernoulli-trials chains and their Krawtchouk spectral theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the parameter web and report all condition residuals.
    Params(CommonArgs),
    /// Evaluate polynomial values P_m(x), one pair or the full table.
    Eval(EvalArgs),
    /// Build the transition kernel and export it.
    Kernel(CommonArgs),
    /// Gram and dual-Gram orthogonality reports.
    Ortho(CommonArgs),
    /// Closed-form eigenpair verification.
    Eigen(CommonArgs),
    /// Compare candidate norm formulas against brute force.
    Adjudicate(CommonArgs),
    /// Run the seeded Monte Carlo sampler and goodness-of-fit tests.
    Simulate(SimArgs),
    /// Run the complete verification suite; exit 0 iff every criterion passes.
    VerifyAll(VerifyArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Number of success categories.
    #[arg(long)]
    n: Option<usize>,
    /// Number of dice.
    #[arg(long = "N")]
    big_n: Option<u32>,
    /// First-roll success probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Second-roll success probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override NAME=VALUE; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Degree vector, comma separated; with --x, prints a single value.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u32>>,
    /// Argument vector, comma separated.
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<u32>>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value_t = 10_000)]
    burn_in: u64,
    /// Independent chains to run and merge (streams 0..chains).
    #[arg(long, default_value_t = 1)]
    chains: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Skip a stage (params|hypergeo|ortho|kernel|simulate); repeatable.
    #[arg(long = "skip", value_name = "STAGE")]
    skip: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// JSON config file contents. All fields optional; flags win.
#[derive(Deserialize)]
struct ConfigFile {
    schema: Option<String>,
    model: Option<ModelParams>,
    seed: Option<u64>,
    #[serde(default)]
    tolerances: serde_json::Map<String, serde_json::Value>,
}

struct Resolved {
    model: ModelParams,
    tol: Tolerances,
    seed: u64,
    format: Format,
    out: Option<PathBuf>,
}

struct CliFailure {
    code: u8,
    message: String,
}

impl CliFailure {
    fn invalid(message: impl Into<String>) -> Self {
        CliFailure {
            code: 2,
            message: message.into(),
        }
    }

    fn from_solver(err: CbtError) -> Self {
        let code = match err {
            CbtError::ComplexRoot { .. }
            | CbtError::DegenerateRoots { .. }
            | CbtError::SingularLink { .. }
            | CbtError::SingularMatrix { .. } => 3,
            CbtError::Capacity { .. } | CbtError::Overflow(_) => 2,
            _ => 3,
        };
        CliFailure {
            code,
            message: err.to_string(),
        }
    }
}

fn resolve(common: &CommonArgs) -> Result<Resolved, CliFailure> {
    let mut file_model: Option<ModelParams> = None;
    let mut seed = DEFAULT_SEED;
    let mut tol = Tolerances::default();

    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliFailure::invalid(format!("cannot read {}: {e}", path.display())))?;
        let parsed: ConfigFile = serde_json::from_str(&text).map_err(|e| {
            CliFailure::invalid(format!("malformed config {}: {e}", path.display()))
        })?;
        if let Some(schema) = &parsed.schema {
            if schema != SCHEMA {
                return Err(CliFailure::invalid(format!(
                    "config schema {schema} is not {SCHEMA}"
                )));
            }
        }
        if let Some(s) = parsed.seed {
            seed = s;
        }
        for (name, value) in &parsed.tolerances {
            let v = value
                .as_f64()
                .ok_or_else(|| CliFailure::invalid(format!("tolerance {name} is not a number")))?;
            tol.set(name, v)
                .map_err(|e| CliFailure::invalid(e.to_string()))?;
        }
        file_model = parsed.model;
    }

    // flags override the file; a bare flag set replaces the model wholesale
    let model = if common.alpha.is_some() || common.beta.is_some() || common.n.is_some() {
        let alpha = common
            .alpha
            .clone()
            .ok_or_else(|| CliFailure::invalid("--alpha is required when overriding the model"))?;
        let beta = common
            .beta
            .clone()
            .ok_or_else(|| CliFailure::invalid("--beta is required when overriding the model"))?;
        let n = common.n.unwrap_or(alpha.len());
        let big_n = common
            .big_n
            .or(file_model.as_ref().map(|m| m.big_n))
            .unwrap_or(6);
        ModelParams::new(n, big_n, alpha, beta).map_err(|e| CliFailure::invalid(e.to_string()))?
    } else if let Some(mut m) = file_model {
        if let Some(big_n) = common.big_n {
            m.big_n = big_n;
        }
        ModelParams::new(m.n, m.big_n, m.alpha, m.beta)
            .map_err(|e| CliFailure::invalid(e.to_string()))?
    } else {
        let mut demo = ModelParams::demo();
        if let Some(big_n) = common.big_n {
            demo.big_n = big_n;
        }
        demo
    };

    if let Some(s) = common.seed {
        seed = s;
    }
    for spec in &common.tol {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| CliFailure::invalid(format!("--tol {spec}: expected NAME=VALUE")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| CliFailure::invalid(format!("--tol {spec}: bad number")))?;
        tol.set(name, v)
            .map_err(|e| CliFailure::invalid(e.to_string()))?;
    }

    Ok(Resolved {
        model,
        tol,
        seed,
        format: common.format,
        out: common.out.clone(),
    })
}

fn emit(resolved: &Resolved, text: String) -> Result<(), CliFailure> {
    match &resolved.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliFailure::invalid(format!("cannot write {}: {e}", path.display()))),
        None => {
            if text.ends_with('\n') {
                print!("{text}");
            } else {
                println!("{text}");
            }
            Ok(())
        }
    }
}

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn cmd_params(args: &CommonArgs) -> Result<(), CliFailure> {
    let resolved = resolve(args)?;
    let sp =
        SpectralParamSet::solve(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let report = check_orthogonality_conditions(&sp, &resolved.tol);
    let text = match resolved.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "schema": SCHEMA,
            "model": resolved.model,
            "spectral": sp,
            "conditions": report,
        }))
        .expect("serializable"),
        Format::Csv => {
            let mut out = String::from("quantity,i,j,value\n");
            out.push_str(&format!("dn,,,{}\n", f17(sp.dn)));
            for (k, v) in sp.eta.iter().enumerate() {
                out.push_str(&format!("eta,{k},,{}\n", f17(*v)));
            }
            for (k, v) in sp.eta_bar.iter().enumerate() {
                out.push_str(&format!("eta_bar,{k},,{}\n", f17(*v)));
            }
            for (i, v) in sp.omega.iter().enumerate() {
                out.push_str(&format!("omega,{i},,{}\n", f17(*v)));
            }
            for (r, v) in sp.delta.iter().enumerate() {
                out.push_str(&format!("delta,{r},,{}\n", f17(*v)));
            }
            for (i, row) in sp.u.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out.push_str(&format!("u,{i},{j},{}\n", f17(*v)));
                }
            }
            for check in &report.checks {
                out.push_str(&format!(
                    "residual_{},,,{}\n",
                    check.name,
                    f17(check.residual)
                ));
            }
            out
        }
    };
    emit(&resolved, text)?;
    if !report.pass {
        return Err(CliFailure {
            code: 4,
            message: "orthogonality condition checks failed".to_string(),
        });
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliFailure> {
    let resolved = resolve(&args.common)?;
    let sp =
        SpectralParamSet::solve(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let u = sp.u_matrix();
    let big_n = resolved.model.big_n;

    let text = match (&args.m, &args.x) {
        (Some(m), Some(x)) => {
            let value =
                eval_f1n_at(m, x, big_n, &u).map_err(|e| CliFailure::invalid(e.to_string()))?;
            match resolved.format {
                Format::Json => serde_json::to_string_pretty(&json!({
                    "schema": SCHEMA,
                    "m": m,
                    "x": x,
                    "value": value,
                }))
                .expect("serializable"),
                Format::Csv => format!("m,x,value\n\"{m:?}\",\"{x:?}\",{}\n", f17(value)),
            }
        }
        (None, None) => {
            let en = enumerate_simplex(
                resolved.model.n,
                big_n,
                cbt_krawtchouk::combinatorics::DEFAULT_STATE_LIMIT,
            )
            .map_err(|e| CliFailure::invalid(e.to_string()))?;
            let table =
                cbt_krawtchouk::hypergeo::value_table(&u, &en).map_err(CliFailure::from_solver)?;
            let states: Vec<Vec<u32>> = en.states().iter().map(|s| s.entries().to_vec()).collect();
            match resolved.format {
                Format::Json => {
                    let rows: Vec<Vec<f64>> = (0..en.len())
                        .map(|m| (0..en.len()).map(|x| table[(m, x)]).collect())
                        .collect();
                    serde_json::to_string_pretty(&json!({
                        "schema": SCHEMA,
                        "order": "graded-colex",
                        "degrees": states,
                        "states": states,
                        "values_degree_by_state": rows,
                    }))
                    .expect("serializable")
                }
                Format::Csv => {
                    let mut out = String::from("degree_index");
                    for x in 0..en.len() {
                        out.push_str(&format!(",x_{x}"));
                    }
                    out.push('\n');
                    for m in 0..en.len() {
                        out.push_str(&m.to_string());
                        for x in 0..en.len() {
                            out.push_str(&format!(",{}", f17(table[(m, x)])));
                        }
                        out.push('\n');
                    }
                    out
                }
            }
        }
        _ => {
            return Err(CliFailure::invalid(
                "--m and --x must be given together (or neither, for the full table)",
            ))
        }
    };
    emit(&resolved, text)
}

fn cmd_kernel(args: &CommonArgs) -> Result<(), CliFailure> {
    let resolved = resolve(args)?;
    let kernel = build_kernel(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let balance = check_detailed_balance(&kernel);
    let text = match resolved.format {
        Format::Json => {
            let mut value = kernel.to_json();
            value["schema"] = json!(SCHEMA);
            value["detailed_balance_residual"] = json!(balance);
            serde_json::to_string_pretty(&value).expect("serializable")
        }
        Format::Csv => kernel.to_csv(),
    };
    emit(&resolved, text)
}

fn cmd_ortho(args: &CommonArgs) -> Result<(), CliFailure> {
    let resolved = resolve(args)?;
    let sp =
        SpectralParamSet::solve(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let budget = resolved.model.big_n;
    let gram = gram_matrix(&sp, budget, &resolved.tol).map_err(CliFailure::from_solver)?;
    let dual = dual_gram_matrix(&sp, budget, &resolved.tol).map_err(CliFailure::from_solver)?;
    let text = match resolved.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "schema": SCHEMA,
            "model": resolved.model,
            "gram": gram,
            "dual_gram": dual,
        }))
        .expect("serializable"),
        Format::Csv => {
            let mut out = String::from("degree_index");
            for b in 0..gram.degrees.len() {
                out.push_str(&format!(",m_{b}"));
            }
            out.push('\n');
            for (a, row) in gram.gram.iter().enumerate() {
                out.push_str(&a.to_string());
                for v in row {
                    out.push_str(&format!(",{}", f17(*v)));
                }
                out.push('\n');
            }
            out
        }
    };
    emit(&resolved, text)
}

fn cmd_eigen(args: &CommonArgs) -> Result<(), CliFailure> {
    let resolved = resolve(args)?;
    let kernel = build_kernel(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let sp =
        SpectralParamSet::solve(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let report = eigen_check(&kernel, &sp, &resolved.tol).map_err(CliFailure::from_solver)?;
    let text = match resolved.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "schema": SCHEMA,
            "model": resolved.model,
            "eigen": report,
        }))
        .expect("serializable"),
        Format::Csv => {
            let mut out = String::from("degrees,lambda,residual,rayleigh\n");
            for pair in &report.pairs {
                let degrees = pair
                    .degrees
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push_str(&format!(
                    "\"{degrees}\",{},{},{}\n",
                    f17(pair.lambda),
                    f17(pair.residual),
                    f17(pair.rayleigh)
                ));
            }
            out
        }
    };
    emit(&resolved, text)
}

fn cmd_adjudicate(args: &CommonArgs) -> Result<(), CliFailure> {
    let resolved = resolve(args)?;
    let sp =
        SpectralParamSet::solve(&resolved.model, &resolved.tol).map_err(CliFailure::from_solver)?;
    let adj = adjudicate_norm_formulas(&sp, resolved.model.big_n, &resolved.tol)
        .map_err(CliFailure::from_solver)?;
    let text = match resolved.format {
        Format::Json => serde_json::to_string_pretty(&json!({
            "schema": SCHEMA,
            "model": resolved.model,
            "adjudication": adj,
        }))
        .expect("serializable"),
        Format::Csv => {
            let mut out = String::from("degrees,brute");
            for c in &adj.candidates {
                out.push_str(&format!(",{}", c.label));
            }
            out.push('\n');
            for (i, m) in adj.degrees.iter().enumerate() {
                let degrees = m
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                out.push_str(&format!("\"{degrees}\",{}", f17(adj.brute[i])));
                for c in &adj.candidates {
                    out.push_str(&format!(",{}", f17(c.values[i])));
                }
                out.push('\n');
            }
            out
        }
    };
    emit(&resolved, text)
}

fn cmd_simulate(args: &SimArgs) -> Result<(), CliFailure> {
    let resolved = resolve(&args.common)?;
    let config = SimConfig::new(
        resolved.model.clone(),
        args.steps,
        args.burn_in,
        resolved.seed,
    );
    let report = run_ensemble(&config, args.chains).map_err(|e| match e {
        CbtError::Domain(_) => CliFailure::invalid(e.to_string()),
        other => CliFailure::from_solver(other),
    })?;
    let text = match resolved.format {
        Format::Json => {
            let mut value = serde_json::to_value(&report).expect("serializable");
            value["schema"] = json!(SCHEMA);
            serde_json::to_string_pretty(&value).expect("serializable")
        }
        Format::Csv => report.occupancy_csv(),
    };
    emit(&resolved, text)
}

fn cmd_verify_all(args: &VerifyArgs) -> Result<(), CliFailure> {
    let resolved = resolve(&args.common)?;
    let mut skip = HashSet::new();
    for s in &args.skip {
        skip.insert(s.parse::<Stage>().map_err(CliFailure::invalid)?);
    }
    let opts = AcceptanceOptions {
        tol: resolved.tol.clone(),
        skip,
        seed: resolved.seed,
    };
    let results = run_all(&opts);
    match resolved.format {
        Format::Json => {
            let text =
                serde_json::to_string_pretty(&json!({ "schema": SCHEMA, "criteria": results }))
                    .expect("serializable");
            emit(&resolved, text)?;
        }
        Format::Csv => {
            let mut out = String::from("id,name,stage,pass,seconds,detail\n");
            for r in &results {
                out.push_str(&format!(
                    "{},{},{},{},{:.3},\"{}\"\n",
                    r.id, r.name, r.stage, r.pass, r.seconds, r.detail
                ));
            }
            emit(&resolved, out)?;
        }
    }
    for r in &results {
        eprintln!("{}", r.line());
    }
    if results.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(CliFailure {
            code: 1,
            message: "one or more criteria failed".to_string(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Params(args) => cmd_params(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Kernel(args) => cmd_kernel(args),
        Command::Ortho(args) => cmd_ortho(args),
        Command::Eigen(args) => cmd_eigen(args),
        Command::Adjudicate(args) => cmd_adjudicate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::VerifyAll(args) => cmd_verify_all(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
