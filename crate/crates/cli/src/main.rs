mod check;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use elbo_forge_core::elbo::{derive, enumerate_qprime, heuristic_filter, Assessment, QPrimeSelection, Verdict};
use elbo_forge_core::expr::Syntax;
use elbo_forge_core::zoo::{registry, FamilyDescriptor};
use elbo_forge_core::{parse_source, Family, GraphicalModel, ModelSource};
use serde_json::{json, Value as Json};

#[derive(Parser)]
#[command(name = "elbo-forge", version, about = "Derive and check evidence lower bounds for graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model for structural problems.
    Validate { model: PathBuf },
    /// Derive the lower bound for one or every guide selection.
    Derive {
        model: PathBuf,
        /// Derive a bound for every admissible selection (the default).
        #[arg(long, conflicts_with = "qprime")]
        all_qprime: bool,
        /// Guides to select, e.g. "q(z0|x0), q(a|x0,x1)"; empty for none.
        #[arg(long)]
        qprime: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Annotate selections with the selection heuristic.
        #[arg(long)]
        heuristic: bool,
    },
    /// Show distribution registry entries.
    Zoo { family: Option<Family> },
    /// Conjugate posterior update.
    Update {
        #[arg(long)]
        family: String,
        /// Prior as inline JSON or a path to a JSON file.
        #[arg(long)]
        prior: String,
        /// Observations as inline JSON or a path to a JSON file.
        #[arg(long)]
        data: String,
    },
    /// Run oracle checks of a tabular model against a dataset.
    Verify {
        model: PathBuf,
        /// JSON lines, one observation per line.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "overfit,soundness,completeness,jensen,mc")]
        checks: Vec<check::Check>,
        #[arg(long, env = "ELBO_FORGE_SEED", default_value_t = 0)]
        seed: u64,
        /// Valid points as a JSON array; defaults to the model's support.
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Equivalence classes as a JSON array of point lists; defaults to singletons.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Latex,
    Dump,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] elbo_forge_core::ParseError),
    #[error(transparent)]
    Derive(#[from] elbo_forge_core::DeriveError),
    #[error(transparent)]
    Conjugate(#[from] elbo_forge_core::ConjugateError),
    #[error(transparent)]
    Verify(#[from] elbo_forge_core::VerifyError),
    #[error("{0}")]
    Input(String),
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<GraphicalModel, CliError> {
    let src = ModelSource::from_file(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_source(&src)?)
}

/// Inline JSON, or the contents of the named file.
fn json_arg(arg: &str) -> Result<Json, CliError> {
    if let Ok(v) = serde_json::from_str(arg) {
        return Ok(v);
    }
    let text = read(Path::new(arg))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{arg}: {e}")))
}

/// Splits a guide list on commas, semicolons or whitespace outside parentheses.
fn split_guides(list: &str) -> Vec<String> {
    let (mut out, mut cur, mut depth) = (Vec::new(), String::new(), 0usize);
    for c in list.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if depth == 0 && (c == ',' || c == ';' || c.is_whitespace()) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn validate(path: &Path) -> Result<bool, CliError> {
    let m = load_model(path)?;
    let report = m.validate();
    if report.is_valid() {
        println!("OK");
    } else {
        for v in &report.violations {
            println!("error: {v}");
        }
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(report.is_valid())
}

fn verdict_text(a: &Assessment) -> String {
    let reasons: Vec<&str> = a.reasons.iter().map(|r| r.as_str()).collect();
    let head = match a.verdict {
        Verdict::Recommended => "recommended",
        Verdict::Partial => "partial",
        Verdict::Rejected => "rejected",
    };
    if reasons.is_empty() {
        head.to_string()
    } else {
        format!("{head}: {}", reasons.join(", "))
    }
}

fn derive_cmd(path: &Path, qprime: Option<&str>, format: Format, heuristic: bool) -> Result<(), CliError> {
    let m = load_model(path)?;
    let sels = match qprime {
        Some(list) => {
            let labels = split_guides(list);
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            vec![QPrimeSelection::from_labels(&m, &refs)?]
        }
        None => enumerate_qprime(&m),
    };
    let exprs = sels.iter().map(|s| derive(&m, s)).collect::<Result<Vec<_>, _>>()?;
    let report = if heuristic { Some(heuristic_filter(&m, &sels)?) } else { None };

    if format == Format::Dump {
        let items: Vec<Json> = exprs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut item = json!({ "expression": e });
                if let Some(r) = &report {
                    item["assessment"] = json!(r.assessments[i]);
                }
                item
            })
            .collect();
        let mut out = json!({ "model": m.name, "bounds": items });
        if let Some(r) = &report {
            out["heuristic"] = json!(true);
            out["joint"] = json!(r.joint);
        }
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        return Ok(());
    }

    let syntax = if format == Format::Latex { Syntax::Latex } else { Syntax::Text };
    for (i, (s, e)) in sels.iter().zip(&exprs).enumerate() {
        let labels = s.labels(&m);
        let head = format!("Q' = {{{}}}", labels.join(", "));
        match &report {
            Some(r) => println!("{head}  [{}]", verdict_text(&r.assessments[i])),
            None => println!("{head}"),
        }
        println!("  ELBO = {}", e.render(syntax));
    }
    if let Some(r) = report {
        println!("(selection criteria are a heuristic)");
        if let Some(joint) = r.joint {
            let names: Vec<String> = joint
                .iter()
                .map(|&k| format!("{{{}}}", sels[k].labels(&m).join(", ")))
                .collect();
            println!("jointly recommended: {}", names.join(" + "));
        }
    }
    Ok(())
}

fn print_descriptor(d: &FamilyDescriptor) {
    println!("{}", d.family);
    println!("  support: {:?}", d.support);
    let params: Vec<String> = d.params.iter().map(|(n, k)| format!("{n} ({k:?})")).collect();
    println!("  parameters: {}", params.join(", "));
    if !d.max_entropy_constraints.is_empty() {
        println!("  maximum entropy under: {}", d.max_entropy_constraints.join("; "));
    }
    if let Some(p) = d.conjugate_prior {
        println!("  conjugate prior: {p}");
    }
    let f = d.flags;
    let yes = |b: bool| if b { "yes" } else { "no" };
    println!(
        "  mean: {}, variance: {}, heavy tail: {}, sparse: {}",
        yes(f.has_mean),
        yes(f.has_variance),
        yes(f.heavy_tail),
        yes(f.sparse)
    );
    let ops: Vec<String> = d.operations.iter().map(|o| format!("{o:?}")).collect();
    if ops.is_empty() {
        println!("  operations: none (metadata only)");
    } else {
        println!("  operations: {}", ops.join(", "));
    }
    println!("  usage: {}", d.usage);
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Validate { model } => validate(&model),
        Command::Derive { model, qprime, format, heuristic, .. } => {
            derive_cmd(&model, qprime.as_deref(), format, heuristic).map(|_| true)
        }
        Command::Zoo { family } => {
            match family {
                Some(f) => print_descriptor(&f.descriptor()),
                None => registry().iter().for_each(print_descriptor),
            }
            Ok(true)
        }
        Command::Update { family, prior, data } => {
            let out = elbo_forge_core::conjugate::update_json(&family, &json_arg(&prior)?, &json_arg(&data)?)?;
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            Ok(true)
        }
        Command::Verify { model, data, checks, seed, valid, classes } => {
            let opts = check::Options {
                seed,
                valid: valid.as_deref(),
                classes: classes.as_deref(),
            };
            check::run(&load_model(&model)?, &data, &checks, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
