use std::path::Path;
use std::str::FromStr;

use elbo_forge_core::elbo::enumerate_qprime;
use elbo_forge_core::verify::{
    brute_force_mle, completeness_check, dataset_from_records, exact_log_evidence, numeric_elbo,
    numeric_elbo_estimate, observation_space, parse_jsonl, soundness_check, Assignment, DiscreteDataset,
    EquivalencePartition, Strategy, ValidityPartition,
};
use elbo_forge_core::GraphicalModel;
use serde_json::Value as Json;

use crate::{read, CliError};

const MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Overfit,
    Soundness,
    Completeness,
    Jensen,
    Mc,
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "overfit" => Ok(Check::Overfit),
            "soundness" => Ok(Check::Soundness),
            "completeness" => Ok(Check::Completeness),
            "jensen" => Ok(Check::Jensen),
            "mc" => Ok(Check::Mc),
            other => Err(format!(
                "unknown check {other}; expected overfit, soundness, completeness, jensen or mc"
            )),
        }
    }
}

impl Check {
    fn name(self) -> &'static str {
        match self {
            Check::Overfit => "overfit",
            Check::Soundness => "soundness",
            Check::Completeness => "completeness",
            Check::Jensen => "jensen",
            Check::Mc => "mc",
        }
    }
}

pub struct Options<'a> {
    pub seed: u64,
    pub valid: Option<&'a Path>,
    pub classes: Option<&'a Path>,
}

struct Context<'a> {
    model: &'a GraphicalModel,
    space: Vec<Assignment>,
    records: Vec<Assignment>,
    data: DiscreteDataset,
    seed: u64,
}

/// Point lists in partition files hold indices into the observation space
/// or records keyed by variable name.
fn points(ctx: &Context, v: &Json) -> Result<Vec<usize>, CliError> {
    let items = v
        .as_array()
        .ok_or_else(|| CliError::Input(format!("expected a list of points, found {v}")))?;
    items
        .iter()
        .map(|p| match p {
            Json::Number(n) => n
                .as_u64()
                .map(|i| i as usize)
                .filter(|&i| i < ctx.space.len())
                .ok_or_else(|| CliError::Input(format!("point {n} outside 0..{}", ctx.space.len()))),
            Json::Object(_) => {
                let line = serde_json::to_string(p).expect("json");
                let rec = parse_jsonl(&line)?.pop().unwrap_or_default();
                ctx.space
                    .iter()
                    .position(|a| *a == rec)
                    .ok_or_else(|| CliError::Input(format!("{line} is not an observation")))
            }
            other => Err(CliError::Input(format!("bad point {other}"))),
        })
        .collect()
}

fn json_file(path: &Path) -> Result<Json, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

type Row = (bool, String);

fn overfit(ctx: &Context) -> Result<Row, CliError> {
    let r = brute_force_mle(&ctx.data)?;
    let pass = r.total_variation <= 1e-6 && r.kl <= 1e-9;
    Ok((pass, format!("TV {:.3e}, KL {:.3e}", r.total_variation, r.kl)))
}

fn validity(ctx: &Context, opts: &Options) -> Result<ValidityPartition, CliError> {
    match opts.valid {
        Some(path) => Ok(ValidityPartition::new(ctx.space.len(), &points(ctx, &json_file(path)?)?)?),
        None => Ok(ValidityPartition::from_model(ctx.model)?),
    }
}

fn soundness(ctx: &Context, opts: &Options) -> Result<Row, CliError> {
    let part = validity(ctx, opts)?;
    let counts = ctx.data.counts();
    if let Some(x) = (0..counts.len()).find(|&x| counts[x] > 0 && !part.valid[x]) {
        return Ok((false, format!("sample {} is outside the valid set", ctx.data.points[x])));
    }
    let r = brute_force_mle(&ctx.data)?;
    let s = soundness_check(&r.optimum, &part);
    let detail = if s.sound {
        format!("optimum puts no mass on {} invalid point(s)", part.invalid_points().len())
    } else {
        format!("mass on invalid points {:?}", s.violations)
    };
    Ok((s.sound, detail))
}

fn completeness(ctx: &Context, opts: &Options) -> Result<Row, CliError> {
    let part = validity(ctx, opts)?;
    let classes = match opts.classes {
        Some(path) => {
            let v = json_file(path)?;
            let lists = v
                .as_array()
                .ok_or_else(|| CliError::Input("classes must be a JSON array of point lists".into()))?;
            let classes = lists.iter().map(|c| points(ctx, c)).collect::<Result<_, _>>()?;
            EquivalencePartition::new(ctx.space.len(), classes)?
        }
        None => EquivalencePartition::singletons(ctx.space.len()),
    };
    let r = completeness_check(&ctx.data, &part, &classes)?;
    let pass = !r.generalizes || r.complete;
    Ok((pass, format!("generalizes {}, complete {}, sound {}", r.generalizes, r.complete, r.sound)))
}

fn distinct(records: &[Assignment]) -> Vec<&Assignment> {
    let mut out: Vec<&Assignment> = Vec::new();
    for r in records {
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

fn jensen(ctx: &Context) -> Result<Row, CliError> {
    let (mut n, mut worst) = (0usize, f64::NEG_INFINITY);
    for obs in distinct(&ctx.records) {
        let exact = exact_log_evidence(ctx.model, obs)?;
        for sel in enumerate_qprime(ctx.model) {
            let v = numeric_elbo(ctx.model, &sel, obs, Strategy::Enumerate)?;
            if exact > f64::NEG_INFINITY {
                worst = worst.max(v - exact);
            } else if v > f64::NEG_INFINITY {
                return Ok((false, format!("finite bound {v} on an impossible observation")));
            }
            n += 1;
        }
    }
    let pass = worst <= 1e-9;
    let gap = if worst == f64::NEG_INFINITY { "none finite".to_string() } else { format!("{worst:.3e}") };
    Ok((pass, format!("{n} bounds, max ELBO - log p(x) {gap}")))
}

fn monte_carlo(ctx: &Context) -> Result<Row, CliError> {
    let (mut n, mut worst) = (0usize, 0.0f64);
    for obs in distinct(&ctx.records) {
        for sel in enumerate_qprime(ctx.model) {
            let exact = numeric_elbo(ctx.model, &sel, obs, Strategy::Enumerate)?;
            if !exact.is_finite() {
                continue;
            }
            let est = numeric_elbo_estimate(
                ctx.model,
                &sel,
                obs,
                Strategy::MonteCarlo { n: MC_SAMPLES, seed: ctx.seed },
            )?;
            let se = est.std_error.unwrap_or(0.0);
            let z = if se > 0.0 { (est.value - exact).abs() / se } else if est.value == exact { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            n += 1;
        }
    }
    Ok((worst <= 5.0, format!("{n} estimates at n={MC_SAMPLES}, max |error|/SE {worst:.2}")))
}

/// Runs the checks, prints one row each, and reports whether all passed.
pub fn run(model: &GraphicalModel, data: &Path, checks: &[Check], opts: &Options) -> Result<bool, CliError> {
    let records = parse_jsonl(&read(data)?)?;
    let space = observation_space(model)?;
    let dataset = dataset_from_records(model, &records)?;
    let ctx = Context { model, space, records, data: dataset, seed: opts.seed };
    println!("{:<13} {:<6} detail", "check", "result");
    let mut all = true;
    for &c in checks {
        let row = match c {
            Check::Overfit => overfit(&ctx),
            Check::Soundness => soundness(&ctx, opts),
            Check::Completeness => completeness(&ctx, opts),
            Check::Jensen => jensen(&ctx),
            Check::Mc => monte_carlo(&ctx),
        };
        let (pass, detail) = match row {
            Ok(r) => r,
            Err(e) => (false, e.to_string()),
        };
        all &= pass;
        println!("{:<13} {:<6} {detail}", c.name(), if pass { "pass" } else { "FAIL" });
    }
    Ok(all)
}
