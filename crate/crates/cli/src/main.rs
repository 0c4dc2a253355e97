//! Command-line front end: parse, check, explore, and verify models.
//!
//! Exit codes: 0 the property holds (or the command succeeded), 1 an
//! attack was found (or the target is not derivable), 2 inconclusive
//! within the configured bounds, 3 usage or model errors.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ballotscope_core::calculus::{
    check_wellformed, parse_model, parse_term_with, Ident, Model, TermScope,
};
use ballotscope_core::deduction::{derivable, DeductionConfig, Knowledge};
use ballotscope_core::equivalence::{
    diagnose, diff_equivalent, observable_traces, trace_equivalent, CheckRequest, Property,
    Verdict, VerdictResult,
};
use ballotscope_core::semantics::{
    builtin_scenario, load_scenario, BuiltinScenario, ExploreConfig, Scenario,
};
use ballotscope_core::starvote::{
    build_star_model, builtin_extensions, star_scenario, CorruptAgent, Extensions, StarParams,
    VoteSelection, BUILTIN_MODELS,
};
use ballotscope_core::term::Side;

#[derive(Parser)]
#[command(
    name = "ballotscope",
    about = "Symbolic ballot-secrecy verifier for the STAR-Vote protocol family",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a privacy equivalence check and report the verdict.
    Check(CheckArgs),
    /// Ask whether a target term is derivable from a knowledge list.
    Deduce(DeduceArgs),
    /// List the shortest observable traces of a model under a scenario.
    Traces(TracesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PropertyArg {
    TraceEq,
    DiffEq,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Built-in model name (star_base, star_counting, star_pins,
    /// star_hashchain) or a path to a .spv file.
    #[arg(long)]
    model: String,
    /// Built-in scenario name (dy1, dy2, dy3, honest, corrupt_tb) or a
    /// path to a scenario .toml file.
    #[arg(long, default_value = "honest")]
    scenario: String,
    /// Voter count for built-in models (defaults to 2, or 3 under dy3).
    #[arg(long)]
    voters: Option<usize>,
    /// Candidate names for built-in models.
    #[arg(long, default_value = "a,b", value_delimiter = ',')]
    candidates: Vec<String>,
    /// Extra extensions for built-in models: counting, pins, hashchain.
    #[arg(long, value_name = "LIST")]
    ext: Option<String>,
    /// Recipe size bound for injected payloads (the intruder's
    /// composition power during exploration).
    #[arg(long, alias = "depth", default_value_t = 2)]
    inject_depth: usize,
    /// Recipe size bound for static-equivalence tests on frames.
    #[arg(long, default_value_t = 3)]
    stateq_depth: usize,
    /// State-count bound for each exploration.
    #[arg(long, default_value_t = 5_000_000)]
    max_states: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Which equivalence to check.
    #[arg(long, value_enum, default_value_t = PropertyArg::DiffEq)]
    property: PropertyArg,
    /// Vote pair to compare, `a:b`, or `all` for every ordered pair of
    /// distinct candidates.
    #[arg(long, default_value = "all")]
    pair: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Write the report to a file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DeduceArgs {
    /// Knowledge entries, one term each (repeatable).
    #[arg(long = "knowledge", value_name = "TERM")]
    knowledge: Vec<String>,
    /// The term to derive.
    #[arg(long)]
    target: String,
    /// Recipe size bound.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Names to treat as public (all names default to private here).
    #[arg(long, value_delimiter = ',', default_value = "")]
    public: Vec<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Args)]
struct TracesArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// How many traces to list.
    #[arg(long, default_value_t = 10)]
    limit: usize,
    /// Which projection of a biprocess to trace.
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    side: SideArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Deduce(args) => cmd_deduce(args),
        Command::Traces(args) => cmd_traces(args),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

struct Resolved {
    /// For built-ins: the parameter skeleton; votes filled per pair.
    builtin: Option<StarParams>,
    /// For file models: the parsed (bi)process model.
    file: Option<Model>,
    model_name: String,
    scenario: Scenario,
    cfg: ExploreConfig,
    candidates: Vec<Ident>,
}

fn resolve(margs: &ModelArgs) -> Result<Resolved> {
    let is_builtin = BUILTIN_MODELS.contains(&margs.model.as_str());
    let candidates: Vec<Ident> = margs
        .candidates
        .iter()
        .map(|c| Ident::from(c.as_str()))
        .collect();
    if candidates.len() < 2 {
        bail!("need at least 2 candidates");
    }

    let cfg = ExploreConfig {
        inject_depth: margs.inject_depth,
        stateq_depth: margs.stateq_depth,
        max_states: margs.max_states,
        ..ExploreConfig::default()
    };

    let (builtin, file, model_name) = if is_builtin {
        let mut extensions = builtin_extensions(&margs.model).unwrap();
        if let Some(extra) = &margs.ext {
            let e = Extensions::parse_list(extra)
                .ok_or_else(|| anyhow!("unknown extension in `{extra}`"))?;
            extensions.counting |= e.counting;
            extensions.pins |= e.pins;
            extensions.hashchain |= e.hashchain;
        }
        let voters = margs
            .voters
            .unwrap_or(if margs.scenario == "dy3" { 3 } else { 2 });
        let params = StarParams {
            voters,
            candidates: candidates.clone(),
            extensions,
            votes: VoteSelection::SwapPair {
                a: candidates[0].clone(),
                b: candidates[1].clone(),
            },
        };
        (Some(params), None, margs.model.clone())
    } else {
        if margs.voters.is_some() || margs.ext.is_some() {
            bail!(
                "--voters and --ext apply to built-in models only; `{}` is a file",
                margs.model
            );
        }
        let src = std::fs::read_to_string(&margs.model)
            .with_context(|| format!("reading model file {}", margs.model))?;
        let model = parse_model(&src).map_err(|e| anyhow!("{}: {e}", margs.model))?;
        let diags = check_wellformed(&model);
        if !diags.is_empty() {
            bail!(
                "model {} is not well-formed:\n{}",
                margs.model,
                diags
                    .iter()
                    .map(|d| format!("  {d}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            );
        }
        (None, Some(model), margs.model.clone())
    };

    let scenario = resolve_scenario(&margs.scenario, is_builtin, builtin.as_ref(), file.as_ref())?;
    if scenario.name == "dy3" {
        if let Some(p) = &builtin {
            if p.voters < 3 {
                bail!("scenario dy3 singles out voter v3; use --voters 3 or more");
            }
        }
    }

    Ok(Resolved {
        builtin,
        file,
        model_name,
        scenario,
        cfg,
        candidates,
    })
}

fn resolve_scenario(
    name: &str,
    model_is_builtin: bool,
    _params: Option<&StarParams>,
    file_model: Option<&Model>,
) -> Result<Scenario> {
    // a scenario file path wins over built-in names
    if name.ends_with(".toml") || name.contains('/') {
        let src =
            std::fs::read_to_string(name).with_context(|| format!("reading scenario {name}"))?;
        // knowledge terms resolve against the model's declarations; for
        // built-ins, use the default instantiation's namespace
        let context_model = match file_model {
            Some(m) => m.clone(),
            None => build_star_model(&StarParams::biprocess(2, "a", "b", Extensions::default()))
                .map_err(|e| anyhow!("{e}"))?,
        };
        return load_scenario(&src, &context_model).map_err(|e| anyhow!("{name}: {e}"));
    }
    if model_is_builtin {
        if let Some(s) = star_scenario(name) {
            return Ok(s);
        }
        if name.starts_with("corrupt_") {
            let mut agents = BTreeSet::new();
            for part in name.trim_start_matches("corrupt_").split('_') {
                agents.insert(CorruptAgent::parse(part).map_err(|e| anyhow!("{e}"))?);
            }
            return ballotscope_core::starvote::corruption_scenario(&agents)
                .map_err(|e| anyhow!("{e}"));
        }
        bail!("unknown scenario `{name}`");
    }
    match BuiltinScenario::by_name(name) {
        Some(b) => Ok(builtin_scenario(b)),
        None => bail!(
            "unknown scenario `{name}` for a file model (dy1, dy2, dy3, honest, or a .toml path)"
        ),
    }
}

fn ordered_pairs(candidates: &[Ident], pair: &str) -> Result<Vec<(Ident, Ident)>> {
    if pair == "all" {
        let mut out = Vec::new();
        for x in candidates {
            for y in candidates {
                if x != y {
                    out.push((x.clone(), y.clone()));
                }
            }
        }
        return Ok(out);
    }
    let (a, b) = pair
        .split_once(':')
        .ok_or_else(|| anyhow!("--pair expects `a:b` or `all`"))?;
    let find = |n: &str| -> Result<Ident> {
        candidates
            .iter()
            .find(|c| c.as_ref() == n)
            .cloned()
            .ok_or_else(|| anyhow!("`{n}` is not among the candidates"))
    };
    let (a, b) = (find(a)?, find(b)?);
    if a == b {
        bail!("--pair needs two distinct candidates");
    }
    Ok(vec![(a, b)])
}

fn exit_for(v: &VerdictResult) -> ExitCode {
    match v {
        VerdictResult::Equivalent => ExitCode::from(0),
        VerdictResult::Attack => ExitCode::from(1),
        VerdictResult::Inconclusive => ExitCode::from(2),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let r = resolve(&args.model)?;
    let property = match args.property {
        PropertyArg::TraceEq => Property::TraceEq,
        PropertyArg::DiffEq => Property::DiffEq,
    };

    // (pair label, verdict, diagnosis) per checked vote pair
    let mut results: Vec<(String, Verdict, Option<String>)> = Vec::new();

    let run_one = |a: &Ident, b: &Ident| -> Result<(Verdict, Option<String>)> {
        match (&r.builtin, &r.file) {
            (Some(params), _) => {
                let mut p = params.clone();
                p.votes = VoteSelection::SwapPair {
                    a: a.clone(),
                    b: b.clone(),
                };
                let bi = build_star_model(&p).map_err(|e| anyhow!("{e}"))?;
                run_property(property, &bi, &r.scenario, &r.cfg)
            }
            (None, Some(model)) => run_property(property, model, &r.scenario, &r.cfg),
            _ => unreachable!(),
        }
    };

    match (&r.file, args.pair.as_str()) {
        // a file model carries its own votes; the pair selection is for
        // built-in instantiations
        (Some(_), "all") => {
            let (v, d) = run_one(&r.candidates[0], &r.candidates[1])?;
            results.push(("model".into(), v, d));
        }
        (Some(_), other) => bail!("--pair {other} applies to built-in models only"),
        (None, pair) => {
            for (a, b) in ordered_pairs(&r.candidates, pair)? {
                let (v, d) = run_one(&a, &b)?;
                results.push((format!("{a}:{b}"), v, d));
            }
        }
    }

    // aggregate: worst verdict wins, earliest pair breaks ties
    let worst = results
        .iter()
        .max_by_key(|(_, v, _)| match v.result {
            VerdictResult::Equivalent => 0,
            VerdictResult::Inconclusive => 1,
            VerdictResult::Attack => 2,
        })
        .expect("at least one pair");

    match args.format {
        FormatArg::Json => {
            let json = worst.1.to_json(&r.model_name, &r.scenario.name);
            emit(
                &args.out,
                &format!("{}\n", serde_json::to_string_pretty(&json)?),
            )?;
        }
        FormatArg::Text => {
            let mut text = String::new();
            for (label, v, diag) in &results {
                text.push_str(&format!(
                    "[{label}] {} (model {}, scenario {}, property {property}, {} states, frame {}, {} ms)\n",
                    v.result,
                    r.model_name,
                    r.scenario.name,
                    v.stats.states,
                    v.stats.max_frame_len,
                    v.stats.ms
                ));
                if let Some(plan) = &v.accepted_plan {
                    text.push_str(&format!("  accepted swap plan: {plan}\n"));
                }
                if let Some(reason) = &v.inconclusive_reason {
                    text.push_str(&format!("  inconclusive: {reason}\n"));
                }
                if let Some(d) = diag {
                    for line in d.lines() {
                        text.push_str(&format!("  {line}\n"));
                    }
                }
            }
            emit(&args.out, &text)?;
        }
    }
    Ok(exit_for(&worst.1.result))
}

fn run_property(
    property: Property,
    bi: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
) -> Result<(Verdict, Option<String>)> {
    match property {
        Property::DiffEq => {
            let v = diff_equivalent(bi, scenario, cfg).map_err(|e| anyhow!("{e}"))?;
            let diag = if v.result == VerdictResult::Attack {
                Some(
                    diagnose(
                        &v,
                        &CheckRequest {
                            property,
                            left: bi,
                            right: None,
                            scenario,
                            cfg,
                        },
                    )
                    .map_err(|e| anyhow!("{e}"))?,
                )
            } else {
                None
            };
            Ok((v, diag))
        }
        Property::TraceEq => {
            let left = bi.project(Side::Left);
            let right = bi.project(Side::Right);
            let v = trace_equivalent(&left, &right, scenario, cfg).map_err(|e| anyhow!("{e}"))?;
            let diag = if v.result == VerdictResult::Attack {
                Some(
                    diagnose(
                        &v,
                        &CheckRequest {
                            property,
                            left: &left,
                            right: Some(&right),
                            scenario,
                            cfg,
                        },
                    )
                    .map_err(|e| anyhow!("{e}"))?,
                )
            } else {
                None
            };
            Ok((v, diag))
        }
    }
}

fn cmd_deduce(args: DeduceArgs) -> Result<ExitCode> {
    let scope = TermScope {
        publics: args
            .public
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| Ident::from(p.as_str()))
            .collect(),
        privates: Vec::new(),
        default_private: true,
    };
    let mut k = Knowledge::new();
    for t in &args.knowledge {
        let term = parse_term_with(t, &scope).map_err(|e| anyhow!("knowledge `{t}`: {e}"))?;
        k.push(term).map_err(|e| anyhow!("{e}"))?;
    }
    let target = parse_term_with(&args.target, &scope)
        .map_err(|e| anyhow!("target `{}`: {e}", args.target))?;
    let cfg = DeductionConfig::with_depth(args.depth);
    let publics: Vec<_> = scope.publics.clone();
    let recipe = derivable(&k, &publics, &target, &cfg).map_err(|e| anyhow!("{e}"))?;
    match args.format {
        FormatArg::Json => {
            let json = serde_json::json!({
                "derivable": recipe.is_some(),
                "recipe": recipe.as_ref().map(|r| r.to_string()),
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        FormatArg::Text => match &recipe {
            Some(r) => println!("yes: {r}"),
            None => println!("no"),
        },
    }
    Ok(ExitCode::from(if recipe.is_some() { 0 } else { 1 }))
}

fn cmd_traces(args: TracesArgs) -> Result<ExitCode> {
    let r = resolve(&args.model)?;
    let model = match (&r.builtin, &r.file) {
        (Some(params), _) => build_star_model(params).map_err(|e| anyhow!("{e}"))?,
        (None, Some(m)) => m.clone(),
        _ => unreachable!(),
    };
    let side = match args.side {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
    };
    let plain = model.project(side);
    let traces =
        observable_traces(&plain, &r.scenario, &r.cfg, args.limit).map_err(|e| anyhow!("{e}"))?;
    match args.format {
        FormatArg::Json => {
            let json = serde_json::json!({ "traces": traces });
            emit(
                &args.out,
                &format!("{}\n", serde_json::to_string_pretty(&json)?),
            )?;
        }
        FormatArg::Text => {
            let mut text = String::new();
            for (i, t) in traces.iter().enumerate() {
                text.push_str(&format!("{}: {}\n", i + 1, t.join(" -> ")));
            }
            emit(&args.out, &text)?;
        }
    }
    Ok(ExitCode::from(0))
}
