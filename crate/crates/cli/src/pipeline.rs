//! Batch runner: an ordered list of steps in a TOML file, each an ordinary
//! subcommand invocation. Steps reference earlier outputs as `@name.out`;
//! every run writes a manifest recording what was read, written, and seeded.
//!
//! Validation happens entirely before the first step executes, so a broken
//! file never leaves half-finished artifacts behind.

use crate::cli::{Cli, PipelineArgs};
use crate::commands::{self, default_out_name, out_path, CliError, CliResult, CommandOutcome};
use clap::Parser;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;

const VALID_STEP_COMMANDS: &str = "simulate, koopman, spectrum, represent, observability, \
     kalman, gramian, optimal-outputs, transport, adjoint-check, unitarity";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineFile {
    #[serde(default)]
    step: Vec<StepSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSpec {
    name: String,
    command: String,
    #[serde(default)]
    args: Vec<String>,
    /// Names of earlier steps this one depends on, beyond any `@name.out`
    /// references already present in `args`.
    #[serde(default)]
    needs: Vec<String>,
}

#[derive(Serialize)]
struct ManifestStep {
    name: String,
    command: String,
    /// Arguments after `@name.out` resolution — exactly what ran.
    args: Vec<String>,
    /// Outputs of earlier steps this step consumed.
    inputs: Vec<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    summary: String,
}

#[derive(Serialize)]
struct Manifest {
    version: String,
    steps: Vec<ManifestStep>,
}

pub fn run(args: PipelineArgs) -> CliResult<CommandOutcome> {
    let text = std::fs::read_to_string(&args.file).map_err(|e| {
        CliError::Usage(format!("cannot read pipeline file {}: {e}", args.file.display()))
    })?;
    let file: PipelineFile = toml::from_str(&text).map_err(|e| {
        CliError::Usage(format!("{}: {e}", args.file.display()))
    })?;
    let deps = validate(&file.step)?;

    // Dependency names are appended to `args.needs` during validation, so
    // execution only has to resolve tokens and run steps in order.
    let mut out_paths: HashMap<String, PathBuf> = HashMap::new();
    let mut manifest_steps: Vec<ManifestStep> = Vec::new();
    let mut all_outputs: Vec<PathBuf> = Vec::new();
    for (i, step) in file.step.iter().enumerate() {
        let resolved = resolve_refs(&step.args, &out_paths).map_err(|msg| CliError::Step {
            name: step.name.clone(),
            inner: Box::new(CliError::Usage(msg)),
        })?;
        let out = step_out_path(&step.command, &resolved);
        out_paths.insert(step.name.clone(), out);

        let mut argv: Vec<String> = Vec::with_capacity(resolved.len() + 2);
        argv.push("koopman".into());
        argv.push(step.command.clone());
        argv.extend(resolved.iter().cloned());
        let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Step {
            name: step.name.clone(),
            inner: Box::new(CliError::Usage(e.to_string())),
        })?;
        let outcome = commands::dispatch(cli.command).map_err(|e| CliError::Step {
            name: step.name.clone(),
            inner: Box::new(e),
        })?;
        println!("step {}: {}", step.name, outcome.summary);

        let inputs: Vec<String> = deps[i]
            .iter()
            .filter_map(|dep| out_paths.get(dep))
            .map(|p| p.display().to_string())
            .collect();
        manifest_steps.push(ManifestStep {
            name: step.name.clone(),
            command: step.command.clone(),
            args: resolved,
            inputs,
            seed: extract_seed(&step.args),
            outputs: outcome
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            summary: outcome.summary.clone(),
        });
        all_outputs.extend(outcome.outputs);
    }

    let manifest_path = out_path(&args.manifest, "manifest.json");
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        steps: manifest_steps,
    };
    let w = std::io::BufWriter::new(
        std::fs::File::create(&manifest_path).map_err(koopman_core::CoreError::Io)?,
    );
    serde_json::to_writer_pretty(w, &manifest)
        .map_err(|e| CliError::Core(koopman_core::CoreError::Parse(e.to_string())))?;
    all_outputs.push(manifest_path.clone());
    Ok(CommandOutcome {
        summary: format!(
            "pipeline: {} steps complete, manifest -> {}",
            file.step.len(),
            manifest_path.display()
        ),
        outputs: all_outputs,
    })
}

/// Checks names, commands, and the dependency graph before anything runs.
/// Returns, per step, the union of `needs` and `@ref` dependency names.
fn validate(steps: &[StepSpec]) -> CliResult<Vec<Vec<String>>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, step) in steps.iter().enumerate() {
        if step.name.is_empty() {
            return Err(CliError::Usage(format!("step {} has an empty name", i + 1)));
        }
        if index.insert(step.name.as_str(), i).is_some() {
            return Err(CliError::Usage(format!("duplicate step name '{}'", step.name)));
        }
        if step.command == "pipeline" {
            return Err(CliError::Usage(format!(
                "step '{}': pipelines cannot nest; valid commands: {VALID_STEP_COMMANDS}",
                step.name
            )));
        }
        if default_out_name(&step.command).is_none() {
            return Err(CliError::Usage(format!(
                "step '{}' has unknown command '{}'; valid commands: {VALID_STEP_COMMANDS}",
                step.name, step.command
            )));
        }
    }

    // Dependencies: explicit `needs` entries plus `@name.out` tokens.
    let mut deps: Vec<Vec<String>> = Vec::with_capacity(steps.len());
    for step in steps {
        let mut d = step.needs.clone();
        for arg in &step.args {
            if let Some(name) = parse_ref(arg) {
                d.push(name.to_string());
            } else if arg.starts_with('@') {
                return Err(CliError::Usage(format!(
                    "step '{}': reference '{arg}' is not of the form @step.out",
                    step.name
                )));
            }
        }
        for dep in &d {
            if !index.contains_key(dep.as_str()) {
                return Err(CliError::Usage(format!(
                    "step '{}' depends on unknown step '{dep}'",
                    step.name
                )));
            }
        }
        d.sort();
        d.dedup();
        deps.push(d);
    }

    // Cycles first (so a: needs b, b: needs a is reported as a cycle, not as
    // a forward reference), then any remaining use-before-declaration.
    if let Some(cycle) = find_cycle(steps, &deps, &index) {
        return Err(CliError::Usage(format!(
            "cyclic dependency: {}",
            cycle.join(" -> ")
        )));
    }
    for (i, step) in steps.iter().enumerate() {
        for dep in &deps[i] {
            if index[dep.as_str()] >= i {
                return Err(CliError::Usage(format!(
                    "step '{}' depends on '{dep}', which is declared later; steps run in \
                     file order, so dependencies must come first",
                    step.name
                )));
            }
        }
    }
    Ok(deps)
}

/// `@name.out` -> `name`.
fn parse_ref(arg: &str) -> Option<&str> {
    arg.strip_prefix('@')?.strip_suffix(".out").filter(|s| !s.is_empty())
}

/// Depth-first search over the dependency graph; on a back edge, returns the
/// offending path `a -> ... -> a`.
fn find_cycle(
    steps: &[StepSpec],
    deps: &[Vec<String>],
    index: &HashMap<&str, usize>,
) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        InStack,
        Done,
    }
    let n = steps.len();
    let mut marks = vec![Mark::New; n];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(
        v: usize,
        steps: &[StepSpec],
        deps: &[Vec<String>],
        index: &HashMap<&str, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<String>> {
        marks[v] = Mark::InStack;
        stack.push(v);
        for dep in &deps[v] {
            let u = index[dep.as_str()];
            match marks[u] {
                Mark::InStack => {
                    let start = stack.iter().position(|&w| w == u).expect("on stack");
                    let mut cycle: Vec<String> =
                        stack[start..].iter().map(|&w| steps[w].name.clone()).collect();
                    cycle.push(steps[u].name.clone());
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = visit(u, steps, deps, index, marks, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[v] = Mark::Done;
        None
    }

    for v in 0..n {
        if marks[v] == Mark::New {
            if let Some(c) = visit(v, steps, deps, index, &mut marks, &mut stack) {
                return Some(c);
            }
        }
    }
    None
}

/// Replaces whole `@name.out` tokens (also when used as `--flag=@name.out`)
/// with the referenced step's output path.
fn resolve_refs(
    args: &[String],
    out_paths: &HashMap<String, PathBuf>,
) -> Result<Vec<String>, String> {
    args.iter()
        .map(|arg| {
            let (prefix, token) = match arg.split_once('=') {
                Some((flag, value)) if value.starts_with('@') => (Some(flag), value),
                _ => (None, arg.as_str()),
            };
            let resolved = match parse_ref(token) {
                Some(name) => {
                    let p = out_paths
                        .get(name)
                        .ok_or_else(|| format!("reference '{token}' has no resolved output"))?;
                    p.display().to_string()
                }
                None => token.to_string(),
            };
            Ok(match prefix {
                Some(flag) => format!("{flag}={resolved}"),
                None => resolved,
            })
        })
        .collect()
}

/// Where a step will write: its `--out` if present, else the command default
/// (resolved against the output directory override).
fn step_out_path(command: &str, resolved_args: &[String]) -> PathBuf {
    let mut it = resolved_args.iter();
    while let Some(arg) = it.next() {
        if arg == "--out" {
            if let Some(v) = it.next() {
                return PathBuf::from(v);
            }
        } else if let Some(v) = arg.strip_prefix("--out=") {
            return PathBuf::from(v);
        }
    }
    let name = default_out_name(command).unwrap_or("output");
    out_path(&None, name)
}

fn extract_seed(args: &[String]) -> Option<u64> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if arg == "--seed" {
            return it.next()?.parse().ok();
        }
        if let Some(v) = arg.strip_prefix("--seed=") {
            return v.parse().ok();
        }
    }
    None
}
