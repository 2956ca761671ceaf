//! `ssmi`: compile, audit, evaluate, decompose and draw structured spreadsheet models.
//!
//! Exit codes: 0 success, 1 validation failure or audit errors, 2 usage or
//! parse error, 3 I/O error. Data goes to stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use ssmi::audit::{audit, AuditOptions};
use ssmi::eval::{evaluate, Value};
use ssmi::model::{toposort, Model, VariableKind};
use ssmi::transform::{complexity_check, decompose};
use ssmi::workbook::{generate, read_json, write_json, xlsx_bytes};
use ssmi::Severity;

#[derive(Parser)]
#[command(
    name = "ssmi",
    version,
    about = "Compiler and auditor for structured spreadsheet models"
)]
#[command(after_help = "Exit codes: 0 ok, 1 validation failure or audit errors, 2 usage or parse error, 3 I/O error.")]
struct Cli {
    /// Settings file; defaults to ./ssmi.toml when that exists.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lay a model out as a workbook. Without --xlsx or --json the JSON form goes to stdout.
    Compile {
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        xlsx: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
        /// Treat formulas that mix operators as errors and write nothing.
        #[arg(long)]
        strict: bool,
    },
    /// Check a .wbjson workbook against the layout rules.
    Audit {
        workbook: PathBuf,
        /// Also compare the workbook's values with this model.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Report formula complexity as an error.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate a model and print variables (all outputs by default).
    Eval {
        model: PathBuf,
        /// Override an input, e.g. --set Price=375.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
        /// Variable to print; may be repeated.
        #[arg(long = "report", value_name = "NAME")]
        report: Vec<String>,
    },
    /// Split formulas that mix operators into single-operator formulas.
    Decompose {
        model: PathBuf,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Draw the dependency graph in Graphviz DOT.
    Graph {
        model: PathBuf,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Config {
    #[serde(default)]
    strict: bool,
    #[serde(default)]
    compile: CompileConfig,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CompileConfig {
    json: Option<PathBuf>,
    xlsx: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum Kind {
    Invalid = 1,
    Usage = 2,
    Io = 3,
}

struct Failure {
    kind: Kind,
    error: anyhow::Error,
}

fn fail(kind: Kind, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        kind,
        error: error.into(),
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Exit status of a command that ran to completion.
enum Done {
    Ok,
    /// The verdict was negative; the report has already been printed.
    Rejected,
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    std::fs::read(path).map_err(|e| fail(Kind::Io, anyhow!(e).context(format!("cannot read {}", path.display()))))
}

fn read_text(path: &Path) -> Outcome<String> {
    String::from_utf8(read(path)?).map_err(|_| fail(Kind::Usage, anyhow!("{} is not UTF-8 text", path.display())))
}

/// Writes through a temporary file in the target directory so a failed run
/// never leaves a truncated file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let io = |e: std::io::Error| fail(Kind::Io, anyhow!(e).context(format!("cannot write {}", path.display())));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Outcome {
    match output {
        Some(path) => write_atomic(path, bytes),
        None => stdout(bytes),
    }
}

fn stdout(bytes: &[u8]) -> Outcome {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(fail(Kind::Io, e)),
        _ => Ok(()),
    }
}

fn load_config(explicit: Option<&Path>) -> Outcome<Config> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let default = PathBuf::from("ssmi.toml");
            if !default.is_file() {
                return Ok(Config::default());
            }
            default
        }
    };
    let text = read_text(&path)?;
    toml::from_str(&text).map_err(|e| fail(Kind::Usage, anyhow!("{}: {e}", path.display())))
}

/// Parses a model and checks it has an evaluation order.
fn load_model(path: &Path) -> Outcome<Model> {
    let text = read_text(path)?;
    let model = ssmi::dsl::parse_model(&text).map_err(|e| {
        let kind = if e.invalid_model.is_some() {
            Kind::Invalid
        } else {
            Kind::Usage
        };
        fail(kind, anyhow!("{}:{e}", path.display()))
    })?;
    toposort(&model).map_err(|e| fail(Kind::Invalid, anyhow!("{}: {e}", path.display())))?;
    Ok(model)
}

fn compile(model_path: &Path, xlsx: Option<PathBuf>, json: Option<PathBuf>, strict: bool) -> Outcome<Done> {
    let model = load_model(model_path)?;
    let findings = complexity_check(&model, strict);
    for f in &findings {
        let ops: Vec<String> = f.ops.iter().map(ToString::to_string).collect();
        eprintln!(
            "{} A5 {}: formula mixes {} operator kinds ({})",
            f.severity,
            f.variable,
            f.distinct_ops,
            ops.join(" ")
        );
    }
    if findings.iter().any(|f| f.severity == Severity::Error) {
        eprintln!("strict mode: decompose the model or drop --strict; nothing written");
        return Ok(Done::Rejected);
    }
    let wb = generate(&model).map_err(|e| fail(Kind::Invalid, e))?;
    // Render everything before touching the filesystem.
    let json_bytes = write_json(&wb);
    let xlsx_bytes = match &xlsx {
        Some(_) => Some(xlsx_bytes(&wb).map_err(|e| fail(Kind::Invalid, e))?),
        None => None,
    };
    if xlsx.is_none() && json.is_none() {
        stdout(&json_bytes)?;
    }
    if let Some(path) = &json {
        write_atomic(path, &json_bytes)?;
        eprintln!("wrote {}", path.display());
    }
    if let (Some(path), Some(bytes)) = (&xlsx, &xlsx_bytes) {
        write_atomic(path, bytes)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(Done::Ok)
}

fn run_audit(workbook: &Path, model: Option<&Path>, format: Format, strict: bool) -> Outcome<Done> {
    let bytes = read(workbook)?;
    let wb = read_json(&bytes).map_err(|e| fail(Kind::Usage, anyhow!("{}: {e}", workbook.display())))?;
    let model = model.map(load_model).transpose()?;
    let report = audit(&wb, model.as_ref(), &AuditOptions { strict });
    let text = match format {
        Format::Text => report.to_text(),
        Format::Json => report.to_json(),
    };
    stdout(text.as_bytes())?;
    Ok(if report.passed() { Done::Ok } else { Done::Rejected })
}

/// Resolves a name given on the command line, accepting labels as well.
fn resolve<'m>(model: &'m Model, given: &str) -> Option<&'m ssmi::model::Variable> {
    model
        .get(given)
        .or_else(|| ssmi::mangle(given).ok().and_then(|name| model.get(&name)))
}

fn parse_number(text: &str) -> Option<f64> {
    let cleaned: String = text
        .trim()
        .trim_start_matches('$')
        .chars()
        .filter(|c| *c != ',')
        .collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Thousands-grouped display: whole numbers from 1,000 up, two decimals below.
fn display(v: f64) -> String {
    let decimals = if v.abs() >= 1000.0 { 0 } else { 2 };
    let text = format!("{:.*}", decimals, v.abs());
    let (int, frac) = text
        .split_once('.')
        .map_or((text.as_str(), None), |(i, f)| (i, Some(f)));
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    let sign = if v < 0.0 && text.bytes().any(|b| b.is_ascii_digit() && b != b'0') {
        "-"
    } else {
        ""
    };
    match frac {
        Some(f) => format!("{sign}{grouped}.{f}"),
        None => format!("{sign}{grouped}"),
    }
}

fn eval(model_path: &Path, set: &[String], report: &[String]) -> Outcome<Done> {
    let model = load_model(model_path)?;
    let mut inputs = BTreeMap::new();
    for assignment in set {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| fail(Kind::Usage, anyhow!("--set expects NAME=VALUE, got `{assignment}`")))?;
        let var = resolve(&model, name.trim())
            .ok_or_else(|| fail(Kind::Usage, anyhow!("--set: no variable named `{}`", name.trim())))?;
        if var.kind != VariableKind::Input {
            return Err(fail(Kind::Usage, anyhow!("--set: `{}` is not an input", var.name)));
        }
        let value = parse_number(value)
            .ok_or_else(|| fail(Kind::Usage, anyhow!("--set {}: `{value}` is not a number", var.name)))?;
        inputs.insert(var.name.clone(), value);
    }
    let names: Vec<String> = if report.is_empty() {
        model
            .variables
            .iter()
            .filter(|v| v.kind == VariableKind::Output)
            .map(|v| v.name.clone())
            .collect()
    } else {
        report
            .iter()
            .map(|r| {
                resolve(&model, r)
                    .map(|v| v.name.clone())
                    .ok_or_else(|| fail(Kind::Usage, anyhow!("--report: no variable named `{r}`")))
            })
            .collect::<Outcome<_>>()?
    };
    let values = evaluate(&model, &inputs).map_err(|e| fail(Kind::Invalid, e))?;

    let mut rows: Vec<(String, f64)> = Vec::new();
    for name in &names {
        match values.get(name).expect("reported names come from the model") {
            Value::Scalar(v) => rows.push((name.clone(), *v)),
            Value::Vector(vs) => {
                let instances = &model.dimension.as_ref().expect("vectors need a dimension").instances;
                for (inst, v) in instances.iter().zip(vs) {
                    rows.push((format!("{name}[{inst}]"), *v));
                }
            }
        }
    }
    let name_width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0);
    let full: Vec<String> = rows.iter().map(|(_, v)| v.to_string()).collect();
    let full_width = full.iter().map(String::len).max().unwrap_or(0);
    let mut out = String::new();
    for ((name, v), full) in rows.iter().zip(&full) {
        out.push_str(&format!("{name:<name_width$}  {full:>full_width$}  {}\n", display(*v)));
    }
    stdout(out.as_bytes())?;
    Ok(Done::Ok)
}

fn run(cli: Cli) -> Outcome<Done> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Compile {
            model,
            xlsx,
            json,
            strict,
        } => {
            let (xlsx, json) = if xlsx.is_none() && json.is_none() {
                (config.compile.xlsx, config.compile.json)
            } else {
                (xlsx, json)
            };
            compile(&model, xlsx, json, strict || config.strict)
        }
        Command::Audit {
            workbook,
            model,
            format,
            strict,
        } => run_audit(&workbook, model.as_deref(), format, strict || config.strict),
        Command::Eval { model, set, report } => eval(&model, &set, &report),
        Command::Decompose { model, output } => {
            let m = load_model(&model)?;
            let d = decompose(&m).map_err(|e| fail(Kind::Invalid, e))?;
            emit(output.as_deref(), ssmi::dsl::emit_model(&d).as_bytes())?;
            Ok(Done::Ok)
        }
        Command::Graph { model, output } => {
            let m = load_model(&model)?;
            emit(output.as_deref(), ssmi::graph::to_dot(&m).as_bytes())?;
            Ok(Done::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Rejected) => ExitCode::from(Kind::Invalid as u8),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.kind as u8)
        }
    }
}
