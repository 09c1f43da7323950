//! `loopflow validate|run|graph <workflow.json>`
//!
//! Parameter flags are generated from the workflow itself, so the command
//! line is parsed in two passes: find the document, load it, then parse
//! again with its flags added.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches, Command};
use loopflow::io::{expose_cli, export_dot, load_system_config, load_workflow, FlagSchema, SystemConfig};
use loopflow::runtime::LogLevel;
use loopflow::{execute, RunConfig, StopReason, Workflow};

const RESERVED: &[&str] = &["config", "workdir", "log-level", "timeout", "format", "help", "version"];
const DEFAULT_WORKDIR: &str = "loopflow-work";

/// Exit status for usage, document and validation errors.
const EXIT_INVALID: u8 = 1;

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn workflow_arg() -> Arg {
    Arg::new("workflow")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
        .help("workflow document (JSON)")
}

fn config_arg() -> Arg {
    Arg::new("config")
        .long("config")
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help("system configuration (executables, environment, queue)")
}

fn subcommand(name: &str) -> Command {
    let cmd = match name {
        "validate" => Command::new("validate")
            .about("Check a workflow document and report every problem found")
            .arg(workflow_arg())
            .arg(config_arg()),
        "run" => Command::new("run")
            .about("Execute a workflow document")
            .arg(workflow_arg())
            .arg(config_arg())
            .arg(
                Arg::new("workdir")
                    .long("workdir")
                    .value_name("DIR")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("working root for node directories, staging and report.json"),
            )
            .arg(
                Arg::new("log-level")
                    .long("log-level")
                    .value_name("LEVEL")
                    .default_value("info")
                    .value_parser(["debug", "info", "warn", "error"]),
            )
            .arg(
                Arg::new("timeout")
                    .long("timeout")
                    .value_name("SECS")
                    .value_parser(clap::value_parser!(f64))
                    .help("stop the run after this many seconds"),
            ),
        "graph" => Command::new("graph")
            .about("Print the workflow graph")
            .arg(workflow_arg())
            .arg(
                Arg::new("format")
                    .long("format")
                    .default_value("dot")
                    .value_parser(["dot"]),
            ),
        _ => unreachable!("unknown subcommand {name}"),
    };
    // parsed on its own, so name the binary explicitly in usage lines
    cmd.bin_name(format!("loopflow {name}"))
}

fn top_level() -> Command {
    Command::new("loopflow")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Run flow-based workflow documents")
        .subcommand_required(true)
        .subcommands(["validate", "run", "graph"].map(subcommand))
        .after_help(
            "Every workflow parameter is also a flag: `loopflow run wf.json --help` lists them.",
        )
}

/// First positional argument, skipping the value of each `--flag value`.
fn find_workflow(args: &[OsString]) -> Option<PathBuf> {
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        let s = a.to_string_lossy();
        if s.starts_with("--") {
            skip = !s.contains('=') && s != "--help";
        } else if !s.starts_with('-') {
            return Some(PathBuf::from(a));
        }
    }
    None
}

fn with_parameter_flags(mut cmd: Command, schema: &FlagSchema) -> Command {
    for f in &schema.flags {
        let mut help = if f.help.is_empty() { String::new() } else { format!("{} ", f.help) };
        help.push_str(&format!("[{}]", f.value_type));
        if f.required {
            help.push_str(" (required)");
        } else if let Some(d) = &f.default {
            help.push_str(&format!(" (default {})", d.to_json()));
        }
        cmd = cmd.arg(
            Arg::new(f.name.clone())
                .long(f.name.clone())
                .value_name(f.value_type.to_string().to_uppercase())
                .action(ArgAction::Set)
                .help(help)
                .help_heading("Workflow parameters"),
        );
    }
    cmd
}

/// Command-line values win over document values, which win over defaults.
fn apply_flags(wf: &mut Workflow, schema: &FlagSchema, matches: &ArgMatches) -> Result<(), Failure> {
    for f in &schema.flags {
        let Some(text) = matches.get_one::<String>(&f.name) else {
            continue;
        };
        let value = schema
            .parse_value(&f.name, text)
            .expect("flag comes from the schema")
            .map_err(|e| Failure(format!("invalid value for --{}: {e}", f.name)))?;
        wf.set_parameter(&f.name, value)
            .map_err(|e| Failure(format!("--{}: {e}", f.name)))?;
    }
    Ok(())
}

fn system_config(matches: &ArgMatches) -> Result<SystemConfig, Failure> {
    match matches.get_one::<PathBuf>("config") {
        Some(path) => Ok(load_system_config(path)?),
        None => Ok(SystemConfig::default()),
    }
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    match dispatch(&args) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn parse(cmd: Command, args: &[OsString]) -> Result<ArgMatches, u8> {
    cmd.try_get_matches_from(args).map_err(|e| {
        let _ = e.print();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => EXIT_INVALID,
        }
    })
}

fn dispatch(args: &[OsString]) -> Result<u8, Failure> {
    let name = args.get(1).map(|a| a.to_string_lossy().into_owned());
    let sub = match name.as_deref() {
        Some(s @ ("validate" | "run" | "graph")) => s.to_string(),
        _ => {
            return Ok(match parse(top_level(), args) {
                Ok(_) => 0,
                Err(code) => code,
            })
        }
    };
    let rest = &args[1..];
    let registry = loopflow_demos::registry();

    let Some(path) = find_workflow(&rest[1..]) else {
        // let clap report the missing argument (or print help)
        return Ok(parse(subcommand(&sub), rest).map_or_else(|c| c, |_| EXIT_INVALID));
    };
    let mut wf = load_workflow(&path, &registry)
        .map_err(|e| Failure(format!("{}: {e}", path.display())))?;

    if sub == "graph" {
        if let Err(code) = parse(subcommand(&sub), rest) {
            return Ok(code);
        }
        print!("{}", export_dot(&wf));
        return Ok(0);
    }

    let schema = expose_cli(&wf)?;
    schema.check_reserved(RESERVED)?;
    let matches = match parse(with_parameter_flags(subcommand(&sub), &schema), rest) {
        Ok(m) => m,
        Err(code) => return Ok(code),
    };
    apply_flags(&mut wf, &schema, &matches)?;
    let system = system_config(&matches)?;

    let report = wf.validate(&registry);
    if sub == "validate" || !report.ok {
        println!("{report}");
        return Ok(if report.ok { 0 } else { EXIT_INVALID });
    }

    let workdir = matches
        .get_one::<PathBuf>("workdir")
        .cloned()
        .or_else(|| system.workdir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_WORKDIR));
    let level: LogLevel = matches.get_one::<String>("log-level").expect("has default").parse()?;
    let mut config = RunConfig::new(&workdir).with_log_level(level).with_system(system);
    config.echo_logs = true;
    if let Some(secs) = matches.get_one::<f64>("timeout") {
        if !(secs.is_finite() && *secs > 0.0) {
            return Err(Failure(format!("--timeout must be a positive number of seconds, got {secs}")));
        }
        config = config.with_timeout(Duration::from_secs_f64(*secs));
    }
    let stop = config.stop.clone();
    ctrlc::set_handler(move || stop.stop(StopReason::External))
        .map_err(|e| Failure(format!("cannot install interrupt handler: {e}")))?;

    let result = execute(&wf, &registry, &config)?;
    let report_path = workdir.join("report.json");
    result
        .write(&report_path)
        .map_err(|e| Failure(format!("cannot write {}: {e}", report_path.display())))?;
    summarize(&result, &report_path);
    Ok(result.outcome.exit_code() as u8)
}

fn summarize(report: &loopflow::ExecutionReport, report_path: &Path) {
    let outcome = serde_json::to_string(&report.outcome).unwrap_or_default();
    println!("outcome: {outcome}");
    println!("wall_time_ms: {:.0}", report.wall_time_ms);
    println!("report: {}", report_path.display());
}
