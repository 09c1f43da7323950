use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::param;
use crate::channel::ChannelError;
use crate::graph::{NodeSpec, Parameter};
use crate::io::SystemConfig;
use crate::registry::NodeRegistry;
use crate::runtime::{NodeBody, NodeContext, NodeError};

const STDOUT_FILE: &str = "stdout.txt";
const STDERR_FILE: &str = "stderr.txt";
const RESULT_FILE: &str = "result.json";
const EXECUTABLE_TOKEN: &str = "{executable}";

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("executable {0:?} not found")]
    ExecutableNotFound(String),
    #[error("command timed out after {0:?}")]
    Timeout(Duration),
    #[error("command exited with status {code:?}, expected one of {expected:?}")]
    BadExit { code: Option<i32>, expected: Vec<i32> },
    #[error("command output failed validation: {0}")]
    ValidationFailed(String),
    #[error("command line is empty")]
    EmptyCommand,
    #[error("unknown placeholder {{{0}}} in command template")]
    UnknownPlaceholder(String),
    #[error("command cancelled")]
    Cancelled,
    #[error("cannot run command: {0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            CommandError::Timeout(_)
                | CommandError::BadExit { .. }
                | CommandError::ValidationFailed(_)
                | CommandError::Io(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capture {
    Stdout,
    Files,
    Both,
}

impl std::str::FromStr for Capture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stdout" => Ok(Capture::Stdout),
            "files" => Ok(Capture::Files),
            "both" => Ok(Capture::Both),
            other => Err(format!("unknown capture mode {other:?}")),
        }
    }
}

/// A fully resolved external command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub argv: Vec<String>,
    pub timeout: Duration,
    pub exit_codes: Vec<i32>,
    pub capture: Capture,
    /// Stdout must contain this text for the run to count as valid.
    pub expect_stdout: Option<String>,
    pub env: BTreeMap<String, String>,
}

impl CommandSpec {
    pub fn new<S: Into<String>>(argv: impl IntoIterator<Item = S>) -> Self {
        CommandSpec {
            argv: argv.into_iter().map(Into::into).collect(),
            timeout: Duration::from_secs(60),
            exit_codes: vec![0],
            capture: Capture::Both,
            expect_stdout: None,
            env: BTreeMap::new(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Builds a command from a node's parameters: substitutes `{key}`
    /// placeholders from `args`, resolves `{executable}` and applies the
    /// kind's prefix and environment from the system configuration.
    pub fn from_node(
        spec: &NodeSpec,
        args: &Value,
        workdir: &Path,
        system: &SystemConfig,
    ) -> Result<Self, NodeError> {
        let template = param::strings(spec, "command")?;
        let key = param::opt_string(spec, "executable_key").unwrap_or_else(|| spec.kind.clone());
        let kind = system.kinds.get(&key);
        let mut argv = Vec::with_capacity(template.len());
        for (i, token) in template.iter().enumerate() {
            if i == 0 && token == EXECUTABLE_TOKEN {
                let exe = kind
                    .and_then(|k| k.executable.clone())
                    .ok_or_else(|| CommandError::ExecutableNotFound(format!("{key} (not configured)")))?;
                argv.push(exe);
            } else {
                argv.push(substitute(token, args, workdir)?);
            }
        }
        if let Some(k) = kind {
            argv.splice(0..0, k.prefix.iter().cloned());
        }
        let timeout = param::float(spec, "timeout")?;
        if timeout <= 0.0 {
            return Err(NodeError::fatal("timeout must be positive"));
        }
        let capture = param::string(spec, "capture")?
            .parse()
            .map_err(|message| NodeError::Parameter {
                name: "capture".into(),
                message,
            })?;
        Ok(CommandSpec {
            argv,
            timeout: Duration::from_secs_f64(timeout),
            exit_codes: param::ints(spec, "exit_codes")?
                .into_iter()
                .map(|c| c as i32)
                .collect(),
            capture,
            expect_stdout: param::opt_string(spec, "expect_stdout"),
            env: kind.map(|k| k.env.clone()).unwrap_or_default(),
        })
    }
}

fn substitute(token: &str, args: &Value, workdir: &Path) -> Result<String, CommandError> {
    let mut out = String::new();
    let mut rest = token;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else {
            break;
        };
        out.push_str(&rest[..start]);
        let key = &rest[start + 1..start + len];
        let value = match (key, args.get(key)) {
            ("workdir", _) => workdir.display().to_string(),
            (_, Some(Value::String(s))) => s.clone(),
            (_, Some(v)) => v.to_string(),
            (_, None) => return Err(CommandError::UnknownPlaceholder(key.to_string())),
        };
        out.push_str(&value);
        rest = &rest[start + len + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// What an external command left behind, also written as `result.json`
/// in its working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub exit_code: i32,
    pub stdout: String,
    pub stdout_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn produced_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if d != dir
                || !matches!(
                    path.file_name().and_then(|n| n.to_str()),
                    Some(STDOUT_FILE | STDERR_FILE | RESULT_FILE)
                )
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn is_executable(path: &Path) -> bool {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        path.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    }
    #[cfg(not(unix))]
    {
        path.is_file()
    }
}

/// Names containing a separator are taken as paths, others are searched
/// for on `PATH`.
fn resolve_executable(name: &str) -> Result<PathBuf, CommandError> {
    let not_found = || CommandError::ExecutableNotFound(name.to_string());
    let candidate = Path::new(name);
    if candidate.components().count() > 1 {
        return if is_executable(candidate) {
            Ok(candidate.to_path_buf())
        } else {
            Err(not_found())
        };
    }
    let path = std::env::var_os("PATH").ok_or_else(not_found)?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| is_executable(p))
        .ok_or_else(not_found)
}

/// Runs `spec` inside `workdir`, killing it on timeout or when `cancelled`
/// turns true.
pub fn run_command(
    spec: &CommandSpec,
    workdir: &Path,
    cancelled: &dyn Fn() -> bool,
) -> Result<CommandResult, CommandError> {
    let (program, args) = spec.argv.split_first().ok_or(CommandError::EmptyCommand)?;
    let exe = resolve_executable(program)?;
    fs::create_dir_all(workdir)?;
    let stdout_path = workdir.join(STDOUT_FILE);
    let mut child = Command::new(exe)
        .args(args)
        .current_dir(workdir)
        .envs(&spec.env)
        .stdin(Stdio::null())
        .stdout(File::create(&stdout_path)?)
        .stderr(File::create(workdir.join(STDERR_FILE))?)
        .spawn()?;
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if cancelled() {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CommandError::Cancelled);
        }
        if started.elapsed() >= spec.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CommandError::Timeout(spec.timeout));
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let code = status.code();
    if !code.is_some_and(|c| spec.exit_codes.contains(&c)) {
        return Err(CommandError::BadExit {
            code,
            expected: spec.exit_codes.clone(),
        });
    }
    let stdout = fs::read_to_string(&stdout_path).unwrap_or_default();
    if let Some(expected) = &spec.expect_stdout {
        if !stdout.contains(expected.as_str()) {
            return Err(CommandError::ValidationFailed(format!(
                "stdout does not contain {expected:?}"
            )));
        }
    }
    let result = CommandResult {
        exit_code: code.unwrap_or(-1),
        stdout: if spec.capture == Capture::Files {
            String::new()
        } else {
            stdout
        },
        stdout_path,
        files: if spec.capture == Capture::Stdout {
            Vec::new()
        } else {
            produced_files(workdir)?
        },
    };
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    fs::write(workdir.join(RESULT_FILE), json)?;
    Ok(result)
}

/// Parameters shared by the command-running node kinds.
pub(super) fn command_parameters() -> Vec<Parameter> {
    vec![
        Parameter::required("command", "list<string>")
            .help("argv template; {key} is replaced from the input record"),
        Parameter::with_default("timeout", "float", 60.0.into()).help("seconds"),
        Parameter::with_default("exit_codes", "list<int>", vec![0i64].into()),
        Parameter::with_default("capture", "string", "both".into())
            .help("stdout, files or both"),
        Parameter::optional("expect_stdout", "string"),
        Parameter::optional("executable_key", "string")
            .help("system config entry supplying {executable}, env and prefix"),
    ]
}

pub(super) fn command_args(ctx: &mut NodeContext) -> Result<Value, NodeError> {
    if ctx.is_connected("inp") {
        ctx.receive("inp")
    } else {
        Ok(Value::Object(Default::default()))
    }
}

pub(super) fn register(r: &mut NodeRegistry) {
    let mut template = NodeSpec::new("command", "RunCommand")
        .optional_input("inp", "*")
        .output("out", "command-result")
        .looped(true);
    for p in command_parameters() {
        template = template.param(p);
    }
    r.register_template(template, |_| {
        Ok(Box::new(|ctx: &mut NodeContext| {
            let args = command_args(ctx)?;
            let workdir = ctx.workdir()?;
            let spec = CommandSpec::from_node(ctx.spec(), &args, &workdir, ctx.system())?;
            ctx.debug(format!("running {:?} in {}", spec.argv, workdir.display()));
            let result = match run_command(&spec, &workdir, &|| ctx.stop_requested()) {
                Err(CommandError::Cancelled) => return Err(ChannelError::Cancelled.into()),
                other => other?,
            };
            ctx.send("out", &result)?;
            if !ctx.is_connected("inp") {
                ctx.complete();
            }
            Ok(())
        }) as Box<dyn NodeBody>)
    });
}
