//! Runs candidate programs in a child process.
//!
//! Each execution gets its own directory under the run's scratch directory,
//! a cleared environment, a wall-clock limit enforced by killing the whole
//! process group, and an address-space limit. On Linux, filesystem writes
//! are confined to the scratch directory with Landlock when the kernel
//! supports it.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{parse_configuration, Configuration, Task, WireError};

use super::extract::CandidateProgram;

/// Output kept per stream.
const MAX_OUTPUT_BYTES: usize = 4 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub wall_time_s: f64,
    pub memory_bytes: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            wall_time_s: 30.0,
            memory_bytes: 1 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Interpreter command; the program file path is appended.
    pub interpreter: Vec<String>,
    pub limits: SandboxLimits,
    /// Fail executions when write confinement cannot be installed.
    #[serde(default)]
    pub require_write_isolation: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            interpreter: vec!["python3".into()],
            limits: SandboxLimits::default(),
            require_write_isolation: false,
        }
    }
}

/// The sandbox itself cannot run; this halts a run.
#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox interpreter `{0}` not found")]
    InterpreterMissing(String),
    #[error("sandbox interpreter command is empty")]
    EmptyInterpreter,
    #[error("write isolation unavailable: {0}")]
    IsolationUnavailable(String),
    #[error("sandbox i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecFailureKind {
    Timeout { limit_s: f64 },
    Crash { code: Option<i32>, signal: Option<i32> },
    Parse { error: String },
    Arity { expected: usize, got: usize },
}

/// Captured streams of one execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutput {
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecFailure {
    pub kind: ExecFailureKind,
    pub output: ExecOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecSuccess {
    pub configuration: Configuration,
    pub output: ExecOutput,
}

pub struct Sandbox {
    config: SandboxConfig,
    scratch: PathBuf,
}

impl Sandbox {
    /// Sandbox writing under `scratch`, created if missing.
    pub fn new(config: SandboxConfig, scratch: impl Into<PathBuf>) -> Result<Self, SandboxError> {
        let scratch = scratch.into();
        let program = config
            .interpreter
            .first()
            .ok_or(SandboxError::EmptyInterpreter)?;
        if find_executable(program).is_none() {
            return Err(SandboxError::InterpreterMissing(program.clone()));
        }
        std::fs::create_dir_all(&scratch)?;
        let scratch = scratch.canonicalize()?;
        if config.require_write_isolation {
            landlock::WriteRuleset::confined_to(&scratch)
                .map_err(|e| SandboxError::IsolationUnavailable(e.to_string()))?;
        }
        Ok(Self { config, scratch })
    }

    pub fn scratch(&self) -> &Path {
        &self.scratch
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Whether this kernel can confine writes to the scratch directory.
    pub fn write_isolation_available(&self) -> bool {
        landlock::WriteRuleset::confined_to(&self.scratch).is_ok()
    }

    /// Runs `program` in `<scratch>/<label>` and parses its configuration.
    pub fn execute_candidate(
        &self,
        program: &CandidateProgram,
        task: Task,
        label: &str,
    ) -> Result<Result<ExecSuccess, ExecFailure>, SandboxError> {
        let (status, output, timed_out) = self.run(&program.source, label)?;
        let limit_s = self.config.limits.wall_time_s;
        let kind = if timed_out {
            ExecFailureKind::Timeout { limit_s }
        } else if !status.success() {
            use std::os::unix::process::ExitStatusExt;
            ExecFailureKind::Crash {
                code: status.code(),
                signal: status.signal(),
            }
        } else {
            match parse_configuration(task, &output.stdout) {
                Ok(configuration) => {
                    return Ok(Ok(ExecSuccess {
                        configuration,
                        output,
                    }))
                }
                Err(WireError::Arity { expected, got }) => {
                    ExecFailureKind::Arity { expected, got }
                }
                Err(e) => ExecFailureKind::Parse {
                    error: e.to_string(),
                },
            }
        };
        Ok(Err(ExecFailure { kind, output }))
    }

    /// Runs `source` and returns its exit status, captured output and
    /// whether the wall-clock limit was hit.
    pub fn run(&self, source: &str, label: &str) -> Result<(ExitStatus, ExecOutput, bool), SandboxError> {
        let dir = self.scratch.join(sanitize(label));
        std::fs::create_dir_all(&dir)?;
        let file = dir.join("candidate.py");
        std::fs::write(&file, source)?;

        let ruleset = match landlock::WriteRuleset::confined_to(&self.scratch) {
            Ok(r) => Some(r),
            Err(e) if self.config.require_write_isolation => {
                return Err(SandboxError::IsolationUnavailable(e.to_string()))
            }
            Err(e) => {
                tracing::debug!(error = %e, "running without write isolation");
                None
            }
        };

        let mut cmd = Command::new(&self.config.interpreter[0]);
        cmd.args(&self.config.interpreter[1..])
            .arg(&file)
            .current_dir(&dir)
            .env_clear()
            .env("PATH", std::env::var("PATH").unwrap_or_else(|_| "/usr/bin:/bin".into()))
            .env("HOME", &dir)
            .env("TMPDIR", &dir)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("OMP_NUM_THREADS", "1")
            .env("OPENBLAS_NUM_THREADS", "1")
            .env("MKL_NUM_THREADS", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());

        let memory = self.config.limits.memory_bytes;
        let ruleset_fd = ruleset.as_ref().map(|r| r.fd());
        // SAFETY: only async-signal-safe calls (setpgid, setrlimit, prctl,
        // raw landlock syscalls) run between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                if libc::setpgid(0, 0) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                let lim = libc::rlimit {
                    rlim_cur: memory as libc::rlim_t,
                    rlim_max: memory as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                if let Some(fd) = ruleset_fd {
                    landlock::restrict_self(fd)?;
                }
                Ok(())
            });
        }

        let mut child = cmd.spawn()?;
        drop(ruleset);
        let pid = child.id() as libc::pid_t;
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || read_capped(stdout));
        let err_reader = thread::spawn(move || read_capped(stderr));

        let deadline = Instant::now() + Duration::from_secs_f64(self.config.limits.wall_time_s);
        let mut timed_out = false;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                timed_out = true;
                // SAFETY: signalling the process group we created.
                unsafe {
                    libc::kill(-pid, libc::SIGKILL);
                }
                break child.wait()?;
            }
            thread::sleep(Duration::from_millis(5));
        };
        // Orphans left in the group would keep the pipes open.
        // SAFETY: as above.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
        let output = ExecOutput {
            stdout: out_reader.join().unwrap_or_default(),
            stderr: err_reader.join().unwrap_or_default(),
        };
        Ok((status, output, timed_out))
    }
}

fn read_capped(mut stream: impl Read) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if buf.len() < MAX_OUTPUT_BYTES {
                    let take = n.min(MAX_OUTPUT_BYTES - buf.len());
                    buf.extend_from_slice(&chunk[..take]);
                }
            }
        }
    }
    String::from_utf8_lossy(&buf).into_owned()
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn find_executable(program: &str) -> Option<PathBuf> {
    let path = Path::new(program);
    if path.components().count() > 1 {
        return path.is_file().then(|| path.to_path_buf());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|dir| dir.join(program))
            .find(|candidate| candidate.is_file())
    })
}

/// Raw Landlock bindings for write confinement.
mod landlock {
    use std::ffi::CString;
    use std::os::fd::{AsRawFd, FromRawFd, OwnedFd, RawFd};
    use std::os::unix::ffi::OsStrExt;
    use std::path::Path;

    const SYS_CREATE_RULESET: libc::c_long = 444;
    const SYS_ADD_RULE: libc::c_long = 445;
    const SYS_RESTRICT_SELF: libc::c_long = 446;
    const CREATE_RULESET_VERSION: u32 = 1;
    const RULE_PATH_BENEATH: libc::c_int = 1;

    const WRITE_FILE: u64 = 1 << 1;
    const REMOVE_DIR: u64 = 1 << 4;
    const REMOVE_FILE: u64 = 1 << 5;
    const MAKE_CHAR: u64 = 1 << 6;
    const MAKE_DIR: u64 = 1 << 7;
    const MAKE_REG: u64 = 1 << 8;
    const MAKE_SOCK: u64 = 1 << 9;
    const MAKE_FIFO: u64 = 1 << 10;
    const MAKE_BLOCK: u64 = 1 << 11;
    const MAKE_SYM: u64 = 1 << 12;
    const REFER: u64 = 1 << 13;
    const TRUNCATE: u64 = 1 << 14;

    #[repr(C)]
    struct RulesetAttr {
        handled_access_fs: u64,
    }

    #[repr(C, packed)]
    struct PathBeneathAttr {
        allowed_access: u64,
        parent_fd: i32,
    }

    pub(super) struct WriteRuleset {
        fd: OwnedFd,
    }

    impl WriteRuleset {
        pub(super) fn fd(&self) -> RawFd {
            self.fd.as_raw_fd()
        }

        /// Ruleset that denies every write outside `dir` (and `/dev/null`).
        pub(super) fn confined_to(dir: &Path) -> std::io::Result<Self> {
            // SAFETY: version query takes no pointer.
            let abi = unsafe {
                libc::syscall(
                    SYS_CREATE_RULESET,
                    std::ptr::null::<RulesetAttr>(),
                    0usize,
                    CREATE_RULESET_VERSION,
                )
            };
            if abi < 1 {
                return Err(std::io::Error::last_os_error());
            }
            let mut handled = WRITE_FILE
                | REMOVE_DIR
                | REMOVE_FILE
                | MAKE_CHAR
                | MAKE_DIR
                | MAKE_REG
                | MAKE_SOCK
                | MAKE_FIFO
                | MAKE_BLOCK
                | MAKE_SYM;
            if abi >= 2 {
                handled |= REFER;
            }
            if abi >= 3 {
                handled |= TRUNCATE;
            }
            let attr = RulesetAttr {
                handled_access_fs: handled,
            };
            // SAFETY: attr outlives the call and size matches.
            let raw = unsafe {
                libc::syscall(
                    SYS_CREATE_RULESET,
                    &attr as *const RulesetAttr,
                    std::mem::size_of::<RulesetAttr>(),
                    0u32,
                )
            };
            if raw < 0 {
                return Err(std::io::Error::last_os_error());
            }
            // SAFETY: the kernel returned a fresh descriptor we now own.
            let fd = unsafe { OwnedFd::from_raw_fd(raw as RawFd) };
            let ruleset = Self { fd };
            ruleset.allow(dir, handled)?;
            ruleset.allow(Path::new("/dev/null"), handled & (WRITE_FILE | TRUNCATE))?;
            Ok(ruleset)
        }

        fn allow(&self, path: &Path, access: u64) -> std::io::Result<()> {
            let c_path = CString::new(path.as_os_str().as_bytes())
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
            // SAFETY: valid NUL-terminated path.
            let raw = unsafe { libc::open(c_path.as_ptr(), libc::O_PATH | libc::O_CLOEXEC) };
            if raw < 0 {
                return Err(std::io::Error::last_os_error());
            }
            // SAFETY: fresh descriptor from open.
            let parent = unsafe { OwnedFd::from_raw_fd(raw) };
            let rule = PathBeneathAttr {
                allowed_access: access,
                parent_fd: parent.as_raw_fd(),
            };
            // SAFETY: rule outlives the call.
            let rc = unsafe {
                libc::syscall(
                    SYS_ADD_RULE,
                    self.fd.as_raw_fd(),
                    RULE_PATH_BENEATH,
                    &rule as *const PathBeneathAttr,
                    0u32,
                )
            };
            if rc != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        }
    }

    /// Applies the ruleset to the calling process. Async-signal-safe.
    pub(super) fn restrict_self(fd: RawFd) -> std::io::Result<()> {
        // SAFETY: plain syscalls with integer arguments.
        unsafe {
            if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if libc::syscall(SYS_RESTRICT_SELF, fd, 0u32) != 0 {
                return Err(std::io::Error::last_os_error());
            }
        }
        Ok(())
    }
}
