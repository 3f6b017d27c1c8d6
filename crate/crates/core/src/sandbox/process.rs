//! Single-use child processes with rlimits, a wall-clock deadline, capped output
//! capture and process-group cleanup.

use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::ExecutionLimits;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Termination {
    Exited(i32),
    Signaled(i32),
    /// Killed by us at the wall-clock deadline.
    WallTimeout,
    /// Killed by us because captured output exceeded the cap.
    OutputExceeded,
}

#[derive(Debug, Clone)]
pub(crate) struct ProcessRun {
    pub termination: Termination,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
}

impl ProcessRun {
    pub fn exited_cleanly(&self) -> bool {
        self.termination == Termination::Exited(0)
    }
}

fn kill_group(pid: i32) {
    // SAFETY: plain syscall; ESRCH when the group is already gone is expected.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) {
    let lim = libc::rlimit {
        rlim_cur: soft as libc::rlim_t,
        rlim_max: hard as libc::rlim_t,
    };
    // SAFETY: called in the forked child before exec; setrlimit is async-signal-safe.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn capture<R: Read + Send + 'static>(
    mut reader: R,
    cap: usize,
    exceeded: Arc<AtomicBool>,
    pid: i32,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        exceeded.store(true, Ordering::SeqCst);
                        kill_group(pid);
                        break;
                    }
                }
            }
        }
        kept
    })
}

/// Runs `program args..` in `workdir` with `stdin_data` on standard input.
///
/// The child gets its own session (so the whole group can be killed), a cleared
/// environment, CPU/address-space/file-size limits, and, when possible, a private
/// network namespace if networking is disallowed.
pub(crate) fn run_process(
    program: &str,
    args: &[String],
    workdir: &Path,
    stdin_data: &[u8],
    limits: &ExecutionLimits,
) -> Result<ProcessRun> {
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(workdir)
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("HOME", workdir)
        .env("LANG", "C.UTF-8")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONIOENCODING", "utf-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let cpu_secs = limits.cpu_time_ms.div_ceil(1000).max(1);
    let memory = limits.memory_bytes;
    let file_size = limits.max_output_bytes.saturating_mul(16).max(1 << 20);
    let isolate_net = !limits.network_allowed;
    // SAFETY: the closure only issues async-signal-safe syscalls.
    unsafe {
        cmd.pre_exec(move || {
            libc::setsid();
            set_limit(libc::RLIMIT_CPU, cpu_secs, cpu_secs + 1);
            set_limit(libc::RLIMIT_AS, memory, memory);
            set_limit(libc::RLIMIT_FSIZE, file_size, file_size);
            set_limit(libc::RLIMIT_CORE, 0, 0);
            if isolate_net {
                // Best effort: needs CAP_SYS_ADMIN; the harness blocks sockets regardless.
                libc::unshare(libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Environment(format!("interpreter `{program}` not found"))
        } else {
            Error::Infrastructure(format!("failed to spawn `{program}`: {e}"))
        }
    })?;
    let pid = child.id() as i32;

    let cap = usize::try_from(limits.max_output_bytes).unwrap_or(usize::MAX);
    let exceeded = Arc::new(AtomicBool::new(false));
    let out_handle = capture(child.stdout.take().expect("piped"), cap, exceeded.clone(), pid);
    let err_handle = capture(child.stderr.take().expect("piped"), cap, exceeded.clone(), pid);

    let mut stdin = child.stdin.take().expect("piped");
    let input = stdin_data.to_vec();
    let in_handle = thread::spawn(move || {
        // A child that never reads stdin closes the pipe; that is not our failure.
        let _ = stdin.write_all(&input);
    });

    let deadline = start + Duration::from_millis(limits.wall_time_ms);
    let mut timed_out = false;
    let mut poll = Duration::from_millis(1);
    let status: ExitStatus = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                kill_group(pid);
                return Err(Error::Infrastructure(format!("wait failed: {e}")));
            }
        }
        let now = Instant::now();
        if now >= deadline {
            timed_out = true;
            kill_group(pid);
            break child
                .wait()
                .map_err(|e| Error::Infrastructure(format!("wait failed: {e}")))?;
        }
        thread::sleep(poll.min(deadline - now));
        poll = (poll * 2).min(Duration::from_millis(10));
    };
    let duration_ms = start.elapsed().as_millis() as u64;
    // Reap anything the candidate left behind in its process group.
    kill_group(pid);

    let stdout = out_handle.join().unwrap_or_default();
    let stderr = err_handle.join().unwrap_or_default();
    let _ = in_handle.join();

    let termination = if timed_out {
        Termination::WallTimeout
    } else if exceeded.load(Ordering::SeqCst) {
        Termination::OutputExceeded
    } else if let Some(code) = status.code() {
        Termination::Exited(code)
    } else {
        Termination::Signaled(status.signal().unwrap_or(0))
    };

    Ok(ProcessRun {
        termination,
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        duration_ms,
    })
}
