//! Scratch workspaces, wall-clock limits and subprocess capture.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{Stage, ToolchainError};

fn io(e: std::io::Error) -> ToolchainError {
    ToolchainError::Io(e.to_string())
}

/// A fresh directory removed by [`Workspace::close`] (or on drop).
pub(super) struct Workspace(tempfile::TempDir);

impl Workspace {
    pub(super) fn new() -> Result<Self, ToolchainError> {
        tempfile::Builder::new().prefix("chipforge-").tempdir().map(Self).map_err(io)
    }

    pub(super) fn path(&self) -> &Path {
        self.0.path()
    }

    pub(super) fn write(&self, name: &str, text: &str) -> Result<PathBuf, ToolchainError> {
        let p = self.0.path().join(name);
        std::fs::write(&p, text).map_err(io)?;
        Ok(p)
    }

    /// Removes the directory and returns the path it had.
    pub(super) fn close(self) -> Result<PathBuf, ToolchainError> {
        let p = self.0.path().to_path_buf();
        self.0.close().map_err(io)?;
        Ok(p)
    }
}

/// Runs `f` on a helper thread and gives up after `limit`. A timed-out
/// computation is abandoned, not interrupted.
pub(super) fn with_timeout<T: Send + 'static>(limit: Duration, f: impl FnOnce() -> T + Send + 'static) -> Option<T> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(limit).ok()
}

pub(super) struct CommandOutput {
    pub success: bool,
    pub code: Option<i32>,
    /// stdout followed by stderr.
    pub output: String,
}

/// Runs `argv` in `dir` with output captured to files in the workspace.
pub(super) fn run(stage: Stage, argv: &[String], dir: &Path, envs: &[(&str, String)], limit: Duration) -> Result<CommandOutput, ToolchainError> {
    let (prog, args) = argv.split_first().ok_or_else(|| ToolchainError::Io("empty command template".into()))?;
    let out_path = dir.join(".stdout");
    let err_path = dir.join(".stderr");
    let mut cmd = Command::new(prog);
    cmd.args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(File::create(&out_path).map_err(io)?)
        .stderr(File::create(&err_path).map_err(io)?);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
            ToolchainError::ToolUnavailable { tool: prog.clone(), detail: e.to_string() }
        }
        _ => io(e),
    })?;
    let status = match child.wait_timeout(limit).map_err(io)? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ToolchainError::Timeout { stage, seconds: limit.as_secs_f64() });
        }
    };
    let mut output = std::fs::read_to_string(&out_path).unwrap_or_default();
    output.push_str(&std::fs::read_to_string(&err_path).unwrap_or_default());
    Ok(CommandOutput { success: status.success(), code: status.code(), output })
}
