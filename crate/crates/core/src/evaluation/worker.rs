use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::protocol::{decode_worker_line, encode_request, encode_shutdown, WorkerMessage, PROTOCOL_VERSION};
use super::{EvaluationRequest, Evaluator, SlotUnavailable};
use crate::metrics::EvaluationResult;

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("failed to start worker: {0}")]
    Spawn(#[source] io::Error),
    #[error("worker did not answer within {0:?}")]
    Timeout(Duration),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("worker crashed: {0}")]
    WorkerCrash(String),
}

/// How to launch a trainer worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerCommand {
    pub program: String,
    pub args: Vec<String>,
    /// Limit for a single evaluation.
    pub timeout: Duration,
    /// Limit for the ready handshake after start-up.
    pub handshake_timeout: Duration,
}

impl WorkerCommand {
    pub fn new(argv: &[String], timeout: Duration) -> Option<Self> {
        let (program, args) = argv.split_first()?;
        Some(WorkerCommand {
            program: program.clone(),
            args: args.to_vec(),
            timeout,
            handshake_timeout: Duration::from_secs(60),
        })
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
}

impl Process {
    fn start(command: &WorkerCommand) -> Result<Self, WorkerError> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(WorkerError::Spawn)?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        let mut process = Process { child, stdin, lines };
        match process.read_message(command.handshake_timeout)? {
            WorkerMessage::Ready { protocol } if protocol == PROTOCOL_VERSION => Ok(process),
            WorkerMessage::Ready { protocol } => Err(WorkerError::ProtocolViolation(format!(
                "worker speaks protocol {protocol}, expected {PROTOCOL_VERSION}"
            ))),
            WorkerMessage::Result(_) => Err(WorkerError::ProtocolViolation("result before ready handshake".into())),
        }
    }

    fn read_message(&mut self, timeout: Duration) -> Result<WorkerMessage, WorkerError> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => decode_worker_line(line.trim_end()).map_err(WorkerError::ProtocolViolation),
            Ok(Err(e)) => Err(WorkerError::WorkerCrash(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(WorkerError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self
                    .child
                    .try_wait()
                    .ok()
                    .flatten()
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "closed its output".into());
                Err(WorkerError::WorkerCrash(status))
            }
        }
    }

    fn send(&mut self, line: &str) -> Result<(), WorkerError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| WorkerError::WorkerCrash(e.to_string()))
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "{}", encode_shutdown()).and_then(|_| self.stdin.flush());
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Client for one external trainer process speaking the line protocol.
///
/// Any timeout, protocol violation or crash fails the current candidate and
/// discards the process; the next request starts a fresh one.
pub struct ExternalWorker {
    command: WorkerCommand,
    process: Option<Process>,
}

impl ExternalWorker {
    /// Starts the worker and waits for its ready handshake.
    pub fn spawn(command: WorkerCommand) -> Result<Self, WorkerError> {
        let process = Process::start(&command)?;
        Ok(ExternalWorker {
            command,
            process: Some(process),
        })
    }

    pub fn is_alive(&self) -> bool {
        self.process.is_some()
    }

    /// Sends one request and waits for its result.
    pub fn evaluate_external(&mut self, request: &EvaluationRequest) -> Result<EvaluationResult, WorkerError> {
        let process = match self.process.as_mut() {
            Some(p) => p,
            None => self.process.insert(Process::start(&self.command)?),
        };
        let started = Instant::now();
        let outcome =
            process
                .send(&encode_request(request))
                .and_then(|_| match process.read_message(self.command.timeout)? {
                    WorkerMessage::Result(result) if result.candidate_id == request.candidate_id => Ok(result),
                    WorkerMessage::Result(result) => Err(WorkerError::ProtocolViolation(format!(
                        "result id `{}` does not match request `{}`",
                        result.candidate_id, request.candidate_id
                    ))),
                    WorkerMessage::Ready { .. } => {
                        Err(WorkerError::ProtocolViolation("unexpected ready message".into()))
                    }
                });
        match outcome {
            Ok(mut result) => {
                result.wall_time = started.elapsed().as_secs_f64();
                Ok(result)
            }
            Err(e) => {
                self.process = None;
                Err(e)
            }
        }
    }

    /// Sends the shutdown message and waits for the process to exit.
    pub fn shutdown(mut self) {
        self.process.take();
    }
}

impl Evaluator for ExternalWorker {
    fn evaluate(&mut self, request: &EvaluationRequest) -> Result<EvaluationResult, SlotUnavailable> {
        let started = Instant::now();
        match self.evaluate_external(request) {
            Ok(result) => Ok(result),
            Err(WorkerError::Spawn(e)) => Err(SlotUnavailable(format!("cannot start worker: {e}"))),
            Err(e) => {
                let mut failed = EvaluationResult::failed(&request.candidate_id, e.to_string());
                failed.wall_time = started.elapsed().as_secs_f64();
                Ok(failed)
            }
        }
    }
}
