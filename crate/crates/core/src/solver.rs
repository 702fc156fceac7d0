//! An SMT solver driven as a child process over its stdin/stdout text protocol.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::env;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command as Process, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use crate::encoding::{Command, EncodingError, Term};

/// Environment variable overriding the solver binary.
pub const SOLVER_ENV: &str = "POLYNET_SOLVER";

const STDERR_TAIL: usize = 40;
const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("cannot start solver `{path}`: {source}")]
    Spawn { path: String, source: io::Error },
    #[error("solver process died; stderr tail:\n{stderr}")]
    SessionDead { stderr: String },
    #[error("unexpected solver output: {line}")]
    Protocol { line: String },
    #[error("invalid session use: {0}")]
    Usage(&'static str),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub path: PathBuf,
    pub args: Vec<String>,
    /// Per-query timeout. `None` waits forever.
    pub timeout: Option<Duration>,
    pub produce_cores: bool,
    /// Also pass the timeout to the solver through `(set-option :timeout ms)`.
    pub solver_side_timeout: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let path = env::var_os(SOLVER_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("z3"));
        SolverConfig {
            path,
            args: vec!["-in".into(), "-smt2".into()],
            timeout: None,
            produce_cores: true,
            solver_side_timeout: true,
        }
    }
}

impl SolverConfig {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownReason {
    Timeout,
    Interrupted,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown(UnknownReason),
}

/// Shared switch to abort the running query of a session from another thread.
#[derive(Debug, Clone, Default)]
pub struct InterruptHandle(Arc<AtomicBool>);

impl InterruptHandle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn interrupt(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_interrupted(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

struct Process_ {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<VecDeque<String>>>,
    /// Commands sent whose `success` has not been read yet.
    pending: usize,
}

impl Process_ {
    fn spawn(config: &SolverConfig) -> Result<Self, SolverError> {
        let mut child = Process::new(&config.path)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                path: config.path.display().to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(VecDeque::new()));
        let tail = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut reader = BufReader::new(stderr_pipe);
            let mut buf = String::new();
            while reader.read_line(&mut buf).map(|n| n > 0).unwrap_or(false) {
                let mut t = tail.lock().unwrap();
                if t.len() == STDERR_TAIL {
                    t.pop_front();
                }
                t.push_back(buf.trim_end().to_string());
                buf.clear();
            }
            // drain anything left so the child never blocks on a full pipe
            let _ = reader.read_to_end(&mut Vec::new());
        });
        Ok(Process_ {
            child,
            stdin,
            lines,
            stderr,
            pending: 0,
        })
    }

    fn dead(&mut self) -> SolverError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        // give the stderr reader a moment to collect the last lines
        thread::sleep(Duration::from_millis(10));
        let stderr = self.stderr.lock().unwrap().iter().cloned().collect::<Vec<_>>().join("\n");
        SolverError::SessionDead { stderr }
    }

    fn write(&mut self, text: &str) -> Result<(), SolverError> {
        if self.stdin.write_all(text.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            return Err(self.dead());
        }
        Ok(())
    }

    fn send(&mut self, cmd: &str) -> Result<(), SolverError> {
        self.write(cmd)?;
        self.write("\n")?;
        self.pending += 1;
        Ok(())
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Reads one balanced response. `Ok(None)` means the wait was cut short
    /// by the deadline or the interrupt flag.
    fn read_response(
        &mut self,
        deadline: Option<Instant>,
        interrupt: &InterruptHandle,
    ) -> Result<Option<String>, SolverError> {
        let mut acc = String::new();
        loop {
            if interrupt.is_interrupted() || deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(None);
            }
            match self.lines.recv_timeout(POLL) {
                Ok(line) => {
                    if !acc.is_empty() {
                        acc.push('\n');
                    }
                    acc.push_str(&line);
                    if acc.trim().is_empty() {
                        acc.clear();
                        continue;
                    }
                    if paren_balance(&acc) <= 0 {
                        return Ok(Some(acc));
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Err(self.dead()),
            }
        }
    }

    /// Consumes the `success` acknowledgements of earlier commands.
    fn drain(&mut self, interrupt: &InterruptHandle) -> Result<bool, SolverError> {
        while self.pending > 0 {
            match self.read_response(None, interrupt)? {
                None => return Ok(false),
                Some(r) if r.trim() == "success" => self.pending -= 1,
                Some(r) => return Err(protocol(r)),
            }
        }
        Ok(true)
    }
}

fn protocol(line: String) -> SolverError {
    SolverError::Protocol { line }
}

fn paren_balance(s: &str) -> i64 {
    let mut depth = 0i64;
    let mut in_string = false;
    let mut in_quote = false;
    for c in s.chars() {
        match c {
            '"' if !in_quote => in_string = !in_string,
            '|' if !in_string => in_quote = !in_quote,
            '(' if !in_string && !in_quote => depth += 1,
            ')' if !in_string && !in_quote => depth -= 1,
            _ => {}
        }
    }
    depth
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexp(text: &str) -> Option<Sexp> {
    fn tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut chars = text.chars().peekable();
        while let Some(&c) = chars.peek() {
            match c {
                '(' | ')' => {
                    out.push(c.to_string());
                    chars.next();
                }
                c if c.is_whitespace() => {
                    chars.next();
                }
                '|' => {
                    chars.next();
                    let mut s = String::new();
                    for c in chars.by_ref() {
                        if c == '|' {
                            break;
                        }
                        s.push(c);
                    }
                    out.push(s);
                }
                _ => {
                    let mut s = String::new();
                    while let Some(&c) = chars.peek() {
                        if c == '(' || c == ')' || c.is_whitespace() {
                            break;
                        }
                        s.push(c);
                        chars.next();
                    }
                    out.push(s);
                }
            }
        }
        out
    }
    fn build(toks: &[String], pos: &mut usize) -> Option<Sexp> {
        let t = toks.get(*pos)?;
        *pos += 1;
        match t.as_str() {
            "(" => {
                let mut items = Vec::new();
                loop {
                    if toks.get(*pos)? == ")" {
                        *pos += 1;
                        return Some(Sexp::List(items));
                    }
                    items.push(build(toks, pos)?);
                }
            }
            ")" => None,
            _ => Some(Sexp::Atom(t.clone())),
        }
    }
    let toks = tokens(text);
    let mut pos = 0;
    let s = build(&toks, &mut pos)?;
    (pos == toks.len()).then_some(s)
}

fn sexp_int(s: &Sexp) -> Option<i64> {
    match s {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(minus), v] if minus == "-" => sexp_int(v).and_then(i64::checked_neg),
            _ => None,
        },
    }
}

/// A live solver process plus the log needed to rebuild it after a kill.
pub struct SolverSession {
    config: SolverConfig,
    process: Option<Process_>,
    header: Vec<String>,
    /// Sent commands per scope; `scopes[0]` is the base level.
    scopes: Vec<Vec<String>>,
    declared: Vec<BTreeSet<String>>,
    last: Option<SatResult>,
    labels: usize,
    interrupt: InterruptHandle,
    queries: usize,
    /// Hard stop for every later query, on top of the per-query timeout.
    deadline: Option<Instant>,
}

impl std::fmt::Debug for SolverSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverSession")
            .field("path", &self.config.path)
            .field("depth", &self.depth())
            .field("queries", &self.queries)
            .finish()
    }
}

impl SolverSession {
    pub fn start(config: SolverConfig) -> Result<Self, SolverError> {
        let mut header = vec![Command::SetOption("print-success".into(), "true".into()).to_string()];
        if config.produce_cores {
            header.push(Command::SetOption("produce-unsat-cores".into(), "true".into()).to_string());
        }
        if let (Some(t), true) = (config.timeout, config.solver_side_timeout) {
            header.push(Command::SetOption("timeout".into(), t.as_millis().to_string()).to_string());
        }
        header.push(Command::SetLogic("QF_LIA".into()).to_string());
        let mut s = SolverSession {
            config,
            process: None,
            header,
            scopes: vec![Vec::new()],
            declared: vec![BTreeSet::new()],
            last: None,
            labels: 0,
            interrupt: InterruptHandle::new(),
            queries: 0,
            deadline: None,
        };
        s.respawn()?;
        Ok(s)
    }

    /// Starts a session with the default configuration.
    pub fn start_default() -> Result<Self, SolverError> {
        Self::start(SolverConfig::default())
    }

    fn respawn(&mut self) -> Result<(), SolverError> {
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
        let mut p = Process_::spawn(&self.config)?;
        for line in &self.header {
            p.send(line)?;
        }
        for (i, scope) in self.scopes.iter().enumerate() {
            if i > 0 {
                p.send(&Command::Push.to_string())?;
            }
            for line in scope {
                p.send(line)?;
            }
        }
        self.process = Some(p);
        Ok(())
    }

    fn proc(&mut self) -> Result<&mut Process_, SolverError> {
        if self.process.is_none() {
            self.respawn()?;
        }
        Ok(self.process.as_mut().unwrap())
    }

    fn record(&mut self, line: String) -> Result<(), SolverError> {
        self.last = None;
        self.proc()?.send(&line)?;
        self.scopes.last_mut().unwrap().push(line);
        Ok(())
    }

    pub fn interrupt_handle(&self) -> InterruptHandle {
        self.interrupt.clone()
    }

    /// Shares an externally owned cancellation switch.
    pub fn set_interrupt_handle(&mut self, handle: InterruptHandle) {
        self.interrupt = handle;
    }

    /// Queries still running at `deadline` are abandoned as timeouts.
    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    pub fn depth(&self) -> usize {
        self.scopes.len() - 1
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.declared.iter().any(|s| s.contains(name))
    }

    pub fn declare(&mut self, name: &str) -> Result<(), SolverError> {
        if self.is_declared(name) {
            return Ok(());
        }
        self.declared.last_mut().unwrap().insert(name.to_string());
        self.record(Command::DeclareConst(name.to_string()).to_string())
    }

    /// Declares every name and asserts it nonnegative.
    pub fn declare_nonneg(&mut self, names: &[String]) -> Result<(), SolverError> {
        let fresh: Vec<String> = names.iter().filter(|n| !self.is_declared(n)).cloned().collect();
        for n in &fresh {
            self.declare(n)?;
        }
        if !fresh.is_empty() {
            let t = Term::and(fresh.iter().map(|n| Term::ge(Term::var(n), Term::Int(0))));
            self.assert(&t)?;
        }
        Ok(())
    }

    fn check_declared(&self, t: &Term) -> Result<(), SolverError> {
        match t.vars().into_iter().find(|v| !self.is_declared(v)) {
            Some(v) => Err(EncodingError::Undeclared(v.to_string()).into()),
            None => Ok(()),
        }
    }

    pub fn assert(&mut self, t: &Term) -> Result<(), SolverError> {
        self.check_declared(t)?;
        self.record(Command::Assert(t.clone(), None).to_string())
    }

    /// Asserts `t` under a fresh label and returns it.
    pub fn assert_labeled(&mut self, t: &Term) -> Result<String, SolverError> {
        self.check_declared(t)?;
        let label = format!("L{}", self.labels);
        self.labels += 1;
        self.record(Command::Assert(t.clone(), Some(label.clone())).to_string())?;
        Ok(label)
    }

    pub fn push(&mut self) -> Result<(), SolverError> {
        self.last = None;
        self.proc()?.send(&Command::Push.to_string())?;
        self.scopes.push(Vec::new());
        self.declared.push(BTreeSet::new());
        Ok(())
    }

    pub fn pop(&mut self) -> Result<(), SolverError> {
        if self.scopes.len() == 1 {
            return Err(SolverError::Usage("pop without matching push"));
        }
        self.last = None;
        self.scopes.pop();
        self.declared.pop();
        // a killed process is rebuilt from the log, which no longer has the scope
        if let Some(p) = self.process.as_mut() {
            p.send(&Command::Pop.to_string())?;
        }
        Ok(())
    }

    /// Runs `(check-sat)` under the configured timeout.
    pub fn check_sat(&mut self) -> Result<SatResult, SolverError> {
        self.queries += 1;
        let deadline = match (self.config.timeout.map(|t| Instant::now() + t), self.deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let interrupt = self.interrupt.clone();
        let p = self.proc()?;
        if !p.drain(&interrupt)? {
            return Ok(self.abort(UnknownReason::Interrupted));
        }
        p.write("(check-sat)\n")?;
        let answer = match p.read_response(deadline, &interrupt)? {
            Some(a) => a,
            None => {
                let reason = if interrupt.is_interrupted() {
                    UnknownReason::Interrupted
                } else {
                    UnknownReason::Timeout
                };
                return Ok(self.abort(reason));
            }
        };
        let r = match answer.trim() {
            "sat" => SatResult::Sat,
            "unsat" => SatResult::Unsat,
            "unknown" => {
                let timed_out = deadline.is_some_and(|d| Instant::now() + POLL >= d);
                SatResult::Unknown(if timed_out {
                    UnknownReason::Timeout
                } else {
                    UnknownReason::Solver
                })
            }
            _ => return Err(protocol(answer)),
        };
        self.last = Some(r);
        Ok(r)
    }

    /// Kills the process after an abandoned query. The next command
    /// respawns it and replays the log, unless the session was interrupted.
    fn abort(&mut self, reason: UnknownReason) -> SatResult {
        debug!("solver query abandoned: {reason:?}");
        if let Some(mut p) = self.process.take() {
            p.kill();
        }
        self.last = None;
        SatResult::Unknown(reason)
    }

    /// Asserts under a temporary scope, checks, and pops.
    pub fn check_assuming(&mut self, t: &Term) -> Result<SatResult, SolverError> {
        self.push()?;
        let r = self.assert(t).and_then(|_| self.check_sat());
        let popped = self.pop();
        let r = r?;
        popped?;
        self.last = Some(r);
        Ok(r)
    }

    /// Values of `names` in the last model. Only valid right after `Sat`.
    pub fn get_values(&mut self, names: &[String]) -> Result<HashMap<String, i64>, SolverError> {
        if self.last != Some(SatResult::Sat) {
            return Err(SolverError::Usage("get-value requires a preceding sat answer"));
        }
        if names.is_empty() {
            return Ok(HashMap::new());
        }
        if let Some(n) = names.iter().find(|n| !self.is_declared(n)) {
            return Err(EncodingError::Undeclared(n.clone()).into());
        }
        let interrupt = self.interrupt.clone();
        let p = self.proc()?;
        p.write(&format!("{}\n", Command::GetValue(names.to_vec())))?;
        let Some(answer) = p.read_response(None, &interrupt)? else {
            return Err(SolverError::Usage("interrupted while reading a model"));
        };
        let Some(Sexp::List(pairs)) = parse_sexp(&answer) else {
            return Err(protocol(answer));
        };
        if pairs.len() != names.len() {
            return Err(protocol(answer));
        }
        let mut out = HashMap::with_capacity(names.len());
        for (name, pair) in names.iter().zip(&pairs) {
            let value = match pair {
                Sexp::List(kv) if kv.len() == 2 => sexp_int(&kv[1]),
                _ => None,
            };
            match value {
                Some(v) => {
                    out.insert(name.clone(), v);
                }
                None => return Err(protocol(answer)),
            }
        }
        Ok(out)
    }

    /// Every variable declared in an open scope, with its model value.
    pub fn get_model(&mut self) -> Result<HashMap<String, i64>, SolverError> {
        let names: Vec<String> = self.declared.iter().flatten().cloned().collect();
        self.get_values(&names)
    }

    /// Labels in the unsat core of the last answer.
    pub fn get_unsat_core(&mut self) -> Result<Vec<String>, SolverError> {
        if self.last != Some(SatResult::Unsat) {
            return Err(SolverError::Usage("get-unsat-core requires a preceding unsat answer"));
        }
        if !self.config.produce_cores {
            return Err(SolverError::Usage("unsat cores are disabled"));
        }
        let interrupt = self.interrupt.clone();
        let p = self.proc()?;
        p.write("(get-unsat-core)\n")?;
        let Some(answer) = p.read_response(None, &interrupt)? else {
            return Err(SolverError::Usage("interrupted while reading a core"));
        };
        match parse_sexp(&answer) {
            Some(Sexp::List(items)) => items
                .into_iter()
                .map(|i| match i {
                    Sexp::Atom(a) => Ok(a),
                    _ => Err(protocol(answer.clone())),
                })
                .collect(),
            _ => Err(protocol(answer)),
        }
    }

    /// Sends `(exit)` and reaps the process.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(mut p) = self.process.take() {
            let _ = p.write("(exit)\n");
            let deadline = Instant::now() + Duration::from_millis(200);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = p.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(5));
            }
            warn!("solver did not exit, killing it");
            p.kill();
        }
    }
}

impl Drop for SolverSession {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// True when the configured solver binary can be started.
pub fn solver_available(config: &SolverConfig) -> bool {
    SolverSession::start(config.clone()).is_ok()
}
