//! Query orchestration: optional reduction, then BMC and PDR in parallel
//! threads. The first definitive answer wins and the other procedure is
//! interrupted; its result is discarded.

use std::fmt;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info};
use num_rational::Ratio;
use thiserror::Error;

use crate::bmc::{bmc_on_trace, BmcOptions, BmcOutcome, DEFAULT_MAX_DEPTH};
use crate::frontend::NamedProperty;
use crate::net::{Label, Marking, PetriNet};
use crate::oracle::{enumerate, explicit_check, Cutoffs};
use crate::pdr::{pdr_on_trace, PdrOptions, PdrOutcome};
use crate::property::{Formula, Quantifier, Verdict, Witness};
use crate::reducer::{reduce, ReducePolicy, ReductionTrace};
use crate::solver::{InterruptHandle, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Bmc,
    Pdr,
    /// BMC, plus PDR when the violation is syntactically upward closed.
    Auto,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bmc" => Ok(Method::Bmc),
            "pdr" => Ok(Method::Pdr),
            "auto" => Ok(Method::Auto),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Human,
    /// One `FORMULA ...` line per property.
    Machine,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("at least one method is required")]
    NoMethod,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub reductions: bool,
    /// Treat every transition as silent before reducing. Reachability does
    /// not depend on labels, so this only enables more rules.
    pub hide_labels: bool,
    pub timeout: Duration,
    pub solver: SolverConfig,
    /// Stop BMC once the reachable state space has been covered.
    pub bmc_fixpoint: bool,
    /// Compare against explicit state-space exploration.
    pub oracle_check: bool,
    pub oracle_cutoffs: Cutoffs,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            methods: vec![Method::Auto],
            reductions: true,
            hide_labels: true,
            timeout: Duration::from_secs(60),
            solver: SolverConfig::default(),
            bmc_fixpoint: true,
            oracle_check: false,
            oracle_cutoffs: Cutoffs::default(),
            format: OutputFormat::Human,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if self.methods.is_empty() {
            return Err(ConfigError::NoMethod);
        }
        Ok(())
    }

    fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Procedure {
    Bmc,
    Pdr,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Procedure::Bmc => write!(f, "BMC"),
            Procedure::Pdr => write!(f, "PDR"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub id: String,
    pub quantifier: Quantifier,
    pub verdict: Verdict,
    /// The procedure whose answer was kept.
    pub method: Option<Procedure>,
    /// BMC depth of the answer, or the PDR frame count.
    pub depth: Option<usize>,
    /// Transition-relation copies added by the winning BMC run (0 for PDR).
    pub iterations: Option<usize>,
    pub reduced: bool,
    pub ratio: Ratio<u64>,
    pub places: (usize, usize),
    pub transitions: (usize, usize),
    /// Source-net marking matching a witness found on the reduced net.
    pub lifted: Option<Marking>,
    /// Result of the post-hoc check of a PDR invariant.
    pub certified: Option<bool>,
    pub wall: Duration,
    /// `Some(agree)` when the oracle produced a definitive answer.
    pub oracle_agreement: Option<bool>,
    pub reasons: Vec<(Procedure, String)>,
}

impl Report {
    /// `Some(true)` when the queried property holds.
    pub fn truth(&self) -> Option<bool> {
        self.verdict.truth()
    }

    pub fn techniques(&self) -> Vec<&'static str> {
        let mut t = Vec::new();
        if self.reduced {
            t.push("REDUCTION");
        }
        match self.method {
            Some(Procedure::Bmc) => t.push("BMC"),
            Some(Procedure::Pdr) => t.push("PDR"),
            None => {}
        }
        t
    }

    /// The stable one-line record.
    pub fn machine_line(&self) -> String {
        let answer = match self.truth() {
            Some(true) => "TRUE",
            Some(false) => "FALSE",
            None => "CANNOT_COMPUTE",
        };
        let techniques = self.techniques();
        let techniques = if techniques.is_empty() { "NONE".to_string() } else { techniques.join(" ") };
        format!(
            "FORMULA {} {answer} TECHNIQUES {techniques} ratio={}/{} depth={}",
            self.id,
            self.ratio.numer(),
            self.ratio.denom(),
            self.depth.unwrap_or(0)
        )
    }

    pub fn human(&self) -> String {
        let mut out = format!("{} ({}): ", self.id, self.quantifier);
        match self.truth() {
            Some(b) => out.push_str(if b { "TRUE" } else { "FALSE" }),
            None => out.push_str("UNKNOWN"),
        }
        if let Some(m) = self.method {
            out.push_str(&format!(" by {m}"));
            if let Some(d) = self.depth {
                let unit = if m == Procedure::Bmc { "depth" } else { "frames" };
                out.push_str(&format!(", {unit} {d}"));
            }
        }
        out.push_str(&format!(
            "\n  net {}p/{}t -> {}p/{}t, ratio {}/{}, {:.3}s",
            self.places.0,
            self.transitions.0,
            self.places.1,
            self.transitions.1,
            self.ratio.numer(),
            self.ratio.denom(),
            self.wall.as_secs_f64()
        ));
        if let Some(w) = self.verdict.witness() {
            out.push_str(&format!("\n  witness {} reaching {}", w.sequence, w.marking));
        } else if let Some(m) = &self.lifted {
            out.push_str(&format!("\n  witness marking {m}"));
        }
        if let Some(c) = self.certified {
            out.push_str(&format!("\n  invariant certificate {}", if c { "checked" } else { "REJECTED" }));
        }
        match self.oracle_agreement {
            Some(true) => out.push_str("\n  oracle agrees"),
            Some(false) => out.push_str("\n  ORACLE DISAGREES"),
            None => {}
        }
        for (p, r) in &self.reasons {
            out.push_str(&format!("\n  {p}: {r}"));
        }
        out
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Human => self.human(),
            OutputFormat::Machine => self.machine_line(),
        }
    }
}

/// Copy of `net` with every transition silent.
pub fn silenced(net: &PetriNet) -> PetriNet {
    let mut out = PetriNet::new(net.name());
    for p in net.places() {
        out.add_place(p).expect("places are distinct");
    }
    for t in net.transitions() {
        out.add_transition_indexed(t.name(), Label::Silent, t.pre().to_vec(), t.post().to_vec())
            .expect("transitions are distinct");
    }
    out
}

struct Answer {
    verdict: Verdict,
    depth: Option<usize>,
    iterations: Option<usize>,
    lifted: Option<Marking>,
    certified: Option<bool>,
}

type Outcome = Result<Answer, String>;

fn run_bmc(
    trace: ReductionTrace,
    q: Quantifier,
    goal: &Formula,
    config: &RunConfig,
    cancel: InterruptHandle,
) -> Outcome {
    let options = BmcOptions {
        max_depth: DEFAULT_MAX_DEPTH,
        wall_clock: Some(config.timeout),
        fixpoint: config.bmc_fixpoint,
        solver: config.solver.clone(),
        cancel: Some(cancel),
    };
    let identity = trace.is_identity();
    let r = bmc_on_trace(trace, goal, &options).map_err(|e| e.to_string())?;
    let iterations = Some(r.run.iterations);
    match r.run.outcome {
        BmcOutcome::Reachable { depth, marking, trace } => {
            let witness = identity.then_some(Witness { sequence: trace, marking });
            let verdict = match q {
                Quantifier::Ef => Verdict::Reachable(witness),
                Quantifier::Ag => Verdict::NotInvariant(witness),
            };
            Ok(Answer { verdict, depth: Some(depth), iterations, lifted: r.lifted, certified: None })
        }
        BmcOutcome::Exhausted { depth } => {
            let verdict = match q {
                Quantifier::Ef => Verdict::Unreachable,
                Quantifier::Ag => Verdict::Invariant,
            };
            Ok(Answer { verdict, depth: Some(depth), iterations, lifted: None, certified: None })
        }
        BmcOutcome::Unknown(reason) => Err(reason),
    }
}

fn run_pdr(
    trace: ReductionTrace,
    q: Quantifier,
    goal: &Formula,
    config: &RunConfig,
    cancel: InterruptHandle,
) -> Outcome {
    let options = PdrOptions {
        wall_clock: Some(config.timeout),
        solver: config.solver.clone(),
        cancel: Some(cancel),
        ..PdrOptions::default()
    };
    let identity = trace.is_identity();
    let r = pdr_on_trace(trace, &goal.negate(), &options).map_err(|e| e.to_string())?;
    let certified = r.run.check.map(|c| c.passed());
    let frames = Some(r.run.frames);
    let lifted = r.lifted.clone();
    let proved = match &r.run.outcome {
        PdrOutcome::Invariant { .. } => {
            if certified == Some(false) {
                return Err("certificate rejected".into());
            }
            true
        }
        PdrOutcome::NotInvariant { .. } => false,
        PdrOutcome::Unknown(reason) => return Err(reason.clone()),
    };
    let witness = match (proved, identity || r.fallback.is_some(), r.run.verdict()) {
        (false, true, Verdict::NotInvariant(w)) => w,
        _ => None,
    };
    let verdict = match (q, proved) {
        (Quantifier::Ef, true) => Verdict::Unreachable,
        (Quantifier::Ef, false) => Verdict::Reachable(witness),
        (Quantifier::Ag, true) => Verdict::Invariant,
        (Quantifier::Ag, false) => Verdict::NotInvariant(witness),
    };
    Ok(Answer { verdict, depth: frames, iterations: Some(0), lifted, certified })
}

/// Answers one property. Solver trouble is reported as an unknown verdict,
/// never as an error.
pub fn run_query(net: &PetriNet, m0: &Marking, prop: &NamedProperty, config: &RunConfig) -> Report {
    let start = Instant::now();
    let q = prop.quantifier;
    // the reachability goal: the property itself for EF, its violation for AG
    let goal = match q {
        Quantifier::Ef => prop.formula.clone(),
        Quantifier::Ag => prop.formula.negate(),
    };
    let hidden;
    let input = if config.hide_labels {
        hidden = silenced(net);
        &hidden
    } else {
        net
    };
    let policy = if config.reductions { ReducePolicy::default() } else { ReducePolicy::none() };
    let trace = reduce(input, m0, &policy);
    let ratio = trace.ratio();
    let shape = (
        (trace.initial_net.num_places(), trace.net.num_places()),
        (trace.initial_net.num_transitions(), trace.net.num_transitions()),
    );
    let reduced = !trace.is_identity();
    info!(
        "{}: reduced {}p/{}t to {}p/{}t",
        prop.id, shape.0 .0, shape.1 .0, shape.0 .1, shape.1 .1
    );

    let mut reasons = Vec::new();
    let bmc_on = config.wants(Method::Bmc) || config.wants(Method::Auto);
    let monotone = goal.is_syntactically_monotonic_goal();
    let mut pdr_on = config.wants(Method::Pdr) || (config.wants(Method::Auto) && monotone);
    if pdr_on && !monotone {
        reasons.push((Procedure::Pdr, "the violation is not syntactically upward closed".into()));
        pdr_on = false;
    }
    // with no transitions left a depth-0 query decides everything
    if trace.net.num_transitions() == 0 && bmc_on {
        pdr_on = false;
    }

    let mut procedures = Vec::new();
    if bmc_on {
        procedures.push(Procedure::Bmc);
    }
    if pdr_on {
        procedures.push(Procedure::Pdr);
    }
    let handles: Vec<InterruptHandle> = procedures.iter().map(|_| InterruptHandle::new()).collect();
    let (tx, rx) = mpsc::channel::<(usize, Outcome)>();
    let mut winner: Option<(Procedure, Answer)> = None;
    thread::scope(|s| {
        for (i, &p) in procedures.iter().enumerate() {
            let tx = tx.clone();
            let (trace, goal, cancel) = (trace.clone(), &goal, handles[i].clone());
            s.spawn(move || {
                let out = match p {
                    Procedure::Bmc => run_bmc(trace, q, goal, config, cancel),
                    Procedure::Pdr => run_pdr(trace, q, goal, config, cancel),
                };
                let _ = tx.send((i, out));
            });
        }
        drop(tx);
        for (i, out) in rx.iter() {
            let p = procedures[i];
            match out {
                Ok(answer) if winner.is_none() => {
                    debug!("{}: {p} answered first", prop.id);
                    for (j, h) in handles.iter().enumerate() {
                        if j != i {
                            h.interrupt();
                        }
                    }
                    winner = Some((p, answer));
                }
                Ok(_) => {}
                Err(reason) if winner.is_none() => reasons.push((p, reason)),
                Err(_) => {}
            }
        }
    });

    let mut report = Report {
        id: prop.id.clone(),
        quantifier: q,
        verdict: Verdict::Unknown(String::new()),
        method: None,
        depth: None,
        iterations: None,
        reduced,
        ratio,
        places: shape.0,
        transitions: shape.1,
        lifted: None,
        certified: None,
        wall: Duration::ZERO,
        oracle_agreement: None,
        reasons: Vec::new(),
    };
    match winner {
        Some((p, a)) => {
            report.verdict = a.verdict;
            report.method = Some(p);
            report.depth = a.depth;
            report.iterations = a.iterations;
            report.lifted = a.lifted;
            report.certified = a.certified;
        }
        None => {
            let summary = reasons
                .iter()
                .map(|(p, r)| format!("{p}: {r}"))
                .collect::<Vec<_>>()
                .join("; ");
            report.verdict = Verdict::Unknown(summary);
            report.reasons = reasons;
        }
    }
    if config.oracle_check {
        let graph = enumerate(net, m0, config.oracle_cutoffs);
        if let (Some(mine), Some(theirs)) =
            (report.truth(), explicit_check(&graph, q, &prop.formula).truth())
        {
            report.oracle_agreement = Some(mine == theirs);
        }
    }
    report.wall = start.elapsed();
    report
}
