//! Bounded model checking of reachability goals by incremental unrolling.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use log::debug;
use thiserror::Error;

use crate::abstraction::Abstraction;
use crate::encoding::{
    encode_transition_relation, marking_term, stutter, EncodingError, Generations,
    Lowering, Term, VarVec,
};
use crate::net::{FiringSequence, Marking, PetriNet};
use crate::property::Formula;
use crate::reducer::{reduce, ReducePolicy, ReductionTrace};
use crate::solver::{InterruptHandle, SatResult, SolverConfig, SolverError, SolverSession};

pub const DEFAULT_MAX_DEPTH: usize = 1000;

#[derive(Debug, Error)]
pub enum BmcError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    /// The reduced witness has no counterpart in the source net.
    #[error("witness lift failed: {0}")]
    LiftFailed(String),
    #[error("model decoding failed: {0}")]
    Decode(String),
    #[error("solver: {0}")]
    Solver(String),
}

#[derive(Debug, Clone)]
pub struct BmcOptions {
    pub max_depth: usize,
    pub wall_clock: Option<Duration>,
    /// Stop with `Exhausted` once no loop-free path is longer than the depth.
    pub fixpoint: bool,
    pub solver: SolverConfig,
    pub cancel: Option<InterruptHandle>,
}

impl Default for BmcOptions {
    fn default() -> Self {
        BmcOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            wall_clock: None,
            fixpoint: false,
            solver: SolverConfig::default(),
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BmcOutcome {
    Reachable {
        depth: usize,
        marking: Marking,
        trace: FiringSequence,
    },
    /// Every reachable marking was seen within `depth` steps and none satisfies the goal.
    Exhausted { depth: usize },
    Unknown(String),
}

impl BmcOutcome {
    pub fn is_reachable(&self) -> bool {
        matches!(self, BmcOutcome::Reachable { .. })
    }
}

#[derive(Debug, Clone)]
pub struct BmcRun {
    pub outcome: BmcOutcome,
    /// Transition-relation copies added to the context.
    pub iterations: usize,
    pub queries: usize,
}

fn unknown(reason: impl Into<String>, iterations: usize, queries: usize) -> BmcRun {
    BmcRun {
        outcome: BmcOutcome::Unknown(reason.into()),
        iterations,
        queries,
    }
}

/// Goal at generation `x`, with existential blocks lifted to constants
/// declared inside the current scope.
fn assert_goal(
    session: &mut SolverSession,
    goal: &Formula,
    places: &[String],
    x: &VarVec,
) -> Result<(), BmcError> {
    let map = x.mapper(places);
    let mut low = Lowering::new(&map, &format!("g{}_", x.generation));
    let t = low.lower(goal)?;
    for s in &low.skolems {
        declare(session, s)?;
    }
    session.assert(&t).map_err(solver_fatal)
}

fn declare(session: &mut SolverSession, name: &str) -> Result<(), BmcError> {
    session.declare(name).map_err(solver_fatal)
}

// Encoding faults surface as errors; everything else means the solver is gone.
fn solver_fatal(e: SolverError) -> BmcError {
    match e {
        SolverError::Encoding(e) => BmcError::Encoding(e),
        other => BmcError::Solver(other.to_string()),
    }
}

/// Rejects goals over names that are not places.
pub fn check_free_vars(goal: &Formula, places: &[String]) -> Result<(), EncodingError> {
    match goal.free_vars().into_iter().find(|v| !places.contains(v)) {
        Some(v) => Err(EncodingError::Unmapped(v)),
        None => Ok(()),
    }
}

/// Decodes generations `0..=k` and rebuilds the firing sequence, dropping stutter steps.
fn decode_witness(
    net: &PetriNet,
    session: &mut SolverSession,
    vecs: &[VarVec],
) -> Result<(Marking, FiringSequence), String> {
    let names: Vec<String> = vecs.iter().flat_map(|v| v.names().iter().cloned()).collect();
    let model = session.get_values(&names).map_err(|e| e.to_string())?;
    let states: Vec<Vec<u64>> = vecs.iter().map(|v| v.decode(&model)).collect();
    let mut steps = Vec::new();
    for w in states.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        match net.connecting_transition(&w[0], &w[1]) {
            Some(t) => steps.push(net.transition_at(t).name().to_string()),
            None => return Err(format!("no transition connects {:?} to {:?}", w[0], w[1])),
        }
    }
    Ok((net.marking_from_dense(states.last().unwrap()), FiringSequence(steps)))
}

/// Is there a path of `k + 1` steps through pairwise distinct markings?
fn longer_simple_path(
    net: &PetriNet,
    session: &mut SolverSession,
    gens: &mut Generations,
    vecs: &[VarVec],
) -> Result<SatResult, BmcError> {
    session.push().map_err(solver_fatal)?;
    let next = gens.fresh_generation();
    session.declare_nonneg(next.names()).map_err(solver_fatal)?;
    let last = vecs.last().unwrap();
    session
        .assert(&encode_transition_relation(net, last, &next))
        .map_err(solver_fatal)?;
    let all: Vec<&VarVec> = vecs.iter().chain(std::iter::once(&next)).collect();
    let mut distinct = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            distinct.push(Term::not(stutter(all[i], all[j])));
        }
    }
    session.assert(&Term::and(distinct)).map_err(solver_fatal)?;
    let r = session.check_sat();
    session.pop().map_err(solver_fatal)?;
    r.map_err(solver_fatal)
}

/// Searches for a marking reachable from `m0` that satisfies `goal`, one
/// depth at a time. The goal may use existential blocks in positive position.
pub fn bmc_check(
    net: &PetriNet,
    m0: &Marking,
    goal: &Formula,
    options: &BmcOptions,
) -> Result<BmcRun, BmcError> {
    let places = net.places();
    check_free_vars(goal, places)?;
    let start = Instant::now();
    let deadline = options.wall_clock.map(|w| start + w);
    let mut config = options.solver.clone();
    if config.timeout.is_none() {
        config.timeout = options.wall_clock;
    }
    let mut session = match SolverSession::start(config) {
        Ok(s) => s,
        Err(e) => return Ok(unknown(format!("solver: {e}"), 0, 0)),
    };
    if let Some(h) = &options.cancel {
        session.set_interrupt_handle(h.clone());
    }
    session.set_deadline(deadline);

    let mut gens = Generations::new(places);
    let mut vecs = vec![gens.fresh_generation()];
    macro_rules! solver_try {
        ($e:expr, $k:expr) => {
            match $e {
                Ok(v) => v,
                Err(SolverError::Encoding(e)) => return Err(e.into()),
                Err(e) => return Ok(unknown(format!("solver: {e}"), $k, session.queries())),
            }
        };
    }
    solver_try!(session.declare_nonneg(vecs[0].names()), 0);
    solver_try!(session.assert(&marking_term(places, m0, &vecs[0])), 0);

    let mut k = 0;
    loop {
        if options.cancel.as_ref().is_some_and(|h| h.is_interrupted()) {
            return Ok(unknown("interrupted", k, session.queries()));
        }
        solver_try!(session.push(), k);
        match assert_goal(&mut session, goal, places, &vecs[k]) {
            Err(BmcError::Solver(e)) => return Ok(unknown(format!("solver: {e}"), k, session.queries())),
            other => other?,
        }
        let r = solver_try!(session.check_sat(), k);
        debug!("bmc depth {k}: {r:?}");
        match r {
            SatResult::Sat => {
                let (marking, trace) =
                    decode_witness(net, &mut session, &vecs).map_err(BmcError::Decode)?;
                return Ok(BmcRun {
                    outcome: BmcOutcome::Reachable {
                        depth: k,
                        marking,
                        trace,
                    },
                    iterations: k,
                    queries: session.queries(),
                });
            }
            SatResult::Unknown(reason) => {
                return Ok(unknown(format!("{reason:?} at depth {k}"), k, session.queries()))
            }
            SatResult::Unsat => {}
        }
        solver_try!(session.pop(), k);

        // nothing can fire: the initial marking is the whole state space
        if net.num_transitions() == 0 {
            return Ok(BmcRun {
                outcome: BmcOutcome::Exhausted { depth: k },
                iterations: k,
                queries: session.queries(),
            });
        }
        if options.fixpoint {
            let mut scratch = gens.clone();
            match longer_simple_path(net, &mut session, &mut scratch, &vecs) {
                Ok(SatResult::Unsat) => {
                    return Ok(BmcRun {
                        outcome: BmcOutcome::Exhausted { depth: k },
                        iterations: k,
                        queries: session.queries(),
                    })
                }
                Ok(_) => {}
                Err(BmcError::Encoding(e)) => return Err(e.into()),
                Err(e) => return Ok(unknown(e.to_string(), k, session.queries())),
            }
        }
        if k >= options.max_depth {
            return Ok(unknown(format!("depth budget {} exhausted", options.max_depth), k, session.queries()));
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(unknown("wall-clock budget exhausted", k, session.queries()));
        }
        let next = gens.fresh_generation();
        solver_try!(session.declare_nonneg(next.names()), k);
        solver_try!(session.assert(&encode_transition_relation(net, &vecs[k], &next)), k);
        vecs.push(next);
        k += 1;
    }
}

#[derive(Debug, Clone)]
pub struct ReducedBmcRun {
    pub run: BmcRun,
    pub trace: ReductionTrace,
    pub abstraction: Abstraction,
    /// A source-net marking that pairs with the reduced witness and satisfies the goal.
    pub lifted: Option<Marking>,
}

/// Reduces the net, transforms the goal and runs `bmc_check` on the reduced net.
pub fn bmc_with_reduction(
    net: &PetriNet,
    m0: &Marking,
    goal: &Formula,
    policy: &ReducePolicy,
    options: &BmcOptions,
) -> Result<ReducedBmcRun, BmcError> {
    let trace = reduce(net, m0, policy);
    bmc_on_trace(trace, goal, options)
}

/// `bmc_with_reduction` for an existing reduction trace.
pub fn bmc_on_trace(
    trace: ReductionTrace,
    goal: &Formula,
    options: &BmcOptions,
) -> Result<ReducedBmcRun, BmcError> {
    let abstraction = Abstraction::from_trace(&trace);
    let (run, lifted) = if trace.is_identity() {
        (bmc_check(&trace.net, &trace.marking, goal, options)?, None)
    } else {
        check_free_vars(goal, trace.initial_net.places())?;
        let f2 = abstraction.e_transform(goal);
        let run = bmc_check(&trace.net, &trace.marking, &f2, options)?;
        let lifted = match &run.outcome {
            BmcOutcome::Reachable { marking, .. } => {
                Some(lift_witness(&abstraction, marking, goal, &options.solver)?)
            }
            _ => None,
        };
        (run, lifted)
    };
    Ok(ReducedBmcRun {
        run,
        trace,
        abstraction,
        lifted,
    })
}

/// Solves `E ∧ (y = m2) ∧ goal(x)` for the source places `x`.
pub fn lift_witness(
    abstraction: &Abstraction,
    m2: &Marking,
    goal: &Formula,
    solver: &SolverConfig,
) -> Result<Marking, BmcError> {
    let mut session =
        SolverSession::start(solver.clone()).map_err(|e| BmcError::LiftFailed(e.to_string()))?;
    let mut vars: Vec<String> = abstraction.system.vars().into_iter().collect();
    for p in abstraction.source_places.iter().chain(&abstraction.target_places) {
        if !vars.contains(p) {
            vars.push(p.clone());
        }
    }
    let fail = |e: SolverError| BmcError::LiftFailed(e.to_string());
    session.declare_nonneg(&vars).map_err(fail)?;
    let id = |v: &str| v.to_string();
    for c in abstraction.system.constraints() {
        let (lhs, cmp) = c.normalized();
        session
            .assert(&Term::rel(cmp.into(), Term::linear(&lhs, &id), Term::Int(0)))
            .map_err(fail)?;
    }
    let mut fixed = Vec::new();
    for p in &abstraction.target_places {
        fixed.push(Term::eq(Term::var(p), Term::Int(m2.get(p) as i64)));
    }
    session.assert(&Term::and(fixed)).map_err(fail)?;
    let map = |v: &str| vars.iter().find(|x| x.as_str() == v).cloned();
    let mut low = Lowering::new(&map, "w");
    let g = low.lower(goal)?;
    for s in &low.skolems {
        session.declare(s).map_err(fail)?;
    }
    session.assert(&g).map_err(fail)?;
    match session.check_sat().map_err(fail)? {
        SatResult::Sat => {
            let model: HashMap<String, i64> =
                session.get_values(&abstraction.source_places).map_err(fail)?;
            let mut m = Marking::new();
            for p in &abstraction.source_places {
                m.set(p, model[p].max(0) as u64);
            }
            Ok(m)
        }
        other => Err(BmcError::LiftFailed(format!(
            "E and the reduced witness {m2} give {other:?}"
        ))),
    }
}
