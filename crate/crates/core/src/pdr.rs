//! IC3-style invariant checking for properties whose violation is upward closed.
//!
//! Frames hold clauses `¬ĉ` where `ĉ` is a cover cube `⋀ xₚ ≥ cₚ`. A clause is
//! stored once, at the highest level it belongs to, so frame `Fᵢ` is the union
//! of the stored levels `≥ i` and `F₀` is the initial marking.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::debug;
use thiserror::Error;

use crate::abstraction::Abstraction;
use crate::bmc::{check_free_vars, lift_witness};
use crate::encoding::{
    encode_transition_relation, formula_at, marking_term, EncodingError, Generations, Lowering, Term, VarVec,
};
use crate::net::{FiringSequence, Marking, PetriNet};
use crate::property::{Atom, Formula, Verdict, Witness};
use crate::reducer::{reduce, ReducePolicy, ReductionTrace};
use crate::solver::{InterruptHandle, SatResult, SolverConfig, SolverError, SolverSession};

pub const DEFAULT_MAX_FRAMES: usize = 1000;

#[derive(Debug, Error)]
pub enum PdrError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("the violation of `{0}` is not upward closed")]
    NotMonotone(String),
}

#[derive(Debug, Clone)]
pub struct PdrOptions {
    pub max_frames: usize,
    pub wall_clock: Option<Duration>,
    pub solver: SolverConfig,
    pub cancel: Option<InterruptHandle>,
    /// Seed literal dropping with unsat cores.
    pub use_cores: bool,
    /// Re-check the frame invariants with solver queries after every round.
    pub check_frames: bool,
    /// Re-verify invariants in a separate session before reporting them.
    pub certify: bool,
}

impl Default for PdrOptions {
    fn default() -> Self {
        PdrOptions {
            max_frames: DEFAULT_MAX_FRAMES,
            wall_clock: None,
            solver: SolverConfig::default(),
            cancel: None,
            use_cores: true,
            check_frames: false,
            certify: true,
        }
    }
}

/// `⋀ xₚ ≥ cₚ`, sorted by place index, every bound positive.
pub type Cube = Vec<(usize, u64)>;

/// Cover cube of a state: one literal per marked place.
pub fn generalize_witness(state: &[u64]) -> Cube {
    state
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(p, &k)| (p, k))
        .collect()
}

pub fn cube_holds(cube: &Cube, state: &[u64]) -> bool {
    cube.iter().all(|&(p, c)| state[p] >= c)
}

/// Every state in `a` is in `b`, so `¬a` is implied by `¬b`.
pub fn cube_implies(a: &Cube, b: &Cube) -> bool {
    b.iter()
        .all(|&(p, cb)| a.iter().any(|&(q, ca)| q == p && ca >= cb))
}

fn cube_term(cube: &Cube, v: &VarVec) -> Term {
    Term::and(cube.iter().map(|&(p, c)| Term::ge(v.var(p), Term::Int(c as i64))))
}

fn clause_term(cube: &Cube, v: &VarVec) -> Term {
    Term::or(cube.iter().map(|&(p, c)| Term::le(v.var(p), Term::Int(c as i64 - 1))))
}

/// An inductive invariant: the conjunction of the negated cubes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub places: Vec<String>,
    /// The checked property itself, when it is quantifier free.
    pub property: Option<Formula>,
    pub blocked: Vec<Cube>,
}

impl Certificate {
    pub fn formula(&self) -> Formula {
        let clauses = self.blocked.iter().map(|cube| {
            Formula::or(
                cube.iter()
                    .map(|&(p, c)| Formula::atom(Atom::le(&self.places[p], c as i64 - 1))),
            )
        });
        Formula::and(self.property.iter().cloned().chain(clauses))
    }

    pub fn holds(&self, state: &[u64]) -> bool {
        let env = |v: &str| {
            self.places
                .iter()
                .position(|p| p == v)
                .map(|i| state[i] as i64)
        };
        self.blocked.iter().all(|c| !cube_holds(c, state))
            && self.property.as_ref().is_none_or(|f| f.eval(&env).unwrap_or(false))
    }

    fn term(&self, v: &VarVec) -> Result<Term, EncodingError> {
        let prop = match &self.property {
            Some(f) => formula_at(f, &self.places, v)?,
            None => Term::Bool(true),
        };
        Ok(Term::and(
            std::iter::once(prop).chain(self.blocked.iter().map(|c| clause_term(c, v))),
        ))
    }
}

/// Outcome of the post-hoc checks of a certificate; `true` means the query was unsat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertificateCheck {
    pub initiation: bool,
    pub consecution: bool,
    pub safety: bool,
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        self.initiation && self.consecution && self.safety
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PdrOutcome {
    Invariant {
        certificate: Certificate,
        level: usize,
    },
    NotInvariant {
        trace: FiringSequence,
        marking: Marking,
    },
    Unknown(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PdrStats {
    pub queries: usize,
    pub obligations: usize,
    pub clauses: usize,
    /// Reinsertions whose level did not exceed the level they were popped at.
    pub nonincreasing_reinsertions: usize,
    /// Frame invariants found broken by the optional sweep.
    pub frame_violations: Vec<String>,
    /// Learned clauses that failed a re-check right after minimization.
    pub mic_violations: usize,
}

#[derive(Debug, Clone)]
pub struct PdrRun {
    pub outcome: PdrOutcome,
    pub frames: usize,
    pub stats: PdrStats,
    pub check: Option<CertificateCheck>,
}

impl PdrRun {
    pub fn verdict(&self) -> Verdict {
        match &self.outcome {
            PdrOutcome::Invariant { .. } => match self.check {
                Some(c) if !c.passed() => Verdict::Unknown("certificate rejected".into()),
                _ => Verdict::Invariant,
            },
            PdrOutcome::NotInvariant { trace, marking } => Verdict::NotInvariant(Some(Witness {
                sequence: trace.clone(),
                marking: marking.clone(),
            })),
            PdrOutcome::Unknown(r) => Verdict::Unknown(r.clone()),
        }
    }
}

#[derive(Debug, Clone)]
struct Obligation {
    cube: Cube,
    /// Transition from a state covering `cube` into the parent cube, or into the
    /// violation when there is no parent. `None` is a stutter.
    step: Option<usize>,
    parent: Option<usize>,
}

enum Halt {
    /// `state` is reached from the initial marking by `first` (or is it) and
    /// covers the cube of `obligation`.
    Counterexample {
        obligation: usize,
        first: Option<usize>,
        state: Vec<u64>,
    },
    Unknown(String),
    Encoding(EncodingError),
}

impl From<SolverError> for Halt {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Encoding(e) => Halt::Encoding(e),
            e => Halt::Unknown(format!("solver: {e}")),
        }
    }
}

impl From<EncodingError> for Halt {
    fn from(e: EncodingError) -> Self {
        Halt::Encoding(e)
    }
}

type Step<T> = Result<T, Halt>;

struct Model {
    x: Vec<u64>,
    xp: Vec<u64>,
}

struct Pdr<'a> {
    net: &'a PetriNet,
    m0: Vec<u64>,
    bad: &'a Formula,
    /// Negation of `bad` when it is quantifier free; part of every frame above 0.
    property: Option<Formula>,
    session: SolverSession,
    x: VarVec,
    xp: VarVec,
    /// `delta[i]` holds the clauses whose highest level is `i`; `delta[0]` stays empty.
    delta: Vec<Vec<Cube>>,
    obligations: Vec<Obligation>,
    options: &'a PdrOptions,
    deadline: Option<Instant>,
    stats: PdrStats,
    skolem: usize,
}

impl<'a> Pdr<'a> {
    fn budget(&self) -> Step<()> {
        if self.options.cancel.as_ref().is_some_and(|h| h.is_interrupted()) {
            return Err(Halt::Unknown("interrupted".into()));
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Halt::Unknown("wall-clock budget exhausted".into()));
        }
        Ok(())
    }

    fn frame_term(&self, i: usize, v: &VarVec) -> Term {
        if i == 0 {
            return marking_term(self.net.places(), &self.net.marking_from_dense(&self.m0), v);
        }
        let prop = match &self.property {
            Some(f) => formula_at(f, self.net.places(), v).expect("property over places"),
            None => Term::Bool(true),
        };
        let clauses = self.delta[i.min(self.delta.len())..].iter().flatten().map(|c| clause_term(c, v));
        Term::and(std::iter::once(prop).chain(clauses))
    }

    fn bad_term(&mut self, v: &VarVec) -> Step<(Term, Vec<String>)> {
        let map = v.mapper(self.net.places());
        let mut low = Lowering::new(&map, &format!("b{}_", self.skolem));
        self.skolem += 1;
        let t = low.lower(self.bad)?;
        Ok((t, low.skolems))
    }

    /// Checks `parts` (plus the violation at `x'` when asked) under a scope,
    /// returning the model on sat.
    fn query(&mut self, parts: Vec<Term>, bad_next: bool) -> Step<Option<Model>> {
        self.budget()?;
        self.stats.queries += 1;
        self.session.push()?;
        let r = self.query_in_scope(parts, bad_next);
        self.session.pop()?;
        r
    }

    fn query_in_scope(&mut self, mut parts: Vec<Term>, bad_next: bool) -> Step<Option<Model>> {
        if bad_next {
            let xp = self.xp.clone();
            let (t, skolems) = self.bad_term(&xp)?;
            for s in &skolems {
                self.session.declare(s)?;
            }
            parts.push(t);
        }
        self.session.assert(&Term::and(parts))?;
        match self.session.check_sat()? {
            SatResult::Sat => {
                let names: Vec<String> =
                    self.x.names().iter().chain(self.xp.names()).cloned().collect();
                let model = self.session.get_values(&names)?;
                Ok(Some(Model {
                    x: self.x.decode(&model),
                    xp: self.xp.decode(&model),
                }))
            }
            SatResult::Unsat => Ok(None),
            SatResult::Unknown(r) => Err(Halt::Unknown(format!("solver answered unknown ({r:?})"))),
        }
    }


    /// Relative induction of `¬cube` with respect to `F_level`:
    /// `F_level(x) ∧ ¬cube(x) ∧ T ∧ cube(x')`.
    fn relative_induction(&mut self, cube: &Cube, level: usize) -> Step<Induction> {
        let base = Term::and([self.frame_term(level, &self.x), clause_term(cube, &self.x)]);
        self.budget()?;
        self.stats.queries += 1;
        self.session.push()?;
        let r = self.relative_induction_in_scope(cube, base);
        self.session.pop()?;
        r
    }

    fn relative_induction_in_scope(&mut self, cube: &Cube, base: Term) -> Step<Induction> {
        self.session.assert(&base)?;
        let mut labels = Vec::with_capacity(cube.len());
        if self.options.use_cores {
            for &(p, c) in cube {
                let lit = Term::ge(self.xp.var(p), Term::Int(c as i64));
                labels.push(self.session.assert_labeled(&lit)?);
            }
        } else {
            self.session.assert(&cube_term(cube, &self.xp))?;
        }
        match self.session.check_sat()? {
            SatResult::Sat => Ok(Induction::Fails),
            SatResult::Unsat if self.options.use_cores => {
                let core = self.session.get_unsat_core()?;
                let kept = cube
                    .iter()
                    .zip(&labels)
                    .filter(|(_, l)| core.contains(l))
                    .map(|(lit, _)| *lit)
                    .collect();
                Ok(Induction::Holds(Some(kept)))
            }
            SatResult::Unsat => Ok(Induction::Holds(None)),
            SatResult::Unknown(r) => Err(Halt::Unknown(format!("solver answered unknown ({r:?})"))),
        }
    }

    fn initiation(&self, cube: &Cube) -> bool {
        !cube_holds(cube, &self.m0)
    }

    fn inductive(&mut self, cube: &Cube, level: usize) -> Step<bool> {
        Ok(self.initiation(cube) && matches!(self.relative_induction(cube, level)?, Induction::Holds(_)))
    }

    /// Shrinks `cube` so that its negation stays inductive relative to
    /// `F_level`, seeded by the unsat core and then by single literal drops.
    fn mic(&mut self, cube: &Cube, level: usize) -> Step<Cube> {
        let mut cube = cube.clone();
        if let Induction::Holds(Some(core)) = self.relative_induction(&cube, level)? {
            let mut seeded = core;
            if !self.initiation(&seeded) {
                // put back a literal the initial marking violates
                if let Some(&lit) = cube.iter().find(|&&(p, c)| self.m0[p] < c) {
                    seeded.push(lit);
                    seeded.sort_unstable();
                }
            }
            if seeded.len() < cube.len() && self.inductive(&seeded, level)? {
                cube = seeded;
            }
        }
        let mut i = 0;
        while i < cube.len() && cube.len() > 1 {
            let mut candidate = cube.clone();
            candidate.remove(i);
            if self.inductive(&candidate, level)? {
                cube = candidate;
            } else {
                i += 1;
            }
        }
        // then lower each bound as far as a binary search finds it inductive
        for i in 0..cube.len() {
            let (mut lo, mut hi) = (1, cube[i].1);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                let mut candidate = cube.clone();
                candidate[i].1 = mid;
                if self.inductive(&candidate, level)? {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            cube[i].1 = hi;
        }
        Ok(cube)
    }

    /// Learns `¬mic(cube)` in frames `1..=level + 1`.
    fn generate_clause(&mut self, cube: &Cube, level: usize) -> Step<()> {
        let learned = self.mic(cube, level)?;
        if self.options.check_frames && !self.inductive(&learned, level)? {
            self.stats.mic_violations += 1;
        }
        let top = (level + 1).min(self.delta.len() - 1);
        // drop clauses subsumed by the new one at levels it now covers
        for d in self.delta[1..=top].iter_mut() {
            d.retain(|c| !cube_implies(c, &learned));
        }
        if !self.delta[top..].iter().flatten().any(|c| cube_implies(&learned, c)) {
            self.delta[top].push(learned);
            self.stats.clauses += 1;
        }
        Ok(())
    }

    fn new_obligation(&mut self, cube: Cube, step: Option<usize>, parent: Option<usize>) -> usize {
        self.stats.obligations += 1;
        self.obligations.push(Obligation { cube, step, parent });
        self.obligations.len() - 1
    }

    fn step_between(&self, from: &[u64], to: &[u64]) -> Option<usize> {
        if from == to {
            None
        } else {
            self.net.connecting_transition(from, to)
        }
    }

    /// Blocks obligation `ob` as far as possible, returning the level at which
    /// its clause was learned.
    fn inductively_generalize(&mut self, ob: usize, min: isize, k: usize) -> Step<usize> {
        let cube = self.obligations[ob].cube.clone();
        if min < 0 {
            let parts = vec![self.frame_term(0, &self.x), cube_term(&cube, &self.xp)];
            if let Some(model) = self.query(parts, false)? {
                return Err(Halt::Counterexample {
                    obligation: ob,
                    first: self.step_between(&model.x, &model.xp),
                    state: model.xp,
                });
            }
        }
        let from = (min + 1).max(1) as usize;
        for i in from..=k {
            let parts = vec![
                self.frame_term(i, &self.x),
                clause_term(&cube, &self.x),
                cube_term(&cube, &self.xp),
            ];
            if self.query(parts, false)?.is_some() {
                self.generate_clause(&cube, i - 1)?;
                return Ok(i - 1);
            }
        }
        self.generate_clause(&cube, k)?;
        Ok(k)
    }

    fn push_generalization(&mut self, start: (usize, usize), k: usize) -> Step<()> {
        let mut seq = 0usize;
        let mut queue = BinaryHeap::new();
        queue.push(Reverse((start.1, seq, start.0)));
        while let Some(Reverse((n, _, ob))) = queue.pop() {
            if n > k {
                return Ok(());
            }
            let cube = self.obligations[ob].cube.clone();
            let parts = vec![self.frame_term(n, &self.x), cube_term(&cube, &self.xp)];
            if let Some(model) = self.query(parts, false)? {
                let step = self.step_between(&model.x, &model.xp);
                let pred = self.new_obligation(generalize_witness(&model.x), step, Some(ob));
                let l = self.inductively_generalize(pred, n as isize - 2, k)?;
                seq += 1;
                queue.push(Reverse((l + 1, seq, pred)));
                seq += 1;
                queue.push(Reverse((n, seq, ob)));
            } else {
                let l = self.inductively_generalize(ob, n as isize, k)?;
                if l < n {
                    self.stats.nonincreasing_reinsertions += 1;
                }
                seq += 1;
                queue.push(Reverse((l + 1, seq, ob)));
            }
        }
        Ok(())
    }

    /// Clears every one-step path from `F_k` into the violation.
    fn strengthen(&mut self, k: usize) -> Step<()> {
        loop {
            let parts = vec![self.frame_term(k, &self.x)];
            let Some(model) = self.query(parts, true)? else {
                return Ok(());
            };
            let step = self.step_between(&model.x, &model.xp);
            let ob = self.new_obligation(generalize_witness(&model.x), step, None);
            let n = self.inductively_generalize(ob, k as isize - 2, k)?;
            self.push_generalization((ob, n + 1), k)?;
        }
    }

    fn propagate_clauses(&mut self, k: usize) -> Step<()> {
        for i in 1..=k {
            for c in self.delta[i].clone() {
                let parts = vec![self.frame_term(i, &self.x), cube_term(&c, &self.xp)];
                if self.query(parts, false)?.is_none() {
                    self.delta[i].retain(|d| d != &c);
                    self.delta[i + 1].push(c);
                }
            }
        }
        Ok(())
    }

    /// Sweeps initiation, consecution and bounding up to level `k`.
    fn check_frames(&mut self, k: usize) -> Step<()> {
        for i in 1..self.delta.len() {
            for c in self.delta[i].clone() {
                if !self.initiation(&c) {
                    self.stats.frame_violations.push(format!("initiation of {c:?} at {i}"));
                }
            }
        }
        for i in 0..k.min(self.delta.len() - 1) {
            let next = self.frame_term(i + 1, &self.xp);
            let parts = vec![self.frame_term(i, &self.x), Term::not(next)];
            if self.query(parts, false)?.is_some() {
                self.stats.frame_violations.push(format!("consecution at {i}"));
            }
        }
        for i in 0..=k {
            if self.query(vec![self.frame_term(i, &self.x)], true)?.is_some() {
                self.stats.frame_violations.push(format!("bounding at {i}"));
            }
        }
        Ok(())
    }

    fn certificate(&self, level: usize) -> Certificate {
        Certificate {
            places: self.net.places().to_vec(),
            property: self.property.clone(),
            blocked: self.delta[level..].iter().flatten().cloned().collect(),
        }
    }

    fn counterexample(&self, ob: usize, first: Option<usize>, state: Vec<u64>) -> (FiringSequence, Marking) {
        let mut steps = Vec::new();
        if let Some(t) = first {
            steps.push(self.net.transition_at(t).name().to_string());
        }
        let mut current = state;
        let mut cursor = Some(ob);
        while let Some(o) = cursor {
            let ob = &self.obligations[o];
            debug_assert!(cube_holds(&ob.cube, &current));
            if let Some(t) = ob.step {
                current = self
                    .net
                    .fire_dense(&current, t)
                    .expect("a covering state enables the recorded transition");
                steps.push(self.net.transition_at(t).name().to_string());
            }
            cursor = ob.parent;
        }
        (FiringSequence(steps), self.net.marking_from_dense(&current))
    }

    fn run(&mut self) -> Step<(usize, Certificate)> {
        // zero and one step from the initial marking
        if let Some(model) = self.query(vec![self.frame_term(0, &self.x)], true)? {
            let ob = self.new_obligation(Vec::new(), None, None);
            return Err(Halt::Counterexample {
                obligation: ob,
                first: self.step_between(&model.x, &model.xp),
                state: model.xp,
            });
        }
        let mut k = 1;
        loop {
            while self.delta.len() < k + 2 {
                self.delta.push(Vec::new());
            }
            self.strengthen(k)?;
            self.propagate_clauses(k)?;
            if self.options.check_frames {
                self.check_frames(k)?;
            }
            if let Some(i) = (1..=k).find(|&i| self.delta[i].is_empty()) {
                debug!("frames {i} and {} coincide at k = {k}", i + 1);
                return Ok((k, self.certificate(i + 1)));
            }
            if k >= self.options.max_frames {
                return Err(Halt::Unknown(format!("frame budget {} exhausted", k)));
            }
            k += 1;
        }
    }
}

enum Induction {
    /// Unsat, with the primed literals of the core when cores are on.
    Holds(Option<Cube>),
    Fails,
}

/// Proves that no marking satisfying `bad` is reachable from `m0`. `bad`
/// must be upward closed over the places of `net`; existential blocks in
/// positive position are allowed.
pub fn prove_unreachable(
    net: &PetriNet,
    m0: &Marking,
    bad: &Formula,
    options: &PdrOptions,
) -> Result<PdrRun, PdrError> {
    check_free_vars(bad, net.places())?;
    let m0_dense = net.dense(m0).map_err(|e| EncodingError::Unmapped(e.to_string()))?;
    let mut config = options.solver.clone();
    if config.timeout.is_none() {
        config.timeout = options.wall_clock;
    }
    config.produce_cores = options.use_cores;
    let unknown = |reason: String, stats: PdrStats, frames: usize| PdrRun {
        outcome: PdrOutcome::Unknown(reason),
        frames,
        stats,
        check: None,
    };
    let mut session = match SolverSession::start(config) {
        Ok(s) => s,
        Err(e) => return Ok(unknown(format!("solver: {e}"), PdrStats::default(), 0)),
    };
    if let Some(h) = &options.cancel {
        session.set_interrupt_handle(h.clone());
    }
    let deadline = options.wall_clock.map(|w| Instant::now() + w);
    session.set_deadline(deadline);
    let mut gens = Generations::new(net.places());
    let x = gens.fresh_generation();
    let xp = gens.fresh_generation();
    let setup = session
        .declare_nonneg(x.names())
        .and_then(|_| session.declare_nonneg(xp.names()))
        .and_then(|_| session.assert(&encode_transition_relation(net, &x, &xp)));
    if let Err(e) = setup {
        return Ok(unknown(format!("solver: {e}"), PdrStats::default(), 0));
    }
    let mut pdr = Pdr {
        net,
        m0: m0_dense,
        bad,
        property: bad.is_quantifier_free().then(|| bad.negate()),
        session,
        x,
        xp,
        delta: vec![Vec::new(), Vec::new()],
        obligations: Vec::new(),
        options,
        deadline,
        stats: PdrStats::default(),
        skolem: 0,
    };
    let result = pdr.run();
    let frames = pdr.delta.len() - 1;
    match result {
        Ok((level, certificate)) => {
            let check = if options.certify {
                match certify(net, m0, bad, &certificate, &options.solver) {
                    Ok(c) => Some(c),
                    Err(e) => return Ok(unknown(format!("certification: {e}"), pdr.stats, frames)),
                }
            } else {
                None
            };
            Ok(PdrRun {
                outcome: PdrOutcome::Invariant { certificate, level },
                frames,
                stats: pdr.stats,
                check,
            })
        }
        Err(Halt::Counterexample { obligation, first, state }) => {
            let (trace, marking) = pdr.counterexample(obligation, first, state);
            Ok(PdrRun {
                outcome: PdrOutcome::NotInvariant { trace, marking },
                frames,
                stats: pdr.stats,
                check: None,
            })
        }
        Err(Halt::Unknown(reason)) => Ok(unknown(reason, pdr.stats, frames)),
        Err(Halt::Encoding(e)) => Err(e.into()),
    }
}

/// Checks `AG invariant`, whose negation must be upward closed.
pub fn prove(
    net: &PetriNet,
    m0: &Marking,
    invariant: &Formula,
    options: &PdrOptions,
) -> Result<PdrRun, PdrError> {
    let bad = invariant.negate();
    if !bad.is_syntactically_monotonic_goal() {
        return Err(PdrError::NotMonotone(invariant.to_string()));
    }
    prove_unreachable(net, m0, &bad, options)
}

/// Re-verifies a certificate in a fresh session: the initial marking
/// satisfies it, it is closed under `T`, and it excludes `bad`.
pub fn certify(
    net: &PetriNet,
    m0: &Marking,
    bad: &Formula,
    certificate: &Certificate,
    solver: &SolverConfig,
) -> Result<CertificateCheck, SolverError> {
    let mut config = solver.clone();
    config.produce_cores = false;
    let mut session = SolverSession::start(config)?;
    let mut gens = Generations::new(net.places());
    let x = gens.fresh_generation();
    let xp = gens.fresh_generation();
    session.declare_nonneg(x.names())?;
    session.declare_nonneg(xp.names())?;
    let (inv_x, inv_xp) = (certificate.term(&x)?, certificate.term(&xp)?);
    let inv = |v: &VarVec| if v.generation == 0 { inv_x.clone() } else { inv_xp.clone() };
    let unsat = |session: &mut SolverSession, t: Term| -> Result<bool, SolverError> {
        Ok(session.check_assuming(&t)? == SatResult::Unsat)
    };
    let initiation = unsat(
        &mut session,
        Term::and([marking_term(net.places(), m0, &x), Term::not(inv(&x))]),
    )?;
    let consecution = unsat(
        &mut session,
        Term::and([inv(&x), encode_transition_relation(net, &x, &xp), Term::not(inv(&xp))]),
    )?;
    let map = x.mapper(net.places());
    let mut low = Lowering::new(&map, "c");
    let bad_x = low.lower(bad)?;
    session.push()?;
    for s in &low.skolems {
        session.declare(s)?;
    }
    session.assert(&Term::and([inv(&x), bad_x]))?;
    let safety = session.check_sat()? == SatResult::Unsat;
    session.pop()?;
    Ok(CertificateCheck {
        initiation,
        consecution,
        safety,
    })
}

#[derive(Debug, Clone)]
pub struct ReducedPdrRun {
    pub run: PdrRun,
    pub trace: ReductionTrace,
    /// Set when the reduced goal leaves the upward-closed fragment and the
    /// source net was checked instead.
    pub fallback: Option<String>,
    /// Source-net marking paired with the reduced counterexample.
    pub lifted: Option<Marking>,
}

/// Reduces the net and checks the transformed violation on the result.
pub fn pdr_with_reduction(
    net: &PetriNet,
    m0: &Marking,
    invariant: &Formula,
    policy: &ReducePolicy,
    options: &PdrOptions,
) -> Result<ReducedPdrRun, PdrError> {
    let trace = reduce(net, m0, policy);
    pdr_on_trace(trace, invariant, options)
}

/// `pdr_with_reduction` for an existing reduction trace.
pub fn pdr_on_trace(
    trace: ReductionTrace,
    invariant: &Formula,
    options: &PdrOptions,
) -> Result<ReducedPdrRun, PdrError> {
    let bad = invariant.negate();
    if !bad.is_syntactically_monotonic_goal() {
        return Err(PdrError::NotMonotone(invariant.to_string()));
    }
    check_free_vars(&bad, trace.initial_net.places())?;
    if trace.is_identity() {
        let run = prove_unreachable(&trace.net, &trace.marking, &bad, options)?;
        return Ok(ReducedPdrRun { run, trace, fallback: None, lifted: None });
    }
    if !trace.is_upward_extendable() {
        let run = prove_unreachable(&trace.initial_net, &trace.initial_marking, &bad, options)?;
        return Ok(ReducedPdrRun {
            run,
            trace,
            fallback: Some("reduction equations are not upward extendable".into()),
            lifted: None,
        });
    }
    let abstraction = Abstraction::from_trace(&trace);
    let bad2 = abstraction.e_transform(&bad);
    let mut run = prove_unreachable(&trace.net, &trace.marking, &bad2, options)?;
    let mut lifted = None;
    if let PdrOutcome::NotInvariant { marking, .. } = &run.outcome {
        match lift_witness(&abstraction, marking, &bad, &options.solver) {
            Ok(m) => lifted = Some(m),
            Err(e) => run.outcome = PdrOutcome::Unknown(e.to_string()),
        }
    }
    Ok(ReducedPdrRun { run, trace, fallback: None, lifted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{Cmp, LinExpr};
    use crate::net::Label;
    use crate::samples::{concat_axiom, running_example};

    fn sum_le(places: &[&str], k: i64) -> Formula {
        Formula::atom(Atom::new(LinExpr::sum(places.iter().copied()), Cmp::Le, LinExpr::constant(k)))
    }

    fn checked() -> PdrOptions {
        PdrOptions {
            check_frames: true,
            ..Default::default()
        }
    }

    fn assert_sound(net: &PetriNet, m0: &Marking, invariant: &Formula, run: &PdrRun) {
        assert!(run.stats.frame_violations.is_empty(), "{:?}", run.stats.frame_violations);
        assert_eq!(run.stats.mic_violations, 0);
        assert_eq!(run.stats.nonincreasing_reinsertions, 0);
        match &run.outcome {
            PdrOutcome::Invariant { .. } => assert!(run.check.unwrap().passed()),
            PdrOutcome::NotInvariant { trace, marking } => {
                assert_eq!(&net.fire_sequence(m0, trace).unwrap(), marking);
                assert!(!invariant.evaluate(net, marking).unwrap());
            }
            PdrOutcome::Unknown(r) => panic!("unknown: {r}"),
        }
    }

    #[test]
    fn violated_initially() {
        let (net, m0) = running_example();
        let inv = sum_le(&["p0"], 4);
        let run = prove(&net, &m0, &inv, &checked()).unwrap();
        assert_sound(&net, &m0, &inv, &run);
        let PdrOutcome::NotInvariant { trace, .. } = &run.outcome else { panic!() };
        assert!(trace.is_empty());
    }

    #[test]
    fn inductive_invariant_at_first_level() {
        let (net, m0) = running_example();
        let inv = sum_le(&["p6"], 4);
        let run = prove(&net, &m0, &inv, &checked()).unwrap();
        assert_sound(&net, &m0, &inv, &run);
        assert!(matches!(run.outcome, PdrOutcome::Invariant { level: 1, .. }));
        assert_eq!(run.stats.clauses, 0);
    }

    #[test]
    fn conserved_sum_is_proved() {
        let (net, m0) = running_example();
        let inv = sum_le(&["p0", "p1", "p2"], 5);
        let run = prove(&net, &m0, &inv, &checked()).unwrap();
        assert_sound(&net, &m0, &inv, &run);
        assert!(matches!(run.outcome, PdrOutcome::Invariant { .. }));
    }

    #[test]
    fn deep_counterexample_replays() {
        let (net, m0) = running_example();
        let inv = sum_le(&["p4"], 4);
        let run = prove(&net, &m0, &inv, &checked()).unwrap();
        assert_sound(&net, &m0, &inv, &run);
        let PdrOutcome::NotInvariant { trace, .. } = &run.outcome else { panic!() };
        assert!(trace.len() >= 10);
    }

    #[test]
    fn unbounded_net_needs_a_learned_clause() {
        let mut net = PetriNet::new("gen");
        for p in ["p", "q", "r"] {
            net.add_place(p).unwrap();
        }
        net.add_transition("a", Label::Action("a".into()), &[], &[("p", 1)]).unwrap();
        net.add_transition("t", Label::Silent, &[("p", 1), ("q", 1)], &[("r", 1)]).unwrap();
        let m0 = Marking::new();
        let inv = sum_le(&["r"], 0);
        let run = prove(&net, &m0, &inv, &checked()).unwrap();
        assert_sound(&net, &m0, &inv, &run);
        let PdrOutcome::Invariant { certificate, .. } = &run.outcome else { panic!() };
        assert!(!certificate.blocked.is_empty());
        assert!(certificate.holds(&[100, 0, 0]));
        assert!(!certificate.holds(&[0, 1, 0]) || !certificate.holds(&[0, 0, 1]));
    }

    #[test]
    fn concat_axiom_is_refuted() {
        let ax = concat_axiom(2);
        let (net, m0) = &ax.source;
        let inv = sum_le(&["y2"], 0);
        let run = prove(net, m0, &inv, &checked()).unwrap();
        assert_sound(net, m0, &inv, &run);
        assert!(matches!(run.outcome, PdrOutcome::NotInvariant { .. }));
    }

    #[test]
    fn non_monotone_violation_is_rejected() {
        let (net, m0) = running_example();
        let inv = Formula::atom(Atom::ge("p0", 1));
        assert!(matches!(prove(&net, &m0, &inv, &checked()), Err(PdrError::NotMonotone(_))));
    }

    #[test]
    fn generalized_witness_is_upward_closed() {
        let cube = generalize_witness(&[0, 2, 1]);
        assert_eq!(cube, vec![(1, 2), (2, 1)]);
        assert!(cube_holds(&cube, &[5, 2, 1]));
        assert!(cube_holds(&cube, &[0, 3, 1]));
        assert!(!cube_holds(&cube, &[9, 1, 9]));
        assert!(generalize_witness(&[0, 0]).is_empty());
        assert!(cube_implies(&vec![(0, 2), (1, 1)], &vec![(0, 1)]));
        assert!(!cube_implies(&vec![(0, 1)], &vec![(0, 1), (1, 1)]));
        assert!(cube_implies(&vec![(0, 1)], &Vec::new()));
    }

    #[test]
    fn reduction_preserves_verdicts() {
        let (net, m0) = running_example();
        for (inv, expect) in [
            (sum_le(&["p0", "p1", "p2"], 5), true),
            (sum_le(&["p4"], 4), false),
            (sum_le(&["p5", "p2"], 4), false),
        ] {
            let plain = prove(&net, &m0, &inv, &PdrOptions::default()).unwrap();
            let reduced =
                pdr_with_reduction(&net, &m0, &inv, &ReducePolicy::default(), &PdrOptions::default())
                    .unwrap();
            assert_eq!(plain.verdict().truth(), Some(expect), "{inv}");
            assert_eq!(reduced.run.verdict().truth(), Some(expect), "{inv}");
            assert!(reduced.fallback.is_none());
            if let Some(m1) = &reduced.lifted {
                assert!(!inv.evaluate(&net, m1).unwrap());
            }
        }
    }

    #[test]
    fn certificate_check_catches_a_bogus_invariant() {
        let (net, m0) = running_example();
        let bad = sum_le(&["p4"], 4).negate();
        let bogus = Certificate {
            places: net.places().to_vec(),
            property: None,
            blocked: vec![vec![(net.place("p3").unwrap(), 1)]],
        };
        let c = certify(&net, &m0, &bad, &bogus, &SolverConfig::default()).unwrap();
        assert!(c.initiation);
        assert!(!c.consecution);
    }
}
