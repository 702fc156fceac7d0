//! Explicit-state ground truth: reachability graphs, direct EF/AG answers and
//! a bounded check that a linear system relates two nets as an abstraction.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::abstraction::{Abstraction, AbstractionError};
use crate::net::{FiringSequence, Label, Marking, ObservationSequence, PetriNet};
use crate::property::{Formula, Quantifier, Verdict, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutoffs {
    pub max_states: usize,
    pub max_tokens: u64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs {
            max_states: 100_000,
            max_tokens: 64,
        }
    }
}

pub const DEFAULT_OBS_DEPTH: usize = 12;

/// Markings reachable from the initial one, in breadth-first order.
#[derive(Debug, Clone)]
pub struct StateGraph {
    pub places: Vec<String>,
    pub states: Vec<Vec<u64>>,
    index: HashMap<Vec<u64>, usize>,
    /// `(from, transition, to)` over state indices.
    pub edges: Vec<(usize, usize, usize)>,
    pub depth: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
    transition_names: Vec<String>,
    pub truncated: bool,
    pub cutoffs: Cutoffs,
}

impl StateGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> Marking {
        self.marking(0)
    }

    pub fn marking(&self, i: usize) -> Marking {
        Marking::from_pairs(
            self.places
                .iter()
                .map(String::as_str)
                .zip(self.states[i].iter().copied()),
        )
    }

    pub fn markings(&self) -> impl Iterator<Item = Marking> + '_ {
        (0..self.len()).map(|i| self.marking(i))
    }

    pub fn index_of(&self, state: &[u64]) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn contains(&self, m: &Marking) -> bool {
        let state: Vec<u64> = self.places.iter().map(|p| m.get(p)).collect();
        m.iter().all(|(p, _)| self.places.iter().any(|q| q == p)) && self.index.contains_key(&state)
    }

    /// A shortest firing sequence from the initial marking.
    pub fn path_to(&self, mut i: usize) -> FiringSequence {
        let mut steps = Vec::new();
        while let Some((prev, t)) = self.parent[i] {
            steps.push(self.transition_names[t].clone());
            i = prev;
        }
        steps.reverse();
        FiringSequence(steps)
    }

    pub fn max_tokens(&self) -> u64 {
        self.states.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Breadth-first enumeration of the reachable markings.
pub fn enumerate(net: &PetriNet, m0: &Marking, cutoffs: Cutoffs) -> StateGraph {
    let start = net.dense(m0).expect("initial marking over net places");
    let mut g = StateGraph {
        places: net.places().to_vec(),
        states: vec![start.clone()],
        index: HashMap::from([(start, 0)]),
        edges: Vec::new(),
        depth: vec![0],
        parent: vec![None],
        transition_names: net.transitions().iter().map(|t| t.name().to_string()).collect(),
        truncated: false,
        cutoffs,
    };
    let mut head = 0;
    while head < g.states.len() {
        let state = g.states[head].clone();
        for t in 0..net.num_transitions() {
            if !net.enabled_dense(&state, t) {
                continue;
            }
            let Ok(next) = net.fire_dense(&state, t) else {
                g.truncated = true;
                continue;
            };
            if next.iter().any(|&k| k > cutoffs.max_tokens) {
                g.truncated = true;
                continue;
            }
            let j = match g.index.get(&next) {
                Some(&j) => j,
                None => {
                    if g.states.len() >= cutoffs.max_states {
                        g.truncated = true;
                        continue;
                    }
                    let j = g.states.len();
                    g.index.insert(next.clone(), j);
                    g.states.push(next);
                    g.depth.push(g.depth[head] + 1);
                    g.parent.push(Some((head, t)));
                    j
                }
            };
            g.edges.push((head, t, j));
        }
        head += 1;
    }
    g
}

/// Answers `EF goal` or `AG goal` by scanning the graph. Witnesses are shortest.
pub fn explicit_check(graph: &StateGraph, quantifier: Quantifier, goal: &Formula) -> Verdict {
    for i in 0..graph.len() {
        let m = graph.marking(i);
        let holds = match goal.evaluate_over(&graph.places, &m) {
            Ok(b) => b,
            Err(e) => return Verdict::Unknown(format!("goal evaluation: {e:?}")),
        };
        let witness = || {
            Some(Witness {
                sequence: graph.path_to(i),
                marking: m.clone(),
            })
        };
        match quantifier {
            Quantifier::Ef if holds => return Verdict::Reachable(witness()),
            Quantifier::Ag if !holds => return Verdict::NotInvariant(witness()),
            _ => {}
        }
    }
    if graph.truncated {
        return Verdict::Unknown(format!("state space truncated at {:?}", graph.cutoffs));
    }
    match quantifier {
        Quantifier::Ef => Verdict::Unreachable,
        Quantifier::Ag => Verdict::Invariant,
    }
}

/// Shortest distance to a marking satisfying `goal`, if one is in the graph.
pub fn shortest_distance(graph: &StateGraph, goal: &Formula) -> Option<usize> {
    (0..graph.len())
        .find(|&i| goal.evaluate_over(&graph.places, &graph.marking(i)).unwrap_or(false))
        .map(|i| graph.depth[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refutation {
    pub observation: ObservationSequence,
    /// The net the offending marking belongs to.
    pub side: Side,
    pub marking: Marking,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certification {
    /// No violation among observation sequences up to `depth`; `complete`
    /// when the exploration ran out of new configurations before the bound.
    Certified { depth: usize, complete: bool },
    Refuted(Refutation),
    Inconclusive(String),
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified { .. })
    }
}

type StateSet = BTreeSet<Vec<u64>>;

struct Observer<'a> {
    net: &'a PetriNet,
    cutoffs: Cutoffs,
    budget: usize,
}

impl Observer<'_> {
    /// Closure under silent transitions.
    fn close(&mut self, seed: StateSet) -> Result<StateSet, String> {
        let mut seen = seed.clone();
        let mut queue: VecDeque<Vec<u64>> = seed.into_iter().collect();
        while let Some(s) = queue.pop_front() {
            for t in 0..self.net.num_transitions() {
                if !self.net.transition_at(t).label().is_silent() || !self.net.enabled_dense(&s, t) {
                    continue;
                }
                let next = self.net.fire_dense(&s, t).map_err(|e| e.to_string())?;
                if next.iter().any(|&k| k > self.cutoffs.max_tokens) {
                    return Err(format!("token cutoff {} exceeded", self.cutoffs.max_tokens));
                }
                if seen.insert(next.clone()) {
                    self.budget += 1;
                    if self.budget > self.cutoffs.max_states {
                        return Err(format!("state cutoff {} exceeded", self.cutoffs.max_states));
                    }
                    queue.push_back(next);
                }
            }
        }
        Ok(seen)
    }

    fn after(&mut self, set: &StateSet, label: &str) -> Result<StateSet, String> {
        let mut out = StateSet::new();
        for s in set {
            for t in 0..self.net.num_transitions() {
                let matches = matches!(self.net.transition_at(t).label(), Label::Action(l) if l == label);
                if matches && self.net.enabled_dense(s, t) {
                    let next = self.net.fire_dense(s, t).map_err(|e| e.to_string())?;
                    if next.iter().any(|&k| k > self.cutoffs.max_tokens) {
                        return Err(format!("token cutoff {} exceeded", self.cutoffs.max_tokens));
                    }
                    out.insert(next);
                }
            }
        }
        self.close(out)
    }
}

fn observable_labels(net: &PetriNet) -> BTreeSet<String> {
    net.transitions()
        .iter()
        .filter_map(|t| match t.label() {
            Label::Action(l) => Some(l.clone()),
            Label::Silent => None,
        })
        .collect()
}

/// Markings of the other net paired with a marking, cached by state.
struct Pairing<'a> {
    abstraction: &'a Abstraction,
    token_bound: u64,
    images: HashMap<Vec<u64>, Vec<Vec<u64>>>,
    preimages: HashMap<Vec<u64>, Vec<Vec<u64>>>,
}

impl Pairing<'_> {
    fn lookup(&mut self, side: Side, state: &[u64]) -> Result<&Vec<Vec<u64>>, AbstractionError> {
        let (cache, from, to) = match side {
            Side::Source => (&mut self.images, &self.abstraction.source_places, &self.abstraction.target_places),
            Side::Target => (&mut self.preimages, &self.abstraction.target_places, &self.abstraction.source_places),
        };
        if !cache.contains_key(state) {
            let m = Marking::from_pairs(from.iter().map(String::as_str).zip(state.iter().copied()));
            let found = match side {
                Side::Source => self.abstraction.images(&m, self.token_bound)?,
                Side::Target => self.abstraction.preimages(&m, self.token_bound)?,
            };
            let dense = found
                .into_iter()
                .map(|m| to.iter().map(|p| m.get(p)).collect())
                .collect();
            cache.insert(state.to_vec(), dense);
        }
        Ok(&cache[state])
    }
}

/// Checks on observation sequences of length at most `obs_depth` that
/// `m1 ⊎ m2 ⊨ E`, and that every marking reached by a sequence in one net
/// has a compatible partner, all of whose compatible partners are reached
/// by the same sequence in the other net.
pub fn check_e_abstraction_bounded(
    n1: &PetriNet,
    m1: &Marking,
    n2: &PetriNet,
    m2: &Marking,
    e: &Abstraction,
    obs_depth: usize,
    cutoffs: Cutoffs,
) -> Certification {
    match e.holds(m1, m2) {
        Ok(true) => {}
        Ok(false) => {
            return Certification::Refuted(Refutation {
                observation: ObservationSequence::default(),
                side: Side::Source,
                marking: m1.clone(),
                reason: format!("initial markings {m1} and {m2} are not compatible"),
            })
        }
        Err(err) => return Certification::Inconclusive(format!("{err}")),
    }
    let (Ok(s1), Ok(s2)) = (n1.dense(m1), n2.dense(m2)) else {
        return Certification::Inconclusive("initial marking outside the net".into());
    };
    let mut obs1 = Observer { net: n1, cutoffs, budget: 0 };
    let mut obs2 = Observer { net: n2, cutoffs, budget: 0 };
    let mut pairing = Pairing {
        abstraction: e,
        token_bound: cutoffs.max_tokens,
        images: HashMap::new(),
        preimages: HashMap::new(),
    };
    let labels: BTreeSet<String> = observable_labels(n1).union(&observable_labels(n2)).cloned().collect();

    let start = match (obs1.close(StateSet::from([s1])), obs2.close(StateSet::from([s2]))) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(r), _) | (_, Err(r)) => return Certification::Inconclusive(r),
    };
    let mut seen: HashSet<(StateSet, StateSet)> = HashSet::new();
    let mut frontier = vec![(start, ObservationSequence::default())];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for ((a, b), sigma) in frontier {
            if !seen.insert((a.clone(), b.clone())) {
                continue;
            }
            for (side, own, other, net) in [(Side::Source, &a, &b, n1), (Side::Target, &b, &a, n2)] {
                for s in own {
                    let partners = match pairing.lookup(side, s) {
                        Ok(p) => p,
                        Err(err) => return Certification::Inconclusive(format!("{err}")),
                    };
                    let reason = if partners.is_empty() {
                        Some("no compatible marking in the other net".to_string())
                    } else {
                        partners
                            .iter()
                            .find(|p| !other.contains(*p))
                            .map(|p| format!("compatible marking {p:?} is not reached by the same observations"))
                    };
                    if let Some(reason) = reason {
                        return Certification::Refuted(Refutation {
                            observation: sigma.clone(),
                            side,
                            marking: net.marking_from_dense(s),
                            reason,
                        });
                    }
                }
            }
            if depth == obs_depth {
                continue;
            }
            for l in &labels {
                let (na, nb) = match (obs1.after(&a, l), obs2.after(&b, l)) {
                    (Ok(x), Ok(y)) => (x, y),
                    (Err(r), _) | (_, Err(r)) => return Certification::Inconclusive(r),
                };
                if na.is_empty() && nb.is_empty() {
                    continue;
                }
                let mut s = sigma.clone();
                s.0.push(l.clone());
                next.push(((na, nb), s));
            }
        }
        if next.is_empty() {
            return Certification::Certified { depth, complete: true };
        }
        if depth == obs_depth {
            return Certification::Certified { depth, complete: false };
        }
        depth += 1;
        frontier = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{Constraint, LinExpr, LinearSystem};
    use crate::property::{bounded_predicate, marking_cube, Atom};
    use crate::samples::{running_example, running_example_reduced, running_example_system};

    #[test]
    fn dead_net_has_one_state() {
        let mut net = PetriNet::new("dead");
        net.add_place("p").unwrap();
        net.add_transition("t", Label::Silent, &[("p", 1)], &[]).unwrap();
        let g = enumerate(&net, &Marking::new(), Cutoffs::default());
        assert_eq!(g.len(), 1);
        assert!(!g.truncated);
    }

    #[test]
    fn running_example_contains_intermediate_marking() {
        let (net, m0) = running_example();
        let g = enumerate(&net, &m0, Cutoffs::default());
        assert!(!g.truncated);
        let m = Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)]);
        assert!(g.contains(&m));
        let i = g.index_of(&net.dense(&m).unwrap()).unwrap();
        assert_eq!(net.fire_sequence(&m0, &g.path_to(i)).unwrap(), m);
    }

    #[test]
    fn explicit_answers() {
        let (net, m0) = running_example();
        let g = enumerate(&net, &m0, Cutoffs::default());
        let cube = marking_cube(net.places(), &m0);
        match explicit_check(&g, Quantifier::Ef, &cube) {
            Verdict::Reachable(Some(w)) => assert!(w.sequence.is_empty()),
            v => panic!("{v:?}"),
        }
        let k = g.max_tokens();
        assert_eq!(explicit_check(&g, Quantifier::Ag, &bounded_predicate(&net, k)), Verdict::Invariant);
        assert!(matches!(
            explicit_check(&g, Quantifier::Ag, &bounded_predicate(&net, k - 1)),
            Verdict::NotInvariant(Some(_))
        ));
    }

    #[test]
    fn truncation_blocks_invariants() {
        let mut net = PetriNet::new("gen");
        net.add_place("p").unwrap();
        net.add_transition("t", Label::Silent, &[], &[("p", 1)]).unwrap();
        let g = enumerate(&net, &Marking::new(), Cutoffs { max_states: 10, max_tokens: 64 });
        assert!(g.truncated);
        let goal = Formula::atom(Atom::le("p", 100));
        assert!(matches!(explicit_check(&g, Quantifier::Ag, &goal), Verdict::Unknown(_)));
        let goal = Formula::atom(Atom::ge("p", 5));
        assert_eq!(shortest_distance(&g, &goal), Some(5));
    }

    #[test]
    fn running_example_is_certified() {
        let (n1, m1) = running_example();
        let (n2, m2) = running_example_reduced();
        let e = Abstraction::new(running_example_system(), n1.places(), n2.places());
        let c = check_e_abstraction_bounded(&n1, &m1, &n2, &m2, &e, DEFAULT_OBS_DEPTH, Cutoffs::default());
        assert!(matches!(c, Certification::Certified { complete: true, .. }), "{c:?}");
    }

    #[test]
    fn false_system_is_refuted_initially() {
        let (n1, m1) = running_example();
        let (n2, m2) = running_example_reduced();
        let never = LinearSystem::from_constraints(vec![Constraint::eq(LinExpr::constant(0), LinExpr::constant(1))]);
        let e = Abstraction::new(never, n1.places(), n2.places());
        match check_e_abstraction_bounded(&n1, &m1, &n2, &m2, &e, 4, Cutoffs::default()) {
            Certification::Refuted(r) => assert!(r.observation.0.is_empty()),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn wrong_equation_is_refuted() {
        let (n1, m1) = running_example();
        let (n2, m2) = running_example_reduced();
        // counts the token in p3 twice
        let wrong: LinearSystem = "p5 = p4\na1 = p1 + p2 + p3\na2 = p3 + p4\na1 = a2\n".parse().unwrap();
        let e = Abstraction::new(wrong, n1.places(), n2.places());
        let c = check_e_abstraction_bounded(&n1, &m1, &n2, &m2, &e, DEFAULT_OBS_DEPTH, Cutoffs::default());
        assert!(matches!(c, Certification::Refuted(_)), "{c:?}");
    }
}
