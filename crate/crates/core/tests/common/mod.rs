//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use polynet::encoding::{marking_term, unroll, Rel, Term};
use polynet::solver::{solver_available, SatResult, SolverConfig, SolverSession};
use polynet::{Label, Marking, PetriNet};

pub fn solver_ok() -> bool {
    solver_available(&SolverConfig::default())
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub places: usize,
    pub transitions: usize,
    pub max_weight: u64,
    pub max_tokens: u64,
    /// Every transition consumes at least as many tokens as it produces.
    pub conservative: bool,
    /// Chance that a transition is silent.
    pub silent: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            places: 4,
            transitions: 4,
            max_weight: 2,
            max_tokens: 2,
            conservative: false,
            silent: 0.5,
        }
    }
}

pub fn place_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

pub fn random_net(rng: &mut StdRng, shape: Shape) -> (PetriNet, Marking) {
    let mut net = PetriNet::new("random");
    let places = place_names(shape.places);
    for p in &places {
        net.add_place(p).unwrap();
    }
    for t in 0..shape.transitions {
        let mut pre: Vec<(usize, u64)> = Vec::new();
        let mut post: Vec<(usize, u64)> = Vec::new();
        for p in 0..shape.places {
            if rng.gen_bool(0.4) {
                pre.push((p, rng.gen_range(1..=shape.max_weight)));
            }
            if rng.gen_bool(0.35) {
                post.push((p, rng.gen_range(1..=shape.max_weight)));
            }
        }
        if shape.conservative {
            if pre.is_empty() {
                pre.push((rng.gen_range(0..shape.places), 1));
            }
            let budget: u64 = pre.iter().map(|&(_, w)| w).sum();
            let mut used = 0;
            post.retain(|&(_, w)| {
                used += w;
                used <= budget
            });
        }
        let label = if rng.gen_bool(shape.silent) {
            Label::Silent
        } else {
            Label::Action(["a", "b"][rng.gen_range(0..2)].to_string())
        };
        net.add_transition_indexed(format!("t{t}"), label, pre, post).unwrap();
    }
    let mut m = Marking::new();
    for p in &places {
        let k = rng.gen_range(0..=shape.max_tokens);
        if k > 0 {
            m.set(p, k);
        }
    }
    (net, m)
}

/// Proptest strategy for small nets; arcs are `(pre, post)` weight grids.
pub fn arb_net(max_places: usize, max_transitions: usize) -> impl Strategy<Value = (PetriNet, Marking)> {
    (1..=max_places, 0..=max_transitions).prop_flat_map(|(np, nt)| {
        let row = prop::collection::vec(0u64..3, np);
        let t = (row.clone(), row, 0u8..3);
        (
            prop::collection::vec(t, nt),
            prop::collection::vec(0u64..3, np),
        )
            .prop_map(move |(ts, m0)| {
                let mut net = PetriNet::new("arb");
                let places = place_names(np);
                for p in &places {
                    net.add_place(p).unwrap();
                }
                for (i, (pre, post, l)) in ts.into_iter().enumerate() {
                    let row = |v: Vec<u64>| v.into_iter().enumerate().filter(|&(_, w)| w > 0).collect();
                    let label = match l {
                        0 => Label::Silent,
                        1 => Label::Action("a".into()),
                        _ => Label::Action("b".into()),
                    };
                    net.add_transition_indexed(format!("t{i}"), label, row(pre), row(post))
                        .unwrap();
                }
                let m = Marking::from_pairs(places.iter().map(String::as_str).zip(m0));
                (net, m)
            })
    })
}

/// Markings reachable in at most `i` steps, for every `i <= k`, by plain
/// breadth-first search on dense vectors.
pub fn bfs_levels(net: &PetriNet, m0: &Marking, k: usize) -> Vec<BTreeSet<Vec<u64>>> {
    let start: Vec<u64> = net.places().iter().map(|p| m0.get(p)).collect();
    let mut seen = BTreeSet::from([start.clone()]);
    let mut frontier = vec![start];
    let mut levels = vec![seen.clone()];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &frontier {
            for t in net.transitions() {
                if t.pre().iter().all(|&(p, w)| s[p] >= w) {
                    let mut s2 = s.clone();
                    for &(p, w) in t.pre() {
                        s2[p] -= w;
                    }
                    for &(p, w) in t.post() {
                        s2[p] += w;
                    }
                    if seen.insert(s2.clone()) {
                        next.push(s2);
                    }
                }
            }
        }
        frontier = next;
        levels.push(seen.clone());
    }
    levels
}

/// Shortest number of steps to a marking satisfying `goal`, exploring at
/// most `limit` states. `Err` when the exploration was cut.
pub fn bfs_distance(
    net: &PetriNet,
    m0: &Marking,
    goal: &dyn Fn(&[u64]) -> bool,
    limit: usize,
) -> Result<Option<usize>, ()> {
    let start: Vec<u64> = net.places().iter().map(|p| m0.get(p)).collect();
    let mut dist = HashMap::from([(start.clone(), 0usize)]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        if goal(&s) {
            return Ok(Some(d));
        }
        for t in net.transitions() {
            if t.pre().iter().all(|&(p, w)| s[p] >= w) {
                let mut s2 = s.clone();
                for &(p, w) in t.pre() {
                    s2[p] -= w;
                }
                for &(p, w) in t.post() {
                    s2[p] += w;
                }
                if !dist.contains_key(&s2) {
                    if dist.len() >= limit {
                        return Err(());
                    }
                    dist.insert(s2.clone(), d + 1);
                    queue.push_back(s2);
                }
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

/// Direct evaluation of an encoded term under an assignment.
pub fn eval_term(t: &Term, env: &dyn Fn(&str) -> i64) -> Value {
    let int = |t: &Term| match eval_term(t, env) {
        Value::Int(v) => v,
        Value::Bool(_) => panic!("expected an integer term: {t}"),
    };
    let boolean = |t: &Term| match eval_term(t, env) {
        Value::Bool(b) => b,
        Value::Int(_) => panic!("expected a Boolean term: {t}"),
    };
    match t {
        Term::Bool(b) => Value::Bool(*b),
        Term::Int(k) => Value::Int(*k),
        Term::Var(v) => Value::Int(env(v)),
        Term::Add(ts) => Value::Int(ts.iter().map(int).sum()),
        Term::Mul(k, t) => Value::Int(k * int(t)),
        Term::Rel(r, a, b) => {
            let (a, b) = (int(a), int(b));
            Value::Bool(match r {
                Rel::Eq => a == b,
                Rel::Le => a <= b,
                Rel::Ge => a >= b,
                Rel::Lt => a < b,
                Rel::Gt => a > b,
            })
        }
        Term::Not(t) => Value::Bool(!boolean(t)),
        Term::And(ts) => Value::Bool(ts.iter().all(boolean)),
        Term::Or(ts) => Value::Bool(ts.iter().any(boolean)),
    }
}

pub fn holds(t: &Term, env: &dyn Fn(&str) -> i64) -> bool {
    eval_term(t, env) == Value::Bool(true)
}

/// All markings of generation `k` in models of `unroll(net, m0, k)`, by
/// blocking each model in turn. `None` if the solver gave up.
pub fn unrolled_models(net: &PetriNet, m0: &Marking, k: usize) -> Option<BTreeSet<Vec<u64>>> {
    let (phi, vecs) = unroll(net, m0, k);
    let mut s = SolverSession::start(SolverConfig::default()).ok()?;
    for v in &vecs {
        s.declare_nonneg(v.names()).ok()?;
    }
    s.assert(&phi).ok()?;
    let last = &vecs[k];
    let mut out = BTreeSet::new();
    loop {
        match s.check_sat().ok()? {
            SatResult::Unsat => return Some(out),
            SatResult::Sat => {}
            SatResult::Unknown(_) => return None,
        }
        let values = s.get_values(last.names()).ok()?;
        let state = last.decode(&values);
        let m = net.marking_from_dense(&state);
        s.assert(&Term::not(marking_term(net.places(), &m, last))).ok()?;
        out.insert(state);
        if out.len() > 10_000 {
            return None;
        }
    }
}

/// Fires `seq` from `m0` and returns the marking, or `None` if a step is disabled.
pub fn replay(net: &PetriNet, m0: &Marking, seq: &polynet::FiringSequence) -> Option<Marking> {
    net.fire_sequence(m0, seq).ok()
}

/// The CONCAT chain `a: -> y1`, silent moves `y1 -> ... -> y_len`,
/// `c: y_len ->`, started with `k` tokens in `y1`, plus a two-place mutex
/// `m1`/`m2` whose handover consumes from the chain. Unbounded.
pub fn concat_family(k: u64, len: usize) -> (PetriNet, Marking) {
    let mut net = PetriNet::new(format!("concat_{k}_{len}"));
    let ys: Vec<String> = (1..=len).map(|i| format!("y{i}")).collect();
    for y in &ys {
        net.add_place(y).unwrap();
    }
    net.add_place("m1").unwrap();
    net.add_place("m2").unwrap();
    let act = |s: &str| Label::Action(s.into());
    net.add_transition("a", act("a"), &[], &[(&ys[0], 1)]).unwrap();
    for i in 0..len - 1 {
        net.add_transition(format!("tau{i}"), Label::Silent, &[(&ys[i], 1)], &[(&ys[i + 1], 1)])
            .unwrap();
    }
    net.add_transition("c", act("c"), &[(&ys[len - 1], 1)], &[]).unwrap();
    net.add_transition("give", act("g"), &[("m1", 1), (&ys[len - 1], 1)], &[("m2", 1)])
        .unwrap();
    net.add_transition("take", act("h"), &[("m2", 1)], &[("m1", 1)]).unwrap();
    (net, Marking::from_pairs([("y1", k), ("m1", 1)]))
}
