//! Place/transition nets with labelled transitions and their firing semantics.
//!
//! Places and transitions keep the order in which they were declared; that
//! order is the canonical variable order used by every encoding downstream.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("name `{0}` is already declared")]
    DuplicateName(String),
    #[error("transition `{transition}` is not enabled: place `{place}` holds {available} < {required}")]
    NotEnabled {
        transition: String,
        place: String,
        required: u64,
        available: u64,
    },
    #[error("step {index} (`{transition}`) of the firing sequence is not enabled")]
    DisabledStep { index: usize, transition: String },
    #[error("markings disagree on shared place `{place}` ({left} vs {right})")]
    Incompatible { place: String, left: u64, right: u64 },
    #[error("token count overflow on place `{0}`")]
    Overflow(String),
}

/// Observable action of a transition, or the silent action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Silent,
    Action(String),
}

impl Label {
    pub fn is_silent(&self) -> bool {
        matches!(self, Label::Silent)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Silent => write!(f, "tau"),
            Label::Action(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    name: String,
    label: Label,
    // (place index, weight), sorted by index, weights > 0
    pre: Vec<(usize, u64)>,
    post: Vec<(usize, u64)>,
}

impl Transition {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    /// Nonzero entries of `Pre(t)` as `(place index, weight)`.
    pub fn pre(&self) -> &[(usize, u64)] {
        &self.pre
    }

    /// Nonzero entries of `Post(t)` as `(place index, weight)`.
    pub fn post(&self) -> &[(usize, u64)] {
        &self.post
    }

    pub fn pre_of(&self, place: usize) -> u64 {
        lookup(&self.pre, place)
    }

    pub fn post_of(&self, place: usize) -> u64 {
        lookup(&self.post, place)
    }

    /// Net change `Post(t,p) - Pre(t,p)` on one place.
    pub fn effect_on(&self, place: usize) -> i64 {
        self.post_of(place) as i64 - self.pre_of(place) as i64
    }
}

fn lookup(row: &[(usize, u64)], place: usize) -> u64 {
    row.binary_search_by_key(&place, |&(p, _)| p)
        .map(|i| row[i].1)
        .unwrap_or(0)
}

fn normalize_row(mut row: Vec<(usize, u64)>) -> Vec<(usize, u64)> {
    row.sort_by_key(|&(p, _)| p);
    let mut out: Vec<(usize, u64)> = Vec::with_capacity(row.len());
    for (p, w) in row {
        match out.last_mut() {
            Some((q, acc)) if *q == p => *acc += w,
            _ => out.push((p, w)),
        }
    }
    out.retain(|&(_, w)| w > 0);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PetriNet {
    name: String,
    places: Vec<String>,
    place_index: HashMap<String, usize>,
    transitions: Vec<Transition>,
    transition_index: HashMap<String, usize>,
}

impl PetriNet {
    pub fn new(name: impl Into<String>) -> Self {
        PetriNet {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn add_place(&mut self, name: impl Into<String>) -> Result<usize, NetError> {
        let name = name.into();
        if self.place_index.contains_key(&name) || self.transition_index.contains_key(&name) {
            return Err(NetError::DuplicateName(name));
        }
        let idx = self.places.len();
        self.place_index.insert(name.clone(), idx);
        self.places.push(name);
        Ok(idx)
    }

    /// Adds a transition with arcs given by place name. Repeated places in a
    /// row have their weights summed.
    pub fn add_transition(
        &mut self,
        name: impl Into<String>,
        label: Label,
        pre: &[(&str, u64)],
        post: &[(&str, u64)],
    ) -> Result<usize, NetError> {
        let pre = self.resolve_row(pre)?;
        let post = self.resolve_row(post)?;
        self.add_transition_indexed(name, label, pre, post)
    }

    /// Adds a transition labelled by its own name (default labeling).
    pub fn add_observable(
        &mut self,
        name: &str,
        pre: &[(&str, u64)],
        post: &[(&str, u64)],
    ) -> Result<usize, NetError> {
        self.add_transition(name, Label::Action(name.to_string()), pre, post)
    }

    pub fn add_transition_indexed(
        &mut self,
        name: impl Into<String>,
        label: Label,
        pre: Vec<(usize, u64)>,
        post: Vec<(usize, u64)>,
    ) -> Result<usize, NetError> {
        let name = name.into();
        if self.place_index.contains_key(&name) || self.transition_index.contains_key(&name) {
            return Err(NetError::DuplicateName(name));
        }
        for &(p, _) in pre.iter().chain(post.iter()) {
            if p >= self.places.len() {
                return Err(NetError::UnknownPlace(format!("#{p}")));
            }
        }
        let idx = self.transitions.len();
        self.transition_index.insert(name.clone(), idx);
        self.transitions.push(Transition {
            name,
            label,
            pre: normalize_row(pre),
            post: normalize_row(post),
        });
        Ok(idx)
    }

    fn resolve_row(&self, row: &[(&str, u64)]) -> Result<Vec<(usize, u64)>, NetError> {
        row.iter()
            .map(|&(p, w)| self.place(p).map(|i| (i, w)))
            .collect()
    }

    pub fn places(&self) -> &[String] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn place(&self, name: &str) -> Result<usize, NetError> {
        self.place_index
            .get(name)
            .copied()
            .ok_or_else(|| NetError::UnknownPlace(name.to_string()))
    }

    pub fn has_place(&self, name: &str) -> bool {
        self.place_index.contains_key(name)
    }

    pub fn transition(&self, name: &str) -> Result<usize, NetError> {
        self.transition_index
            .get(name)
            .copied()
            .ok_or_else(|| NetError::UnknownTransition(name.to_string()))
    }

    pub fn place_name(&self, idx: usize) -> &str {
        &self.places[idx]
    }

    pub fn transition_at(&self, idx: usize) -> &Transition {
        &self.transitions[idx]
    }

    /// Transitions with a nonzero `Post` entry on `place`.
    pub fn producers(&self, place: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.transitions.len()).filter(move |&t| self.transitions[t].post_of(place) > 0)
    }

    /// Transitions with a nonzero `Pre` entry on `place`.
    pub fn consumers(&self, place: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.transitions.len()).filter(move |&t| self.transitions[t].pre_of(place) > 0)
    }

    pub fn is_enabled(&self, m: &Marking, t: &str) -> Result<bool, NetError> {
        let t = self.transition(t)?;
        let dense = self.dense(m)?;
        Ok(self.enabled_dense(&dense, t))
    }

    pub fn fire(&self, m: &Marking, t: &str) -> Result<Marking, NetError> {
        let ti = self.transition(t)?;
        let dense = self.dense(m)?;
        let next = self.fire_dense(&dense, ti)?;
        Ok(self.marking_from_dense(&next))
    }

    pub fn fire_sequence(&self, m: &Marking, seq: &FiringSequence) -> Result<Marking, NetError> {
        let mut state = self.dense(m)?;
        for (index, name) in seq.steps().iter().enumerate() {
            let t = self.transition(name)?;
            state = match self.fire_dense(&state, t) {
                Ok(s) => s,
                Err(NetError::NotEnabled { .. }) => {
                    return Err(NetError::DisabledStep {
                        index,
                        transition: name.clone(),
                    })
                }
                Err(e) => return Err(e),
            };
        }
        Ok(self.marking_from_dense(&state))
    }

    /// Maps a firing sequence through the labeling, erasing silent steps.
    pub fn observe(&self, seq: &FiringSequence) -> Result<ObservationSequence, NetError> {
        let mut labels = Vec::new();
        for name in seq.steps() {
            let t = self.transition(name)?;
            if let Label::Action(a) = &self.transitions[t].label {
                labels.push(a.clone());
            }
        }
        Ok(ObservationSequence(labels))
    }

    pub fn enabled_dense(&self, state: &[u64], t: usize) -> bool {
        self.transitions[t]
            .pre
            .iter()
            .all(|&(p, w)| state[p] >= w)
    }

    pub fn fire_dense(&self, state: &[u64], t: usize) -> Result<Vec<u64>, NetError> {
        let tr = &self.transitions[t];
        for &(p, w) in &tr.pre {
            if state[p] < w {
                return Err(NetError::NotEnabled {
                    transition: tr.name.clone(),
                    place: self.places[p].clone(),
                    required: w,
                    available: state[p],
                });
            }
        }
        let mut next = state.to_vec();
        for &(p, w) in &tr.pre {
            next[p] -= w;
        }
        for &(p, w) in &tr.post {
            next[p] = next[p]
                .checked_add(w)
                .ok_or_else(|| NetError::Overflow(self.places[p].clone()))?;
        }
        Ok(next)
    }

    /// Dense token vector in place order. Fails on places foreign to the net.
    pub fn dense(&self, m: &Marking) -> Result<Vec<u64>, NetError> {
        let mut v = vec![0; self.places.len()];
        for (p, k) in m.iter() {
            v[self.place(p)?] = k;
        }
        Ok(v)
    }

    pub fn marking_from_dense(&self, state: &[u64]) -> Marking {
        Marking::from_pairs(
            self.places
                .iter()
                .zip(state.iter())
                .map(|(p, &k)| (p.as_str(), k)),
        )
    }

    /// First transition, in declaration order, whose firing leads from `from` to `to`.
    pub fn connecting_transition(&self, from: &[u64], to: &[u64]) -> Option<usize> {
        (0..self.transitions.len()).find(|&t| {
            self.enabled_dense(from, t)
                && (0..self.places.len())
                    .all(|p| from[p] as i128 + self.transitions[t].effect_on(p) as i128 == to[p] as i128)
        })
    }
}

/// Token assignment over place names; absent places hold zero tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking {
    tokens: BTreeMap<String, u64>,
}

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, u64)>) -> Self {
        let mut m = Marking::new();
        for (p, k) in pairs {
            m.set(p, k);
        }
        m
    }

    pub fn get(&self, place: &str) -> u64 {
        self.tokens.get(place).copied().unwrap_or(0)
    }

    pub fn set(&mut self, place: &str, k: u64) {
        if k == 0 {
            self.tokens.remove(place);
        } else {
            self.tokens.insert(place.to_string(), k);
        }
    }

    /// Nonzero entries in place-name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens.iter().map(|(p, &k)| (p.as_str(), k))
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.tokens.values().sum()
    }

    /// Componentwise `self >= other`.
    pub fn covers(&self, other: &Marking) -> bool {
        other.iter().all(|(p, k)| self.get(p) >= k)
    }

    /// Restriction to the given place set.
    pub fn restrict<S: AsRef<str>>(&self, places: &[S]) -> Marking {
        Marking::from_pairs(places.iter().map(|p| (p.as_ref(), self.get(p.as_ref()))))
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, (p, k)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}:{k}")?;
        }
        write!(f, ">")
    }
}

/// Merges `m1` over `places1` with `m2` over `places2`; they must agree on
/// the shared places.
pub fn merge_markings<S: AsRef<str>>(
    m1: &Marking,
    places1: &[S],
    m2: &Marking,
    places2: &[S],
) -> Result<Marking, NetError> {
    let mut merged = m1.restrict(places1);
    for p in places2 {
        let p = p.as_ref();
        let right = m2.get(p);
        if places1.iter().any(|q| q.as_ref() == p) {
            let left = m1.get(p);
            if left != right {
                return Err(NetError::Incompatible {
                    place: p.to_string(),
                    left,
                    right,
                });
            }
        } else {
            merged.set(p, right);
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FiringSequence(pub Vec<String>);

impl FiringSequence {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Self {
        FiringSequence(steps.into_iter().map(Into::into).collect())
    }

    pub fn steps(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &FiringSequence) -> FiringSequence {
        FiringSequence(self.0.iter().chain(other.0.iter()).cloned().collect())
    }
}

impl fmt::Display for FiringSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        write!(f, "{}", self.0.join(" "))
    }
}

/// Sequence of observable labels; never contains the silent action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservationSequence(pub Vec<String>);

impl ObservationSequence {
    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn concat(&self, other: &ObservationSequence) -> ObservationSequence {
        ObservationSequence(self.0.iter().chain(other.0.iter()).cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::running_example;

    fn chain() -> PetriNet {
        let mut net = PetriNet::new("chain");
        net.add_place("p").unwrap();
        net.add_place("q").unwrap();
        net.add_observable("t", &[("p", 1)], &[("q", 1)]).unwrap();
        net
    }

    #[test]
    fn first_step_of_running_example_is_enabled() {
        let (net, m0) = running_example();
        assert!(net.is_enabled(&m0, "t0").unwrap());
    }

    #[test]
    fn zero_precondition_is_always_enabled() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_observable("t", &[], &[("p", 1)]).unwrap();
        assert!(net.is_enabled(&Marking::new(), "t").unwrap());
    }

    #[test]
    fn weighted_precondition_blocks() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_observable("t", &[("p", 2)], &[]).unwrap();
        let m = Marking::from_pairs([("p", 1)]);
        assert!(!net.is_enabled(&m, "t").unwrap());
        let err = net.fire(&m, "t").unwrap_err();
        assert!(matches!(err, NetError::NotEnabled { ref place, .. } if place == "p"));
    }

    #[test]
    fn unknown_transition_is_an_error() {
        let net = chain();
        assert_eq!(
            net.is_enabled(&Marking::new(), "zz"),
            Err(NetError::UnknownTransition("zz".into()))
        );
    }

    #[test]
    fn running_example_sequence() {
        let (net, m0) = running_example();
        let seq = FiringSequence::new(["t0", "t0", "t1", "t1", "t2", "t3", "t4"]);
        let m = net.fire_sequence(&m0, &seq).unwrap();
        let expected = Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)]);
        assert_eq!(m, expected);
        let obs = net.observe(&seq).unwrap();
        assert_eq!(obs.labels(), ["a", "a", "b", "c"]);
    }

    #[test]
    fn identity_effect_and_single_move() {
        let mut net = chain();
        net.add_observable("noop", &[], &[]).unwrap();
        let m = Marking::from_pairs([("p", 1)]);
        assert_eq!(net.fire(&m, "noop").unwrap(), m);
        assert_eq!(net.fire(&m, "t").unwrap(), Marking::from_pairs([("q", 1)]));
    }

    #[test]
    fn empty_and_failing_sequences() {
        let net = chain();
        let m = Marking::from_pairs([("p", 1)]);
        assert_eq!(net.fire_sequence(&m, &FiringSequence::default()).unwrap(), m);
        let err = net
            .fire_sequence(&m, &FiringSequence::new(["t", "t"]))
            .unwrap_err();
        assert_eq!(
            err,
            NetError::DisabledStep {
                index: 1,
                transition: "t".into()
            }
        );
    }

    #[test]
    fn silent_steps_are_erased() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_transition("u", Label::Silent, &[], &[("p", 1)]).unwrap();
        net.add_transition("v", Label::Silent, &[("p", 1)], &[]).unwrap();
        let obs = net.observe(&FiringSequence::new(["u", "v", "u"])).unwrap();
        assert!(obs.labels().is_empty());
        let obs = chain().observe(&FiringSequence::new(["t", "t"])).unwrap();
        assert_eq!(obs.labels(), ["t", "t"]);
    }

    #[test]
    fn merge_cases() {
        let a = Marking::from_pairs([("x", 1)]);
        let b = Marking::from_pairs([("y", 2)]);
        let merged = merge_markings(&a, &["x"], &b, &["y"]).unwrap();
        assert_eq!(merged, Marking::from_pairs([("x", 1), ("y", 2)]));

        let a = Marking::from_pairs([("x", 1), ("p", 3)]);
        let b = Marking::from_pairs([("p", 3)]);
        let merged = merge_markings(&a, &["x", "p"], &b, &["p"]).unwrap();
        assert_eq!(merged.get("p"), 3);

        let b = Marking::from_pairs([("p", 2)]);
        let a = Marking::from_pairs([("p", 1)]);
        assert_eq!(
            merge_markings(&a, &["p"], &b, &["p"]),
            Err(NetError::Incompatible {
                place: "p".into(),
                left: 1,
                right: 2
            })
        );
    }

    #[test]
    fn names_are_disjoint() {
        let mut net = chain();
        assert!(matches!(net.add_place("t"), Err(NetError::DuplicateName(_))));
        assert!(matches!(
            net.add_observable("p", &[], &[]),
            Err(NetError::DuplicateName(_))
        ));
    }

    #[test]
    fn overflow_is_reported() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_observable("t", &[], &[("p", 2)]).unwrap();
        let m = Marking::from_pairs([("p", u64::MAX - 1)]);
        assert_eq!(net.fire(&m, "t"), Err(NetError::Overflow("p".into())));
    }
}
