use std::collections::{BTreeMap, HashMap, HashSet};

use crate::linear::{Cmp, Constraint, LinExpr, LinearSystem};
use crate::net::{Label, Marking, PetriNet};

use super::{ReductionStep, Rule};

/// Pair searches are quadratic in the number of places; above this size the
/// SHORTCUT rule is skipped.
const SHORTCUT_MAX_PLACES: usize = 400;
/// Same for the two-step composition case of REDT, which is cubic in the
/// number of transitions.
const COMPOSITION_MAX_TRANSITIONS: usize = 120;

/// A successful rule application.
#[derive(Debug, Clone)]
pub struct Applied {
    pub step: ReductionStep,
    pub net: PetriNet,
    pub marking: Marking,
}

/// Generator for `a1, a2, …` that skips every name already taken.
#[derive(Debug, Clone, Default)]
pub struct FreshNames {
    used: HashSet<String>,
    next: usize,
}

impl FreshNames {
    pub fn for_net(net: &PetriNet) -> Self {
        let mut used: HashSet<String> = net.places().iter().cloned().collect();
        used.extend(net.transitions().iter().map(|t| t.name().to_string()));
        FreshNames { used, next: 1 }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    /// Next unused name, without consuming it.
    pub fn next_name(&self) -> String {
        let mut i = self.next;
        loop {
            let name = format!("a{i}");
            if !self.used.contains(&name) {
                return name;
            }
            i += 1;
        }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let name = format!("a{}", self.next);
            self.next += 1;
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Per-place arc lists: `(transition, weight)` sorted by transition.
struct Columns {
    pre: Vec<Vec<(usize, u64)>>,
    post: Vec<Vec<(usize, u64)>>,
}

impl Columns {
    fn of(net: &PetriNet) -> Self {
        let mut pre = vec![Vec::new(); net.num_places()];
        let mut post = vec![Vec::new(); net.num_places()];
        for (t, tr) in net.transitions().iter().enumerate() {
            for &(p, w) in tr.pre() {
                pre[p].push((t, w));
            }
            for &(p, w) in tr.post() {
                post[p].push((t, w));
            }
        }
        Columns { pre, post }
    }

    /// Nonzero effects `(t, post - pre)` on `p`, sorted by transition.
    fn effect(&self, p: usize) -> BTreeMap<usize, i64> {
        let mut out: BTreeMap<usize, i64> = BTreeMap::new();
        for &(t, w) in &self.post[p] {
            *out.entry(t).or_default() += w as i64;
        }
        for &(t, w) in &self.pre[p] {
            *out.entry(t).or_default() -= w as i64;
        }
        out.retain(|_, v| *v != 0);
        out
    }

    fn pre_weight(&self, p: usize, t: usize) -> u64 {
        self.pre[p]
            .iter()
            .find(|&&(u, _)| u == t)
            .map_or(0, |&(_, w)| w)
    }
}

/// Edits applied to a net: removals plus at most one fused place, placed
/// first in the new order.
#[derive(Default)]
struct Edit {
    remove_places: Vec<usize>,
    remove_transitions: Vec<usize>,
    fused: Option<Fused>,
}

struct Fused {
    name: String,
    tokens: u64,
    pre: BTreeMap<usize, u64>,
    post: BTreeMap<usize, u64>,
}

fn rebuild(net: &PetriNet, m: &Marking, edit: &Edit) -> (PetriNet, Marking) {
    let mut out = PetriNet::new(net.name());
    let mut marking = Marking::new();
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut fused_idx = None;
    if let Some(f) = &edit.fused {
        fused_idx = Some(out.add_place(f.name.clone()).expect("fresh name"));
        marking.set(&f.name, f.tokens);
    }
    for (p, name) in net.places().iter().enumerate() {
        if edit.remove_places.contains(&p) {
            continue;
        }
        remap.insert(p, out.add_place(name.clone()).expect("unique names"));
        marking.set(name, m.get(name));
    }
    for (t, tr) in net.transitions().iter().enumerate() {
        if edit.remove_transitions.contains(&t) {
            continue;
        }
        let mut pre: Vec<(usize, u64)> = tr
            .pre()
            .iter()
            .filter_map(|&(p, w)| remap.get(&p).map(|&q| (q, w)))
            .collect();
        let mut post: Vec<(usize, u64)> = tr
            .post()
            .iter()
            .filter_map(|&(p, w)| remap.get(&p).map(|&q| (q, w)))
            .collect();
        if let (Some(f), Some(x)) = (&edit.fused, fused_idx) {
            if let Some(&w) = f.pre.get(&t) {
                pre.push((x, w));
            }
            if let Some(&w) = f.post.get(&t) {
                post.push((x, w));
            }
        }
        out.add_transition_indexed(tr.name(), tr.label().clone(), pre, post)
            .expect("unique names");
    }
    (out, marking)
}

fn step(rule: Rule, matched: Vec<String>, equations: Vec<Constraint>) -> ReductionStep {
    ReductionStep {
        rule,
        matched,
        equations: LinearSystem::from_constraints(equations),
        fresh_vars: Vec::new(),
        removed_places: Vec::new(),
        removed_transitions: Vec::new(),
        result: None,
    }
}

fn finish(net: &PetriNet, m: &Marking, mut step: ReductionStep, edit: Edit) -> Applied {
    step.removed_places = edit
        .remove_places
        .iter()
        .map(|&p| net.place_name(p).to_string())
        .collect();
    step.removed_transitions = edit
        .remove_transitions
        .iter()
        .map(|&t| net.transition_at(t).name().to_string())
        .collect();
    if let Some(f) = &edit.fused {
        step.fresh_vars = vec![f.name.clone()];
    }
    let (net, marking) = rebuild(net, m, &edit);
    Applied { step, net, marking }
}

/// `Pre = {from: 1}` and `Post = {to: 1}` exactly.
fn is_unit_move(net: &PetriNet, t: usize) -> Option<(usize, usize)> {
    let tr = net.transition_at(t);
    match (tr.pre(), tr.post()) {
        (&[(a, 1)], &[(b, 1)]) if a != b => Some((a, b)),
        _ => None,
    }
}

/// Fuses `y1 → τ → y2` into a fresh place when `τ` is the only consumer of
/// `y1`, the only producer of `y2`, and `y2` starts empty.
pub fn try_concat(net: &PetriNet, m: &Marking, fresh: &mut FreshNames) -> Option<Applied> {
    let cols = Columns::of(net);
    for t in 0..net.num_transitions() {
        let tr = net.transition_at(t);
        if !tr.label().is_silent() {
            continue;
        }
        let Some((y1, y2)) = is_unit_move(net, t) else { continue };
        let (n1, n2) = (net.place_name(y1), net.place_name(y2));
        if m.get(n2) != 0 || cols.pre[y1].len() != 1 || cols.post[y2].len() != 1 {
            continue;
        }
        let x = fresh.fresh();
        let fused = Fused {
            name: x.clone(),
            tokens: m.get(n1),
            pre: cols.pre[y2].iter().copied().collect(),
            post: cols.post[y1].iter().copied().collect(),
        };
        let s = step(
            Rule::Concat,
            vec![n1.to_string(), tr.name().to_string(), n2.to_string()],
            vec![Constraint::eq(LinExpr::var(&x), LinExpr::sum([n1, n2]))],
        );
        let edit = Edit {
            remove_places: vec![y1, y2],
            remove_transitions: vec![t],
            fused: Some(fused),
        };
        return Some(finish(net, m, s, edit));
    }
    None
}

/// Fuses two places joined by a pair of opposite silent unit moves.
pub fn try_agg(net: &PetriNet, m: &Marking, fresh: &mut FreshNames) -> Option<Applied> {
    let cols = Columns::of(net);
    let silent_moves: Vec<(usize, usize, usize)> = (0..net.num_transitions())
        .filter(|&t| net.transition_at(t).label().is_silent())
        .filter_map(|t| is_unit_move(net, t).map(|(a, b)| (t, a, b)))
        .collect();
    for &(t1, y1, y2) in &silent_moves {
        let Some(&(t2, _, _)) = silent_moves
            .iter()
            .find(|&&(u, a, b)| u != t1 && a == y2 && b == y1)
        else {
            continue;
        };
        let (n1, n2) = (net.place_name(y1), net.place_name(y2));
        let mut pre: BTreeMap<usize, u64> = BTreeMap::new();
        let mut post: BTreeMap<usize, u64> = BTreeMap::new();
        for y in [y1, y2] {
            for &(t, w) in &cols.pre[y] {
                if t != t1 && t != t2 {
                    *pre.entry(t).or_default() += w;
                }
            }
            for &(t, w) in &cols.post[y] {
                if t != t1 && t != t2 {
                    *post.entry(t).or_default() += w;
                }
            }
        }
        let x = fresh.fresh();
        let fused = Fused {
            name: x.clone(),
            tokens: m.get(n1) + m.get(n2),
            pre,
            post,
        };
        let s = step(
            Rule::Agg,
            vec![
                n1.to_string(),
                net.transition_at(t1).name().to_string(),
                n2.to_string(),
                net.transition_at(t2).name().to_string(),
            ],
            vec![Constraint::eq(LinExpr::var(&x), LinExpr::sum([n1, n2]))],
        );
        let mut remove_transitions = vec![t1, t2];
        remove_transitions.sort_unstable();
        let edit = Edit {
            remove_places: vec![y1, y2],
            remove_transitions,
            fused: Some(fused),
        };
        return Some(finish(net, m, s, edit));
    }
    None
}

/// Removes `z` when another place `y` has identical arcs and no more tokens:
/// `z - y` is then constant and `z` never blocks a transition `y` allows.
/// Among twins, the later place in declaration order is removed unless it
/// holds fewer tokens.
pub fn try_redundant_place(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let cols = Columns::of(net);
    let mut seen: HashMap<(&[(usize, u64)], &[(usize, u64)]), usize> = HashMap::new();
    for p in 0..net.num_places() {
        let key = (cols.pre[p].as_slice(), cols.post[p].as_slice());
        let Some(&q) = seen.get(&key) else {
            seen.insert(key, p);
            continue;
        };
        let (mq, mp) = (m.get(net.place_name(q)), m.get(net.place_name(p)));
        let (y, z) = if mp >= mq { (q, p) } else { (p, q) };
        let (ny, nz) = (net.place_name(y), net.place_name(z));
        let offset = m.get(nz) as i64 - m.get(ny) as i64;
        let s = step(
            Rule::Red,
            vec![ny.to_string(), nz.to_string()],
            vec![Constraint::eq(
                LinExpr::var(nz),
                LinExpr::var(ny).plus(&LinExpr::constant(offset)),
            )],
        );
        let edit = Edit {
            remove_places: vec![z],
            ..Default::default()
        };
        return Some(finish(net, m, s, edit));
    }
    None
}

/// Removes `z` when its effect is the sum of the effects on `y1` and `y2`,
/// its input weights never exceed theirs combined, and it holds at least as
/// many tokens as both. `z = y1 + y2 + K` is then invariant and `z` never
/// disables anything.
pub fn try_shortcut(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let n = net.num_places();
    if n > SHORTCUT_MAX_PLACES {
        return None;
    }
    let cols = Columns::of(net);
    let effects: Vec<BTreeMap<usize, i64>> = (0..n).map(|p| cols.effect(p)).collect();
    let mut by_effect: HashMap<&BTreeMap<usize, i64>, Vec<usize>> = HashMap::new();
    for (p, e) in effects.iter().enumerate() {
        if !e.is_empty() {
            by_effect.entry(e).or_default().push(p);
        }
    }
    for y1 in 0..n {
        for y2 in y1 + 1..n {
            if effects[y1].is_empty() || effects[y2].is_empty() {
                continue;
            }
            let mut sum = effects[y1].clone();
            for (&t, &d) in &effects[y2] {
                *sum.entry(t).or_default() += d;
            }
            sum.retain(|_, v| *v != 0);
            let Some(candidates) = by_effect.get(&sum) else { continue };
            for &z in candidates {
                if z == y1 || z == y2 {
                    continue;
                }
                let tokens = |p: usize| m.get(net.place_name(p));
                if tokens(z) < tokens(y1) + tokens(y2) {
                    continue;
                }
                let dominated = cols.pre[z]
                    .iter()
                    .all(|&(t, w)| w <= cols.pre_weight(y1, t) + cols.pre_weight(y2, t));
                if !dominated {
                    continue;
                }
                let (n1, n2, nz) = (net.place_name(y1), net.place_name(y2), net.place_name(z));
                let k = (tokens(z) - tokens(y1) - tokens(y2)) as i64;
                let s = step(
                    Rule::Shortcut,
                    vec![n1.to_string(), n2.to_string(), nz.to_string()],
                    vec![Constraint::eq(
                        LinExpr::var(nz),
                        LinExpr::sum([n1, n2]).plus(&LinExpr::constant(k)),
                    )],
                );
                let edit = Edit {
                    remove_places: vec![z],
                    ..Default::default()
                };
                return Some(finish(net, m, s, edit));
            }
        }
    }
    None
}

fn effect_vector(net: &PetriNet, t: usize) -> BTreeMap<usize, i64> {
    let tr = net.transition_at(t);
    let mut out: BTreeMap<usize, i64> = BTreeMap::new();
    for &(p, w) in tr.post() {
        *out.entry(p).or_default() += w as i64;
    }
    for &(p, w) in tr.pre() {
        *out.entry(p).or_default() -= w as i64;
    }
    out.retain(|_, v| *v != 0);
    out
}

fn pre_le(net: &PetriNet, small: usize, big: usize) -> bool {
    let big = net.transition_at(big);
    net.transition_at(small)
        .pre()
        .iter()
        .all(|&(p, w)| big.pre_of(p) >= w)
}

/// Removes a transition whose every firing can be replayed by another
/// transition (same label and effect, smaller preset), by a silent
/// two-step composition with the same overall observation, or which is a
/// silent step with no effect.
pub fn try_redundant_transition(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let nt = net.num_transitions();
    let effects: Vec<BTreeMap<usize, i64>> = (0..nt).map(|t| effect_vector(net, t)).collect();
    let remove = |t: usize, matched: Vec<String>| {
        let s = step(Rule::Redt, matched, Vec::new());
        let edit = Edit {
            remove_transitions: vec![t],
            ..Default::default()
        };
        finish(net, m, s, edit)
    };
    let name = |t: usize| net.transition_at(t).name().to_string();

    for t in 0..nt {
        if net.transition_at(t).label().is_silent() && effects[t].is_empty() {
            return Some(remove(t, vec![name(t)]));
        }
    }

    for t in 0..nt {
        for u in 0..nt {
            if u == t
                || net.transition_at(u).label() != net.transition_at(t).label()
                || effects[u] != effects[t]
                || !pre_le(net, u, t)
            {
                continue;
            }
            // identical presets: keep the earlier one
            if pre_le(net, t, u) && u > t {
                continue;
            }
            return Some(remove(t, vec![name(t), name(u)]));
        }
    }

    if nt > COMPOSITION_MAX_TRANSITIONS {
        return None;
    }
    for t in 0..nt {
        let tr = net.transition_at(t);
        for t1 in (0..nt).filter(|&u| u != t) {
            if !pre_le(net, t1, t) {
                continue;
            }
            let first = net.transition_at(t1);
            for t2 in (0..nt).filter(|&u| u != t) {
                let second = net.transition_at(t2);
                let label_ok = match (first.label(), second.label()) {
                    (Label::Silent, l) | (l, Label::Silent) => l == tr.label(),
                    _ => false,
                };
                if !label_ok {
                    continue;
                }
                let mut sum = effects[t1].clone();
                for (&p, &d) in &effects[t2] {
                    *sum.entry(p).or_default() += d;
                }
                sum.retain(|_, v| *v != 0);
                if sum != effects[t] {
                    continue;
                }
                // after t1 from a marking at Pre(t), t2 must be enabled
                let enabled = second.pre().iter().all(|&(p, w)| {
                    tr.pre_of(p) as i64 + effects[t1].get(&p).copied().unwrap_or(0) >= w as i64
                });
                if enabled {
                    return Some(remove(t, vec![name(t), name(t1), name(t2)]));
                }
            }
        }
    }
    None
}

/// Removes a transition consuming from a place that is empty and that no
/// transition can increase.
pub fn try_dead_transition(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let cols = Columns::of(net);
    for p in 0..net.num_places() {
        if m.get(net.place_name(p)) != 0 || cols.pre[p].is_empty() {
            continue;
        }
        if cols.effect(p).values().any(|&d| d > 0) {
            continue;
        }
        let t = cols.pre[p][0].0;
        let s = step(
            Rule::Deadt,
            vec![net.place_name(p).to_string(), net.transition_at(t).name().to_string()],
            Vec::new(),
        );
        let edit = Edit {
            remove_transitions: vec![t],
            ..Default::default()
        };
        return Some(finish(net, m, s, edit));
    }
    None
}

/// Removes a place whose marking no transition changes and whose tokens
/// always satisfy the transitions testing it.
pub fn try_constant(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let cols = Columns::of(net);
    for p in 0..net.num_places() {
        let k = m.get(net.place_name(p));
        if !cols.effect(p).is_empty() || cols.pre[p].iter().any(|&(_, w)| w > k) {
            continue;
        }
        let name = net.place_name(p);
        let s = step(
            Rule::Constant,
            vec![name.to_string()],
            vec![Constraint::eq(LinExpr::var(name), LinExpr::constant(k as i64))],
        );
        let edit = Edit {
            remove_places: vec![p],
            ..Default::default()
        };
        return Some(finish(net, m, s, edit));
    }
    None
}

/// Removes a place with no producer whose only consumer is a silent
/// transition that just drains it one token at a time.
pub fn try_source(net: &PetriNet, m: &Marking) -> Option<Applied> {
    let cols = Columns::of(net);
    for p in 0..net.num_places() {
        if !cols.post[p].is_empty() || cols.pre[p].len() != 1 {
            continue;
        }
        let t = cols.pre[p][0].0;
        let tr = net.transition_at(t);
        if !tr.label().is_silent() || tr.pre() != [(p, 1)] || !tr.post().is_empty() {
            continue;
        }
        let name = net.place_name(p);
        let k = m.get(name);
        let s = step(
            Rule::Source,
            vec![name.to_string(), tr.name().to_string()],
            vec![Constraint::new(
                LinExpr::var(name),
                Cmp::Le,
                LinExpr::constant(k as i64),
            )],
        );
        let edit = Edit {
            remove_places: vec![p],
            remove_transitions: vec![t],
            fused: None,
        };
        return Some(finish(net, m, s, edit));
    }
    None
}
