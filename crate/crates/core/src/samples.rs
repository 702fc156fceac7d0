//! Small hand-built nets used by tests, benchmarks and the CLI self-check.

use crate::linear::{Cmp, Constraint, LinExpr, LinearSystem};
use crate::net::{Label, Marking, PetriNet};

/// Seven-place net with labels `a`, `b`, `c` and two silent transitions.
/// From `⟨p0:5, p6:4⟩` the sequence `t0 t0 t1 t1 t2 t3 t4` reaches
/// `⟨p0:3, p2:1, p3:1, p6:3⟩` while observing `a a b c`.
pub fn running_example() -> (PetriNet, Marking) {
    let mut net = PetriNet::new("M1");
    for p in ["p0", "p1", "p2", "p3", "p4", "p5", "p6"] {
        net.add_place(p).unwrap();
    }
    let a = |s: &str| Label::Action(s.to_string());
    net.add_transition("t0", a("a"), &[("p0", 1)], &[("p1", 1), ("p3", 1)])
        .unwrap();
    net.add_transition("t1", Label::Silent, &[("p1", 1)], &[("p2", 1)])
        .unwrap();
    net.add_transition("t2", a("b"), &[("p0", 1), ("p6", 1)], &[])
        .unwrap();
    net.add_transition("t3", Label::Silent, &[("p3", 1)], &[("p4", 1), ("p5", 1)])
        .unwrap();
    net.add_transition("t4", a("c"), &[("p2", 1), ("p4", 1), ("p5", 1)], &[("p0", 1)])
        .unwrap();
    (net, Marking::from_pairs([("p0", 5), ("p6", 4)]))
}

/// The three-place net obtained from [`running_example`] by reduction.
pub fn running_example_reduced() -> (PetriNet, Marking) {
    let mut net = PetriNet::new("M2");
    for p in ["a2", "p0", "p6"] {
        net.add_place(p).unwrap();
    }
    let a = |s: &str| Label::Action(s.to_string());
    net.add_transition("t0", a("a"), &[("p0", 1)], &[("a2", 1)])
        .unwrap();
    net.add_transition("t2", a("b"), &[("p0", 1), ("p6", 1)], &[])
        .unwrap();
    net.add_transition("t4", a("c"), &[("a2", 1)], &[("p0", 1)])
        .unwrap();
    (net, Marking::from_pairs([("p0", 5), ("p6", 4)]))
}

/// `p5 = p4`, `a1 = p1 + p2`, `a2 = p3 + p4`, `a1 = a2`.
pub fn running_example_system() -> LinearSystem {
    LinearSystem::from_constraints(vec![
        Constraint::eq(LinExpr::var("p5"), LinExpr::var("p4")),
        Constraint::eq(LinExpr::var("a1"), LinExpr::sum(["p1", "p2"])),
        Constraint::eq(LinExpr::var("a2"), LinExpr::sum(["p3", "p4"])),
        Constraint::eq(LinExpr::var("a1"), LinExpr::var("a2")),
    ])
}

/// A rule's source net paired with its expected reduced form.
#[derive(Debug, Clone)]
pub struct AxiomInstance {
    pub rule: &'static str,
    pub source: (PetriNet, Marking),
    pub target: (PetriNet, Marking),
    pub system: LinearSystem,
}

fn act(s: &str) -> Label {
    Label::Action(s.to_string())
}

fn net_with(name: &str, places: &[&str]) -> PetriNet {
    let mut net = PetriNet::new(name);
    for p in places {
        net.add_place(*p).unwrap();
    }
    net
}

/// `a` feeds `y1`, a silent step moves tokens to `y2`, `c` consumes them.
/// Unbounded because `a` is always enabled.
pub fn concat_axiom(k: u64) -> AxiomInstance {
    let mut n1 = net_with("concat", &["y1", "y2"]);
    n1.add_transition("a", act("a"), &[], &[("y1", 1)]).unwrap();
    n1.add_transition("tau", Label::Silent, &[("y1", 1)], &[("y2", 1)])
        .unwrap();
    n1.add_transition("c", act("c"), &[("y2", 1)], &[]).unwrap();
    let mut n2 = net_with("concat_red", &["x"]);
    n2.add_transition("a", act("a"), &[], &[("x", 1)]).unwrap();
    n2.add_transition("c", act("c"), &[("x", 1)], &[]).unwrap();
    AxiomInstance {
        rule: "CONCAT",
        source: (n1, Marking::from_pairs([("y1", k)])),
        target: (n2, Marking::from_pairs([("x", k)])),
        system: LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("x"),
            LinExpr::sum(["y1", "y2"]),
        )]),
    }
}

/// Tokens circulate silently between `y1` and `y2`; `b` and `c` drain
/// either side.
pub fn agg_axiom(k: u64) -> AxiomInstance {
    let mut n1 = net_with("agg", &["y1", "y2"]);
    n1.add_transition("a", act("a"), &[], &[("y1", 1)]).unwrap();
    n1.add_transition("tau1", Label::Silent, &[("y1", 1)], &[("y2", 1)])
        .unwrap();
    n1.add_transition("tau2", Label::Silent, &[("y2", 1)], &[("y1", 1)])
        .unwrap();
    n1.add_transition("b", act("b"), &[("y1", 1)], &[]).unwrap();
    n1.add_transition("c", act("c"), &[("y2", 2)], &[]).unwrap();
    let mut n2 = net_with("agg_red", &["x"]);
    n2.add_transition("a", act("a"), &[], &[("x", 1)]).unwrap();
    n2.add_transition("b", act("b"), &[("x", 1)], &[]).unwrap();
    n2.add_transition("c", act("c"), &[("x", 2)], &[]).unwrap();
    AxiomInstance {
        rule: "AGG",
        source: (n1, Marking::from_pairs([("y1", k)])),
        target: (n2, Marking::from_pairs([("x", k)])),
        system: LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("x"),
            LinExpr::sum(["y1", "y2"]),
        )]),
    }
}

/// `z` has the same flow as `y` and at least as many tokens (`k ≤ n`).
pub fn red_axiom(k: u64, n: u64) -> AxiomInstance {
    assert!(k <= n);
    let mut n1 = net_with("red", &["y", "z"]);
    n1.add_transition("a", act("a"), &[], &[("y", 1), ("z", 1)])
        .unwrap();
    n1.add_transition("b", act("b"), &[("y", 1), ("z", 1)], &[])
        .unwrap();
    let mut n2 = net_with("red_red", &["y"]);
    n2.add_transition("a", act("a"), &[], &[("y", 1)]).unwrap();
    n2.add_transition("b", act("b"), &[("y", 1)], &[]).unwrap();
    AxiomInstance {
        rule: "RED",
        source: (n1, Marking::from_pairs([("y", k), ("z", n)])),
        target: (n2, Marking::from_pairs([("y", k)])),
        system: LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("z"),
            LinExpr::var("y").plus(&LinExpr::constant(n as i64 - k as i64)),
        )]),
    }
}

/// `z` counts the tokens of the chain `y1 → y2` plus `k` extra ones.
pub fn shortcut_axiom(k: u64) -> AxiomInstance {
    let mut n1 = net_with("shortcut", &["y1", "y2", "z"]);
    n1.add_transition("a", act("a"), &[], &[("y1", 1), ("z", 1)])
        .unwrap();
    n1.add_transition("tau", Label::Silent, &[("y1", 1)], &[("y2", 1)])
        .unwrap();
    n1.add_transition("b", act("b"), &[("y2", 1), ("z", 1)], &[])
        .unwrap();
    let mut n2 = net_with("shortcut_red", &["y1", "y2"]);
    n2.add_transition("a", act("a"), &[], &[("y1", 1)]).unwrap();
    n2.add_transition("tau", Label::Silent, &[("y1", 1)], &[("y2", 1)])
        .unwrap();
    n2.add_transition("b", act("b"), &[("y2", 1)], &[]).unwrap();
    AxiomInstance {
        rule: "SHORTCUT",
        source: (n1, Marking::from_pairs([("z", k)])),
        target: (n2, Marking::new()),
        system: LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("z"),
            LinExpr::sum(["y1", "y2"]).plus(&LinExpr::constant(k as i64)),
        )]),
    }
}

/// Two transitions with identical flow and label; one is redundant.
pub fn redt_axiom(k: u64) -> AxiomInstance {
    let build = |dup: bool| {
        let mut n = net_with(if dup { "redt" } else { "redt_red" }, &["p", "q"]);
        n.add_transition("a", act("a"), &[], &[("p", 1)]).unwrap();
        n.add_transition("t", act("b"), &[("p", 1)], &[("q", 1)])
            .unwrap();
        if dup {
            n.add_transition("t2", act("b"), &[("p", 1)], &[("q", 1)])
                .unwrap();
        }
        n
    };
    AxiomInstance {
        rule: "REDT",
        source: (build(true), Marking::from_pairs([("p", k)])),
        target: (build(false), Marking::from_pairs([("p", k)])),
        system: LinearSystem::new(),
    }
}

/// `x` starts empty and nothing feeds it, so the silent consumer is dead.
pub fn deadt_axiom(k: u64) -> AxiomInstance {
    let build = |dead: bool| {
        let mut n = net_with(if dead { "deadt" } else { "deadt_red" }, &["x", "y"]);
        n.add_transition("a", act("a"), &[], &[("y", 1)]).unwrap();
        n.add_transition("b", act("b"), &[("y", 1)], &[]).unwrap();
        if dead {
            n.add_transition("tau", Label::Silent, &[("x", 1), ("y", 1)], &[("y", 2)])
                .unwrap();
        }
        n
    };
    AxiomInstance {
        rule: "DEADT",
        source: (build(true), Marking::from_pairs([("y", k)])),
        target: (build(false), Marking::from_pairs([("y", k)])),
        system: LinearSystem::new(),
    }
}

/// `x` holds `k` tokens that `a` only tests; `c` keeps `y` live. For `k = 0` the test arc makes
/// `a` dead, so the target drops `a` as well.
pub fn constant_axiom(k: u64) -> AxiomInstance {
    let mut n1 = net_with("constant", &["x", "y"]);
    n1.add_transition("a", act("a"), &[("x", 1)], &[("x", 1), ("y", 1)])
        .unwrap();
    n1.add_transition("b", act("b"), &[("y", 1)], &[]).unwrap();
    n1.add_transition("c", act("c"), &[], &[("y", 1)]).unwrap();
    let mut n2 = net_with("constant_red", &["y"]);
    if k > 0 {
        n2.add_transition("a", act("a"), &[], &[("y", 1)]).unwrap();
    }
    n2.add_transition("b", act("b"), &[("y", 1)], &[]).unwrap();
    n2.add_transition("c", act("c"), &[], &[("y", 1)]).unwrap();
    AxiomInstance {
        rule: "CONSTANT",
        source: (n1, Marking::from_pairs([("x", k)])),
        target: (n2, Marking::new()),
        system: LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("x"),
            LinExpr::constant(k as i64),
        )]),
    }
}

/// `x` can only be drained silently; every value up to `k` is reachable.
pub fn source_axiom(k: u64) -> AxiomInstance {
    let mut n1 = net_with("source", &["x"]);
    n1.add_transition("tau", Label::Silent, &[("x", 1)], &[])
        .unwrap();
    AxiomInstance {
        rule: "SOURCE",
        source: (n1, Marking::from_pairs([("x", k)])),
        target: (PetriNet::new("source_red"), Marking::new()),
        system: LinearSystem::from_constraints(vec![Constraint::new(
            LinExpr::var("x"),
            Cmp::Le,
            LinExpr::constant(k as i64),
        )]),
    }
}

/// One instance of every rule for the given token parameter.
pub fn axiom_instances(k: u64) -> Vec<AxiomInstance> {
    vec![
        concat_axiom(k),
        agg_axiom(k),
        red_axiom(k, k + 1),
        shortcut_axiom(k),
        redt_axiom(k),
        deadt_axiom(k),
        constant_axiom(k),
        source_axiom(k),
    ]
}

/// A constant place tested by a silent drain of a source place; reduces to
/// the empty net.
pub fn fully_reducible(constant: u64, source: u64) -> (PetriNet, Marking) {
    let mut net = net_with("full", &["c", "s"]);
    net.add_transition("tau", Label::Silent, &[("c", 1), ("s", 1)], &[("c", 1)])
        .unwrap();
    (net, Marking::from_pairs([("c", constant), ("s", source)]))
}
