//! Structural reductions driven to a fixpoint.
//!
//! Each applied rule yields a [`ReductionStep`] relating the net before and
//! after the step through a few linear equations. The conjunction of all step
//! equations, in order, is the system `E` tying the initial net to the final
//! one.

mod rules;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::linear::{Cmp, LinearSystem};
use crate::net::{Marking, PetriNet};

pub use rules::{
    try_agg, try_concat, try_constant, try_dead_transition, try_redundant_place,
    try_redundant_transition, try_shortcut, try_source, Applied, FreshNames,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Concat,
    Agg,
    Red,
    Shortcut,
    Redt,
    Deadt,
    Constant,
    Source,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::Concat,
        Rule::Agg,
        Rule::Red,
        Rule::Shortcut,
        Rule::Redt,
        Rule::Deadt,
        Rule::Constant,
        Rule::Source,
    ];

    /// Default application order: garbage collection first, then twin
    /// places, agglomerations, and the three-place invariant.
    pub const PRIORITY: [Rule; 8] = [
        Rule::Deadt,
        Rule::Redt,
        Rule::Constant,
        Rule::Red,
        Rule::Concat,
        Rule::Agg,
        Rule::Shortcut,
        Rule::Source,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Concat => "CONCAT",
            Rule::Agg => "AGG",
            Rule::Red => "RED",
            Rule::Shortcut => "SHORTCUT",
            Rule::Redt => "REDT",
            Rule::Deadt => "DEADT",
            Rule::Constant => "CONSTANT",
            Rule::Source => "SOURCE",
        }
    }

    pub fn try_apply(self, net: &PetriNet, m: &Marking, fresh: &mut FreshNames) -> Option<Applied> {
        match self {
            Rule::Concat => try_concat(net, m, fresh),
            Rule::Agg => try_agg(net, m, fresh),
            Rule::Red => try_redundant_place(net, m),
            Rule::Shortcut => try_shortcut(net, m),
            Rule::Redt => try_redundant_transition(net, m),
            Rule::Deadt => try_dead_transition(net, m),
            Rule::Constant => try_constant(net, m),
            Rule::Source => try_source(net, m),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionStep {
    pub rule: Rule,
    /// Places and transitions the rule matched, in pattern order.
    pub matched: Vec<String>,
    pub equations: LinearSystem,
    pub fresh_vars: Vec<String>,
    pub removed_places: Vec<String>,
    pub removed_transitions: Vec<String>,
    /// Net and marking after the step, if the policy keeps them.
    pub result: Option<(PetriNet, Marking)>,
}

impl ReductionStep {
    /// Whether every equation lets any increase of the after-step places be
    /// matched by an increase of the before-step places. This holds for
    /// three shapes: a removed place equal to a nonnegative combination of
    /// kept places plus a constant, a fresh place equal to a nonnegative sum
    /// of removed places, and an upper bound on a removed place.
    pub fn is_upward_extendable(&self) -> bool {
        let removed: BTreeSet<&str> = self.removed_places.iter().map(String::as_str).collect();
        let fresh: BTreeSet<&str> = self.fresh_vars.iter().map(String::as_str).collect();
        self.equations.constraints().iter().all(|c| {
            let (e, cmp) = c.normalized();
            // e = lhs - rhs
            let vars: Vec<(&str, i64)> = e.terms().collect();
            match cmp {
                Cmp::Le => {
                    vars.len() == 1 && vars[0].1 > 0 && removed.contains(vars[0].0)
                }
                Cmp::Ge => {
                    vars.len() == 1 && vars[0].1 < 0 && removed.contains(vars[0].0)
                }
                Cmp::Eq => {
                    let pivot = vars
                        .iter()
                        .filter(|(v, c)| c.abs() == 1 && (removed.contains(v) || fresh.contains(v)))
                        .find(|(v, c)| {
                            vars.iter().all(|(w, d)| {
                                w == v
                                    || (d.signum() == -c.signum()
                                        && if fresh.contains(v) {
                                            removed.contains(w)
                                        } else {
                                            !removed.contains(w)
                                        })
                            })
                        });
                    pivot.is_some()
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducePolicy {
    pub max_steps: usize,
    /// Rules in the order they are tried at each iteration.
    pub rules: Vec<Rule>,
    pub keep_intermediate: bool,
}

impl Default for ReducePolicy {
    fn default() -> Self {
        ReducePolicy {
            max_steps: 10_000,
            rules: Rule::PRIORITY.to_vec(),
            keep_intermediate: true,
        }
    }
}

impl ReducePolicy {
    /// No rule enabled; `reduce` returns the identity trace.
    pub fn none() -> Self {
        ReducePolicy {
            rules: Vec::new(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionTrace {
    pub initial_net: PetriNet,
    pub initial_marking: Marking,
    pub steps: Vec<ReductionStep>,
    pub net: PetriNet,
    pub marking: Marking,
    pub system: LinearSystem,
    /// The step cap was hit before a fixpoint.
    pub truncated: bool,
}

impl ReductionTrace {
    pub fn identity(net: &PetriNet, m: &Marking) -> Self {
        ReductionTrace {
            initial_net: net.clone(),
            initial_marking: m.clone(),
            steps: Vec::new(),
            net: net.clone(),
            marking: m.clone(),
            system: LinearSystem::new(),
            truncated: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn fresh_vars(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .flat_map(|s| s.fresh_vars.iter().map(String::as_str))
    }

    pub fn is_upward_extendable(&self) -> bool {
        self.steps.iter().all(ReductionStep::is_upward_extendable)
    }

    /// Variables of `system` that are neither initial nor final places.
    pub fn internal_vars(&self) -> BTreeSet<String> {
        let mut vars = self.system.vars();
        for p in self.initial_net.places().iter().chain(self.net.places()) {
            vars.remove(p);
        }
        vars
    }

    pub fn ratio(&self) -> Ratio<u64> {
        reduction_ratio(self)
    }
}

/// Applies the policy's rules until none matches or the step cap is reached.
pub fn reduce(net: &PetriNet, m: &Marking, policy: &ReducePolicy) -> ReductionTrace {
    let mut trace = ReductionTrace::identity(net, m);
    let mut fresh = FreshNames::for_net(net);
    let mut current = net.clone();
    let mut marking = m.clone();
    loop {
        let applied = policy
            .rules
            .iter()
            .find_map(|r| r.try_apply(&current, &marking, &mut fresh));
        let Some(applied) = applied else { break };
        if trace.steps.len() >= policy.max_steps {
            trace.truncated = true;
            break;
        }
        log::debug!(
            "{} on {:?}: {}",
            applied.step.rule,
            applied.step.matched,
            applied.step.equations
        );
        let mut step = applied.step;
        trace.system.extend(&step.equations);
        current = applied.net;
        marking = applied.marking;
        if policy.keep_intermediate {
            step.result = Some((current.clone(), marking.clone()));
        }
        trace.steps.push(step);
    }
    trace.net = current;
    trace.marking = marking;
    trace
}

/// `(p_init - p_red) / p_init`, or zero for a net without places.
pub fn reduction_ratio(trace: &ReductionTrace) -> Ratio<u64> {
    let init = trace.initial_net.num_places() as u64;
    let red = trace.net.num_places() as u64;
    if init == 0 {
        return Ratio::from_integer(0);
    }
    Ratio::new(init.saturating_sub(red), init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{Constraint, LinExpr};
    use crate::net::Label;
    use crate::samples;

    fn rules_of(trace: &ReductionTrace) -> Vec<Rule> {
        trace.steps.iter().map(|s| s.rule).collect()
    }

    #[test]
    fn running_example_trace() {
        let (net, m0) = samples::running_example();
        let trace = reduce(&net, &m0, &ReducePolicy::default());
        assert_eq!(
            rules_of(&trace),
            [Rule::Red, Rule::Concat, Rule::Concat, Rule::Red]
        );
        assert_eq!(
            trace.system.to_text(),
            "p5 = p4\na1 = p1 + p2\na2 = p3 + p4\na1 = a2\n"
        );
        let (m2, m2_0) = samples::running_example_reduced();
        assert_eq!(trace.net.places(), m2.places());
        assert_eq!(trace.marking, m2_0);
        for t in m2.transitions() {
            let got = trace.net.transition_at(trace.net.transition(t.name()).unwrap());
            assert_eq!(got.pre(), t.pre());
            assert_eq!(got.post(), t.post());
            assert_eq!(got.label(), t.label());
        }
        assert_eq!(trace.net.num_transitions(), 3);
        assert_eq!(trace.ratio(), Ratio::new(4, 7));
        assert!(trace.is_upward_extendable());
        assert!(!trace.truncated);
    }

    #[test]
    fn irreducible_net_gives_empty_trace() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_place("q").unwrap();
        net.add_observable("t", &[("p", 1)], &[("q", 1)]).unwrap();
        net.add_observable("u", &[("q", 1)], &[("p", 1)]).unwrap();
        let m = Marking::from_pairs([("p", 1)]);
        let trace = reduce(&net, &m, &ReducePolicy::default());
        assert!(trace.is_identity());
        assert_eq!(trace.net, net);
        assert_eq!(trace.marking, m);
        assert_eq!(trace.ratio(), Ratio::from_integer(0));
    }

    #[test]
    fn fully_reducible_ratio_is_one() {
        let (net, m) = samples::fully_reducible(2, 3);
        let trace = reduce(&net, &m, &ReducePolicy::default());
        assert_eq!(trace.net.num_places(), 0);
        assert_eq!(trace.ratio(), Ratio::from_integer(1));
        assert_eq!(rules_of(&trace), [Rule::Constant, Rule::Source]);
        assert_eq!(trace.system.to_text(), "c = 2\ns <= 3\n");
    }

    #[test]
    fn empty_net_ratio_is_zero() {
        let net = PetriNet::new("e");
        let trace = reduce(&net, &Marking::new(), &ReducePolicy::default());
        assert_eq!(reduction_ratio(&trace), Ratio::from_integer(0));
    }

    #[test]
    fn step_cap_truncates() {
        let (net, m0) = samples::running_example();
        let policy = ReducePolicy {
            max_steps: 2,
            ..Default::default()
        };
        let trace = reduce(&net, &m0, &policy);
        assert!(trace.truncated);
        assert_eq!(trace.steps.len(), 2);
    }

    #[test]
    fn axioms_reduce_to_their_targets() {
        for k in 0..4 {
            for inst in samples::axiom_instances(k) {
                let (n1, m1) = &inst.source;
                let rule: Rule = inst.rule.parse().unwrap();
                let policy = ReducePolicy {
                    rules: vec![rule, Rule::Deadt],
                    ..Default::default()
                };
                let trace = reduce(n1, m1, &policy);
                assert!(
                    trace.steps.iter().any(|s| s.rule == rule),
                    "{} at k={k}: {:?}",
                    inst.rule,
                    rules_of(&trace)
                );
                let (n2, m2) = &inst.target;
                assert_eq!(trace.net.num_places(), n2.num_places(), "{}", inst.rule);
                assert_eq!(
                    trace.net.num_transitions(),
                    n2.num_transitions(),
                    "{} at k={k}",
                    inst.rule
                );
                assert_eq!(trace.marking.total(), m2.total(), "{}", inst.rule);
            }
        }
    }

    #[test]
    fn dominated_transition_removal_enables_red() {
        let mut net = PetriNet::new("n");
        for p in ["p", "q", "y", "z"] {
            net.add_place(p).unwrap();
        }
        net.add_observable("a", &[], &[("p", 1), ("y", 1), ("z", 1)])
            .unwrap();
        net.add_transition("t3", Label::Silent, &[("p", 1), ("z", 1)], &[("q", 1), ("z", 1)])
            .unwrap();
        net.add_transition("t4", Label::Silent, &[("p", 1)], &[("q", 1)])
            .unwrap();
        net.add_observable("b", &[("q", 1), ("y", 1), ("z", 1)], &[])
            .unwrap();
        let m = Marking::new();
        assert!(try_redundant_place(&net, &m).is_none());
        let redt = try_redundant_transition(&net, &m).unwrap();
        assert_eq!(redt.step.removed_transitions, ["t3"]);
        let red = try_redundant_place(&redt.net, &redt.marking).unwrap();
        assert_eq!(red.step.removed_places, ["z"]);
    }

    #[test]
    fn fresh_names_skip_existing() {
        let mut net = PetriNet::new("n");
        net.add_place("a1").unwrap();
        net.add_place("y1").unwrap();
        net.add_place("y2").unwrap();
        net.add_observable("a2", &[], &[("y1", 1)]).unwrap();
        net.add_transition("tau", Label::Silent, &[("y1", 1)], &[("y2", 1)])
            .unwrap();
        net.add_observable("c", &[("y2", 1)], &[("a1", 1)]).unwrap();
        let mut fresh = FreshNames::for_net(&net);
        let applied = try_concat(&net, &Marking::new(), &mut fresh).unwrap();
        assert_eq!(applied.step.fresh_vars, ["a3"]);
        assert_eq!(fresh.next_name(), "a4");
    }

    #[test]
    fn upward_extendable_shapes() {
        let step = |eqs: Vec<Constraint>, removed: &[&str], fresh: &[&str]| ReductionStep {
            rule: Rule::Red,
            matched: vec![],
            equations: LinearSystem::from_constraints(eqs),
            fresh_vars: fresh.iter().map(|s| s.to_string()).collect(),
            removed_places: removed.iter().map(|s| s.to_string()).collect(),
            removed_transitions: vec![],
            result: None,
        };
        let z_eq = Constraint::eq(LinExpr::var("z"), LinExpr::sum(["y1", "y2"]).plus(&LinExpr::constant(2)));
        assert!(step(vec![z_eq.clone()], &["z"], &[]).is_upward_extendable());
        assert!(!step(vec![z_eq], &["y1"], &[]).is_upward_extendable());
        let x_eq = Constraint::eq(LinExpr::var("x"), LinExpr::sum(["y1", "y2"]));
        assert!(step(vec![x_eq], &["y1", "y2"], &["x"]).is_upward_extendable());
        let diff = Constraint::eq(LinExpr::var("z"), LinExpr::var("y").minus(&LinExpr::var("w")));
        assert!(!step(vec![diff], &["z"], &[]).is_upward_extendable());
        let le = Constraint::le(LinExpr::var("x"), LinExpr::constant(3));
        assert!(step(vec![le], &["x"], &[]).is_upward_extendable());
    }
}
