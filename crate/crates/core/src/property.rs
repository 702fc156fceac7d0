//! Boolean combinations of linear atoms over markings.
//!
//! Formulas are kept in negation normal form: [`Formula::negate`] pushes the
//! negation down to the atoms, turning `¬(e ≥ k)` into `e ≤ k-1`, and turns an
//! existential block into a universal one.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::linear::{enumerate_solutions, Cmp, Constraint, LinExpr};
use crate::net::{FiringSequence, Marking, PetriNet};

/// Search bound for each existentially quantified variable during
/// evaluation.
pub const EXISTS_CUTOFF: u64 = 1 << 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("free variable `{0}` has no value")]
    Unbound(String),
    #[error("existential variables {0:?} are not bounded by the body; a solver is needed")]
    Unbounded(Vec<String>),
}

/// `expr cmp bound`, where `expr` carries no constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub bound: i64,
}

impl Atom {
    pub fn new(lhs: LinExpr, cmp: Cmp, rhs: LinExpr) -> Atom {
        let diff = lhs.minus(&rhs);
        Atom {
            bound: -diff.constant_term(),
            expr: diff.without_constant(),
            cmp,
        }
    }

    /// `lhs < rhs`, stored as `lhs <= rhs - 1`.
    pub fn lt(lhs: LinExpr, rhs: LinExpr) -> Atom {
        Atom::new(lhs.plus(&LinExpr::constant(1)), Cmp::Le, rhs)
    }

    /// `lhs > rhs`, stored as `lhs >= rhs + 1`.
    pub fn gt(lhs: LinExpr, rhs: LinExpr) -> Atom {
        Atom::new(lhs, Cmp::Ge, rhs.plus(&LinExpr::constant(1)))
    }

    pub fn ge(var: &str, k: i64) -> Atom {
        Atom::new(LinExpr::var(var), Cmp::Ge, LinExpr::constant(k))
    }

    pub fn le(var: &str, k: i64) -> Atom {
        Atom::new(LinExpr::var(var), Cmp::Le, LinExpr::constant(k))
    }

    pub fn eq(var: &str, k: i64) -> Atom {
        Atom::new(LinExpr::var(var), Cmp::Eq, LinExpr::constant(k))
    }

    pub fn from_constraint(c: &Constraint) -> Atom {
        Atom::new(c.lhs.clone(), c.cmp, c.rhs.clone())
    }

    pub fn negate(&self) -> Formula {
        match self.cmp {
            Cmp::Le => Formula::Atom(Atom {
                expr: self.expr.clone(),
                cmp: Cmp::Ge,
                bound: self.bound + 1,
            }),
            Cmp::Ge => Formula::Atom(Atom {
                expr: self.expr.clone(),
                cmp: Cmp::Le,
                bound: self.bound - 1,
            }),
            Cmp::Eq => Formula::Or(vec![
                Formula::Atom(Atom {
                    expr: self.expr.clone(),
                    cmp: Cmp::Le,
                    bound: self.bound - 1,
                }),
                Formula::Atom(Atom {
                    expr: self.expr.clone(),
                    cmp: Cmp::Ge,
                    bound: self.bound + 1,
                }),
            ]),
        }
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i64>) -> Result<bool, EvalError> {
        for v in self.expr.vars() {
            if env(v).is_none() {
                return Err(EvalError::Unbound(v.to_string()));
            }
        }
        let value = self.expr.eval(&env).expect("all variables bound");
        Ok(self.cmp.holds(value, self.bound))
    }

    /// Models are closed under increasing any variable.
    pub fn is_upward_closed(&self) -> bool {
        match self.cmp {
            Cmp::Ge => self.expr.terms().all(|(_, c)| c >= 0),
            Cmp::Le => self.expr.terms().all(|(_, c)| c <= 0),
            Cmp::Eq => false,
        }
    }

    /// As a constraint `expr - bound cmp 0`.
    pub fn normalized(&self) -> (LinExpr, Cmp) {
        (self.expr.minus(&LinExpr::constant(self.bound)), self.cmp)
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Atom {
        Atom {
            expr: self.expr.rename(f),
            cmp: self.cmp,
            bound: self.bound,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.expr, self.cmp.symbol(), self.bound)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Exists(Vec<String>, Box<Formula>),
    /// Negation of an existential block, kept as a universal one.
    Forall(Vec<String>, Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn exists(vars: Vec<String>, body: Formula) -> Formula {
        if vars.is_empty() {
            return body;
        }
        match body {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            body => Formula::Exists(vars, Box::new(body)),
        }
    }

    pub fn not(f: Formula) -> Formula {
        f.negate()
    }

    /// Negation in NNF.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(a) => a.negate(),
            Formula::And(ps) => Formula::or(ps.iter().map(Formula::negate)),
            Formula::Or(ps) => Formula::and(ps.iter().map(Formula::negate)),
            Formula::Exists(vs, b) => Formula::Forall(vs.clone(), Box::new(b.negate())),
            Formula::Forall(vs, b) => Formula::Exists(vs.clone(), Box::new(b.negate())),
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::And(ps) | Formula::Or(ps) => ps.iter().all(Formula::is_quantifier_free),
            Formula::Exists(..) | Formula::Forall(..) => false,
        }
    }

    /// Conjunction of atoms only.
    pub fn is_cube(&self) -> bool {
        match self {
            Formula::True | Formula::Atom(_) => true,
            Formula::And(ps) => ps.iter().all(|p| matches!(p, Formula::Atom(_))),
            _ => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                for v in a.expr.vars() {
                    if !bound.iter().any(|b| b == v) {
                        out.insert(v.to_string());
                    }
                }
            }
            Formula::And(ps) | Formula::Or(ps) => {
                for p in ps {
                    p.collect_free(bound, out);
                }
            }
            Formula::Exists(vs, b) | Formula::Forall(vs, b) => {
                let n = bound.len();
                bound.extend(vs.iter().cloned());
                b.collect_free(bound, out);
                bound.truncate(n);
            }
        }
    }

    /// Renames free variables; bound variables are left alone.
    pub fn rename_free(&self, f: &impl Fn(&str) -> String) -> Formula {
        self.rename_inner(f, &mut Vec::new())
    }

    fn rename_inner(&self, f: &impl Fn(&str) -> String, bound: &mut Vec<String>) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(a.rename(&|v: &str| {
                if bound.iter().any(|b| b == v) {
                    v.to_string()
                } else {
                    f(v)
                }
            })),
            Formula::And(ps) => Formula::And(ps.iter().map(|p| p.rename_inner(f, bound)).collect()),
            Formula::Or(ps) => Formula::Or(ps.iter().map(|p| p.rename_inner(f, bound)).collect()),
            Formula::Exists(vs, b) | Formula::Forall(vs, b) => {
                let n = bound.len();
                bound.extend(vs.iter().cloned());
                let body = b.rename_inner(f, bound);
                bound.truncate(n);
                if matches!(self, Formula::Exists(..)) {
                    Formula::Exists(vs.clone(), Box::new(body))
                } else {
                    Formula::Forall(vs.clone(), Box::new(body))
                }
            }
        }
    }

    /// Every variable name occurring anywhere, bound or free.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| out.extend(a.expr.vars().map(str::to_string)));
        if let Formula::Exists(vs, _) | Formula::Forall(vs, _) = self {
            out.extend(vs.iter().cloned());
        }
        out
    }

    pub fn visit_atoms(&self, f: &mut impl FnMut(&Atom)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => f(a),
            Formula::And(ps) | Formula::Or(ps) => {
                for p in ps {
                    p.visit_atoms(f);
                }
            }
            Formula::Exists(_, b) | Formula::Forall(_, b) => b.visit_atoms(f),
        }
    }

    /// Evaluation under a valuation of the free variables. Quantified
    /// variables range over the nonnegative integers.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i64>) -> Result<bool, EvalError> {
        match self {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Atom(a) => a.eval(env),
            Formula::And(ps) => {
                for p in ps {
                    if !p.eval(env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Or(ps) => {
                for p in ps {
                    if p.eval(env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Exists(vs, body) => eval_exists(vs, body, env),
            Formula::Forall(vs, body) => Ok(!eval_exists(vs, &body.negate(), env)?),
        }
    }

    /// `m ⊨ self`, with the net's places as the only free variables allowed.
    pub fn evaluate(&self, net: &PetriNet, m: &Marking) -> Result<bool, EvalError> {
        self.eval(&|v: &str| net.has_place(v).then(|| m.get(v) as i64))
    }

    /// `m ⊨ self` over an explicit place list.
    pub fn evaluate_over<S: AsRef<str>>(&self, places: &[S], m: &Marking) -> Result<bool, EvalError> {
        self.eval(&|v: &str| {
            places
                .iter()
                .any(|p| p.as_ref() == v)
                .then(|| m.get(v) as i64)
        })
    }

    /// Syntactic sufficient condition for upward closure: And/Or over atoms
    /// `Σ aᵢxᵢ ≥ k` with every `aᵢ ≥ 0`.
    pub fn is_syntactically_monotonic_goal(&self) -> bool {
        match self {
            Formula::True | Formula::False => true,
            Formula::Atom(a) => a.is_upward_closed(),
            Formula::And(ps) | Formula::Or(ps) => {
                ps.iter().all(Formula::is_syntactically_monotonic_goal)
            }
            Formula::Exists(..) | Formula::Forall(..) => false,
        }
    }
}

fn flatten_conjuncts<'a>(f: &'a Formula, atoms: &mut Vec<&'a Atom>) {
    match f {
        Formula::Atom(a) => atoms.push(a),
        Formula::And(ps) => {
            for p in ps {
                flatten_conjuncts(p, atoms);
            }
        }
        _ => {}
    }
}

fn eval_exists(
    vars: &[String],
    body: &Formula,
    env: &dyn Fn(&str) -> Option<i64>,
) -> Result<bool, EvalError> {
    let mut atoms = Vec::new();
    flatten_conjuncts(body, &mut atoms);
    let mut fixed = HashMap::new();
    let mut rows = Vec::with_capacity(atoms.len());
    for a in atoms {
        for v in a.expr.vars() {
            if vars.iter().any(|b| b == v) {
                continue;
            }
            let value = env(v).ok_or_else(|| EvalError::Unbound(v.to_string()))?;
            fixed.insert(v.to_string(), value);
        }
        rows.push(a.normalized());
    }
    let found = enumerate_solutions(&rows, &fixed, vars, EXISTS_CUTOFF);
    if found.truncated {
        return Err(EvalError::Unbounded(vars.to_vec()));
    }
    for sol in &found.solutions {
        let inner = |v: &str| match vars.iter().position(|b| b == v) {
            Some(i) => Some(sol[i]),
            None => env(v),
        };
        if body.eval(&inner)? {
            return Ok(true);
        }
    }
    Ok(false)
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::And(ps) | Formula::Or(ps) => {
                let op = if matches!(self, Formula::And(_)) { " and " } else { " or " };
                write!(f, "(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{op}")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Formula::Exists(vs, b) => write!(f, "(exists {} : {b})", vs.join(" ")),
            Formula::Forall(vs, b) => write!(f, "(forall {} : {b})", vs.join(" ")),
        }
    }
}

/// `ENBL_t`: conjunction of `p ≥ Pre(t,p)` over the places with nonzero `Pre`.
pub fn enabled_predicate(net: &PetriNet, t: &str) -> Result<Formula, crate::net::NetError> {
    let ti = net.transition(t)?;
    Ok(enabled_predicate_at(net, ti))
}

pub fn enabled_predicate_at(net: &PetriNet, t: usize) -> Formula {
    Formula::and(
        net.transition_at(t)
            .pre()
            .iter()
            .map(|&(p, w)| Formula::Atom(Atom::ge(net.place_name(p), w as i64))),
    )
}

/// `DEAD`: no transition is enabled.
pub fn dead_predicate(net: &PetriNet) -> Formula {
    Formula::and((0..net.num_transitions()).map(|t| enabled_predicate_at(net, t).negate()))
}

/// `BND_k`: every place holds at most `k` tokens.
pub fn bounded_predicate(net: &PetriNet, k: u64) -> Formula {
    Formula::and(
        net.places()
            .iter()
            .map(|p| Formula::Atom(Atom::le(p, k as i64))),
    )
}

/// The cube `⋀ p = m(p)` over the given places.
pub fn marking_cube<S: AsRef<str>>(places: &[S], m: &Marking) -> Formula {
    Formula::and(
        places
            .iter()
            .map(|p| Formula::Atom(Atom::eq(p.as_ref(), m.get(p.as_ref()) as i64))),
    )
}

/// `⋀ p ≥ m(p)`, omitting zero entries: the markings covering `m`.
pub fn cover_formula(m: &Marking) -> Formula {
    Formula::and(m.iter().map(|(p, k)| Formula::Atom(Atom::ge(p, k as i64))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    /// `EF φ`: some reachable marking satisfies φ.
    Ef,
    /// `AG φ`: every reachable marking satisfies φ.
    Ag,
}

impl fmt::Display for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantifier::Ef => write!(f, "EF"),
            Quantifier::Ag => write!(f, "AG"),
        }
    }
}

/// A firing sequence together with the marking it reaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub sequence: FiringSequence,
    pub marking: Marking,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Reachable(Option<Witness>),
    Unreachable,
    Invariant,
    NotInvariant(Option<Witness>),
    Unknown(String),
}

impl Verdict {
    pub fn is_definitive(&self) -> bool {
        !matches!(self, Verdict::Unknown(_))
    }

    /// Truth value of the query `EF φ` / `AG φ` this verdict answers.
    pub fn truth(&self) -> Option<bool> {
        match self {
            Verdict::Reachable(_) | Verdict::Invariant => Some(true),
            Verdict::Unreachable | Verdict::NotInvariant(_) => Some(false),
            Verdict::Unknown(_) => None,
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Reachable(w) | Verdict::NotInvariant(w) => w.as_ref(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use proptest::prelude::*;

    fn two_place_net() -> PetriNet {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_place("q").unwrap();
        net.add_observable("t", &[("p", 2)], &[("q", 1)]).unwrap();
        net.add_observable("u", &[], &[("p", 1)]).unwrap();
        net
    }

    #[test]
    fn trivial_atoms_and_connectives() {
        let net = two_place_net();
        let m = Marking::from_pairs([("p", 2)]);
        let taut = Formula::Atom(Atom::new(LinExpr::zero(), Cmp::Le, LinExpr::zero()));
        assert!(taut.evaluate(&net, &m).unwrap());
        let f = Formula::and([
            Formula::Atom(Atom::ge("p", 1)),
            Formula::not(Formula::Atom(Atom::ge("p", 3))),
        ]);
        assert!(f.evaluate(&net, &m).unwrap());
    }

    #[test]
    fn unbound_variable_is_reported() {
        let net = two_place_net();
        let f = Formula::Atom(Atom::ge("zz", 1));
        assert_eq!(
            f.evaluate(&net, &Marking::new()),
            Err(EvalError::Unbound("zz".into()))
        );
    }

    #[test]
    fn strict_comparators_normalize() {
        let a = Atom::gt(LinExpr::var("p"), LinExpr::constant(2));
        assert_eq!((a.cmp, a.bound), (Cmp::Ge, 3));
        let a = Atom::lt(LinExpr::var("p"), LinExpr::constant(2));
        assert_eq!((a.cmp, a.bound), (Cmp::Le, 1));
    }

    #[test]
    fn running_example_fact_after_substitution() {
        let (net, _) = samples::running_example();
        let m1 = Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)]);
        let e = samples::running_example_system();
        // ∃ a1 a2. E ∧ p0 = 3 ∧ p6 = 3 ∧ a2 = 1
        let body = Formula::and(
            e.constraints()
                .iter()
                .map(|c| Formula::Atom(Atom::from_constraint(c)))
                .chain([
                    Formula::Atom(Atom::eq("p0", 3)),
                    Formula::Atom(Atom::eq("p6", 3)),
                    Formula::Atom(Atom::eq("a2", 1)),
                ]),
        );
        let f = Formula::exists(vec!["a1".into(), "a2".into()], body);
        assert!(f.evaluate(&net, &m1).unwrap());
        let wrong = Formula::exists(
            vec!["a2".into()],
            Formula::and([
                Formula::Atom(Atom::new(
                    LinExpr::var("a2"),
                    Cmp::Eq,
                    LinExpr::sum(["p3", "p4"]),
                )),
                Formula::Atom(Atom::eq("a2", 2)),
            ]),
        );
        assert!(!wrong.evaluate(&net, &m1).unwrap());
    }

    #[test]
    fn enabled_predicate_shapes() {
        let net = two_place_net();
        assert_eq!(enabled_predicate(&net, "u").unwrap(), Formula::True);
        assert_eq!(
            enabled_predicate(&net, "t").unwrap(),
            Formula::Atom(Atom::ge("p", 2))
        );
        assert!(enabled_predicate(&net, "zz").is_err());
    }

    #[test]
    fn dead_predicate_edge_cases() {
        let net = two_place_net();
        assert_eq!(dead_predicate(&net), Formula::False);
        let mut empty = PetriNet::new("e");
        empty.add_place("p").unwrap();
        assert_eq!(dead_predicate(&empty), Formula::True);
    }

    #[test]
    fn bounded_predicate_cases() {
        let mut net = PetriNet::new("n");
        net.add_place("p").unwrap();
        net.add_place("q").unwrap();
        let bnd0 = bounded_predicate(&net, 0);
        assert!(bnd0.evaluate(&net, &Marking::new()).unwrap());
        assert!(!bnd0.evaluate(&net, &Marking::from_pairs([("q", 1)])).unwrap());
        let bnd1 = bounded_predicate(&net, 1);
        assert!(bnd1.evaluate(&net, &Marking::from_pairs([("p", 1), ("q", 1)])).unwrap());
        assert!(!bnd1.evaluate(&net, &Marking::from_pairs([("p", 2)])).unwrap());
    }

    #[test]
    fn monotonic_fragment() {
        let (net, _) = samples::running_example();
        for t in net.transitions() {
            assert!(enabled_predicate(&net, t.name())
                .unwrap()
                .is_syntactically_monotonic_goal());
        }
        assert!(!dead_predicate(&net).is_syntactically_monotonic_goal());
        let f = Formula::or([
            Formula::Atom(Atom::ge("p", 1)),
            Formula::Atom(Atom::new(LinExpr::sum(["q", "r"]), Cmp::Ge, LinExpr::constant(3))),
        ]);
        assert!(f.is_syntactically_monotonic_goal());
        assert!(!Formula::Atom(Atom::eq("p", 1)).is_syntactically_monotonic_goal());
    }

    #[test]
    fn exists_without_bounds_needs_solver() {
        let f = Formula::exists(
            vec!["z".into()],
            Formula::Atom(Atom::new(LinExpr::var("z"), Cmp::Ge, LinExpr::var("p"))),
        );
        let net = two_place_net();
        assert!(matches!(
            f.evaluate(&net, &Marking::new()),
            Err(EvalError::Unbounded(_))
        ));
    }

    fn arb_atom() -> impl Strategy<Value = Atom> {
        (
            prop::collection::vec((0usize..3, -2i64..=3), 1..3),
            prop_oneof![Just(Cmp::Eq), Just(Cmp::Le), Just(Cmp::Ge)],
            -2i64..6,
        )
            .prop_map(|(terms, cmp, k)| {
                let mut e = LinExpr::zero();
                for (v, c) in terms {
                    e.add_term(c, ["p", "q", "r"][v]);
                }
                Atom::new(e, cmp, LinExpr::constant(k))
            })
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        arb_atom().prop_map(Formula::Atom).prop_recursive(3, 12, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::and),
                prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::or),
                inner.prop_map(|f| f.negate()),
            ]
        })
    }

    fn arb_monotone() -> impl Strategy<Value = Formula> {
        let atom = (prop::collection::vec((0usize..3, 0i64..=2), 1..3), 0i64..5).prop_map(
            |(terms, k)| {
                let mut e = LinExpr::zero();
                for (v, c) in terms {
                    e.add_term(c, ["p", "q", "r"][v]);
                }
                Formula::Atom(Atom::new(e, Cmp::Ge, LinExpr::constant(k)))
            },
        );
        atom.prop_recursive(3, 12, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::and),
                prop::collection::vec(inner, 1..3).prop_map(Formula::or),
            ]
        })
    }

    fn arb_marking() -> impl Strategy<Value = Marking> {
        prop::collection::vec(0u64..5, 3)
            .prop_map(|v| Marking::from_pairs(["p", "q", "r"].into_iter().zip(v)))
    }

    const PLACES: [&str; 3] = ["p", "q", "r"];

    proptest! {
        #[test]
        fn double_negation_preserves_meaning(f in arb_formula(), m in arb_marking()) {
            let a = f.evaluate_over(&PLACES, &m).unwrap();
            let neg = f.negate();
            prop_assert_eq!(neg.evaluate_over(&PLACES, &m).unwrap(), !a);
            prop_assert_eq!(neg.negate().evaluate_over(&PLACES, &m).unwrap(), a);
        }

        #[test]
        fn monotone_goals_are_upward_closed(f in arb_monotone(), m in arb_marking(), d in arb_marking()) {
            prop_assert!(f.is_syntactically_monotonic_goal());
            let mut bigger = m.clone();
            for (p, k) in d.iter() {
                bigger.set(p, m.get(p) + k);
            }
            if f.evaluate_over(&PLACES, &m).unwrap() {
                prop_assert!(f.evaluate_over(&PLACES, &bigger).unwrap());
            }
        }

        #[test]
        fn marking_cube_identifies_marking(m in arb_marking(), m2 in arb_marking()) {
            let cube = marking_cube(&PLACES, &m);
            prop_assert_eq!(cube.evaluate_over(&PLACES, &m2).unwrap(), m == m2);
        }
    }
}
