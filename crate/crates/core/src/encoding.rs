//! QF_LIA terms for net semantics and their SMT-LIB text.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::linear::{Cmp, LinExpr};
use crate::net::{Marking, PetriNet};
use crate::property::{Atom, Formula};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("variable `{0}` used before its declaration")]
    Undeclared(String),
    #[error("universal quantifier over {0:?} cannot be expressed without quantifiers")]
    Universal(Vec<String>),
    #[error("free variable `{0}` has no encoding")]
    Unmapped(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Le => "<=",
            Rel::Ge => ">=",
            Rel::Lt => "<",
            Rel::Gt => ">",
        }
    }
}

impl From<Cmp> for Rel {
    fn from(c: Cmp) -> Self {
        match c {
            Cmp::Eq => Rel::Eq,
            Cmp::Le => Rel::Le,
            Cmp::Ge => Rel::Ge,
        }
    }
}

/// Integer and Boolean terms. Integer subterms are `Int`, `Var`, `Add` and
/// `Mul`; everything else is Boolean.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Bool(bool),
    Int(i64),
    Var(String),
    Add(Vec<Term>),
    Mul(i64, Box<Term>),
    Rel(Rel, Box<Term>, Box<Term>),
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn rel(r: Rel, a: Term, b: Term) -> Term {
        Term::Rel(r, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::rel(Rel::Eq, a, b)
    }

    pub fn ge(a: Term, b: Term) -> Term {
        Term::rel(Rel::Ge, a, b)
    }

    pub fn le(a: Term, b: Term) -> Term {
        Term::rel(Rel::Le, a, b)
    }

    pub fn not(t: Term) -> Term {
        match t {
            Term::Bool(b) => Term::Bool(!b),
            Term::Not(inner) => *inner,
            t => Term::Not(Box::new(t)),
        }
    }

    pub fn and(parts: impl IntoIterator<Item = Term>) -> Term {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Term::Bool(true) => {}
                Term::Bool(false) => return Term::Bool(false),
                Term::And(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Term::Bool(true),
            1 => out.pop().unwrap(),
            _ => Term::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Term>) -> Term {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Term::Bool(false) => {}
                Term::Bool(true) => return Term::Bool(true),
                Term::Or(inner) => out.extend(inner),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Term::Bool(false),
            1 => out.pop().unwrap(),
            _ => Term::Or(out),
        }
    }

    /// `Σ coeff·var + constant` with each variable passed through `map`.
    pub fn linear(e: &LinExpr, map: &dyn Fn(&str) -> String) -> Term {
        let mut parts: Vec<Term> = e
            .terms()
            .map(|(v, c)| {
                if c == 1 {
                    Term::Var(map(v))
                } else {
                    Term::Mul(c, Box::new(Term::Var(map(v))))
                }
            })
            .collect();
        if e.constant_term() != 0 || parts.is_empty() {
            parts.push(Term::Int(e.constant_term()));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Term::Add(parts)
        }
    }

    pub fn atom(a: &Atom, map: &dyn Fn(&str) -> String) -> Term {
        Term::rel(a.cmp.into(), Term::linear(&a.expr, map), Term::Int(a.bound))
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Term::Bool(_) | Term::Int(_) => {}
            Term::Var(v) => {
                out.insert(v);
            }
            Term::Mul(_, t) | Term::Not(t) => t.collect_vars(out),
            Term::Rel(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Add(ts) | Term::And(ts) | Term::Or(ts) => {
                for t in ts {
                    t.collect_vars(out);
                }
            }
        }
    }

    /// Size in nodes, used for emission budgets.
    pub fn size(&self) -> usize {
        match self {
            Term::Bool(_) | Term::Int(_) | Term::Var(_) => 1,
            Term::Mul(_, t) | Term::Not(t) => 1 + t.size(),
            Term::Rel(_, a, b) => 1 + a.size() + b.size(),
            Term::Add(ts) | Term::And(ts) | Term::Or(ts) => 1 + ts.iter().map(Term::size).sum::<usize>(),
        }
    }
}

fn is_simple_symbol(s: &str) -> bool {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    !s.is_empty()
        && !s.as_bytes()[0].is_ascii_digit()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c))
}

/// SMT-LIB symbol for a name, quoted with `|…|` when needed.
pub fn symbol(name: &str) -> String {
    if is_simple_symbol(name) {
        name.to_string()
    } else {
        // `|` and `\` cannot appear inside a quoted symbol
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Term::Int(k) if *k < 0 => {
            let _ = write!(out, "(- {})", k.unsigned_abs());
        }
        Term::Int(k) => {
            let _ = write!(out, "{k}");
        }
        Term::Var(v) => out.push_str(&symbol(v)),
        Term::Mul(c, t) => {
            out.push_str("(* ");
            write_term(&Term::Int(*c), out);
            out.push(' ');
            write_term(t, out);
            out.push(')');
        }
        Term::Rel(r, a, b) => {
            let _ = write!(out, "({} ", r.symbol());
            write_term(a, out);
            out.push(' ');
            write_term(b, out);
            out.push(')');
        }
        Term::Not(t) => {
            out.push_str("(not ");
            write_term(t, out);
            out.push(')');
        }
        Term::Add(ts) | Term::And(ts) | Term::Or(ts) => {
            let (op, empty) = match t {
                Term::Add(_) => ("+", "0"),
                Term::And(_) => ("and", "true"),
                _ => ("or", "false"),
            };
            match ts.len() {
                0 => out.push_str(empty),
                1 => write_term(&ts[0], out),
                _ => {
                    out.push('(');
                    out.push_str(op);
                    for t in ts {
                        out.push(' ');
                        write_term(t, out);
                    }
                    out.push(')');
                }
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_term(self, &mut s);
        f.write_str(&s)
    }
}

/// Solver commands, one per line when serialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    SetLogic(String),
    SetOption(String, String),
    DeclareConst(String),
    Assert(Term, Option<String>),
    CheckSat,
    GetValue(Vec<String>),
    GetUnsatCore,
    Push,
    Pop,
    Exit,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::SetLogic(l) => write!(f, "(set-logic {l})"),
            Command::SetOption(k, v) => write!(f, "(set-option :{k} {v})"),
            Command::DeclareConst(v) => write!(f, "(declare-const {} Int)", symbol(v)),
            Command::Assert(t, None) => write!(f, "(assert {t})"),
            Command::Assert(t, Some(l)) => write!(f, "(assert (! {t} :named {}))", symbol(l)),
            Command::CheckSat => write!(f, "(check-sat)"),
            Command::GetValue(vs) => {
                write!(f, "(get-value (")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{}", symbol(v))?;
                }
                write!(f, "))")
            }
            Command::GetUnsatCore => write!(f, "(get-unsat-core)"),
            Command::Push => write!(f, "(push 1)"),
            Command::Pop => write!(f, "(pop 1)"),
            Command::Exit => write!(f, "(exit)"),
        }
    }
}

/// Serializes a command list, checking that every variable is declared
/// before it is used. Scoping follows push/pop.
pub fn serialize(commands: &[Command]) -> Result<String, EncodingError> {
    let mut scopes: Vec<BTreeSet<String>> = vec![BTreeSet::new()];
    let declared = |v: &str, scopes: &[BTreeSet<String>]| scopes.iter().any(|s| s.contains(v));
    let mut out = String::new();
    for c in commands {
        match c {
            Command::DeclareConst(v) => {
                scopes.last_mut().unwrap().insert(v.clone());
            }
            Command::Assert(t, _) => {
                if let Some(v) = t.vars().into_iter().find(|v| !declared(v, &scopes)) {
                    return Err(EncodingError::Undeclared(v.to_string()));
                }
            }
            Command::GetValue(vs) => {
                if let Some(v) = vs.iter().find(|v| !declared(v, &scopes)) {
                    return Err(EncodingError::Undeclared(v.clone()));
                }
            }
            Command::Push => scopes.push(BTreeSet::new()),
            Command::Pop
                if scopes.len() > 1 => {
                    scopes.pop();
                }
            _ => {}
        }
        let _ = writeln!(out, "{c}");
    }
    Ok(out)
}

/// One copy of the place variables, tagged by generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarVec {
    pub generation: usize,
    names: Vec<String>,
}

impl VarVec {
    pub fn new(generation: usize, places: &[String]) -> Self {
        VarVec {
            generation,
            names: places.iter().map(|p| format!("x{generation}_{p}")).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn var(&self, i: usize) -> Term {
        Term::Var(self.names[i].clone())
    }

    /// Declarations plus `xᵢ ≥ 0` for every variable.
    pub fn declare(&self) -> Vec<Command> {
        let mut out: Vec<Command> = self.names.iter().cloned().map(Command::DeclareConst).collect();
        let nonneg = Term::and(self.names.iter().map(|v| Term::ge(Term::var(v), Term::Int(0))));
        if nonneg != Term::Bool(true) {
            out.push(Command::Assert(nonneg, None));
        }
        out
    }

    /// Token counts read back from a model, negative or missing values as 0.
    pub fn decode(&self, model: &std::collections::HashMap<String, i64>) -> Vec<u64> {
        self.names
            .iter()
            .map(|n| model.get(n).copied().unwrap_or(0).max(0) as u64)
            .collect()
    }

    /// Maps place names of `places` to this generation's variables.
    pub fn mapper<'a>(&'a self, places: &'a [String]) -> impl Fn(&str) -> Option<String> + 'a {
        move |p: &str| {
            places
                .iter()
                .position(|q| q == p)
                .map(|i| self.names[i].clone())
        }
    }
}

/// Monotone source of generations for one procedure run.
#[derive(Debug, Clone)]
pub struct Generations {
    places: Vec<String>,
    next: usize,
}

impl Generations {
    pub fn new(places: &[String]) -> Self {
        Generations {
            places: places.to_vec(),
            next: 0,
        }
    }

    pub fn fresh_generation(&mut self) -> VarVec {
        let v = VarVec::new(self.next, &self.places);
        self.next += 1;
        v
    }

    pub fn places(&self) -> &[String] {
        &self.places
    }
}

/// `ENBL_t(x)`.
pub fn enabled(net: &PetriNet, t: usize, x: &VarVec) -> Term {
    Term::and(
        net.transition_at(t)
            .pre()
            .iter()
            .map(|&(p, w)| Term::ge(x.var(p), Term::Int(w as i64))),
    )
}

/// `Δ_t(x, x')`: `x'ᵢ = xᵢ + Post(t, pᵢ) - Pre(t, pᵢ)` for every place.
pub fn delta(net: &PetriNet, t: usize, x: &VarVec, xp: &VarVec) -> Term {
    let tr = net.transition_at(t);
    Term::and((0..net.num_places()).map(|p| {
        let d = tr.effect_on(p);
        let rhs = if d == 0 {
            x.var(p)
        } else {
            Term::Add(vec![x.var(p), Term::Int(d)])
        };
        Term::eq(xp.var(p), rhs)
    }))
}

/// `EQ(x, x')`.
pub fn stutter(x: &VarVec, xp: &VarVec) -> Term {
    Term::and((0..x.len()).map(|p| Term::eq(xp.var(p), x.var(p))))
}

/// `FIRE_t`: `t` fires, or nothing changes.
pub fn fire(net: &PetriNet, t: usize, x: &VarVec, xp: &VarVec) -> Term {
    Term::or([
        stutter(x, xp),
        Term::and([enabled(net, t, x), delta(net, t, x, xp)]),
    ])
}

/// `T(x, x') = EQ(x, x') ∨ ⋁ₜ (ENBL_t(x) ∧ Δ_t(x, x'))`.
pub fn encode_transition_relation(net: &PetriNet, x: &VarVec, xp: &VarVec) -> Term {
    let mut parts = vec![stutter(x, xp)];
    for t in 0..net.num_transitions() {
        parts.push(Term::and([enabled(net, t, x), delta(net, t, x, xp)]));
    }
    Term::or(parts)
}

/// `⋀ᵢ xᵢ = m(pᵢ)`.
pub fn marking_term(places: &[String], m: &Marking, x: &VarVec) -> Term {
    Term::and(
        places
            .iter()
            .enumerate()
            .map(|(i, p)| Term::eq(x.var(i), Term::Int(m.get(p) as i64))),
    )
}

/// `⋀ᵢ xᵢ ≥ m(pᵢ)` over the nonzero entries of `m`.
pub fn cover_cube(places: &[String], m: &Marking, x: &VarVec) -> Term {
    Term::and(
        places
            .iter()
            .enumerate()
            .filter(|(_, p)| m.get(p) > 0)
            .map(|(i, p)| Term::ge(x.var(i), Term::Int(m.get(p) as i64))),
    )
}

/// `φ_k`: initial marking at generation 0 and `k` copies of `T`.
pub fn unroll(net: &PetriNet, m0: &Marking, k: usize) -> (Term, Vec<VarVec>) {
    let mut gens = Generations::new(net.places());
    let mut vecs = vec![gens.fresh_generation()];
    let mut parts = vec![marking_term(net.places(), m0, &vecs[0])];
    for i in 0..k {
        let next = gens.fresh_generation();
        parts.push(encode_transition_relation(net, &vecs[i], &next));
        vecs.push(next);
    }
    (Term::and(parts), vecs)
}

/// A formula as a term. Free variables go through `map`; existential
/// variables in positive position become fresh constants named
/// `{prefix}{n}_{var}`, returned for declaration together with their
/// nonnegativity constraints folded into the term.
pub struct Lowering<'a> {
    map: &'a dyn Fn(&str) -> Option<String>,
    prefix: String,
    counter: usize,
    pub skolems: Vec<String>,
}

impl<'a> Lowering<'a> {
    pub fn new(map: &'a dyn Fn(&str) -> Option<String>, prefix: &str) -> Self {
        Lowering {
            map,
            prefix: prefix.to_string(),
            counter: 0,
            skolems: Vec::new(),
        }
    }

    pub fn lower(&mut self, f: &Formula) -> Result<Term, EncodingError> {
        self.lower_in(f, &[])
    }

    fn lower_in(&mut self, f: &Formula, bound: &[(String, String)]) -> Result<Term, EncodingError> {
        Ok(match f {
            Formula::True => Term::Bool(true),
            Formula::False => Term::Bool(false),
            Formula::Atom(a) => {
                for v in a.expr.vars() {
                    if !bound.iter().any(|(b, _)| b == v) && (self.map)(v).is_none() {
                        return Err(EncodingError::Unmapped(v.to_string()));
                    }
                }
                let resolve = |v: &str| {
                    bound
                        .iter()
                        .rev()
                        .find(|(b, _)| b == v)
                        .map(|(_, s)| s.clone())
                        .or_else(|| (self.map)(v))
                        .expect("checked above")
                };
                Term::atom(a, &resolve)
            }
            Formula::And(ps) => {
                let mut out = Vec::with_capacity(ps.len());
                for p in ps {
                    out.push(self.lower_in(p, bound)?);
                }
                Term::and(out)
            }
            Formula::Or(ps) => {
                let mut out = Vec::with_capacity(ps.len());
                for p in ps {
                    out.push(self.lower_in(p, bound)?);
                }
                Term::or(out)
            }
            Formula::Exists(vs, body) => {
                let mut inner = bound.to_vec();
                let mut nonneg = Vec::new();
                for v in vs {
                    let s = format!("{}{}_{}", self.prefix, self.counter, v);
                    self.counter += 1;
                    self.skolems.push(s.clone());
                    nonneg.push(Term::ge(Term::var(&s), Term::Int(0)));
                    inner.push((v.clone(), s));
                }
                let body = self.lower_in(body, &inner)?;
                nonneg.push(body);
                Term::and(nonneg)
            }
            Formula::Forall(vs, _) => return Err(EncodingError::Universal(vs.clone())),
        })
    }
}

/// Lowers a quantifier-free formula over `places` at generation `x`.
pub fn formula_at(f: &Formula, places: &[String], x: &VarVec) -> Result<Term, EncodingError> {
    let map = x.mapper(places);
    let mut low = Lowering::new(&map, "");
    let t = low.lower(f)?;
    if !low.skolems.is_empty() {
        return Err(EncodingError::Unmapped(low.skolems[0].clone()));
    }
    Ok(t)
}
