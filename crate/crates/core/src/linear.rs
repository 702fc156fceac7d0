//! Integer linear expressions, constraint systems, and a small bounded
//! enumerator for their nonnegative integer solutions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinExpr {
    terms: BTreeMap<String, i64>,
    constant: i64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(name: impl Into<String>) -> Self {
        Self::term(1, name)
    }

    pub fn term(coeff: i64, name: impl Into<String>) -> Self {
        let mut e = Self::zero();
        e.add_term(coeff, name);
        e
    }

    pub fn constant(k: i64) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: k,
        }
    }

    pub fn sum<S: Into<String>>(vars: impl IntoIterator<Item = S>) -> Self {
        let mut e = Self::zero();
        for v in vars {
            e.add_term(1, v);
        }
        e
    }

    pub fn add_term(&mut self, coeff: i64, name: impl Into<String>) {
        let name = name.into();
        let c = self.terms.entry(name.clone()).or_insert(0);
        *c += coeff;
        if *c == 0 {
            self.terms.remove(&name);
        }
    }

    pub fn add_constant(&mut self, k: i64) {
        self.constant += k;
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut e = self.clone();
        for (v, &c) in &other.terms {
            e.add_term(c, v.clone());
        }
        e.constant += other.constant;
        e
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        self.plus(&other.scaled(-1))
    }

    pub fn scaled(&self, k: i64) -> LinExpr {
        if k == 0 {
            return LinExpr::zero();
        }
        LinExpr {
            terms: self.terms.iter().map(|(v, &c)| (v.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, i64)> {
        self.terms.iter().map(|(v, &c)| (v.as_str(), c))
    }

    pub fn coeff(&self, var: &str) -> i64 {
        self.terms.get(var).copied().unwrap_or(0)
    }

    pub fn constant_term(&self) -> i64 {
        self.constant
    }

    pub fn without_constant(&self) -> LinExpr {
        LinExpr {
            terms: self.terms.clone(),
            constant: 0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> LinExpr {
        let mut e = LinExpr::constant(self.constant);
        for (v, &c) in &self.terms {
            e.add_term(c, f(v));
        }
        e
    }

    /// Replaces `var` by `replacement`.
    pub fn substitute(&self, var: &str, replacement: &LinExpr) -> LinExpr {
        let c = self.coeff(var);
        if c == 0 {
            return self.clone();
        }
        let mut rest = self.clone();
        rest.terms.remove(var);
        rest.plus(&replacement.scaled(c))
    }

    /// Value under `env`; `None` when a variable is unbound.
    pub fn eval(&self, env: &impl Fn(&str) -> Option<i64>) -> Option<i64> {
        let mut acc = self.constant as i128;
        for (v, &c) in &self.terms {
            acc += c as i128 * env(v)? as i128;
        }
        i64::try_from(acc).ok()
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, &c) in &self.terms {
            let (sign, mag) = if c < 0 { ("-", -c) } else { ("+", c) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)?;
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)?;
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

impl Cmp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Cmp::Eq => lhs == rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Ge => lhs >= rhs,
        }
    }

    pub fn flipped(self) -> Cmp {
        match self {
            Cmp::Eq => Cmp::Eq,
            Cmp::Le => Cmp::Ge,
            Cmp::Ge => Cmp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
        }
    }
}

/// `lhs cmp rhs`, kept in the shape it was written in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub lhs: LinExpr,
    pub cmp: Cmp,
    pub rhs: LinExpr,
}

impl Constraint {
    pub fn new(lhs: LinExpr, cmp: Cmp, rhs: LinExpr) -> Self {
        Constraint { lhs, cmp, rhs }
    }

    pub fn eq(lhs: LinExpr, rhs: LinExpr) -> Self {
        Self::new(lhs, Cmp::Eq, rhs)
    }

    pub fn le(lhs: LinExpr, rhs: LinExpr) -> Self {
        Self::new(lhs, Cmp::Le, rhs)
    }

    /// `(lhs - rhs) cmp 0`.
    pub fn normalized(&self) -> (LinExpr, Cmp) {
        (self.lhs.minus(&self.rhs), self.cmp)
    }

    pub fn vars(&self) -> BTreeSet<&str> {
        self.lhs.vars().chain(self.rhs.vars()).collect()
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Constraint {
        Constraint::new(self.lhs.rename(f), self.cmp, self.rhs.rename(f))
    }

    pub fn holds(&self, env: &impl Fn(&str) -> Option<i64>) -> Option<bool> {
        let (e, cmp) = self.normalized();
        Some(cmp.holds(e.eval(env)?, 0))
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

/// Ordered conjunction of linear constraints over nonnegative integer variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LinearSystem {
    constraints: Vec<Constraint>,
}

impl LinearSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_constraints(constraints: Vec<Constraint>) -> Self {
        LinearSystem { constraints }
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, other: &LinearSystem) {
        self.constraints.extend(other.constraints.iter().cloned());
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.constraints
            .iter()
            .flat_map(|c| c.vars().into_iter().map(str::to_string).collect::<Vec<_>>())
            .collect()
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> LinearSystem {
        LinearSystem {
            constraints: self.constraints.iter().map(|c| c.rename(f)).collect(),
        }
    }

    pub fn holds(&self, env: &impl Fn(&str) -> Option<i64>) -> Option<bool> {
        for c in &self.constraints {
            if !c.holds(env)? {
                return Some(false);
            }
        }
        Some(true)
    }

    /// One constraint per line, in order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.constraints {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.constraints.is_empty() {
            return write!(f, "true");
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                write!(f, " /\\ ")?;
            }
            write!(f, "({c})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl FromStr for LinearSystem {
    type Err = ParseError;

    /// Parses the one-constraint-per-line text format. Blank lines and lines
    /// starting with `#` are ignored.
    fn from_str(text: &str) -> Result<Self, ParseError> {
        let mut sys = LinearSystem::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let c = parse_constraint(line).map_err(|(column, message)| ParseError {
                line: lineno + 1,
                column: column + 1,
                message,
            })?;
            sys.push(c);
        }
        Ok(sys)
    }
}

fn parse_constraint(line: &str) -> Result<Constraint, (usize, String)> {
    let (pos, cmp, len) = ["<=", ">=", "="]
        .iter()
        .find_map(|op| line.find(op).map(|p| (p, *op, op.len())))
        .ok_or((0, "missing comparator".to_string()))?;
    let cmp = match cmp {
        "<=" => Cmp::Le,
        ">=" => Cmp::Ge,
        _ => Cmp::Eq,
    };
    let lhs = parse_linexpr(&line[..pos], 0)?;
    let rhs = parse_linexpr(&line[pos + len..], pos + len)?;
    Ok(Constraint::new(lhs, cmp, rhs))
}

/// Parses `[-] [k*] name {(+|-) [k*] name | k}` with column offsets for errors.
pub fn parse_linexpr(text: &str, offset: usize) -> Result<LinExpr, (usize, String)> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut expr = LinExpr::zero();
    let mut sign = 1i64;
    let mut expect_operand = true;
    let mut seen = false;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '+' || c == '-' {
            if expect_operand && seen {
                return Err((offset + i, format!("unexpected `{c}`")));
            }
            sign = if c == '-' { -sign } else { sign };
            expect_operand = true;
            i += 1;
            continue;
        }
        if !expect_operand {
            return Err((offset + i, format!("expected `+` or `-`, found `{c}`")));
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            let k: i64 = text[start..i]
                .parse()
                .map_err(|_| (offset + start, "integer out of range".to_string()))?;
            let mut j = i;
            while j < bytes.len() && (bytes[j] as char).is_whitespace() {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'*' {
                j += 1;
                while j < bytes.len() && (bytes[j] as char).is_whitespace() {
                    j += 1;
                }
                let vstart = j;
                while j < bytes.len() && is_ident_char(bytes[j] as char) {
                    j += 1;
                }
                if vstart == j {
                    return Err((offset + vstart, "expected variable after `*`".into()));
                }
                expr.add_term(sign * k, &text[vstart..j]);
                i = j;
            } else {
                expr.add_constant(sign * k);
            }
        } else if is_ident_char(c) {
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
            expr.add_term(sign, &text[start..i]);
        } else {
            return Err((offset + i, format!("unexpected `{c}`")));
        }
        sign = 1;
        expect_operand = false;
        seen = true;
    }
    if expect_operand {
        return Err((offset + i, "expected operand".into()));
    }
    Ok(expr)
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '\'' | '$' | '@' | '#' | '!')
}

// ---------------------------------------------------------------------------
// Bounded enumeration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Interval {
    lo: i128,
    hi: Option<i128>,
}

/// Nonnegative integer solutions of a constraint system, projected onto a
/// chosen variable list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Enumeration {
    pub solutions: BTreeSet<Vec<i64>>,
    /// Some variable could exceed the cutoff, so the set may be incomplete.
    pub truncated: bool,
}

/// Enumerates all assignments of the free (non-`fixed`) variables, each in
/// `0..=cutoff`, satisfying every `(expr, cmp)` meaning `expr cmp 0`.
/// Solutions are projected onto `project`, which may mix fixed and free
/// variables.
pub fn enumerate_solutions(
    constraints: &[(LinExpr, Cmp)],
    fixed: &HashMap<String, i64>,
    project: &[String],
    cutoff: u64,
) -> Enumeration {
    // substitute fixed values
    let mut rows: Vec<(Vec<(usize, i128)>, i128, Cmp)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut var_id = |v: &str, names: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(v) {
            return i;
        }
        index.insert(v.to_string(), names.len());
        names.push(v.to_string());
        names.len() - 1
    };
    for p in project {
        if !fixed.contains_key(p) {
            var_id(p, &mut names);
        }
    }
    for (e, cmp) in constraints {
        let mut row = Vec::new();
        let mut k = e.constant_term() as i128;
        for (v, c) in e.terms() {
            match fixed.get(v) {
                Some(&val) => k += c as i128 * val as i128,
                None => row.push((var_id(v, &mut names), c as i128)),
            }
        }
        rows.push((row, k, *cmp));
    }
    let n = names.len();
    let mut out = Enumeration::default();
    let mut domains = vec![Interval { lo: 0, hi: None }; n];
    if !propagate(&rows, &mut domains) {
        return out;
    }
    let project_slots: Vec<Result<usize, i64>> = project
        .iter()
        .map(|p| match fixed.get(p) {
            Some(&v) => Err(v),
            None => Ok(index[p]),
        })
        .collect();
    let mut assignment = vec![0i128; n];
    search(
        &rows,
        domains,
        cutoff as i128,
        &mut assignment,
        &project_slots,
        &mut out,
    );
    out
}

fn search(
    rows: &[(Vec<(usize, i128)>, i128, Cmp)],
    domains: Vec<Interval>,
    cutoff: i128,
    assignment: &mut Vec<i128>,
    project: &[Result<usize, i64>],
    out: &mut Enumeration,
) {
    // pick the unfixed variable with the narrowest domain
    let pick = domains
        .iter()
        .enumerate()
        .filter(|(_, d)| d.hi != Some(d.lo))
        .min_by_key(|(_, d)| d.hi.map(|h| h - d.lo).unwrap_or(i128::MAX));
    let Some((var, dom)) = pick else {
        for (i, d) in domains.iter().enumerate() {
            assignment[i] = d.lo;
        }
        let all_hold = rows.iter().all(|(row, k, cmp)| {
            let v: i128 = row.iter().map(|&(i, c)| c * assignment[i]).sum::<i128>() + k;
            match cmp {
                Cmp::Eq => v == 0,
                Cmp::Le => v <= 0,
                Cmp::Ge => v >= 0,
            }
        });
        if all_hold {
            let sol = project
                .iter()
                .map(|s| match s {
                    Ok(i) => assignment[*i] as i64,
                    Err(v) => *v,
                })
                .collect();
            out.solutions.insert(sol);
        }
        return;
    };
    let hi = match dom.hi {
        Some(h) if h <= cutoff => h,
        _ => {
            out.truncated = true;
            cutoff
        }
    };
    let mut value = dom.lo;
    while value <= hi {
        let mut next = domains.clone();
        next[var] = Interval {
            lo: value,
            hi: Some(value),
        };
        if propagate(rows, &mut next) {
            search(rows, next, cutoff, assignment, project, out);
        }
        value += 1;
    }
}

/// Interval bound propagation to a fixpoint. Returns false on conflict.
fn propagate(rows: &[(Vec<(usize, i128)>, i128, Cmp)], doms: &mut [Interval]) -> bool {
    loop {
        let mut changed = false;
        for (row, k, cmp) in rows {
            // sum range of the row
            for &(j, cj) in row {
                let (mut rest_min, mut rest_max) = (Some(*k), Some(*k));
                for &(i, ci) in row {
                    if i == j {
                        continue;
                    }
                    let d = doms[i];
                    let (a, b) = if ci > 0 {
                        (Some(ci * d.lo), d.hi.map(|h| ci * h))
                    } else {
                        (d.hi.map(|h| ci * h), Some(ci * d.lo))
                    };
                    rest_min = rest_min.zip(a).map(|(x, y)| x + y);
                    rest_max = rest_max.zip(b).map(|(x, y)| x + y);
                }
                // cj * xj + rest  cmp  0
                let upper_side = matches!(cmp, Cmp::Le | Cmp::Eq); // cj*xj <= -rest_min
                let lower_side = matches!(cmp, Cmp::Ge | Cmp::Eq); // cj*xj >= -rest_max
                let mut lo = doms[j].lo;
                let mut hi = doms[j].hi;
                if upper_side {
                    if let Some(rm) = rest_min {
                        let bound = -rm;
                        if cj > 0 {
                            let h = bound.div_euclid(cj);
                            hi = Some(hi.map_or(h, |x| x.min(h)));
                        } else {
                            let l = ceil_div(bound, cj);
                            lo = lo.max(l);
                        }
                    }
                }
                if lower_side {
                    if let Some(rm) = rest_max {
                        let bound = -rm;
                        if cj > 0 {
                            lo = lo.max(ceil_div(bound, cj));
                        } else {
                            let h = floor_div(bound, cj);
                            hi = Some(hi.map_or(h, |x| x.min(h)));
                        }
                    }
                }
                if let Some(h) = hi {
                    if h < lo {
                        return false;
                    }
                }
                if lo != doms[j].lo || hi != doms[j].hi {
                    doms[j] = Interval { lo, hi };
                    changed = true;
                }
            }
            if row.is_empty() {
                let ok = match cmp {
                    Cmp::Eq => *k == 0,
                    Cmp::Le => *k <= 0,
                    Cmp::Ge => *k >= 0,
                };
                if !ok {
                    return false;
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}
