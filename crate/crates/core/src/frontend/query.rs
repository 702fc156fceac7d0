//! Reachability properties: the textual grammar and the MCC XML adapter.
//!
//! ```text
//! property := [id ':'] ('EF' | 'AG') formula
//! formula  := conj (('or' | '||') conj)*
//! conj     := unary (('and' | '&&') unary)*
//! unary    := ('not' | '!') unary | 'exists' names ':' formula | primary
//! primary  := 'true' | 'false' | 'deadlock' | 'enabled' '(' names ')'
//!           | '(' formula ')' | linear cmp linear
//! cmp      := '<=' | '>=' | '<' | '>' | '=' | '==' | '!='
//! ```
//!
//! Linear expressions are sums of integer multiples of place names. Names
//! that clash with keywords or contain other characters go in `{...}`.
//! Results are in negation normal form.

use roxmltree::{Document, Node};

use super::ParseError;
use crate::linear::{Cmp, LinExpr};
use crate::net::PetriNet;
use crate::property::{dead_predicate, enabled_predicate_at, Atom, Formula, Quantifier};

/// A property with the identifier used in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProperty {
    pub id: String,
    pub quantifier: Quantifier,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident { text: String, braced: bool },
    Int(i64),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 19] = [
    "<=", ">=", "==", "!=", "&&", "||", "<", ">", "=", "+", "-", "*", "(", ")", ",", ":", "!", "&",
    "|",
];

fn lex(text: &str, line: usize) -> Result<(Vec<Spanned>, usize), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<i64>()
                .map_err(|_| ParseError::new(line, col, format!("integer `{s}` out of range")))?;
            out.push(Spanned { tok: Tok::Int(v), line, col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '.' | '\''))
            {
                i += 1;
            }
            let text = chars[start..i].iter().collect();
            out.push(Spanned { tok: Tok::Ident { text, braced: false }, line, col });
            continue;
        }
        if c == '{' {
            let mut text = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ParseError::new(line, col, "unterminated `{` name")),
                    Some('}') => break,
                    Some('\\') if i + 1 < chars.len() => {
                        text.push(chars[i + 1]);
                        i += 2;
                    }
                    Some(&ch) => {
                        text.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Spanned { tok: Tok::Ident { text, braced: true }, line, col });
            continue;
        }
        for sym in SYMBOLS {
            if chars[i..].iter().take(sym.len()).copied().eq(sym.chars()) {
                out.push(Spanned { tok: Tok::Sym(sym), line, col });
                i += sym.len();
                continue 'outer;
            }
        }
        return Err(ParseError::new(line, col, format!("unexpected character `{c}`")));
    }
    Ok((out, chars.len() + 1))
}

struct Parser<'n> {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
    end_col: usize,
    net: &'n PetriNet,
    bound: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        match self.toks.get(self.pos) {
            Some(s) => ParseError::new(s.line, s.col, msg),
            None => ParseError::new(self.line, self.end_col, msg),
        }
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = self.at_sym(sym);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident { text, braced: false }) if text == kw)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let hit = self.at_keyword(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident { text, .. }) => {
                let t = text.clone();
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn quantifier(&mut self) -> Result<Quantifier, ParseError> {
        if self.eat_keyword("EF") {
            Ok(Quantifier::Ef)
        } else if self.eat_keyword("AG") {
            Ok(Quantifier::Ag)
        } else {
            Err(self.error("expected `EF` or `AG`"))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.conjunction()?];
        while self.eat_keyword("or") || self.eat_sym("||") || self.eat_sym("|") {
            parts.push(self.conjunction()?);
        }
        Ok(Formula::or(parts))
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.unary()?];
        while self.eat_keyword("and") || self.eat_sym("&&") || self.eat_sym("&") {
            parts.push(self.unary()?);
        }
        Ok(Formula::and(parts))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat_keyword("not") || self.eat_sym("!") {
            return Ok(self.unary()?.negate());
        }
        if self.eat_keyword("exists") {
            let mut vars = Vec::new();
            loop {
                let at = self.pos;
                let v = self.ident("a variable name")?;
                if self.net.has_place(&v) {
                    self.pos = at;
                    return Err(self.error(format!("variable `{v}` shadows a place")));
                }
                vars.push(v);
                self.eat_sym(",");
                if self.eat_sym(":") {
                    break;
                }
            }
            let depth = self.bound.len();
            self.bound.extend(vars.iter().cloned());
            let body = self.formula();
            self.bound.truncate(depth);
            return Ok(Formula::exists(vars, body?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        if self.eat_keyword("true") {
            return Ok(Formula::True);
        }
        if self.eat_keyword("false") {
            return Ok(Formula::False);
        }
        if self.eat_keyword("deadlock") {
            return Ok(dead_predicate(self.net));
        }
        if self.at_keyword("enabled") {
            self.pos += 1;
            self.expect_sym("(")?;
            let mut parts = Vec::new();
            loop {
                let at = self.pos;
                let t = self.ident("a transition name")?;
                let ti = self.net.transition(&t).map_err(|e| {
                    self.pos = at;
                    self.error(e.to_string())
                })?;
                parts.push(enabled_predicate_at(self.net, ti));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(Formula::or(parts));
        }
        if self.at_sym("(") {
            let save = self.pos;
            self.pos += 1;
            if let Ok(f) = self.formula() {
                if self.eat_sym(")") && !self.at_arith_or_cmp() {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        self.atom()
    }

    fn at_arith_or_cmp(&self) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if matches!(*s, "+" | "-" | "*" | "<=" | ">=" | "<" | ">" | "=" | "==" | "!="))
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.linear()?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) if matches!(*s, "<=" | ">=" | "<" | ">" | "=" | "==" | "!=") => *s,
            _ => return Err(self.error("expected a comparison")),
        };
        self.pos += 1;
        let rhs = self.linear()?;
        Ok(match op {
            "<=" => Formula::Atom(Atom::new(lhs, Cmp::Le, rhs)),
            ">=" => Formula::Atom(Atom::new(lhs, Cmp::Ge, rhs)),
            "<" => Formula::Atom(Atom::lt(lhs, rhs)),
            ">" => Formula::Atom(Atom::gt(lhs, rhs)),
            "!=" => Formula::or([
                Formula::Atom(Atom::lt(lhs.clone(), rhs.clone())),
                Formula::Atom(Atom::gt(lhs, rhs)),
            ]),
            _ => Formula::Atom(Atom::new(lhs, Cmp::Eq, rhs)),
        })
    }

    fn linear(&mut self) -> Result<LinExpr, ParseError> {
        let mut acc = self.product()?;
        loop {
            if self.eat_sym("+") {
                acc = acc.plus(&self.product()?);
            } else if self.eat_sym("-") {
                acc = acc.minus(&self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<LinExpr, ParseError> {
        let mut acc = self.factor()?;
        while self.at_sym("*") {
            self.pos += 1;
            let at = self.pos;
            let rhs = self.factor()?;
            acc = if acc.is_constant() {
                rhs.scaled(acc.constant_term())
            } else if rhs.is_constant() {
                acc.scaled(rhs.constant_term())
            } else {
                self.pos = at;
                return Err(self.error("product of two non-constant terms"));
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<LinExpr, ParseError> {
        if self.eat_sym("-") {
            return Ok(self.factor()?.scaled(-1));
        }
        if self.eat_sym("(") {
            let e = self.linear()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        match self.peek().cloned() {
            Some(Tok::Int(k)) => {
                self.pos += 1;
                Ok(LinExpr::constant(k))
            }
            Some(Tok::Ident { text, braced }) => {
                let keyword = !braced
                    && matches!(
                        text.as_str(),
                        "and" | "or" | "not" | "exists" | "true" | "false" | "deadlock" | "enabled"
                    );
                if keyword {
                    return Err(self.error(format!("unexpected keyword `{text}`")));
                }
                if !self.net.has_place(&text) && !self.bound.contains(&text) {
                    return Err(self.error(format!("unknown place `{text}`")));
                }
                self.pos += 1;
                Ok(LinExpr::var(text))
            }
            _ => Err(self.error("expected a linear expression")),
        }
    }
}

fn parser<'n>(text: &str, line: usize, net: &'n PetriNet) -> Result<Parser<'n>, ParseError> {
    let (toks, end_col) = lex(text, line)?;
    Ok(Parser { toks, pos: 0, line, end_col, net, bound: Vec::new() })
}

/// Parses one `EF φ` / `AG φ` property against the places and transitions
/// of `net`.
pub fn parse_property(text: &str, net: &PetriNet) -> Result<(Quantifier, Formula), ParseError> {
    let mut p = parser(text, 1, net)?;
    let q = p.quantifier()?;
    let f = p.formula()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok((q, f))
}

/// Parses a property file: one property per line, `#` comments, and an
/// optional `id:` prefix. Unnamed properties get `P<line>`.
pub fn parse_property_file(text: &str, net: &PetriNet) -> Result<Vec<NamedProperty>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let mut p = parser(raw, i + 1, net)?;
        if p.toks.is_empty() {
            continue;
        }
        let mut id = format!("P{}", i + 1);
        let named = matches!(
            (p.toks.first().map(|s| &s.tok), p.toks.get(1).map(|s| &s.tok)),
            (Some(Tok::Ident { .. }), Some(Tok::Sym(":")))
        );
        if named {
            id = p.ident("an identifier")?;
            p.pos += 1;
        }
        let quantifier = p.quantifier()?;
        let formula = p.formula()?;
        if p.pos < p.toks.len() {
            return Err(p.error("unexpected trailing input"));
        }
        out.push(NamedProperty { id, quantifier, formula });
    }
    Ok(out)
}

fn xml_error(doc: &Document, node: Node, msg: impl Into<String>) -> ParseError {
    let pos = doc.text_pos_at(node.range().start);
    ParseError::new(pos.row as usize, pos.col as usize, msg)
}

fn elements<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element())
}

fn only_child<'a, 'i>(doc: &Document, node: Node<'a, 'i>) -> Result<Node<'a, 'i>, ParseError> {
    let mut it = elements(node);
    match (it.next(), it.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(xml_error(doc, node, format!("<{}> needs exactly one child", node.tag_name().name()))),
    }
}

/// Reads an MCC `property-set` document. Only `exists-path/finally` and
/// `all-paths/globally` over the cardinality and fireability fragments are
/// accepted.
pub fn parse_mcc_xml(text: &str, net: &PetriNet) -> Result<Vec<NamedProperty>, ParseError> {
    let doc = Document::parse(text).map_err(|e| {
        let p = e.pos();
        ParseError::new(p.row as usize, p.col as usize, e.to_string())
    })?;
    let mut out = Vec::new();
    for prop in doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "property")
    {
        let id = elements(prop)
            .find(|c| c.tag_name().name() == "id")
            .and_then(|c| c.text())
            .map(|s| s.trim().to_string())
            .ok_or_else(|| xml_error(&doc, prop, "property without <id>"))?;
        let formula = elements(prop)
            .find(|c| c.tag_name().name() == "formula")
            .ok_or_else(|| xml_error(&doc, prop, "property without <formula>"))?;
        let path = only_child(&doc, formula)?;
        let temporal = only_child(&doc, path)?;
        let quantifier = match (path.tag_name().name(), temporal.tag_name().name()) {
            ("exists-path", "finally") => Quantifier::Ef,
            ("all-paths", "globally") => Quantifier::Ag,
            (a, b) => {
                return Err(xml_error(&doc, path, format!("unsupported path formula <{a}>/<{b}>")))
            }
        };
        let body = mcc_state(&doc, only_child(&doc, temporal)?, net)?;
        out.push(NamedProperty { id, quantifier, formula: body });
    }
    Ok(out)
}

fn mcc_state(doc: &Document, node: Node, net: &PetriNet) -> Result<Formula, ParseError> {
    let kids = || elements(node).map(|c| mcc_state(doc, c, net));
    match node.tag_name().name() {
        "true" => Ok(Formula::True),
        "false" => Ok(Formula::False),
        "deadlock" => Ok(dead_predicate(net)),
        "conjunction" => Ok(Formula::and(kids().collect::<Result<Vec<_>, _>>()?)),
        "disjunction" => Ok(Formula::or(kids().collect::<Result<Vec<_>, _>>()?)),
        "negation" => Ok(mcc_state(doc, only_child(doc, node)?, net)?.negate()),
        "is-fireable" => {
            let mut parts = Vec::new();
            for t in elements(node) {
                let name = t.text().unwrap_or("").trim();
                let ti = net.transition(name).map_err(|e| xml_error(doc, t, e.to_string()))?;
                parts.push(enabled_predicate_at(net, ti));
            }
            Ok(Formula::or(parts))
        }
        cmp @ ("integer-le" | "integer-ge" | "integer-eq" | "integer-lt" | "integer-gt") => {
            let sides: Vec<Node> = elements(node).collect();
            if sides.len() != 2 {
                return Err(xml_error(doc, node, format!("<{cmp}> needs two operands")));
            }
            let lhs = mcc_int(doc, sides[0], net)?;
            let rhs = mcc_int(doc, sides[1], net)?;
            Ok(Formula::Atom(match cmp {
                "integer-le" => Atom::new(lhs, Cmp::Le, rhs),
                "integer-ge" => Atom::new(lhs, Cmp::Ge, rhs),
                "integer-eq" => Atom::new(lhs, Cmp::Eq, rhs),
                "integer-lt" => Atom::lt(lhs, rhs),
                _ => Atom::gt(lhs, rhs),
            }))
        }
        other => Err(xml_error(doc, node, format!("unsupported element <{other}>"))),
    }
}

fn mcc_int(doc: &Document, node: Node, net: &PetriNet) -> Result<LinExpr, ParseError> {
    match node.tag_name().name() {
        "integer-constant" => node
            .text()
            .unwrap_or("")
            .trim()
            .parse::<i64>()
            .map(LinExpr::constant)
            .map_err(|_| xml_error(doc, node, "invalid integer constant")),
        "tokens-count" => {
            let mut e = LinExpr::zero();
            for p in elements(node) {
                let name = p.text().unwrap_or("").trim();
                if !net.has_place(name) {
                    return Err(xml_error(doc, p, format!("unknown place `{name}`")));
                }
                e.add_term(1, name);
            }
            Ok(e)
        }
        "integer-sum" => {
            let mut e = LinExpr::zero();
            for c in elements(node) {
                e = e.plus(&mcc_int(doc, c, net)?);
            }
            Ok(e)
        }
        other => Err(xml_error(doc, node, format!("unsupported integer expression <{other}>"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::property::enabled_predicate;
    use crate::samples::running_example;

    fn net() -> PetriNet {
        running_example().0
    }

    #[test]
    fn keyword_properties_expand() {
        let n = net();
        assert_eq!(parse_property("EF deadlock", &n).unwrap(), (Quantifier::Ef, dead_predicate(&n)));
        assert_eq!(
            parse_property("EF enabled(t0)", &n).unwrap().1,
            enabled_predicate(&n, "t0").unwrap()
        );
        let (q, f) = parse_property("AG p0 + p6 <= 9", &n).unwrap();
        assert_eq!(q, Quantifier::Ag);
        assert_eq!(
            f,
            Formula::Atom(Atom::new(LinExpr::sum(["p0", "p6"]), Cmp::Le, LinExpr::constant(9)))
        );
    }

    #[test]
    fn precedence_and_parentheses() {
        let n = net();
        let (_, f) = parse_property("EF p1 >= 1 || p2 >= 1 && p3 >= 1", &n).unwrap();
        assert!(matches!(f, Formula::Or(ref ps) if ps.len() == 2));
        let (_, g) = parse_property("EF (p0 + p1) * 2 >= 3 and (p2 = 1)", &n).unwrap();
        let m = crate::net::Marking::from_pairs([("p0", 1), ("p1", 1), ("p2", 1)]);
        assert!(g.evaluate(&n, &m).unwrap());
        let (_, h) = parse_property("EF 2*p0 - p6 > -1", &n).unwrap();
        assert!(h.evaluate(&n, &crate::net::Marking::new()).unwrap());
    }

    #[test]
    fn negation_is_pushed_to_atoms() {
        let n = net();
        let (_, f) = parse_property("AG not (p0 >= 1 and !(p6 != 2))", &n).unwrap();
        assert!(matches!(f, Formula::Or(ref ps) if ps.iter().all(|p| matches!(p, Formula::Atom(_)))));
        for (p0, p6, want) in [(0, 2, true), (1, 2, false), (1, 3, true)] {
            let m = crate::net::Marking::from_pairs([("p0", p0), ("p6", p6)]);
            assert_eq!(f.evaluate(&n, &m).unwrap(), want, "p0={p0} p6={p6}");
        }
    }

    #[test]
    fn exists_binds_variables() {
        let n = net();
        let (_, f) = parse_property("EF exists a, b : p0 = a + b and a >= 1 and b >= 2", &n).unwrap();
        assert_eq!(f.free_vars().into_iter().collect::<Vec<_>>(), ["p0"]);
        assert!(parse_property("EF exists p0 : p0 >= 1", &n).is_err());
        assert!(parse_property("EF a >= 1", &n).is_err());
    }

    #[test]
    fn errors_point_at_the_token() {
        let n = net();
        let e = parse_property("EF p0 >= 1 and q >= 2", &n).unwrap_err();
        assert_eq!((e.line, e.column), (1, 16));
        let e = parse_property("EF p0 * p1 >= 1", &n).unwrap_err();
        assert_eq!(e.column, 9);
        let e = parse_property("XX p0 >= 1", &n).unwrap_err();
        assert_eq!(e.column, 1);
        let e = parse_property("EF p0 >=", &n).unwrap_err();
        assert_eq!(e.column, 9);
        assert!(parse_property("EF enabled(t9)", &n).is_err());
    }

    #[test]
    fn property_files_number_lines() {
        let n = net();
        let text = "# demo\nreach: EF p5 >= 1\n\nAG p6 <= 4\n";
        let props = parse_property_file(text, &n).unwrap();
        assert_eq!(props.len(), 2);
        assert_eq!(props[0].id, "reach");
        assert_eq!(props[1].id, "P4");
        let e = parse_property_file("EF p0 >= 1\nEF p0 >=< 1\n", &n).unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn mcc_documents_map_onto_formulas() {
        let n = net();
        let xml = r#"<?xml version="1.0"?>
<property-set xmlns="http://mcc.lip6.fr/">
  <property>
    <id>M1-00</id>
    <formula><exists-path><finally>
      <conjunction>
        <integer-le><integer-constant>1</integer-constant><tokens-count><place>p2</place></tokens-count></integer-le>
        <negation><is-fireable><transition>t2</transition></is-fireable></negation>
      </conjunction>
    </finally></exists-path></formula>
  </property>
  <property>
    <id>M1-01</id>
    <formula><all-paths><globally>
      <integer-le><tokens-count><place>p0</place><place>p6</place></tokens-count><integer-constant>9</integer-constant></integer-le>
    </globally></all-paths></formula>
  </property>
</property-set>"#;
        let props = parse_mcc_xml(xml, &n).unwrap();
        let text = parse_property("EF 1 <= p2 and not enabled(t2)", &n).unwrap();
        assert_eq!((props[0].quantifier, props[0].formula.clone()), text);
        assert_eq!(props[1].id, "M1-01");
        assert_eq!(
            (props[1].quantifier, props[1].formula.clone()),
            parse_property("AG p0 + p6 <= 9", &n).unwrap()
        );
        let bad = xml.replace("<finally>", "<next>").replace("</finally>", "</next>");
        assert!(parse_mcc_xml(&bad, &n).is_err());
    }
}
