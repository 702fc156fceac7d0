//! The TINA textual `.net` format.
//!
//! One declaration per line:
//!
//! ```text
//! net demo
//! pl p0 (5)
//! tr t0 : a p0 -> p1 p3*2
//! tr t1 : tau p1 -> p2
//! ```
//!
//! Places used in arcs without a `pl` line are created empty, in order of
//! first use. A transition without a label is observed under its own name;
//! the label `tau` is silent. Read arcs `p?k` become a self-loop of weight `k`.
//! Inhibitor arcs, priorities and non-trivial time intervals are rejected.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::ParseError;
use crate::net::{Label, Marking, PetriNet};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Int(u64),
    Colon,
    Arrow,
    Star,
    Question,
    Minus,
    LParen,
    RParen,
    Interval(String),
}

struct Lexed {
    tok: Tok,
    col: usize,
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Lexed>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| ParseError::new(lineno, col + 1, msg);
    while i < chars.len() {
        let c = chars[i];
        let col = i;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            ':' => {
                out.push(Lexed { tok: Tok::Colon, col });
                i += 1;
            }
            '*' => {
                out.push(Lexed { tok: Tok::Star, col });
                i += 1;
            }
            '?' => {
                out.push(Lexed { tok: Tok::Question, col });
                i += 1;
            }
            '(' => {
                out.push(Lexed { tok: Tok::LParen, col });
                i += 1;
            }
            ')' => {
                out.push(Lexed { tok: Tok::RParen, col });
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Lexed { tok: Tok::Arrow, col });
                i += 2;
            }
            '-' => {
                out.push(Lexed { tok: Tok::Minus, col });
                i += 1;
            }
            '[' | ']' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != '[' && chars[i] != ']' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(err(start, "unterminated time interval".into()));
                }
                i += 1;
                let text: String = chars[start..i].iter().collect();
                out.push(Lexed { tok: Tok::Interval(text), col });
            }
            '{' => {
                let mut name = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(col, "unterminated `{` name".into())),
                        Some('}') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some(&e) => name.push(e),
                                None => return Err(err(i, "dangling escape".into())),
                            }
                            i += 2;
                        }
                        Some(&ch) => {
                            name.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Lexed { tok: Tok::Name(name), col });
            }
            c if is_name_char(c) => {
                let start = i;
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Lexed { tok: classify(&text), col });
            }
            other => return Err(err(col, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '.'
}

// Digits with an optional K or M multiplier are counts; anything else is a name.
fn classify(text: &str) -> Tok {
    let (digits, mult) = match text.as_bytes().last() {
        Some(b'K') => (&text[..text.len() - 1], 1_000),
        Some(b'M') => (&text[..text.len() - 1], 1_000_000),
        _ => (text, 1),
    };
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        if let Some(v) = digits.parse::<u64>().ok().and_then(|v| v.checked_mul(mult)) {
            return Tok::Int(v);
        }
    }
    Tok::Name(text.to_string())
}

struct Line<'a> {
    toks: &'a [Lexed],
    pos: usize,
    lineno: usize,
    end_col: usize,
}

impl Line<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |l| l.col) + 1
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.lineno, self.col(), msg)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Name(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            Some(Tok::Int(_)) => Err(self.error(format!(
                "expected {what}, found a number (use `{{...}}` for numeric names)"
            ))),
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn count(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.error("expected a token count")),
        }
    }
}

#[derive(Default)]
struct Builder {
    net: PetriNet,
    marking: Marking,
    // place name -> line of its `pl` declaration
    declared: HashMap<String, usize>,
}

impl Builder {
    fn place(&mut self, name: &str, line: &Line) -> Result<usize, ParseError> {
        if let Ok(i) = self.net.place(name) {
            return Ok(i);
        }
        self.net
            .add_place(name)
            .map_err(|e| line.error(e.to_string()))
    }
}

/// Parses a TINA `.net` description.
pub fn parse_tina(text: &str) -> Result<(PetriNet, Marking), ParseError> {
    let mut b = Builder::default();
    let mut pending = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex_line(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut line = Line {
            toks: &toks,
            pos: 0,
            lineno,
            end_col: raw.chars().count(),
        };
        let keyword = match line.next() {
            Some(Tok::Name(k)) => k,
            _ => return Err(ParseError::new(lineno, 1, "expected a declaration keyword")),
        };
        match keyword.as_str() {
            "net" => {
                let name = line.name("a net name")?;
                b.net.set_name(name);
            }
            "pl" => parse_place(&mut line, &mut b)?,
            "tr" => pending.push(parse_transition(&mut line, &mut b)?),
            "lb" | "nt" => continue,
            "pr" => return Err(ParseError::new(lineno, 1, "priorities are not supported")),
            other => {
                return Err(ParseError::new(lineno, 1, format!("unknown declaration `{other}`")))
            }
        }
        if line.pos < toks.len() {
            return Err(line.error("unexpected trailing input"));
        }
    }
    for tr in pending {
        b.net
            .add_transition_indexed(tr.name, tr.label, tr.pre, tr.post)
            .map_err(|e| ParseError::new(tr.lineno, 1, e.to_string()))?;
    }
    Ok((b.net, b.marking))
}

fn parse_place(line: &mut Line, b: &mut Builder) -> Result<(), ParseError> {
    let start = line.col();
    let name = line.name("a place name")?;
    if let Some(&l) = b.declared.get(&name) {
        return Err(ParseError::new(
            line.lineno,
            start,
            format!("place `{name}` already declared on line {l}"),
        ));
    }
    b.declared.insert(name.clone(), line.lineno);
    b.place(&name, line)?;
    if line.peek() == Some(&Tok::Colon) {
        line.pos += 1;
        line.name("a place label")?;
    }
    if line.peek() == Some(&Tok::LParen) {
        line.pos += 1;
        let k = line.count()?;
        if line.next() != Some(Tok::RParen) {
            line.pos -= 1;
            return Err(line.error("expected `)`"));
        }
        if k > 0 {
            b.marking.set(&name, k);
        }
    }
    if line.peek().is_some() {
        return Err(line.error("arcs in place declarations are not supported"));
    }
    Ok(())
}

struct PendingTransition {
    name: String,
    label: Label,
    pre: Vec<(usize, u64)>,
    post: Vec<(usize, u64)>,
    lineno: usize,
}

fn parse_transition(line: &mut Line, b: &mut Builder) -> Result<PendingTransition, ParseError> {
    let name = line.name("a transition name")?;
    let mut label = Label::Action(name.clone());
    if line.peek() == Some(&Tok::Colon) {
        line.pos += 1;
        let l = line.name("a transition label")?;
        label = if l == "tau" { Label::Silent } else { Label::Action(l) };
    }
    if let Some(Tok::Interval(iv)) = line.peek() {
        let compact: String = iv.chars().filter(|c| !c.is_whitespace()).collect();
        if compact != "[0,w[" {
            return Err(line.error(format!("time interval `{iv}` is not supported")));
        }
        line.pos += 1;
    }
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut seen_arrow = false;
    while let Some(tok) = line.peek() {
        if *tok == Tok::Arrow {
            if seen_arrow {
                return Err(line.error("second `->`"));
            }
            seen_arrow = true;
            line.pos += 1;
            continue;
        }
        let p = line.name("a place name")?;
        let p = b.place(&p, line)?;
        match line.peek() {
            Some(Tok::Star) => {
                line.pos += 1;
                let w = line.count()?;
                if seen_arrow { post.push((p, w)) } else { pre.push((p, w)) }
            }
            Some(Tok::Question) => {
                line.pos += 1;
                if line.peek() == Some(&Tok::Minus) {
                    return Err(line.error("inhibitor arcs are not supported"));
                }
                let w = line.count()?;
                if seen_arrow {
                    return Err(line.error("read arcs belong before `->`"));
                }
                pre.push((p, w));
                post.push((p, w));
            }
            _ => {
                if seen_arrow { post.push((p, 1)) } else { pre.push((p, 1)) }
            }
        }
    }
    if !seen_arrow {
        return Err(line.error("expected `->`"));
    }
    Ok(PendingTransition {
        name,
        label,
        pre,
        post,
        lineno: line.lineno,
    })
}

fn quote(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().all(is_name_char)
        && matches!(classify(name), Tok::Name(_));
    if plain {
        return name.to_string();
    }
    let mut out = String::from("{");
    for c in name.chars() {
        if matches!(c, '{' | '}' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('}');
    out
}

/// Prints a net in the format read by [`parse_tina`]. Every place gets a
/// `pl` line so that the declaration order survives a round trip.
pub fn print_tina(net: &PetriNet, m: &Marking) -> String {
    let mut out = String::new();
    if !net.name().is_empty() {
        let _ = writeln!(out, "net {}", quote(net.name()));
    }
    for p in net.places() {
        match m.get(p) {
            0 => {
                let _ = writeln!(out, "pl {}", quote(p));
            }
            k => {
                let _ = writeln!(out, "pl {} ({k})", quote(p));
            }
        }
    }
    let arc = |out: &mut String, p: usize, w: u64| {
        out.push(' ');
        out.push_str(&quote(net.place_name(p)));
        if w != 1 {
            let _ = write!(out, "*{w}");
        }
    };
    for t in net.transitions() {
        let _ = write!(out, "tr {}", quote(t.name()));
        match t.label() {
            Label::Silent => out.push_str(" : tau"),
            Label::Action(a) if a == t.name() => {}
            Label::Action(a) => {
                let _ = write!(out, " : {}", quote(a));
            }
        }
        for &(p, w) in t.pre() {
            arc(&mut out, p, w);
        }
        out.push_str(" ->");
        for &(p, w) in t.post() {
            arc(&mut out, p, w);
        }
        out.push('\n');
    }
    out
}
