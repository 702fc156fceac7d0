//! The place/transition subset of PNML.
//!
//! Element ids name places and transitions, since that is what property
//! files refer to. Transitions are observed under their id. Pages are
//! flattened in document order.

use std::collections::HashMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::ParseError;
use crate::net::{Label, Marking, PetriNet};

fn pos_error(doc: &Document, node: Node, msg: impl Into<String>) -> ParseError {
    let pos = doc.text_pos_at(node.range().start);
    ParseError::new(pos.row as usize, pos.col as usize, msg)
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
}

// `<tag><text>…</text></tag>` under `node`.
fn text_of<'a, 'i>(node: Node<'a, 'i>, tag: &str) -> Option<(Node<'a, 'i>, &'a str)> {
    let t = child(node, tag)?;
    let text = child(t, "text")?;
    Some((text, text.text().unwrap_or("").trim()))
}

fn number(doc: &Document, node: Node, raw: &str, what: &str) -> Result<u64, ParseError> {
    raw.parse::<u64>()
        .map_err(|_| pos_error(doc, node, format!("invalid {what} `{raw}`")))
}

/// Parses the first `<net>` of a PNML document.
pub fn parse_pnml(text: &str) -> Result<(PetriNet, Marking), ParseError> {
    let doc = Document::parse(text).map_err(|e| {
        let p = e.pos();
        ParseError::new(p.row as usize, p.col as usize, e.to_string())
    })?;
    let net_node = doc
        .descendants()
        .find(|n| n.is_element() && n.tag_name().name() == "net")
        .ok_or_else(|| ParseError::new(1, 1, "no <net> element"))?;
    if let Some(ty) = net_node.attribute("type") {
        if !ty.trim_end_matches('/').ends_with("ptnet") {
            return Err(pos_error(
                &doc,
                net_node,
                format!("net type `{ty}` is not a place/transition net"),
            ));
        }
    }
    let id = |n: Node| {
        n.attribute("id")
            .map(str::to_string)
            .ok_or_else(|| pos_error(&doc, n, "missing `id` attribute"))
    };

    let mut net = PetriNet::new(net_node.attribute("id").unwrap_or(""));
    let mut marking = Marking::new();
    let elements: Vec<Node> = net_node.descendants().filter(|n| n.is_element()).collect();

    for &n in elements.iter().filter(|n| n.tag_name().name() == "place") {
        let name = id(n)?;
        net.add_place(&name).map_err(|e| pos_error(&doc, n, e.to_string()))?;
        if let Some((tn, raw)) = text_of(n, "initialMarking") {
            let k = number(&doc, tn, raw, "initial marking")?;
            if k > 0 {
                marking.set(&name, k);
            }
        }
    }

    let mut transitions: Vec<(Node, String)> = Vec::new();
    let mut rows: HashMap<String, (Vec<(usize, u64)>, Vec<(usize, u64)>)> = HashMap::new();
    for &n in elements.iter().filter(|n| n.tag_name().name() == "transition") {
        let name = id(n)?;
        if rows.insert(name.clone(), Default::default()).is_some() || net.has_place(&name) {
            return Err(pos_error(&doc, n, format!("duplicate id `{name}`")));
        }
        transitions.push((n, name));
    }

    for &n in elements.iter().filter(|n| n.tag_name().name() == "arc") {
        let source = n
            .attribute("source")
            .ok_or_else(|| pos_error(&doc, n, "arc without `source`"))?;
        let target = n
            .attribute("target")
            .ok_or_else(|| pos_error(&doc, n, "arc without `target`"))?;
        if let Some(kind) = child(n, "type").and_then(|t| t.attribute("value")) {
            if kind != "normal" {
                return Err(pos_error(&doc, n, format!("arc type `{kind}` is not supported")));
            }
        }
        let w = match text_of(n, "inscription") {
            Some((tn, raw)) => number(&doc, tn, raw, "arc weight")?,
            None => 1,
        };
        if let (Ok(p), Some(row)) = (net.place(source), rows.get_mut(target)) {
            row.0.push((p, w));
        } else if let (Some(row), Ok(p)) = (rows.get_mut(source), net.place(target)) {
            row.1.push((p, w));
        } else {
            return Err(pos_error(
                &doc,
                n,
                format!("arc `{source}` -> `{target}` must join a place and a transition"),
            ));
        }
    }

    for (n, name) in transitions {
        let (pre, post) = rows.remove(&name).unwrap_or_default();
        net.add_transition_indexed(&name, Label::Action(name.clone()), pre, post)
            .map_err(|e| pos_error(&doc, n, e.to_string()))?;
    }
    Ok((net, marking))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes a PNML document readable by [`parse_pnml`]. Transition labels are
/// not representable and are dropped.
pub fn print_pnml(net: &PetriNet, m: &Marking) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<pnml xmlns=\"http://www.pnml.org/version-2009/grammar/pnml\">\n");
    let _ = writeln!(
        out,
        "  <net id=\"{}\" type=\"http://www.pnml.org/version-2009/grammar/ptnet\">\n    <page id=\"page0\">",
        escape(net.name())
    );
    for p in net.places() {
        let _ = write!(out, "      <place id=\"{}\">", escape(p));
        if m.get(p) > 0 {
            let _ = write!(out, "<initialMarking><text>{}</text></initialMarking>", m.get(p));
        }
        out.push_str("</place>\n");
    }
    for t in net.transitions() {
        let _ = writeln!(out, "      <transition id=\"{}\"/>", escape(t.name()));
    }
    let mut arc_id = 0;
    let mut arc = |out: &mut String, from: &str, to: &str, w: u64| {
        let _ = write!(out, "      <arc id=\"arc{arc_id}\" source=\"{}\" target=\"{}\">", escape(from), escape(to));
        if w != 1 {
            let _ = write!(out, "<inscription><text>{w}</text></inscription>");
        }
        out.push_str("</arc>\n");
        arc_id += 1;
    };
    for t in net.transitions() {
        for &(p, w) in t.pre() {
            arc(&mut out, net.place_name(p), t.name(), w);
        }
        for &(p, w) in t.post() {
            arc(&mut out, t.name(), net.place_name(p), w);
        }
    }
    out.push_str("    </page>\n  </net>\n</pnml>\n");
    out
}
