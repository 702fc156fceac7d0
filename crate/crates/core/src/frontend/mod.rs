//! Input formats: nets (TINA `.net`, PNML) and properties.

mod pnml;
mod query;
mod tina;

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::net::{Marking, PetriNet};

pub use pnml::{parse_pnml, print_pnml};
pub use query::{parse_mcc_xml, parse_property, parse_property_file, NamedProperty};
pub use tina::{parse_tina, print_tina};

/// A parse failure at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetFormat {
    Tina,
    Pnml,
}

impl NetFormat {
    /// `.pnml` and `.xml` are PNML, anything else is TINA.
    pub fn from_path(path: &Path) -> NetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("pnml") || e.eq_ignore_ascii_case("xml") => {
                NetFormat::Pnml
            }
            _ => NetFormat::Tina,
        }
    }
}

impl FromStr for NetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "net" | "tina" => Ok(NetFormat::Tina),
            "pnml" => Ok(NetFormat::Pnml),
            other => Err(format!("unknown net format `{other}`")),
        }
    }
}

pub fn parse_net(text: &str, format: NetFormat) -> Result<(PetriNet, Marking), ParseError> {
    match format {
        NetFormat::Tina => parse_tina(text),
        NetFormat::Pnml => parse_pnml(text),
    }
}

pub fn print_net(net: &PetriNet, m: &Marking, format: NetFormat) -> String {
    match format {
        NetFormat::Tina => print_tina(net, m),
        NetFormat::Pnml => print_pnml(net, m),
    }
}

/// Reads properties from text: MCC XML when it starts with `<`, the
/// line-based grammar otherwise.
pub fn parse_properties(text: &str, net: &PetriNet) -> Result<Vec<NamedProperty>, ParseError> {
    if text.trim_start().starts_with('<') {
        parse_mcc_xml(text, net)
    } else {
        parse_property_file(text, net)
    }
}
