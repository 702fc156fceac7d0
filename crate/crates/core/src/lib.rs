//! Reachability and invariant checking for Petri nets with structural
//! reductions, polyhedral abstractions and SMT-backed BMC and PDR.

pub mod abstraction;
pub mod bmc;
pub mod encoding;
pub mod frontend;
pub mod linear;
pub mod net;
pub mod oracle;
pub mod pdr;
pub mod property;
pub mod reducer;
pub mod runner;
pub mod samples;
pub mod solver;

pub use linear::{Cmp, Constraint, LinExpr, LinearSystem};
pub use net::{FiringSequence, Label, Marking, NetError, ObservationSequence, PetriNet};
pub use property::{Atom, Formula, Quantifier, Verdict, Witness};
