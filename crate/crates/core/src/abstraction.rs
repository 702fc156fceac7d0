//! Linear systems relating the markings of two nets.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::linear::{enumerate_solutions, Cmp, Enumeration, LinExpr, LinearSystem};
use crate::net::{merge_markings, Marking, NetError};
use crate::property::{Atom, Formula};
use crate::reducer::ReductionTrace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbstractionError {
    #[error("expected {expected} variables, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("variables {0:?} are not bounded by the system")]
    Unbounded(Vec<String>),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A system `E` over the places of a source net, the places of a target net
/// and internal variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstraction {
    pub system: LinearSystem,
    pub source_places: Vec<String>,
    pub target_places: Vec<String>,
}

impl Abstraction {
    pub fn new(system: LinearSystem, source_places: &[String], target_places: &[String]) -> Self {
        Abstraction {
            system,
            source_places: source_places.to_vec(),
            target_places: target_places.to_vec(),
        }
    }

    pub fn from_trace(trace: &ReductionTrace) -> Self {
        Abstraction::new(
            trace.system.clone(),
            trace.initial_net.places(),
            trace.net.places(),
        )
    }

    /// Identity abstraction of a net onto itself.
    pub fn identity(places: &[String]) -> Self {
        Abstraction::new(LinearSystem::new(), places, places)
    }

    /// Variables that are places of neither net.
    pub fn internal_vars(&self) -> Vec<String> {
        let places: BTreeSet<&str> = self
            .source_places
            .iter()
            .chain(&self.target_places)
            .map(String::as_str)
            .collect();
        self.system
            .vars()
            .into_iter()
            .filter(|v| !places.contains(v.as_str()))
            .collect()
    }

    pub fn shared_places(&self) -> Vec<String> {
        self.source_places
            .iter()
            .filter(|p| self.target_places.contains(p))
            .cloned()
            .collect()
    }

    fn system_atoms(&self, rename: &dyn Fn(&str) -> String) -> Vec<Formula> {
        self.system
            .constraints()
            .iter()
            .map(|c| Formula::Atom(Atom::from_constraint(&c.rename(&rename))))
            .collect()
    }

    /// `Ẽ(x, y)`: source places renamed to `x`, target-only places to `y`,
    /// plus `xᵢ = yⱼ` for every place the two nets share.
    pub fn tilde(&self, x: &[String], y: &[String]) -> Result<Formula, AbstractionError> {
        if x.len() != self.source_places.len() {
            return Err(AbstractionError::LengthMismatch {
                expected: self.source_places.len(),
                got: x.len(),
            });
        }
        if y.len() != self.target_places.len() {
            return Err(AbstractionError::LengthMismatch {
                expected: self.target_places.len(),
                got: y.len(),
            });
        }
        let src: HashMap<&str, &str> = self
            .source_places
            .iter()
            .map(String::as_str)
            .zip(x.iter().map(String::as_str))
            .collect();
        let dst: HashMap<&str, &str> = self
            .target_places
            .iter()
            .map(String::as_str)
            .zip(y.iter().map(String::as_str))
            .collect();
        let rename = |v: &str| {
            src.get(v)
                .or_else(|| dst.get(v))
                .map_or_else(|| v.to_string(), |s| s.to_string())
        };
        let mut parts = self.system_atoms(&rename);
        for (i, p) in self.source_places.iter().enumerate() {
            if let Some(j) = self.target_places.iter().position(|q| q == p) {
                parts.push(Formula::Atom(Atom::new(
                    LinExpr::var(&x[i]),
                    Cmp::Eq,
                    LinExpr::var(&y[j]),
                )));
            }
        }
        Ok(Formula::and(parts))
    }

    /// `F2(y) = ∃x. Ẽ(x, y) ∧ F1(x)` with `y` the target place names. The
    /// block binds one variable per source place plus every internal
    /// variable, all renamed apart from the free names in sight.
    pub fn e_transform(&self, f1: &Formula) -> Formula {
        let mut taken: BTreeSet<String> = f1.all_vars();
        taken.extend(self.system.vars());
        taken.extend(self.source_places.iter().cloned());
        taken.extend(self.target_places.iter().cloned());
        let fresh = |base: &str, taken: &mut BTreeSet<String>| {
            let mut name = format!("{base}'");
            while taken.contains(&name) {
                name.push('\'');
            }
            taken.insert(name.clone());
            name
        };
        let x: Vec<String> = self
            .source_places
            .iter()
            .map(|p| fresh(p, &mut taken))
            .collect();
        let internal = self.internal_vars();
        let internal_renamed: Vec<String> = internal.iter().map(|v| fresh(v, &mut taken)).collect();
        let internal_map: HashMap<&str, &str> = internal
            .iter()
            .map(String::as_str)
            .zip(internal_renamed.iter().map(String::as_str))
            .collect();
        let src_map: HashMap<&str, &str> = self
            .source_places
            .iter()
            .map(String::as_str)
            .zip(x.iter().map(String::as_str))
            .collect();

        let renamed = Abstraction {
            system: self.system.rename(&|v: &str| {
                internal_map
                    .get(v)
                    .map_or_else(|| v.to_string(), |s| s.to_string())
            }),
            ..self.clone()
        };
        let tilde = renamed
            .tilde(&x, &self.target_places)
            .expect("lengths match by construction");
        let f1x = f1.rename_free(&|v: &str| {
            src_map.get(v).map_or_else(|| v.to_string(), |s| s.to_string())
        });
        let mut bound = x;
        bound.extend(internal_renamed);
        Formula::exists(bound, Formula::and([tilde, f1x]))
    }

    /// Does `m1 ⊎ m2` satisfy `E` for some value of the internal variables?
    pub fn holds(&self, m1: &Marking, m2: &Marking) -> Result<bool, AbstractionError> {
        let merged = merge_markings(m1, &self.source_places, m2, &self.target_places)?;
        let mut fixed: HashMap<String, i64> = HashMap::new();
        for p in self.source_places.iter().chain(&self.target_places) {
            fixed.insert(p.clone(), merged.get(p) as i64);
        }
        let internal = self.internal_vars();
        let found = self.solve(&fixed, &internal, DEFAULT_CUTOFF);
        if found.truncated && found.solutions.is_empty() {
            return Err(AbstractionError::Unbounded(internal));
        }
        Ok(!found.solutions.is_empty())
    }

    fn solve(&self, fixed: &HashMap<String, i64>, project: &[String], cutoff: u64) -> Enumeration {
        let rows: Vec<_> = self.system.constraints().iter().map(|c| c.normalized()).collect();
        enumerate_solutions(&rows, fixed, project, cutoff)
    }

    /// Source markings `m1` with `m1 ⊎ m2 ⊨ E`, each source place ranging
    /// over `0..=cutoff`.
    pub fn preimages(&self, m2: &Marking, cutoff: u64) -> Result<Vec<Marking>, AbstractionError> {
        self.side(m2, &self.target_places, &self.source_places, cutoff)
    }

    /// Target markings compatible with a source marking.
    pub fn images(&self, m1: &Marking, cutoff: u64) -> Result<Vec<Marking>, AbstractionError> {
        self.side(m1, &self.source_places, &self.target_places, cutoff)
    }

    fn side(
        &self,
        m: &Marking,
        fixed_places: &[String],
        free_places: &[String],
        cutoff: u64,
    ) -> Result<Vec<Marking>, AbstractionError> {
        for (p, _) in m.iter() {
            if !fixed_places.iter().any(|q| q == p) {
                return Err(NetError::UnknownPlace(p.to_string()).into());
            }
        }
        let fixed: HashMap<String, i64> = fixed_places
            .iter()
            .map(|p| (p.clone(), m.get(p) as i64))
            .collect();
        let found = self.solve(&fixed, free_places, cutoff);
        if found.truncated {
            let unbounded = free_places
                .iter()
                .filter(|p| !fixed.contains_key(*p))
                .cloned()
                .collect();
            return Err(AbstractionError::Unbounded(unbounded));
        }
        Ok(found
            .solutions
            .into_iter()
            .map(|sol| {
                Marking::from_pairs(
                    free_places
                        .iter()
                        .map(String::as_str)
                        .zip(sol.into_iter().map(|v| v as u64)),
                )
            })
            .collect())
    }
}

/// Per-variable search bound used when none is given.
pub const DEFAULT_CUTOFF: u64 = 64;

pub fn make_tilde_e(
    system: &LinearSystem,
    source_places: &[String],
    target_places: &[String],
    x: &[String],
    y: &[String],
) -> Result<Formula, AbstractionError> {
    Abstraction::new(system.clone(), source_places, target_places).tilde(x, y)
}

pub fn e_transform(
    f1: &Formula,
    system: &LinearSystem,
    source_places: &[String],
    target_places: &[String],
) -> Formula {
    Abstraction::new(system.clone(), source_places, target_places).e_transform(f1)
}

/// Number of source markings compatible with `m2`.
pub fn count_preimage(
    system: &LinearSystem,
    source_places: &[String],
    target_places: &[String],
    m2: &Marking,
    cutoff: u64,
) -> Result<u64, AbstractionError> {
    Abstraction::new(system.clone(), source_places, target_places)
        .preimages(m2, cutoff)
        .map(|v| v.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::Constraint;
    use crate::property::marking_cube;
    use crate::samples;
    use proptest::prelude::*;

    fn running() -> Abstraction {
        let (n1, _) = samples::running_example();
        let (n2, _) = samples::running_example_reduced();
        Abstraction::new(samples::running_example_system(), n1.places(), n2.places())
    }

    fn names(prefix: &str, places: &[String]) -> Vec<String> {
        places.iter().map(|p| format!("{prefix}_{p}")).collect()
    }

    #[test]
    fn four_preimages_of_reduced_marking() {
        let abs = running();
        let m2 = Marking::from_pairs([("a2", 1), ("p0", 3), ("p6", 3)]);
        let pre = abs.preimages(&m2, 64).unwrap();
        assert_eq!(pre.len(), 4);
        assert!(pre.contains(&Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)])));
    }

    #[test]
    fn single_preimage_for_equality() {
        let sys = LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("x"),
            LinExpr::var("y"),
        )]);
        let n = count_preimage(&sys, &["x".into()], &["y".into()], &Marking::from_pairs([("y", 3)]), 64);
        assert_eq!(n, Ok(1));
    }

    #[test]
    fn unconstrained_source_is_unbounded() {
        let n = count_preimage(&LinearSystem::new(), &["x".into()], &["y".into()], &Marking::new(), 8);
        assert!(matches!(n, Err(AbstractionError::Unbounded(_))));
    }

    #[test]
    fn tilde_adds_shared_equalities() {
        let abs = running();
        let x = names("x", &abs.source_places);
        let y = names("y", &abs.target_places);
        let f = abs.tilde(&x, &y).unwrap();
        let Formula::And(parts) = &f else { panic!() };
        assert_eq!(parts.len(), 4 + 2);
        assert!(parts.contains(&Formula::Atom(Atom::new(
            LinExpr::var("x_p0"),
            Cmp::Eq,
            LinExpr::var("y_p0")
        ))));
        assert!(abs.tilde(&x[1..], &y).is_err());
    }

    #[test]
    fn disjoint_places_rename_only() {
        let sys = LinearSystem::from_constraints(vec![Constraint::eq(
            LinExpr::var("u"),
            LinExpr::var("v"),
        )]);
        let abs = Abstraction::new(sys, &["u".into()], &["v".into()]);
        let f = abs.tilde(&["x0".into()], &["y0".into()]).unwrap();
        assert_eq!(f.to_string(), "x0 - y0 = 0");
    }

    #[test]
    fn transform_of_reachable_cube() {
        let abs = running();
        let (n1, _) = samples::running_example();
        let m1 = Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)]);
        let f2 = abs.e_transform(&marking_cube(n1.places(), &m1));
        let m2 = Marking::from_pairs([("a2", 1), ("p0", 3), ("p6", 3)]);
        assert!(f2.evaluate_over(&abs.target_places, &m2).unwrap());
        let other = Marking::from_pairs([("a2", 2), ("p0", 3), ("p6", 3)]);
        assert!(!f2.evaluate_over(&abs.target_places, &other).unwrap());
        assert_eq!(f2.free_vars(), abs.target_places.iter().cloned().collect());
    }

    #[test]
    fn transform_of_true_is_solvability() {
        let abs = running();
        let f2 = abs.e_transform(&Formula::True);
        for k in 0..3 {
            let m2 = Marking::from_pairs([("a2", k), ("p0", 1)]);
            assert!(f2.evaluate_over(&abs.target_places, &m2).unwrap());
        }
    }

    #[test]
    fn holds_on_running_pair() {
        let abs = running();
        let m1 = Marking::from_pairs([("p0", 3), ("p2", 1), ("p3", 1), ("p6", 3)]);
        let m2 = Marking::from_pairs([("a2", 1), ("p0", 3), ("p6", 3)]);
        assert_eq!(abs.holds(&m1, &m2), Ok(true));
        let m2 = Marking::from_pairs([("a2", 0), ("p0", 3), ("p6", 3)]);
        assert_eq!(abs.holds(&m1, &m2), Ok(false));
        let m2 = Marking::from_pairs([("a2", 1), ("p0", 2), ("p6", 3)]);
        assert!(matches!(abs.holds(&m1, &m2), Err(AbstractionError::Net(_))));
    }

    fn small_system() -> impl Strategy<Value = (LinearSystem, Vec<String>, Vec<String>)> {
        // source places u0..u2, target places v0..v1, each source place
        // pinned by an equation to a combination of target places
        let row = prop::collection::vec(0i64..=2, 2);
        (prop::collection::vec(row, 3), prop::collection::vec(0i64..3, 3)).prop_map(
            |(rows, offs)| {
                let mut sys = LinearSystem::new();
                for (i, (coeffs, off)) in rows.iter().zip(&offs).enumerate() {
                    let mut rhs = LinExpr::constant(*off);
                    for (j, c) in coeffs.iter().enumerate() {
                        rhs.add_term(*c, format!("v{j}"));
                    }
                    let lhs = LinExpr::var(format!("u{i}"));
                    if i == 2 {
                        sys.push(Constraint::le(lhs, rhs));
                    } else {
                        sys.push(Constraint::eq(lhs, rhs));
                    }
                }
                (
                    sys,
                    vec!["u0".into(), "u1".into(), "u2".into()],
                    vec!["v0".into(), "v1".into()],
                )
            },
        )
    }

    proptest! {
        #[test]
        fn preimage_count_matches_grid((sys, p1, p2) in small_system(), a in 0u64..3, b in 0u64..3) {
            let m2 = Marking::from_pairs([("v0", a), ("v1", b)]);
            let counted = count_preimage(&sys, &p1, &p2, &m2, 64).unwrap();
            let mut grid = 0;
            for u0 in 0..20i64 {
                for u1 in 0..20i64 {
                    for u2 in 0..20i64 {
                        let env = |v: &str| match v {
                            "u0" => Some(u0),
                            "u1" => Some(u1),
                            "u2" => Some(u2),
                            "v0" => Some(a as i64),
                            "v1" => Some(b as i64),
                            _ => None,
                        };
                        if sys.holds(&env) == Some(true) {
                            grid += 1;
                        }
                    }
                }
            }
            prop_assert_eq!(counted, grid);
        }

        #[test]
        fn tilde_agrees_with_merged_marking(
            (sys, p1, p2) in small_system(),
            m1 in prop::collection::vec(0u64..4, 3),
            m2 in prop::collection::vec(0u64..4, 2),
        ) {
            let abs = Abstraction::new(sys.clone(), &p1, &p2);
            let x = names("x", &p1);
            let y = names("y", &p2);
            let tilde = abs.tilde(&x, &y).unwrap();
            let env = |v: &str| {
                x.iter().position(|n| n == v).map(|i| m1[i] as i64)
                    .or_else(|| y.iter().position(|n| n == v).map(|j| m2[j] as i64))
            };
            let merged = |v: &str| {
                p1.iter().position(|n| n == v).map(|i| m1[i] as i64)
                    .or_else(|| p2.iter().position(|n| n == v).map(|j| m2[j] as i64))
            };
            prop_assert_eq!(tilde.eval(&env).unwrap(), sys.holds(&merged).unwrap());
        }
    }
}
