mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{arb_net, random_net, seeded, Shape};
use polynet::frontend::{parse_net, parse_property, print_net, NetFormat};
use polynet::linear::{Cmp, LinExpr};
use polynet::property::{Atom, Formula};
use polynet::{Label, Marking, PetriNet};

// Renames places and transitions to names that need quoting in TINA syntax.
fn awkward_names(net: &PetriNet, m: &Marking, rng: &mut rand::rngs::StdRng) -> (PetriNet, Marking) {
    const SPICE: [&str; 6] = ["", " x", "{1}", "\\", "-2", "é"];
    let mut out = PetriNet::new(format!("corpus {}", rng.gen_range(0..100)));
    let mut names = Vec::new();
    for (i, p) in net.places().iter().enumerate() {
        let n = format!("{p}{}", SPICE[rng.gen_range(0..SPICE.len())]);
        let n = if i % 5 == 4 { format!("{i}") } else { n };
        out.add_place(&n).unwrap();
        names.push(n);
    }
    for t in net.transitions() {
        let name = format!("{}{}", t.name(), SPICE[rng.gen_range(0..SPICE.len())]);
        out.add_transition_indexed(name, t.label().clone(), t.pre().to_vec(), t.post().to_vec())
            .unwrap();
    }
    let mut m2 = Marking::new();
    for (p, n) in net.places().iter().zip(&names) {
        if m.get(p) > 0 {
            m2.set(n, m.get(p) * rng.gen_range(1..2000));
        }
    }
    (out, m2)
}

fn corpus() -> Vec<(PetriNet, Marking)> {
    let mut rng = seeded(7);
    (0..50)
        .map(|i| {
            let shape = Shape {
                places: 1 + i % 9,
                transitions: i % 7,
                max_weight: 1 + (i as u64 % 4),
                max_tokens: 3,
                conservative: i % 2 == 0,
                silent: 0.4,
            };
            let (net, m) = random_net(&mut rng, shape);
            if i % 3 == 0 { awkward_names(&net, &m, &mut rng) } else { (net, m) }
        })
        .collect()
}

#[test]
fn tina_parse_print_is_identity_on_corpus() {
    for (i, (net, m)) in corpus().into_iter().enumerate() {
        let text = print_net(&net, &m, NetFormat::Tina);
        let (again, m2) = parse_net(&text, NetFormat::Tina)
            .unwrap_or_else(|e| panic!("net {i}: {e}\n{text}"));
        assert_eq!(again, net, "net {i}\n{text}");
        assert_eq!(m2, m, "net {i}");
        assert_eq!(print_net(&again, &m2, NetFormat::Tina), text, "net {i}");
    }
}

#[test]
fn pnml_parse_print_is_identity_up_to_labels() {
    for (i, (net, m)) in corpus().into_iter().enumerate() {
        let text = print_net(&net, &m, NetFormat::Pnml);
        let (again, m2) = parse_net(&text, NetFormat::Pnml)
            .unwrap_or_else(|e| panic!("net {i}: {e}"));
        assert_eq!(again.places(), net.places());
        assert_eq!(m2, m);
        for (a, b) in again.transitions().iter().zip(net.transitions()) {
            assert_eq!((a.name(), a.pre(), a.post()), (b.name(), b.pre(), b.post()));
            assert_eq!(a.label(), &Label::Action(b.name().to_string()));
        }
        assert_eq!(print_net(&again, &m2, NetFormat::Pnml), text);
    }
}

fn arb_atom() -> impl Strategy<Value = Atom> {
    (
        prop::collection::vec(-3i64..=3, 3),
        prop_oneof![Just(Cmp::Le), Just(Cmp::Ge), Just(Cmp::Eq)],
        -4i64..8,
    )
        .prop_map(|(coeffs, cmp, k)| {
            let mut e = LinExpr::zero();
            for (i, c) in coeffs.into_iter().enumerate() {
                if c != 0 {
                    e.add_term(c, format!("p{i}"));
                }
            }
            Atom::new(e, cmp, LinExpr::constant(k))
        })
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        arb_atom().prop_map(Formula::Atom),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::and),
            prop::collection::vec(inner.clone(), 1..3).prop_map(Formula::or),
            inner.prop_map(|f| f.negate()),
        ]
    })
}

proptest! {
    #[test]
    fn printed_formulas_parse_back_to_equivalent_ones(
        f in arb_formula(),
        points in prop::collection::vec(prop::collection::vec(0u64..4, 3), 8),
    ) {
        let (net, _) = {
            let mut n = PetriNet::new("f");
            for p in ["p0", "p1", "p2"] { n.add_place(p).unwrap(); }
            (n, ())
        };
        let text = format!("AG {f}");
        let (_, g) = parse_property(&text, &net).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        for v in points {
            let m = Marking::from_pairs(["p0", "p1", "p2"].into_iter().zip(v));
            prop_assert_eq!(f.evaluate(&net, &m).unwrap(), g.evaluate(&net, &m).unwrap(), "{}", text);
        }
    }

    #[test]
    fn generated_nets_round_trip((net, m) in arb_net(5, 5)) {
        let text = print_net(&net, &m, NetFormat::Tina);
        let (again, m2) = parse_net(&text, NetFormat::Tina).unwrap();
        prop_assert_eq!(again, net);
        prop_assert_eq!(m2, m);
    }
}
