mod common;

use std::time::Duration;

use rand::Rng;

use common::{bfs_distance, random_net, replay, seeded, solver_ok, Shape};
use polynet::bmc::{bmc_check, bmc_with_reduction, BmcOptions, BmcOutcome};
use polynet::encoding::Term;
use polynet::oracle::{enumerate, explicit_check, Cutoffs};
use polynet::pdr::{prove, PdrOptions, PdrOutcome};
use polynet::reducer::ReducePolicy;
use polynet::runner::silenced;
use polynet::solver::{InterruptHandle, SatResult, SolverConfig, SolverSession};
use polynet::{Atom, Formula, Marking, PetriNet, Quantifier, Verdict};

const CUT: Cutoffs = Cutoffs { max_states: 20_000, max_tokens: 64 };

fn goal_at_least(net: &PetriNet, rng: &mut rand::rngs::StdRng) -> Formula {
    let n = rng.gen_range(1..=2);
    Formula::and((0..n).map(|_| {
        let p = &net.places()[rng.gen_range(0..net.num_places())];
        Formula::atom(Atom::ge(p, rng.gen_range(1..4)))
    }))
}

fn dense_env<'a>(net: &'a PetriNet, s: &'a [u64]) -> impl Fn(&str) -> Option<i64> + 'a {
    move |v| net.places().iter().position(|p| p == v).map(|i| s[i] as i64)
}

#[test]
fn many_incremental_queries_leave_the_stack_balanced() {
    if !solver_ok() {
        return;
    }
    let mut s = SolverSession::start(SolverConfig::default()).unwrap();
    s.declare("x").unwrap();
    s.declare("y").unwrap();
    let mut rng = seeded(1);
    for i in 0..1200 {
        let (a, b) = (rng.gen_range(-20..20i64), rng.gen_range(-20..20i64));
        s.push().unwrap();
        // x + y = a and x - y = b has an integer solution iff a and b share parity
        s.assert(&Term::eq(Term::Add(vec![Term::var("x"), Term::var("y")]), Term::Int(a))).unwrap();
        s.assert(&Term::eq(Term::Add(vec![Term::var("x"), Term::Mul(-1, Box::new(Term::var("y")))]), Term::Int(b)))
            .unwrap();
        let expected = if (a - b).rem_euclid(2) == 0 { SatResult::Sat } else { SatResult::Unsat };
        assert_eq!(s.check_sat().unwrap(), expected, "query {i}");
        s.pop().unwrap();
        assert_eq!(s.depth(), 0);
    }
    assert!(s.queries() >= 1000);
}

#[test]
fn bmc_witnesses_replay_at_the_shortest_depth() {
    if !solver_ok() {
        return;
    }
    let mut rng = seeded(2);
    let options = BmcOptions { max_depth: 12, wall_clock: Some(Duration::from_secs(20)), ..Default::default() };
    let mut reachable = 0;
    for i in 0..60 {
        let shape = Shape { places: rng.gen_range(2..=5), transitions: rng.gen_range(1..=5), ..Default::default() };
        let (net, m0) = random_net(&mut rng, shape);
        let goal = goal_at_least(&net, &mut rng);
        let truth = bfs_distance(&net, &m0, &|s| goal.eval(&dense_env(&net, s)).unwrap(), 50_000);
        let run = bmc_check(&net, &m0, &goal, &options).unwrap();
        let again = bmc_check(&net, &m0, &goal, &options).unwrap();
        assert_eq!(run.outcome, again.outcome, "net {i} is not deterministic");
        match (&run.outcome, truth) {
            (BmcOutcome::Reachable { depth, marking, trace }, Ok(Some(d))) => {
                assert_eq!(*depth, d, "net {i}");
                assert_eq!(trace.len(), d);
                assert_eq!(replay(&net, &m0, trace).as_ref(), Some(marking));
                assert!(goal.evaluate(&net, marking).unwrap());
                reachable += 1;
            }
            (BmcOutcome::Unknown(_), Ok(Some(d))) => assert!(d > 12, "net {i}: missed depth {d}"),
            (BmcOutcome::Unknown(_), _) => {}
            (o, t) => panic!("net {i}: {o:?} but search says {t:?}"),
        }
    }
    assert!(reachable >= 20, "{reachable}");
}

#[test]
fn bmc_fixpoint_exhaustion_is_only_claimed_for_unreachable_goals() {
    if !solver_ok() {
        return;
    }
    let mut rng = seeded(3);
    let options = BmcOptions { fixpoint: true, wall_clock: Some(Duration::from_secs(20)), ..Default::default() };
    let mut exhausted = 0;
    for i in 0..40 {
        let shape = Shape { places: rng.gen_range(2..=4), conservative: true, ..Default::default() };
        let (net, m0) = random_net(&mut rng, shape);
        let goal = goal_at_least(&net, &mut rng);
        let graph = enumerate(&net, &m0, CUT);
        let truth = explicit_check(&graph, Quantifier::Ef, &goal);
        match bmc_check(&net, &m0, &goal, &options).unwrap().outcome {
            BmcOutcome::Exhausted { .. } => {
                assert_eq!(truth, Verdict::Unreachable, "net {i}");
                exhausted += 1;
            }
            BmcOutcome::Reachable { .. } => assert!(matches!(truth, Verdict::Reachable(_)), "net {i}"),
            BmcOutcome::Unknown(_) => {}
        }
    }
    assert!(exhausted >= 5, "{exhausted}");
}

#[test]
fn reduced_bmc_agrees_with_plain_bmc_and_lifts_reachable_markings() {
    if !solver_ok() {
        return;
    }
    let mut rng = seeded(4);
    let options = BmcOptions { fixpoint: true, wall_clock: Some(Duration::from_secs(20)), ..Default::default() };
    let mut lifted = 0;
    for i in 0..40 {
        let shape = Shape { places: rng.gen_range(3..=5), conservative: true, silent: 0.8, ..Default::default() };
        let (net, m0) = random_net(&mut rng, shape);
        let net = silenced(&net);
        let goal = goal_at_least(&net, &mut rng);
        let graph = enumerate(&net, &m0, CUT);
        let reach: Vec<Marking> = graph.markings().collect();
        let plain = bmc_check(&net, &m0, &goal, &options).unwrap();
        let reduced = bmc_with_reduction(&net, &m0, &goal, &ReducePolicy::default(), &options).unwrap();
        match (&plain.outcome, &reduced.run.outcome) {
            (BmcOutcome::Unknown(_), _) | (_, BmcOutcome::Unknown(_)) => continue,
            (a, b) => assert_eq!(a.is_reachable(), b.is_reachable(), "net {i}"),
        }
        if let Some(m) = &reduced.lifted {
            assert!(goal.evaluate(&net, m).unwrap());
            assert!(reach.contains(&m.restrict(net.places())), "net {i}: {m} is not reachable");
            lifted += 1;
        }
    }
    assert!(lifted >= 3, "{lifted}");
}

#[test]
fn pdr_frames_certificates_and_counterexamples_check_out() {
    if !solver_ok() {
        return;
    }
    let mut rng = seeded(5);
    let options = PdrOptions {
        wall_clock: Some(Duration::from_secs(20)),
        check_frames: true,
        ..Default::default()
    };
    let (mut proved, mut refuted) = (0, 0);
    for i in 0..50 {
        let shape = Shape { places: rng.gen_range(2..=5), transitions: rng.gen_range(1..=5), conservative: i % 2 == 0, ..Default::default() };
        let (net, m0) = random_net(&mut rng, shape);
        let invariant = goal_at_least(&net, &mut rng).negate();
        let run = prove(&net, &m0, &invariant, &options).unwrap();
        assert!(run.stats.frame_violations.is_empty(), "net {i}: {:?}", run.stats.frame_violations);
        assert_eq!(run.stats.mic_violations, 0);
        let graph = enumerate(&net, &m0, CUT);
        let truth = explicit_check(&graph, Quantifier::Ag, &invariant);
        match &run.outcome {
            PdrOutcome::Invariant { certificate, .. } => {
                assert!(run.check.unwrap().passed(), "net {i}");
                assert!(!matches!(truth, Verdict::NotInvariant(_)), "net {i}");
                // the certificate is an over-approximation of every explored state
                for s in &graph.states {
                    assert!(certificate.holds(s), "net {i}: {s:?}");
                }
                proved += 1;
            }
            PdrOutcome::NotInvariant { trace, marking } => {
                assert_eq!(replay(&net, &m0, trace).as_ref(), Some(marking), "net {i}");
                assert!(!invariant.evaluate(&net, marking).unwrap());
                refuted += 1;
            }
            PdrOutcome::Unknown(r) => panic!("net {i}: {r}"),
        }
    }
    assert!(proved >= 10 && refuted >= 10, "{proved} proved, {refuted} refuted");
}

#[test]
fn interrupted_procedures_answer_unknown() {
    if !solver_ok() {
        return;
    }
    let (net, m0) = common::concat_family(3, 4);
    let cancel = InterruptHandle::new();
    cancel.interrupt();
    let goal = Formula::and([Formula::atom(Atom::ge("m1", 1)), Formula::atom(Atom::ge("m2", 1))]);
    let bmc = BmcOptions { fixpoint: true, cancel: Some(cancel.clone()), ..Default::default() };
    assert!(matches!(bmc_check(&net, &m0, &goal, &bmc).unwrap().outcome, BmcOutcome::Unknown(_)));
    let pdr = PdrOptions { cancel: Some(cancel), ..Default::default() };
    assert!(matches!(prove(&net, &m0, &goal.negate(), &pdr).unwrap().outcome, PdrOutcome::Unknown(_)));
}
