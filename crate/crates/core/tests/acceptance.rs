//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`). Expected
//! values marked as derived were computed with the independent oracles in
//! `common` and are frozen here.

mod common;

use std::collections::BTreeSet;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ballotscope_core::calculus::Ident;
use ballotscope_core::deduction::{
    derivable, statically_equivalent, DeductionConfig, FramePair, Knowledge, StaticEquivalence,
};
use ballotscope_core::equivalence::{
    diagnose, diff_equivalent, trace_equivalent, CheckRequest, Property, Verdict, VerdictResult,
};
use ballotscope_core::semantics::ExploreConfig;
use ballotscope_core::starvote::{
    build_star_model, corruption_scenario, star_scenario, CorruptAgent, Extensions, StarParams,
    VoteSelection,
};
use ballotscope_core::term::{Func, Term};

fn assigned(voters: usize, votes: &[&str], ext: Extensions) -> ballotscope_core::calculus::Model {
    build_star_model(&StarParams {
        voters,
        candidates: vec!["a".into(), "b".into()],
        extensions: ext,
        votes: VoteSelection::Assigned(votes.iter().map(|v| Ident::from(*v)).collect()),
    })
    .unwrap()
}

fn biprocess(voters: usize, ext: Extensions) -> ballotscope_core::calculus::Model {
    build_star_model(&StarParams::biprocess(voters, "a", "b", ext)).unwrap()
}

fn counting() -> Extensions {
    Extensions {
        counting: true,
        ..Extensions::default()
    }
}

fn trace_pair(voters: usize, ext: Extensions, scenario: &str) -> (Verdict, Duration) {
    let (v1, v2) = if voters == 3 {
        (vec!["a", "b", "a"], vec!["b", "a", "a"])
    } else {
        (vec!["a", "b"], vec!["b", "a"])
    };
    let m1 = assigned(voters, &v1, ext);
    let m2 = assigned(voters, &v2, ext);
    let s = star_scenario(scenario).unwrap();
    let t = Instant::now();
    let v = trace_equivalent(&m1, &m2, &s, &ExploreConfig::default()).unwrap();
    (v, t.elapsed())
}

fn diff(voters: usize, ext: Extensions, scenario: &str) -> (Verdict, Duration) {
    let m = biprocess(voters, ext);
    let s = star_scenario(scenario).unwrap();
    let t = Instant::now();
    let v = diff_equivalent(&m, &s, &ExploreConfig::default()).unwrap();
    (v, t.elapsed())
}

#[test]
fn criterion_1_verdict_pattern_base_model() {
    let budget = Duration::from_secs(60);

    let (v, t) = trace_pair(2, Extensions::default(), "dy1");
    assert_eq!(v.result, VerdictResult::Equivalent, "dy1 must verify");
    assert!(t < budget, "dy1 took {t:?}");

    let (v, t) = trace_pair(2, Extensions::default(), "dy2");
    assert_eq!(v.result, VerdictResult::Attack, "dy2 must fail");
    assert!(t < budget, "dy2 took {t:?}");
    // replay is machine-checked at emission; diagnose replays once more
    let m1 = assigned(2, &["a", "b"], Extensions::default());
    let m2 = assigned(2, &["b", "a"], Extensions::default());
    let s = star_scenario("dy2").unwrap();
    let cfg = ExploreConfig::default();
    let report = diagnose(
        &v,
        &CheckRequest {
            property: Property::TraceEq,
            left: &m1,
            right: Some(&m2),
            scenario: &s,
            cfg: &cfg,
        },
    )
    .expect("the dy2 witness replays");
    assert!(report.contains("divergence reproduced"));

    let (v, t) = trace_pair(3, Extensions::default(), "dy3");
    assert_eq!(v.result, VerdictResult::Equivalent, "dy3 must verify");
    assert!(t < budget, "dy3 took {t:?}");

    eprintln!("criterion 1 (base-model verdict pattern dy1/dy2/dy3): PASS");
}

#[test]
fn criterion_2_verdict_pattern_counting() {
    let (v, _) = trace_pair(2, counting(), "dy1");
    assert_eq!(
        v.result,
        VerdictResult::Equivalent,
        "counting dy1 must verify"
    );

    let (v, _) = trace_pair(3, counting(), "dy3");
    assert_eq!(
        v.result,
        VerdictResult::Equivalent,
        "counting dy3 must verify"
    );

    // tallying under a near-total intruder can exhaust realistic bounds;
    // any clearly reported non-verified outcome is acceptable here, as
    // long as it is deterministic (verdict, witness, and exploration
    // size; elapsed time is measurement, not verdict)
    let fingerprint = |v: &Verdict| {
        format!(
            "{}|{:?}|{:?}|states={}|frame={}",
            v.result, v.witness, v.inconclusive_reason, v.stats.states, v.stats.max_frame_len
        )
    };
    let (v1, _) = trace_pair(2, counting(), "dy2");
    assert_ne!(v1.result, VerdictResult::Equivalent);
    let (v2, _) = trace_pair(2, counting(), "dy2");
    assert_eq!(
        fingerprint(&v1),
        fingerprint(&v2),
        "counting dy2 must be deterministic"
    );

    eprintln!(
        "criterion 2 (counting verdict pattern; dy2 -> {}): PASS",
        v1.result
    );
}

#[test]
fn criterion_3_biprocess_checks() {
    let (v, t) = diff(2, Extensions::default(), "honest");
    assert_eq!(
        v.result,
        VerdictResult::Equivalent,
        "base diff-eq must verify"
    );
    assert!(t < Duration::from_secs(30), "base took {t:?}");

    let (v, t) = diff(
        2,
        Extensions {
            pins: true,
            ..Extensions::default()
        },
        "honest",
    );
    assert_eq!(
        v.result,
        VerdictResult::Equivalent,
        "pins diff-eq must verify"
    );
    assert!(t < Duration::from_secs(120), "pins took {t:?}");

    let (v, t) = diff(
        2,
        Extensions {
            hashchain: true,
            ..Extensions::default()
        },
        "honest",
    );
    assert_eq!(
        v.result,
        VerdictResult::Equivalent,
        "hash-chain diff-eq must verify"
    );
    assert!(t < Duration::from_secs(600), "hash chain took {t:?}");

    eprintln!("criterion 3 (biprocess base/pins/hash-chain verify): PASS");
}

#[test]
fn criterion_4_corruption_attack() {
    let agents: BTreeSet<CorruptAgent> = [CorruptAgent::Terminal, CorruptAgent::BallotBox].into();
    let s = corruption_scenario(&agents).unwrap();
    let m = biprocess(2, Extensions::default());
    let cfg = ExploreConfig::default();
    let v = diff_equivalent(&m, &s, &cfg).unwrap();
    assert_eq!(v.result, VerdictResult::Attack);
    let w = v.witness.as_ref().expect("attack carries a witness");
    assert!(!w.actions.is_empty());
    // the replayability requirement: diagnose re-executes independently
    let report = diagnose(
        &v,
        &CheckRequest {
            property: Property::DiffEq,
            left: &m,
            right: None,
            scenario: &s,
            cfg: &cfg,
        },
    )
    .expect("corruption witness replays");
    assert!(report.contains("divergence reproduced"));
    eprintln!("criterion 4 (corrupt terminal + ballot box attack): PASS");
}

#[test]
fn criterion_5_equational_theory() {
    let start = Instant::now();
    // the three identities, verbatim
    let (m, r, sk) = (
        Term::name("m", false),
        Term::name("r", false),
        Term::name("sk", false),
    );
    let pk = Term::apply(Func::Pk, vec![sk.clone()]);
    let enc = Term::apply(Func::Penc, vec![m.clone(), r.clone(), pk.clone()]);
    assert_eq!(
        Term::apply(Func::Dec, vec![enc.clone(), sk.clone()]).normalize(),
        m
    );
    let sig = Term::apply(Func::Sign, vec![sk.clone(), m.clone()]);
    assert_eq!(
        Term::apply(Func::Checksign, vec![sig, m.clone(), pk.clone()]).normalize(),
        Term::ok()
    );
    let proof = Term::apply(Func::Zkp, vec![pk.clone(), r.clone(), m.clone(), enc]);
    assert_eq!(
        Term::apply(Func::Checkzkp, vec![proof]).normalize(),
        Term::ok()
    );

    let mut rng = StdRng::seed_from_u64(0x5ec5);
    for i in 0..1000 {
        let t = common::random_ground_term(&mut rng, 6);
        let nf_impl = t.normalize();
        let nf_oracle = common::unique_normal_form(&t);
        assert_eq!(nf_impl, nf_oracle, "term {i}: {t}");
        assert_eq!(nf_impl.normalize(), nf_impl, "idempotence on term {i}: {t}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    eprintln!("criterion 5 (equational theory, 1000 random terms in {elapsed:?}): PASS");
}

#[test]
fn criterion_6_deduction_oracle_equivalence() {
    let start = Instant::now();
    let publics: Vec<Rc<str>> = vec!["p0".into(), "p1".into()];
    let dcfg = DeductionConfig::with_depth(4);
    // the recipe space depends only on the handle count
    let recipe_space: Vec<Vec<ballotscope_core::deduction::Recipe>> = (0..=4)
        .map(|h| common::enumerate_recipes(h, &publics, 4))
        .collect();

    let mut rng = StdRng::seed_from_u64(0xdedu64);
    let mut yes = 0usize;
    for set in 0..500 {
        let k = common::random_knowledge(&mut rng, 4);
        // oracle: evaluate every recipe, keep values and minimal sizes
        let mut oracle: std::collections::HashMap<Term, usize> = std::collections::HashMap::new();
        for r in &recipe_space[k.len()] {
            if let Some(v) = common::oracle_eval(r, &k) {
                let e = oracle.entry(v).or_insert(usize::MAX);
                *e = (*e).min(r.size());
            }
        }
        for t in 0..20 {
            let target = pick_target(&mut rng, &k, t);
            let target_nf = common::leftmost_normal_form(&target);
            let got = derivable(&k, &publics, &target, &dcfg).unwrap();
            match (&got, oracle.get(&target_nf)) {
                (Some(recipe), Some(&min_size)) => {
                    yes += 1;
                    assert_eq!(
                        recipe.eval(&k).as_ref(),
                        Some(&target_nf),
                        "witness must re-evaluate to the target (set {set})"
                    );
                    assert_eq!(
                        recipe.size(),
                        min_size,
                        "witness must be minimal for {target_nf} (set {set})"
                    );
                }
                (None, None) => {}
                (got, oracle) => panic!(
                    "set {set}: derivable disagrees with the oracle on {target_nf}: impl {got:?}, oracle {oracle:?}"
                ),
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    assert!(yes > 500, "suspiciously few derivable targets ({yes})");
    eprintln!(
        "criterion 6 (deduction oracle, 500 sets x 20 targets, {yes} derivable, {elapsed:?}): PASS"
    );
}

fn pick_target(rng: &mut StdRng, k: &Knowledge, round: usize) -> Term {
    match round % 4 {
        // something the intruder plainly has
        0 if !k.is_empty() => k.get(1 + rng.gen_range(0..k.len())).unwrap().clone(),
        // a one-step composition of an entry
        1 if !k.is_empty() => {
            let base = k.get(1 + rng.gen_range(0..k.len())).unwrap().clone();
            match rng.gen_range(0..3) {
                0 => Term::apply(Func::Hash, vec![base]),
                1 => Term::apply(Func::Pk, vec![base]),
                _ => Term::tuple(vec![base, Term::name("p0", true)]),
            }
        }
        _ => common::random_ground_term(rng, 3),
    }
}

#[test]
fn criterion_7_static_equivalence_sanity() {
    let dcfg = DeductionConfig::with_depth(3);
    let publics: Vec<Rc<str>> = vec!["p0".into(), "p1".into()];

    let mut rng = StdRng::seed_from_u64(0x57a7);
    for i in 0..200 {
        let k1 = common::random_knowledge(&mut rng, 3);
        let mut k2 = common::random_knowledge(&mut rng, 3);
        while k2.len() < k1.len() {
            k2.push(Term::name("p0", true)).unwrap();
        }
        let mut k1 = k1;
        while k1.len() < k2.len() {
            k1.push(Term::name("p0", true)).unwrap();
        }
        // reflexivity
        let refl = FramePair::new(k1.clone(), k1.clone()).unwrap();
        assert!(
            statically_equivalent(&refl, &publics, &dcfg).is_equivalent(),
            "reflexivity failed on pair {i}"
        );
        // symmetry of the verdict
        let fp = FramePair::new(k1, k2).unwrap();
        let fwd = statically_equivalent(&fp, &publics, &dcfg);
        let bwd = statically_equivalent(&fp.swap(), &publics, &dcfg);
        assert_eq!(
            fwd.is_equivalent(),
            bwd.is_equivalent(),
            "symmetry failed on pair {i}"
        );
    }

    // the encrypted-vote indistinguishability example, against the
    // brute-force recipe-pair oracle
    let (a, b) = (Term::name("a", true), Term::name("b", true));
    let (r1, r2, sk) = (
        Term::name("r1", false),
        Term::name("r2", false),
        Term::name("sk", false),
    );
    let pk = Term::apply(Func::Pk, vec![sk]);
    let left =
        Knowledge::from_terms([Term::apply(Func::Penc, vec![a.clone(), r1, pk.clone()])]).unwrap();
    let right = Knowledge::from_terms([Term::apply(Func::Penc, vec![b.clone(), r2, pk])]).unwrap();
    let fp = FramePair::new(left.clone(), right.clone()).unwrap();
    let vote_publics: Vec<Rc<str>> = vec!["a".into(), "b".into()];
    let verdict = statically_equivalent(&fp, &vote_publics, &DeductionConfig::with_depth(3));
    assert_eq!(verdict, StaticEquivalence::Equivalent);

    // oracle: every recipe pair of size <= 3 must agree across the frames
    let recipes = common::enumerate_recipes(1, &vote_publics, 3);
    for r1 in &recipes {
        for r2 in &recipes {
            let test = |k: &Knowledge| -> bool {
                match (common::oracle_eval(r1, k), common::oracle_eval(r2, k)) {
                    (Some(x), Some(y)) => x == y,
                    _ => false,
                }
            };
            assert_eq!(
                test(&left),
                test(&right),
                "oracle found a distinguisher: {r1} = {r2}"
            );
        }
    }
    eprintln!("criterion 7 (static equivalence sanity + ciphertext indistinguishability): PASS");
}

#[test]
fn criterion_8_checker_cross_validation() {
    // every built-in combination that runs within default bounds at two
    // voters, plus the three-voter dy3 instance of the base model
    let exts = [
        ("base", Extensions::default()),
        ("counting", counting()),
        (
            "pins",
            Extensions {
                pins: true,
                ..Extensions::default()
            },
        ),
        (
            "hashchain",
            Extensions {
                hashchain: true,
                ..Extensions::default()
            },
        ),
    ];
    let scenarios = ["honest", "dy1", "dy2", "corrupt_tb"];
    let mut verified = 0usize;
    for (name, ext) in &exts {
        for scen in &scenarios {
            let (dv, _) = diff(2, *ext, scen);
            if dv.result == VerdictResult::Equivalent {
                let (tv, _) = trace_pair(2, *ext, scen);
                assert_eq!(
                    tv.result,
                    VerdictResult::Equivalent,
                    "diff-eq verified {name}/{scen} but trace-eq does not"
                );
                verified += 1;
            }
        }
    }
    let (dv, _) = diff(3, Extensions::default(), "dy3");
    if dv.result == VerdictResult::Equivalent {
        let (tv, _) = trace_pair(3, Extensions::default(), "dy3");
        assert_eq!(tv.result, VerdictResult::Equivalent);
        verified += 1;
    }
    assert!(
        verified >= 8,
        "too few equivalent cells to cross-validate ({verified})"
    );
    eprintln!("criterion 8 (diff-eq implies trace-eq on {verified} verified cells): PASS");
}

#[test]
fn criterion_9_determinism() {
    // two consecutive runs of the verdict matrix must match byte for
    // byte, witnesses included (timing excluded: it is measurement, not
    // verdict). The three-voter dy3 cells run once elsewhere; all cells
    // here share the same deterministic machinery.
    let render = |v: &Verdict| -> String {
        format!(
            "{}|{:?}|{:?}|{:?}|states={}|frame={}",
            v.result,
            v.witness,
            v.inconclusive_reason,
            v.accepted_plan,
            v.stats.states,
            v.stats.max_frame_len
        )
    };
    let run_matrix = || -> String {
        let mut out = String::new();
        let exts = [
            ("base", Extensions::default()),
            ("counting", counting()),
            (
                "pins",
                Extensions {
                    pins: true,
                    ..Extensions::default()
                },
            ),
            (
                "hashchain",
                Extensions {
                    hashchain: true,
                    ..Extensions::default()
                },
            ),
        ];
        for (name, ext) in &exts {
            for scen in ["honest", "dy1", "dy2", "corrupt_tb"] {
                let (v, _) = diff(2, *ext, scen);
                out.push_str(&format!("diff/{name}/{scen}: {}\n", render(&v)));
            }
        }
        for scen in ["dy1", "dy2"] {
            let (v, _) = trace_pair(2, Extensions::default(), scen);
            out.push_str(&format!("trace/base/{scen}: {}\n", render(&v)));
        }
        out
    };
    let first = run_matrix();
    let second = run_matrix();
    assert_eq!(first, second, "verdict matrix changed between runs");
    eprintln!("criterion 9 (verdict matrix byte-identical across runs): PASS");
}
