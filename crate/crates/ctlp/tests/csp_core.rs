use ctlp::corpus::{random_corpus, random_instance, rng, CorpusLimits};
use ctlp::csp::fixtures::*;
use ctlp::csp::*;
use ctlp::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn small_instance() -> impl Strategy<Value = CspInstance> {
    (any::<u64>(), 2usize..=3, 1usize..=3, 1usize..=4, 2usize..=8).prop_map(|(seed, q, s, t, n)| {
        let mut r = rng(seed);
        let w = if seed % 2 == 0 { 1.0 } else { 2.0 };
        random_instance(&mut r, q, s, t, n, w)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(inst in small_instance()) {
        let back = CspInstance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn degrees_respect_t(inst in small_instance()) {
        prop_assert!(inst.max_degree() <= inst.t);
        for v in 0..inst.n {
            for &c in inst.incident(v) {
                prop_assert!(inst.constraints[c].scope.contains(&v));
            }
        }
    }

    #[test]
    fn evaluate_bounded_by_opt(inst in small_instance(), seed in any::<u64>()) {
        let (opt, arg) = brute_force_opt(&inst).unwrap();
        prop_assert_eq!(evaluate(&inst, &arg), opt);
        prop_assert!(opt <= inst.total_weight());
        let mut r = rng(seed);
        let beta: Vec<usize> = (0..inst.n).map(|_| rand::Rng::gen_range(&mut r, 0..inst.q)).collect();
        let v = evaluate(&inst, &beta);
        prop_assert!(v >= 0.0 && v <= opt);
    }

    #[test]
    fn oracle_walks_the_index(inst in small_instance()) {
        let mut o = ConstraintOracle::new(&inst);
        for v in 0..inst.n {
            for i in 1..=inst.t {
                let got = o.query(v, i).map(|(c, _)| c);
                prop_assert_eq!(got, inst.incident(v).get(i - 1).copied());
            }
        }
        prop_assert_eq!(o.query_count(), (inst.n * inst.t) as u64);
    }

    #[test]
    fn reindexing_keeps_the_instance_value(inst in small_instance(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let index: Vec<Vec<usize>> = (0..inst.n)
            .map(|v| {
                let mut l = inst.incident(v).to_vec();
                l.shuffle(&mut r);
                l
            })
            .collect();
        let re = inst.clone().with_index(index.clone()).unwrap();
        for v in 0..inst.n {
            prop_assert_eq!(re.incident(v), &index[v][..]);
        }
        prop_assert_eq!(brute_force_opt(&re).unwrap().0, brute_force_opt(&inst).unwrap().0);
        let back = CspInstance::from_json(&re.to_json()).unwrap();
        prop_assert_eq!(back, re);
    }
}

#[test]
fn truth_table_first_position_most_significant() {
    // x0 ∧ ¬x1 is true only at (1, 0), index 2
    let p = Predicate::from_fn("and_not", 2, 2, |v| v[0] == 1 && v[1] == 0);
    assert_eq!(p.truth_table, vec![0, 0, 1, 0]);
    assert_eq!(encode(&[1, 0], 2), 2);
    let mut out = [0; 3];
    decode(encode(&[2, 0, 1], 3), 3, &mut out);
    assert_eq!(out, [2, 0, 1]);
}

#[test]
fn fixture_ground_truth() {
    assert_eq!(brute_force_opt(&triangle()).unwrap().0, 2.0);
    assert_eq!(brute_force_opt(&single()).unwrap().0, 1.0);
    assert_eq!(distance_to_satisfiability(&triangle()).unwrap(), 1);
    assert_eq!(brute_force_opt(&empty(3, 4)).unwrap().0, 0.0);
}

#[test]
fn loader_rejects_bad_instances() {
    let deg = r#"{"q":2,"s":2,"t":1,"w":1,"n":3,"predicates":[{"name":"neq","arity":2,"truth_table":[0,1,1,0]}],
        "constraints":[{"predicate":0,"scope":[0,1]},{"predicate":0,"scope":[0,2]}]}"#;
    assert_eq!(CspInstance::from_json(deg), Err(Error::DegreeExceeded(0)));
    let table = r#"{"q":2,"s":2,"t":1,"w":1,"n":2,"predicates":[{"name":"neq","arity":2,"truth_table":[0,1,1]}],
        "constraints":[]}"#;
    assert!(matches!(CspInstance::from_json(table), Err(Error::BadTruthTableLength(_))));
    let weight = r#"{"q":2,"s":2,"t":1,"w":1,"n":2,"predicates":[{"name":"neq","arity":2,"truth_table":[0,1,1,0]}],
        "constraints":[{"predicate":"neq","scope":[0,1],"weight":3}]}"#;
    assert_eq!(CspInstance::from_json(weight), Err(Error::WeightOutOfRange(0)));
}

#[test]
fn brute_force_budget_is_enforced() {
    let inst = max_cut(30, 2, &[(0, 1)]);
    assert!(brute_force_opt_with_budget(&inst, 1 << 20).unwrap_err().is_budget());
}

#[test]
fn corpus_respects_limits() {
    let limits = CorpusLimits::brute_force();
    for inst in random_corpus(4, 50, limits) {
        assert!(inst.q <= limits.q_max && inst.s <= limits.s_max && inst.t <= limits.t_max);
        assert!(inst.n >= limits.n_min && inst.n <= limits.n_max);
        assert!(inst.max_degree() <= inst.t);
    }
}
