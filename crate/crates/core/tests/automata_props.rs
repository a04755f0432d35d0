use avgshape::automata::{compile_invariant, dfa_run, InvariantFormula, PropExpr, SafetyAutomaton};
use avgshape::labels::{ApRegistry, Letter};
use proptest::prelude::*;

fn expr(atoms: usize) -> impl Strategy<Value = PropExpr> {
    let leaf = prop_oneof![
        Just(PropExpr::True),
        Just(PropExpr::False),
        (0..atoms).prop_map(|i| PropExpr::Atom(format!("p{i}"))),
    ];
    leaf.prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| PropExpr::Not(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| PropExpr::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| PropExpr::Or(Box::new(a), Box::new(b))),
        ]
    })
}

/// Truth value of `e` under the letter whose bit `i` is atom `p{i}`.
fn truth(e: &PropExpr, letter: u32) -> bool {
    match e {
        PropExpr::True => true,
        PropExpr::False => false,
        PropExpr::Atom(name) => {
            let i: u32 = name[1..].parse().unwrap();
            letter >> i & 1 == 1
        }
        PropExpr::Not(a) => !truth(a, letter),
        PropExpr::And(a, b) => truth(a, letter) && truth(b, letter),
        PropExpr::Or(a, b) => truth(a, letter) || truth(b, letter),
    }
}

fn registry(n: usize) -> ApRegistry {
    ApRegistry::new((0..n).map(|i| format!("p{i}"))).unwrap()
}

fn check_words(aut: &SafetyAutomaton, body: &PropExpr, alphabet: u32, word: &mut Vec<Letter>, all_ok: bool) {
    assert_eq!(dfa_run(aut, word).accepted, all_ok, "word {word:?}");
    if word.len() == 6 {
        return;
    }
    for l in 0..alphabet {
        word.push(Letter(l));
        check_words(aut, body, alphabet, word, all_ok && truth(body, l));
        word.pop();
    }
}

fn cases() -> impl Strategy<Value = (usize, PropExpr)> {
    (1usize..=3).prop_flat_map(|n| (Just(n), expr(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepts_exactly_the_invariant_words((n, body) in cases()) {
        let reg = registry(n);
        let aut = compile_invariant(&InvariantFormula::new(body.clone()), &reg).unwrap();
        check_words(&aut, &body, 1 << n, &mut Vec::new(), true);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rejecting_states_absorb((n, body) in cases()) {
        let reg = registry(n);
        let aut = compile_invariant(&InvariantFormula::new(body), &reg).unwrap();
        for q in (0..aut.num_states()).filter(|&q| !aut.is_accepting(q)) {
            for l in 0..1u32 << n {
                prop_assert!(!aut.is_accepting(aut.step(q, Letter(l))));
            }
        }
    }

    #[test]
    fn serialised_automaton_is_isomorphic((n, body) in cases()) {
        let reg = registry(n);
        let aut = compile_invariant(&InvariantFormula::new(body), &reg).unwrap();
        let back = SafetyAutomaton::from_json_str(&aut.to_json_string()).unwrap();
        prop_assert!(aut.is_isomorphic(&back));
        prop_assert!(back.is_isomorphic(&aut));
    }

    #[test]
    fn printed_formula_parses_to_same_truth_table((n, body) in cases()) {
        let f = InvariantFormula::new(body.clone());
        let reparsed = InvariantFormula::parse(&f.to_string()).unwrap();
        let reg = registry(n);
        let a = compile_invariant(&f, &reg).unwrap();
        let b = compile_invariant(&reparsed, &reg).unwrap();
        prop_assert!(a.is_isomorphic(&b));
    }
}
