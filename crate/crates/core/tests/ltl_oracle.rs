//! Automaton construction checked against direct LTL semantics on every
//! small lasso over {p, q}.

use ltlbt_core::ltl::{accepts_lasso, build_buchi, enumerate_lassos, formula_holds_on_lasso, parse_formula};

const CORPUS: [&str; 10] = ["p", "!p", "X p", "F p", "G p", "F G p", "G F p", "p U q", "p R q", "F (p & q)"];

#[test]
fn automata_agree_with_semantics_on_all_small_lassos() {
    let words = enumerate_lassos(&["p", "q"], 3, 3);
    for text in CORPUS {
        let f = parse_formula(text).unwrap();
        let ba = build_buchi(&f.to_nnf());
        for w in &words {
            assert_eq!(
                accepts_lasso(&ba, w),
                formula_holds_on_lasso(&f, w),
                "{text} disagrees on prefix={:?} cycle={:?}",
                w.prefix,
                w.cycle
            );
        }
    }
}

#[test]
fn larger_formulas_agree_with_semantics() {
    let words = enumerate_lassos(&["p", "q"], 2, 2);
    for text in [
        "G F p & G F q",
        "F G p | G F q",
        "(p U q) R (X p)",
        "!(p U (q | X p))",
        "G (p | X q)",
        "X X (p & !q)",
        "F G (p & q) & G F !p",
        "(F p) U (G q)",
    ] {
        let f = parse_formula(text).unwrap();
        let ba = build_buchi(&f);
        for w in &words {
            assert_eq!(accepts_lasso(&ba, w), formula_holds_on_lasso(&f, w), "{text} on {w:?}");
        }
    }
}
