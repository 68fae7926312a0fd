//! Ultimately periodic words and two independent ways of deciding them:
//! running a Büchi automaton over the lasso, and evaluating LTL semantics
//! directly on the lasso positions.

use std::collections::{BTreeSet, HashSet, VecDeque};

use super::{BuchiAutomaton, Formula};

pub type Letter = BTreeSet<String>;

/// The infinite word `prefix · cycle^ω`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoWord {
    pub prefix: Vec<Letter>,
    pub cycle: Vec<Letter>,
}

impl LassoWord {
    /// Panics if `cycle` is empty.
    pub fn new(prefix: Vec<Letter>, cycle: Vec<Letter>) -> Self {
        assert!(!cycle.is_empty(), "a lasso needs a nonempty cycle");
        Self { prefix, cycle }
    }

    pub fn len(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn letter(&self, pos: usize) -> &Letter {
        if pos < self.prefix.len() {
            &self.prefix[pos]
        } else {
            &self.cycle[pos - self.prefix.len()]
        }
    }

    /// Successor position in the folded position graph.
    pub fn succ(&self, pos: usize) -> usize {
        if pos + 1 < self.len() {
            pos + 1
        } else {
            self.prefix.len()
        }
    }
}

/// Whether some run of `ba` over `w` visits an accepting state infinitely often.
pub fn accepts_lasso(ba: &BuchiAutomaton, w: &LassoWord) -> bool {
    let n = w.len();
    let node = |q: usize, i: usize| q * n + i;
    let total = ba.num_states() * n;
    let succ = |v: usize| -> Vec<usize> {
        let (q, i) = (v / n, v % n);
        ba.successors(q, w.letter(i)).into_iter().map(|q2| node(q2, w.succ(i))).collect()
    };

    let mut reachable = vec![false; total];
    let start = node(ba.initial(), 0);
    reachable[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for t in succ(v) {
            if !reachable[t] {
                reachable[t] = true;
                queue.push_back(t);
            }
        }
    }

    // Nested search: an accepting node that can reach itself.
    (0..total)
        .filter(|&v| reachable[v] && ba.is_accepting(v / n))
        .any(|acc| {
            let mut seen = HashSet::new();
            let mut queue: VecDeque<usize> = succ(acc).into();
            while let Some(v) = queue.pop_front() {
                if v == acc {
                    return true;
                }
                if seen.insert(v) {
                    queue.extend(succ(v));
                }
            }
            false
        })
}

/// Standard LTL semantics of `f` at position 0 of `w`.
///
/// Evaluates every subformula at every folded position bottom-up; shares no
/// code with the automaton construction.
pub fn formula_holds_on_lasso(f: &Formula, w: &LassoWord) -> bool {
    eval(f, w)[0]
}

fn eval(f: &Formula, w: &LassoWord) -> Vec<bool> {
    let n = w.len();
    match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Atom(a) => (0..n).map(|i| w.letter(i).contains(a)).collect(),
        Formula::Not(g) => eval(g, w).into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => zip(eval(a, w), eval(b, w), |x, y| x && y),
        Formula::Or(a, b) => zip(eval(a, w), eval(b, w), |x, y| x || y),
        Formula::Next(g) => {
            let v = eval(g, w);
            (0..n).map(|i| v[w.succ(i)]).collect()
        }
        Formula::Until(a, b) => until(&eval(a, w), &eval(b, w), w),
        Formula::Eventually(g) => until(&vec![true; n], &eval(g, w), w),
        Formula::Release(a, b) => {
            // a R b == !(!a U !b)
            let na: Vec<bool> = eval(a, w).into_iter().map(|x| !x).collect();
            let nb: Vec<bool> = eval(b, w).into_iter().map(|x| !x).collect();
            until(&na, &nb, w).into_iter().map(|x| !x).collect()
        }
        Formula::Always(g) => {
            let ng: Vec<bool> = eval(g, w).into_iter().map(|x| !x).collect();
            until(&vec![true; n], &ng, w).into_iter().map(|x| !x).collect()
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

/// `lhs U rhs` at each position: walk forward at most `n` steps, which
/// covers every position reachable from the start.
fn until(lhs: &[bool], rhs: &[bool], w: &LassoWord) -> Vec<bool> {
    let n = w.len();
    (0..n)
        .map(|start| {
            let mut pos = start;
            for _ in 0..n {
                if rhs[pos] {
                    return true;
                }
                if !lhs[pos] {
                    return false;
                }
                pos = w.succ(pos);
            }
            false
        })
        .collect()
}

/// Every lasso over `atoms` with prefix length `<= max_prefix` and cycle
/// length in `1..=max_cycle`.
pub fn enumerate_lassos(atoms: &[&str], max_prefix: usize, max_cycle: usize) -> Vec<LassoWord> {
    let letters: Vec<Letter> = (0..1usize << atoms.len())
        .map(|mask| {
            atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, a)| a.to_string())
                .collect()
        })
        .collect();
    let words_of = |len: usize| -> Vec<Vec<Letter>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    letters.iter().map(move |l| {
                        let mut w2 = w.clone();
                        w2.push(l.clone());
                        w2
                    })
                })
                .collect();
        }
        out
    };
    let mut lassos = Vec::new();
    for p in 0..=max_prefix {
        for prefix in words_of(p) {
            for c in 1..=max_cycle {
                for cycle in words_of(c) {
                    lassos.push(LassoWord::new(prefix.clone(), cycle));
                }
            }
        }
    }
    lassos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{build_buchi, parse_formula};

    fn letter(atoms: &[&str]) -> Letter {
        atoms.iter().map(|s| s.to_string()).collect()
    }

    fn ba(text: &str) -> BuchiAutomaton {
        build_buchi(&parse_formula(text).unwrap().to_nnf())
    }

    fn f(text: &str) -> Formula {
        parse_formula(text).unwrap()
    }

    #[test]
    fn always_p_on_constant_p() {
        let w = LassoWord::new(vec![], vec![letter(&["p"])]);
        assert!(accepts_lasso(&ba("G p"), &w));
    }

    #[test]
    fn always_p_rejects_eventual_failure() {
        let w = LassoWord::new(vec![letter(&["p"])], vec![letter(&[])]);
        assert!(!accepts_lasso(&ba("G p"), &w));
    }

    #[test]
    fn eventually_always_p_from_position_one() {
        let w = LassoWord::new(vec![letter(&[])], vec![letter(&["p"])]);
        assert!(accepts_lasso(&ba("F G p"), &w));
    }

    #[test]
    fn semantics_until() {
        let w = LassoWord::new(vec![letter(&["p"]), letter(&["p", "q"])], vec![letter(&[])]);
        assert!(formula_holds_on_lasso(&f("p U q"), &w));
    }

    #[test]
    fn semantics_next() {
        let w = LassoWord::new(vec![letter(&[])], vec![letter(&["p"])]);
        assert!(formula_holds_on_lasso(&f("X p"), &w));
    }

    #[test]
    fn semantics_persistence_fails_on_alternation() {
        let w = LassoWord::new(vec![], vec![letter(&["p"]), letter(&[])]);
        assert!(!formula_holds_on_lasso(&f("F G p"), &w));
        assert!(formula_holds_on_lasso(&f("G F p"), &w));
    }

    #[test]
    fn enumeration_counts() {
        // (1 + 4 + 16 + 64) prefixes times (4 + 16 + 64) cycles.
        assert_eq!(enumerate_lassos(&["p", "q"], 3, 3).len(), 85 * 84);
    }
}
