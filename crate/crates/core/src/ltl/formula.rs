use std::collections::BTreeSet;
use std::fmt;

/// LTL abstract syntax tree over named atomic propositions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    /// Every atomic proposition mentioned by the formula.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(f) | Formula::Always(f) => {
                f.collect_atoms(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// True when negations only sit directly above atoms and `F`/`G` are gone.
    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(f) => matches!(**f, Formula::Atom(_)),
            Formula::Eventually(_) | Formula::Always(_) => false,
            Formula::Next(f) => f.is_nnf(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                a.is_nnf() && b.is_nnf()
            }
        }
    }

    /// Negation normal form with `F φ = true U φ` and `G φ = false R φ`.
    pub fn to_nnf(&self) -> Formula {
        nnf(self, false)
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            Formula::Until(..) | Formula::Release(..) => 3,
            Formula::Not(_) | Formula::Next(_) | Formula::Eventually(_) | Formula::Always(_) => 4,
            Formula::True | Formula::False | Formula::Atom(_) => 5,
        }
    }
}

/// Free-function form of [`Formula::to_nnf`].
pub fn to_nnf(f: &Formula) -> Formula {
    f.to_nnf()
}

fn nnf(f: &Formula, negate: bool) -> Formula {
    use Formula::*;
    match (f, negate) {
        (True, false) | (False, true) => True,
        (False, false) | (True, true) => False,
        (Atom(_), false) => f.clone(),
        (Atom(_), true) => Formula::not(f.clone()),
        (Not(g), n) => nnf(g, !n),
        (And(a, b), false) => Formula::and(nnf(a, false), nnf(b, false)),
        (And(a, b), true) => Formula::or(nnf(a, true), nnf(b, true)),
        (Or(a, b), false) => Formula::or(nnf(a, false), nnf(b, false)),
        (Or(a, b), true) => Formula::and(nnf(a, true), nnf(b, true)),
        (Next(g), n) => Formula::next(nnf(g, n)),
        (Until(a, b), false) => Formula::until(nnf(a, false), nnf(b, false)),
        (Until(a, b), true) => Formula::release(nnf(a, true), nnf(b, true)),
        (Release(a, b), false) => Formula::release(nnf(a, false), nnf(b, false)),
        (Release(a, b), true) => Formula::until(nnf(a, true), nnf(b, true)),
        (Eventually(g), false) => Formula::until(True, nnf(g, false)),
        (Eventually(g), true) => Formula::release(False, nnf(g, true)),
        (Always(g), false) => Formula::release(False, nnf(g, false)),
        (Always(g), true) => Formula::until(True, nnf(g, true)),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prec = self.precedence();
        // `&`/`|` associate to the left, `U`/`R` to the right.
        let child = |f: &mut fmt::Formatter<'_>, c: &Formula, min: u8| -> fmt::Result {
            if c.precedence() < min {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        };
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => f.write_str(a),
            Formula::Not(g) => {
                f.write_str("!")?;
                child(f, g, prec)
            }
            Formula::Next(g) | Formula::Eventually(g) | Formula::Always(g) => {
                let op = match self {
                    Formula::Next(_) => "X",
                    Formula::Eventually(_) => "F",
                    _ => "G",
                };
                f.write_str(op)?;
                if g.precedence() < prec {
                    write!(f, "({g})")
                } else {
                    write!(f, " {g}")
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                let op = if matches!(self, Formula::And(..)) { "&" } else { "|" };
                child(f, a, prec)?;
                write!(f, " {op} ")?;
                child(f, b, prec + 1)
            }
            Formula::Until(a, b) | Formula::Release(a, b) => {
                let op = if matches!(self, Formula::Until(..)) { "U" } else { "R" };
                child(f, a, prec + 1)?;
                write!(f, " {op} ")?;
                child(f, b, prec)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Formula {
        Formula::atom("p")
    }

    fn q() -> Formula {
        Formula::atom("q")
    }

    #[test]
    fn negated_eventually_becomes_release() {
        let f = Formula::not(Formula::eventually(p()));
        assert_eq!(f.to_nnf(), Formula::release(Formula::False, Formula::not(p())));
    }

    #[test]
    fn negated_until_becomes_release() {
        let f = Formula::not(Formula::until(p(), q()));
        assert_eq!(f.to_nnf(), Formula::release(Formula::not(p()), Formula::not(q())));
    }

    #[test]
    fn negation_free_input_is_unchanged() {
        let f = Formula::and(p(), q());
        assert_eq!(f.to_nnf(), f);
    }

    #[test]
    fn nnf_desugars_temporal_shorthands() {
        let f = Formula::eventually(Formula::always(p()));
        let n = f.to_nnf();
        assert!(n.is_nnf());
        assert_eq!(
            n,
            Formula::until(Formula::True, Formula::release(Formula::False, p()))
        );
    }

    #[test]
    fn display_uses_minimal_parentheses() {
        let f = Formula::until(p(), Formula::or(q(), Formula::next(p())));
        assert_eq!(f.to_string(), "p U (q | X p)");
        let g = Formula::eventually(Formula::always(Formula::atom("all_obj_in_r2")));
        assert_eq!(g.to_string(), "F G all_obj_in_r2");
        let h = Formula::not(Formula::and(p(), q()));
        assert_eq!(h.to_string(), "!(p & q)");
    }
}
