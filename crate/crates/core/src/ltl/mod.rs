//! Linear temporal logic: syntax, normalization, Büchi translation and a
//! lasso-based semantic oracle.

mod buchi;
mod formula;
mod lasso;
mod parse;

pub use buchi::{build_buchi, BaEdge, BaState, BuchiAutomaton, Guard};
pub use formula::{to_nnf, Formula};
pub use lasso::{accepts_lasso, enumerate_lassos, formula_holds_on_lasso, LassoWord, Letter};
pub use parse::{parse_formula, ParseError};
