//! Recovery of SMT formulas from trained models: structural extraction over
//! the gated tree, coefficient rationalization, exact data filtering, and
//! loose-bound pruning.

mod data_filter;
mod extraction;
mod formula;
mod polish;
mod rationalize;

pub use data_filter::{atom_holds_on_matrix, filter_against_data, prune_loose_bounds};
pub use extraction::{
    bound_to_atom, extract_formula, extract_raw, ExtractionOutcome, RawFormula,
};
pub use formula::{Atom, Formula, Rel};
pub use polish::harvest_equalities;
pub use rationalize::{best_rational, rationalize, RationalizationConfig};
