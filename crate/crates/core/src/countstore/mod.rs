//! Per-row/column topic counts, global topic counts, alias tables and the
//! proposal samplers built on them.

mod alias;
mod global;
mod proposal;
mod sparse;

pub use alias::{alias_draw, build_alias, AliasError, AliasTable};
pub use global::{ConservationError, GlobalState};
pub use proposal::{
    doc_proposal_law, draw_doc_proposal, draw_word_proposal, word_proposal_law, DocProposal, ProposalError,
    WordProposal,
};
pub use sparse::{CountError, SparseCounts};

/// Counts of `assignments` over `topics` topics.
pub fn counts_from_assignments(assignments: &[u32], topics: usize) -> Result<SparseCounts, CountError> {
    SparseCounts::from_assignments(assignments, topics)
}
