//! Learning unit-weighted N-of-M clinical checklists from tabular outcome data.
//!
//! The pipeline has two phases per cross-validation fold: candidate rules
//! from a typed grammar are screened into a pool by a deterministic
//! retention gate, then a checklist of at most `M` pool rules is assembled,
//! refined, and thresholded on internal validation data.

pub mod assembly;
pub mod data;
pub mod eval;
pub mod grammar;
pub mod harness;
pub mod par;
pub mod pool;
pub mod proposal;
