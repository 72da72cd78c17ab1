//! Open-world loop: identity registry, per-query membership decisions,
//! online model adaptation, and the epoch-structured query stream that
//! ties them to the evaluators.

mod decide;
mod registry;
mod stream;

pub use decide::{decide, AcceptRule, Decision};
pub use registry::{IdentityRegistry, NearestCandidate, DEFAULT_GALLERY_CAP};
pub use stream::{
    online_update, run_stream, DecisionKind, OutcomeRow, StreamConfig, StreamReport, StreamState,
    METRICS_CSV_HEADER, OUTCOME_CSV_HEADER,
};
