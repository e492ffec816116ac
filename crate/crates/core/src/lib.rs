//! Common-ground tracking for multiparty block-construction dialogues.
//!
//! The crate models a 3×3×3 construction board, reconstructs builder actions
//! from structure logs, aligns speech, gesture, action and stance annotations
//! onto one timeline, runs an axiomatic belief / common-ground fold over it and
//! scores structure and common-ground predictions with set-overlap metrics.
//!
//! Module map:
//!
//! * [`blockworld`]: blocks, placements, side views and spatial relations.
//! * [`actionlog`]: put / remove / move extraction from snapshot logs.
//! * [`goalgen`]: seeded goal-structure generation and view rendering.
//! * [`annotations`]: canonical annotation file formats and their parsers.
//! * [`alignment`]: descriptor grounding, layer attachment, timeline merge.
//! * [`cgc`]: belief states, common-ground records and turn segmentation.
//! * [`metrics`]: Dice, Cohen's kappa and view-grid translation.
//! * [`llmbridge`]: prompt/response codec and chat-completion clients.
//! * [`importer`]: maps released dataset layouts onto the canonical files.
//! * [`pipeline`]: per-group wiring used by the command line tool.

pub mod actionlog;
pub mod alignment;
pub mod annotations;
pub mod blockworld;
pub mod cgc;
pub mod goalgen;
pub mod importer;
pub mod llmbridge;
pub mod metrics;
pub mod participants;
pub mod pipeline;
pub mod warning;

pub use actionlog::{diff_snapshots, extract_actions, ActionEvent, ActionKind, Snapshot};
pub use blockworld::{
    apply_action, check_contiguity, derive_all_relations, derive_relations, project_side_view,
    BlockId, Cell, Color, Orientation, Placement, Relation, RelationAtom, Shape, Side, SideView,
    StructureState, Term,
};
pub use participants::{Participant, SideAssignment};
pub use warning::{Warning, WarningKind};
