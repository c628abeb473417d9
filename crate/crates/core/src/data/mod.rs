//! Rating data: interaction sets, user attributes, group assignments and the
//! preprocessing steps that produce them.

mod attributes;
mod events;
mod groups;
mod interactions;
pub mod synthetic;

pub use attributes::{AttributeFormat, AttributeTable};
pub use events::{aggregate_and_normalize_events, load_lfm_events, NormalizedEvents, PlayEvent};
pub use groups::{binarize_attribute, GroupAssignment};
pub use interactions::{
    filter_min_interactions, is_synthetic_user, load_interactions, synthetic_user_id, FormatSpec,
    Interaction, InteractionSet, RatingScale, SYNTHETIC_PREFIX,
};
