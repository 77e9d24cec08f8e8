//! Media model, timeline, attention, control arbitration, sports, plot and
//! table layout for a multi-display living room.

pub mod arbiter;
pub mod attention;
pub mod layout;
pub mod model;
pub mod plot;
pub mod sports;
pub mod timeline;
pub mod track;

pub use model::{Activation, AttentionLevel, ContentDescriptor, ContentKind, Cue, DisplayRole, MediaTime, Window};
pub use track::{AmbientTrack, TrackError};
