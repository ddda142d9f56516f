//! Evaluation toolkit for machine-vision test campaigns.
//!
//! Pipeline: load a [`campaign::Campaign`], classify it with
//! [`matching::classify_campaign`], aggregate the classified relations into
//! an [`eerg::Eerg`], then mine [`deficits`] from the graph.

pub mod campaign;
pub mod cli;
pub mod deficits;
pub mod eerg;
pub mod matching;
pub mod ontology;
pub mod report;
pub mod synthesis;

pub use campaign::{load_campaign, Campaign};
pub use eerg::Eerg;
pub use matching::{classify_campaign, iou, ClassifyConfig, MatchConfig, ResultClass};
pub use ontology::{EntityRegistry, GranularityOrder, RelationChain};
