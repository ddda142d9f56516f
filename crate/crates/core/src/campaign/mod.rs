//! Test campaigns: runs of frames holding annotated ground truth and the
//! detector output recorded for them.

mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ontology::{EntityRegistry, GranularityOrder, RelationChain};

pub use format::{
    read_campaign, read_campaign_diagnostics, registry_decls, registry_from_decls, write_campaign,
    EntityDecl, FORMAT_VERSION,
};

/// Axis-aligned box, `min < max` on both axes. Units are whatever the
/// campaign uses (pixels or metres), uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.is_well_formed().then_some(b)
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// True when the interiors overlap.
    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub gt_id: String,
    /// Reaches at least the instance order.
    pub chain: RelationChain,
    /// Label of the chain's instance entity.
    pub class_label: String,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pred_id: String,
    pub class_label: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub timestamp_us: u64,
    /// Context that unmatched predictions are attributed to.
    pub ambient: Option<RelationChain>,
    pub ground_truth: Vec<GroundTruthObject>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub id: String,
    pub scenario_tag: String,
    /// Strictly increasing timestamps.
    pub frames: Vec<FrameRecord>,
}

/// A validated campaign. Runs are sorted by id, frames by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub id: String,
    pub registry: Arc<EntityRegistry>,
    pub runs: Vec<Run>,
}

/// Where a problem was found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub line: Option<usize>,
    pub run_id: Option<String>,
    pub frame_id: Option<String>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(frame) = &self.frame_id {
            parts.push(format!("frame '{frame}'"));
        }
        if let Some(run) = &self.run_id {
            parts.push(format!("run '{run}'"));
        }
        if let Some(line) = self.line {
            parts.push(format!("line {line}"));
        }
        if parts.is_empty() {
            f.write_str("campaign")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{location}: {reason}")]
pub struct ValidationError {
    pub location: Location,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl LoadError {
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Io { .. })
    }
}

/// Options controlling how chains are resolved while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub mode: crate::ontology::ChainMode,
}

/// Loads and validates a campaign file, chains resolved strictly.
pub fn load_campaign(path: impl AsRef<Path>) -> Result<Campaign, LoadError> {
    load_campaign_with(path, LoadOptions::default())
}

pub fn load_campaign_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<Campaign, LoadError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_campaign(std::io::BufReader::new(file), options).map_err(|e| match e {
        LoadError::Io { source, .. } => LoadError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

impl Campaign {
    /// Validates and canonicalises a campaign built in memory.
    pub fn new(id: impl Into<String>, registry: Arc<EntityRegistry>, runs: Vec<Run>) -> Result<Self, ValidationError> {
        let mut campaign = Campaign {
            id: id.into(),
            registry,
            runs,
        };
        let errors = campaign.canonicalize();
        match errors.into_iter().next() {
            Some(err) => Err(err),
            None => Ok(campaign),
        }
    }

    pub fn empty(id: impl Into<String>) -> Self {
        Campaign {
            id: id.into(),
            registry: Arc::new(EntityRegistry::new()),
            runs: Vec::new(),
        }
    }

    /// Sorts runs and frames and reports every violated invariant.
    pub(crate) fn canonicalize(&mut self) -> Vec<ValidationError> {
        let mut errors = Vec::new();
        let mut seen_runs = BTreeSet::new();
        for run in &self.runs {
            if !seen_runs.insert(run.id.clone()) {
                errors.push(ValidationError {
                    location: Location {
                        run_id: Some(run.id.clone()),
                        ..Location::default()
                    },
                    reason: "duplicate run id".into(),
                });
            }
        }
        self.runs.sort_by(|a, b| a.id.cmp(&b.id));
        for run in &mut self.runs {
            run.frames
                .sort_by(|a, b| (a.timestamp_us, &a.frame_id).cmp(&(b.timestamp_us, &b.frame_id)));
            let mut frame_ids = BTreeSet::new();
            for (i, frame) in run.frames.iter().enumerate() {
                let location = Location {
                    line: None,
                    run_id: Some(run.id.clone()),
                    frame_id: Some(frame.frame_id.clone()),
                };
                if !frame_ids.insert(frame.frame_id.as_str()) {
                    errors.push(ValidationError {
                        location: location.clone(),
                        reason: "duplicate frame id within run".into(),
                    });
                }
                if i > 0 && run.frames[i - 1].timestamp_us == frame.timestamp_us {
                    errors.push(ValidationError {
                        location: location.clone(),
                        reason: format!(
                            "timestamp {} repeats; timestamps must strictly increase within a run",
                            frame.timestamp_us
                        ),
                    });
                }
                for reason in validate_frame(&self.registry, frame) {
                    errors.push(ValidationError {
                        location: location.clone(),
                        reason,
                    });
                }
            }
        }
        errors
    }

    pub fn frames(&self) -> impl Iterator<Item = (&Run, &FrameRecord)> {
        self.runs
            .iter()
            .flat_map(|run| run.frames.iter().map(move |f| (run, f)))
    }
}

/// Invariants of one frame against a registry. Returns one message per
/// violation.
pub(crate) fn validate_frame(registry: &EntityRegistry, frame: &FrameRecord) -> Vec<String> {
    let mut problems = Vec::new();
    if frame.frame_id.is_empty() {
        problems.push("frame id is empty".to_owned());
    }
    let mut gt_ids = BTreeSet::new();
    for gt in &frame.ground_truth {
        if !gt_ids.insert(gt.gt_id.as_str()) {
            problems.push(format!("duplicate gt_id '{}'", gt.gt_id));
        }
        if let Err(e) = registry.validate_chain(&gt.chain) {
            problems.push(format!("gt '{}': {e}", gt.gt_id));
        }
        problems.extend(check_instance(gt));
        if !gt.bbox.is_well_formed() {
            problems.push(format!("gt '{}': malformed bounding box", gt.gt_id));
        }
    }
    let mut pred_ids = BTreeSet::new();
    for pred in &frame.predictions {
        if !pred_ids.insert(pred.pred_id.as_str()) {
            problems.push(format!("duplicate pred_id '{}'", pred.pred_id));
        }
        if let Err(e) = crate::ontology::validate_label(&pred.class_label) {
            problems.push(format!("prediction '{}': {e}", pred.pred_id));
        }
        if !pred.bbox.is_well_formed() {
            problems.push(format!("prediction '{}': malformed bounding box", pred.pred_id));
        }
        if !(pred.confidence.is_finite() && (0.0..=1.0).contains(&pred.confidence)) {
            problems.push(format!(
                "prediction '{}': confidence {} outside [0, 1]",
                pred.pred_id, pred.confidence
            ));
        }
    }
    if let Some(ambient) = &frame.ambient {
        if let Err(e) = registry.validate_chain(ambient) {
            problems.push(format!("ambient: {e}"));
        }
    }
    problems
}

fn check_instance(gt: &GroundTruthObject) -> Option<String> {
    match gt.chain.label_at(GranularityOrder::Instance) {
        None => Some(format!(
            "gt '{}': chain lacks instance (chain '{}' ends at order {})",
            gt.gt_id,
            gt.chain,
            gt.chain.terminal_order()
        )),
        Some(label) if label != gt.class_label => Some(format!(
            "gt '{}': class_label '{}' differs from instance '{}'",
            gt.gt_id, gt.class_label, label
        )),
        Some(_) => None,
    }
}

/// Exact counts over a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CampaignStats {
    pub runs: usize,
    pub frames: usize,
    pub ground_truth: usize,
    pub predictions: usize,
    /// Annotated entities per order, keyed by order value.
    pub entities_per_order: BTreeMap<i8, usize>,
}

impl CampaignStats {
    pub fn entities_at(&self, order: GranularityOrder) -> usize {
        self.entities_per_order
            .get(&order.value())
            .copied()
            .unwrap_or(0)
    }
}

pub fn campaign_stats(campaign: &Campaign) -> CampaignStats {
    let frames = campaign.frames().count();
    let ground_truth = campaign.frames().map(|(_, f)| f.ground_truth.len()).sum();
    let predictions = campaign.frames().map(|(_, f)| f.predictions.len()).sum();
    CampaignStats {
        runs: campaign.runs.len(),
        frames,
        ground_truth,
        predictions,
        entities_per_order: campaign
            .registry
            .count_by_order(false)
            .into_iter()
            .map(|(o, n)| (o.value(), n))
            .collect(),
    }
}
