//! Per-frame matching of predictions to ground truth and the four result
//! classes.
//!
//! A prediction matches a ground-truth object when their IoU reaches the
//! configured threshold (the tolerable deviation). Matching is one-to-one
//! and greedy: candidate pairs are taken by descending IoU, ties broken by
//! `gt_id` and then `pred_id`.
//!
//! | class | meaning |
//! |-------|---------|
//! | R0 | matched, classes agree |
//! | R1 | matched, classes differ |
//! | R2 | ground-truth object without a match |
//! | R3 | prediction without a match (phantom) |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, AddAssign, Index};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{BoundingBox, Campaign, FrameRecord};
use crate::ontology::{
    EntityId, EntityRegistry, GranularityOrder, OntologyError, RelationChain, SYNTHETIC_MARKER,
};

/// Label of the placeholder entities filling orders an ambient context does
/// not annotate.
pub const PLACEHOLDER_LABEL: &str = "unassigned\u{2020}";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("IoU threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("min confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("phantom prediction '{pred_id}' in frame '{frame_id}' (run '{run_id}') but the frame declares no ambient context")]
    AmbientMissing {
        run_id: String,
        frame_id: String,
        pred_id: String,
    },
    #[error("cannot attribute phantom '{pred_id}' in frame '{frame_id}': {source}")]
    Phantom {
        frame_id: String,
        pred_id: String,
        #[source]
        source: OntologyError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResultClass {
    R0,
    R1,
    R2,
    R3,
}

impl ResultClass {
    pub const ALL: [ResultClass; 4] = [ResultClass::R0, ResultClass::R1, ResultClass::R2, ResultClass::R3];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn is_failure(self) -> bool {
        !matches!(self, ResultClass::R0)
    }

    pub const fn description(self) -> &'static str {
        match self {
            ResultClass::R0 => "recognized",
            ResultClass::R1 => "misclassified",
            ResultClass::R2 => "unrecognized",
            ResultClass::R3 => "phantom",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "R0" | "r0" => Some(ResultClass::R0),
            "R1" | "r1" => Some(ResultClass::R1),
            "R2" | "r2" => Some(ResultClass::R2),
            "R3" | "r3" => Some(ResultClass::R3),
            _ => None,
        }
    }
}

impl fmt::Display for ResultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.index())
    }
}

/// Count per result class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ClassCounts([u64; 4]);

impl ClassCounts {
    pub fn new(r0: u64, r1: u64, r2: u64, r3: u64) -> Self {
        Self([r0, r1, r2, r3])
    }

    pub fn record(&mut self, class: ResultClass) {
        self.0[class.index()] += 1;
    }

    pub fn get(&self, class: ResultClass) -> u64 {
        self.0[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn failures(&self) -> u64 {
        self.total() - self.0[0]
    }

    /// Failures observed and no recognition at all.
    pub fn is_failure_only(&self) -> bool {
        self.0[0] == 0 && self.failures() > 0
    }

    /// The class holding a strict majority of the counts, if any.
    pub fn dominant(&self) -> Option<ResultClass> {
        let total = self.total();
        ResultClass::ALL
            .into_iter()
            .find(|&c| 2 * self.get(c) > total)
    }

    pub fn as_array(&self) -> [u64; 4] {
        self.0
    }
}

impl Index<ResultClass> for ClassCounts {
    type Output = u64;

    fn index(&self, class: ResultClass) -> &u64 {
        &self.0[class.index()]
    }
}

impl Add for ClassCounts {
    type Output = ClassCounts;

    fn add(mut self, rhs: ClassCounts) -> ClassCounts {
        self += rhs;
        self
    }
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, rhs: ClassCounts) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "R0={} R1={} R2={} R3={}",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

impl Serialize for ClassCounts {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(4))?;
        for class in ResultClass::ALL {
            map.serialize_entry(&class, &self.get(class))?;
        }
        map.end()
    }
}

/// Intersection over union of two well-formed boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let width = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let height = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if width <= 0.0 || height <= 0.0 {
        return 0.0;
    }
    let intersection = width * height;
    let union = a.area() + b.area() - intersection;
    (intersection / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    iou_threshold: f64,
    /// Maps class labels to a canonical label before comparison.
    pub class_equivalences: BTreeMap<String, String>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            class_equivalences: BTreeMap::new(),
        }
    }
}

impl MatchConfig {
    pub fn new(iou_threshold: f64) -> Result<Self, MatchError> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(MatchError::InvalidThreshold(iou_threshold));
        }
        Ok(Self {
            iou_threshold,
            class_equivalences: BTreeMap::new(),
        })
    }

    pub fn with_equivalences(mut self, map: BTreeMap<String, String>) -> Self {
        self.class_equivalences = map;
        self
    }

    pub fn iou_threshold(&self) -> f64 {
        self.iou_threshold
    }

    pub fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        self.class_equivalences
            .get(label)
            .map(String::as_str)
            .unwrap_or(label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Subject {
    GroundTruth(String),
    Prediction(String),
}

impl Subject {
    pub fn id(&self) -> &str {
        match self {
            Subject::GroundTruth(id) | Subject::Prediction(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub subject: Subject,
    /// Prediction matched to a ground-truth subject (R0/R1 only).
    pub counterpart: Option<String>,
    /// IoU of the match, or the best IoU against the other side when
    /// unmatched.
    pub iou: f64,
    pub result: ResultClass,
}

/// Outcomes of one frame: ground-truth subjects sorted by id, then
/// unmatched predictions sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameClassification {
    pub frame_id: String,
    pub outcomes: Vec<Outcome>,
}

impl FrameClassification {
    pub fn counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for o in &self.outcomes {
            counts.record(o.result);
        }
        counts
    }
}

/// Classifies one frame. Pure; frames may be processed in parallel.
pub fn match_frame(frame: &FrameRecord, cfg: &MatchConfig) -> FrameClassification {
    let threshold = cfg.iou_threshold;
    let gts = &frame.ground_truth;
    let preds = &frame.predictions;

    let mut table = vec![0.0f64; gts.len() * preds.len()];
    let mut candidates = Vec::new();
    for (gi, gt) in gts.iter().enumerate() {
        for (pi, pred) in preds.iter().enumerate() {
            let value = iou(&gt.bbox, &pred.bbox);
            table[gi * preds.len() + pi] = value;
            if value >= threshold {
                candidates.push((value, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| gts[a.1].gt_id.cmp(&gts[b.1].gt_id))
            .then_with(|| preds[a.2].pred_id.cmp(&preds[b.2].pred_id))
    });

    let mut gt_match: Vec<Option<usize>> = vec![None; gts.len()];
    let mut pred_taken = vec![false; preds.len()];
    for (_, gi, pi) in candidates {
        if gt_match[gi].is_none() && !pred_taken[pi] {
            gt_match[gi] = Some(pi);
            pred_taken[pi] = true;
        }
    }

    let best = |values: &mut dyn Iterator<Item = f64>| values.fold(0.0f64, f64::max);
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by(|&a, &b| gts[a].gt_id.cmp(&gts[b].gt_id));
    let mut outcomes = Vec::with_capacity(gts.len() + preds.len());
    for gi in gt_order {
        let gt = &gts[gi];
        let outcome = match gt_match[gi] {
            Some(pi) => {
                let pred = &preds[pi];
                let same = cfg.canonical(&gt.class_label) == cfg.canonical(&pred.class_label);
                Outcome {
                    subject: Subject::GroundTruth(gt.gt_id.clone()),
                    counterpart: Some(pred.pred_id.clone()),
                    iou: table[gi * preds.len() + pi],
                    result: if same { ResultClass::R0 } else { ResultClass::R1 },
                }
            }
            None => Outcome {
                subject: Subject::GroundTruth(gt.gt_id.clone()),
                counterpart: None,
                iou: best(&mut (0..preds.len()).map(|pi| table[gi * preds.len() + pi])),
                result: ResultClass::R2,
            },
        };
        outcomes.push(outcome);
    }
    let mut pred_order: Vec<usize> = (0..preds.len()).filter(|&pi| !pred_taken[pi]).collect();
    pred_order.sort_by(|&a, &b| preds[a].pred_id.cmp(&preds[b].pred_id));
    for pi in pred_order {
        outcomes.push(Outcome {
            subject: Subject::Prediction(preds[pi].pred_id.clone()),
            counterpart: None,
            iou: best(&mut (0..gts.len()).map(|gi| table[gi * preds.len() + pi])),
            result: ResultClass::R3,
        });
    }
    FrameClassification {
        frame_id: frame.frame_id.clone(),
        outcomes,
    }
}

/// A relation chain stamped with a result class and where it was observed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ClassifiedRelation {
    pub chain: RelationChain,
    pub result: ResultClass,
    pub run_id: String,
    pub frame_id: String,
    /// Ground-truth id, or prediction id for phantoms.
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub matching: MatchConfig,
    /// Predictions below this confidence are dropped before matching.
    pub min_confidence: f64,
    /// Keep one relation per (run, subject, chain, result).
    pub dedupe_per_run: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            min_confidence: 0.0,
            dedupe_per_run: false,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(MatchError::InvalidConfidence(self.min_confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedFrame {
    pub run_id: String,
    pub classification: FrameClassification,
}

/// Result of classifying a whole campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Campaign registry plus the synthetic entities phantoms were
    /// attributed to.
    pub registry: Arc<EntityRegistry>,
    /// In campaign order: runs by id, frames by timestamp.
    pub frames: Vec<ClassifiedFrame>,
    pub relations: Vec<ClassifiedRelation>,
}

impl Classification {
    pub fn totals(&self) -> ClassCounts {
        self.frames
            .iter()
            .fold(ClassCounts::default(), |acc, f| acc + f.classification.counts())
    }

    pub fn run_totals(&self) -> BTreeMap<&str, ClassCounts> {
        let mut totals: BTreeMap<&str, ClassCounts> = BTreeMap::new();
        for f in &self.frames {
            *totals.entry(f.run_id.as_str()).or_default() += f.classification.counts();
        }
        totals
    }
}

/// Builds the chain a phantom is attributed to: the ambient context with
/// its instance replaced by a synthetic entity named after the predicted
/// class. Orders above the instance that the context leaves open are filled
/// with placeholders; orders below the instance are kept from the context.
pub fn phantom_chain(
    registry: &mut EntityRegistry,
    ambient: &RelationChain,
    predicted_class: &str,
) -> Result<RelationChain, OntologyError> {
    let mut ids: Vec<EntityId> = Vec::with_capacity(7);
    for order in [GranularityOrder::Domain, GranularityOrder::Scene, GranularityOrder::Group] {
        let id = match ambient.entity_at(order) {
            Some(id) => id,
            None => registry.register_synthetic(PLACEHOLDER_LABEL, order, ids.last())?,
        };
        ids.push(id);
    }
    let phantom_label = format!("{predicted_class}{SYNTHETIC_MARKER}");
    let phantom = registry.register_synthetic(&phantom_label, GranularityOrder::Instance, ids.last())?;
    ids.push(phantom);
    for order in [GranularityOrder::Module, GranularityOrder::Component, GranularityOrder::Element] {
        let Some(id) = ambient.entity_at(order) else { break };
        registry.link(ids.last().expect("non-empty"), &id)?;
        ids.push(id);
    }
    Ok(RelationChain::from_ids(&ids))
}

/// Classifies every frame of a campaign and emits one classified relation
/// per outcome. Output order is deterministic regardless of scheduling.
pub fn classify_campaign(campaign: &Campaign, cfg: &ClassifyConfig) -> Result<Classification, MatchError> {
    cfg.validate()?;
    let frames: Vec<(&str, &FrameRecord)> = campaign
        .frames()
        .map(|(run, frame)| (run.id.as_str(), frame))
        .collect();
    let classified: Vec<FrameClassification> = frames
        .par_iter()
        .map(|(_, frame)| {
            if cfg.min_confidence > 0.0 {
                let mut filtered = (*frame).clone();
                filtered
                    .predictions
                    .retain(|p| p.confidence >= cfg.min_confidence);
                match_frame(&filtered, &cfg.matching)
            } else {
                match_frame(frame, &cfg.matching)
            }
        })
        .collect();

    let mut registry = (*campaign.registry).clone();
    let mut relations = Vec::new();
    let mut seen = BTreeSet::new();
    for ((run_id, frame), classification) in frames.iter().zip(&classified) {
        for outcome in &classification.outcomes {
            let chain = match &outcome.subject {
                Subject::GroundTruth(id) => frame
                    .ground_truth
                    .iter()
                    .find(|g| &g.gt_id == id)
                    .map(|g| g.chain.clone())
                    .expect("outcome subjects come from the frame"),
                Subject::Prediction(id) => {
                    let Some(ambient) = &frame.ambient else {
                        return Err(MatchError::AmbientMissing {
                            run_id: run_id.to_string(),
                            frame_id: frame.frame_id.clone(),
                            pred_id: id.clone(),
                        });
                    };
                    let pred = frame
                        .predictions
                        .iter()
                        .find(|p| &p.pred_id == id)
                        .expect("outcome subjects come from the frame");
                    let class = cfg.matching.canonical(&pred.class_label);
                    phantom_chain(&mut registry, ambient, class).map_err(|source| MatchError::Phantom {
                        frame_id: frame.frame_id.clone(),
                        pred_id: id.clone(),
                        source,
                    })?
                }
            };
            let subject = outcome.subject.id().to_owned();
            if cfg.dedupe_per_run
                && !seen.insert((run_id.to_string(), subject.clone(), chain.clone(), outcome.result))
            {
                continue;
            }
            relations.push(ClassifiedRelation {
                chain,
                result: outcome.result,
                run_id: run_id.to_string(),
                frame_id: frame.frame_id.clone(),
                subject,
            });
        }
    }

    Ok(Classification {
        registry: Arc::new(registry),
        frames: frames
            .iter()
            .zip(classified)
            .map(|((run_id, _), classification)| ClassifiedFrame {
                run_id: run_id.to_string(),
                classification,
            })
            .collect(),
        relations,
    })
}
