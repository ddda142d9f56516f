//! Line-delimited campaign files.
//!
//! One JSON object per line. The first line is the campaign header with the
//! entity registry, every later line is one frame. Every field is required,
//! fields appear in the documented order and unknown fields are rejected.
//! See `docs/campaign-format.md`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    BoundingBox, Campaign, FrameRecord, GroundTruthObject, LoadError, LoadOptions, Location,
    Prediction, Run, ValidationError,
};
use crate::ontology::{EntityRegistry, GranularityOrder, RelationChain};

pub const FORMAT_VERSION: u32 = 1;

const HEADER_FIELDS: &[&str] = &["record", "format_version", "campaign_id", "entities"];
const FRAME_FIELDS: &[&str] = &[
    "record",
    "run_id",
    "scenario_tag",
    "frame_id",
    "timestamp_us",
    "ambient",
    "ground_truth",
    "predictions",
];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    record: String,
    format_version: u32,
    campaign_id: String,
    entities: Vec<EntityDecl>,
}

/// One registry entity with the labels of its parents one order above.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDecl {
    pub label: String,
    pub order: i64,
    pub parents: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    record: String,
    run_id: String,
    scenario_tag: String,
    frame_id: String,
    timestamp_us: u64,
    ambient: Option<String>,
    ground_truth: Vec<GroundTruthLine>,
    predictions: Vec<PredictionLine>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthLine {
    gt_id: String,
    chain: String,
    class_label: String,
    bbox: BoundingBox,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    pred_id: String,
    class_label: String,
    bbox: BoundingBox,
    confidence: f64,
}

fn parse_error(line: usize, reason: impl Into<String>) -> LoadError {
    LoadError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Checks presence, absence and order of top-level fields.
fn check_fields(map: &Map<String, Value>, expected: &[&str], line: usize) -> Result<(), LoadError> {
    for key in map.keys() {
        if !expected.contains(&key.as_str()) {
            return Err(parse_error(line, format!("unknown field '{key}'")));
        }
    }
    for key in expected {
        if !map.contains_key(*key) {
            return Err(parse_error(line, format!("missing field '{key}'")));
        }
    }
    for (actual, wanted) in map.keys().zip(expected) {
        if actual != wanted {
            return Err(parse_error(
                line,
                format!("field '{actual}' out of order, expected '{wanted}'"),
            ));
        }
    }
    Ok(())
}

fn typed<T: for<'de> Deserialize<'de>>(map: Map<String, Value>, line: usize) -> Result<T, LoadError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| parse_error(line, e.to_string()))
}

fn build_registry(header: &HeaderRecord, line: usize) -> Result<EntityRegistry, LoadError> {
    registry_from_decls(&header.entities).map_err(|reason| {
        LoadError::Validation(ValidationError {
            location: Location {
                line: Some(line),
                ..Location::default()
            },
            reason,
        })
    })
}

/// Builds a registry from declarations listed parents first.
pub fn registry_from_decls(decls: &[EntityDecl]) -> Result<EntityRegistry, String> {
    let mut registry = EntityRegistry::new();
    for decl in decls {
        let order = GranularityOrder::from_value(decl.order)
            .map_err(|e| format!("entity '{}': {e}", decl.label))?;
        if registry.get(&decl.label, order).is_some() {
            return Err(format!("entity '{}' at order {order} declared twice", decl.label));
        }
        if decl.parents.is_empty() {
            registry
                .register_entity(&decl.label, order, None)
                .map_err(|e| e.to_string())?;
            continue;
        }
        let Some(parent_order) = order.above() else {
            return Err(format!("entity '{}': domain entities have no parents", decl.label));
        };
        for parent in &decl.parents {
            let parent_id = registry.get(parent, parent_order).cloned().ok_or_else(|| {
                format!(
                    "entity '{}': unknown parent '{parent}' at order {parent_order} (parents are declared first)",
                    decl.label
                )
            })?;
            registry
                .register_entity(&decl.label, order, Some(&parent_id))
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(registry)
}

/// Declarations for every entity of `registry`, parents first.
pub fn registry_decls(registry: &EntityRegistry) -> Vec<EntityDecl> {
    registry
        .entities()
        .map(|id| EntityDecl {
            label: id.label().to_owned(),
            order: i64::from(id.order().value()),
            parents: {
                let mut parents: Vec<String> =
                    registry.parents(id).map(|p| p.label().to_owned()).collect();
                parents.sort();
                parents
            },
        })
        .collect()
}

struct PendingRun {
    scenario_tag: String,
    frames: Vec<FrameRecord>,
}

fn convert_frame(
    frame: FrameLine,
    registry: &mut EntityRegistry,
    options: LoadOptions,
) -> Result<FrameRecord, String> {
    let mut parse = |text: &str| registry.parse_chain_with(text, options.mode);
    let ambient = match &frame.ambient {
        Some(text) => Some(parse(text).map_err(|e| format!("ambient: {e}"))?),
        None => None,
    };
    let mut ground_truth = Vec::with_capacity(frame.ground_truth.len());
    for gt in frame.ground_truth {
        let chain = parse(&gt.chain).map_err(|e| format!("gt '{}': {e}", gt.gt_id))?;
        ground_truth.push(GroundTruthObject {
            gt_id: gt.gt_id,
            chain,
            class_label: gt.class_label,
            bbox: gt.bbox,
        });
    }
    let predictions = frame
        .predictions
        .into_iter()
        .map(|p| Prediction {
            pred_id: p.pred_id,
            class_label: p.class_label,
            bbox: p.bbox,
            confidence: p.confidence,
        })
        .collect();
    Ok(FrameRecord {
        frame_id: frame.frame_id,
        timestamp_us: frame.timestamp_us,
        ambient,
        ground_truth,
        predictions,
    })
}

/// Reads a campaign, stopping at the first problem.
pub fn read_campaign<R: BufRead>(reader: R, options: LoadOptions) -> Result<Campaign, LoadError> {
    let (campaign, mut errors) = read_campaign_diagnostics(reader, options);
    if errors.is_empty() {
        Ok(campaign.expect("campaign is present when there are no errors"))
    } else {
        Err(errors.swap_remove(0))
    }
}

/// Reads a campaign and reports every problem found, in file order.
///
/// The campaign is returned only when no problem was found.
pub fn read_campaign_diagnostics<R: BufRead>(
    reader: R,
    options: LoadOptions,
) -> (Option<Campaign>, Vec<LoadError>) {
    let mut errors = Vec::new();
    let mut header: Option<(String, EntityRegistry)> = None;
    let mut runs: BTreeMap<String, PendingRun> = BTreeMap::new();
    let mut frame_lines: HashMap<(String, String), usize> = HashMap::new();
    let mut last_line = 0;

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        last_line = line_no;
        let text = match line {
            Ok(text) => text,
            Err(source) => {
                errors.push(LoadError::Io {
                    path: "<input>".into(),
                    source,
                });
                return (None, errors);
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        let map = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => map,
            Ok(_) => {
                errors.push(parse_error(line_no, "record must be a JSON object"));
                continue;
            }
            Err(e) => {
                errors.push(parse_error(line_no, format!("invalid JSON: {e}")));
                continue;
            }
        };
        let kind = map.get("record").and_then(Value::as_str).map(str::to_owned);
        match (&mut header, kind.as_deref()) {
            (None, Some("campaign")) => {
                let parsed = check_fields(&map, HEADER_FIELDS, line_no)
                    .and_then(|_| typed::<HeaderRecord>(map, line_no))
                    .and_then(|h| {
                        if h.format_version != FORMAT_VERSION {
                            return Err(parse_error(
                                line_no,
                                format!("unsupported format_version {}", h.format_version),
                            ));
                        }
                        let registry = build_registry(&h, line_no)?;
                        Ok((h.campaign_id, registry))
                    });
                match parsed {
                    Ok(h) => header = Some(h),
                    Err(e) => {
                        errors.push(e);
                        return (None, errors);
                    }
                }
            }
            (None, _) => {
                errors.push(parse_error(line_no, "first record must be the campaign header"));
                return (None, errors);
            }
            (Some(_), Some("campaign")) => {
                errors.push(parse_error(line_no, "second campaign header"));
            }
            (Some((_, registry)), Some("frame")) => {
                let frame = match check_fields(&map, FRAME_FIELDS, line_no)
                    .and_then(|_| typed::<FrameLine>(map, line_no))
                {
                    Ok(frame) => frame,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                };
                let location = Location {
                    line: Some(line_no),
                    run_id: Some(frame.run_id.clone()),
                    frame_id: Some(frame.frame_id.clone()),
                };
                if frame.run_id.is_empty() {
                    errors.push(ValidationError { location, reason: "run id is empty".into() }.into());
                    continue;
                }
                let run_id = frame.run_id.clone();
                let scenario_tag = frame.scenario_tag.clone();
                match convert_frame(frame, registry, options) {
                    Ok(record) => {
                        let run = runs.entry(run_id.clone()).or_insert_with(|| PendingRun {
                            scenario_tag: scenario_tag.clone(),
                            frames: Vec::new(),
                        });
                        if run.scenario_tag != scenario_tag {
                            errors.push(
                                ValidationError {
                                    location: location.clone(),
                                    reason: format!(
                                        "scenario_tag '{scenario_tag}' differs from '{}' declared earlier for this run",
                                        run.scenario_tag
                                    ),
                                }
                                .into(),
                            );
                        }
                        frame_lines
                            .entry((run_id, record.frame_id.clone()))
                            .or_insert(line_no);
                        run.frames.push(record);
                    }
                    Err(reason) => errors.push(ValidationError { location, reason }.into()),
                }
            }
            (Some(_), Some(other)) => {
                errors.push(parse_error(line_no, format!("unknown record type '{other}'")));
            }
            (Some(_), None) => {
                errors.push(parse_error(line_no, "missing field 'record'"));
            }
        }
    }

    let Some((id, registry)) = header else {
        errors.push(parse_error(last_line.max(1), "missing campaign header"));
        return (None, errors);
    };
    let mut campaign = Campaign {
        id,
        registry: Arc::new(registry),
        runs: runs
            .into_iter()
            .map(|(id, run)| Run {
                id,
                scenario_tag: run.scenario_tag,
                frames: run.frames,
            })
            .collect(),
    };
    let mut late: Vec<LoadError> = campaign
        .canonicalize()
        .into_iter()
        .map(|mut e| {
            if let (Some(run), Some(frame)) = (&e.location.run_id, &e.location.frame_id) {
                e.location.line = frame_lines.get(&(run.clone(), frame.clone())).copied();
            }
            LoadError::Validation(e)
        })
        .collect();
    late.sort_by_key(|e| match e {
        LoadError::Validation(v) => v.location.line.unwrap_or(usize::MAX),
        _ => usize::MAX,
    });
    errors.extend(late);
    if errors.is_empty() {
        (Some(campaign), errors)
    } else {
        (None, errors)
    }
}

fn chain_text(chain: &RelationChain) -> String {
    chain.to_string()
}

/// Writes `campaign` in the line-delimited format. Output is a function of
/// the campaign value only.
pub fn write_campaign<W: Write>(campaign: &Campaign, mut out: W) -> std::io::Result<()> {
    let entities = registry_decls(&campaign.registry);
    let header = HeaderRecord {
        record: "campaign".into(),
        format_version: FORMAT_VERSION,
        campaign_id: campaign.id.clone(),
        entities,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for run in &campaign.runs {
        for frame in &run.frames {
            let line = FrameLine {
                record: "frame".into(),
                run_id: run.id.clone(),
                scenario_tag: run.scenario_tag.clone(),
                frame_id: frame.frame_id.clone(),
                timestamp_us: frame.timestamp_us,
                ambient: frame.ambient.as_ref().map(chain_text),
                ground_truth: frame
                    .ground_truth
                    .iter()
                    .map(|gt| GroundTruthLine {
                        gt_id: gt.gt_id.clone(),
                        chain: chain_text(&gt.chain),
                        class_label: gt.class_label.clone(),
                        bbox: gt.bbox,
                    })
                    .collect(),
                predictions: frame
                    .predictions
                    .iter()
                    .map(|p| PredictionLine {
                        pred_id: p.pred_id.clone(),
                        class_label: p.class_label.clone(),
                        bbox: p.bbox,
                        confidence: p.confidence,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
