//! Synthetic campaigns with injected deficits and the manifest of findings
//! they should produce.
//!
//! Ground truth is sampled from the leaf paths of the registry. Predictions
//! are perfect unless an injected deficit triggers on the object's path.
//! Generation is single-threaded and a pure function of the spec.

mod fixtures;
mod rng;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixtures::{
    example_fixture, example_fixture_manifest, reference_injection, reference_registry, reference_spec,
    schematic_fixture, ExampleManifest,
};
pub use rng::{SynthRng, ALGORITHM};

use crate::campaign::{
    registry_from_decls, BoundingBox, Campaign, EntityDecl, FrameRecord, GroundTruthObject,
    Prediction, Run,
};
use crate::deficits::DeficitType;
use crate::matching::ResultClass;
use crate::ontology::{validate_label, EntityRegistry, GranularityOrder, RelationChain};

pub const CANVAS: u64 = 1000;
pub const MIN_SIDE: u64 = 30;
pub const MAX_SIDE: u64 = 200;
pub const PLACEMENT_ATTEMPTS: usize = 1000;
pub const FRAME_INTERVAL_US: u64 = 100_000;
pub const SCENARIO_TAG: &str = "synthetic";
const MAX_PATHS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("cannot parse spec: {0}")]
    Parse(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error("registry has no path from a domain down to an instance")]
    NoPaths,
    #[error("registry has more than {MAX_PATHS} leaf paths")]
    TooManyPaths,
    #[error("trigger entity '{label}' is not registered {place}")]
    UnknownTrigger { label: String, place: String },
    #[error("no registry path matches the trigger of injected {0}")]
    Unreachable(DeficitType),
    #[error("no sampled object matched the trigger of injected {0}")]
    NotObserved(DeficitType),
    #[error("injected {deficit} cannot surface at its locus {locus}: no sampled control path differs from a triggered one at that order only, and the triggered paths do not end there")]
    Undetectable {
        deficit: DeficitType,
        locus: GranularityOrder,
    },
    #[error("no free space for a box after {PLACEMENT_ATTEMPTS} attempts in frame {frame}")]
    Placement { frame: String },
}

/// Pattern selecting the paths a deficit applies to: `entity` at the
/// deficit's locus order, and every label of `sub_chain` somewhere below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub entity: String,
    #[serde(default)]
    pub sub_chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedDeficit {
    #[serde(rename = "type")]
    pub deficit_type: DeficitType,
    pub trigger: Trigger,
    pub failure_class: ResultClass,
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Class predicted for R1 swaps and phantoms. Defaults to the first
    /// instance label (sorted) that differs from the object's class.
    #[serde(default)]
    pub confused_with: Option<String>,
}

fn default_rate() -> f64 {
    1.0
}

fn default_campaign_id() -> String {
    "synthetic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    #[serde(default = "default_campaign_id")]
    pub campaign_id: String,
    /// Parents first, as in campaign headers.
    pub entities: Vec<EntityDecl>,
    pub runs: usize,
    pub frames_per_run: usize,
    /// Inclusive range.
    pub objects_per_frame: [usize; 2],
    #[serde(default)]
    pub injected: Vec<InjectedDeficit>,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))
    }

    fn check(&self) -> Result<(), SpecError> {
        let invalid = |m: String| Err(SpecError::Invalid(m));
        if self.runs == 0 || self.frames_per_run == 0 {
            return invalid("runs and frames_per_run must be positive".into());
        }
        let [lo, hi] = self.objects_per_frame;
        if lo == 0 || lo > hi {
            return invalid(format!("objects_per_frame [{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        for d in &self.injected {
            if !(d.rate > 0.0 && d.rate <= 1.0) {
                return invalid(format!("{}: rate {} outside (0, 1]", d.deficit_type, d.rate));
            }
            match d.failure_class {
                ResultClass::R0 => return invalid(format!("{}: failure class must be R1, R2 or R3", d.deficit_type)),
                ResultClass::R3 if d.deficit_type.locus().value() > 0 => {
                    return invalid(format!(
                        "{}: phantoms only surface at orders 0 and below",
                        d.deficit_type
                    ))
                }
                _ => {}
            }
            if let Some(c) = &d.confused_with {
                validate_label(c).map_err(|e| SpecError::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// One entry of the expected-findings manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectedFinding {
    pub deficit_type: DeficitType,
    pub locus: GranularityOrder,
    pub min_support: u64,
    /// Sampled objects on triggered paths.
    pub observations: u64,
    /// Failures actually injected.
    pub failures: u64,
    /// Predicted side effect of the spec rather than an injected deficit.
    pub collateral: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedFindings {
    pub campaign_id: String,
    pub seed: u64,
    pub entries: Vec<ExpectedFinding>,
}

impl ExpectedFindings {
    /// (type, locus) of every entry, injected and collateral.
    pub fn type_loci(&self) -> BTreeSet<(DeficitType, GranularityOrder)> {
        self.entries.iter().map(|e| (e.deficit_type, e.locus)).collect()
    }

    pub fn injected(&self) -> impl Iterator<Item = &ExpectedFinding> {
        self.entries.iter().filter(|e| !e.collateral)
    }

    pub fn collateral(&self) -> impl Iterator<Item = &ExpectedFinding> {
        self.entries.iter().filter(|e| e.collateral)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    record: String,
    campaign_id: String,
    seed: u64,
    algorithm: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    record: String,
    deficit_type: DeficitType,
    locus: GranularityOrder,
    min_support: u64,
    observations: u64,
    failures: u64,
    collateral: bool,
}

pub fn write_manifest<W: Write>(expected: &ExpectedFindings, mut out: W) -> std::io::Result<()> {
    let header = ManifestHeader {
        record: "expected_findings".into(),
        campaign_id: expected.campaign_id.clone(),
        seed: expected.seed,
        algorithm: ALGORITHM.into(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for entry in &expected.entries {
        let line = ManifestLine {
            record: "expected_finding".into(),
            deficit_type: entry.deficit_type,
            locus: entry.locus,
            min_support: entry.min_support,
            observations: entry.observations,
            failures: entry.failures,
            collateral: entry.collateral,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<ExpectedFindings, String> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(t) if t.trim().is_empty()));
    let (_, first) = lines.next().ok_or("empty manifest")?;
    let header: ManifestHeader =
        serde_json::from_str(&first.map_err(|e| e.to_string())?).map_err(|e| format!("line 1: {e}"))?;
    if header.record != "expected_findings" {
        return Err("line 1: expected the expected_findings header".into());
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| e.to_string())?;
        let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if parsed.record != "expected_finding" {
            return Err(format!("line {}: unexpected record '{}'", i + 1, parsed.record));
        }
        entries.push(ExpectedFinding {
            deficit_type: parsed.deficit_type,
            locus: parsed.locus,
            min_support: parsed.min_support,
            observations: parsed.observations,
            failures: parsed.failures,
            collateral: parsed.collateral,
        });
    }
    Ok(ExpectedFindings {
        campaign_id: header.campaign_id,
        seed: header.seed,
        entries,
    })
}

/// Every root-to-leaf path that reaches the instance order, in registry
/// order.
pub fn leaf_paths(registry: &EntityRegistry) -> Result<Vec<RelationChain>, SpecError> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<crate::ontology::EntityId>> = registry
        .entities()
        .filter(|e| e.order() == GranularityOrder::Domain && !e.is_synthetic())
        .map(|e| vec![e.clone()])
        .collect();
    stack.reverse();
    while let Some(path) = stack.pop() {
        let last = path.last().expect("non-empty");
        let children: Vec<_> = registry.children(last).filter(|c| !c.is_synthetic()).cloned().collect();
        if children.is_empty() {
            if last.order().value() <= 0 {
                out.push(RelationChain::from_ids(&path));
                if out.len() > MAX_PATHS {
                    return Err(SpecError::TooManyPaths);
                }
            }
            continue;
        }
        for child in children.into_iter().rev() {
            let mut next = path.clone();
            next.push(child);
            stack.push(next);
        }
    }
    Ok(out)
}

fn triggers(d: &InjectedDeficit, path: &RelationChain) -> bool {
    let k = d.deficit_type.locus();
    path.label_at(k) == Some(d.trigger.entity.as_str())
        && d
            .trigger
            .sub_chain
            .iter()
            .all(|l| path.labels().skip(k.depth_index() + 1).any(|x| x == l))
}

/// Cycles through a shuffled permutation of a context's paths so every path
/// is drawn once before any is drawn twice.
struct Cursor {
    paths: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn next(&mut self, rng: &mut SynthRng) -> usize {
        if self.pos == 0 {
            rng.shuffle(&mut self.paths);
        }
        let p = self.paths[self.pos];
        self.pos = (self.pos + 1) % self.paths.len();
        p
    }
}

fn place(rng: &mut SynthRng, taken: &[BoundingBox], frame: &str) -> Result<BoundingBox, SpecError> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let w = rng.int_between(MIN_SIDE, MAX_SIDE);
        let h = rng.int_between(MIN_SIDE, MAX_SIDE);
        let x = rng.int_between(0, CANVAS - w);
        let y = rng.int_between(0, CANVAS - h);
        let b = BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).expect("positive sides");
        if taken.iter().all(|t| !t.overlaps(&b)) {
            return Ok(b);
        }
    }
    Err(SpecError::Placement { frame: frame.into() })
}

#[derive(Default, Clone, Copy)]
struct InjectionStats {
    observations: u64,
    failures: u64,
}

/// Generates the campaign and the findings the pipeline should report on it.
pub fn generate(spec: &SynthSpec) -> Result<(Campaign, ExpectedFindings), SpecError> {
    spec.check()?;
    let registry = registry_from_decls(&spec.entities).map_err(SpecError::Registry)?;
    let paths = leaf_paths(&registry)?;
    if paths.is_empty() {
        return Err(SpecError::NoPaths);
    }
    for d in &spec.injected {
        let locus = d.deficit_type.locus();
        if registry.get(&d.trigger.entity, locus).is_none() {
            return Err(SpecError::UnknownTrigger {
                label: d.trigger.entity.clone(),
                place: format!("at order {locus}"),
            });
        }
        for l in &d.trigger.sub_chain {
            if !registry.entities().any(|e| e.label() == l && e.order() < locus) {
                return Err(SpecError::UnknownTrigger {
                    label: l.clone(),
                    place: format!("below order {locus}"),
                });
            }
        }
        if !paths.iter().any(|p| triggers(d, p)) {
            return Err(SpecError::Unreachable(d.deficit_type));
        }
    }
    let instances: Vec<&str> = {
        let mut v: Vec<&str> = registry
            .entities()
            .filter(|e| e.order() == GranularityOrder::Instance)
            .map(|e| e.label())
            .collect();
        v.sort();
        v
    };
    let confused = |d: &InjectedDeficit, class: &str| -> String {
        d.confused_with
            .clone()
            .or_else(|| instances.iter().find(|l| **l != class).map(|l| l.to_string()))
            .unwrap_or_else(|| "unknown".into())
    };
    for d in spec.injected.iter().filter(|d| d.failure_class == ResultClass::R1) {
        if let Some(c) = &d.confused_with {
            if paths.iter().any(|p| triggers(d, p) && p.label_at(GranularityOrder::Instance) == Some(c)) {
                return Err(SpecError::Invalid(format!(
                    "{}: confused_with '{c}' equals the class of a triggered object",
                    d.deficit_type
                )));
            }
        }
    }
    let trigger_of: Vec<Option<usize>> = paths
        .iter()
        .map(|p| spec.injected.iter().position(|d| triggers(d, p)))
        .collect();

    let mut contexts: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        let domain = p.label_at(GranularityOrder::Domain).expect("paths reach order 0");
        let scene = p.label_at(GranularityOrder::Scene).expect("paths reach order 0");
        contexts.entry((domain, scene)).or_default().push(i);
    }
    let mut cursors: Vec<Cursor> = contexts
        .into_values()
        .map(|paths| Cursor { paths, pos: 0 })
        .collect();

    let mut rng = SynthRng::new(spec.seed);
    let mut observed = vec![0u64; paths.len()];
    let mut stats = vec![InjectionStats::default(); spec.injected.len()];
    let mut runs = Vec::with_capacity(spec.runs);
    for r in 0..spec.runs {
        let mut frames = Vec::with_capacity(spec.frames_per_run);
        for i in 0..spec.frames_per_run {
            let t = r * spec.frames_per_run + i;
            let frame_id = format!("f{i:04}");
            let contexts = cursors.len();
            let cursor = &mut cursors[t % contexts];
            let [lo, hi] = spec.objects_per_frame;
            let n = rng.int_between(lo as u64, hi as u64) as usize;
            let mut boxes = Vec::with_capacity(n + 1);
            let mut ground_truth = Vec::with_capacity(n);
            let mut predictions = Vec::with_capacity(n + 1);
            let mut phantom: Option<(usize, String, RelationChain)> = None;
            for j in 0..n {
                let pi = cursor.next(&mut rng);
                let path = &paths[pi];
                observed[pi] += 1;
                let bbox = place(&mut rng, &boxes, &frame_id)?;
                boxes.push(bbox);
                let class = path.label_at(GranularityOrder::Instance).expect("paths reach order 0");
                let confidence = (500.0 + rng.int_between(0, 500) as f64) / 1000.0;
                let injection = trigger_of[pi];
                let fails = match injection {
                    Some(di) => {
                        stats[di].observations += 1;
                        rng.chance(spec.injected[di].rate)
                    }
                    None => false,
                };
                ground_truth.push(GroundTruthObject {
                    gt_id: format!("g{j}"),
                    chain: path.clone(),
                    class_label: class.to_owned(),
                    bbox,
                });
                let mut pred = Prediction {
                    pred_id: format!("p{j}"),
                    class_label: class.to_owned(),
                    bbox,
                    confidence,
                };
                match (fails, injection) {
                    (true, Some(di)) => {
                        let d = &spec.injected[di];
                        match d.failure_class {
                            ResultClass::R1 => {
                                stats[di].failures += 1;
                                pred.class_label = confused(d, class);
                                predictions.push(pred);
                            }
                            ResultClass::R2 => stats[di].failures += 1,
                            _ => {
                                predictions.push(pred);
                                if phantom.is_none() {
                                    let ambient = path
                                        .truncated(d.deficit_type.locus())
                                        .expect("triggered paths reach the locus");
                                    phantom = Some((di, confused(d, class), ambient));
                                }
                            }
                        }
                    }
                    _ => predictions.push(pred),
                }
            }
            let mut ambient = None;
            if let Some((di, class, chain)) = phantom {
                let bbox = place(&mut rng, &boxes, &frame_id)?;
                stats[di].failures += 1;
                predictions.push(Prediction {
                    pred_id: format!("p{n}"),
                    class_label: class,
                    bbox,
                    confidence: 0.5,
                });
                ambient = Some(chain);
            }
            frames.push(FrameRecord {
                frame_id,
                timestamp_us: i as u64 * FRAME_INTERVAL_US,
                ambient,
                ground_truth,
                predictions,
            });
        }
        runs.push(Run {
            id: format!("run{r:03}"),
            scenario_tag: SCENARIO_TAG.into(),
            frames,
        });
    }

    for (di, d) in spec.injected.iter().enumerate() {
        if stats[di].observations == 0 {
            return Err(SpecError::NotObserved(d.deficit_type));
        }
    }
    let mut entries: BTreeMap<(GranularityOrder, DeficitType), ExpectedFinding> = BTreeMap::new();
    for (di, d) in spec.injected.iter().enumerate() {
        let e = entries
            .entry((d.deficit_type.locus(), d.deficit_type))
            .or_insert(ExpectedFinding {
                deficit_type: d.deficit_type,
                locus: d.deficit_type.locus(),
                min_support: 1,
                observations: 0,
                failures: 0,
                collateral: false,
            });
        e.observations += stats[di].observations;
        e.failures += stats[di].failures;
    }
    if spec.injected.iter().all(|d| d.rate == 1.0) {
        let predicted = predict_findings(spec, &paths, &observed, &trigger_of);
        for d in &spec.injected {
            if !predicted.contains(&(d.deficit_type.locus(), d.deficit_type)) {
                return Err(SpecError::Undetectable {
                    deficit: d.deficit_type,
                    locus: d.deficit_type.locus(),
                });
            }
        }
        for (locus, t) in predicted {
            entries.entry((locus, t)).or_insert(ExpectedFinding {
                deficit_type: t,
                locus,
                min_support: 1,
                observations: 0,
                failures: 0,
                collateral: true,
            });
        }
    }

    let campaign = Campaign::new(spec.campaign_id.clone(), Arc::new(registry), runs)
        .map_err(|e| SpecError::Invalid(format!("generated campaign does not validate: {e}")))?;
    let expected = ExpectedFindings {
        campaign_id: spec.campaign_id.clone(),
        seed: spec.seed,
        entries: entries.into_values().rev().collect(),
    };
    Ok((campaign, expected))
}

/// Findings a noise-free campaign yields, from the class every sampled path
/// is forced to (rate 1.0): divergence orders of sampled path pairs that
/// differ at one minable order and disagree on their class, terminal orders
/// of failing paths outside such pairs, and the locus of every phantom
/// injection.
fn predict_findings(
    spec: &SynthSpec,
    paths: &[RelationChain],
    observed: &[u64],
    trigger_of: &[Option<usize>],
) -> BTreeSet<(GranularityOrder, DeficitType)> {
    let class = |pi: usize| match trigger_of[pi].map(|di| spec.injected[di].failure_class) {
        Some(c @ (ResultClass::R1 | ResultClass::R2)) => c,
        _ => ResultClass::R0,
    };
    let seen: Vec<usize> = (0..paths.len()).filter(|&i| observed[i] > 0).collect();
    let mut out = BTreeSet::new();
    let mut ambivalent = vec![false; paths.len()];
    for k in 0..=GranularityOrder::Module.depth_index() {
        let mut groups: BTreeMap<(usize, Vec<&str>), Vec<usize>> = BTreeMap::new();
        for &pi in &seen {
            let labels: Vec<&str> = paths[pi].labels().collect();
            if labels.len() <= k {
                continue;
            }
            let mut key = labels.clone();
            key[k] = "";
            groups.entry((labels.len(), key)).or_default().push(pi);
        }
        for members in groups.values() {
            let classes: BTreeSet<_> = members.iter().map(|&p| class(p)).collect();
            if classes.len() > 1 {
                let order = GranularityOrder::ALL[k];
                out.insert((order, order_type(order)));
                for &p in members {
                    ambivalent[p] = true;
                }
            }
        }
    }
    for &pi in &seen {
        if class(pi) != ResultClass::R0 && !ambivalent[pi] {
            let order = paths[pi].terminal_order();
            out.insert((order, order_type(order)));
        }
    }
    for &pi in &seen {
        if let Some(di) = trigger_of[pi] {
            let d = &spec.injected[di];
            if d.failure_class == ResultClass::R3 {
                out.insert((d.deficit_type.locus(), d.deficit_type));
            }
        }
    }
    out
}

fn order_type(order: GranularityOrder) -> DeficitType {
    crate::deficits::order_to_deficits(order)[0]
}
