//! Hand-built campaigns and the reference generator spec.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{InjectedDeficit, SynthSpec, Trigger};
use crate::campaign::{BoundingBox, Campaign, EntityDecl, FrameRecord, GroundTruthObject, Prediction, Run};
use crate::deficits::DeficitType;
use crate::matching::{ClassCounts, ResultClass};
use crate::ontology::{EntityRegistry, GranularityOrder};

fn decl(label: &str, order: i64, parents: &[&str]) -> EntityDecl {
    EntityDecl {
        label: label.into(),
        order,
        parents: parents.iter().map(|p| p.to_string()).collect(),
    }
}

/// Two domains sharing two scenes, four groups, six instances and a few
/// views, parts and elements below persons, cyclists and roads.
pub fn reference_registry() -> Vec<EntityDecl> {
    let scenes = ["Downtown", "Parc"];
    let people = ["Pedestrians", "Crowd"];
    vec![
        decl("City", 3, &[]),
        decl("Rural", 3, &[]),
        decl("Downtown", 2, &["City", "Rural"]),
        decl("Parc", 2, &["City", "Rural"]),
        decl("Vehicles", 1, &scenes),
        decl("Pedestrians", 1, &scenes),
        decl("Crowd", 1, &scenes),
        decl("Ground", 1, &scenes),
        decl("Scooter", 0, &["Vehicles"]),
        decl("Car", 0, &["Vehicles"]),
        decl("Person", 0, &people),
        decl("Cyclist", 0, &people),
        decl("Road", 0, &["Ground"]),
        decl("Lane", 0, &["Ground"]),
        decl("Front", -1, &["Person", "Cyclist"]),
        decl("Side", -1, &["Person", "Cyclist"]),
        decl("Top", -1, &["Road"]),
        decl("Torso", -2, &["Front", "Side"]),
        decl("Arm", -2, &["Front", "Side"]),
        decl("Surface", -2, &["Top"]),
        decl("Print", -3, &["Torso"]),
        decl("Plain", -3, &["Torso"]),
        decl("Marking", -3, &["Surface"]),
    ]
}

/// An injection of `t` on [`reference_registry`] that surfaces at the
/// type's locus only.
pub fn reference_injection(t: DeficitType) -> InjectedDeficit {
    let (entity, failure_class) = match t {
        DeficitType::IncompleteDomainKnowledge => ("Rural", ResultClass::R2),
        DeficitType::ForegroundBackground => ("Parc", ResultClass::R1),
        DeficitType::ForegroundForeground => ("Crowd", ResultClass::R2),
        DeficitType::IncompleteObjectRepresentation => ("Lane", ResultClass::R1),
        DeficitType::IncompleteRotaryRepresentation => ("Side", ResultClass::R2),
        DeficitType::MissingAttributeIntegration => ("Arm", ResultClass::R1),
        DeficitType::FaultyPatternAssociation => ("Marking", ResultClass::R3),
    };
    InjectedDeficit {
        deficit_type: t,
        trigger: Trigger {
            entity: entity.into(),
            sub_chain: Vec::new(),
        },
        failure_class,
        rate: 1.0,
        confused_with: None,
    }
}

/// 3 runs of 50 frames with 1 to 10 objects each, no injections.
pub fn reference_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        campaign_id: "reference".into(),
        entities: reference_registry(),
        runs: 3,
        frames_per_run: 50,
        objects_per_frame: [1, 10],
        injected: Vec::new(),
    }
}

enum Obj<'a> {
    /// Ground truth on `chain`, predicted as `class` or missed.
    Seen(&'a str, Option<&'a str>),
    /// Prediction without ground truth.
    Phantom(&'a str),
}

struct Builder {
    registry: EntityRegistry,
    runs: BTreeMap<String, (String, Vec<FrameRecord>)>,
}

impl Builder {
    fn new(chains: &[&str]) -> Self {
        let mut registry = EntityRegistry::new();
        for c in chains {
            registry.parse_chain_permissive(c).expect("fixture chains are valid");
        }
        Self {
            registry,
            runs: BTreeMap::new(),
        }
    }

    fn frame(&mut self, run: &str, tag: &str, ambient: Option<&str>, objects: &[Obj]) {
        let (_, frames) = self
            .runs
            .entry(run.into())
            .or_insert_with(|| (tag.into(), Vec::new()));
        let n = frames.len() + 1;
        let mut f = FrameRecord {
            frame_id: format!("f{n}"),
            timestamp_us: n as u64 * 100_000,
            ambient: ambient.map(|a| self.registry.parse_chain(a).expect("fixture ambient is valid")),
            ground_truth: Vec::new(),
            predictions: Vec::new(),
        };
        for (j, obj) in objects.iter().enumerate() {
            let x = 10.0 + 150.0 * j as f64;
            match obj {
                Obj::Seen(chain, predicted) => {
                    let bbox = BoundingBox::new(x, 10.0, x + 100.0, 110.0).expect("valid box");
                    let chain = self.registry.parse_chain(chain).expect("fixture chain is valid");
                    f.ground_truth.push(GroundTruthObject {
                        gt_id: format!("g{j}"),
                        class_label: chain
                            .label_at(GranularityOrder::Instance)
                            .expect("fixture chains reach order 0")
                            .into(),
                        chain,
                        bbox,
                    });
                    if let Some(class) = predicted {
                        f.predictions.push(Prediction {
                            pred_id: format!("p{j}"),
                            class_label: (*class).into(),
                            bbox,
                            confidence: 0.9,
                        });
                    }
                }
                Obj::Phantom(class) => f.predictions.push(Prediction {
                    pred_id: format!("p{j}"),
                    class_label: (*class).into(),
                    bbox: BoundingBox::new(x, 500.0, x + 100.0, 560.0).expect("valid box"),
                    confidence: 0.7,
                }),
            }
        }
        frames.push(f);
    }

    fn finish(self, id: &str) -> Campaign {
        let runs = self
            .runs
            .into_iter()
            .map(|(id, (scenario_tag, frames))| Run { id, scenario_tag, frames })
            .collect();
        Campaign::new(id, Arc::new(self.registry), runs).expect("fixture validates")
    }
}

const ROAD: &str = "City-Downtown-Ground-Road-Top-Surface-ZoneMarking";
const SHIRT: &str = "City-Downtown-Pedestrians-Person-Front-Torso-StopLogo";
const PLAIN: &str = "City-Downtown-Pedestrians-Person-Front-Torso-Plain";
const PLACARD: &str = "City-Downtown-Pedestrians-Protester-Front-Placard-StopSlogan";
const LANE_DOWNTOWN: &str = "City-Downtown-Ground-BidirectionalLane";
const LANE_RURAL: &str = "City-Rural-Ground-BidirectionalLane";

/// Minimal campaign with two identifications.
///
/// Run `d1`: a phantom car on a road marking in three frames, and stop-sign
/// prints on a shirt and a placard predicted as traffic signs. Runs
/// `d2-downtown` and `d2-rural`: the same bidirectional lane, misclassified
/// downtown and missed in the rural scene (one recognition each). Counts are
/// illustrative.
pub fn example_fixture() -> Campaign {
    use Obj::*;
    let mut b = Builder::new(&[ROAD, SHIRT, PLAIN, PLACARD, LANE_DOWNTOWN, LANE_RURAL]);
    b.frame("d1", "D1", Some(ROAD), &[Seen(ROAD, Some("Road")), Seen(PLAIN, Some("Person")), Phantom("car")]);
    b.frame("d1", "D1", Some(ROAD), &[Seen(ROAD, Some("Road")), Seen(SHIRT, Some("traffic sign")), Phantom("car")]);
    b.frame(
        "d1",
        "D1",
        Some(ROAD),
        &[
            Seen(ROAD, Some("Road")),
            Seen(PLACARD, Some("traffic sign")),
            Seen(SHIRT, Some("traffic sign")),
            Phantom("car"),
        ],
    );
    for predicted in [Some("BidirectionalLane"), Some("Sidewalk"), Some("Sidewalk")] {
        b.frame("d2-downtown", "D2", None, &[Seen(LANE_DOWNTOWN, predicted)]);
    }
    for predicted in [Some("BidirectionalLane"), None, None] {
        b.frame("d2-rural", "D2", None, &[Seen(LANE_RURAL, predicted)]);
    }
    b.finish("example-fixture")
}

/// What the pipeline reports on [`example_fixture`] at the default
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleManifest {
    pub counts: ClassCounts,
    pub ground_truth: u64,
    pub predictions: u64,
    /// Summary groups, highest order first.
    pub groups: Vec<(DeficitType, GranularityOrder)>,
    /// Chains of the explicit pattern-association findings.
    pub explicit_chains: Vec<String>,
    /// Chains of the implicit finding.
    pub implicit_chains: Vec<String>,
    pub implicit_dominants: Vec<ResultClass>,
}

pub fn example_fixture_manifest() -> ExampleManifest {
    ExampleManifest {
        counts: ClassCounts::new(6, 5, 2, 3),
        ground_truth: 13,
        predictions: 14,
        groups: vec![
            (DeficitType::ForegroundBackground, GranularityOrder::Scene),
            (DeficitType::FaultyPatternAssociation, GranularityOrder::Element),
        ],
        explicit_chains: vec![
            "City-Downtown-Ground-car\u{2020}-Top-Surface-ZoneMarking".into(),
            SHIRT.into(),
            PLACARD.into(),
        ],
        implicit_chains: vec![LANE_DOWNTOWN.into(), LANE_RURAL.into()],
        implicit_dominants: vec![ResultClass::R1, ResultClass::R2],
    }
}

/// One scooter recognized downtown and misclassified in the parc.
pub fn schematic_fixture() -> Campaign {
    use Obj::*;
    let downtown = "City-Downtown-Vehicle-Scooter";
    let parc = "City-Parc-Vehicle-Scooter";
    let mut b = Builder::new(&[downtown, parc]);
    b.frame("schematic", "schematic", None, &[Seen(downtown, Some("Scooter"))]);
    b.frame("schematic", "schematic", None, &[Seen(parc, Some("Bicycle"))]);
    b.finish("schematic")
}
