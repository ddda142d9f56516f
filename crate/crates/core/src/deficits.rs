//! Seven-type deficit taxonomy and the detectors mapping graph evidence to
//! it.
//!
//! Findings carry *candidate* types, never verdicts: the order-to-deficit
//! table is a formalization and reports present each row as a hypothesis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eerg::{find_ambivalences, Eerg, Provenance};
use crate::matching::{ClassCounts, ResultClass};
use crate::ontology::{GranularityOrder, RelationChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeficitType {
    IncompleteDomainKnowledge,
    ForegroundBackground,
    ForegroundForeground,
    /// Also covers the "incomplete shape representation" reading.
    IncompleteObjectRepresentation,
    IncompleteRotaryRepresentation,
    MissingAttributeIntegration,
    FaultyPatternAssociation,
}

impl DeficitType {
    /// Ordered from the domain order downwards.
    pub const ALL: [DeficitType; 7] = [
        DeficitType::IncompleteDomainKnowledge,
        DeficitType::ForegroundBackground,
        DeficitType::ForegroundForeground,
        DeficitType::IncompleteObjectRepresentation,
        DeficitType::IncompleteRotaryRepresentation,
        DeficitType::MissingAttributeIntegration,
        DeficitType::FaultyPatternAssociation,
    ];

    /// The order at which this deficit shows.
    pub fn locus(self) -> GranularityOrder {
        GranularityOrder::ALL[self as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            DeficitType::IncompleteDomainKnowledge => "IncompleteDomainKnowledge",
            DeficitType::ForegroundBackground => "ForegroundBackground",
            DeficitType::ForegroundForeground => "ForegroundForeground",
            DeficitType::IncompleteObjectRepresentation => "IncompleteObjectRepresentation",
            DeficitType::IncompleteRotaryRepresentation => "IncompleteRotaryRepresentation",
            DeficitType::MissingAttributeIntegration => "MissingAttributeIntegration",
            DeficitType::FaultyPatternAssociation => "FaultyPatternAssociation",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            DeficitType::IncompleteDomainKnowledge => "objects missed across a whole target domain",
            DeficitType::ForegroundBackground => "object not separated from a particular scene background",
            DeficitType::ForegroundForeground => "object not separated from surrounding objects of its group",
            DeficitType::IncompleteObjectRepresentation => "object class itself poorly represented",
            DeficitType::IncompleteRotaryRepresentation => "object missed from some viewpoints only",
            DeficitType::MissingAttributeIntegration => "object parts or attributes not integrated",
            DeficitType::FaultyPatternAssociation => "surface pattern mistaken for another object",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == text)
    }
}

impl fmt::Display for DeficitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed decision table from granularity order to deficit candidates.
pub fn order_to_deficits(order: GranularityOrder) -> Vec<DeficitType> {
    vec![DeficitType::ALL[order.depth_index()]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Explicit,
    Implicit,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::Explicit => "explicit",
            FindingKind::Implicit => "implicit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub chain: RelationChain,
    /// Dominant class of the chain; for failure-only chains the most frequent
    /// failure class.
    pub result: ResultClass,
    pub counts: ClassCounts,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeficitFinding {
    pub kind: FindingKind,
    pub deficit_candidates: Vec<DeficitType>,
    pub locus: GranularityOrder,
    pub evidence: Vec<Evidence>,
    pub support: u64,
}

fn main_failure(counts: &ClassCounts) -> ResultClass {
    [ResultClass::R1, ResultClass::R2, ResultClass::R3]
        .into_iter()
        .rev()
        .max_by_key(|&c| counts.get(c))
        .expect("non-empty")
}

/// One finding per chain that only ever failed, has at least `min_support`
/// observations and takes no part in an ambivalence set (those chains are
/// reported by [`detect_implicit`]).
pub fn detect_explicit(g: &Eerg, min_support: u64) -> Vec<DeficitFinding> {
    let ambivalent: BTreeSet<RelationChain> = find_ambivalences(g, min_support)
        .into_iter()
        .flat_map(|set| set.members.into_iter().map(|m| m.chain))
        .collect();
    g.relations()
        .filter(|(chain, entry)| {
            entry.counts.is_failure_only()
                && entry.counts.total() >= min_support
                && !ambivalent.contains(*chain)
        })
        .map(|(chain, entry)| {
            let locus = chain.terminal_order();
            DeficitFinding {
                kind: FindingKind::Explicit,
                deficit_candidates: order_to_deficits(locus),
                locus,
                evidence: vec![Evidence {
                    chain: chain.clone(),
                    result: main_failure(&entry.counts),
                    counts: entry.counts,
                    provenance: entry.provenance.clone(),
                }],
                support: entry.counts.total(),
            }
        })
        .collect()
}

/// One finding per ambivalence set, located at its divergence order.
pub fn detect_implicit(g: &Eerg, min_support: u64) -> Vec<DeficitFinding> {
    find_ambivalences(g, min_support)
        .into_iter()
        .map(|set| DeficitFinding {
            kind: FindingKind::Implicit,
            deficit_candidates: order_to_deficits(set.divergence_order),
            locus: set.divergence_order,
            evidence: set
                .members
                .into_iter()
                .map(|m| Evidence {
                    provenance: g
                        .entry(&m.chain)
                        .map(|e| e.provenance.clone())
                        .unwrap_or_default(),
                    chain: m.chain,
                    result: m.dominant,
                    counts: m.counts,
                })
                .collect(),
            support: set.support,
        })
        .collect()
}

/// Explicit findings followed by implicit ones.
pub fn detect_all(g: &Eerg, min_support: u64) -> Vec<DeficitFinding> {
    let mut findings = detect_explicit(g, min_support);
    findings.extend(detect_implicit(g, min_support));
    findings
}

/// One report row per (candidate type, locus).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub deficit_type: DeficitType,
    pub locus: GranularityOrder,
    pub kinds: BTreeSet<FindingKind>,
    pub findings: usize,
    /// Sum of the grouped findings' support.
    pub support: u64,
    /// Distinct evidence chains, highest observation count first.
    pub top_chains: Vec<RelationChain>,
}

pub const TOP_CHAINS: usize = 5;

pub fn summarize(findings: &[DeficitFinding]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(GranularityOrder, DeficitType), Vec<&DeficitFinding>> = BTreeMap::new();
    for f in findings {
        for &t in &f.deficit_candidates {
            groups.entry((f.locus, t)).or_default().push(f);
        }
    }
    // Highest order first.
    groups
        .into_iter()
        .rev()
        .map(|((locus, deficit_type), group)| {
            let mut chains: BTreeMap<&RelationChain, u64> = BTreeMap::new();
            for f in &group {
                for e in &f.evidence {
                    *chains.entry(&e.chain).or_default() += e.counts.total();
                }
            }
            let mut ranked: Vec<_> = chains.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            SummaryRow {
                deficit_type,
                locus,
                kinds: group.iter().map(|f| f.kind).collect(),
                findings: group.len(),
                support: group.iter().map(|f| f.support).sum(),
                top_chains: ranked.into_iter().take(TOP_CHAINS).map(|(c, _)| c.clone()).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::ClassifiedRelation;
    use crate::ontology::EntityRegistry;
    use std::sync::Arc;

    fn graph(rows: &[(&str, ResultClass, usize)]) -> Eerg {
        let mut reg = EntityRegistry::new();
        let mut rels = Vec::new();
        for (i, (chain, result, n)) in rows.iter().enumerate() {
            let chain = reg.parse_chain_permissive(chain).unwrap();
            for j in 0..*n {
                rels.push(ClassifiedRelation {
                    chain: chain.clone(),
                    result: *result,
                    run_id: "r".into(),
                    frame_id: format!("f{i}-{j}"),
                    subject: "g".into(),
                });
            }
        }
        Eerg::build(&rels, Arc::new(reg)).unwrap()
    }

    #[test]
    fn decision_table() {
        use GranularityOrder::*;
        assert_eq!(order_to_deficits(Scene), vec![DeficitType::ForegroundBackground]);
        assert_eq!(order_to_deficits(Module), vec![DeficitType::IncompleteRotaryRepresentation]);
        assert_eq!(order_to_deficits(Element), vec![DeficitType::FaultyPatternAssociation]);
        let all: BTreeSet<_> = GranularityOrder::ALL
            .into_iter()
            .flat_map(order_to_deficits)
            .collect();
        assert_eq!(all.len(), 7);
        for t in DeficitType::ALL {
            assert_eq!(order_to_deficits(t.locus()), vec![t]);
            assert_eq!(DeficitType::parse(t.name()), Some(t));
        }
    }

    #[test]
    fn explicit_commercial_pattern() {
        let g = graph(&[("City-Parc-Static-House-Facade-Wall-Commercial", ResultClass::R1, 3)]);
        let f = detect_explicit(&g, 1);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::Explicit);
        assert_eq!(f[0].deficit_candidates, vec![DeficitType::FaultyPatternAssociation]);
        assert_eq!(f[0].locus, GranularityOrder::Element);
        assert_eq!(f[0].support, 3);
        assert_eq!(f[0].evidence[0].result, ResultClass::R1);
        assert!(detect_explicit(&g, 4).is_empty());
    }

    #[test]
    fn explicit_needs_failure_only() {
        let g = graph(&[("City-Downtown-Vehicle-Scooter", ResultClass::R0, 5)]);
        assert!(detect_explicit(&g, 1).is_empty());
        let g = graph(&[("City-Rural-Ground-BidirectionalLane", ResultClass::R2, 4)]);
        let f = detect_explicit(&g, 1);
        assert_eq!(f[0].deficit_candidates, vec![DeficitType::IncompleteObjectRepresentation]);
        assert_eq!(f[0].locus, GranularityOrder::Instance);
    }

    #[test]
    fn adding_recognitions_moves_chain_to_implicit() {
        let parc = "City-Parc-Vehicle-Scooter";
        let down = "City-Downtown-Vehicle-Scooter";
        let g = graph(&[(parc, ResultClass::R1, 2)]);
        assert_eq!(detect_explicit(&g, 1).len(), 1);
        let g = graph(&[(parc, ResultClass::R1, 2), (parc, ResultClass::R0, 1)]);
        assert!(detect_explicit(&g, 1).is_empty());
        let g = graph(&[(parc, ResultClass::R1, 2), (parc, ResultClass::R0, 1), (down, ResultClass::R0, 1)]);
        assert!(detect_explicit(&g, 1).is_empty());
        let implicit = detect_implicit(&g, 1);
        assert_eq!(implicit.len(), 1);
        assert_eq!(implicit[0].deficit_candidates, vec![DeficitType::ForegroundBackground]);
    }

    #[test]
    fn ambivalent_failure_chain_is_not_explicit() {
        let g = graph(&[
            ("City-Downtown-Vehicle-Scooter", ResultClass::R0, 1),
            ("City-Parc-Vehicle-Scooter", ResultClass::R1, 1),
        ]);
        assert!(detect_explicit(&g, 1).is_empty());
        let implicit = detect_implicit(&g, 1);
        assert_eq!(implicit[0].locus, GranularityOrder::Scene);
        assert_eq!(implicit[0].evidence.len(), 2);
    }

    #[test]
    fn crowd_divergence_is_foreground_foreground() {
        let g = graph(&[
            ("City-Downtown-Pedestrians-Person", ResultClass::R0, 2),
            ("City-Downtown-Crowd-Person", ResultClass::R2, 2),
        ]);
        let f = detect_implicit(&g, 1);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].deficit_candidates, vec![DeficitType::ForegroundForeground]);
        assert_eq!(f[0].support, 2);
    }

    #[test]
    fn all_recognized_gives_nothing() {
        let g = graph(&[
            ("City-Downtown-Vehicle-Scooter", ResultClass::R0, 1),
            ("City-Parc-Vehicle-Scooter", ResultClass::R0, 1),
        ]);
        assert!(detect_all(&g, 1).is_empty());
    }

    #[test]
    fn summarize_groups_by_type_and_locus() {
        assert!(summarize(&[]).is_empty());
        let g = graph(&[
            ("City-Downtown-Vehicle-Scooter", ResultClass::R0, 1),
            ("City-Parc-Vehicle-Scooter", ResultClass::R1, 1),
            ("City-Downtown-Vehicle-Car", ResultClass::R0, 2),
            ("City-Parc-Vehicle-Car", ResultClass::R1, 2),
        ]);
        let findings = detect_implicit(&g, 1);
        assert_eq!(findings.len(), 2);
        let rows = summarize(&findings);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].deficit_type, DeficitType::ForegroundBackground);
        assert_eq!(rows[0].support, 3);
        assert_eq!(rows[0].findings, 2);
        assert_eq!(rows[0].top_chains[0].to_string(), "City-Downtown-Vehicle-Car");
    }
}
