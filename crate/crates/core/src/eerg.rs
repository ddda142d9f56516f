//! The entity relation graph: registry plus a table of classified relation
//! chains with per-class counts and provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matching::{ClassCounts, Classification, ClassifiedRelation, ResultClass};
use crate::ontology::{EntityRegistry, GranularityOrder, OntologyError, RelationChain};

pub const TEXT_FORMAT_HEADER: &str = "# eerg format 1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EergError {
    #[error("relation chain '{chain}' does not validate: {source}")]
    UnknownChain {
        chain: String,
        #[source]
        source: OntologyError,
    },
    #[error("graphs were built against different registries")]
    RegistryMismatch,
}

/// Where one classified relation was observed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Provenance {
    pub run_id: String,
    pub frame_id: String,
    pub subject: String,
    pub result: ResultClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RelationEntry {
    pub counts: ClassCounts,
    /// Sorted.
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eerg {
    registry: Arc<EntityRegistry>,
    table: BTreeMap<RelationChain, RelationEntry>,
}

impl Eerg {
    pub fn empty(registry: Arc<EntityRegistry>) -> Self {
        Self {
            registry,
            table: BTreeMap::new(),
        }
    }

    /// Aggregates relations. Chains are validated against `registry`.
    pub fn build(relations: &[ClassifiedRelation], registry: Arc<EntityRegistry>) -> Result<Self, EergError> {
        let mut table: BTreeMap<RelationChain, RelationEntry> = BTreeMap::new();
        for rel in relations {
            if !table.contains_key(&rel.chain) {
                registry
                    .validate_chain(&rel.chain)
                    .map_err(|source| EergError::UnknownChain {
                        chain: rel.chain.to_string(),
                        source,
                    })?;
            }
            let entry = table.entry(rel.chain.clone()).or_default();
            entry.counts.record(rel.result);
            entry.provenance.push(Provenance {
                run_id: rel.run_id.clone(),
                frame_id: rel.frame_id.clone(),
                subject: rel.subject.clone(),
                result: rel.result,
            });
        }
        for entry in table.values_mut() {
            entry.provenance.sort();
        }
        Ok(Self { registry, table })
    }

    /// Builds one graph per run in parallel and merges them.
    pub fn from_classification(classification: &Classification) -> Result<Self, EergError> {
        let mut by_run: BTreeMap<&str, Vec<ClassifiedRelation>> = BTreeMap::new();
        for rel in &classification.relations {
            by_run.entry(rel.run_id.as_str()).or_default().push(rel.clone());
        }
        let registry = &classification.registry;
        let graphs: Vec<Eerg> = by_run
            .into_par_iter()
            .map(|(_, rels)| Eerg::build(&rels, registry.clone()))
            .collect::<Result<_, _>>()?;
        graphs
            .iter()
            .try_fold(Eerg::empty(registry.clone()), |acc, g| acc.merge(g))
    }

    /// Element-wise sum of the two tables.
    ///
    /// Graphs over registries that differ only in synthetic entities merge
    /// over the union of both registries.
    pub fn merge(&self, other: &Eerg) -> Result<Eerg, EergError> {
        let registry = if Arc::ptr_eq(&self.registry, &other.registry) || self.registry == other.registry {
            self.registry.clone()
        } else {
            Arc::new(
                self.registry
                    .union_synthetic(&other.registry)
                    .ok_or(EergError::RegistryMismatch)?,
            )
        };
        let mut table = self.table.clone();
        for (chain, entry) in &other.table {
            let target = table.entry(chain.clone()).or_default();
            target.counts += entry.counts;
            target.provenance.extend(entry.provenance.iter().cloned());
            target.provenance.sort();
        }
        Ok(Eerg { registry, table })
    }

    pub fn registry(&self) -> &Arc<EntityRegistry> {
        &self.registry
    }

    /// Entries in chain order.
    pub fn relations(&self) -> impl Iterator<Item = (&RelationChain, &RelationEntry)> {
        self.table.iter()
    }

    pub fn entry(&self, chain: &RelationChain) -> Option<&RelationEntry> {
        self.table.get(chain)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn total_counts(&self) -> ClassCounts {
        self.table
            .values()
            .fold(ClassCounts::default(), |acc, e| acc + e.counts)
    }

    pub fn query(&self, filter: &QueryFilter) -> Vec<(&RelationChain, ClassCounts)> {
        self.table
            .iter()
            .filter(|(chain, entry)| filter.accepts(chain, &entry.counts))
            .map(|(chain, entry)| (chain, entry.counts))
            .collect()
    }

    /// Deterministic line-oriented dump: entities, edges, then one line per
    /// relation with its four counts. Fields are tab-separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEXT_FORMAT_HEADER);
        out.push('\n');
        for e in self.registry.entities() {
            let _ = writeln!(out, "entity\t{}\t{}", e.order(), e.label());
        }
        for (p, c) in self.registry.edges() {
            let _ = writeln!(out, "edge\t{p}\t{c}");
        }
        for (chain, entry) in &self.table {
            let [r0, r1, r2, r3] = entry.counts.as_array();
            let _ = writeln!(out, "relation\t{chain}\t{r0}\t{r1}\t{r2}\t{r3}");
        }
        out
    }
}

/// Filter for [`Eerg::query`]. Unset fields accept everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryFilter {
    /// Chain contains an entity with this label, at `entity_order` if set.
    pub entity: Option<String>,
    pub entity_order: Option<GranularityOrder>,
    /// Chain has a nonzero count of this class.
    pub class: Option<ResultClass>,
    /// Chain terminates at this order.
    pub terminal_order: Option<GranularityOrder>,
}

impl QueryFilter {
    fn accepts(&self, chain: &RelationChain, counts: &ClassCounts) -> bool {
        let entity_ok = match (&self.entity, self.entity_order) {
            (None, _) => true,
            (Some(label), Some(order)) => chain.label_at(order) == Some(label.as_str()),
            (Some(label), None) => chain.labels().any(|l| l == label),
        };
        entity_ok
            && self.class.is_none_or(|c| counts.get(c) > 0)
            && self.terminal_order.is_none_or(|o| chain.terminal_order() == o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbivalenceMember {
    pub chain: RelationChain,
    pub dominant: ResultClass,
    pub counts: ClassCounts,
}

/// Chains that agree everywhere except at one order and whose dominant
/// result classes differ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbivalenceSet {
    pub divergence_order: GranularityOrder,
    /// Labels above the divergence order.
    pub shared_prefix: Vec<String>,
    /// Labels below the divergence order.
    pub shared_suffix: Vec<String>,
    /// Sorted by chain.
    pub members: Vec<AmbivalenceMember>,
    /// Smallest member total.
    pub support: u64,
}

impl AmbivalenceSet {
    pub fn dominant_classes(&self) -> BTreeSet<ResultClass> {
        self.members.iter().map(|m| m.dominant).collect()
    }
}

/// Groups chains of equal depth that are identical except at one order
/// `k` (from +3 down to -1) and reports the groups whose members disagree on
/// their dominant class.
///
/// Chains without a strict-majority class, chains below `min_support`
/// observations and chains through synthetic entities take no part.
pub fn find_ambivalences(g: &Eerg, min_support: u64) -> Vec<AmbivalenceSet> {
    let candidates: Vec<_> = g
        .table
        .iter()
        .filter(|(chain, entry)| !chain.has_synthetic() && entry.counts.total() >= min_support.max(1))
        .filter_map(|(chain, entry)| entry.counts.dominant().map(|d| (chain, entry.counts, d)))
        .collect();

    let mut out = Vec::new();
    for order in &GranularityOrder::ALL[..=GranularityOrder::Module.depth_index()] {
        let k = order.depth_index();
        // (depth, prefix above k, suffix below k)
        type Key<'a> = (usize, Vec<&'a str>, Vec<&'a str>);
        let mut groups: BTreeMap<Key, Vec<AmbivalenceMember>> = BTreeMap::new();
        for (chain, counts, dominant) in &candidates {
            if chain.len() <= k {
                continue;
            }
            let labels: Vec<&str> = chain.labels().collect();
            let key = (chain.len(), labels[..k].to_vec(), labels[k + 1..].to_vec());
            groups.entry(key).or_default().push(AmbivalenceMember {
                chain: (*chain).clone(),
                dominant: *dominant,
                counts: *counts,
            });
        }
        for ((_, prefix, suffix), members) in groups {
            let classes: BTreeSet<_> = members.iter().map(|m| m.dominant).collect();
            if members.len() < 2 || classes.len() < 2 {
                continue;
            }
            let support = members.iter().map(|m| m.counts.total()).min().unwrap_or(0);
            out.push(AmbivalenceSet {
                divergence_order: *order,
                shared_prefix: prefix.into_iter().map(str::to_owned).collect(),
                shared_suffix: suffix.into_iter().map(str::to_owned).collect(),
                members,
                support,
            });
        }
    }
    out
}
