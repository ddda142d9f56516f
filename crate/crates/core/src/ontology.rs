//! Granularity orders, the entity registry and relation chains.
//!
//! An environment is decomposed into seven orders of informational depth,
//! from the operational domain (+3) down to surface elements (-3). Entities
//! live at exactly one order and are linked to entities one order below
//! them. A [`RelationChain`] is a path through those links starting at the
//! domain, written as labels joined by `-`:
//!
//! ```text
//! City-Parc-Static-House-Facade-Wall-Commercial
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator between labels in the textual chain form.
pub const CHAIN_SEPARATOR: char = '-';

/// Suffix reserved for entities created during classification (phantoms and
/// placeholders). Annotated labels may not contain it.
pub const SYNTHETIC_MARKER: char = '\u{2020}';

/// Maximum number of elements in a chain, one per order.
pub const MAX_CHAIN_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("granularity order {0} is outside -3..=+3")]
    InvalidOrder(i64),
    #[error("invalid entity label {label:?}: {reason}")]
    InvalidLabel { label: String, reason: &'static str },
    #[error("parent {parent} cannot hold an entity at order {order}; parents must sit exactly one order above")]
    OrderMismatch {
        parent: EntityId,
        order: GranularityOrder,
    },
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("no registered link {parent} -> {child}")]
    UnknownEdge { parent: EntityId, child: EntityId },
    #[error("chain has {segments} segments, at most {MAX_CHAIN_LEN} are allowed")]
    ChainTooLong { segments: usize },
    #[error("chain segment {position} is empty")]
    EmptySegment { position: usize },
}

pub type Result<T, E = OntologyError> = std::result::Result<T, E>;

/// One of the seven granularity orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum GranularityOrder {
    Element = -3,
    Component = -2,
    Module = -1,
    Instance = 0,
    Group = 1,
    Scene = 2,
    Domain = 3,
}

impl GranularityOrder {
    /// All orders, highest first.
    pub const ALL: [GranularityOrder; 7] = [
        GranularityOrder::Domain,
        GranularityOrder::Scene,
        GranularityOrder::Group,
        GranularityOrder::Instance,
        GranularityOrder::Module,
        GranularityOrder::Component,
        GranularityOrder::Element,
    ];

    pub const fn value(self) -> i8 {
        self as i8
    }

    pub fn from_value(value: i64) -> Result<Self> {
        match value {
            3 => Ok(Self::Domain),
            2 => Ok(Self::Scene),
            1 => Ok(Self::Group),
            0 => Ok(Self::Instance),
            -1 => Ok(Self::Module),
            -2 => Ok(Self::Component),
            -3 => Ok(Self::Element),
            other => Err(OntologyError::InvalidOrder(other)),
        }
    }

    /// Position of this order inside a chain (domain = 0).
    pub const fn depth_index(self) -> usize {
        (3 - self.value()) as usize
    }

    pub fn from_depth_index(index: usize) -> Option<Self> {
        if index < MAX_CHAIN_LEN {
            Some(Self::ALL[index])
        } else {
            None
        }
    }

    /// The next order towards the domain, if any.
    pub fn above(self) -> Option<Self> {
        Self::from_value(i64::from(self.value()) + 1).ok()
    }

    /// The next order towards the elements, if any.
    pub fn below(self) -> Option<Self> {
        Self::from_value(i64::from(self.value()) - 1).ok()
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Domain => "Domain",
            Self::Scene => "Scene",
            Self::Group => "Object Group",
            Self::Instance => "Object Instance",
            Self::Module => "Object Module",
            Self::Component => "Object Component",
            Self::Element => "Object Element",
        }
    }
}

impl TryFrom<i8> for GranularityOrder {
    type Error = OntologyError;

    fn try_from(value: i8) -> Result<Self> {
        Self::from_value(i64::from(value))
    }
}

impl From<GranularityOrder> for i8 {
    fn from(order: GranularityOrder) -> i8 {
        order.value()
    }
}

impl fmt::Display for GranularityOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value() > 0 {
            write!(f, "+{}", self.value())
        } else {
            write!(f, "{}", self.value())
        }
    }
}

/// Identity of an environmental entity: its label at one order.
///
/// Identities are values, so chains and graphs built against two registries
/// with the same entities compare equal. Ordering puts higher orders first,
/// then sorts by label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityId {
    order: GranularityOrder,
    label: Arc<str>,
}

/// Entities carry no data beyond their identity.
pub type EnvironmentalEntity = EntityId;

impl EntityId {
    pub(crate) fn new(label: impl Into<Arc<str>>, order: GranularityOrder) -> Self {
        Self {
            order,
            label: label.into(),
        }
    }

    pub fn order(&self) -> GranularityOrder {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub(crate) fn label_arc(&self) -> &Arc<str> {
        &self.label
    }

    pub fn is_synthetic(&self) -> bool {
        self.label.ends_with(SYNTHETIC_MARKER)
    }
}

impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .order
            .cmp(&self.order)
            .then_with(|| self.label.cmp(&other.label))
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.order.value(), self.label)
    }
}

/// Checks an annotated (non-synthetic) label.
pub fn validate_label(label: &str) -> Result<()> {
    check_label(label)?;
    if label.contains(SYNTHETIC_MARKER) {
        return Err(invalid(label, "the synthetic marker is reserved"));
    }
    Ok(())
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(invalid(label, "label is empty"));
    }
    if label.contains(CHAIN_SEPARATOR) {
        return Err(invalid(label, "label contains the chain separator '-'"));
    }
    if label.chars().any(char::is_control) {
        return Err(invalid(label, "label contains a control character"));
    }
    if label.trim() != label {
        return Err(invalid(label, "label has leading or trailing whitespace"));
    }
    Ok(())
}

fn invalid(label: &str, reason: &'static str) -> OntologyError {
    OntologyError::InvalidLabel {
        label: label.to_owned(),
        reason,
    }
}

/// How [`EntityRegistry::parse_chain_with`] treats labels it does not know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainMode {
    /// Unknown entities and links are errors.
    #[default]
    Strict,
    /// Unknown entities and links are registered on the fly.
    Permissive,
}

/// Entities and their superordinate/subordinate links.
///
/// Links always join adjacent orders, parent above child, so the link
/// structure is acyclic by construction. An entity may have several parents.
/// Build the registry single-threaded, then [`freeze`](Self::freeze) it to
/// share it between readers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityRegistry {
    entities: BTreeSet<EntityId>,
    edges: BTreeSet<(EntityId, EntityId)>,
}

impl EntityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `label` at `order`, optionally linked below `parent`.
    ///
    /// Registering an existing entity returns its id; a new parent adds a
    /// link.
    pub fn register_entity(
        &mut self,
        label: &str,
        order: GranularityOrder,
        parent: Option<&EntityId>,
    ) -> Result<EntityId> {
        validate_label(label)?;
        self.insert(label, order, parent)
    }

    /// Same as [`register_entity`](Self::register_entity) for labels carrying
    /// the synthetic marker.
    pub(crate) fn register_synthetic(
        &mut self,
        label: &str,
        order: GranularityOrder,
        parent: Option<&EntityId>,
    ) -> Result<EntityId> {
        check_label(label)?;
        if !label.ends_with(SYNTHETIC_MARKER) {
            return Err(invalid(label, "synthetic labels end with the marker"));
        }
        self.insert(label, order, parent)
    }

    /// Links two already registered entities. Used to attach annotated
    /// entities below synthetic ones.
    pub(crate) fn link(&mut self, parent: &EntityId, child: &EntityId) -> Result<()> {
        self.check_parent(parent, child.order)?;
        if !self.entities.contains(child) {
            return Err(OntologyError::UnknownEntity(child.clone()));
        }
        self.edges.insert((parent.clone(), child.clone()));
        Ok(())
    }

    fn insert(
        &mut self,
        label: &str,
        order: GranularityOrder,
        parent: Option<&EntityId>,
    ) -> Result<EntityId> {
        if let Some(parent) = parent {
            self.check_parent(parent, order)?;
        }
        let id = match self.entities.get(&EntityId::new(label, order)) {
            Some(existing) => existing.clone(),
            None => {
                let id = EntityId::new(label, order);
                self.entities.insert(id.clone());
                id
            }
        };
        if let Some(parent) = parent {
            self.edges.insert((parent.clone(), id.clone()));
        }
        Ok(id)
    }

    fn check_parent(&self, parent: &EntityId, order: GranularityOrder) -> Result<()> {
        if !self.entities.contains(parent) {
            return Err(OntologyError::UnknownEntity(parent.clone()));
        }
        if parent.order.value() != order.value() + 1 {
            return Err(OntologyError::OrderMismatch {
                parent: parent.clone(),
                order,
            });
        }
        Ok(())
    }

    pub fn get(&self, label: &str, order: GranularityOrder) -> Option<&EntityId> {
        self.entities.get(&EntityId::new(label, order))
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains(id)
    }

    pub fn has_edge(&self, parent: &EntityId, child: &EntityId) -> bool {
        self.edges.contains(&(parent.clone(), child.clone()))
    }

    /// Entities in order: highest order first, then by label.
    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EntityId, &EntityId)> {
        self.edges.iter().map(|(p, c)| (p, c))
    }

    pub fn parents<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.edges
            .iter()
            .filter(move |(_, c)| c == id)
            .map(|(p, _)| p)
    }

    pub fn children<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.edges
            .iter()
            .filter(move |(p, _)| p == id)
            .map(|(_, c)| c)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Number of registered entities at each order, highest order first.
    pub fn count_by_order(&self, include_synthetic: bool) -> [(GranularityOrder, usize); 7] {
        GranularityOrder::ALL.map(|order| {
            let n = self
                .entities
                .iter()
                .filter(|e| e.order == order && (include_synthetic || !e.is_synthetic()))
                .count();
            (order, n)
        })
    }

    /// Ends construction; the result is immutable and cheap to share.
    pub fn freeze(self) -> Arc<EntityRegistry> {
        Arc::new(self)
    }

    /// The registry without entities and links created during
    /// classification.
    pub fn annotated(&self) -> EntityRegistry {
        EntityRegistry {
            entities: self
                .entities
                .iter()
                .filter(|e| !e.is_synthetic())
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(p, c)| !p.is_synthetic() && !c.is_synthetic())
                .cloned()
                .collect(),
        }
    }

    /// Union of two registries that share the same annotated content and
    /// differ at most in synthetic entities. `None` when the annotated parts
    /// differ.
    pub fn union_synthetic(&self, other: &EntityRegistry) -> Option<EntityRegistry> {
        if self == other {
            return Some(self.clone());
        }
        if self.annotated() != other.annotated() {
            return None;
        }
        let mut merged = self.clone();
        merged.entities.extend(other.entities.iter().cloned());
        merged.edges.extend(other.edges.iter().cloned());
        Some(merged)
    }

    /// Checks that every element is registered and every step is a link.
    pub fn validate_chain(&self, chain: &RelationChain) -> Result<()> {
        let mut previous: Option<EntityId> = None;
        for id in chain.entities() {
            if !self.entities.contains(&id) {
                return Err(OntologyError::UnknownEntity(id));
            }
            if let Some(parent) = previous {
                if !self.has_edge(&parent, &id) {
                    return Err(OntologyError::UnknownEdge { parent, child: id });
                }
            }
            previous = Some(id);
        }
        Ok(())
    }

    /// Parses `text` against the registry; unknown labels are errors.
    pub fn parse_chain(&self, text: &str) -> Result<RelationChain> {
        let chain = split_chain(text)?;
        self.validate_chain(&chain)?;
        Ok(chain)
    }

    /// Parses `text`, registering any missing entity or link.
    pub fn parse_chain_permissive(&mut self, text: &str) -> Result<RelationChain> {
        let chain = split_chain(text)?;
        let mut parent: Option<EntityId> = None;
        for id in chain.entities() {
            let id = self.register_entity(id.label(), id.order(), parent.as_ref())?;
            parent = Some(id);
        }
        Ok(chain)
    }

    pub fn parse_chain_with(&mut self, text: &str, mode: ChainMode) -> Result<RelationChain> {
        match mode {
            ChainMode::Strict => self.parse_chain(text),
            ChainMode::Permissive => self.parse_chain_permissive(text),
        }
    }
}

fn split_chain(text: &str) -> Result<RelationChain> {
    let segments: Vec<&str> = text.split(CHAIN_SEPARATOR).collect();
    if segments.len() > MAX_CHAIN_LEN {
        return Err(OntologyError::ChainTooLong {
            segments: segments.len(),
        });
    }
    let mut labels = Vec::with_capacity(segments.len());
    for (position, segment) in segments.iter().enumerate() {
        if segment.is_empty() {
            return Err(OntologyError::EmptySegment { position });
        }
        check_label(segment)?;
        labels.push(Arc::<str>::from(*segment));
    }
    Ok(RelationChain { labels })
}

/// A path from the domain order downwards, one entity per order.
///
/// The i-th element sits at order `+3 - i`. A chain holds between one and
/// seven elements and is only meaningful together with the registry it was
/// validated against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationChain {
    labels: Vec<Arc<str>>,
}

impl RelationChain {
    /// Builds a chain from ids without registry validation. The ids must
    /// start at the domain and descend one order per step.
    pub(crate) fn from_ids(ids: &[EntityId]) -> Self {
        debug_assert!(!ids.is_empty() && ids.len() <= MAX_CHAIN_LEN);
        debug_assert!(ids
            .iter()
            .enumerate()
            .all(|(i, id)| id.order.depth_index() == i));
        Self {
            labels: ids.iter().map(|id| id.label_arc().clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Chains always hold at least one element.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terminal_order(&self) -> GranularityOrder {
        GranularityOrder::ALL[self.labels.len() - 1]
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.labels.iter().map(|l| l.as_ref())
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.labels
            .iter()
            .zip(GranularityOrder::ALL)
            .map(|(label, order)| EntityId::new(label.clone(), order))
    }

    pub fn entity_at(&self, order: GranularityOrder) -> Option<EntityId> {
        self.labels
            .get(order.depth_index())
            .map(|label| EntityId::new(label.clone(), order))
    }

    pub fn label_at(&self, order: GranularityOrder) -> Option<&str> {
        self.labels.get(order.depth_index()).map(|l| l.as_ref())
    }

    pub fn terminal(&self) -> EntityId {
        self.entity_at(self.terminal_order())
            .expect("chains are never empty")
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.label_at(id.order()) == Some(id.label())
    }

    pub fn has_synthetic(&self) -> bool {
        self.labels.iter().any(|l| l.ends_with(SYNTHETIC_MARKER))
    }

    /// True iff `self` is a leading part of `other` (or equal to it).
    pub fn is_prefix_of(&self, other: &RelationChain) -> bool {
        is_prefix(self, other)
    }

    /// The leading part of the chain down to `order`, if the chain reaches it.
    pub fn truncated(&self, order: GranularityOrder) -> Option<RelationChain> {
        let len = order.depth_index() + 1;
        (len <= self.labels.len()).then(|| RelationChain {
            labels: self.labels[..len].to_vec(),
        })
    }

    pub fn format_chain(&self) -> String {
        self.to_string()
    }
}

pub fn is_prefix(a: &RelationChain, b: &RelationChain) -> bool {
    b.labels.starts_with(&a.labels)
}

impl fmt::Display for RelationChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, label) in self.labels.iter().enumerate() {
            if i > 0 {
                write!(f, "{CHAIN_SEPARATOR}")?;
            }
            f.write_str(label)?;
        }
        Ok(())
    }
}

impl Serialize for RelationChain {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.labels.iter().map(|l| l.as_ref()))
    }
}
