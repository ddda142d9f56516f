//! DOT export of an [`Eerg`].
//!
//! Entities become nodes with id `"order:label"`, registry links become
//! edges, and every relation key becomes a box node carrying its class
//! counts, linked to the chain's terminal entity.

use std::fmt::Write as _;

use crate::eerg::Eerg;
use crate::matching::ResultClass;
use crate::ontology::EntityId;

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn node_id(id: &EntityId) -> String {
    quote(&id.to_string())
}

pub fn to_dot(g: &Eerg) -> String {
    let mut out = String::from("digraph eerg {\n");
    let registry = g.registry();
    for e in registry.entities() {
        let style = if e.is_synthetic() { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  {} [label={}, order={}{style}];",
            node_id(e),
            quote(e.label()),
            e.order().value()
        );
    }
    for (parent, child) in registry.edges() {
        let _ = writeln!(out, "  {} -> {};", node_id(parent), node_id(child));
    }
    for (chain, entry) in g.relations() {
        let id = quote(&format!("relation:{chain}"));
        let counts = &entry.counts;
        let label = format!("{chain}\\n{counts}");
        let _ = writeln!(
            out,
            "  {id} [shape=box, label={}, r0={}, r1={}, r2={}, r3={}];",
            quote(&label),
            counts.get(ResultClass::R0),
            counts.get(ResultClass::R1),
            counts.get(ResultClass::R2),
            counts.get(ResultClass::R3),
        );
        let _ = writeln!(
            out,
            "  {id} -> {} [style=dotted, label={}];",
            node_id(&chain.terminal()),
            quote(&counts.to_string())
        );
    }
    out.push_str("}\n");
    out
}
