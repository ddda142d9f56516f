//! Renderers for evaluation, graph and findings reports.
//!
//! Human output joins chains with `-`; JSON renders them as label arrays.
//! CSV has no arrays and uses the joined form. All renderers are
//! deterministic functions of their input.

mod dot;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

pub use dot::to_dot;

use crate::deficits::{DeficitFinding, FindingKind, SummaryRow};
use crate::eerg::{Eerg, Provenance};
use crate::campaign::Campaign;
use crate::matching::{ClassCounts, Classification, ResultClass};
use crate::ontology::GranularityOrder;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub campaign_id: String,
    pub run_id: String,
    pub frames: u64,
    pub ground_truth: u64,
    pub predictions: u64,
    pub counts: ClassCounts,
}

impl RunRow {
    /// Both partition identities hold.
    pub fn conserved(&self) -> bool {
        let c = &self.counts;
        c[ResultClass::R0] + c[ResultClass::R1] + c[ResultClass::R2] == self.ground_truth
            && c[ResultClass::R0] + c[ResultClass::R1] + c[ResultClass::R3] == self.predictions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub iou_threshold: f64,
    pub min_confidence: f64,
    pub runs: Vec<RunRow>,
    pub total: RunRow,
    pub conserved: bool,
}

impl EvaluationReport {
    /// `inputs` pairs each campaign with its classification. Prediction
    /// totals count what took part in matching, i.e. after the confidence
    /// filter.
    pub fn new(inputs: &[(&Campaign, &Classification)], iou_threshold: f64, min_confidence: f64) -> Self {
        let mut runs: Vec<RunRow> = Vec::new();
        for (campaign, classification) in inputs {
            for ((run, frame), f) in campaign.frames().zip(&classification.frames) {
                debug_assert_eq!(run.id, f.run_id);
                let row = match runs
                    .iter_mut()
                    .find(|r| r.campaign_id == campaign.id && r.run_id == run.id)
                {
                    Some(row) => row,
                    None => {
                        runs.push(RunRow {
                            campaign_id: campaign.id.clone(),
                            run_id: run.id.clone(),
                            frames: 0,
                            ground_truth: 0,
                            predictions: 0,
                            counts: ClassCounts::default(),
                        });
                        runs.last_mut().expect("just pushed")
                    }
                };
                row.frames += 1;
                row.ground_truth += frame.ground_truth.len() as u64;
                row.predictions += frame
                    .predictions
                    .iter()
                    .filter(|p| p.confidence >= min_confidence)
                    .count() as u64;
                row.counts += f.classification.counts();
            }
        }
        let mut total = RunRow {
            campaign_id: String::new(),
            run_id: "total".into(),
            frames: 0,
            ground_truth: 0,
            predictions: 0,
            counts: ClassCounts::default(),
        };
        for r in &runs {
            total.frames += r.frames;
            total.ground_truth += r.ground_truth;
            total.predictions += r.predictions;
            total.counts += r.counts;
        }
        let conserved = runs.iter().all(RunRow::conserved);
        Self {
            iou_threshold,
            min_confidence,
            runs,
            total,
            conserved,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "iou threshold {}, min confidence {}",
            self.iou_threshold, self.min_confidence
        );
        let rows: Vec<(String, &RunRow)> = self
            .runs
            .iter()
            .chain(std::iter::once(&self.total))
            .map(|r| {
                let name = if r.campaign_id.is_empty() {
                    r.run_id.clone()
                } else {
                    format!("{}/{}", r.campaign_id, r.run_id)
                };
                (name, r)
            })
            .collect();
        let w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(24);
        let _ = writeln!(
            out,
            "{:<w$} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "run", "frames", "gt", "pred", "R0", "R1", "R2", "R3"
        );
        for (name, r) in &rows {
            let c = r.counts;
            let _ = writeln!(
                out,
                "{name:<w$} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
                r.frames,
                r.ground_truth,
                r.predictions,
                c[ResultClass::R0],
                c[ResultClass::R1],
                c[ResultClass::R2],
                c[ResultClass::R3]
            );
        }
        let t = &self.total;
        let c = t.counts;
        let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        let _ = writeln!(
            out,
            "conservation: R0+R1+R2 = {} (gt {}) {}; R0+R1+R3 = {} (pred {}) {}",
            c[ResultClass::R0] + c[ResultClass::R1] + c[ResultClass::R2],
            t.ground_truth,
            verdict(self.conserved),
            c[ResultClass::R0] + c[ResultClass::R1] + c[ResultClass::R3],
            t.predictions,
            verdict(self.conserved),
        );
        out
    }

    pub fn to_json(&self) -> String {
        json(self)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "campaign_id", "run_id", "frames", "ground_truth", "predictions", "R0", "R1", "R2", "R3",
        ]);
        for r in self.runs.iter().chain(std::iter::once(&self.total)) {
            let mut record = vec![
                r.campaign_id.clone(),
                r.run_id.clone(),
                r.frames.to_string(),
                r.ground_truth.to_string(),
                r.predictions.to_string(),
            ];
            record.extend(r.counts.as_array().iter().map(u64::to_string));
            let _ = w.write_record(&record);
        }
        csv_string(w)
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

#[derive(Serialize)]
struct GraphEntity<'a> {
    label: &'a str,
    order: GranularityOrder,
    synthetic: bool,
}

#[derive(Serialize)]
struct GraphRelation<'a> {
    chain: &'a crate::ontology::RelationChain,
    counts: ClassCounts,
    provenance: &'a [Provenance],
}

#[derive(Serialize)]
struct GraphJson<'a> {
    entities: Vec<GraphEntity<'a>>,
    edges: Vec<[String; 2]>,
    relations: Vec<GraphRelation<'a>>,
}

pub fn graph_json(g: &Eerg) -> String {
    let reg = g.registry();
    json(&GraphJson {
        entities: reg
            .entities()
            .map(|e| GraphEntity {
                label: e.label(),
                order: e.order(),
                synthetic: e.is_synthetic(),
            })
            .collect(),
        edges: reg.edges().map(|(p, c)| [p.to_string(), c.to_string()]).collect(),
        relations: g
            .relations()
            .map(|(chain, entry)| GraphRelation {
                chain,
                counts: entry.counts,
                provenance: &entry.provenance,
            })
            .collect(),
    })
}

pub fn graph_csv(g: &Eerg) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(["chain", "terminal_order", "R0", "R1", "R2", "R3"]);
    for (chain, entry) in g.relations() {
        let mut record = vec![chain.to_string(), chain.terminal_order().value().to_string()];
        record.extend(entry.counts.as_array().iter().map(u64::to_string));
        let _ = w.write_record(&record);
    }
    csv_string(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FindingsReport {
    pub min_support: u64,
    /// Grouped by (candidate type, locus); every row is a hypothesis.
    pub hypotheses: Vec<SummaryRow>,
    pub findings: Vec<DeficitFinding>,
}

impl FindingsReport {
    pub fn new(min_support: u64, findings: Vec<DeficitFinding>) -> Self {
        Self {
            min_support,
            hypotheses: crate::deficits::summarize(&findings),
            findings,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} deficit hypotheses from {} findings (min support {})",
            self.hypotheses.len(),
            self.findings.len(),
            self.min_support
        );
        for row in &self.hypotheses {
            let kinds: Vec<String> = row.kinds.iter().map(FindingKind::to_string).collect();
            let _ = writeln!(
                out,
                "hypothesis {} at order {} ({}): findings {}, support {}",
                row.deficit_type,
                row.locus,
                kinds.join("+"),
                row.findings,
                row.support
            );
            let _ = writeln!(out, "  {}", row.deficit_type.summary());
            for chain in &row.top_chains {
                let _ = writeln!(out, "  evidence {chain}");
            }
        }
        for f in &self.findings {
            let candidates: Vec<&str> = f.deficit_candidates.iter().map(|t| t.name()).collect();
            let _ = writeln!(
                out,
                "finding {} at order {}: candidates {}, support {}",
                f.kind,
                f.locus,
                candidates.join(","),
                f.support
            );
            for e in &f.evidence {
                let frames: BTreeSet<String> = e
                    .provenance
                    .iter()
                    .map(|p| format!("{}/{}", p.run_id, p.frame_id))
                    .collect();
                let frames: Vec<String> = frames.into_iter().collect();
                let _ = writeln!(
                    out,
                    "  {} {} [{}] in {}",
                    e.result,
                    e.chain,
                    e.counts,
                    frames.join(" ")
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        json(self)
    }

    /// One line per evidence entry.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "finding", "kind", "locus", "candidates", "support", "chain", "result", "R0", "R1", "R2", "R3",
        ]);
        for (i, f) in self.findings.iter().enumerate() {
            let candidates: Vec<&str> = f.deficit_candidates.iter().map(|t| t.name()).collect();
            for e in &f.evidence {
                let mut record = vec![
                    i.to_string(),
                    f.kind.to_string(),
                    f.locus.value().to_string(),
                    candidates.join(";"),
                    f.support.to_string(),
                    e.chain.to_string(),
                    e.result.to_string(),
                ];
                record.extend(e.counts.as_array().iter().map(u64::to_string));
                let _ = w.write_record(&record);
            }
        }
        csv_string(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deficits::detect_all;
    use crate::matching::{classify_campaign, ClassifyConfig};
    use crate::synthesis::{example_fixture, example_fixture_manifest};

    #[test]
    fn evaluation_of_example_fixture() {
        let c = example_fixture();
        let cls = classify_campaign(&c, &ClassifyConfig::default()).unwrap();
        let report = EvaluationReport::new(&[(&c, &cls)], 0.5, 0.0);
        let m = example_fixture_manifest();
        assert_eq!(report.total.counts, m.counts);
        assert_eq!(report.total.ground_truth, m.ground_truth);
        assert_eq!(report.total.predictions, m.predictions);
        assert!(report.conserved);
        assert_eq!(report.runs.len(), 3);
        let csv = report.to_csv();
        assert!(csv.starts_with("campaign_id,run_id,frames"));
        assert!(csv.ends_with(",total,9,13,14,6,5,2,3\n"));
        assert!(report.to_text().contains("conservation"));
    }

    #[test]
    fn findings_renderers() {
        let c = example_fixture();
        let cls = classify_campaign(&c, &ClassifyConfig::default()).unwrap();
        let g = Eerg::from_classification(&cls).unwrap();
        let report = FindingsReport::new(1, detect_all(&g, 1));
        let text = report.to_text();
        assert!(text.starts_with("2 deficit hypotheses"));
        assert!(text.contains("hypothesis FaultyPatternAssociation at order -3 (explicit)"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["hypotheses"].as_array().unwrap().len(), 2);
        assert!(json["findings"][0]["evidence"][0]["chain"].is_array());
        assert!(report.to_csv().lines().count() > 1);
    }
}
