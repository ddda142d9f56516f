#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use eerg_core::campaign::{write_campaign, BoundingBox, Campaign, FrameRecord, GroundTruthObject, Prediction};
use eerg_core::deficits::DeficitType;
use eerg_core::ontology::{EntityRegistry, GranularityOrder, RelationChain};
use eerg_core::synthesis::{
    generate, leaf_paths, reference_injection, reference_registry, reference_spec, ExpectedFindings, SpecError, SynthRng,
};
use eerg_core::campaign::registry_from_decls;

pub fn reference_paths() -> (Arc<EntityRegistry>, Vec<RelationChain>) {
    let reg = registry_from_decls(&reference_registry()).expect("reference registry");
    let paths = leaf_paths(&reg).expect("paths");
    (Arc::new(reg), paths)
}

/// Box with float corners inside a `canvas` square.
pub fn random_box(rng: &mut SynthRng, canvas: f64, min_side: f64, max_side: f64) -> BoundingBox {
    let w = min_side + rng.unit() * (max_side - min_side);
    let h = min_side + rng.unit() * (max_side - min_side);
    let x = rng.unit() * (canvas - w);
    let y = rng.unit() * (canvas - h);
    BoundingBox::new(x, y, x + w, y + h).expect("positive sides")
}

/// `b` moved and resized by up to `amount` of its sides.
pub fn jitter(rng: &mut SynthRng, b: &BoundingBox, amount: f64) -> BoundingBox {
    let (w, h) = (b.width(), b.height());
    let mut d = |s: f64| (rng.unit() * 2.0 - 1.0) * amount * s;
    let x0 = b.x_min + d(w);
    let y0 = b.y_min + d(h);
    let x1 = (b.x_max + d(w)).max(x0 + 0.01 * w);
    let y1 = (b.y_max + d(h)).max(y0 + 0.01 * h);
    BoundingBox::new(x0, y0, x1, y1).expect("positive sides")
}

/// Unconstrained frame: overlapping ground truth, predictions near objects or
/// anywhere, arbitrary class labels.
pub fn random_frame(rng: &mut SynthRng, paths: &[RelationChain], index: usize) -> FrameRecord {
    let classes: Vec<String> = {
        let mut c: Vec<String> = paths
            .iter()
            .map(|p| p.label_at(GranularityOrder::Instance).unwrap().to_string())
            .collect();
        c.sort();
        c.dedup();
        c
    };
    let n_gt = rng.below(11) as usize;
    let n_pred = rng.below(11) as usize;
    let mut ground_truth = Vec::with_capacity(n_gt);
    for j in 0..n_gt {
        let path = &paths[rng.below(paths.len() as u64) as usize];
        let lowest = (rng.below(4) as i8).min(-path.terminal_order().value());
        let chain = path.truncated(GranularityOrder::try_from(-lowest).unwrap()).unwrap();
        ground_truth.push(GroundTruthObject {
            gt_id: format!("g{j}"),
            class_label: chain.label_at(GranularityOrder::Instance).unwrap().to_string(),
            chain,
            bbox: random_box(rng, 500.0, 10.0, 150.0),
        });
    }
    let mut predictions = Vec::with_capacity(n_pred);
    for j in 0..n_pred {
        let (bbox, class_label) = if !ground_truth.is_empty() && rng.chance(0.7) {
            let g = &ground_truth[rng.below(n_gt as u64) as usize];
            let class = if rng.chance(0.6) {
                g.class_label.clone()
            } else {
                classes[rng.below(classes.len() as u64) as usize].clone()
            };
            (jitter(rng, &g.bbox, 0.4), class)
        } else {
            (
                random_box(rng, 500.0, 10.0, 150.0),
                classes[rng.below(classes.len() as u64) as usize].clone(),
            )
        };
        predictions.push(Prediction {
            pred_id: format!("p{j}"),
            class_label,
            bbox,
            confidence: rng.unit(),
        });
    }
    FrameRecord {
        frame_id: format!("f{index:04}"),
        timestamp_us: index as u64 * 1000,
        ambient: paths.first().and_then(|p| p.truncated(GranularityOrder::Scene)),
        ground_truth,
        predictions,
    }
}

/// A generated campaign with a random selection of reference injections.
/// Seeds whose partial-rate injections never fire are skipped.
pub fn random_campaign(seed: u64, runs: usize, frames: usize) -> (Campaign, ExpectedFindings) {
    (0..)
        .find_map(|k| try_random_campaign(seed.wrapping_add(k * 7919), runs, frames))
        .expect("some seed works")
}

fn try_random_campaign(seed: u64, runs: usize, frames: usize) -> Option<(Campaign, ExpectedFindings)> {
    let mut rng = SynthRng::new(seed ^ 0x5eed);
    let mut spec = reference_spec(seed);
    spec.runs = runs;
    spec.frames_per_run = frames;
    spec.objects_per_frame = [1, 1 + rng.below(10) as usize];
    for t in DeficitType::ALL {
        if rng.chance(0.4) {
            let mut d = reference_injection(t);
            d.rate = 0.3 + 0.7 * rng.unit();
            spec.injected.push(d);
        }
    }
    match generate(&spec) {
        Ok(x) => Some(x),
        Err(SpecError::NotObserved(_)) => None,
        Err(e) => panic!("reference injections are valid: {e}"),
    }
}

pub fn write_to(campaign: &Campaign, path: &Path) {
    write_campaign(campaign, std::fs::File::create(path).unwrap()).unwrap();
}

/// Rewrites a campaign file with its frame records in a shuffled order.
pub fn shuffle_frame_lines(src: &Path, dst: &Path, seed: u64) {
    let text = std::fs::read_to_string(src).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let mut rng = SynthRng::new(seed);
    rng.shuffle(&mut lines[1..]);
    let mut out = lines.join("\n");
    out.push('\n');
    std::fs::write(dst, out).unwrap();
}

/// Runs the CLI in-process, returning (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, Vec<u8>, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("eerg").chain(args.iter().copied());
    let code = eerg_core::cli::run(argv, &mut out, &mut err);
    (code, out, String::from_utf8_lossy(&err).into_owned())
}
