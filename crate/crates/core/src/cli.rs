//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, and for `findings` no finding |
//! | 1 | input does not load, validate or classify |
//! | 2 | I/O failure or invalid usage |
//! | 3 | `findings` reported at least one finding |
//!
//! Every flag can be set through an environment variable named after it
//! with the `EERG_` prefix, e.g. `EERG_IOU_THRESHOLD=0.7`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::campaign::{
    campaign_stats, load_campaign_with, read_campaign_diagnostics, write_campaign, Campaign, LoadError,
    LoadOptions,
};
use crate::deficits::detect_all;
use crate::eerg::{Eerg, EergError};
use crate::matching::{classify_campaign, Classification, ClassifyConfig, MatchConfig};
use crate::ontology::{validate_label, ChainMode, GranularityOrder};
use crate::report::{graph_csv, graph_json, to_dot, EvaluationReport, FindingsReport};
use crate::synthesis::{generate, example_fixture, schematic_fixture, write_manifest, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FINDINGS: i32 = 3;

pub const CAMPAIGN_FILE: &str = "campaign.jsonl";
pub const MANIFEST_FILE: &str = "expected.jsonl";

#[derive(Debug, Parser)]
#[command(name = "eerg", version, about = "Classify detector output against granularity-annotated ground truth and mine recognition deficits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate campaign files, reporting every violation.
    Validate(ValidateArgs),
    /// Per-run and total R0-R3 counts.
    Evaluate(PipelineArgs),
    /// Export the relation graph.
    Graph(PipelineArgs),
    /// Report deficit hypotheses. Exits 3 when there is any.
    Findings(PipelineArgs),
    /// Generate a synthetic campaign and its expected-findings manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Reject entities and links missing from the registry (default).
    #[arg(long, env = "EERG_STRICT", conflicts_with = "permissive")]
    pub strict: bool,
    /// Register entities and links missing from the registry.
    #[arg(long, env = "EERG_PERMISSIVE")]
    pub permissive: bool,
}

impl ChainArgs {
    fn mode(&self) -> ChainMode {
        if self.permissive {
            ChainMode::Permissive
        } else {
            ChainMode::Strict
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub chains: ChainArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Campaign files; several files are merged.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub chains: ChainArgs,
    /// Minimum IoU for a prediction to match a ground-truth object.
    #[arg(long, env = "EERG_IOU_THRESHOLD", default_value_t = 0.5)]
    pub iou_threshold: f64,
    /// Minimum observations of a chain for it to count as evidence.
    #[arg(long, env = "EERG_MIN_SUPPORT", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub min_support: u64,
    /// Predictions below this confidence are dropped before matching.
    #[arg(long, env = "EERG_MIN_CONFIDENCE", default_value_t = 0.0)]
    pub min_confidence: f64,
    /// Count each (run, object, chain, result) once.
    #[arg(long, env = "EERG_DEDUPE_PER_RUN")]
    pub dedupe_per_run: bool,
    /// JSON object mapping class labels to canonical labels.
    #[arg(long, env = "EERG_CLASS_MAP")]
    pub class_map: Option<PathBuf>,
    #[arg(long, value_enum, env = "EERG_FORMAT", default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(short, long, env = "EERG_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["spec", "example_fixture", "schematic_fixture"]))]
pub struct SynthArgs {
    /// JSON generator spec.
    #[arg(long, env = "EERG_SPEC")]
    pub spec: Option<PathBuf>,
    /// Write the built-in two-identification fixture instead.
    #[arg(long)]
    pub example_fixture: bool,
    /// Write the built-in scooter fixture instead.
    #[arg(long)]
    pub schematic_fixture: bool,
    /// Output directory, created if missing.
    #[arg(short, long, env = "EERG_OUT_DIR")]
    pub out: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        if e.is_io() {
            Failure::io(e.to_string())
        } else {
            Failure::invalid(e.to_string())
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_IO
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => validate(a, out, err),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Graph(a) => graph(a, out),
        Command::Findings(a) => findings(a, out),
        Command::Synth(a) => synth(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn validate(a: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let options = LoadOptions { mode: a.chains.mode() };
    let mut code = EXIT_OK;
    for path in &a.inputs {
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                code = code.max(EXIT_IO);
                continue;
            }
        };
        let (campaign, errors) = read_campaign_diagnostics(io::BufReader::new(file), options);
        if errors.is_empty() {
            let campaign = campaign.expect("no errors means a campaign");
            let s = campaign_stats(&campaign);
            let per_order: Vec<String> = GranularityOrder::ALL
                .iter()
                .map(|o| format!("{o}:{}", s.entities_at(*o)))
                .collect();
            write_out(
                out,
                &format!(
                    "ok {}: campaign '{}', {} runs, {} frames, {} ground truth, {} predictions, entities {}\n",
                    path.display(),
                    campaign.id,
                    s.runs,
                    s.frames,
                    s.ground_truth,
                    s.predictions,
                    per_order.join(" ")
                ),
            )?;
        } else {
            for e in &errors {
                let _ = writeln!(err, "{}: {e}", path.display());
            }
            let worst = if errors.iter().any(LoadError::is_io) { EXIT_IO } else { EXIT_INVALID };
            let _ = writeln!(err, "invalid {}: {} problems", path.display(), errors.len());
            code = code.max(worst);
        }
    }
    Ok(code)
}

fn classify_config(a: &PipelineArgs) -> Result<ClassifyConfig, Failure> {
    let usage = |m: String| Failure::io(m);
    let mut matching = MatchConfig::new(a.iou_threshold).map_err(|e| usage(e.to_string()))?;
    if let Some(path) = &a.class_map {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        for (k, v) in &map {
            for label in [k, v] {
                validate_label(label).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            }
        }
        matching = matching.with_equivalences(map);
    }
    let cfg = ClassifyConfig {
        matching,
        min_confidence: a.min_confidence,
        dedupe_per_run: a.dedupe_per_run,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

struct Loaded {
    campaigns: Vec<Campaign>,
    classifications: Vec<Classification>,
}

fn load_and_classify(a: &PipelineArgs) -> Result<(Loaded, ClassifyConfig), Failure> {
    let cfg = classify_config(a)?;
    let options = LoadOptions { mode: a.chains.mode() };
    let mut loaded = Loaded {
        campaigns: Vec::new(),
        classifications: Vec::new(),
    };
    for path in &a.inputs {
        let campaign = load_campaign_with(path, options)?;
        let classification = classify_campaign(&campaign, &cfg)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        loaded.campaigns.push(campaign);
        loaded.classifications.push(classification);
    }
    Ok((loaded, cfg))
}

fn merged_graph(loaded: &Loaded) -> Result<Eerg, Failure> {
    let mut graphs = loaded.classifications.iter().map(Eerg::from_classification);
    let first = graphs
        .next()
        .expect("at least one input")
        .map_err(|e| Failure::invalid(e.to_string()))?;
    graphs.try_fold(first, |acc, g| {
        let g = g.map_err(|e| Failure::invalid(e.to_string()))?;
        acc.merge(&g).map_err(|e| match e {
            EergError::RegistryMismatch => {
                Failure::invalid("input files declare different entity registries".to_string())
            }
            other => Failure::invalid(other.to_string()),
        })
    })
}

fn no_dot(a: &PipelineArgs, command: &str) -> Result<(), Failure> {
    if a.format == Format::Dot {
        return Err(Failure::io(format!("--format dot is only available for `graph`, not `{command}`")));
    }
    Ok(())
}

fn emit(a: &PipelineArgs, out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    match &a.output {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display()))),
        None => write_out(out, text),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::io(format!("cannot write output: {e}")))
}

fn evaluate(a: &PipelineArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    no_dot(a, "evaluate")?;
    let (loaded, cfg) = load_and_classify(a)?;
    let inputs: Vec<_> = loaded.campaigns.iter().zip(&loaded.classifications).collect();
    let report = EvaluationReport::new(&inputs, cfg.matching.iou_threshold(), cfg.min_confidence);
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        _ => report.to_text(),
    };
    emit(a, out, &text)?;
    Ok(EXIT_OK)
}

fn graph(a: &PipelineArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (loaded, _) = load_and_classify(a)?;
    let g = merged_graph(&loaded)?;
    let text = match a.format {
        Format::Text => g.to_text(),
        Format::Json => graph_json(&g),
        Format::Csv => graph_csv(&g),
        Format::Dot => to_dot(&g),
    };
    emit(a, out, &text)?;
    Ok(EXIT_OK)
}

fn findings(a: &PipelineArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    no_dot(a, "findings")?;
    let (loaded, _) = load_and_classify(a)?;
    let g = merged_graph(&loaded)?;
    let report = FindingsReport::new(a.min_support, detect_all(&g, a.min_support));
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        _ => report.to_text(),
    };
    emit(a, out, &text)?;
    Ok(if report.is_empty() { EXIT_OK } else { EXIT_FINDINGS })
}

fn write_campaign_file(dir: &Path, campaign: &Campaign) -> Result<PathBuf, Failure> {
    let path = dir.join(CAMPAIGN_FILE);
    let mut buf = Vec::new();
    write_campaign(campaign, &mut buf).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(&path, buf).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    if a.example_fixture || a.schematic_fixture {
        let campaign = if a.example_fixture { example_fixture() } else { schematic_fixture() };
        let path = write_campaign_file(&a.out, &campaign)?;
        write_out(out, &format!("wrote {}\n", path.display()))?;
        return Ok(EXIT_OK);
    }
    let spec_path = a.spec.as_ref().expect("clap enforces a source");
    let text = fs::read_to_string(spec_path).map_err(|e| Failure::io(format!("{}: {e}", spec_path.display())))?;
    let spec = SynthSpec::from_json(&text).map_err(|e| Failure::invalid(format!("{}: {e}", spec_path.display())))?;
    let (campaign, expected) =
        generate(&spec).map_err(|e| Failure::invalid(format!("{}: {e}", spec_path.display())))?;
    let path = write_campaign_file(&a.out, &campaign)?;
    let manifest_path = a.out.join(MANIFEST_FILE);
    let mut buf = Vec::new();
    write_manifest(&expected, &mut buf).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(&manifest_path, buf).map_err(|e| Failure::io(format!("{}: {e}", manifest_path.display())))?;
    let mut summary = format!(
        "wrote {} ({} frames) and {}\n",
        path.display(),
        campaign.frames().count(),
        manifest_path.display()
    );
    for e in &expected.entries {
        summary.push_str(&format!(
            "expect {} at order {}{} (observations {}, failures {})\n",
            e.deficit_type,
            e.locus,
            if e.collateral { " [collateral]" } else { "" },
            e.observations,
            e.failures
        ));
    }
    write_out(out, &summary)?;
    Ok(EXIT_OK)
}
