//! Command-line frontend.
//!
//! The pipeline is split into `generate`, `run` and `score` stages that hand
//! off through files in one output directory:
//!
//! ```text
//! out/manifest.jsonl      one test case per line, with its image path
//! out/images/*.png        generated test images
//! out/detections.jsonl    one exchange record per manifest row
//! out/report/             affected table, per-image tables, records, exemplars
//! ```
//!
//! Exit codes: 0 success, 1 pipeline failure, 2 usage or configuration error.

mod pipeline;
mod tools;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::compositing::AblationVariant;
use crate::stats::DEFAULT_TAUS;

pub use self::pipeline::{read_manifest, DetectorSpec, ManifestEntry, DETECTIONS_FILE, MANIFEST_FILE, PARTIAL_FILE};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

pub(crate) fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "transplant-bench", version, about = "Object-transplanting robustness harness for object detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate sweep images and the manifest.
    Generate(GenerateArgs),
    /// Run a detector over every manifest case.
    Run(RunArgs),
    /// Score detections and write reports.
    Score(ScoreArgs),
    /// Write a feature-interference ablation of one instance.
    Ablate(AblateArgs),
    /// Show how removing one detection changes greedy NMS output.
    NmsProbe(NmsProbeArgs),
    /// Write a synthetic corpus of coloured shapes.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// COCO-style instances annotation file.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory holding the images named in the annotations.
    #[arg(long)]
    pub images: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Base image id; repeatable. Defaults to every image in the dataset.
    #[arg(long = "base-image")]
    pub base_images: Vec<u64>,
    /// Restrict random source selection to this image.
    #[arg(long, conflicts_with = "instance")]
    pub source_image: Option<u64>,
    /// Transplant this instance instead of a random one.
    #[arg(long)]
    pub instance: Option<u64>,
    /// Duplicate an object within its own image.
    #[arg(long, conflicts_with = "source_image")]
    pub duplicate: bool,
    #[arg(long, default_value_t = 10)]
    pub stride: u32,
    #[arg(long, default_value_t = 0.01)]
    pub min_area: f64,
    #[arg(long, default_value_t = 0.30)]
    pub max_area: f64,
    /// Allow crowd annotations as sources.
    #[arg(long)]
    pub include_crowd: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory of a previous `generate`.
    #[arg(long)]
    pub out: PathBuf,
    /// `stub`, `file:PATH` or `http:URL`.
    #[arg(long)]
    pub detector: String,
    /// Worker count; also bounds in-flight HTTP requests.
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Affected-table threshold; repeatable.
    #[arg(long = "tau", default_values_t = DEFAULT_TAUS.to_vec())]
    pub taus: Vec<f64>,
    /// Detections must score strictly above this to count.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Detection file to score instead of `<out>/detections.jsonl`.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Report directory; defaults to `<out>/report`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub exemplars: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub instance: u64,
    #[arg(long, value_enum)]
    pub variant: AblationVariant,
    /// Kept box as `x0,y0,x1,y1` (half-open pixels). Defaults to the instance box.
    #[arg(long = "box", value_parser = parse_box)]
    pub bbox: Option<[i64; 4]>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output PNG path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NmsProbeArgs {
    /// Exchange file holding the detections.
    #[arg(long)]
    pub detections: PathBuf,
    /// Record to probe; may be omitted when the file holds one record.
    #[arg(long)]
    pub case_id: Option<String>,
    /// Index of the detection to remove, in file order.
    #[arg(long)]
    pub index: usize,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
    /// Let detections of different classes suppress each other.
    #[arg(long)]
    pub class_agnostic: bool,
    /// Multiply the probed score by this factor instead of removing it.
    #[arg(long)]
    pub attenuate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub images: u32,
    #[arg(long, default_value_t = 160)]
    pub width: u32,
    #[arg(long, default_value_t = 120)]
    pub height: u32,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

fn parse_box(s: &str) -> Result<[i64; 4], String> {
    let parts: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected four comma-separated integers x0,y0,x1,y1".to_string())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => pipeline::cmd_generate(&a),
        Command::Run(a) => pipeline::cmd_run(&a),
        Command::Score(a) => pipeline::cmd_score(&a),
        Command::Ablate(a) => tools::cmd_ablate(&a),
        Command::NmsProbe(a) => tools::cmd_nms_probe(&a),
        Command::Synth(a) => tools::cmd_synth(&a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_parsing() {
        assert_eq!(parse_box("1,2,3,4"), Ok([1, 2, 3, 4]));
        assert!(parse_box("1,2,3").is_err());
        assert!(parse_box("a,2,3,4").is_err());
    }

    #[test]
    fn tau_defaults_and_repeats() {
        let cli = Cli::try_parse_from(["tb", "score", "--out", "x"]).unwrap();
        let Command::Score(a) = cli.command else { panic!() };
        assert_eq!(a.taus, DEFAULT_TAUS.to_vec());
        let cli = Cli::try_parse_from(["tb", "score", "--out", "x", "--tau", "0.5", "--tau", "0.7"]).unwrap();
        let Command::Score(a) = cli.command else { panic!() };
        assert_eq!(a.taus, vec![0.5, 0.7]);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_from(["tb", "run"]), 2);
        assert_eq!(run_from(["tb", "generate", "--annotations", "a", "--images", "b", "--out", "c", "--instance", "1", "--source-image", "2"]), 2);
    }
}
