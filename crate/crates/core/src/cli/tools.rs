use serde_json::json;

use super::pipeline::load_dataset_checked;
use super::{failure, AblateArgs, CliError, NmsProbeArgs, SynthArgs};
use crate::compositing::{apply_ablation, sprite_rect};
use crate::detector::{parse_record_line, Category, Detection};
use crate::geometry::{BBox, PixelRect};
use crate::nms::{chain_reaction_probe, NmsConfig, NmsError, ProbeMode};
use crate::synthetic::{generate_synthetic, SyntheticConfig};

pub fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let ds = load_dataset_checked(&args.dataset.annotations, &args.dataset.images)?;
    let inst = ds.instance(args.instance).map_err(|e| CliError::Usage(e.to_string()))?;
    if inst.mask.count_foreground() == 0 {
        return Err(CliError::Usage(format!("instance {} has an empty mask", inst.instance_id)));
    }
    let image = ds.load_image(inst.image_id).map_err(failure)?;
    let rect = match args.bbox {
        Some([x0, y0, x1, y1]) => PixelRect::new(x0, y0, x1, y1),
        None => sprite_rect(inst),
    };
    let out = apply_ablation(&image, rect, &inst.mask, args.variant, args.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    out.save_png(&args.out).map_err(failure)?;
    eprintln!("wrote {} ablation of instance {} to {}", args.variant.as_str(), inst.instance_id, args.out.display());
    Ok(())
}

pub fn cmd_nms_probe(args: &NmsProbeArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.detections)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.detections.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if !line.trim().is_empty() {
            records.push(parse_record_line(line, i + 1).map_err(failure)?);
        }
    }
    let record = match &args.case_id {
        Some(id) => records
            .into_iter()
            .find(|r| &r.case_id == id)
            .ok_or_else(|| CliError::Usage(format!("case {id} not in {}", args.detections.display())))?,
        None if records.len() == 1 => records.remove(0),
        None => {
            return Err(CliError::Usage(format!(
                "{} holds {} records; pick one with --case-id",
                args.detections.display(),
                records.len()
            )))
        }
    };
    let detections: Vec<Detection> = record
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let [x0, y0, x1, y1] = d.bbox;
            Detection::new(BBox::new(x0, y0, x1, y1), d.score, Category::new(d.category_id, d.category_name.clone()))
                .map_err(|e| failure(format!("detection {i}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let cfg = NmsConfig {
        iou_threshold: args.iou_threshold,
        class_aware: !args.class_agnostic,
    };
    let mode = args.attenuate.map_or(ProbeMode::Remove, ProbeMode::Attenuate);
    let r = chain_reaction_probe(&detections, args.index, &cfg, mode).map_err(|e| match e {
        NmsError::IndexOutOfRange { .. } | NmsError::InvalidThreshold(_) | NmsError::InvalidFactor(_) => {
            CliError::Usage(e.to_string())
        }
    })?;
    let report = json!({
        "case_id": record.case_id,
        "detector_id": record.detector_id,
        "probed_index": r.probed_index,
        "mode": match mode { ProbeMode::Remove => "remove".to_string(), ProbeMode::Attenuate(f) => format!("attenuate:{f}") },
        "kept_before": r.kept_before,
        "kept_after": r.kept_after,
        "newly_surfaced": r.newly_surfaced,
        "newly_suppressed": r.newly_suppressed,
        "kept_diff": r.kept_diff(),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(failure)?);
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.images == 0 || args.width < 48 || args.height < 48 {
        return Err(CliError::Usage("synth needs at least one image of at least 48x48".into()));
    }
    let cfg = SyntheticConfig {
        images: args.images,
        width: args.width,
        height: args.height,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let corpus = generate_synthetic(&args.out, &cfg).map_err(failure)?;
    println!("{}", corpus.annotations.display());
    Ok(())
}
