//! Runs the synthetic benchmark and prints raw versus refined metrics.
//!
//! ```text
//! cargo run --release --example benchmark -- [sequences] [seed] [config.toml]
//! ```

use std::time::Instant;

use skelrefine::config::PipelineConfig;
use skelrefine::eval::{evaluate_track, AlignmentMode, ComparisonTable};
use skelrefine::pipeline::{refine_frames, track, MATCH_TOLERANCE_S};
use skelrefine::synth::{benchmark_scripts, generate, topology};
use skelrefine::{BoneModel, CameraModel};

fn main() -> skelrefine::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2024);

    let topology = topology();
    let camera = CameraModel::default();
    let config = match args.next() {
        Some(path) => PipelineConfig::load(std::path::Path::new(&path))?,
        None => PipelineConfig::default(),
    };
    let mut raw_rows = Vec::new();
    let mut ref_rows = Vec::new();
    let mut raw_var = 0.0;
    let mut ref_var = 0.0;
    let mut frames = 0;
    let mut elapsed = 0.0;
    for (i, script) in benchmark_scripts(count, seed).iter().enumerate() {
        let seq = generate(script, &camera, seed + i as u64)?;
        let model = BoneModel::new(&config.bones.initial_ratios, config.estimator.initial_variance);
        let start = Instant::now();
        let out = refine_frames(&topology, &config, model, &seq.noisy)?;
        elapsed += start.elapsed().as_secs_f64();
        frames += seq.noisy.len();

        let truth = track(&seq.truth);
        let raw = evaluate_track(&topology, &track(&seq.noisy), &truth, AlignmentMode::PerFrame, MATCH_TOLERANCE_S)?;
        let refined_track: Vec<_> = out.frames.iter().map(|f| (f.timestamp, f.pose.clone())).collect();
        let refined = evaluate_track(&topology, &refined_track, &truth, AlignmentMode::PerFrame, MATCH_TOLERANCE_S)?;
        println!(
            "{:>2} {:<14?} raw {:6.1} mm {:5.1}°  refined {:6.1} mm {:5.1}°  var {:7.1} -> {:6.1} mm²  resets {} failures {}",
            i,
            script.motion,
            raw.mpjpe_3d_mm,
            raw.angles.mean_deg,
            refined.mpjpe_3d_mm,
            refined.angles.mean_deg,
            raw.bone_variance.mean_mm2,
            refined.bone_variance.mean_mm2,
            out.resets,
            out.failures()
        );
        raw_var += raw.bone_variance.mean_mm2;
        ref_var += refined.bone_variance.mean_mm2;
        raw_rows.push(raw.summary());
        ref_rows.push(refined.summary());
    }
    let mean = |rows: &[skelrefine::eval::SummaryRow]| {
        let n = rows.len() as f64;
        skelrefine::eval::SummaryRow {
            mpjpe_3d_mm: rows.iter().map(|r| r.mpjpe_3d_mm).sum::<f64>() / n,
            mpjpe_3d_std_mm: rows.iter().map(|r| r.mpjpe_3d_std_mm).sum::<f64>() / n,
            angle_error_deg: rows.iter().map(|r| r.angle_error_deg).sum::<f64>() / n,
            angle_std_deg: rows.iter().map(|r| r.angle_std_deg).sum::<f64>() / n,
        }
    };
    let table = ComparisonTable {
        rows: vec![("raw".into(), mean(&raw_rows)), ("refined".into(), mean(&ref_rows))],
    };
    print!("{}", table.render());
    println!(
        "bone variance {:.1} -> {:.1} mm²; {frames} frames in {elapsed:.2} s ({:.0} frames/s)",
        raw_var / count as f64,
        ref_var / count as f64,
        frames as f64 / elapsed
    );
    Ok(())
}
