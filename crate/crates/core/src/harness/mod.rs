//! Experiment plumbing: JSON configs, binary tensor files, IDX ingestion,
//! CSV reports and the staged attack pipeline.

mod config;
mod gradfile;
mod idx;
mod io;
mod stages;

pub use config::{
    digest_hex, load_source, AttackConfig, DataConfig, DenoiseConfig, DiffusionConfig,
    ExperimentConfig, ProbeConfig, ScheduleConfig, SurrogateConfig,
};
pub use gradfile::{FileRole, GradientFile, GRADIENT_MAGIC, GRADIENT_VERSION};
pub use idx::{
    decode_idx_images, decode_idx_labels, encode_idx_images, encode_idx_labels, load_idx_dataset,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use io::{
    csv_bytes, parse_report_csv, read_artifact, read_csv, read_json, report_csv, write_atomic,
    write_json, REPORT_HEADER,
};
pub use stages::{
    denoise, eval, eval_files, harvest, harvested, invert, pipeline, run_stage, simulate,
    summarize_reports, train_diffusion, victims, InversionRow, PrivacySummary, ProvenanceRow,
    ReportSummary, Run, RunRecord, Stage, StageTiming,
};

/// Sizes the global worker pool from `PGLA_THREADS` when it is set.
/// Results do not depend on the thread count.
pub fn configure_threads() -> crate::Result<()> {
    let Ok(v) = std::env::var("PGLA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        crate::Error::Config(vec![crate::error::FieldError::new(
            "PGLA_THREADS",
            format!("expected a positive integer, got {v:?}"),
        )])
    })?;
    if n == 0 {
        return Err(crate::Error::Config(vec![crate::error::FieldError::new(
            "PGLA_THREADS",
            "must be at least 1",
        )]));
    }
    // A pool that is already built keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
