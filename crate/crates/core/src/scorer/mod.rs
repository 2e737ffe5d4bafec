//! Matrix-factorization note scorer: model fit, publication rule and the
//! two-thirds rater helpfulness filter.

mod data;
mod fit;
mod pipeline;

pub use data::FitData;
pub use fit::{fit, gradient, loss, FitHyper, FittedParams, LossNormalization, MuPenalty, Optimizer};
pub use pipeline::{
    decide_status, helpfulness_filter, helpfulness_filter_with, score_pipeline, score_pipeline_with, write_note_csv,
    write_rater_csv, FilterConfig, FilterRule, NoteStatus, PipelineOutput,
};
