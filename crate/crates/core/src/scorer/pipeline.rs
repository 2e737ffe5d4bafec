use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::FitData;
use super::fit::{fit_data, FitHyper, FittedParams};
use crate::error::{Result, SimError};
use crate::network::RatingGraph;
use crate::population::Rating;

pub const PUBLISH_HELPFULNESS: f64 = 0.4;
pub const PUBLISH_MAX_ABS_BIAS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoteStatus {
    Published,
    NotPublished,
}

impl NoteStatus {
    pub fn from_estimates(i_hat: f64, f_hat: f64) -> Self {
        if i_hat > PUBLISH_HELPFULNESS && f_hat.abs() < PUBLISH_MAX_ABS_BIAS {
            NoteStatus::Published
        } else {
            NoteStatus::NotPublished
        }
    }

    pub fn is_published(self) -> bool {
        self == NoteStatus::Published
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NoteStatus::Published => "published",
            NoteStatus::NotPublished => "not_published",
        }
    }
}

/// Status of every note; notes that were not fitted are never published.
pub fn decide_status(params: &FittedParams) -> Vec<NoteStatus> {
    (0..params.note_intercept.len())
        .map(|n| {
            if params.note_fitted[n] {
                NoteStatus::from_estimates(params.note_intercept[n], params.note_factor[n])
            } else {
                NoteStatus::NotPublished
            }
        })
        .collect()
}

/// Which notes a rater's ratings are checked against in the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterRule {
    /// Every note counts: HELPFUL matches published notes, NOT HELPFUL
    /// matches all others.
    #[default]
    Binary,
    /// Only notes with a firm status count: published ones, and firmly
    /// unhelpful ones below the line
    /// `i_hat < unhelpful_intercept - unhelpful_slope * |f_hat|`. Notes in
    /// between are skipped.
    ThreeWay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub enabled: bool,
    pub rule: FilterRule,
    pub unhelpful_intercept: f64,
    pub unhelpful_slope: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            enabled: true,
            rule: FilterRule::Binary,
            unhelpful_intercept: -0.05,
            unhelpful_slope: 0.8,
        }
    }
}

impl FilterConfig {
    pub fn disabled() -> Self {
        FilterConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn three_way() -> Self {
        FilterConfig {
            rule: FilterRule::ThreeWay,
            ..Default::default()
        }
    }

    /// `Some(true)` for published, `Some(false)` for a note counted as
    /// unhelpful, `None` when the note does not take part.
    fn firm_status(&self, params: &FittedParams, status: &[NoteStatus], note: usize) -> Option<bool> {
        if status[note].is_published() {
            return Some(true);
        }
        match self.rule {
            FilterRule::Binary => Some(false),
            FilterRule::ThreeWay => {
                let line = self.unhelpful_intercept - self.unhelpful_slope * params.note_factor[note].abs();
                (params.note_fitted[note] && params.note_intercept[note] < line).then_some(false)
            }
        }
    }
}

/// Flags raters whose HELPFUL / NOT HELPFUL ratings agree with the note
/// statuses less than two thirds of the time. SOMEWHAT ratings are ignored
/// and raters without any counted rating are kept.
pub fn helpfulness_filter(graph: &RatingGraph, status: &[NoteStatus]) -> Vec<bool> {
    let params = FittedParams::zeros(graph.n_raters, graph.n_notes);
    helpfulness_filter_with(graph, &params, status, &FilterConfig::default())
}

pub fn helpfulness_filter_with(
    graph: &RatingGraph,
    params: &FittedParams,
    status: &[NoteStatus],
    filter: &FilterConfig,
) -> Vec<bool> {
    let mut matches = vec![0u32; graph.n_raters];
    let mut total = vec![0u32; graph.n_raters];
    let firm: Vec<Option<bool>> = (0..graph.n_notes)
        .map(|n| filter.firm_status(params, status, n))
        .collect();
    for e in &graph.edges {
        let Some(published) = firm[e.note as usize] else {
            continue;
        };
        let agree = match e.rating {
            Some(Rating::Helpful) => published,
            Some(Rating::NotHelpful) => !published,
            Some(Rating::Somewhat) | None => continue,
        };
        total[e.rater as usize] += 1;
        matches[e.rater as usize] += u32::from(agree);
    }
    matches
        .iter()
        .zip(&total)
        .map(|(&m, &t)| 3 * u64::from(m) < 2 * u64::from(t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub params: FittedParams,
    pub status: Vec<NoteStatus>,
    pub initial_status: Vec<NoteStatus>,
    /// Per rater, whether the filter removed them.
    pub removed: Vec<bool>,
    pub n_fits: usize,
}

impl PipelineOutput {
    pub fn n_removed(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }
}

/// Fit, decide statuses, optionally filter raters with the binary rule and
/// refit from scratch on the surviving ratings.
pub fn score_pipeline(graph: &RatingGraph, hyper: &FitHyper, filter_enabled: bool) -> Result<PipelineOutput> {
    score_pipeline_with(
        graph,
        hyper,
        &FilterConfig {
            enabled: filter_enabled,
            ..Default::default()
        },
    )
}

pub fn score_pipeline_with(graph: &RatingGraph, hyper: &FitHyper, filter: &FilterConfig) -> Result<PipelineOutput> {
    let filter_enabled = filter.enabled;
    let data = FitData::from_graph(graph, None)?;
    let first = fit_data(&data, hyper)?;
    let initial_status = decide_status(&first);
    let none_removed = || vec![false; graph.n_raters];
    if !filter_enabled {
        return Ok(PipelineOutput {
            params: first,
            status: initial_status.clone(),
            initial_status,
            removed: none_removed(),
            n_fits: 1,
        });
    }
    let removed = helpfulness_filter_with(graph, &first, &initial_status, filter);
    if !removed.iter().any(|&r| r) {
        // The refit would see identical data and seed.
        return Ok(PipelineOutput {
            params: first,
            status: initial_status.clone(),
            initial_status,
            removed,
            n_fits: 1,
        });
    }
    let (params, status) = match FitData::from_graph(graph, Some(&removed)) {
        Ok(d) => {
            let p = fit_data(&d, hyper)?;
            let s = decide_status(&p);
            (p, s)
        }
        // every rating came from removed raters
        Err(SimError::Data(_)) => {
            let mut p = FittedParams::zeros(graph.n_raters, graph.n_notes);
            p.epochs_run = 0;
            (p, vec![NoteStatus::NotPublished; graph.n_notes])
        }
        Err(e) => return Err(e),
    };
    log::debug!(
        "filter removed {} of {} raters",
        removed.iter().filter(|&&r| r).count(),
        graph.n_raters
    );
    Ok(PipelineOutput {
        params,
        status,
        initial_status,
        removed,
        n_fits: 2,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

/// Writes `note_id,i_hat,f_hat,status`. Unfitted notes get empty estimate
/// cells.
pub fn write_note_csv(path: &Path, params: &FittedParams, status: &[NoteStatus]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| SimError::io(path, e);
    writeln!(w, "note_id,i_hat,f_hat,status").map_err(io)?;
    for (n, s) in status.iter().enumerate().take(params.note_intercept.len()) {
        if params.note_fitted[n] {
            writeln!(
                w,
                "{n},{},{},{}",
                params.note_intercept[n],
                params.note_factor[n],
                s.as_str()
            )
        } else {
            writeln!(w, "{n},,,{}", s.as_str())
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `rater_id,i_hat,f_hat,removed`.
pub fn write_rater_csv(path: &Path, params: &FittedParams, removed: &[bool]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| SimError::io(path, e);
    writeln!(w, "rater_id,i_hat,f_hat,removed").map_err(io)?;
    for (u, r) in removed.iter().enumerate().take(params.rater_intercept.len()) {
        if params.rater_fitted[u] {
            writeln!(w, "{u},{},{},{r}", params.rater_intercept[u], params.rater_factor[u])
        } else {
            writeln!(w, "{u},,,{r}")
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
