use crate::error::{Result, SimError};
use crate::network::RatingGraph;

/// Rated edges of a graph in compact form, indexed both rater-major and
/// note-major. Only raters and notes with at least one rating (and not
/// excluded) take part; `rater_ids`/`note_ids` map local to global ids.
#[derive(Debug, Clone)]
pub struct FitData {
    pub n_raters_total: usize,
    pub n_notes_total: usize,
    pub rater_ids: Vec<u32>,
    pub note_ids: Vec<u32>,
    // rater-major: for local rater u, entries by_rater_start[u]..by_rater_start[u+1]
    pub(crate) by_rater_start: Vec<usize>,
    pub(crate) by_rater_note: Vec<u32>,
    pub(crate) by_rater_value: Vec<f64>,
    // note-major
    pub(crate) by_note_start: Vec<usize>,
    pub(crate) by_note_rater: Vec<u32>,
    pub(crate) by_note_value: Vec<f64>,
}

fn csr(n: usize, keys: &[u32], other: &[u32], vals: &[f64]) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let mut start = vec![0usize; n + 1];
    for &k in keys {
        start[k as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut o = vec![0u32; keys.len()];
    let mut v = vec![0f64; keys.len()];
    for ((&k, &ot), &val) in keys.iter().zip(other).zip(vals) {
        let slot = fill[k as usize];
        o[slot] = ot;
        v[slot] = val;
        fill[k as usize] += 1;
    }
    (start, o, v)
}

impl FitData {
    /// Collects rated edges, skipping raters flagged in `exclude_raters`.
    pub fn from_graph(graph: &RatingGraph, exclude_raters: Option<&[bool]>) -> Result<FitData> {
        let mut rater_local = vec![u32::MAX; graph.n_raters];
        let mut note_local = vec![u32::MAX; graph.n_notes];
        let mut rater_ids = Vec::new();
        let mut note_ids = Vec::new();
        let mut us = Vec::with_capacity(graph.len());
        let mut ns = Vec::with_capacity(graph.len());
        let mut vals = Vec::with_capacity(graph.len());
        for e in &graph.edges {
            let Some(r) = e.rating else { continue };
            if exclude_raters.is_some_and(|x| x[e.rater as usize]) {
                continue;
            }
            let lu = &mut rater_local[e.rater as usize];
            if *lu == u32::MAX {
                *lu = rater_ids.len() as u32;
                rater_ids.push(e.rater);
            }
            let ln = &mut note_local[e.note as usize];
            if *ln == u32::MAX {
                *ln = note_ids.len() as u32;
                note_ids.push(e.note);
            }
            us.push(*lu);
            ns.push(*ln);
            vals.push(r.value());
        }
        if vals.is_empty() {
            return Err(SimError::Data("no ratings to fit".into()));
        }
        let (by_rater_start, by_rater_note, by_rater_value) = csr(rater_ids.len(), &us, &ns, &vals);
        let (by_note_start, by_note_rater, by_note_value) = csr(note_ids.len(), &ns, &us, &vals);
        Ok(FitData {
            n_raters_total: graph.n_raters,
            n_notes_total: graph.n_notes,
            rater_ids,
            note_ids,
            by_rater_start,
            by_rater_note,
            by_rater_value,
            by_note_start,
            by_note_rater,
            by_note_value,
        })
    }

    pub fn n_ratings(&self) -> usize {
        self.by_rater_value.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rater_ids.len()
    }

    pub fn n_notes(&self) -> usize {
        self.note_ids.len()
    }

    pub(crate) fn rater_entries(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.by_rater_start[u]..self.by_rater_start[u + 1];
        self.by_rater_note[r.clone()]
            .iter()
            .zip(&self.by_rater_value[r])
            .map(|(&n, &v)| (n as usize, v))
    }

    pub(crate) fn note_entries(&self, n: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.by_note_start[n]..self.by_note_start[n + 1];
        self.by_note_rater[r.clone()]
            .iter()
            .zip(&self.by_note_value[r])
            .map(|(&u, &v)| (u as usize, v))
    }

    pub(crate) fn rater_degree(&self, u: usize) -> usize {
        self.by_rater_start[u + 1] - self.by_rater_start[u]
    }

    pub(crate) fn note_degree(&self, n: usize) -> usize {
        self.by_note_start[n + 1] - self.by_note_start[n]
    }
}
