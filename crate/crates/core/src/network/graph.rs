use rand::Rng;

use super::DegreeTables;
use crate::error::{Result, SimError};
use crate::population::Rating;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub rater: u32,
    pub note: u32,
    pub rating: Option<Rating>,
}

/// Bipartite rater–note graph. Rater and note ids live in separate index
/// spaces `0..n_raters` and `0..n_notes`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingGraph {
    pub n_raters: usize,
    pub n_notes: usize,
    pub edges: Vec<Edge>,
}

impl RatingGraph {
    pub fn new(n_raters: usize, n_notes: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let edges = pairs
            .into_iter()
            .map(|(rater, note)| Edge {
                rater,
                note,
                rating: None,
            })
            .collect();
        RatingGraph {
            n_raters,
            n_notes,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn rater_degrees(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.n_raters];
        for e in &self.edges {
            d[e.rater as usize] += 1;
        }
        d
    }

    pub fn note_degrees(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.n_notes];
        for e in &self.edges {
            d[e.note as usize] += 1;
        }
        d
    }

    /// Checks ids are in range and no `(rater, note)` pair repeats.
    pub fn validate(&self) -> Result<()> {
        let mut keys: Vec<u64> = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.rater as usize >= self.n_raters || e.note as usize >= self.n_notes {
                return Err(SimError::Data(format!("edge ({}, {}) out of range", e.rater, e.note)));
            }
            keys.push(edge_key(e.rater, e.note));
        }
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Data("duplicate rater-note edge".into()));
        }
        Ok(())
    }

    /// Fraction of HELPFUL, SOMEWHAT HELPFUL and NOT HELPFUL among rated edges.
    pub fn rating_mix(&self) -> [f64; 3] {
        let mut c = [0usize; 3];
        let mut n = 0usize;
        for r in self.edges.iter().filter_map(|e| e.rating) {
            n += 1;
            c[match r {
                Rating::Helpful => 0,
                Rating::Somewhat => 1,
                Rating::NotHelpful => 2,
            }] += 1;
        }
        let n = n.max(1) as f64;
        [c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n]
    }
}

pub(crate) fn edge_key(rater: u32, note: u32) -> u64 {
    ((rater as u64) << 32) | note as u64
}

/// Every rater rates every note.
pub fn complete_graph(n_raters: usize, n_notes: usize) -> RatingGraph {
    RatingGraph::new(
        n_raters,
        n_notes,
        (0..n_raters as u32).flat_map(|u| (0..n_notes as u32).map(move |n| (u, n))),
    )
}

/// Draws `n_notes` note degrees from the tables, then adds raters one at a
/// time with table-drawn degrees, wiring each rater stub to a uniformly
/// chosen open note stub, until every note stub is filled. A rater whose
/// remaining open stubs all sit on notes it already rated is truncated, as
/// is the last rater.
pub fn sample_seed_graph(tables: &DegreeTables, n_notes: usize, seed: u64) -> Result<RatingGraph> {
    if tables.note_degrees.is_empty() || tables.rater_degrees.is_empty() || n_notes == 0 {
        return Err(SimError::Data("cannot sample a graph from empty degree tables".into()));
    }
    let mut rng = stream(seed, Stream::SeedGraph);
    let note_deg: Vec<u32> = (0..n_notes)
        .map(|_| tables.note_degrees[rng.random_range(0..tables.note_degrees.len())])
        .collect();
    let mut open: Vec<u32> = note_deg
        .iter()
        .enumerate()
        .flat_map(|(n, &d)| std::iter::repeat_n(n as u32, d as usize))
        .collect();
    let mut last_rater = vec![u32::MAX; n_notes];
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(open.len());
    let mut rater = 0u32;
    while !open.is_empty() {
        let want = tables.rater_degrees[rng.random_range(0..tables.rater_degrees.len())];
        let mut placed = 0u32;
        'stubs: while placed < want && !open.is_empty() {
            for _ in 0..64 {
                let idx = rng.random_range(0..open.len());
                let note = open[idx];
                if last_rater[note as usize] != rater {
                    open.swap_remove(idx);
                    last_rater[note as usize] = rater;
                    pairs.push((rater, note));
                    placed += 1;
                    continue 'stubs;
                }
            }
            // Random probing failed; draw the rest of this rater's stubs from
            // a shuffled list of the open stubs it can still take.
            let mut candidates: Vec<usize> = (0..open.len())
                .filter(|&i| last_rater[open[i] as usize] != rater)
                .collect();
            let mut taken = Vec::new();
            let mut k = 0;
            while placed < want && k < candidates.len() {
                let j = rng.random_range(k..candidates.len());
                candidates.swap(k, j);
                let pos = candidates[k];
                k += 1;
                let note = open[pos];
                if last_rater[note as usize] != rater {
                    last_rater[note as usize] = rater;
                    pairs.push((rater, note));
                    taken.push(pos);
                    placed += 1;
                }
            }
            // remove from the back so pending positions stay valid
            taken.sort_unstable_by(|a, b| b.cmp(a));
            for pos in taken {
                open.swap_remove(pos);
            }
            break;
        }
        if placed > 0 {
            rater += 1;
        }
    }
    Ok(RatingGraph::new(rater as usize, n_notes, pairs))
}
