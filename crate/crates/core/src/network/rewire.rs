use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::edge_key;
use super::RatingGraph;
use crate::error::{Result, SimError};
use crate::population::Group;
use crate::rng::{stream, Stream};

/// Probability that a rewired edge joins same-group endpoints. The expected
/// in-group bias of the rewired graph is `2p - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomophilyTarget {
    pub p: f64,
}

impl HomophilyTarget {
    pub fn from_ingroup_bias(e_h: f64) -> Self {
        HomophilyTarget {
            p: ((e_h + 1.0) / 2.0).clamp(0.0, 1.0),
        }
    }

    pub fn expected_bias(&self) -> f64 {
        2.0 * self.p - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireStats {
    pub attempted: u64,
    pub accepted: u64,
    pub ingroup_bias_before: f64,
    pub ingroup_bias_after: f64,
}

/// `E_h = 2 e_h / E - 1`, with `e_h` the number of same-group edges.
pub fn measure_ingroup_bias(graph: &RatingGraph, rater_groups: &[Group], note_groups: &[Group]) -> Result<f64> {
    if graph.is_empty() {
        return Err(SimError::Undefined("in-group bias of an empty graph".into()));
    }
    let same = graph
        .edges
        .iter()
        .filter(|e| rater_groups[e.rater as usize] == note_groups[e.note as usize])
        .count();
    Ok(2.0 * same as f64 / graph.len() as f64 - 1.0)
}

/// Edge bucket by (rater group, note group).
fn bucket(r: Group, n: Group) -> usize {
    match (r, n) {
        (Group::Plus, Group::Plus) => 0,
        (Group::Plus, Group::Minus) => 1,
        (Group::Minus, Group::Plus) => 2,
        (Group::Minus, Group::Minus) => 3,
    }
}

fn flip(g: Group) -> Group {
    match g {
        Group::Plus => Group::Minus,
        Group::Minus => Group::Plus,
    }
}

const ABSENT: u32 = u32::MAX;
/// Partner edges tried per attempt before the attempt is skipped.
const PARTNER_DRAWS: usize = 16;

/// Edge indices with O(1) insert, remove and uniform pick.
struct IndexedSet {
    items: Vec<u32>,
}

impl IndexedSet {
    fn insert(&mut self, e: u32, pos: &mut [u32]) {
        pos[e as usize] = self.items.len() as u32;
        self.items.push(e);
    }

    fn remove(&mut self, e: u32, pos: &mut [u32]) {
        let i = pos[e as usize];
        if i == ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty when member present");
        self.items.swap_remove(i as usize);
        if last != e {
            pos[last as usize] = i;
        }
        pos[e as usize] = ABSENT;
    }
}

/// Degree-preserving double-edge swaps with in-group bias.
///
/// Each attempt takes the next edge `(u1, n1)` from a shuffled sweep and
/// draws two labels, same-group with probability `p` each: one for the new
/// edge `(u1, n2)` and one for `(u2, n1)`. The labels fix the groups of `u2`
/// and `n2`, so the partner edge `(u2, n2)` is drawn from that group bucket,
/// preferring edges not yet rewired in the current sweep. The swap is
/// redrawn up to `PARTNER_DRAWS` times while it would repeat a `(rater, note)`
/// pair; the attempt is skipped if none fits or the bucket is empty.
/// Every accepted swap relabels two edges with fresh Bernoulli(`p`) labels,
/// so once the whole graph has been swept the same-group fraction sits at
/// `p` unless the group degree totals make that infeasible.
pub fn rewire(
    graph: &mut RatingGraph,
    rater_groups: &[Group],
    note_groups: &[Group],
    target: HomophilyTarget,
    n_pair_swaps: u64,
    seed: u64,
) -> Result<RewireStats> {
    if rater_groups.len() < graph.n_raters || note_groups.len() < graph.n_notes {
        return Err(SimError::Config("group labels do not cover every node".into()));
    }
    if !(0.0..=1.0).contains(&target.p) {
        return Err(SimError::Config(format!("homophily p = {} outside [0, 1]", target.p)));
    }
    let before = measure_ingroup_bias(graph, rater_groups, note_groups)?;
    let m = graph.len();
    if m < 2 || n_pair_swaps == 0 {
        return Ok(RewireStats {
            attempted: 0,
            accepted: 0,
            ingroup_bias_before: before,
            ingroup_bias_after: before,
        });
    }
    let mut rng = stream(seed, Stream::Rewire);
    let mut present: HashSet<u64> = graph.edges.iter().map(|e| edge_key(e.rater, e.note)).collect();

    let groups_of = |g: &RatingGraph, e: u32| {
        let e = &g.edges[e as usize];
        (rater_groups[e.rater as usize], note_groups[e.note as usize])
    };

    let mut all: Vec<IndexedSet> = (0..4).map(|_| IndexedSet { items: Vec::new() }).collect();
    let mut fresh: Vec<IndexedSet> = (0..4).map(|_| IndexedSet { items: Vec::new() }).collect();
    let mut pos_all = vec![ABSENT; m];
    let mut pos_fresh = vec![ABSENT; m];
    for e in 0..m as u32 {
        let (gr, gn) = groups_of(graph, e);
        all[bucket(gr, gn)].insert(e, &mut pos_all);
    }

    let mut order: Vec<u32> = (0..m as u32).collect();
    let mut cursor = m;
    let mut accepted = 0u64;

    for _ in 0..n_pair_swaps {
        if cursor == m {
            order.shuffle(&mut rng);
            cursor = 0;
            for b in 0..4 {
                for &e in &fresh[b].items {
                    pos_fresh[e as usize] = ABSENT;
                }
                fresh[b].items.clear();
                for i in 0..all[b].items.len() {
                    let e = all[b].items[i];
                    fresh[b].insert(e, &mut pos_fresh);
                }
            }
        }
        let e1 = order[cursor];
        cursor += 1;

        let same1 = rng.random_bool(target.p);
        let same2 = rng.random_bool(target.p);
        let (g_u1, g_n1) = groups_of(graph, e1);
        let g_n2 = if same1 { g_u1 } else { flip(g_u1) };
        let g_u2 = if same2 { g_n1 } else { flip(g_n1) };
        let b2 = bucket(g_u2, g_n2);

        let f = &fresh[b2].items;
        let pool = if f.len() > 1 || (f.len() == 1 && f[0] != e1) {
            &fresh[b2]
        } else {
            &all[b2]
        };
        if pool.items.is_empty() {
            continue;
        }
        let mut partner = None;
        for _ in 0..PARTNER_DRAWS {
            let e2 = pool.items[rng.random_range(0..pool.items.len())];
            if e2 == e1 {
                continue;
            }
            let q = Edge2::of(graph, e1, e2);
            if q.u1 == q.u2 || q.n1 == q.n2 {
                continue;
            }
            if present.contains(&edge_key(q.u1, q.n2)) || present.contains(&edge_key(q.u2, q.n1)) {
                continue;
            }
            partner = Some((e2, q));
            break;
        }
        let Some((e2, Edge2 { u1, n1, u2, n2 })) = partner else {
            continue;
        };

        let (b1_old, b2_old) = (bucket(g_u1, g_n1), b2);
        all[b1_old].remove(e1, &mut pos_all);
        all[b2_old].remove(e2, &mut pos_all);
        fresh[b1_old].remove(e1, &mut pos_fresh);
        fresh[b2_old].remove(e2, &mut pos_fresh);

        present.remove(&edge_key(u1, n1));
        present.remove(&edge_key(u2, n2));
        present.insert(edge_key(u1, n2));
        present.insert(edge_key(u2, n1));
        graph.edges[e1 as usize].note = n2;
        graph.edges[e2 as usize].note = n1;

        let (a, b) = groups_of(graph, e1);
        all[bucket(a, b)].insert(e1, &mut pos_all);
        let (a, b) = groups_of(graph, e2);
        all[bucket(a, b)].insert(e2, &mut pos_all);
        accepted += 1;
    }

    let after = measure_ingroup_bias(graph, rater_groups, note_groups)?;
    Ok(RewireStats {
        attempted: n_pair_swaps,
        accepted,
        ingroup_bias_before: before,
        ingroup_bias_after: after,
    })
}

struct Edge2 {
    u1: u32,
    n1: u32,
    u2: u32,
    n2: u32,
}

impl Edge2 {
    fn of(g: &RatingGraph, e1: u32, e2: u32) -> Self {
        let (a, b) = (&g.edges[e1 as usize], &g.edges[e2 as usize]);
        Edge2 {
            u1: a.rater,
            n1: a.note,
            u2: b.rater,
            n2: b.note,
        }
    }
}
