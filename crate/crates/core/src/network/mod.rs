//! The bipartite rater–note graph: degree tables, seed graph construction and
//! degree-preserving rewiring with tunable in-group bias.

mod degrees;
mod graph;
mod rewire;

pub use degrees::{
    ingest_degree_tables, ingest_with_stats, synth_degree_tables, DegreeSource, DegreeTables, IngestStats, PowerLaw,
    SynthDegreeParams,
};
pub use graph::{complete_graph, sample_seed_graph, Edge, RatingGraph};
pub use rewire::{measure_ingroup_bias, rewire, HomophilyTarget, RewireStats};
