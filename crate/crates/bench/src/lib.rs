//! Benchmark fixtures shared by the criterion targets.

use spdt_core::{synthesize_graph, SpdtParams, TemporalGraph};

/// Synthetic graph at the fitted parameters.
pub fn paper_graph(nodes: u32, days: u32, seed: u64) -> TemporalGraph {
    synthesize_graph(&SpdtParams::paper_fitted(), nodes, days * 288, seed).expect("valid parameters")
}
