//! Shared fixtures for the criterion benches.

use hmsf_core::graphdata::make_split;
use hmsf_core::synthetic::BlockModel;
use hmsf_core::tensorcore::DenseMatrix;
use hmsf_core::{Graph, Split, SplitScheme};

/// Planted-partition graph with 5 classes and 500 sparse binary features.
pub fn block_graph(nodes: usize, avg_degree: f64) -> Graph {
    BlockModel {
        name: format!("bench_{nodes}"),
        nodes,
        classes: 5,
        avg_degree,
        homophily: 0.7,
        features: 500,
        ones_per_node: 20,
        ..BlockModel::default()
    }
    .generate(7)
    .expect("valid block model")
}

pub fn split(g: &Graph) -> Split {
    make_split(g, SplitScheme::H2gcn, 0).expect("labeled graph")
}

/// Deterministic dense matrix with entries in [-1, 1).
pub fn dense(rows: usize, cols: usize) -> DenseMatrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| ((r * 31 + c * 17) % 200) as f64 / 100.0 - 1.0)
                .collect()
        })
        .collect();
    DenseMatrix::from_rows(&data)
}
