//! Feature thinning on planted-partition graphs.

use hmsf_core::analysis::{hop_aggregate_variance, summarize_variance};
use hmsf_core::graphdata::build_neighborhoods;
use hmsf_core::synthetic::BlockModel;

fn hop_summary(avg_degree: f64) -> Vec<hmsf_core::analysis::HopSummary> {
    let g = BlockModel {
        nodes: 600,
        avg_degree,
        features: 200,
        ones_per_node: 10,
        ..BlockModel::default()
    }
    .generate(11)
    .unwrap();
    summarize_variance(&hop_aggregate_variance(&g, &build_neighborhoods(&g)), 0.01)
}

#[test]
fn variance_shrinks_with_hop() {
    for degree in [4.0, 30.0] {
        let s = hop_summary(degree);
        assert!(
            s[0].mean_variance > s[1].mean_variance,
            "degree {degree}: {s:?}"
        );
        assert!(
            s[1].mean_variance > s[2].mean_variance,
            "degree {degree}: {s:?}"
        );
    }
}

#[test]
fn denser_graphs_thin_hop_one_features_more() {
    let sparse = hop_summary(4.0);
    let dense = hop_summary(30.0);
    assert!(sparse[1].mean_variance > dense[1].mean_variance);
    assert!(sparse[1].share_above > dense[1].share_above);
}
