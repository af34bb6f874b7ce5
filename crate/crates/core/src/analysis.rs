//! Diagnostics: variance of hop-aggregated features against degree, and the
//! trained propagation share against node-level homophily.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{Graph, Hoods};

/// Variance of one node's aggregated feature vector at one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub node: usize,
    pub hop: usize,
    /// `d_{v,1}` for hops 0 and 1, `d_{v,2}` for hop 2.
    pub degree: usize,
    pub variance: f64,
}

/// Population variance of a vector of length `len` given its nonzero
/// entries (the rest are zero).
fn sparse_population_variance(nonzeros: impl Iterator<Item = f64> + Clone, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    let n = len as f64;
    let mean = nonzeros.clone().sum::<f64>() / n;
    let mut count = 0usize;
    let mut ss = 0.0;
    for x in nonzeros {
        ss += (x - mean) * (x - mean);
        count += 1;
    }
    ss += (len - count) as f64 * mean * mean;
    ss / n
}

fn aggregate(g: &Graph, hoods: &Hoods, v: usize, depth: usize) -> Vec<(usize, f64)> {
    let dv = hoods.degree(depth, v) as f64;
    let mut acc = std::collections::BTreeMap::new();
    for &u in hoods.at(depth, v) {
        let w = 1.0 / (dv * hoods.degree(depth, u) as f64).sqrt();
        let (cols, vals) = g.features().row(u);
        for (&c, &x) in cols.iter().zip(vals) {
            *acc.entry(c).or_insert(0.0) += w * x;
        }
    }
    acc.into_iter().collect()
}

/// Population variance over feature components of `X_v` (hop 0) and of the
/// degree-normalized sums over `N_1(v)` and `N_2(v)`. Nodes with no
/// neighbors at a hop are omitted for that hop. Sorted by node, then hop.
pub fn hop_aggregate_variance(g: &Graph, hoods: &Hoods) -> Vec<VarianceRecord> {
    let f = g.num_features();
    (0..g.num_nodes())
        .into_par_iter()
        .flat_map_iter(|v| {
            let mut out = Vec::with_capacity(3);
            let (_, vals) = g.features().row(v);
            out.push(VarianceRecord {
                node: v,
                hop: 0,
                degree: hoods.d1(v),
                variance: sparse_population_variance(vals.iter().copied(), f),
            });
            for depth in 1..=2 {
                if hoods.degree(depth, v) == 0 {
                    continue;
                }
                let agg = aggregate(g, hoods, v, depth);
                out.push(VarianceRecord {
                    node: v,
                    hop: depth,
                    degree: hoods.degree(depth, v),
                    variance: sparse_population_variance(agg.iter().map(|&(_, x)| x), f),
                });
            }
            out
        })
        .collect()
}

/// Aggregate view of variance records for one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopSummary {
    pub hop: usize,
    pub nodes: usize,
    pub mean_variance: f64,
    /// Share of nodes whose variance exceeds `threshold`.
    pub share_above: f64,
    pub threshold: f64,
}

/// Per-hop summaries (hops 0, 1, 2) with the given variance threshold.
pub fn summarize_variance(records: &[VarianceRecord], threshold: f64) -> Vec<HopSummary> {
    (0..=2)
        .map(|hop| {
            let vs: Vec<f64> = records
                .iter()
                .filter(|r| r.hop == hop)
                .map(|r| r.variance)
                .collect();
            let nodes = vs.len();
            let (mean_variance, share_above) = if nodes == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (
                    vs.iter().sum::<f64>() / nodes as f64,
                    vs.iter().filter(|&&x| x > threshold).count() as f64 / nodes as f64,
                )
            };
            HopSummary {
                hop,
                nodes,
                mean_variance,
                share_above,
                threshold,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub node: usize,
    pub node_homophily: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub nodes: usize,
    pub mean_alpha: f64,
    pub mean_node_homophily: f64,
}

/// Pairs each non-isolated node's homophily with its propagation share.
pub fn alpha_vs_homophily(
    alpha: &[f64],
    node_h: &[Option<f64>],
) -> Result<(Vec<AlphaRecord>, AlphaSummary)> {
    if alpha.len() != node_h.len() {
        return Err(Error::shape(
            "alpha_vs_homophily",
            format!("{} alpha values for {} nodes", alpha.len(), node_h.len()),
        ));
    }
    let records: Vec<AlphaRecord> = alpha
        .iter()
        .zip(node_h)
        .enumerate()
        .filter_map(|(node, (&alpha, h))| {
            h.map(|node_homophily| AlphaRecord {
                node,
                node_homophily,
                alpha,
            })
        })
        .collect();
    let k = records.len() as f64;
    let summary = AlphaSummary {
        nodes: records.len(),
        mean_alpha: records.iter().map(|r| r.alpha).sum::<f64>() / k,
        mean_node_homophily: records.iter().map(|r| r.node_homophily).sum::<f64>() / k,
    };
    Ok((records, summary))
}
