//! Seeded synthetic graphs: a contextual stochastic block model with
//! controllable degree and homophily, and small two-cluster toys.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{Graph, GraphMeta};
use crate::tensorcore::CsrMatrix;

/// Parameters of a block-model graph with class-dependent binary features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockModel {
    pub name: String,
    pub nodes: usize,
    pub classes: usize,
    /// Target average degree `2|E|/n`.
    pub avg_degree: f64,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    pub features: usize,
    /// Ones per feature row.
    pub ones_per_node: usize,
    /// Probability that a one lands in the node's class-specific block of
    /// dimensions rather than anywhere.
    pub feature_signal: f64,
    pub small: bool,
}

impl Default for BlockModel {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            nodes: 300,
            classes: 3,
            avg_degree: 4.0,
            homophily: 0.8,
            features: 60,
            ones_per_node: 6,
            feature_signal: 0.6,
            small: false,
        }
    }
}

impl BlockModel {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("block model: {m}")));
        if self.nodes < 2 || self.classes == 0 || self.classes > self.nodes {
            return bad("need at least 2 nodes and 1..=nodes classes");
        }
        if !(0.0..=1.0).contains(&self.homophily) || !(0.0..=1.0).contains(&self.feature_signal) {
            return bad("homophily and feature_signal must lie in [0,1]");
        }
        if self.classes == 1 && self.homophily < 1.0 {
            return bad("a single class forces homophily 1");
        }
        if self.features < self.classes || self.ones_per_node > self.features {
            return bad("features must be >= classes and >= ones_per_node");
        }
        let max_edges = self.nodes * (self.nodes - 1) / 2;
        if self.avg_degree < 0.0 || self.target_edges() > max_edges / 2 {
            return bad("average degree too high for a sparse sample");
        }
        Ok(())
    }

    fn target_edges(&self) -> usize {
        (self.avg_degree * self.nodes as f64 / 2.0).round() as usize
    }

    /// Samples the graph. Labels are balanced round-robin; edges are drawn
    /// until the target count is reached, each joining a uniform node to a
    /// same-class partner with probability `homophily`.
    pub fn generate(&self, seed: u64) -> Result<Graph> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..self.nodes).map(|v| v % self.classes).collect();
        labels.shuffle(&mut rng);
        let mut by_class = vec![Vec::new(); self.classes];
        for (v, &l) in labels.iter().enumerate() {
            by_class[l].push(v);
        }

        let target = self.target_edges();
        let mut seen = HashSet::with_capacity(target);
        let mut edges = Vec::with_capacity(target);
        let mut attempts = 0usize;
        while edges.len() < target {
            attempts += 1;
            if attempts > 100 * target.max(1) {
                return Err(Error::Config(
                    "block model: could not place enough distinct edges".into(),
                ));
            }
            let u = rng.gen_range(0..self.nodes);
            let lu = labels[u];
            let pool = if self.classes == 1 || rng.gen::<f64>() < self.homophily {
                &by_class[lu]
            } else {
                let mut other = rng.gen_range(0..self.classes - 1);
                if other >= lu {
                    other += 1;
                }
                &by_class[other]
            };
            let v = pool[rng.gen_range(0..pool.len())];
            if u != v && seen.insert((u.min(v), u.max(v))) {
                edges.push((u, v));
            }
        }

        let block = self.features / self.classes;
        let mut triplets = Vec::with_capacity(self.nodes * self.ones_per_node);
        for (v, &l) in labels.iter().enumerate() {
            let mut dims = HashSet::new();
            while dims.len() < self.ones_per_node {
                let d = if rng.gen::<f64>() < self.feature_signal {
                    l * block + rng.gen_range(0..block)
                } else {
                    rng.gen_range(0..self.features)
                };
                dims.insert(d);
            }
            let mut dims: Vec<usize> = dims.into_iter().collect();
            dims.sort_unstable();
            triplets.extend(dims.into_iter().map(|d| (v, d, 1.0)));
        }
        let meta = GraphMeta {
            name: self.name.clone(),
            num_nodes: self.nodes,
            num_classes: self.classes,
            num_features: self.features,
            small: self.small,
            num_edges: None,
        };
        let x = CsrMatrix::from_triplets(self.nodes, self.features, triplets)?;
        Graph::new(meta, edges, x, labels.into_iter().map(Some).collect())
    }
}

/// Two labeled clusters of `size` nodes each. Dense clusters are complete
/// graphs joined by one bridge edge; sparse clusters are disjoint cycles
/// (average degree 2, every edge within a label). Features carry the
/// cluster id in dimension 0/1 plus one of two shared noise dimensions.
pub fn two_clusters(size: usize, dense: bool) -> Graph {
    assert!(size >= 3, "clusters need at least 3 nodes");
    let n = 2 * size;
    let mut edges = Vec::new();
    for c in 0..2 {
        let base = c * size;
        if dense {
            for i in 0..size {
                for j in i + 1..size {
                    edges.push((base + i, base + j));
                }
            }
        } else {
            for i in 0..size {
                edges.push((base + i, base + (i + 1) % size));
            }
        }
    }
    if dense {
        edges.push((size - 1, size));
    }
    let labels: Vec<Option<usize>> = (0..n).map(|v| Some(v / size)).collect();
    let triplets = (0..n)
        .flat_map(|v| [(v, v / size, 1.0), (v, 2 + v % 2, 1.0)])
        .collect();
    let meta = GraphMeta {
        name: if dense {
            "two_clusters_dense"
        } else {
            "two_clusters_sparse"
        }
        .into(),
        num_nodes: n,
        num_classes: 2,
        num_features: 4,
        small: false,
        num_edges: None,
    };
    Graph::new(
        meta,
        edges,
        CsrMatrix::from_triplets(n, 4, triplets).expect("in range"),
        labels,
    )
    .expect("valid toy")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{average_degree, edge_homophily};

    #[test]
    fn block_model_hits_degree_and_is_deterministic() {
        let spec = BlockModel::default();
        let g = spec.generate(7).unwrap();
        assert_eq!(g.num_edges(), 600);
        assert!((average_degree(&g).unwrap() - 4.0).abs() < 1e-12);
        let h = edge_homophily(&g).unwrap();
        assert!((h - 0.8).abs() < 0.08, "homophily {h}");
        let again = spec.generate(7).unwrap();
        assert_eq!(g.edges(), again.edges());
        assert_eq!(g.features(), again.features());
        assert!(g.features().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn heterophilous_block_model() {
        let g = BlockModel {
            homophily: 0.1,
            ..BlockModel::default()
        }
        .generate(1)
        .unwrap();
        assert!(edge_homophily(&g).unwrap() < 0.2);
    }

    #[test]
    fn two_cluster_shapes() {
        let dense = two_clusters(10, true);
        assert_eq!(dense.num_edges(), 2 * 45 + 1);
        let sparse = two_clusters(10, false);
        assert_eq!(average_degree(&sparse).unwrap(), 2.0);
        assert_eq!(edge_homophily(&sparse).unwrap(), 1.0);
    }

    #[test]
    fn rejects_impossible_density() {
        let spec = BlockModel {
            nodes: 10,
            avg_degree: 8.0,
            ..BlockModel::default()
        };
        assert!(spec.generate(0).is_err());
    }
}
