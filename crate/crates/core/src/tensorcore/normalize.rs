use super::sparse::CsrMatrix;
use crate::graphdata::{Graph, Hoods};

/// Symmetric normalized adjacency with self-loops: entry `(v, u)` over
/// `N_1(v) ∪ {v}` is `(d_v + 1)^{-1/2} (d_u + 1)^{-1/2}`.
pub fn gcn_normalize(g: &Graph) -> CsrMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::with_capacity(n + 2 * g.num_edges());
    let mut values = Vec::with_capacity(n + 2 * g.num_edges());
    for v in 0..n {
        let nbrs = g.neighbors(v);
        let split = nbrs.partition_point(|&u| u < v);
        for &u in nbrs[..split]
            .iter()
            .chain(std::iter::once(&v))
            .chain(&nbrs[split..])
        {
            indices.push(u);
            values.push(inv_sqrt[v] * inv_sqrt[u]);
        }
        indptr.push(indices.len());
    }
    CsrMatrix::from_parts(n, n, indptr, indices, values).expect("neighbor lists are sorted")
}

/// Depth-`i` aggregation without self-loops: entry `(v, u)` over `N_i(v)`
/// is `d_{v,i}^{-1/2} d_{u,i}^{-1/2}`. Rows with no depth-`i` neighbors are empty.
pub fn h2gcn_normalize(h: &Hoods, depth: usize) -> CsrMatrix {
    let n = h.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| match h.degree(depth, v) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for v in 0..n {
        for &u in h.at(depth, v) {
            indices.push(u);
            values.push(inv_sqrt[v] * inv_sqrt[u]);
        }
        indptr.push(indices.len());
    }
    CsrMatrix::from_parts(n, n, indptr, indices, values).expect("neighborhoods are sorted")
}

/// Sparsity pattern of `A + I` with unit values, used for learned propagation weights.
pub fn self_loop_pattern(g: &Graph) -> CsrMatrix {
    let a = gcn_normalize(g);
    let ones = vec![1.0; a.nnz()];
    a.with_values(ones)
}
