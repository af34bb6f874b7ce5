use hmsf_core::analysis::hop_aggregate_variance;
use hmsf_core::cpf::{cpf_predict, plp_weights, CpfConfig, CpfContext, CpfParams};
use hmsf_core::graphdata::{build_neighborhoods, edge_homophily, make_split, node_homophily};
use hmsf_core::hmsf::{estimate_homophily, select_final, select_teacher, FinalChoice};
use hmsf_core::models::{
    gcn_forward, h2gcn_forward, mlp_forward, GcnParams, GraphInputs, H2gcnParams, MlpParams,
};
use hmsf_core::tensorcore::{gcn_normalize, h2gcn_normalize, DenseMatrix, SparseLinear};
use hmsf_core::{Activation, CsrMatrix, Graph, GraphMeta, ModelKind, Split, SplitScheme};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdős–Rényi graph with random labels and sparse random features.
fn er_graph(n: usize, p: f64, classes: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let f = 6;
    let mut triplets = Vec::new();
    for v in 0..n {
        for d in 0..f {
            if rng.gen::<f64>() < 0.4 {
                triplets.push((v, d, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    let labels = (0..n).map(|_| Some(rng.gen_range(0..classes))).collect();
    let meta = GraphMeta {
        name: "er".into(),
        num_nodes: n,
        num_classes: classes,
        num_features: f,
        small: false,
        num_edges: None,
    };
    Graph::new(
        meta,
        edges,
        CsrMatrix::from_triplets(n, f, triplets).unwrap(),
        labels,
    )
    .unwrap()
}

fn random_dense(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn assert_row_stochastic(m: &DenseMatrix) {
    for r in 0..m.rows() {
        let s: f64 = m.row(r).iter().sum();
        assert!((s - 1.0).abs() < 1e-9, "row {r} sums to {s}");
        assert!(m.row(r).iter().all(|&x| x >= 0.0));
    }
}

fn graph_strategy() -> impl Strategy<Value = Graph> {
    (2usize..40, 0.0f64..0.4, 1usize..5, any::<u64>()).prop_map(|(n, p, c, s)| er_graph(n, p, c, s))
}

fn brute_force_homophily(g: &Graph, classes: &[usize]) -> Option<f64> {
    let (mut same, mut total) = (0usize, 0usize);
    for u in 0..g.num_nodes() {
        for &v in g.neighbors(u) {
            if u < v {
                total += 1;
                if classes[u] == classes[v] {
                    same += 1;
                }
            }
        }
    }
    (total > 0).then(|| same as f64 / total as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn two_hop_sets_are_symmetric_and_disjoint(g in graph_strategy()) {
        let h = build_neighborhoods(&g);
        for v in 0..g.num_nodes() {
            prop_assert!(!h.n1(v).contains(&v) && !h.n2(v).contains(&v));
            for &u in h.n2(v) {
                prop_assert!(h.n2(u).contains(&v));
                prop_assert!(!h.n1(v).contains(&u));
            }
            for &u in h.n1(v) {
                prop_assert!(h.n1(u).contains(&v));
            }
        }
    }

    #[test]
    fn degree_sum_is_twice_edge_count(g in graph_strategy()) {
        let total: usize = (0..g.num_nodes()).map(|v| g.degree(v)).sum();
        prop_assert_eq!(total, 2 * g.num_edges());
    }

    #[test]
    fn homophily_matches_brute_force(g in graph_strategy()) {
        let labels: Vec<usize> = g.labels().iter().map(|l| l.unwrap()).collect();
        match brute_force_homophily(&g, &labels) {
            None => prop_assert!(edge_homophily(&g).is_err()),
            Some(want) => {
                let h = edge_homophily(&g).unwrap();
                prop_assert_eq!(h, want);
                prop_assert!((0.0..=1.0).contains(&h));
                // degree-weighted node homophily
                let nh = node_homophily(&g).unwrap();
                let num: f64 = (0..g.num_nodes()).filter_map(|v| nh[v].map(|x| x * g.degree(v) as f64)).sum();
                let den: f64 = (0..g.num_nodes()).map(|v| g.degree(v) as f64).sum();
                prop_assert!((num / den - h).abs() < 1e-12);
                // one-hot predictions reproduce the label homophily
                let mut onehot = DenseMatrix::zeros(g.num_nodes(), g.num_classes());
                for (v, &l) in labels.iter().enumerate() {
                    onehot.set(v, l, 1.0);
                }
                prop_assert_eq!(estimate_homophily(&g, &onehot).unwrap(), h);
            }
        }
    }

    #[test]
    fn normalized_operators_are_symmetric(g in graph_strategy()) {
        let hoods = build_neighborhoods(&g);
        for op in [gcn_normalize(&g), h2gcn_normalize(&hoods, 1), h2gcn_normalize(&hoods, 2)] {
            let d = op.to_dense();
            prop_assert!(d.max_abs_diff(&d.transpose()) < 1e-12);
        }
    }

    #[test]
    fn spmm_matches_dense_product(g in graph_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gcn_normalize(&g);
        let x = random_dense(g.num_nodes(), 5, &mut rng);
        let sparse = a.matmul_dense(&x).unwrap();
        let dense = a.to_dense().matmul(&x).unwrap();
        prop_assert!(sparse.max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_dense(7, 5, &mut rng);
        m.scale(scale);
        let s = m.row_softmax();
        for r in 0..7 {
            let sum: f64 = s.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn plp_rows_sum_to_one_and_ignore_shifts(g in graph_strategy(), seed in any::<u64>(), shift in -20.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w = plp_weights(&g, &c).unwrap();
        let shifted: Vec<f64> = c.iter().map(|x| x + shift).collect();
        let ws = plp_weights(&g, &shifted).unwrap();
        for r in 0..g.num_nodes() {
            let (_, vals) = w.row(r);
            prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(w.to_dense().max_abs_diff(&ws.to_dense()) < 1e-12);
    }

    #[test]
    fn forward_outputs_are_row_stochastic(g in graph_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = GraphInputs::new(&g);
        let (f, c) = (g.num_features(), g.num_classes());
        let gcn = GcnParams::init(f, 4, c, &mut rng);
        assert_row_stochastic(&gcn_forward(&gcn, inputs.gcn_operator(), inputs.features()).unwrap());
        for hops in [1, 2] {
            let h2 = H2gcnParams::init(f, 4, c, hops, Activation::Relu, &mut rng);
            let (s1, s2) = inputs.h2gcn_operators();
            assert_row_stochastic(&h2gcn_forward(&h2, s1, s2, inputs.features()).unwrap());
        }
        let mlp = MlpParams::init(f, 4, c, &mut rng);
        assert_row_stochastic(&mlp_forward(&mlp, inputs.features()).unwrap());
    }

    #[test]
    fn student_output_is_row_stochastic_and_clamped(g in graph_strategy(), seed in any::<u64>()) {
        let Ok(split) = make_split(&g, SplitScheme::H2gcn, seed % 10) else { return Ok(()); };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = GraphInputs::new(&g);
        let mut p = CpfParams::init(g.num_nodes(), g.num_features(), 4, g.num_classes(), &mut rng);
        for v in p.confidence.data_mut().iter_mut().chain(p.balance.data_mut()) {
            *v = rng.gen_range(-4.0..4.0);
        }
        let ctx = CpfContext::new(&inputs, &split).unwrap();
        for iterations in [1, 3, 8] {
            let cfg = CpfConfig { iterations, ..CpfConfig::default() };
            let pred = cpf_predict(&p, &inputs, &ctx, &cfg).unwrap();
            assert_row_stochastic(&pred);
            for &v in &split.train {
                let y = g.label(v).unwrap();
                prop_assert_eq!(pred.get(v, y), 1.0);
            }
        }
    }

    #[test]
    fn splits_are_disjoint_with_exact_proportions(g in graph_strategy()) {
        for seed in 0..10 {
            let s = make_split(&g, SplitScheme::H2gcn, seed).unwrap();
            s.validate(&g).unwrap();
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), g.num_nodes());
            for c in 0..g.num_classes() {
                let count = |set: &[usize]| set.iter().filter(|&&v| g.label(v) == Some(c)).count();
                let total = count(&s.train) + count(&s.val) + count(&s.test);
                prop_assert_eq!(count(&s.train), total * 48 / 100);
                prop_assert_eq!(count(&s.test), total * 20 / 100);
            }
            prop_assert_eq!(&s, &make_split(&g, SplitScheme::H2gcn, seed).unwrap());
        }
    }

    #[test]
    fn selection_rules_are_consistent(deg in 0.0f64..200.0, beta in 0.01f64..200.0, h in 0.0f64..=1.0, gamma in 0.01f64..0.99, bump in 0.0f64..0.5) {
        prop_assert_eq!(select_teacher(deg, beta) == ModelKind::Gcn, beta <= deg);
        let fc = select_final(h, gamma);
        prop_assert_eq!(fc == FinalChoice::CpfOfTeacher, gamma <= h);
        if fc == FinalChoice::Teacher {
            prop_assert_eq!(select_final(h, gamma + bump), FinalChoice::Teacher);
        }
    }

    #[test]
    fn hop_zero_variance_of_binary_rows(n in 1usize..20, f in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        let mut ones = vec![0usize; n];
        for (v, count) in ones.iter_mut().enumerate() {
            for d in 0..f {
                if rng.gen::<bool>() {
                    triplets.push((v, d, 1.0));
                    *count += 1;
                }
            }
        }
        let meta = GraphMeta { name: "bin".into(), num_nodes: n, num_classes: 1, num_features: f, small: false, num_edges: None };
        let g = Graph::new(meta, Vec::new(), CsrMatrix::from_triplets(n, f, triplets).unwrap(), vec![Some(0); n]).unwrap();
        let recs = hop_aggregate_variance(&g, &build_neighborhoods(&g));
        for r in recs.iter().filter(|r| r.hop == 0) {
            let q = ones[r.node] as f64 / f as f64;
            prop_assert!((r.variance - q * (1.0 - q)).abs() < 1e-12);
        }
    }
}

fn relabel(g: &Graph, perm: &[usize]) -> Graph {
    let n = g.num_nodes();
    let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v]));
    let mut triplets = Vec::new();
    for (v, &pv) in perm.iter().enumerate().take(n) {
        let (cols, vals) = g.features().row(v);
        triplets.extend(cols.iter().zip(vals).map(|(&c, &x)| (pv, c, x)));
    }
    let mut labels = vec![None; n];
    for (v, &pv) in perm.iter().enumerate().take(n) {
        labels[pv] = g.label(v);
    }
    Graph::new(
        g.meta().clone(),
        edges,
        CsrMatrix::from_triplets(n, g.num_features(), triplets).unwrap(),
        labels,
    )
    .unwrap()
}

#[test]
fn forwards_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = er_graph(15, 0.25, 3, 4);
    let mut perm: Vec<usize> = (0..15).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let pg = relabel(&g, &perm);
    let (a, b) = (GraphInputs::new(&g), GraphInputs::new(&pg));
    let gcn = GcnParams::init(6, 4, 3, &mut rng);
    let h2 = H2gcnParams::init(6, 4, 3, 2, Activation::None, &mut rng);
    let mlp = MlpParams::init(6, 4, 3, &mut rng);
    let outputs = |i: &GraphInputs<'_>| {
        let (s1, s2) = i.h2gcn_operators();
        [
            gcn_forward(&gcn, i.gcn_operator(), i.features()).unwrap(),
            h2gcn_forward(&h2, s1, s2, i.features()).unwrap(),
            mlp_forward(&mlp, i.features()).unwrap(),
        ]
    };
    for (x, y) in outputs(&a).iter().zip(outputs(&b).iter()) {
        for (v, &pv) in perm.iter().enumerate().take(15) {
            for c in 0..3 {
                assert!((x.get(v, c) - y.get(pv, c)).abs() < 1e-12);
            }
        }
    }
}

/// Dense evaluation of the two-layer GCN: `softmax(A relu(A X W0) W1)`.
#[test]
fn gcn_matches_dense_oracle() {
    let g = er_graph(5, 0.5, 2, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = GcnParams::init(6, 3, 2, &mut rng);
    let a = gcn_normalize(&g).to_dense();
    let x = g.features().to_dense();
    let mut h = a.matmul(&x).unwrap().matmul(&params.weights[0]).unwrap();
    h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let want = a
        .matmul(&h)
        .unwrap()
        .matmul(&params.weights[1])
        .unwrap()
        .row_softmax();
    let got = gcn_forward(
        &params,
        &SparseLinear::symmetric(gcn_normalize(&g)),
        &SparseLinear::new(g.features().clone()),
    )
    .unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
}

/// Dense evaluation of H2GCN with one round: `softmax([r0 | S1 r0 | S2 r0] Wc)`.
#[test]
fn h2gcn_matches_dense_oracle() {
    let g = er_graph(6, 0.4, 2, 5);
    let hoods = build_neighborhoods(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = H2gcnParams::init(6, 3, 2, 1, Activation::Relu, &mut rng);
    let (s1, s2) = (h2gcn_normalize(&hoods, 1), h2gcn_normalize(&hoods, 2));
    let mut r0 = g.features().to_dense().matmul(&params.embed).unwrap();
    r0.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let r1a = s1.to_dense().matmul(&r0).unwrap();
    let r1b = s2.to_dense().matmul(&r0).unwrap();
    let fin = DenseMatrix::hconcat(&[&r0, &r1a, &r1b]).unwrap();
    let want = fin.matmul(&params.classifier).unwrap().row_softmax();
    let got = h2gcn_forward(
        &params,
        &SparseLinear::symmetric(s1),
        &SparseLinear::symmetric(s2),
        &SparseLinear::new(g.features().clone()),
    )
    .unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
}

/// Without two-hop neighbors the depth-2 blocks contribute nothing.
#[test]
fn h2gcn_on_triangle_ignores_depth_two() {
    let meta = GraphMeta {
        name: "tri".into(),
        num_nodes: 3,
        num_classes: 2,
        num_features: 2,
        small: false,
        num_edges: None,
    };
    let x = CsrMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 0, 0.5)]).unwrap();
    let g = Graph::new(
        meta,
        [(0, 1), (1, 2), (0, 2)],
        x,
        vec![Some(0), Some(1), Some(0)],
    )
    .unwrap();
    let inputs = GraphInputs::new(&g);
    let (s1, s2) = inputs.h2gcn_operators();
    assert_eq!(s2.matrix().nnz(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = H2gcnParams::init(2, 3, 2, 1, Activation::Relu, &mut rng);
    let base = h2gcn_forward(&params, s1, s2, inputs.features()).unwrap();
    // rows 6..9 of the classifier read the depth-2 block
    for r in 6..9 {
        params
            .classifier
            .row_mut(r)
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
    let zeroed = h2gcn_forward(&params, s1, s2, inputs.features()).unwrap();
    assert_eq!(base, zeroed);
}

#[test]
fn splits_are_deterministic_per_seed() {
    let g = er_graph(40, 0.1, 3, 1);
    for seed in 0..10 {
        let a: Split = make_split(&g, SplitScheme::H2gcn, seed).unwrap();
        assert_eq!(a, make_split(&g, SplitScheme::H2gcn, seed).unwrap());
    }
    assert_ne!(
        make_split(&g, SplitScheme::H2gcn, 0).unwrap(),
        make_split(&g, SplitScheme::H2gcn, 1).unwrap()
    );
}
