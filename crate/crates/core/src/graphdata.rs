//! Graph data model, dataset directory ingestion, splits and label-based
//! graph indicators.
//!
//! A dataset directory holds:
//!
//! ```text
//! graph.json     {"name", "num_nodes", "num_classes", "num_features", "small"}
//! edges.tsv      u<TAB>v            (duplicates and reversed pairs allowed)
//! features.tsv   node<TAB>dim<TAB>value   (sparse; omitted entries are 0)
//! labels.tsv     node<TAB>class
//! splits/<scheme>_<seed>.json   {"train": [...], "val": [...], "test": [...]}
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorcore::CsrMatrix;

/// Contents of `graph.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    #[serde(default)]
    pub small: bool,
    /// Optional undirected edge count, checked on load when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_edges: Option<usize>,
}

/// Undirected, unweighted graph with sparse node features and optional labels.
#[derive(Debug, Clone)]
pub struct Graph {
    meta: GraphMeta,
    /// Each undirected edge once, as `(u, v)` with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    adj_indptr: Vec<usize>,
    adj_indices: Vec<usize>,
    features: CsrMatrix,
    labels: Vec<Option<usize>>,
}

impl Graph {
    /// Builds a graph, normalizing the edge list: pairs are symmetrized and
    /// deduplicated, self-loops are dropped with a warning.
    pub fn new(
        meta: GraphMeta,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: CsrMatrix,
        labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = meta.num_nodes;
        if features.rows() != n || features.cols() != meta.num_features {
            return Err(Error::InvalidDataset(format!(
                "feature matrix is {}x{}, expected {}x{}",
                features.rows(),
                features.cols(),
                n,
                meta.num_features
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        for (node, label) in labels.iter().enumerate() {
            if let Some(label) = *label {
                if label >= meta.num_classes {
                    return Err(Error::LabelOutOfRange {
                        node,
                        label,
                        num_classes: meta.num_classes,
                    });
                }
            }
        }
        let mut self_loops = 0usize;
        let mut normalized = Vec::new();
        for (u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, num_nodes: n });
                }
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            normalized.push((u.min(v), u.max(v)));
        }
        if self_loops > 0 {
            log::warn!("{}: dropped {self_loops} self-loop(s)", meta.name);
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut degree = vec![0usize; n + 1];
        for &(u, v) in &normalized {
            degree[u + 1] += 1;
            degree[v + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let adj_indptr = degree;
        let mut next = adj_indptr.clone();
        let mut adj_indices = vec![0usize; 2 * normalized.len()];
        for &(u, v) in &normalized {
            adj_indices[next[u]] = v;
            next[u] += 1;
            adj_indices[next[v]] = u;
            next[v] += 1;
        }
        for v in 0..n {
            adj_indices[adj_indptr[v]..adj_indptr[v + 1]].sort_unstable();
        }
        Ok(Self {
            meta,
            edges: normalized,
            adj_indptr,
            adj_indices,
            features,
            labels,
        })
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn num_nodes(&self) -> usize {
        self.meta.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.meta.num_features
    }

    pub fn is_small(&self) -> bool {
        self.meta.small
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj_indices[self.adj_indptr[v]..self.adj_indptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_indptr[v + 1] - self.adj_indptr[v]
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    /// Copy whose feature rows are divided by their L1 norm (zero rows stay zero).
    pub fn row_normalized(&self) -> Self {
        let f = &self.features;
        let mut values = f.values().to_vec();
        for r in 0..f.rows() {
            let span = f.indptr()[r]..f.indptr()[r + 1];
            let norm: f64 = values[span.clone()].iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                values[span].iter_mut().for_each(|v| *v /= norm);
            }
        }
        Self {
            features: f.with_values(values),
            ..self.clone()
        }
    }

    /// Writes the graph in the dataset directory format.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = GraphMeta {
            num_edges: Some(self.num_edges()),
            ..self.meta.clone()
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
            context: "graph.json".into(),
            source,
        })?;
        write_file(&dir.join("graph.json"), |w| writeln!(w, "{json}"))?;
        write_file(&dir.join("edges.tsv"), |w| {
            self.edges
                .iter()
                .try_for_each(|(u, v)| writeln!(w, "{u}\t{v}"))
        })?;
        write_file(&dir.join("features.tsv"), |w| {
            for r in 0..self.features.rows() {
                let (cols, vals) = self.features.row(r);
                for (c, v) in cols.iter().zip(vals) {
                    writeln!(w, "{r}\t{c}\t{v}")?;
                }
            }
            Ok(())
        })?;
        write_file(&dir.join("labels.tsv"), |w| {
            self.labels
                .iter()
                .enumerate()
                .filter_map(|(v, l)| l.map(|l| (v, l)))
                .try_for_each(|(v, l)| writeln!(w, "{v}\t{l}"))
        })
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_tsv(
    path: &Path,
    min_fields: usize,
    mut each: impl FnMut(usize, &[&str]) -> Result<()>,
) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < min_fields {
            return Err(Error::Parse {
                file: name,
                line: i + 1,
                msg: format!("expected {min_fields} tab-separated fields"),
            });
        }
        each(i + 1, &fields).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse {
                file: name.clone(),
                line: i + 1,
                msg,
            },
            other => other,
        })?;
    }
    Ok(())
}

fn parse_field<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        file: String::new(),
        line: 0,
        msg: format!("cannot parse {what} from {s:?}"),
    })
}

/// Loads a dataset directory.
pub fn load_graph(dir: &Path) -> Result<Graph> {
    let meta_path = dir.join("graph.json");
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: GraphMeta = serde_json::from_str(&raw).map_err(|source| Error::Json {
        context: meta_path.display().to_string(),
        source,
    })?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    read_tsv(&dir.join("edges.tsv"), 2, |_, f| {
        edges.push((parse_field(f[0], "node id")?, parse_field(f[1], "node id")?));
        Ok(())
    })?;

    let mut triplets = Vec::new();
    read_tsv(&dir.join("features.tsv"), 3, |_, f| {
        let node: usize = parse_field(f[0], "node id")?;
        let dim: usize = parse_field(f[1], "feature dim")?;
        let value: f64 = parse_field(f[2], "feature value")?;
        if node >= n {
            return Err(Error::NodeOutOfRange { node, num_nodes: n });
        }
        if dim >= meta.num_features {
            return Err(Error::InvalidDataset(format!(
                "feature dim {dim} >= num_features {}",
                meta.num_features
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at node {node}"
            )));
        }
        triplets.push((node, dim, value));
        Ok(())
    })?;
    let features = CsrMatrix::from_triplets(n, meta.num_features, triplets)?;

    let mut labels = vec![None; n];
    read_tsv(&dir.join("labels.tsv"), 2, |_, f| {
        let node: usize = parse_field(f[0], "node id")?;
        let class: usize = parse_field(f[1], "class id")?;
        if node >= n {
            return Err(Error::NodeOutOfRange { node, num_nodes: n });
        }
        match labels[node] {
            Some(prev) if prev != class => Err(Error::InvalidDataset(format!(
                "node {node} labeled both {prev} and {class}"
            ))),
            _ => {
                labels[node] = Some(class);
                Ok(())
            }
        }
    })?;

    let expected_edges = meta.num_edges;
    let graph = Graph::new(meta, edges, features, labels)?;
    if let Some(m) = expected_edges {
        if m != graph.num_edges() {
            return Err(Error::InvalidDataset(format!(
                "graph.json declares {m} edges, edges.tsv has {} after normalization",
                graph.num_edges()
            )));
        }
    }
    Ok(graph)
}

/// Exact-hop neighborhoods: `N_1(v)` and `N_2(v)`, both sorted.
#[derive(Debug, Clone)]
pub struct Hoods {
    n1: Adjacency,
    n2: Adjacency,
}

#[derive(Debug, Clone)]
struct Adjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(lists.len() + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            indices.extend(l);
            indptr.push(indices.len());
        }
        Self { indptr, indices }
    }

    fn get(&self, v: usize) -> &[usize] {
        &self.indices[self.indptr[v]..self.indptr[v + 1]]
    }
}

impl Hoods {
    /// Nodes at exactly `depth` hops (1 or 2). Panics on other depths.
    pub fn at(&self, depth: usize, v: usize) -> &[usize] {
        match depth {
            1 => self.n1.get(v),
            2 => self.n2.get(v),
            _ => panic!("neighborhoods are built for depths 1 and 2 only"),
        }
    }

    pub fn n1(&self, v: usize) -> &[usize] {
        self.n1.get(v)
    }

    pub fn n2(&self, v: usize) -> &[usize] {
        self.n2.get(v)
    }

    pub fn d1(&self, v: usize) -> usize {
        self.n1.get(v).len()
    }

    pub fn d2(&self, v: usize) -> usize {
        self.n2.get(v).len()
    }

    pub fn degree(&self, depth: usize, v: usize) -> usize {
        self.at(depth, v).len()
    }

    pub fn num_nodes(&self) -> usize {
        self.n1.indptr.len() - 1
    }
}

/// `N_2(v)` is every node reachable in two steps, minus `v` and `N_1(v)`.
pub fn build_neighborhoods(g: &Graph) -> Hoods {
    let n = g.num_nodes();
    let n1 = Adjacency::from_lists((0..n).map(|v| g.neighbors(v).to_vec()).collect());
    let n2_lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut seen = BTreeSet::new();
            for &u in g.neighbors(v) {
                seen.extend(g.neighbors(u).iter().copied());
            }
            seen.remove(&v);
            for u in g.neighbors(v) {
                seen.remove(u);
            }
            seen.into_iter().collect()
        })
        .collect();
    Hoods {
        n1,
        n2: Adjacency::from_lists(n2_lists),
    }
}

/// Mean number of neighbors, `2|E| / n`.
pub fn average_degree(g: &Graph) -> Result<f64> {
    if g.num_nodes() == 0 {
        return Err(Error::NoNodes);
    }
    let total: usize = (0..g.num_nodes()).map(|v| g.degree(v)).sum();
    Ok(total as f64 / g.num_nodes() as f64)
}

/// Fraction of undirected edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph) -> Result<f64> {
    let labels = all_labels(g)?;
    homophily_of_assignment(g, &labels)
}

/// Edge homophily of an arbitrary per-node class assignment.
pub fn homophily_of_assignment(g: &Graph, classes: &[usize]) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::NoEdges);
    }
    let same = g
        .edges()
        .iter()
        .filter(|&&(u, v)| classes[u] == classes[v])
        .count();
    Ok(same as f64 / g.num_edges() as f64)
}

fn all_labels(g: &Graph) -> Result<Vec<usize>> {
    g.labels()
        .iter()
        .enumerate()
        .map(|(v, l)| l.ok_or(Error::Unlabeled(v)))
        .collect()
}

/// Per-node share of neighbors with the node's own label; `None` for
/// isolated nodes.
pub fn node_homophily(g: &Graph) -> Result<Vec<Option<f64>>> {
    let labels = all_labels(g)?;
    Ok((0..g.num_nodes())
        .map(|v| {
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                None
            } else {
                let same = nbrs.iter().filter(|&&u| labels[u] == labels[v]).count();
                Some(same as f64 / nbrs.len() as f64)
            }
        })
        .collect())
}

/// Train/validation/test protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitScheme {
    /// Per label: 48% train, 32% validation, 20% test.
    #[serde(rename = "h2gcn_48_20_32")]
    H2gcn,
    /// 20 train nodes per label, 500 validation, 1000 test (5/50/100 for small graphs).
    #[serde(rename = "gcn_20_per_class")]
    Gcn,
}

impl SplitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitScheme::H2gcn => "h2gcn_48_20_32",
            SplitScheme::Gcn => "gcn_20_per_class",
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h2gcn" | "h2gcn_48_20_32" => Ok(SplitScheme::H2gcn),
            "gcn" | "gcn_20_per_class" => Ok(SplitScheme::Gcn),
            other => Err(Error::Config(format!("unknown split scheme {other:?}"))),
        }
    }
}

/// Disjoint train / validation / test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub scheme: SplitScheme,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl Split {
    /// Checks disjointness, bounds and that every training node is labeled.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let mut seen = vec![false; g.num_nodes()];
        for (set, name) in [
            (&self.train, "train"),
            (&self.val, "val"),
            (&self.test, "test"),
        ] {
            for &v in set {
                if v >= g.num_nodes() {
                    return Err(Error::NodeOutOfRange {
                        node: v,
                        num_nodes: g.num_nodes(),
                    });
                }
                if seen[v] {
                    return Err(Error::Split(format!("node {v} appears twice ({name})")));
                }
                seen[v] = true;
            }
        }
        if let Some(&v) = self.train.iter().find(|&&v| g.label(v).is_none()) {
            return Err(Error::Split(format!("training node {v} has no label")));
        }
        Ok(())
    }

    /// Nodes outside the training set, ascending.
    pub fn unlabeled(&self, num_nodes: usize) -> Vec<usize> {
        let mut is_train = vec![false; num_nodes];
        self.train.iter().for_each(|&v| is_train[v] = true);
        (0..num_nodes).filter(|&v| !is_train[v]).collect()
    }

    pub fn file_name(scheme: SplitScheme, seed: u64) -> String {
        format!("{}_{seed}.json", scheme.as_str())
    }

    pub fn path_in(dataset_dir: &Path, scheme: SplitScheme, seed: u64) -> PathBuf {
        dataset_dir
            .join("splits")
            .join(Self::file_name(scheme, seed))
    }

    pub fn save(&self, dataset_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(dataset_dir, self.scheme, self.seed);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let body = SplitFile {
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
        };
        let json = serde_json::to_string(&body).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dataset_dir: &Path, scheme: SplitScheme, seed: u64) -> Result<Self> {
        let path = Self::path_in(dataset_dir, scheme, seed);
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: SplitFile = serde_json::from_str(&raw).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        let sorted = |mut v: Vec<usize>| {
            v.sort_unstable();
            v
        };
        Ok(Self {
            train: sorted(file.train),
            val: sorted(file.val),
            test: sorted(file.test),
            seed,
            scheme,
        })
    }
}

/// Loads `splits/<scheme>_<seed>.json` if it exists, otherwise generates it.
pub fn load_or_make_split(dir: &Path, g: &Graph, scheme: SplitScheme, seed: u64) -> Result<Split> {
    let split = if Split::path_in(dir, scheme, seed).exists() {
        Split::load(dir, scheme, seed)?
    } else {
        make_split(g, scheme, seed)?
    };
    split.validate(g)?;
    Ok(split)
}

fn nodes_by_label(g: &Graph) -> Vec<Vec<usize>> {
    let mut by_label = vec![Vec::new(); g.num_classes()];
    for (v, l) in g.labels().iter().enumerate() {
        if let Some(l) = *l {
            by_label[l].push(v);
        }
    }
    by_label
}

/// Deterministic split generation.
pub fn make_split(g: &Graph, scheme: SplitScheme, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let by_label = nodes_by_label(g);
    if by_label.iter().all(Vec::is_empty) {
        return Err(Error::Split("graph has no labeled nodes".into()));
    }
    match scheme {
        SplitScheme::H2gcn => {
            for mut nodes in by_label {
                nodes.shuffle(&mut rng);
                let n_train = nodes.len() * 48 / 100;
                let n_test = nodes.len() * 20 / 100;
                let n_val = nodes.len() - n_train - n_test;
                train.extend_from_slice(&nodes[..n_train]);
                val.extend_from_slice(&nodes[n_train..n_train + n_val]);
                test.extend_from_slice(&nodes[n_train + n_val..]);
            }
        }
        SplitScheme::Gcn => {
            let (per_label, n_val, n_test) = if g.is_small() {
                (5, 50, 100)
            } else {
                (20, 500, 1000)
            };
            let mut rest = Vec::new();
            for (label, mut nodes) in by_label.into_iter().enumerate() {
                let take = if g.is_small() {
                    per_label.min(nodes.len())
                } else if nodes.len() < per_label {
                    return Err(Error::Split(format!(
                        "label {label} has {} nodes, {per_label} needed for training",
                        nodes.len()
                    )));
                } else {
                    per_label
                };
                nodes.shuffle(&mut rng);
                train.extend_from_slice(&nodes[..take]);
                rest.extend_from_slice(&nodes[take..]);
            }
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            if rest.len() < n_val + n_test {
                return Err(Error::Split(format!(
                    "{} labeled non-training nodes, {} needed for validation and test",
                    rest.len(),
                    n_val + n_test
                )));
            }
            val.extend_from_slice(&rest[..n_val]);
            test.extend_from_slice(&rest[n_val..n_val + n_test]);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        val,
        test,
        seed,
        scheme,
    })
}
