//! Weighted DAGs over covariate nodes plus one target node, and the two
//! structural-equation transforms the model embeds.
//!
//! Adjacency convention: `adjacency[[i, j]]` is the weight of edge `i -> j`.
//! A value of exactly `0.0` means "no edge". For a graph over `L` covariates
//! and one survival target, the target is node `L` (the last index) by
//! convention; nothing in this module depends on that beyond documentation.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("adjacency entry [{row},{col}] is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("graph contains a cycle through node {node}")]
    Cycle { node: usize },
    #[error("matrix has {got} rows but the graph has {expected} nodes")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid graph sampling config: {0}")]
    InvalidConfig(String),
    #[error("adjacency file {path}, line {line}: {problem}")]
    Parse {
        path: String,
        line: usize,
        problem: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A validated weighted DAG. Construction fails on cycles, so every value of
/// this type carries a topological order computed once up front.
#[derive(Debug, Clone)]
pub struct Dag {
    adjacency: Array2<f64>,
    topo_order: Vec<usize>,
    /// parents_of[v] lists (u, weight of u -> v), ascending in u.
    parents_of: Vec<Vec<(usize, f64)>>,
    /// children_of[u] lists (v, weight of u -> v), ascending in v.
    children_of: Vec<Vec<(usize, f64)>>,
    num_edges: usize,
}

impl Dag {
    /// Validates `adjacency` (square, finite entries, acyclic over nonzero
    /// entries) and returns the graph. The cycle check is Kahn's algorithm;
    /// on failure the error names one node that lies on a cycle.
    pub fn from_adjacency(adjacency: Array2<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.dim();
        if rows != cols {
            return Err(GraphError::NonSquare { rows, cols });
        }
        for ((i, j), &w) in adjacency.indexed_iter() {
            if !w.is_finite() {
                return Err(GraphError::NonFinite { row: i, col: j });
            }
        }
        let topo_order = topological_order(&adjacency)?;
        let n = rows;
        let mut parents_of = vec![Vec::new(); n];
        let mut children_of = vec![Vec::new(); n];
        let mut num_edges = 0;
        for ((i, j), &w) in adjacency.indexed_iter() {
            if w != 0.0 {
                parents_of[j].push((i, w));
                children_of[i].push((j, w));
                num_edges += 1;
            }
        }
        Ok(Self {
            adjacency,
            topo_order,
            parents_of,
            children_of,
            num_edges,
        })
    }

    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self::from_adjacency(Array2::zeros((n, n))).expect("zero matrix is acyclic")
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Node indices in a topological order: every edge runs from an earlier
    /// position to a later one.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn has_edges(&self) -> bool {
        self.num_edges > 0
    }

    /// Parents of `node` with edge weights, ascending by parent index.
    pub fn parents(&self, node: usize) -> &[(usize, f64)] {
        &self.parents_of[node]
    }

    /// Children of `node` with edge weights, ascending by child index.
    pub fn children(&self, node: usize) -> &[(usize, f64)] {
        &self.children_of[node]
    }

    /// Same node count, every edge removed. Used for the no-graph ablation:
    /// both SEM transforms become exact identities.
    pub fn zeroed(&self) -> Self {
        Self::empty(self.num_nodes())
    }
}

/// Kahn's algorithm over the nonzero pattern, popping the smallest ready
/// index first so the order is deterministic. Returns a topological order or
/// the index of a node on a cycle.
fn topological_order(adjacency: &Array2<f64>) -> Result<Vec<usize>, GraphError> {
    let n = adjacency.nrows();
    let mut in_degree = vec![0usize; n];
    for j in 0..n {
        for i in 0..n {
            if adjacency[[i, j]] != 0.0 {
                in_degree[j] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| in_degree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        placed[v] = true;
        for j in 0..n {
            if adjacency[[v, j]] != 0.0 {
                in_degree[j] -= 1;
                if in_degree[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Some node was never freed. Walk incoming edges within the remainder
    // until a node repeats; that node lies on a cycle.
    let leftover: Vec<usize> = (0..n).filter(|&v| !placed[v]).collect();
    let mut seen = vec![false; n];
    let mut v = leftover[0];
    loop {
        if seen[v] {
            return Err(GraphError::Cycle { node: v });
        }
        seen[v] = true;
        v = leftover
            .iter()
            .copied()
            .find(|&u| adjacency[[u, v]] != 0.0)
            .expect("unplaced nodes keep an incoming edge from the unplaced set");
    }
}

/// Configuration for [`sample_erdos_renyi_dag`].
#[derive(Debug, Clone)]
pub struct DagSampleConfig {
    pub num_nodes: usize,
    /// Expected in-plus-out degree per node. Each of the n(n-1)/2 forward
    /// pairs becomes an edge with probability `expected_degree / (n - 1)`.
    pub expected_degree: f64,
    /// Edge weights are drawn uniformly from this range.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl DagSampleConfig {
    fn validate(&self) -> Result<(), GraphError> {
        if self.num_nodes < 2 {
            return Err(GraphError::InvalidConfig(format!(
                "num_nodes must be at least 2, got {}",
                self.num_nodes
            )));
        }
        let p = self.expected_degree / (self.num_nodes as f64 - 1.0);
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidConfig(format!(
                "expected_degree {} gives edge probability {p} outside [0, 1]",
                self.expected_degree
            )));
        }
        let (lo, hi) = self.weight_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GraphError::InvalidConfig(format!(
                "weight_range ({lo}, {hi}) is not a valid range"
            )));
        }
        Ok(())
    }
}

/// Samples a random DAG: draw a uniform permutation of the nodes, then admit
/// each forward pair as an edge independently with probability
/// `expected_degree / (num_nodes - 1)`, weighted uniformly from
/// `weight_range`. Deterministic in the seed.
pub fn sample_erdos_renyi_dag(config: &DagSampleConfig) -> Result<Dag, GraphError> {
    config.validate()?;
    let n = config.num_nodes;
    let p = config.expected_degree / (n as f64 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Fisher-Yates; position in `perm` is the node's topological slot.
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }

    let mut adjacency = Array2::<f64>::zeros((n, n));
    let (lo, hi) = config.weight_range;
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < p {
                adjacency[[perm[a], perm[b]]] = lo + (hi - lo) * rng.random::<f64>();
            }
        }
    }
    Dag::from_adjacency(adjacency)
}

/// Solves `(I - A^T) r = m` column by column, where `A` is the adjacency of
/// `dag`. Expanding row `v` of the system gives
/// `r[v] = m[v] + sum over parents u of v of A[u][v] * r[u]`,
/// so visiting nodes in topological order is a permuted-triangular forward
/// substitution. No inverse is ever formed, and a node without parents copies
/// its row of `m` bit for bit, so an edgeless graph is an exact identity.
pub fn sem_forward(dag: &Dag, m: &Array2<f64>) -> Result<Array2<f64>, GraphError> {
    check_rows(dag, m)?;
    let mut r = m.clone();
    let cols = m.ncols();
    for &v in dag.topo_order() {
        for &(u, w) in dag.parents(v) {
            for c in 0..cols {
                let add = w * r[[u, c]];
                r[[v, c]] += add;
            }
        }
    }
    Ok(r)
}

/// Applies `(I - A^T)` to `m`: `out[v] = m[v] - sum over parents u of
/// A[u][v] * m[u]`. Exact inverse of [`sem_forward`].
pub fn sem_backward(dag: &Dag, m: &Array2<f64>) -> Result<Array2<f64>, GraphError> {
    check_rows(dag, m)?;
    let mut out = m.clone();
    let cols = m.ncols();
    for (v, parents) in dag.parents_of.iter().enumerate() {
        for &(u, w) in parents {
            for c in 0..cols {
                let sub = w * m[[u, c]];
                out[[v, c]] -= sub;
            }
        }
    }
    Ok(out)
}

/// Solves the transpose system `(I - A) x = m`. Expanding row `u` gives
/// `x[u] = m[u] + sum over children v of u of A[u][v] * x[v]`, a substitution
/// in reverse topological order. This is the adjoint of [`sem_forward`], used
/// to backpropagate through it.
pub fn sem_forward_transpose(dag: &Dag, m: &Array2<f64>) -> Result<Array2<f64>, GraphError> {
    check_rows(dag, m)?;
    let mut x = m.clone();
    let cols = m.ncols();
    for &u in dag.topo_order().iter().rev() {
        for &(v, w) in dag.children(u) {
            for c in 0..cols {
                let add = w * x[[v, c]];
                x[[u, c]] += add;
            }
        }
    }
    Ok(x)
}

/// Applies `(I - A)` to `m`: the adjoint of [`sem_backward`].
pub fn sem_backward_transpose(dag: &Dag, m: &Array2<f64>) -> Result<Array2<f64>, GraphError> {
    check_rows(dag, m)?;
    let mut out = m.clone();
    let cols = m.ncols();
    for (u, children) in dag.children_of.iter().enumerate() {
        for &(v, w) in children {
            for c in 0..cols {
                let sub = w * m[[v, c]];
                out[[u, c]] -= sub;
            }
        }
    }
    Ok(out)
}

fn check_rows(dag: &Dag, m: &Array2<f64>) -> Result<(), GraphError> {
    if m.nrows() != dag.num_nodes() {
        return Err(GraphError::DimensionMismatch {
            got: m.nrows(),
            expected: dag.num_nodes(),
        });
    }
    Ok(())
}

/// Reads a square adjacency matrix from a plain comma-separated text file:
/// one row per line, entries parse as `f64`. Row i, column j holds the weight
/// of edge i -> j; the last index is the target node by convention.
pub fn read_adjacency_csv(path: &str) -> Result<Dag, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.into(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let w: f64 = field.trim().parse().map_err(|_| GraphError::Parse {
                path: path.into(),
                line: line_no,
                problem: format!("entry {:?} is not a real number", field.trim()),
            })?;
            row.push(w);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(GraphError::Parse {
                    path: path.into(),
                    line: line_no,
                    problem: format!(
                        "row has {} entries, expected {} as in row 1",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GraphError::Parse {
            path: path.into(),
            line: 0,
            problem: "file contains no rows".into(),
        });
    }
    if rows.len() != rows[0].len() {
        return Err(GraphError::NonSquare {
            rows: rows.len(),
            cols: rows[0].len(),
        });
    }
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let adjacency = Array2::from_shape_vec((n, n), flat).expect("shape checked above");
    Dag::from_adjacency(adjacency)
}

/// Writes the adjacency matrix in the format read by [`read_adjacency_csv`].
/// Floats print in shortest round-trip form, so write-then-read is lossless.
pub fn write_adjacency_csv(dag: &Dag, path: &str) -> Result<(), GraphError> {
    let a = dag.adjacency();
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{}", a[[i, j]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| GraphError::Io {
        path: path.into(),
        source,
    })
}

/// Column-matrix view of a slice, for single-sample SEM calls.
pub fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("vector shape")
}

/// Flattens a single-column matrix back to a vector.
pub fn to_vec(m: &Array2<f64>) -> Array1<f64> {
    m.column(0).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_node_chain(w: f64) -> Dag {
        // 0 -> 1 with weight w.
        Dag::from_adjacency(array![[0.0, w], [0.0, 0.0]]).unwrap()
    }

    #[test]
    fn rejects_non_square() {
        let err = Dag::from_adjacency(Array2::zeros((2, 3))).unwrap_err();
        assert!(matches!(err, GraphError::NonSquare { rows: 2, cols: 3 }));
    }

    #[test]
    fn rejects_two_cycle_and_names_a_node_on_it() {
        let err = Dag::from_adjacency(array![[0.0, 1.0], [1.0, 0.0]]).unwrap_err();
        match err {
            GraphError::Cycle { node } => assert!(node < 2),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_self_loop() {
        let err = Dag::from_adjacency(array![[0.5]]).unwrap_err();
        assert!(matches!(err, GraphError::Cycle { node: 0 }));
    }

    #[test]
    fn cycle_error_names_node_on_cycle_not_just_downstream() {
        // 0 -> 1, 1 -> 2, 2 -> 1: node 0 is fine, the cycle is {1, 2}.
        let adj = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        match Dag::from_adjacency(adj).unwrap_err() {
            GraphError::Cycle { node } => assert!(node == 1 || node == 2),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_weight() {
        let err = Dag::from_adjacency(array![[0.0, f64::NAN], [0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, GraphError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn topo_order_respects_edges() {
        // 2 -> 0 -> 1, plus 2 -> 1.
        let dag =
            Dag::from_adjacency(array![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.5, 2.0, 0.0]])
                .unwrap();
        let order = dag.topo_order();
        let pos = |v: usize| order.iter().position(|&x| x == v).unwrap();
        assert!(pos(2) < pos(0));
        assert!(pos(0) < pos(1));
        assert_eq!(dag.num_edges(), 3);
        assert_eq!(dag.parents(1), &[(0, 1.0), (2, 2.0)]);
        assert_eq!(dag.children(2), &[(0, 1.5), (1, 2.0)]);
    }

    #[test]
    fn sem_transforms_match_two_node_closed_form() {
        // For 0 -> 1 with weight w, (I - A^T) = [[1, 0], [-w, 1]], so
        // backward of (m0, m1) is (m0, m1 - w*m0) and forward of (m0, m1)
        // is (m0, m1 + w*m0).
        let dag = two_node_chain(0.75);
        let m = column(&[2.0, -1.0]);
        let back = sem_backward(&dag, &m).unwrap();
        assert_abs_diff_eq!(back[[0, 0]], 2.0);
        assert_abs_diff_eq!(back[[1, 0]], -1.0 - 0.75 * 2.0);
        let fwd = sem_forward(&dag, &m).unwrap();
        assert_abs_diff_eq!(fwd[[0, 0]], 2.0);
        assert_abs_diff_eq!(fwd[[1, 0]], -1.0 + 0.75 * 2.0);
    }

    #[test]
    fn sem_forward_and_backward_are_mutual_inverses() {
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 12,
            expected_degree: 3.0,
            weight_range: (0.5, 2.0),
            seed: 42,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Array2::from_shape_fn((12, 5), |_| rng.random::<f64>() * 4.0 - 2.0);
        let round = sem_forward(&dag, &sem_backward(&dag, &m).unwrap()).unwrap();
        for (a, b) in round.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10, "round trip drifted: {a} vs {b}");
        }
        let round2 = sem_backward(&dag, &sem_forward(&dag, &m).unwrap()).unwrap();
        for (a, b) in round2.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sem_transposes_match_dense_linear_algebra() {
        // x = sem_forward_transpose(m) must satisfy (I - A) x = m, and
        // sem_backward_transpose must equal the dense product (I - A) m.
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 9,
            expected_degree: 2.5,
            weight_range: (-1.0, 1.5),
            seed: 3,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Array2::from_shape_fn((9, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let i_minus_a = Array2::from_shape_fn((9, 9), |(i, j)| {
            let eye = if i == j { 1.0 } else { 0.0 };
            eye - dag.adjacency()[[i, j]]
        });
        let x = sem_forward_transpose(&dag, &m).unwrap();
        let back = i_minus_a.dot(&x);
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let applied = sem_backward_transpose(&dag, &m).unwrap();
        let dense = i_minus_a.dot(&m);
        for (a, b) in applied.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn edgeless_graph_sem_is_bit_identical_identity() {
        let dag = Dag::empty(6);
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let m = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>() * 1e6 - 5e5);
        let fwd = sem_forward(&dag, &m).unwrap();
        let back = sem_backward(&dag, &m).unwrap();
        assert_eq!(fwd, m);
        assert_eq!(back, m);
    }

    #[test]
    fn sem_rejects_wrong_row_count() {
        let dag = Dag::empty(4);
        let err = sem_forward(&dag, &Array2::zeros((3, 2))).unwrap_err();
        assert!(matches!(
            err,
            GraphError::DimensionMismatch {
                got: 3,
                expected: 4
            }
        ));
    }

    #[test]
    fn sampler_is_deterministic_in_seed() {
        let config = DagSampleConfig {
            num_nodes: 10,
            expected_degree: 3.0,
            weight_range: (0.5, 2.0),
            seed: 9,
        };
        let a = sample_erdos_renyi_dag(&config).unwrap();
        let b = sample_erdos_renyi_dag(&config).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
        let c = sample_erdos_renyi_dag(&DagSampleConfig { seed: 10, ..config }).unwrap();
        assert_ne!(a.adjacency(), c.adjacency());
    }

    #[test]
    fn sampler_weights_stay_in_range() {
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 20,
            expected_degree: 5.0,
            weight_range: (0.5, 2.0),
            seed: 1,
        })
        .unwrap();
        assert!(dag.has_edges());
        for &w in dag.adjacency().iter().filter(|&&w| w != 0.0) {
            assert!((0.5..2.0).contains(&w), "weight {w} escaped the range");
        }
    }

    #[test]
    fn sampler_mean_edge_count_matches_binomial() {
        // With n = 10 and expected degree 3, each of the 45 forward pairs is
        // an edge with p = 1/3: the count is Binomial(45, 1/3) with mean 15
        // and variance 10. Averaged over 10_000 draws the sample mean lands
        // within 3 * sqrt(10 / 10_000) of 15 unless something is miswired.
        let draws = 10_000;
        let mut total = 0usize;
        for seed in 0..draws {
            let dag = sample_erdos_renyi_dag(&DagSampleConfig {
                num_nodes: 10,
                expected_degree: 3.0,
                weight_range: (0.5, 2.0),
                seed,
            })
            .unwrap();
            total += dag.num_edges();
        }
        let mean = total as f64 / draws as f64;
        let three_sigma = 3.0 * (10.0f64 / draws as f64).sqrt();
        assert!(
            (mean - 15.0).abs() < three_sigma,
            "mean edge count {mean} too far from 15"
        );
    }

    #[test]
    fn sampler_rejects_bad_configs() {
        let base = DagSampleConfig {
            num_nodes: 10,
            expected_degree: 3.0,
            weight_range: (0.5, 2.0),
            seed: 0,
        };
        assert!(sample_erdos_renyi_dag(&DagSampleConfig {
            expected_degree: 20.0,
            ..base.clone()
        })
        .is_err());
        assert!(sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 1,
            ..base.clone()
        })
        .is_err());
        assert!(sample_erdos_renyi_dag(&DagSampleConfig {
            weight_range: (2.0, 0.5),
            ..base
        })
        .is_err());
    }

    #[test]
    fn adjacency_csv_round_trips_losslessly() {
        let dag = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: 8,
            expected_degree: 3.0,
            weight_range: (0.5, 2.0),
            seed: 5,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adj.csv");
        let path = path.to_str().unwrap();
        write_adjacency_csv(&dag, path).unwrap();
        let read = read_adjacency_csv(path).unwrap();
        assert_eq!(read.adjacency(), dag.adjacency());
    }

    #[test]
    fn adjacency_csv_reports_line_of_bad_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,1\n0,oops\n").unwrap();
        match read_adjacency_csv(path.to_str().unwrap()).unwrap_err() {
            GraphError::Parse { line, problem, .. } => {
                assert_eq!(line, 2);
                assert!(problem.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn adjacency_csv_rejects_ragged_and_non_square() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "0,1\n0\n").unwrap();
        assert!(matches!(
            read_adjacency_csv(ragged.to_str().unwrap()).unwrap_err(),
            GraphError::Parse { line: 2, .. }
        ));
        let rect = dir.path().join("rect.csv");
        std::fs::write(&rect, "0,1,0\n0,0,1\n").unwrap();
        assert!(matches!(
            read_adjacency_csv(rect.to_str().unwrap()).unwrap_err(),
            GraphError::NonSquare { rows: 2, cols: 3 }
        ));
    }
}
