//! Exact checks on small discrete DAG-factored sources.
//!
//! A [`DiscreteBayesNet`] holds a conditional probability table per node and
//! factorizes a joint distribution along the graph. Everything here works by
//! exhaustive enumeration of the joint support, which is capped at 10^6
//! states, so results are exact up to float rounding rather than sampled.
//! The point of the module is the entropy comparison in [`entropy_gap`]: a
//! coder that knows the graph pays the joint entropy, one that treats the
//! symbols as independent pays the sum of the marginal entropies, and the
//! difference is nonnegative, strictly positive exactly when some table
//! varies with its parents.
//!
//! # Net specification files
//!
//! Nets round-trip through a plain-text format. Blank lines and lines
//! starting with `#` are skipped. Everything else is fixed-order:
//!
//! ```text
//! discrete-net v1
//! nodes <count>
//! node <i> card <k> parents none
//! node <i> card <k> parents <p1> <p2> ...
//! cpt <i>
//! <k probabilities, one line per parent configuration>
//! encoding factored
//! end
//! ```
//!
//! One `node` line per node in ascending index order, then one `cpt` block
//! per node in the same order. A node with parents `p1 < p2 < ...` has one
//! table row per parent configuration; configurations are enumerated with
//! the lowest-indexed parent as the most significant digit and the
//! highest-indexed parent cycling fastest. The `encoding` line is `factored`
//! for a coder that uses the graph or `independent` for one that treats the
//! symbols as independent. Only edge presence is recorded, so a parsed net
//! carries unit edge weights.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{sample_erdos_renyi_dag, Dag, DagSampleConfig, GraphError};

/// Largest per-node symbol count accepted.
pub const MAX_CARDINALITY: usize = 8;

/// Largest joint support that will be enumerated.
pub const MAX_JOINT_STATES: u64 = 1_000_000;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("cardinality of node {node} is {cardinality}, supported range is 1..={max}", max = MAX_CARDINALITY)]
    BadCardinality { node: usize, cardinality: usize },
    #[error("{what} count is {got}, dag has {want} nodes")]
    NodeCountMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("table for node {node} is {rows}x{cols}, wanted {want_rows} parent configurations x {want_cols} symbols")]
    TableShape {
        node: usize,
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("row {row} of node {node}'s table sums to {sum}, rows must sum to 1 within {tol}", tol = ROW_SUM_TOLERANCE)]
    RowSum { node: usize, row: usize, sum: f64 },
    #[error("entry ({row}, {col}) of node {node}'s table is {value}, entries must be finite and nonnegative")]
    BadEntry {
        node: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("joint support has {states} states, enumeration is capped at {max}", max = MAX_JOINT_STATES)]
    SupportTooLarge { states: u128 },
    #[error("net spec line {line}: {problem}")]
    Parse { line: usize, problem: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("no dag with an edge after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("{0}")]
    InvalidInput(String),
}

/// Discrete distribution factorized along a DAG: one conditional probability
/// table per node, rows indexed by the joint state of that node's parents.
/// Only edge presence in the graph matters here, weights are ignored.
#[derive(Debug, Clone)]
pub struct DiscreteBayesNet {
    dag: Dag,
    cardinalities: Vec<usize>,
    tables: Vec<Array2<f64>>,
    structure_aware: bool,
}

impl DiscreteBayesNet {
    /// Validates shapes and row sums. `tables[i]` must have one row per
    /// joint configuration of node `i`'s parents (a single row when it has
    /// none) and one column per symbol of node `i`. `structure_aware` is the
    /// coding stance: `true` codes with the factored joint, `false` with the
    /// product of the marginals; see [`Self::expected_code_length_bits`].
    pub fn new(
        dag: Dag,
        cardinalities: Vec<usize>,
        tables: Vec<Array2<f64>>,
        structure_aware: bool,
    ) -> Result<Self, NetError> {
        let n = dag.num_nodes();
        if cardinalities.len() != n {
            return Err(NetError::NodeCountMismatch {
                what: "cardinality",
                got: cardinalities.len(),
                want: n,
            });
        }
        if tables.len() != n {
            return Err(NetError::NodeCountMismatch {
                what: "table",
                got: tables.len(),
                want: n,
            });
        }
        for (node, &k) in cardinalities.iter().enumerate() {
            if k == 0 || k > MAX_CARDINALITY {
                return Err(NetError::BadCardinality {
                    node,
                    cardinality: k,
                });
            }
        }
        let states: u128 = cardinalities.iter().map(|&k| k as u128).product();
        if states > MAX_JOINT_STATES as u128 {
            return Err(NetError::SupportTooLarge { states });
        }
        for (node, table) in tables.iter().enumerate() {
            let want_rows: usize = dag
                .parents(node)
                .iter()
                .map(|&(p, _)| cardinalities[p])
                .product();
            let want_cols = cardinalities[node];
            if table.nrows() != want_rows || table.ncols() != want_cols {
                return Err(NetError::TableShape {
                    node,
                    rows: table.nrows(),
                    cols: table.ncols(),
                    want_rows,
                    want_cols,
                });
            }
            for ((row, col), &value) in table.indexed_iter() {
                if !value.is_finite() || value < 0.0 {
                    return Err(NetError::BadEntry {
                        node,
                        row,
                        col,
                        value,
                    });
                }
            }
            for row in 0..table.nrows() {
                let sum: f64 = table.row(row).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(NetError::RowSum { node, row, sum });
                }
            }
        }
        Ok(Self {
            dag,
            cardinalities,
            tables,
            structure_aware,
        })
    }

    /// Chain of fair bits where every node after the first copies its
    /// predecessor. The joint entropy is exactly 1 bit however long the
    /// chain is, while the marginals contribute 1 bit each.
    pub fn copy_chain(num_nodes: usize) -> Result<Self, NetError> {
        if num_nodes < 2 {
            return Err(NetError::InvalidInput(format!(
                "a copy chain needs at least 2 nodes, got {num_nodes}"
            )));
        }
        let mut adjacency = Array2::<f64>::zeros((num_nodes, num_nodes));
        for i in 1..num_nodes {
            adjacency[[i - 1, i]] = 1.0;
        }
        let dag = Dag::from_adjacency(adjacency)?;
        let mut tables = vec![Array2::from_shape_vec((1, 2), vec![0.5, 0.5]).unwrap()];
        for _ in 1..num_nodes {
            tables.push(Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        }
        Self::new(dag, vec![2; num_nodes], tables, true)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn table(&self, node: usize) -> &Array2<f64> {
        &self.tables[node]
    }

    pub fn structure_aware(&self) -> bool {
        self.structure_aware
    }

    /// Same net with the coding stance flipped or set.
    pub fn with_structure_aware(mut self, structure_aware: bool) -> Self {
        self.structure_aware = structure_aware;
        self
    }

    pub fn num_states(&self) -> usize {
        // validated against MAX_JOINT_STATES in new, so this cannot overflow
        self.cardinalities.iter().product()
    }

    /// Row of `node`'s table selected by the parent values in `state`.
    /// Lowest-indexed parent is the most significant digit.
    fn parent_row(&self, node: usize, state: &[usize]) -> usize {
        let mut row = 0;
        for &(p, _) in self.dag.parents(node) {
            row = row * self.cardinalities[p] + state[p];
        }
        row
    }

    /// Full joint table: for every joint state, the product of one table
    /// entry per node, taken in topological order. Sums to 1 up to float
    /// rounding because every table row does.
    pub fn joint(&self) -> JointTable {
        let mut probabilities = vec![0.0; self.num_states()];
        let mut state = vec![0usize; self.dag.num_nodes()];
        for slot in probabilities.iter_mut() {
            let mut p = 1.0;
            for &node in self.dag.topo_order() {
                p *= self.tables[node][[self.parent_row(node, &state), state[node]]];
            }
            *slot = p;
            advance(&mut state, &self.cardinalities);
        }
        JointTable {
            cardinalities: self.cardinalities.clone(),
            probabilities,
        }
    }

    /// True when some row of `node`'s table differs from its first row, so
    /// the node's distribution actually depends on its parents. Exact
    /// comparison: the vacuous-edge sampler clones rows bitwise.
    pub fn table_varies(&self, node: usize) -> bool {
        let table = &self.tables[node];
        (1..table.nrows()).any(|r| table.row(r) != table.row(0))
    }

    /// True when any node's table varies with its parents. This is the
    /// exact condition under which the entropy gap is strictly positive,
    /// provided every symbol has positive probability.
    pub fn has_varying_table(&self) -> bool {
        (0..self.dag.num_nodes()).any(|i| self.table_varies(i))
    }

    /// Distribution an ideal coder would build: the factored joint when the
    /// net is structure-aware, the product of the marginals when not.
    pub fn encoding_distribution(&self) -> JointTable {
        let truth = self.joint();
        if self.structure_aware {
            return truth;
        }
        let marginals: Vec<Vec<f64>> = (0..self.dag.num_nodes())
            .map(|node| truth.marginal(node))
            .collect();
        let mut probabilities = vec![0.0; self.num_states()];
        let mut state = vec![0usize; self.dag.num_nodes()];
        for slot in probabilities.iter_mut() {
            *slot = marginals
                .iter()
                .zip(&state)
                .map(|(m, &s)| m[s])
                .product();
            advance(&mut state, &self.cardinalities);
        }
        JointTable {
            cardinalities: self.cardinalities.clone(),
            probabilities,
        }
    }

    /// Expected bits per joint symbol under an ideal code built from
    /// [`Self::encoding_distribution`]: the cross entropy of the true joint
    /// against the coding distribution. Equals the joint entropy when
    /// structure-aware and the sum of marginal entropies when not, so the
    /// difference between the two stances is exactly the entropy gap.
    pub fn expected_code_length_bits(&self) -> f64 {
        let truth = self.joint();
        let code = self.encoding_distribution();
        let mut bits = 0.0;
        for (&p, &q) in truth.probabilities().iter().zip(code.probabilities()) {
            // q >= product of entries bounded below by p, so p > 0 => q > 0
            if p > 0.0 {
                bits -= p * q.log2();
            }
        }
        bits
    }

    /// Renders the net in the plain-text format described in the module
    /// docs. Floats print in shortest round-trip form, so
    /// [`Self::from_net_spec`] recovers the tables bitwise.
    pub fn to_net_spec(&self) -> String {
        let n = self.dag.num_nodes();
        let mut out = String::from("discrete-net v1\n");
        out.push_str(&format!("nodes {n}\n"));
        for node in 0..n {
            let parents = self.dag.parents(node);
            out.push_str(&format!(
                "node {node} card {} parents ",
                self.cardinalities[node]
            ));
            if parents.is_empty() {
                out.push_str("none");
            } else {
                let list: Vec<String> = parents.iter().map(|&(p, _)| p.to_string()).collect();
                out.push_str(&list.join(" "));
            }
            out.push('\n');
        }
        for node in 0..n {
            out.push_str(&format!("cpt {node}\n"));
            for row in self.tables[node].rows() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        out.push_str(if self.structure_aware {
            "encoding factored\n"
        } else {
            "encoding independent\n"
        });
        out.push_str("end\n");
        out
    }

    /// Parses the plain-text format described in the module docs. Errors
    /// carry the 1-based line number of the offending line.
    pub fn from_net_spec(text: &str) -> Result<Self, NetError> {
        let fail = |line: usize, problem: String| NetError::Parse { line, problem };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut take = |what: &str| {
            lines
                .next()
                .ok_or_else(|| fail(0, format!("file ended before {what}")))
        };

        let (line, header) = take("the header")?;
        if header != "discrete-net v1" {
            return Err(fail(line, format!("expected \"discrete-net v1\", got \"{header}\"")));
        }
        let (line, nodes_line) = take("the node count")?;
        let n: usize = match nodes_line.strip_prefix("nodes ") {
            Some(rest) => rest
                .trim()
                .parse()
                .map_err(|_| fail(line, format!("bad node count \"{rest}\"")))?,
            None => return Err(fail(line, format!("expected \"nodes <count>\", got \"{nodes_line}\""))),
        };
        if n == 0 {
            return Err(fail(line, "a net needs at least one node".into()));
        }

        let mut cardinalities = vec![0usize; n];
        let mut parent_lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for node in 0..n {
            let (line, text) = take("a node line")?;
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.len() < 5 || tokens[0] != "node" || tokens[2] != "card" || tokens[4] != "parents" {
                return Err(fail(
                    line,
                    format!("expected \"node {node} card <k> parents ...\", got \"{text}\""),
                ));
            }
            let index: usize = tokens[1]
                .parse()
                .map_err(|_| fail(line, format!("bad node index \"{}\"", tokens[1])))?;
            if index != node {
                return Err(fail(
                    line,
                    format!("node lines must be in ascending order, expected {node}, got {index}"),
                ));
            }
            cardinalities[node] = tokens[3]
                .parse()
                .map_err(|_| fail(line, format!("bad cardinality \"{}\"", tokens[3])))?;
            if tokens[5..] == ["none"] {
                continue;
            }
            if tokens.len() < 6 {
                return Err(fail(line, "parents list is empty, write \"parents none\"".into()));
            }
            for token in &tokens[5..] {
                let p: usize = token
                    .parse()
                    .map_err(|_| fail(line, format!("bad parent index \"{token}\"")))?;
                if p >= n {
                    return Err(fail(line, format!("parent {p} is out of range for {n} nodes")));
                }
                if p == node {
                    return Err(fail(line, format!("node {node} lists itself as a parent")));
                }
                if parent_lists[node].contains(&p) {
                    return Err(fail(line, format!("duplicate parent {p}")));
                }
                parent_lists[node].push(p);
            }
            // parent_row treats the lowest index as most significant
            parent_lists[node].sort_unstable();
        }

        let mut adjacency = Array2::<f64>::zeros((n, n));
        for (node, parents) in parent_lists.iter().enumerate() {
            for &p in parents {
                adjacency[[p, node]] = 1.0;
            }
        }
        let dag = Dag::from_adjacency(adjacency)?;

        let mut tables = Vec::with_capacity(n);
        for node in 0..n {
            let (line, text) = take("a cpt header")?;
            if text != format!("cpt {node}") {
                return Err(fail(line, format!("expected \"cpt {node}\", got \"{text}\"")));
            }
            let rows: usize = parent_lists[node].iter().map(|&p| cardinalities[p]).product();
            let cols = cardinalities[node];
            if cols == 0 {
                return Err(fail(line, format!("node {node} has cardinality 0")));
            }
            let mut table = Array2::<f64>::zeros((rows, cols));
            for row in 0..rows {
                let (line, text) = take("a cpt row")?;
                let cells: Vec<&str> = text.split_whitespace().collect();
                if cells.len() != cols {
                    return Err(fail(
                        line,
                        format!("row has {} values, node {node} needs {cols}", cells.len()),
                    ));
                }
                let mut sum = 0.0;
                for (col, cell) in cells.iter().enumerate() {
                    let value: f64 = cell
                        .parse()
                        .map_err(|_| fail(line, format!("bad probability \"{cell}\"")))?;
                    if !value.is_finite() || value < 0.0 {
                        return Err(fail(line, format!("probability {value} is not in [0, 1]")));
                    }
                    table[[row, col]] = value;
                    sum += value;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(fail(line, format!("row sums to {sum}, rows must sum to 1")));
                }
            }
            tables.push(table);
        }

        let (line, text) = take("the encoding line")?;
        let structure_aware = match text {
            "encoding factored" => true,
            "encoding independent" => false,
            _ => {
                return Err(fail(
                    line,
                    format!("expected \"encoding factored\" or \"encoding independent\", got \"{text}\""),
                ))
            }
        };
        let (line, text) = take("the end marker")?;
        if text != "end" {
            return Err(fail(line, format!("expected \"end\", got \"{text}\"")));
        }
        if let Some((line, text)) = lines.next() {
            return Err(fail(line, format!("unexpected content after end: \"{text}\"")));
        }

        Self::new(dag, cardinalities, tables, structure_aware)
    }
}

/// Flat probability table over the joint states of several discrete
/// variables, mixed-radix indexed with node 0 as the most significant digit
/// and the last node cycling fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    cardinalities: Vec<usize>,
    probabilities: Vec<f64>,
}

impl JointTable {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_states(&self) -> usize {
        self.probabilities.len()
    }

    /// Probability of one joint state.
    pub fn prob(&self, state: &[usize]) -> f64 {
        assert_eq!(state.len(), self.cardinalities.len(), "state length");
        let mut index = 0;
        for (&card, &s) in self.cardinalities.iter().zip(state) {
            assert!(s < card, "state {s} out of range for cardinality {card}");
            index = index * card + s;
        }
        self.probabilities[index]
    }

    /// Marginal of one variable: the joint summed over every other axis.
    pub fn marginal(&self, node: usize) -> Vec<f64> {
        assert!(node < self.cardinalities.len(), "node out of range");
        let mut out = vec![0.0; self.cardinalities[node]];
        let mut state = vec![0usize; self.cardinalities.len()];
        for &p in &self.probabilities {
            out[state[node]] += p;
            advance(&mut state, &self.cardinalities);
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

/// Advances `state` one step in mixed-radix order, last digit fastest.
/// Returns false after wrapping past the final state.
fn advance(state: &mut [usize], cardinalities: &[usize]) -> bool {
    for pos in (0..state.len()).rev() {
        state[pos] += 1;
        if state[pos] < cardinalities[pos] {
            return true;
        }
        state[pos] = 0;
    }
    false
}

/// Shannon entropy of a probability table in bits, with 0 log 0 = 0.
pub fn entropy(probabilities: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probabilities {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Joint entropy, sum of marginal entropies, and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyGap {
    pub joint_entropy: f64,
    pub independent_sum: f64,
    /// `independent_sum - joint_entropy`. Nonnegative up to rounding, and
    /// strictly positive exactly when some table varies with its parents on
    /// reachable parent configurations.
    pub gap: f64,
}

/// Compares coding with the graph against coding the symbols independently:
/// the joint entropy versus the sum of the per-node marginal entropies.
pub fn entropy_gap(net: &DiscreteBayesNet) -> EntropyGap {
    let joint = net.joint();
    let joint_entropy = entropy(joint.probabilities());
    let independent_sum = (0..net.dag().num_nodes())
        .map(|node| entropy(&joint.marginal(node)))
        .sum();
    EntropyGap {
        joint_entropy,
        independent_sum,
        gap: independent_sum - joint_entropy,
    }
}

/// Configuration for [`sample_net`].
#[derive(Debug, Clone)]
pub struct NetSampleConfig {
    pub num_nodes: usize,
    /// Symbol counts are drawn uniformly from `2..=max_cardinality`.
    pub max_cardinality: usize,
    /// Expected in-plus-out degree of the sampled dag.
    pub expected_degree: f64,
    /// true: every table repeats one row for all parent configurations, so
    /// the edges carry no information and the joint factorizes into its
    /// marginals. false: at least one child's rows are forced measurably
    /// apart, so the entropy gap is strictly positive.
    pub vacuous_edges: bool,
    pub seed: u64,
}

impl Default for NetSampleConfig {
    fn default() -> Self {
        Self {
            num_nodes: 4,
            max_cardinality: 4,
            expected_degree: 1.5,
            vacuous_edges: false,
            seed: 0,
        }
    }
}

// Every sampled table entry stays at or above this floor, so every joint
// state keeps probability at least FLOOR^num_nodes and parent
// configurations are never starved.
const ENTRY_FLOOR: f64 = 0.12;
// A dependent net must contain two rows of one table at least this far
// apart in max-norm. Together with the entry floor this puts a provable
// lower bound on the entropy gap: for the default four-node config the
// worst case is about 5e-5 bits, far above the 1e-6 the tests assert.
const ROW_SEPARATION: f64 = 0.2;
const MAX_DAG_ATTEMPTS: usize = 64;

/// Samples a random net with at least one edge, deterministic in the seed.
/// `vacuous_edges` picks between a genuinely factored distribution and a
/// product distribution masquerading behind the same graph; the two make up
/// the positive and negative directions of the strictness property.
pub fn sample_net(config: &NetSampleConfig) -> Result<DiscreteBayesNet, NetError> {
    if config.max_cardinality < 2 || config.max_cardinality > MAX_CARDINALITY {
        return Err(NetError::InvalidInput(format!(
            "max_cardinality must be in 2..={MAX_CARDINALITY}, got {}",
            config.max_cardinality
        )));
    }
    let mut dag = None;
    for attempt in 0..MAX_DAG_ATTEMPTS {
        let candidate = sample_erdos_renyi_dag(&DagSampleConfig {
            num_nodes: config.num_nodes,
            expected_degree: config.expected_degree,
            weight_range: (0.5, 1.5),
            seed: config.seed.wrapping_add(attempt as u64),
        })?;
        if candidate.has_edges() {
            dag = Some(candidate);
            break;
        }
    }
    let dag = dag.ok_or(NetError::SamplingExhausted {
        attempts: MAX_DAG_ATTEMPTS,
    })?;

    // separate stream so table draws never replay the dag draws
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let n = config.num_nodes;
    let cardinalities: Vec<usize> = (0..n)
        .map(|_| rng.random_range(2..=config.max_cardinality))
        .collect();

    let mut tables = Vec::with_capacity(n);
    for node in 0..n {
        let rows: usize = dag
            .parents(node)
            .iter()
            .map(|&(p, _)| cardinalities[p])
            .product();
        let cols = cardinalities[node];
        let mut table = Array2::<f64>::zeros((rows, cols));
        if config.vacuous_edges {
            let row = random_row(&mut rng, cols);
            for r in 0..rows {
                for c in 0..cols {
                    table[[r, c]] = row[c];
                }
            }
        } else {
            for r in 0..rows {
                let row = random_row(&mut rng, cols);
                for c in 0..cols {
                    table[[r, c]] = row[c];
                }
            }
        }
        tables.push(table);
    }

    if !config.vacuous_edges && !rows_separated(&tables, ROW_SEPARATION) {
        // random rows almost surely separate; this deterministic fallback
        // covers the remaining sliver so dependence is truly by construction
        let node = (0..n)
            .find(|&i| !dag.parents(i).is_empty())
            .expect("dag has an edge, so some node has a parent");
        let cols = cardinalities[node];
        let table = &mut tables[node];
        for r in 0..table.nrows() {
            let heavy = r % 2;
            for c in 0..cols {
                table[[r, c]] = if c == heavy {
                    1.0 - 0.05 * (cols - 1) as f64
                } else {
                    0.05
                };
            }
        }
    }

    DiscreteBayesNet::new(dag, cardinalities, tables, !config.vacuous_edges)
}

/// Random distribution over `k` symbols with every entry at least
/// [`ENTRY_FLOOR`], normalized to machine precision.
fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let spare = 1.0 - ENTRY_FLOOR * k as f64;
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut row: Vec<f64> = weights
        .iter()
        .map(|w| ENTRY_FLOOR + spare * w / weight_sum)
        .collect();
    let sum: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= sum;
    }
    row
}

/// True when some table holds two rows at max-norm distance `threshold` or
/// more. Single-row tables (parentless nodes) never qualify.
fn rows_separated(tables: &[Array2<f64>], threshold: f64) -> bool {
    tables.iter().any(|table| {
        (0..table.nrows()).any(|a| {
            (a + 1..table.nrows()).any(|b| {
                table
                    .row(a)
                    .iter()
                    .zip(table.row(b))
                    .any(|(x, y)| (x - y).abs() >= threshold)
            })
        })
    })
}
