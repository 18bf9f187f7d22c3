//! Graph data model for recurrent network genomes.
//!
//! A genome is a directed graph of typed nodes and weighted edges. It is at
//! once the evolutionary individual, the trainable model, and the unit of
//! serialization and transfer. Feedforward edges must always go from a
//! shallower to a deeper node (`depth(source) < depth(target)`), which keeps
//! the enabled feedforward subgraph acyclic by construction; recurrent edges
//! may connect any pair of nodes and reach back `time_skip` timesteps.

use crate::cells::CellType;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const GENOME_FORMAT_VERSION: u32 = 1;

/// Largest allowed recurrent time skip.
pub const MAX_TIME_SKIP: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Output,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub cell_type: CellType,
    /// Sensor channel this node binds to; input and output nodes only.
    pub param_name: Option<String>,
    /// 0 for inputs, 1 for outputs, strictly between for hidden nodes.
    pub depth: f64,
    pub enabled: bool,
    /// Bias and internal cell weights; empty for input nodes.
    pub params: Vec<f64>,
    #[serde(default)]
    pub forward_reachable: bool,
    #[serde(default)]
    pub backward_reachable: bool,
}

impl Node {
    pub fn input(id: NodeId, param_name: impl Into<String>) -> Node {
        Node {
            id,
            kind: NodeKind::Input,
            cell_type: CellType::Simple,
            param_name: Some(param_name.into()),
            depth: 0.0,
            enabled: true,
            params: Vec::new(),
            forward_reachable: false,
            backward_reachable: false,
        }
    }

    pub fn output(id: NodeId, param_name: impl Into<String>, bias: f64) -> Node {
        Node {
            id,
            kind: NodeKind::Output,
            cell_type: CellType::Simple,
            param_name: Some(param_name.into()),
            depth: 1.0,
            enabled: true,
            params: vec![bias],
            forward_reachable: false,
            backward_reachable: false,
        }
    }

    pub fn hidden(id: NodeId, cell_type: CellType, depth: f64, params: Vec<f64>) -> Node {
        debug_assert_eq!(params.len(), cell_type.param_count());
        Node {
            id,
            kind: NodeKind::Hidden,
            cell_type,
            param_name: None,
            depth,
            enabled: true,
            params,
            forward_reachable: false,
            backward_reachable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
    pub recurrent: bool,
    /// Temporal lag of a recurrent edge; 0 for feedforward edges.
    pub time_skip: u32,
    pub enabled: bool,
    #[serde(default)]
    pub forward_reachable: bool,
    #[serde(default)]
    pub backward_reachable: bool,
}

impl Edge {
    pub fn feedforward(id: EdgeId, source: NodeId, target: NodeId, weight: f64) -> Edge {
        Edge {
            id,
            source,
            target,
            weight,
            recurrent: false,
            time_skip: 0,
            enabled: true,
            forward_reachable: false,
            backward_reachable: false,
        }
    }

    pub fn recurrent(id: EdgeId, source: NodeId, target: NodeId, weight: f64, time_skip: u32) -> Edge {
        Edge {
            id,
            source,
            target,
            weight,
            recurrent: true,
            time_skip,
            enabled: true,
            forward_reachable: false,
            backward_reachable: false,
        }
    }

    /// Identity of an edge for duplicate prevention.
    pub fn key(&self) -> (NodeId, NodeId, bool, u32) {
        (self.source, self.target, self.recurrent, self.time_skip)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenomeMeta {
    #[serde(default)]
    pub genome_id: u64,
    #[serde(default)]
    pub island: Option<usize>,
    #[serde(default)]
    pub parents: Vec<u64>,
}

/// Weight and degree statistics of a network, used to drive
/// structure-aware transfer and epigenetic weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    /// Mean and standard deviation over all enabled edge weights plus all
    /// biases/internal weights of enabled nodes.
    pub mu_w: f64,
    pub sigma_w: f64,
    /// Fan-out mean/std over enabled input and hidden nodes.
    pub mu_o: f64,
    pub sigma_o: f64,
    /// Fan-in mean/std over enabled output and hidden nodes.
    pub mu_i: f64,
    pub sigma_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub format_version: u32,
    pub input_params: Vec<String>,
    pub output_params: Vec<String>,
    /// Sorted by id.
    pub nodes: Vec<Node>,
    /// Sorted by id.
    pub edges: Vec<Edge>,
    /// Validation MSE; `+inf` is the sentinel for failed training.
    #[serde(with = "fitness_repr")]
    pub fitness: Option<f64>,
    #[serde(default)]
    pub metadata: GenomeMeta,
}

/// Monotonic id source. Candidate generation runs on a single coordinator,
/// so one allocator per run keeps ids unique across an entire lineage and
/// lets crossover align structure by id.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next_node: u64,
    next_edge: u64,
}

impl IdAllocator {
    pub fn new() -> IdAllocator {
        IdAllocator { next_node: 0, next_edge: 0 }
    }

    pub fn starting_at(next_node: u64, next_edge: u64) -> IdAllocator {
        IdAllocator { next_node, next_edge }
    }

    /// Continue allocation after every id already present in `genome`.
    pub fn after(genome: &Genome) -> IdAllocator {
        IdAllocator {
            next_node: genome.nodes.last().map_or(0, |n| n.id.0 + 1),
            next_edge: genome.edges.last().map_or(0, |e| e.id.0 + 1),
        }
    }

    pub fn node_id(&mut self) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        id
    }

    pub fn edge_id(&mut self) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        id
    }
}

impl Default for IdAllocator {
    fn default() -> Self {
        Self::new()
    }
}

impl Genome {
    /// Build the minimal topology for the given channels: no hidden nodes,
    /// one feedforward edge from every input to every output. Edge weights
    /// and output biases are drawn from U(-0.5, 0.5).
    pub fn minimal<R: Rng + ?Sized>(
        input_params: &[String],
        output_params: &[String],
        rng: &mut R,
    ) -> Result<Genome> {
        if input_params.is_empty() || output_params.is_empty() {
            return Err(Error::invalid("minimal genome needs at least one input and one output"));
        }
        for (name, list) in [("input", input_params), ("output", output_params)] {
            let mut seen = list.to_vec();
            seen.sort();
            seen.dedup();
            if seen.len() != list.len() {
                return Err(Error::invalid(format!("duplicate {name} parameter name")));
            }
        }

        let mut ids = IdAllocator::new();
        let mut nodes = Vec::with_capacity(input_params.len() + output_params.len());
        for name in input_params {
            nodes.push(Node::input(ids.node_id(), name));
        }
        let mut output_ids = Vec::with_capacity(output_params.len());
        for name in output_params {
            let id = ids.node_id();
            output_ids.push(id);
            nodes.push(Node::output(id, name, rng.random_range(-0.5..0.5)));
        }

        let input_ids: Vec<NodeId> =
            nodes.iter().take(input_params.len()).map(|n| n.id).collect();
        let mut edges = Vec::with_capacity(input_params.len() * output_params.len());
        for &input_id in &input_ids {
            for &output_id in &output_ids {
                edges.push(Edge::feedforward(
                    ids.edge_id(),
                    input_id,
                    output_id,
                    rng.random_range(-0.5..0.5),
                ));
            }
        }

        let mut genome = Genome {
            format_version: GENOME_FORMAT_VERSION,
            input_params: input_params.to_vec(),
            output_params: output_params.to_vec(),
            nodes,
            edges,
            fitness: None,
            metadata: GenomeMeta::default(),
        };
        genome.mark_reachability();
        Ok(genome)
    }

    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.node_index(id).map(move |i| &mut self.nodes[i])
    }

    pub fn edge_index(&self, id: EdgeId) -> Option<usize> {
        self.edges.binary_search_by_key(&id, |e| e.id).ok()
    }

    /// Insert keeping the id ordering; ids must be fresh.
    pub fn push_node(&mut self, node: Node) {
        debug_assert!(self.nodes.last().is_none_or(|last| last.id < node.id));
        self.nodes.push(node);
    }

    pub fn push_edge(&mut self, edge: Edge) {
        debug_assert!(self.edges.last().is_none_or(|last| last.id < edge.id));
        self.edges.push(edge);
    }

    pub fn enabled_edge_with_key(&self, key: (NodeId, NodeId, bool, u32)) -> bool {
        self.edges.iter().any(|e| e.enabled && e.key() == key)
    }

    pub fn input_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Input)
    }

    pub fn output_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Output)
    }

    pub fn hidden_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Hidden)
    }

    /// Edge is part of the live network: enabled with enabled endpoints.
    fn traversable(&self, edge: &Edge) -> bool {
        edge.enabled
            && self.node(edge.source).is_some_and(|n| n.enabled)
            && self.node(edge.target).is_some_and(|n| n.enabled)
    }

    /// Recompute forward and backward reachability flags.
    ///
    /// Forward: reachable from any enabled input over enabled edges;
    /// backward: reaches any enabled output. Recurrent edges count as
    /// ordinary arcs. Flags on disabled elements are always false.
    pub fn mark_reachability(&mut self) {
        let n = self.nodes.len();
        let mut fwd = vec![false; n];
        let mut bwd = vec![false; n];

        // Adjacency over traversable edges, by node index.
        let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut in_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for edge in &self.edges {
            if self.traversable(edge) {
                let s = self.node_index(edge.source).unwrap();
                let t = self.node_index(edge.target).unwrap();
                out_adj[s].push(t);
                in_adj[t].push(s);
            }
        }

        let mut queue: Vec<usize> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == NodeKind::Input && node.enabled {
                fwd[i] = true;
                queue.push(i);
            }
        }
        while let Some(i) = queue.pop() {
            for &j in &out_adj[i] {
                if !fwd[j] {
                    fwd[j] = true;
                    queue.push(j);
                }
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == NodeKind::Output && node.enabled {
                bwd[i] = true;
                queue.push(i);
            }
        }
        while let Some(i) = queue.pop() {
            for &j in &in_adj[i] {
                if !bwd[j] {
                    bwd[j] = true;
                    queue.push(j);
                }
            }
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.forward_reachable = fwd[i];
            node.backward_reachable = bwd[i];
        }
        let node_flags: Vec<(NodeId, bool, bool)> =
            self.nodes.iter().map(|n| (n.id, n.forward_reachable, n.backward_reachable)).collect();
        let lookup = |id: NodeId| {
            let i = node_flags.binary_search_by_key(&id, |&(nid, _, _)| nid).unwrap();
            (node_flags[i].1, node_flags[i].2)
        };
        for i in 0..self.edges.len() {
            let traversable = self.traversable(&self.edges[i]);
            let edge = &mut self.edges[i];
            if traversable {
                edge.forward_reachable = lookup(edge.source).0;
                edge.backward_reachable = lookup(edge.target).1;
            } else {
                edge.forward_reachable = false;
                edge.backward_reachable = false;
            }
        }
    }

    /// Mean and population standard deviation over all enabled edge weights
    /// plus all biases/internal weights of enabled nodes.
    pub fn weight_statistics(&self) -> Result<(f64, f64)> {
        let values: Vec<f64> = self
            .edges
            .iter()
            .filter(|e| e.enabled)
            .map(|e| e.weight)
            .chain(self.nodes.iter().filter(|n| n.enabled).flat_map(|n| n.params.iter().copied()))
            .collect();
        if values.is_empty() {
            return Err(Error::EmptyNetwork("no enabled weights".into()));
        }
        Ok(mean_std(&values))
    }

    /// Fan-out stats over enabled input and hidden nodes, fan-in stats over
    /// enabled output and hidden nodes. Both feedforward and recurrent
    /// enabled edges count.
    pub fn fan_statistics(&self) -> (f64, f64, f64, f64) {
        let fan_out: Vec<f64> = self
            .nodes
            .iter()
            .filter(|n| n.enabled && n.kind != NodeKind::Output)
            .map(|n| self.edges.iter().filter(|e| e.enabled && e.source == n.id).count() as f64)
            .collect();
        let fan_in: Vec<f64> = self
            .nodes
            .iter()
            .filter(|n| n.enabled && n.kind != NodeKind::Input)
            .map(|n| self.edges.iter().filter(|e| e.enabled && e.target == n.id).count() as f64)
            .collect();
        let (mu_o, sigma_o) = if fan_out.is_empty() { (0.0, 0.0) } else { mean_std(&fan_out) };
        let (mu_i, sigma_i) = if fan_in.is_empty() { (0.0, 0.0) } else { mean_std(&fan_in) };
        (mu_o, sigma_o, mu_i, sigma_i)
    }

    pub fn network_stats(&self) -> Result<NetworkStats> {
        let (mu_w, sigma_w) = self.weight_statistics()?;
        let (mu_o, sigma_o, mu_i, sigma_i) = self.fan_statistics();
        Ok(NetworkStats { mu_w, sigma_w, mu_o, sigma_o, mu_i, sigma_i })
    }

    /// Flatten all trainable parameters (enabled edge weights in id order,
    /// then enabled node parameter vectors in id order).
    pub fn collect_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.edges.iter().filter(|e| e.enabled).map(|e| e.weight));
        for node in self.nodes.iter().filter(|n| n.enabled) {
            out.extend_from_slice(&node.params);
        }
        out
    }

    pub fn apply_params(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for edge in self.edges.iter_mut().filter(|e| e.enabled) {
            edge.weight = it.next().expect("parameter vector too short");
        }
        for node in self.nodes.iter_mut().filter(|n| n.enabled) {
            for p in node.params.iter_mut() {
                *p = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn param_count(&self) -> usize {
        self.edges.iter().filter(|e| e.enabled).count()
            + self.nodes.iter().filter(|n| n.enabled).map(|n| n.params.len()).sum::<usize>()
    }

    /// Independent acyclicity check of the enabled feedforward subgraph
    /// (Kahn's algorithm; does not rely on the depth ordering).
    pub fn feedforward_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut in_degree = vec![0usize; n];
        for edge in &self.edges {
            if edge.enabled && !edge.recurrent {
                let (Some(s), Some(t)) = (self.node_index(edge.source), self.node_index(edge.target))
                else {
                    return false;
                };
                out_adj[s].push(t);
                in_degree[t] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            for &j in &out_adj[i] {
                in_degree[j] -= 1;
                if in_degree[j] == 0 {
                    queue.push(j);
                }
            }
        }
        seen == n
    }

    /// Check every structural invariant. Mutation, crossover and transfer
    /// are required to keep all of these true.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));

        if self.format_version != GENOME_FORMAT_VERSION {
            return fail(format!("unsupported format_version {}", self.format_version));
        }
        if !self.nodes.windows(2).all(|w| w[0].id < w[1].id) {
            return fail("node ids not strictly increasing".into());
        }
        if !self.edges.windows(2).all(|w| w[0].id < w[1].id) {
            return fail("edge ids not strictly increasing".into());
        }

        for (kind, params, label) in [
            (NodeKind::Input, &self.input_params, "input"),
            (NodeKind::Output, &self.output_params, "output"),
        ] {
            let bound: Vec<&String> = self
                .nodes
                .iter()
                .filter(|n| n.kind == kind)
                .map(|n| n.param_name.as_ref().expect("io node without param"))
                .collect();
            if bound.len() != params.len() {
                return fail(format!(
                    "{} {label} nodes for {} {label} params",
                    bound.len(),
                    params.len()
                ));
            }
            for p in params {
                if bound.iter().filter(|b| **b == p).count() != 1 {
                    return fail(format!("{label} param {p} not bound to exactly one node"));
                }
            }
        }

        for node in &self.nodes {
            match node.kind {
                NodeKind::Input => {
                    if node.depth != 0.0 {
                        return fail(format!("input node {:?} has depth {}", node.id, node.depth));
                    }
                    if !node.params.is_empty() {
                        return fail(format!("input node {:?} has parameters", node.id));
                    }
                }
                NodeKind::Output => {
                    if node.depth != 1.0 {
                        return fail(format!("output node {:?} has depth {}", node.id, node.depth));
                    }
                    if node.params.len() != node.cell_type.param_count() {
                        return fail(format!("output node {:?} parameter length", node.id));
                    }
                }
                NodeKind::Hidden => {
                    if !(node.depth > 0.0 && node.depth < 1.0) {
                        return fail(format!("hidden node {:?} has depth {}", node.id, node.depth));
                    }
                    if node.param_name.is_some() {
                        return fail(format!("hidden node {:?} has a param name", node.id));
                    }
                    if node.params.len() != node.cell_type.param_count() {
                        return fail(format!("hidden node {:?} parameter length", node.id));
                    }
                }
            }
            if !node.params.iter().all(|p| p.is_finite()) {
                return fail(format!("node {:?} has non-finite parameters", node.id));
            }
        }

        let mut enabled_keys = Vec::new();
        for edge in &self.edges {
            let (Some(src), Some(tgt)) = (self.node(edge.source), self.node(edge.target)) else {
                return fail(format!("edge {:?} references a missing node", edge.id));
            };
            if edge.recurrent {
                if edge.time_skip < 1 || edge.time_skip > MAX_TIME_SKIP {
                    return fail(format!("edge {:?} time_skip {}", edge.id, edge.time_skip));
                }
            } else {
                if edge.time_skip != 0 {
                    return fail(format!("feedforward edge {:?} has a time_skip", edge.id));
                }
                if src.depth >= tgt.depth {
                    return fail(format!(
                        "feedforward edge {:?} does not increase depth ({} -> {})",
                        edge.id, src.depth, tgt.depth
                    ));
                }
            }
            if !edge.weight.is_finite() {
                return fail(format!("edge {:?} has a non-finite weight", edge.id));
            }
            if edge.enabled {
                if !src.enabled || !tgt.enabled {
                    return fail(format!("enabled edge {:?} touches a disabled node", edge.id));
                }
                enabled_keys.push(edge.key());
            }
        }
        enabled_keys.sort();
        if enabled_keys.windows(2).any(|w| w[0] == w[1]) {
            return fail("duplicate enabled edge".into());
        }

        if let Some(f) = self.fitness {
            if f.is_nan() || f < 0.0 {
                return fail(format!("fitness {f}"));
            }
        }

        if !self.feedforward_acyclic() {
            return fail("enabled feedforward subgraph has a cycle".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Parse and validate a genome file. Nodes and edges may appear in any
    /// order in the file and are normalized to id order. Malformed input
    /// yields a parse error carrying the offending location, never a panic.
    pub fn from_json(bytes: &[u8]) -> Result<Genome> {
        let mut genome: Genome = serde_json::from_slice(bytes)?;
        genome.nodes.sort_by_key(|n| n.id);
        genome.edges.sort_by_key(|e| e.id);
        genome.validate()?;
        Ok(genome)
    }
}

/// Mean and population standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// JSON cannot represent non-finite numbers, but a failed-training fitness
/// is `+inf`; encode non-finite values as strings.
mod fitness_repr {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match value {
            None => ser.serialize_none(),
            Some(f) if f.is_finite() => ser.serialize_f64(*f),
            Some(f) if f.is_nan() => ser.serialize_str("nan"),
            Some(f) if *f > 0.0 => ser.serialize_str("inf"),
            Some(_) => ser.serialize_str("-inf"),
        }
    }

    struct FitnessVisitor;

    impl<'de> Visitor<'de> for FitnessVisitor {
        type Value = Option<f64>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number, null, or \"inf\"/\"-inf\"/\"nan\"")
        }

        fn visit_none<E>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_unit<E>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_some<D: Deserializer<'de>>(self, de: D) -> Result<Self::Value, D::Error> {
            de.deserialize_any(FitnessVisitor)
        }

        fn visit_f64<E>(self, v: f64) -> Result<Self::Value, E> {
            Ok(Some(v))
        }

        fn visit_u64<E>(self, v: u64) -> Result<Self::Value, E> {
            Ok(Some(v as f64))
        }

        fn visit_i64<E>(self, v: i64) -> Result<Self::Value, E> {
            Ok(Some(v as f64))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            match v {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                "nan" => Ok(Some(f64::NAN)),
                other => Err(E::custom(format!("unknown fitness value {other:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        de.deserialize_option(FitnessVisitor)
    }
}
