//! Structural mutation operators.
//!
//! Exactly one operator is applied per mutation, chosen by configured
//! weights. Inherited structure keeps the parent's trained weights; new
//! structure draws weights and biases from N(mu_w, sigma_w) of the parent,
//! so children start near the parent's learned regime. An operator that is
//! inapplicable to the parent (nothing to disable, no edge slot free, ...)
//! is resampled; after ten failed picks the child falls back to a small
//! perturbation of every weight, which keeps the engine live on degenerate
//! genomes.

use super::EvolveConfig;
use crate::cells::{self, CellType};
use crate::genome::{Edge, Genome, IdAllocator, Node, NodeId, NodeKind};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    /// Copy the parent unchanged so local training refines it further.
    Clone,
    AddEdge,
    EnableEdge,
    AddRecurrentEdge,
    DisableEdge,
    SplitEdge,
    AddNode,
    EnableNode,
    DisableNode,
    SplitNode,
    MergeNode,
}

impl MutationOp {
    pub const ALL: [MutationOp; 11] = [
        MutationOp::Clone,
        MutationOp::AddEdge,
        MutationOp::EnableEdge,
        MutationOp::AddRecurrentEdge,
        MutationOp::DisableEdge,
        MutationOp::SplitEdge,
        MutationOp::AddNode,
        MutationOp::EnableNode,
        MutationOp::DisableNode,
        MutationOp::SplitNode,
        MutationOp::MergeNode,
    ];
}

/// Produce a child by applying one mutation operator to the parent.
/// Returns the operator that was applied, or `None` when every sampled
/// operator was inapplicable and the fallback perturbation ran instead.
pub fn mutate<R: Rng + ?Sized>(
    parent: &Genome,
    config: &EvolveConfig,
    ids: &mut IdAllocator,
    rng: &mut R,
) -> (Genome, Option<MutationOp>) {
    let mut child = parent.clone();
    child.fitness = None;
    child.metadata.parents = vec![parent.metadata.genome_id];

    // U(-0.5, 0.5)-equivalent sigma covers genomes too degenerate to have
    // weight statistics of their own.
    let (mu_w, sigma_w) = parent.weight_statistics().unwrap_or((0.0, 1.0 / 12f64.sqrt()));

    for _ in 0..10 {
        let op = pick_op(config, rng);
        if apply_op(op, &mut child, config, mu_w, sigma_w, ids, rng) {
            return (child, Some(op));
        }
    }

    perturb_all_weights(&mut child, sigma_w / 10.0, rng);
    (child, None)
}

fn pick_op<R: Rng + ?Sized>(config: &EvolveConfig, rng: &mut R) -> MutationOp {
    let roll: f64 = rng.random();
    let mut cumulative = 0.0;
    for &(op, weight) in &config.mutation_ops {
        cumulative += weight;
        if roll < cumulative {
            return op;
        }
    }
    config.mutation_ops.last().expect("validated non-empty op list").0
}

fn perturb_all_weights<R: Rng + ?Sized>(genome: &mut Genome, sigma: f64, rng: &mut R) {
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid normal");
    let params: Vec<f64> = genome.collect_params().iter().map(|p| p + noise.sample(rng)).collect();
    genome.apply_params(&params);
}

/// Apply `op` to `child`. Returns false without touching the child when
/// the operator is inapplicable.
fn apply_op<R: Rng + ?Sized>(
    op: MutationOp,
    child: &mut Genome,
    config: &EvolveConfig,
    mu_w: f64,
    sigma_w: f64,
    ids: &mut IdAllocator,
    rng: &mut R,
) -> bool {
    let weight_dist = Normal::new(mu_w, sigma_w).expect("valid normal");
    match op {
        MutationOp::Clone => true,

        MutationOp::AddEdge => {
            let mut candidates: Vec<(NodeId, NodeId)> = Vec::new();
            for a in child.nodes.iter().filter(|n| n.enabled) {
                for b in child.nodes.iter().filter(|n| n.enabled) {
                    if a.depth < b.depth && !child.enabled_edge_with_key((a.id, b.id, false, 0)) {
                        candidates.push((a.id, b.id));
                    }
                }
            }
            let Some(&(source, target)) = candidates.choose(rng) else { return false };
            let weight = weight_dist.sample(rng);
            child.push_edge(Edge::feedforward(ids.edge_id(), source, target, weight));
            true
        }

        MutationOp::EnableEdge => {
            let candidates: Vec<usize> = (0..child.edges.len())
                .filter(|&i| {
                    let e = &child.edges[i];
                    !e.enabled
                        && child.node(e.source).is_some_and(|n| n.enabled)
                        && child.node(e.target).is_some_and(|n| n.enabled)
                        && !child.enabled_edge_with_key(e.key())
                })
                .collect();
            let Some(&idx) = candidates.choose(rng) else { return false };
            child.edges[idx].enabled = true;
            true
        }

        MutationOp::AddRecurrentEdge => {
            let sources: Vec<NodeId> =
                child.nodes.iter().filter(|n| n.enabled).map(|n| n.id).collect();
            // Targets must consume input; recurrent edges into input nodes
            // would be dead weight.
            let targets: Vec<NodeId> = child
                .nodes
                .iter()
                .filter(|n| n.enabled && n.kind != NodeKind::Input)
                .map(|n| n.id)
                .collect();
            if sources.is_empty() || targets.is_empty() {
                return false;
            }
            let (lo, hi) = config.time_skip_range;
            for _ in 0..20 {
                let source = *sources.choose(rng).unwrap();
                let target = *targets.choose(rng).unwrap();
                let skip = rng.random_range(lo..=hi);
                if child.enabled_edge_with_key((source, target, true, skip)) {
                    continue;
                }
                let weight = weight_dist.sample(rng);
                child.push_edge(Edge::recurrent(ids.edge_id(), source, target, weight, skip));
                return true;
            }
            false
        }

        MutationOp::DisableEdge => {
            let enabled: Vec<usize> =
                (0..child.edges.len()).filter(|&i| child.edges[i].enabled).collect();
            // Never disable the last live edge.
            if enabled.len() < 2 {
                return false;
            }
            let &idx = enabled.choose(rng).unwrap();
            child.edges[idx].enabled = false;
            true
        }

        MutationOp::SplitEdge => {
            let candidates: Vec<usize> = (0..child.edges.len())
                .filter(|&i| child.edges[i].enabled && !child.edges[i].recurrent)
                .collect();
            let Some(&idx) = candidates.choose(rng) else { return false };
            let (source, target, src_depth, tgt_depth) = {
                let e = &child.edges[idx];
                (
                    e.source,
                    e.target,
                    child.node(e.source).unwrap().depth,
                    child.node(e.target).unwrap().depth,
                )
            };
            child.edges[idx].enabled = false;
            let cell = *CellType::ALL.choose(rng).unwrap();
            let params =
                cells::init_params(cell, config.forget_bias_boost, rng, |r| weight_dist.sample(r));
            let node_id = ids.node_id();
            child.push_node(Node::hidden(node_id, cell, (src_depth + tgt_depth) / 2.0, params));
            let w_in = weight_dist.sample(rng);
            let w_out = weight_dist.sample(rng);
            child.push_edge(Edge::feedforward(ids.edge_id(), source, node_id, w_in));
            child.push_edge(Edge::feedforward(ids.edge_id(), node_id, target, w_out));
            true
        }

        MutationOp::AddNode => {
            let depth = loop {
                let d: f64 = rng.random();
                if d > 0.0 && d < 1.0 {
                    break d;
                }
            };
            let mut below: Vec<NodeId> = child
                .nodes
                .iter()
                .filter(|n| n.enabled && n.depth < depth)
                .map(|n| n.id)
                .collect();
            let mut above: Vec<NodeId> = child
                .nodes
                .iter()
                .filter(|n| n.enabled && n.depth > depth)
                .map(|n| n.id)
                .collect();
            if below.is_empty() || above.is_empty() {
                return false;
            }
            let cell = *CellType::ALL.choose(rng).unwrap();
            let params =
                cells::init_params(cell, config.forget_bias_boost, rng, |r| weight_dist.sample(r));
            let node_id = ids.node_id();
            child.push_node(Node::hidden(node_id, cell, depth, params));

            let n_in = rng.random_range(1..=2usize).min(below.len());
            let n_out = rng.random_range(1..=2usize).min(above.len());
            below.shuffle(rng);
            above.shuffle(rng);
            for &source in below.iter().take(n_in) {
                let weight = weight_dist.sample(rng);
                child.push_edge(Edge::feedforward(ids.edge_id(), source, node_id, weight));
            }
            for &target in above.iter().take(n_out) {
                let weight = weight_dist.sample(rng);
                child.push_edge(Edge::feedforward(ids.edge_id(), node_id, target, weight));
            }
            true
        }

        MutationOp::EnableNode => {
            let candidates: Vec<NodeId> =
                child.nodes.iter().filter(|n| !n.enabled).map(|n| n.id).collect();
            let Some(&node_id) = candidates.choose(rng) else { return false };
            child.node_mut(node_id).unwrap().enabled = true;
            // Bring incident edges back where the far endpoint is live.
            for i in 0..child.edges.len() {
                let e = &child.edges[i];
                if e.enabled || (e.source != node_id && e.target != node_id) {
                    continue;
                }
                let other = if e.source == node_id { e.target } else { e.source };
                if child.node(other).is_some_and(|n| n.enabled)
                    && !child.enabled_edge_with_key(e.key())
                {
                    child.edges[i].enabled = true;
                }
            }
            true
        }

        MutationOp::DisableNode => {
            let candidates: Vec<NodeId> = child
                .nodes
                .iter()
                .filter(|n| n.enabled && n.kind == NodeKind::Hidden)
                .map(|n| n.id)
                .collect();
            let Some(&node_id) = candidates.choose(rng) else { return false };
            child.node_mut(node_id).unwrap().enabled = false;
            for edge in &mut child.edges {
                if edge.source == node_id || edge.target == node_id {
                    edge.enabled = false;
                }
            }
            true
        }

        MutationOp::SplitNode => split_node(child, ids, rng),

        MutationOp::MergeNode => merge_nodes(child, ids, rng),
    }
}

/// Replace one hidden node with two copies, splitting its incoming and
/// outgoing edges randomly between them. Each copy is guaranteed at least
/// one incoming and one outgoing edge (by duplicating one if needed). The
/// original node and its edges are disabled, not deleted.
fn split_node<R: Rng + ?Sized>(child: &mut Genome, ids: &mut IdAllocator, rng: &mut R) -> bool {
    let candidates: Vec<NodeId> = child
        .nodes
        .iter()
        .filter(|n| n.enabled && n.kind == NodeKind::Hidden)
        .filter(|n| {
            let has_in =
                child.edges.iter().any(|e| e.enabled && e.target == n.id && e.source != n.id);
            let has_out =
                child.edges.iter().any(|e| e.enabled && e.source == n.id && e.target != n.id);
            has_in && has_out
        })
        .map(|n| n.id)
        .collect();
    let Some(&node_id) = candidates.choose(rng) else { return false };
    let original = child.node(node_id).unwrap().clone();

    let incoming: Vec<Edge> = child
        .edges
        .iter()
        .filter(|e| e.enabled && e.target == node_id && e.source != node_id)
        .cloned()
        .collect();
    let outgoing: Vec<Edge> = child
        .edges
        .iter()
        .filter(|e| e.enabled && e.source == node_id && e.target != node_id)
        .cloned()
        .collect();
    let self_loops: Vec<Edge> = child
        .edges
        .iter()
        .filter(|e| e.enabled && e.source == node_id && e.target == node_id)
        .cloned()
        .collect();

    child.node_mut(node_id).unwrap().enabled = false;
    for edge in &mut child.edges {
        if edge.source == node_id || edge.target == node_id {
            edge.enabled = false;
        }
    }

    let copies = [ids.node_id(), ids.node_id()];
    for &copy in &copies {
        child.push_node(Node::hidden(copy, original.cell_type, original.depth, original.params.clone()));
    }

    let assign = |edges: &[Edge], rng: &mut R| -> Vec<(Edge, usize)> {
        let mut assigned: Vec<(Edge, usize)> =
            edges.iter().map(|e| (e.clone(), rng.random_range(0..2usize))).collect();
        for copy in 0..2 {
            if !assigned.iter().any(|(_, c)| *c == copy) {
                assigned.push((edges.choose(rng).unwrap().clone(), copy));
            }
        }
        assigned
    };
    for (edge, copy) in assign(&incoming, rng) {
        let mut e = edge;
        e.id = ids.edge_id();
        e.target = copies[copy];
        child.push_edge(e);
    }
    for (edge, copy) in assign(&outgoing, rng) {
        let mut e = edge;
        e.id = ids.edge_id();
        e.source = copies[copy];
        child.push_edge(e);
    }
    for edge in self_loops {
        let copy = copies[rng.random_range(0..2usize)];
        let mut e = edge;
        e.id = ids.edge_id();
        e.source = copy;
        e.target = copy;
        child.push_edge(e);
    }
    true
}

/// Merge two hidden nodes into one at their midpoint depth, carrying over
/// the union of their external edges (weights kept). Edges that would
/// violate the depth ordering at the new position are dropped, as are
/// edges between or within the merged pair. The originals are disabled.
fn merge_nodes<R: Rng + ?Sized>(child: &mut Genome, ids: &mut IdAllocator, rng: &mut R) -> bool {
    let mut hidden: Vec<NodeId> = child
        .nodes
        .iter()
        .filter(|n| n.enabled && n.kind == NodeKind::Hidden)
        .map(|n| n.id)
        .collect();
    if hidden.len() < 2 {
        return false;
    }
    hidden.shuffle(rng);
    let (a, b) = (hidden[0], hidden[1]);
    let depth = (child.node(a).unwrap().depth + child.node(b).unwrap().depth) / 2.0;
    let merged_pair = |id: NodeId| id == a || id == b;

    let mut incoming: Vec<Edge> = Vec::new();
    let mut outgoing: Vec<Edge> = Vec::new();
    for edge in child.edges.iter().filter(|e| e.enabled) {
        if merged_pair(edge.target) && !merged_pair(edge.source) {
            let depth_ok = edge.recurrent || child.node(edge.source).unwrap().depth < depth;
            if depth_ok && !incoming.iter().any(|e| e.source == edge.source && e.recurrent == edge.recurrent && e.time_skip == edge.time_skip) {
                incoming.push(edge.clone());
            }
        } else if merged_pair(edge.source) && !merged_pair(edge.target) {
            let depth_ok = edge.recurrent || depth < child.node(edge.target).unwrap().depth;
            if depth_ok && !outgoing.iter().any(|e| e.target == edge.target && e.recurrent == edge.recurrent && e.time_skip == edge.time_skip) {
                outgoing.push(edge.clone());
            }
        }
    }
    if incoming.is_empty() || outgoing.is_empty() {
        return false;
    }

    let template = child.node(a).unwrap().clone();
    for node_id in [a, b] {
        child.node_mut(node_id).unwrap().enabled = false;
    }
    for edge in &mut child.edges {
        if merged_pair(edge.source) || merged_pair(edge.target) {
            edge.enabled = false;
        }
    }

    let merged = ids.node_id();
    child.push_node(Node::hidden(merged, template.cell_type, depth, template.params));
    for edge in incoming {
        let mut e = edge;
        e.id = ids.edge_id();
        e.target = merged;
        child.push_edge(e);
    }
    for edge in outgoing {
        let mut e = edge;
        e.id = ids.edge_id();
        e.source = merged;
        child.push_edge(e);
    }
    true
}
