//! Shared test oracles: independent reimplementations of the pieces the
//! library is checked against. Everything here deliberately avoids the
//! crate's own evaluation paths: reachability is a dense fixpoint instead
//! of a BFS, cell formulas are transcribed from scratch, and the graph
//! evaluator walks raw edge lists.

#![allow(dead_code)]

use evorn::cells::CellType;
use evorn::data::Series;
use evorn::genome::{Edge, EdgeId, Genome, IdAllocator, Node, NodeId, NodeKind};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

// ---------------------------------------------------------------------------
// Random genome generator
// ---------------------------------------------------------------------------

pub struct GenomeShape {
    pub inputs: usize,
    pub outputs: usize,
    pub hidden: usize,
    pub extra_ff_edges: usize,
    pub recurrent_edges: usize,
    pub max_time_skip: u32,
    /// Fraction of hidden nodes to disable afterwards.
    pub disable_nodes: f64,
    /// Fraction of edges to disable afterwards.
    pub disable_edges: f64,
}

impl Default for GenomeShape {
    fn default() -> Self {
        GenomeShape {
            inputs: 3,
            outputs: 2,
            hidden: 5,
            extra_ff_edges: 6,
            recurrent_edges: 4,
            max_time_skip: 5,
            disable_nodes: 0.0,
            disable_edges: 0.0,
        }
    }
}

/// Build a structurally valid random genome: a minimal base plus random
/// hidden nodes of every cell type, extra feedforward edges, recurrent
/// edges (self-loops allowed), and optional disabled structure.
pub fn random_genome(shape: &GenomeShape, rng: &mut ChaCha8Rng) -> Genome {
    let mut genome =
        Genome::minimal(&names("in", shape.inputs), &names("out", shape.outputs), rng).unwrap();
    let mut ids = IdAllocator::after(&genome);

    for _ in 0..shape.hidden {
        let cell = *CellType::ALL.choose(rng).unwrap();
        let depth = rng.random_range(0.05..0.95);
        let params: Vec<f64> = (0..cell.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let id = ids.node_id();
        genome.push_node(Node::hidden(id, cell, depth, params));

        // Keep every hidden node wired so the graph stays interesting.
        let below: Vec<NodeId> = genome
            .nodes
            .iter()
            .filter(|n| n.depth < depth)
            .map(|n| n.id)
            .collect();
        let above: Vec<NodeId> = genome
            .nodes
            .iter()
            .filter(|n| n.depth > depth)
            .map(|n| n.id)
            .collect();
        let src = *below.choose(rng).unwrap();
        let tgt = *above.choose(rng).unwrap();
        genome.push_edge(Edge::feedforward(ids.edge_id(), src, id, rng.random_range(-1.0..1.0)));
        genome.push_edge(Edge::feedforward(ids.edge_id(), id, tgt, rng.random_range(-1.0..1.0)));
    }

    for _ in 0..shape.extra_ff_edges {
        for _ in 0..20 {
            let a = genome.nodes.choose(rng).unwrap();
            let b = genome.nodes.choose(rng).unwrap();
            if a.depth < b.depth && !genome.enabled_edge_with_key((a.id, b.id, false, 0)) {
                let (a, b) = (a.id, b.id);
                genome.push_edge(Edge::feedforward(ids.edge_id(), a, b, rng.random_range(-1.0..1.0)));
                break;
            }
        }
    }

    for _ in 0..shape.recurrent_edges {
        for _ in 0..20 {
            let a = genome.nodes.choose(rng).unwrap().id;
            let b = genome
                .nodes
                .iter()
                .filter(|n| n.kind != NodeKind::Input)
                .map(|n| n.id)
                .collect::<Vec<_>>();
            let b = *b.choose(rng).unwrap();
            let skip = rng.random_range(1..=shape.max_time_skip);
            if !genome.enabled_edge_with_key((a, b, true, skip)) {
                genome.push_edge(Edge::recurrent(ids.edge_id(), a, b, rng.random_range(-1.0..1.0), skip));
                break;
            }
        }
    }

    // Disable structure (nodes cascade to their incident edges).
    let hidden_ids: Vec<NodeId> =
        genome.nodes.iter().filter(|n| n.kind == NodeKind::Hidden).map(|n| n.id).collect();
    for id in hidden_ids {
        if rng.random_range(0.0..1.0) < shape.disable_nodes {
            genome.node_mut(id).unwrap().enabled = false;
            for edge in &mut genome.edges {
                if edge.source == id || edge.target == id {
                    edge.enabled = false;
                }
            }
        }
    }
    let edge_ids: Vec<EdgeId> = genome.edges.iter().map(|e| e.id).collect();
    for id in edge_ids {
        if rng.random_range(0.0..1.0) < shape.disable_edges {
            let idx = genome.edge_index(id).unwrap();
            genome.edges[idx].enabled = false;
        }
    }

    genome.mark_reachability();
    genome.validate().expect("generator produced an invalid genome");
    genome
}

// ---------------------------------------------------------------------------
// Reachability oracle (dense fixpoint, not a BFS)
// ---------------------------------------------------------------------------

pub struct ReachabilityOracle {
    /// (forward, backward) per node, aligned to genome.nodes.
    pub nodes: Vec<(bool, bool)>,
    /// (forward, backward) per edge, aligned to genome.edges.
    pub edges: Vec<(bool, bool)>,
}

pub fn reachability_oracle(genome: &Genome) -> ReachabilityOracle {
    let n = genome.nodes.len();
    let live = |edge: &Edge| {
        edge.enabled
            && genome.node(edge.source).is_some_and(|s| s.enabled)
            && genome.node(edge.target).is_some_and(|t| t.enabled)
    };

    let mut fwd: Vec<bool> = genome
        .nodes
        .iter()
        .map(|node| node.enabled && node.kind == NodeKind::Input)
        .collect();
    loop {
        let mut changed = false;
        for edge in genome.edges.iter().filter(|e| live(e)) {
            let s = genome.node_index(edge.source).unwrap();
            let t = genome.node_index(edge.target).unwrap();
            if fwd[s] && !fwd[t] {
                fwd[t] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut bwd: Vec<bool> = genome
        .nodes
        .iter()
        .map(|node| node.enabled && node.kind == NodeKind::Output)
        .collect();
    loop {
        let mut changed = false;
        for edge in genome.edges.iter().filter(|e| live(e)) {
            let s = genome.node_index(edge.source).unwrap();
            let t = genome.node_index(edge.target).unwrap();
            if bwd[t] && !bwd[s] {
                bwd[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let edges = genome
        .edges
        .iter()
        .map(|edge| {
            if live(edge) {
                let s = genome.node_index(edge.source).unwrap();
                let t = genome.node_index(edge.target).unwrap();
                (fwd[s], bwd[t])
            } else {
                (false, false)
            }
        })
        .collect();
    ReachabilityOracle { nodes: (0..n).map(|i| (fwd[i], bwd[i])).collect(), edges }
}

// ---------------------------------------------------------------------------
// Reference cell formulas (independent transcription)
// ---------------------------------------------------------------------------

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Plain transcription of each published cell update. Returns the output
/// and the new LSTM cell state.
pub fn reference_cell_forward(cell: CellType, p: &[f64], x: f64, h: f64, c: f64) -> (f64, f64) {
    match cell {
        CellType::Simple => ((x + p[0]).tanh(), 0.0),
        CellType::DeltaRnn => {
            let (alpha, beta1, beta2, v, b_z, b_r) = (p[0], p[1], p[2], p[3], p[4], p[5]);
            let z = (alpha * (v * h) * x + beta1 * (v * h) + beta2 * x + b_z).tanh();
            let r = sig(x + b_r);
            (r * h + (1.0 - r) * z, 0.0)
        }
        CellType::Gru => {
            let z = sig(p[0] * x + p[1] * h + p[2]);
            let r = sig(p[3] * x + p[4] * h + p[5]);
            let cand = (p[6] * x + p[7] * (r * h) + p[8]).tanh();
            ((1.0 - z) * h + z * cand, 0.0)
        }
        CellType::Lstm => {
            let i = sig(p[0] * x + p[1] * h + p[2]);
            let f = sig(p[3] * x + p[4] * h + p[5]);
            let o = sig(p[6] * x + p[7] * h + p[8]);
            let cand = (p[9] * x + p[10] * h + p[11]).tanh();
            let c_new = f * c + i * cand;
            (o * c_new.tanh(), c_new)
        }
        CellType::Mgu => {
            let f = sig(p[0] * x + p[1] * h + p[2]);
            let cand = (p[3] * x + p[4] * (f * h) + p[5]).tanh();
            ((1.0 - f) * h + f * cand, 0.0)
        }
        CellType::Ugrnn => {
            let g = sig(p[0] * x + p[1] * h + p[2]);
            let cand = (p[3] * x + p[4] * h + p[5]).tanh();
            (g * h + (1.0 - g) * cand, 0.0)
        }
    }
}

// ---------------------------------------------------------------------------
// Unrolled graph evaluator (uses the reference cells, raw edge scans)
// ---------------------------------------------------------------------------

pub fn unrolled_predict(genome: &Genome, schema: &[String], series: &Series) -> Vec<Vec<f64>> {
    let steps = series.len();
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(steps);

    // Node evaluation order: depth then id, non-inputs only.
    let mut order: Vec<&Node> = genome
        .nodes
        .iter()
        .filter(|n| n.enabled && n.kind != NodeKind::Input)
        .collect();
    order.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.id.cmp(&b.id)));

    let mut history: Vec<Vec<f64>> = vec![Vec::new(); genome.nodes.len()];
    let mut cell_state: Vec<f64> = vec![0.0; genome.nodes.len()];

    for t in 0..steps {
        for node in &genome.nodes {
            if node.kind == NodeKind::Input {
                let idx = genome.node_index(node.id).unwrap();
                let chan = schema.iter().position(|c| Some(c) == node.param_name.as_ref()).unwrap();
                history[idx].push(series.channels[chan][t]);
            }
        }
        for node in &order {
            let idx = genome.node_index(node.id).unwrap();
            let mut x = 0.0;
            for edge in &genome.edges {
                if !edge.enabled || edge.target != node.id {
                    continue;
                }
                let src_enabled = genome.node(edge.source).unwrap().enabled;
                if !src_enabled {
                    continue;
                }
                let s = genome.node_index(edge.source).unwrap();
                let value = if edge.recurrent {
                    let skip = edge.time_skip as usize;
                    if t >= skip { history[s][t - skip] } else { 0.0 }
                } else {
                    history[s][t]
                };
                x += edge.weight * value;
            }
            let h = if t > 0 { history[idx][t - 1] } else { 0.0 };
            let (y, c_new) = reference_cell_forward(node.cell_type, &node.params, x, h, cell_state[idx]);
            cell_state[idx] = c_new;
            history[idx].push(y);
        }
        let row = genome
            .output_params
            .iter()
            .map(|name| {
                let node = genome
                    .nodes
                    .iter()
                    .find(|n| n.kind == NodeKind::Output && n.param_name.as_ref() == Some(name))
                    .unwrap();
                let idx = genome.node_index(node.id).unwrap();
                history[idx][t]
            })
            .collect();
        outputs.push(row);
    }
    outputs
}

// ---------------------------------------------------------------------------
// Loss + finite differences
// ---------------------------------------------------------------------------

/// Pooled mean squared error of one series at the given offset, computed
/// from scratch on top of `evorn::trainer::predict`.
pub fn series_loss(genome: &Genome, schema: &[String], series: &Series, offset: usize) -> f64 {
    let predictions = evorn::trainer::predict(genome, schema, series).unwrap();
    let horizon = series.len() - offset;
    let out_channels: Vec<usize> = genome
        .output_params
        .iter()
        .map(|name| schema.iter().position(|c| c == name).unwrap())
        .collect();
    let mut total = 0.0;
    for (t, row) in predictions.iter().take(horizon).enumerate() {
        for (k, &chan) in out_channels.iter().enumerate() {
            let err = row[k] - series.channels[chan][t + offset];
            total += err * err;
        }
    }
    total / (horizon * out_channels.len()) as f64
}

/// Central finite differences of `series_loss` over every enabled weight.
pub fn fd_gradient(genome: &Genome, schema: &[String], series: &Series, offset: usize, h: f64) -> Vec<f64> {
    let params = genome.collect_params();
    let mut grad = vec![0.0; params.len()];
    let mut probe = genome.clone();
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += h;
        probe.apply_params(&plus);
        let up = series_loss(&probe, schema, series, offset);
        let mut minus = params.clone();
        minus[i] -= h;
        probe.apply_params(&minus);
        let down = series_loss(&probe, schema, series, offset);
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Random input series covering every channel a genome needs.
pub fn random_series(schema: &[String], steps: usize, rng: &mut ChaCha8Rng) -> Series {
    Series {
        name: "test".into(),
        channels: schema
            .iter()
            .map(|_| (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
    }
}

/// Schema for a genome: inputs then outputs.
pub fn genome_schema(genome: &Genome) -> Vec<String> {
    genome.input_params.iter().chain(genome.output_params.iter()).cloned().collect()
}
