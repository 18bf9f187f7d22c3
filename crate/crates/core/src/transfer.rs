//! Seed-network adaptation: reshape a trained genome so it can be evolved
//! further on a dataset with different input/output channels.
//!
//! The pipeline captures the seed network's weight and degree statistics
//! first, then prunes inputs/outputs missing from the target schema,
//! disables vestigial hidden structure (keeping it recoverable by later
//! enable mutations), adds nodes for the new channels and wires them in:
//!
//! - `astl`: every new input connects to all outputs, every new output
//!   connects from all inputs.
//! - `nastl`: connection counts are drawn from the seed network's own
//!   fan-out/fan-in distributions, `max(1, N(mu, sigma))`, against shuffled
//!   pools of enabled hidden and boundary nodes.
//! - `astl_plus_nastl`: the union of both wiring patterns.
//!
//! New weights come either from U(-0.5, 0.5) or from the seed's weight
//! distribution N(mu_w, sigma_w) ("epigenetic" initialization).

use crate::error::{Error, Result};
use crate::genome::{Edge, Genome, IdAllocator, NetworkStats, Node, NodeId, NodeKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Astl,
    Nastl,
    AstlPlusNastl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    Uniform,
    Epigenetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub target_input_params: Vec<String>,
    pub target_output_params: Vec<String>,
    pub strategy: Strategy,
    pub weight_init: WeightInit,
}

impl TransferSpec {
    pub fn validate(&self) -> Result<()> {
        for (label, list) in [
            ("input", &self.target_input_params),
            ("output", &self.target_output_params),
        ] {
            if list.is_empty() {
                return Err(Error::invalid(format!("empty target {label} list")));
            }
            let mut sorted = list.clone();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate target {label} param")));
            }
        }
        Ok(())
    }
}

/// What an adaptation did to the seed network, plus the statistics that
/// drove it (captured from the unmodified seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub strategy: Strategy,
    pub weight_init: WeightInit,
    pub stats: NetworkStats,
    pub inputs_removed: Vec<String>,
    pub outputs_removed: Vec<String>,
    pub inputs_added: Vec<String>,
    pub outputs_added: Vec<String>,
    pub hidden_disabled: usize,
    pub edges_disabled: usize,
    pub edges_added: usize,
}

impl fmt::Display for SurgeryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "strategy: {:?}, weight init: {:?}", self.strategy, self.weight_init)?;
        writeln!(
            f,
            "seed stats: mu_w={:.6} sigma_w={:.6} mu_o={:.3} sigma_o={:.3} mu_i={:.3} sigma_i={:.3}",
            self.stats.mu_w,
            self.stats.sigma_w,
            self.stats.mu_o,
            self.stats.sigma_o,
            self.stats.mu_i,
            self.stats.sigma_i
        )?;
        writeln!(f, "inputs removed ({}): {}", self.inputs_removed.len(), self.inputs_removed.join(", "))?;
        writeln!(f, "inputs added ({}): {}", self.inputs_added.len(), self.inputs_added.join(", "))?;
        writeln!(f, "outputs removed ({}): {}", self.outputs_removed.len(), self.outputs_removed.join(", "))?;
        writeln!(f, "outputs added ({}): {}", self.outputs_added.len(), self.outputs_added.join(", "))?;
        writeln!(f, "vestigial hidden nodes disabled: {}", self.hidden_disabled)?;
        writeln!(f, "vestigial edges disabled: {}", self.edges_disabled)?;
        writeln!(f, "edges added: {}", self.edges_added)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneReport {
    pub inputs_removed: Vec<String>,
    pub outputs_removed: Vec<String>,
    pub hidden_disabled: usize,
    pub edges_disabled: usize,
}

/// Remove input/output nodes whose channel is absent from the target
/// lists, then disable (never delete) every hidden node and edge that is no
/// longer both forward- and backward-reachable. Disabled structure can be
/// reconnected later by enable mutations.
pub fn remove_unused(
    genome: &mut Genome,
    target_inputs: &[String],
    target_outputs: &[String],
) -> PruneReport {
    let mut report = PruneReport::default();

    let mut removed_nodes: Vec<NodeId> = Vec::new();
    genome.nodes.retain(|node| {
        let keep = match node.kind {
            NodeKind::Input => {
                target_inputs.contains(node.param_name.as_ref().expect("input param"))
            }
            NodeKind::Output => {
                target_outputs.contains(node.param_name.as_ref().expect("output param"))
            }
            NodeKind::Hidden => true,
        };
        if !keep {
            removed_nodes.push(node.id);
            match node.kind {
                NodeKind::Input => report.inputs_removed.push(node.param_name.clone().unwrap()),
                NodeKind::Output => report.outputs_removed.push(node.param_name.clone().unwrap()),
                NodeKind::Hidden => unreachable!(),
            }
        }
        keep
    });
    genome
        .edges
        .retain(|e| !removed_nodes.contains(&e.source) && !removed_nodes.contains(&e.target));
    genome.input_params.retain(|p| target_inputs.contains(p));
    genome.output_params.retain(|p| target_outputs.contains(p));

    genome.mark_reachability();
    for node in &mut genome.nodes {
        if node.kind == NodeKind::Hidden
            && node.enabled
            && !(node.forward_reachable && node.backward_reachable)
        {
            node.enabled = false;
            report.hidden_disabled += 1;
        }
    }
    for edge in &mut genome.edges {
        if edge.enabled && !(edge.forward_reachable && edge.backward_reachable) {
            edge.enabled = false;
            report.edges_disabled += 1;
        }
    }
    genome.mark_reachability();
    report
}

/// `max(1, N(mu, sigma))` rounded half-away-from-zero: the connection
/// count for one new node.
pub fn sample_connection_count<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> usize {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let draw = Normal::new(mu, sigma).expect("valid normal").sample(rng);
    let rounded = draw.round();
    if rounded < 1.0 {
        1
    } else {
        rounded as usize
    }
}

/// One draw from the seed network's weight distribution N(mu_w, sigma_w).
pub fn epigenetic_weight<R: Rng + ?Sized>(stats: &NetworkStats, rng: &mut R) -> f64 {
    Normal::new(stats.mu_w, stats.sigma_w).expect("valid normal").sample(rng)
}

fn new_weight<R: Rng + ?Sized>(init: WeightInit, stats: &NetworkStats, rng: &mut R) -> f64 {
    match init {
        WeightInit::Uniform => rng.random_range(-0.5..0.5),
        WeightInit::Epigenetic => epigenetic_weight(stats, rng),
    }
}

/// Wire each new input node to `max(1, N(mu_o, sigma_o))` distinct nodes
/// drawn from a shuffled pool of enabled hidden and output nodes. Counts
/// exceeding the pool are clamped to the pool size; edges that already
/// exist are suppressed. Returns the number of edges added.
pub fn nastl_connect_inputs<R: Rng + ?Sized>(
    genome: &mut Genome,
    new_inputs: &[NodeId],
    stats: &NetworkStats,
    weight_init: WeightInit,
    ids: &mut IdAllocator,
    rng: &mut R,
) -> Result<usize> {
    if new_inputs.is_empty() {
        return Ok(0);
    }
    let pool: Vec<NodeId> = genome
        .nodes
        .iter()
        .filter(|n| n.enabled && (n.kind == NodeKind::Hidden || n.kind == NodeKind::Output))
        .map(|n| n.id)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyNetwork("no enabled hidden or output nodes to connect inputs to".into()));
    }

    let mut added = 0;
    for &input in new_inputs {
        let count = sample_connection_count(stats.mu_o, stats.sigma_o, rng).min(pool.len());
        let mut shuffled = pool.clone();
        shuffled.shuffle(rng);
        for &target in shuffled.iter().take(count) {
            if genome.enabled_edge_with_key((input, target, false, 0)) {
                continue;
            }
            let weight = new_weight(weight_init, stats, rng);
            genome.push_edge(Edge::feedforward(ids.edge_id(), input, target, weight));
            added += 1;
        }
    }
    Ok(added)
}

/// Mirror of [`nastl_connect_inputs`]: each new output node receives
/// `max(1, N(mu_i, sigma_i))` incoming feedforward edges from a shuffled
/// pool of enabled hidden and input nodes.
pub fn nastl_connect_outputs<R: Rng + ?Sized>(
    genome: &mut Genome,
    new_outputs: &[NodeId],
    stats: &NetworkStats,
    weight_init: WeightInit,
    ids: &mut IdAllocator,
    rng: &mut R,
) -> Result<usize> {
    if new_outputs.is_empty() {
        return Ok(0);
    }
    let pool: Vec<NodeId> = genome
        .nodes
        .iter()
        .filter(|n| n.enabled && (n.kind == NodeKind::Hidden || n.kind == NodeKind::Input))
        .map(|n| n.id)
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptyNetwork("no enabled hidden or input nodes to connect outputs from".into()));
    }

    let mut added = 0;
    for &output in new_outputs {
        let count = sample_connection_count(stats.mu_i, stats.sigma_i, rng).min(pool.len());
        let mut shuffled = pool.clone();
        shuffled.shuffle(rng);
        for &source in shuffled.iter().take(count) {
            if genome.enabled_edge_with_key((source, output, false, 0)) {
                continue;
            }
            let weight = new_weight(weight_init, stats, rng);
            genome.push_edge(Edge::feedforward(ids.edge_id(), source, output, weight));
            added += 1;
        }
    }
    Ok(added)
}

/// Full wiring: every new input to all outputs, all inputs to every new
/// output, duplicates suppressed.
fn astl_wire<R: Rng + ?Sized>(
    genome: &mut Genome,
    new_inputs: &[NodeId],
    new_outputs: &[NodeId],
    stats: &NetworkStats,
    weight_init: WeightInit,
    ids: &mut IdAllocator,
    rng: &mut R,
) -> usize {
    let outputs: Vec<NodeId> = genome.output_nodes().map(|n| n.id).collect();
    let inputs: Vec<NodeId> = genome.input_nodes().map(|n| n.id).collect();
    let mut added = 0;
    for &input in new_inputs {
        for &output in &outputs {
            if genome.enabled_edge_with_key((input, output, false, 0)) {
                continue;
            }
            let weight = new_weight(weight_init, stats, rng);
            genome.push_edge(Edge::feedforward(ids.edge_id(), input, output, weight));
            added += 1;
        }
    }
    for &output in new_outputs {
        for &input in &inputs {
            if genome.enabled_edge_with_key((input, output, false, 0)) {
                continue;
            }
            let weight = new_weight(weight_init, stats, rng);
            genome.push_edge(Edge::feedforward(ids.edge_id(), input, output, weight));
            added += 1;
        }
    }
    added
}

/// Adapt a trained seed genome to the target schema. Statistics are
/// captured from the unmodified seed, pruning and wiring run per the
/// spec'd strategy, and the result is ready to seed island populations.
/// The adapted genome's fitness is cleared; it must be retrained.
pub fn adapt<R: Rng + ?Sized>(
    genome: Genome,
    spec: &TransferSpec,
    rng: &mut R,
) -> Result<(Genome, SurgeryReport)> {
    spec.validate()?;
    let mut genome = genome;

    // Capture before any structural change.
    let stats = genome.network_stats()?;

    let prune = remove_unused(&mut genome, &spec.target_input_params, &spec.target_output_params);

    let mut ids = IdAllocator::after(&genome);
    let mut new_inputs: Vec<NodeId> = Vec::new();
    let mut new_input_names: Vec<String> = Vec::new();
    for name in &spec.target_input_params {
        if !genome.input_params.contains(name) {
            let id = ids.node_id();
            genome.push_node(Node::input(id, name));
            new_inputs.push(id);
            new_input_names.push(name.clone());
        }
    }
    let mut new_outputs: Vec<NodeId> = Vec::new();
    let mut new_output_names: Vec<String> = Vec::new();
    for name in &spec.target_output_params {
        if !genome.output_params.contains(name) {
            let id = ids.node_id();
            let bias = new_weight(spec.weight_init, &stats, rng);
            genome.push_node(Node::output(id, name, bias));
            new_outputs.push(id);
            new_output_names.push(name.clone());
        }
    }
    genome.input_params = spec.target_input_params.clone();
    genome.output_params = spec.target_output_params.clone();

    let mut edges_added = 0;
    match spec.strategy {
        Strategy::Astl => {
            edges_added +=
                astl_wire(&mut genome, &new_inputs, &new_outputs, &stats, spec.weight_init, &mut ids, rng);
        }
        Strategy::Nastl => {
            edges_added += nastl_connect_inputs(
                &mut genome, &new_inputs, &stats, spec.weight_init, &mut ids, rng,
            )?;
            edges_added += nastl_connect_outputs(
                &mut genome, &new_outputs, &stats, spec.weight_init, &mut ids, rng,
            )?;
        }
        Strategy::AstlPlusNastl => {
            edges_added +=
                astl_wire(&mut genome, &new_inputs, &new_outputs, &stats, spec.weight_init, &mut ids, rng);
            edges_added += nastl_connect_inputs(
                &mut genome, &new_inputs, &stats, spec.weight_init, &mut ids, rng,
            )?;
            edges_added += nastl_connect_outputs(
                &mut genome, &new_outputs, &stats, spec.weight_init, &mut ids, rng,
            )?;
        }
    }

    genome.mark_reachability();
    genome.fitness = None;
    genome.metadata.parents = vec![genome.metadata.genome_id];
    genome.validate()?;

    Ok((
        genome,
        SurgeryReport {
            strategy: spec.strategy,
            weight_init: spec.weight_init,
            stats,
            inputs_removed: prune.inputs_removed,
            outputs_removed: prune.outputs_removed,
            inputs_added: new_input_names,
            outputs_added: new_output_names,
            hidden_disabled: prune.hidden_disabled,
            edges_disabled: prune.edges_disabled,
            edges_added,
        },
    ))
}

/// Plain ASTL adaptation with the requested weight initialization.
pub fn astl_adapt<R: Rng + ?Sized>(
    genome: Genome,
    target_inputs: &[String],
    target_outputs: &[String],
    weight_init: WeightInit,
    rng: &mut R,
) -> Result<(Genome, SurgeryReport)> {
    adapt(
        genome,
        &TransferSpec {
            target_input_params: target_inputs.to_vec(),
            target_output_params: target_outputs.to_vec(),
            strategy: Strategy::Astl,
            weight_init,
        },
        rng,
    )
}
