//! Crossover of two trained genomes.
//!
//! The child starts as a copy of the more-fit parent (all of its structure,
//! enabled and disabled). Structure present in both parents, matched by id
//! (unique per engine run), has its weights blended; enabled structure
//! found only in the less-fit parent is carried over with probability 0.5,
//! disabled on arrival if it would duplicate a live edge, touch a disabled
//! endpoint, or break the feedforward depth ordering.

use crate::error::{Error, Result};
use crate::genome::{Edge, Genome, Node};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How weights shared by both parents combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBlend {
    /// `w = w_fit + r * (w_other - w_fit)` with `r ~ U(-0.5, 1.5)`, sampled
    /// per weight: the child explores the line through both parents.
    Lamarckian,
    /// Plain average of the two parents' weights.
    Average,
}

fn blend<R: Rng + ?Sized>(mode: WeightBlend, fit: f64, other: f64, rng: &mut R) -> f64 {
    match mode {
        WeightBlend::Lamarckian => {
            let r: f64 = rng.random_range(-0.5..1.5);
            fit + r * (other - fit)
        }
        WeightBlend::Average => (fit + other) / 2.0,
    }
}

pub fn crossover<R: Rng + ?Sized>(
    first: &Genome,
    second: &Genome,
    mode: WeightBlend,
    rng: &mut R,
) -> Result<Genome> {
    if first.input_params != second.input_params || first.output_params != second.output_params {
        return Err(Error::invalid("crossover parents have incompatible parameter lists"));
    }
    let (Some(f1), Some(f2)) = (first.fitness, second.fitness) else {
        return Err(Error::invalid("crossover parents must be trained"));
    };
    let (best, other) = if f1 <= f2 { (first, second) } else { (second, first) };

    let mut child = best.clone();
    child.fitness = None;
    child.metadata.parents = vec![best.metadata.genome_id, other.metadata.genome_id];

    // Blend weights of structure present in both parents.
    for node in &mut child.nodes {
        if let Some(other_node) = other.node(node.id) {
            if other_node.cell_type == node.cell_type {
                for (p, q) in node.params.iter_mut().zip(&other_node.params) {
                    *p = blend(mode, *p, *q, rng);
                }
            }
        }
    }
    for edge in &mut child.edges {
        if let Some(other_idx) = other.edge_index(edge.id) {
            let other_edge = &other.edges[other_idx];
            if other_edge.key() == edge.key() {
                edge.weight = blend(mode, edge.weight, other_edge.weight, rng);
            }
        }
    }

    // Carry over enabled disjoint structure from the less-fit parent.
    // Additions are staged and merged at the end: the id lookups below
    // binary-search the child and are only valid while it stays sorted.
    let staged_nodes: Vec<Node> = other
        .nodes
        .iter()
        .filter(|n| n.enabled && child.node(n.id).is_none())
        .filter(|_| rng.random_range(0.0..1.0) < 0.5)
        .map(|node| {
            let mut copy = node.clone();
            copy.forward_reachable = false;
            copy.backward_reachable = false;
            copy
        })
        .collect();
    child.nodes.extend(staged_nodes);
    child.nodes.sort_by_key(|n| n.id);

    let mut staged_edges: Vec<Edge> = Vec::new();
    for edge in other.edges.iter().filter(|e| e.enabled) {
        if child.edge_index(edge.id).is_some() || rng.random_range(0.0..1.0) >= 0.5 {
            continue;
        }
        let (Some(src), Some(tgt)) = (child.node(edge.source), child.node(edge.target)) else {
            continue;
        };
        let mut copy = edge.clone();
        copy.forward_reachable = false;
        copy.backward_reachable = false;
        copy.enabled = src.enabled
            && tgt.enabled
            && (copy.recurrent || src.depth < tgt.depth)
            && !child.enabled_edge_with_key(copy.key())
            && !staged_edges.iter().any(|e| e.enabled && e.key() == copy.key());
        staged_edges.push(copy);
    }
    child.edges.extend(staged_edges);
    child.edges.sort_by_key(|e| e.id);

    Ok(child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::Genome;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn self_crossover_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Genome::minimal(&names("in", 3), &names("out", 2), &mut rng).unwrap();
        g.fitness = Some(0.2);
        let child = crossover(&g, &g, WeightBlend::Lamarckian, &mut rng).unwrap();
        assert_eq!(child.nodes, g.nodes);
        assert_eq!(child.edges, g.edges);
        assert_eq!(child.fitness, None);
    }

    #[test]
    fn shared_weights_blend_within_extended_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Genome::minimal(&names("in", 2), &names("out", 2), &mut rng).unwrap();
        let mut b = a.clone();
        a.fitness = Some(0.1);
        b.fitness = Some(0.3);
        for e in &mut b.edges {
            e.weight += 0.2;
        }
        for _ in 0..50 {
            let child = crossover(&a, &b, WeightBlend::Lamarckian, &mut rng).unwrap();
            for (i, edge) in child.edges.iter().enumerate() {
                let (w1, w2) = (a.edges[i].weight, b.edges[i].weight);
                let lo = w1.min(w2) - 0.5 * (w2 - w1).abs();
                let hi = w1.max(w2) + 0.5 * (w2 - w1).abs();
                assert!(
                    edge.weight >= lo && edge.weight <= hi,
                    "weight {} outside [{lo}, {hi}]",
                    edge.weight
                );
            }
            child.validate().unwrap();
        }
    }

    #[test]
    fn average_blend_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Genome::minimal(&names("in", 1), &names("out", 1), &mut rng).unwrap();
        let mut b = a.clone();
        a.fitness = Some(0.1);
        b.fitness = Some(0.2);
        a.edges[0].weight = 0.0;
        b.edges[0].weight = 0.4;
        let child = crossover(&a, &b, WeightBlend::Average, &mut rng).unwrap();
        assert_eq!(child.edges[0].weight, 0.2);
    }

    #[test]
    fn incompatible_parents_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = Genome::minimal(&names("in", 2), &names("out", 1), &mut rng).unwrap();
        let mut b = Genome::minimal(&names("x", 2), &names("out", 1), &mut rng).unwrap();
        a.fitness = Some(0.1);
        b.fitness = Some(0.1);
        assert!(crossover(&a, &b, WeightBlend::Lamarckian, &mut rng).is_err());

        let untrained = a.clone();
        let mut c = a.clone();
        c.fitness = None;
        assert!(crossover(&untrained, &c, WeightBlend::Lamarckian, &mut rng).is_err());
    }
}
