//! Transfer adaptation against independent oracles: pruning vs. the dense
//! reachability fixpoint, statistics capture ordering, wiring contracts
//! over randomized adaptations, and the epigenetic weight distribution.

mod common;

use common::{random_genome, reachability_oracle, GenomeShape};
use evorn::genome::{Genome, NodeKind};
use evorn::transfer::{adapt, remove_unused, Strategy, TransferSpec, WeightInit};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random sublist keeping at least `min` entries, in original order.
fn random_subset(items: &[String], min: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    loop {
        let subset: Vec<String> =
            items.iter().filter(|_| rng.random_range(0.0..1.0) < 0.6).cloned().collect();
        if subset.len() >= min {
            return subset;
        }
    }
}

#[test]
fn remove_unused_matches_bfs_prune_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A9A);
    for round in 0..50 {
        let shape = GenomeShape {
            inputs: rng.random_range(2..=5),
            outputs: rng.random_range(2..=4),
            hidden: rng.random_range(0..=12),
            extra_ff_edges: rng.random_range(0..=8),
            recurrent_edges: rng.random_range(0..=5),
            disable_nodes: 0.15,
            disable_edges: 0.1,
            ..Default::default()
        };
        let genome = random_genome(&shape, &mut rng);
        let keep_inputs = random_subset(&genome.input_params, 1, &mut rng);
        let keep_outputs = random_subset(&genome.output_params, 1, &mut rng);

        // Oracle: delete the same nodes by hand, then compute both-way
        // reachability with the dense fixpoint; expected enabled set is
        // "was enabled and still both-reachable".
        let mut expected = genome.clone();
        let removed: Vec<_> = expected
            .nodes
            .iter()
            .filter(|n| match n.kind {
                NodeKind::Input => !keep_inputs.contains(n.param_name.as_ref().unwrap()),
                NodeKind::Output => !keep_outputs.contains(n.param_name.as_ref().unwrap()),
                NodeKind::Hidden => false,
            })
            .map(|n| n.id)
            .collect();
        expected.nodes.retain(|n| !removed.contains(&n.id));
        expected.edges.retain(|e| !removed.contains(&e.source) && !removed.contains(&e.target));
        let oracle = reachability_oracle(&expected);
        let expected_nodes: Vec<(evorn::NodeId, bool)> = expected
            .nodes
            .iter()
            .zip(&oracle.nodes)
            .map(|(n, &(fwd, bwd))| {
                let enabled = match n.kind {
                    NodeKind::Hidden => n.enabled && fwd && bwd,
                    _ => n.enabled,
                };
                (n.id, enabled)
            })
            .collect();
        let expected_edges: Vec<(evorn::EdgeId, bool)> = expected
            .edges
            .iter()
            .zip(&oracle.edges)
            .map(|(e, &(fwd, bwd))| (e.id, e.enabled && fwd && bwd))
            .collect();

        let mut pruned = genome.clone();
        remove_unused(&mut pruned, &keep_inputs, &keep_outputs);
        pruned.validate().unwrap();

        assert_eq!(pruned.nodes.len(), expected_nodes.len(), "round {round}");
        for (node, (id, enabled)) in pruned.nodes.iter().zip(&expected_nodes) {
            assert_eq!(node.id, *id, "round {round}");
            assert_eq!(node.enabled, *enabled, "round {round}, node {id:?}");
        }
        for (edge, (id, enabled)) in pruned.edges.iter().zip(&expected_edges) {
            assert_eq!(edge.id, *id, "round {round}");
            assert_eq!(edge.enabled, *enabled, "round {round}, edge {id:?}");
        }
    }
}

#[test]
fn statistics_are_captured_before_any_structural_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCAFE);
    for _ in 0..20 {
        let shape = GenomeShape {
            inputs: 4,
            outputs: 3,
            hidden: 8,
            extra_ff_edges: 6,
            recurrent_edges: 3,
            ..Default::default()
        };
        let genome = random_genome(&shape, &mut rng);
        let before = genome.network_stats().unwrap();

        // A target that removes structure: pruning changes the stats, so
        // a late capture would differ.
        let spec = TransferSpec {
            target_input_params: vec!["in0".into(), "in1".into(), "fresh0".into()],
            target_output_params: vec!["out0".into(), "fresh1".into()],
            strategy: Strategy::Nastl,
            weight_init: WeightInit::Epigenetic,
        };
        let (adapted, report) = adapt(genome, &spec, &mut rng).unwrap();
        assert_eq!(report.stats, before, "report must carry the seed's own statistics");
        // Sanity: the adapted genome's stats really did move.
        assert_ne!(adapted.network_stats().unwrap(), before);
    }
}

#[test]
fn random_adaptation_sweep_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57EE);
    for round in 0..100 {
        let shape = GenomeShape {
            inputs: rng.random_range(2..=5),
            outputs: rng.random_range(1..=4),
            hidden: rng.random_range(0..=10),
            extra_ff_edges: rng.random_range(0..=6),
            recurrent_edges: rng.random_range(0..=4),
            disable_nodes: 0.2,
            disable_edges: 0.1,
            ..Default::default()
        };
        let genome = random_genome(&shape, &mut rng);

        let mut target_inputs = random_subset(&genome.input_params, 1, &mut rng);
        for i in 0..rng.random_range(0..4usize) {
            target_inputs.push(format!("newin{i}"));
        }
        let mut target_outputs = random_subset(&genome.output_params, 1, &mut rng);
        for i in 0..rng.random_range(0..3usize) {
            target_outputs.push(format!("newout{i}"));
        }
        let strategy = *[Strategy::Astl, Strategy::Nastl, Strategy::AstlPlusNastl]
            .choose(&mut rng)
            .unwrap();
        let weight_init =
            *[WeightInit::Uniform, WeightInit::Epigenetic].choose(&mut rng).unwrap();
        let spec = TransferSpec {
            target_input_params: target_inputs,
            target_output_params: target_outputs,
            strategy,
            weight_init,
        };

        let (mut adapted, report) = adapt(genome, &spec, &mut rng).unwrap();
        adapted.validate().unwrap_or_else(|e| panic!("round {round}: {e}"));

        // Every new input/output ends up wired.
        for name in &report.inputs_added {
            let node =
                adapted.input_nodes().find(|n| n.param_name.as_ref() == Some(name)).unwrap();
            let fan_out =
                adapted.edges.iter().filter(|e| e.enabled && e.source == node.id).count();
            assert!(fan_out >= 1, "round {round}: new input {name} unwired");
        }
        for name in &report.outputs_added {
            let node =
                adapted.output_nodes().find(|n| n.param_name.as_ref() == Some(name)).unwrap();
            let fan_in =
                adapted.edges.iter().filter(|e| e.enabled && e.target == node.id).count();
            assert!(fan_in >= 1, "round {round}: new output {name} unwired");
        }

        // The enabled feedforward subgraph stays acyclic.
        assert!(adapted.feedforward_acyclic(), "round {round}");

        // No enabled hidden node or edge may be left unreachable.
        adapted.mark_reachability();
        let oracle = reachability_oracle(&adapted);
        for (node, &(fwd, bwd)) in adapted.nodes.iter().zip(&oracle.nodes) {
            if node.enabled && node.kind == NodeKind::Hidden {
                assert!(fwd && bwd, "round {round}: enabled hidden node {:?} unreachable", node.id);
            }
        }
        for (edge, &(fwd, bwd)) in adapted.edges.iter().zip(&oracle.edges) {
            if edge.enabled {
                assert!(fwd && bwd, "round {round}: enabled edge {:?} unreachable", edge.id);
            }
        }
    }
}

/// Two-sample location test: adaptation-drawn weights vs. an independent
/// sampler of N(mu_w, sigma_w), significance 0.01.
#[test]
fn epigenetic_weights_match_seed_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE19);
    let mut seed = Genome::minimal(&common::names("in", 100), &common::names("out", 100), &mut rng)
        .unwrap();
    // Pin every trainable value to one of two levels: mu = 0.2, sigma = 0.5.
    let params: Vec<f64> =
        (0..seed.param_count()).map(|i| if i % 2 == 0 { -0.3 } else { 0.7 }).collect();
    seed.apply_params(&params);
    let stats = seed.network_stats().unwrap();
    assert!((stats.mu_w - 0.2).abs() < 1e-12);
    assert!((stats.sigma_w - 0.5).abs() < 1e-12);

    let before: Vec<evorn::EdgeId> = seed.edges.iter().map(|e| e.id).collect();
    let spec = TransferSpec {
        // 100 extra inputs wired to all 100 outputs: 10,000 fresh weights.
        target_input_params: common::names("in", 200),
        target_output_params: common::names("out", 100),
        strategy: Strategy::Astl,
        weight_init: WeightInit::Epigenetic,
    };
    let (adapted, report) = adapt(seed, &spec, &mut rng).unwrap();
    assert_eq!(report.edges_added, 10_000);
    let new_weights: Vec<f64> = adapted
        .edges
        .iter()
        .filter(|e| !before.contains(&e.id))
        .map(|e| e.weight)
        .collect();
    assert_eq!(new_weights.len(), 10_000);

    // Independent sample from the same distribution.
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(0x0C0C);
    let normal = rand_distr::Normal::new(stats.mu_w, stats.sigma_w).unwrap();
    let reference: Vec<f64> =
        (0..10_000).map(|_| rand_distr::Distribution::sample(&normal, &mut oracle_rng)).collect();

    let stats_of = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    };
    let (m1, v1) = stats_of(&new_weights);
    let (m2, v2) = stats_of(&reference);
    let z = (m1 - m2).abs() / (v1 / 10_000.0 + v2 / 10_000.0).sqrt();
    // z_{0.995} = 2.576: do not reject equality of means at alpha = 0.01.
    assert!(z < 2.576, "two-sample z = {z} (means {m1} vs {m2})");
}
