//! The island-based memetic loop.
//!
//! A single coordinator owns the engine state: it generates candidates from
//! the islands in round-robin order and inserts trained results back. An
//! island serves its seed genome while empty, mutations of uniformly chosen
//! members while filling, mutation or intra-island crossover once full, and
//! adds inter-island crossover (with the most fit member of another island)
//! only after every island is full. Inserting into a full island evicts the
//! worst-fitness member, which may be the arriving genome itself.
//!
//! Training runs on a pool of worker threads; each worker exclusively owns
//! the genome it trains and results may arrive in any order. With one
//! worker the whole run is deterministic for a fixed seed. Every genome
//! gets its own training rng derived from (run seed, genome id), so local
//! training is reproducible regardless of worker count.

mod crossover;
mod mutation;

pub use crossover::{crossover, WeightBlend};
pub use mutation::{mutate, MutationOp};

use crate::data::TimeSeriesSet;
use crate::error::{Error, Result};
use crate::genome::{Genome, IdAllocator, MAX_TIME_SKIP};
use crate::trainer::{sgd_train, TrainConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub n_islands: usize,
    pub island_capacity: usize,
    pub mutation_rate: f64,
    pub intra_island_crossover_rate: f64,
    pub inter_island_crossover_rate: f64,
    /// Enabled mutation operators with selection weights (must sum to 1).
    pub mutation_ops: Vec<(MutationOp, f64)>,
    /// Evaluation budget: total number of genomes generated and trained.
    pub max_genomes: usize,
    pub time_skip_range: (u32, u32),
    /// Added once to the forget-gate bias of newly created cells.
    pub forget_bias_boost: f64,
    pub blend: WeightBlend,
    pub seed: u64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        let ops = [
            MutationOp::Clone,
            MutationOp::AddEdge,
            MutationOp::EnableEdge,
            MutationOp::AddRecurrentEdge,
            MutationOp::DisableEdge,
            MutationOp::AddNode,
            MutationOp::EnableNode,
            MutationOp::DisableNode,
            MutationOp::SplitNode,
            MutationOp::MergeNode,
        ];
        EvolveConfig {
            n_islands: 4,
            island_capacity: 10,
            mutation_rate: 0.70,
            intra_island_crossover_rate: 0.20,
            inter_island_crossover_rate: 0.10,
            mutation_ops: ops.iter().map(|&op| (op, 0.10)).collect(),
            max_genomes: 1000,
            time_skip_range: (1, MAX_TIME_SKIP),
            forget_bias_boost: 1.0,
            blend: WeightBlend::Lamarckian,
            seed: 0,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_islands == 0 || self.island_capacity == 0 || self.max_genomes == 0 {
            return Err(Error::invalid("islands, capacity and max_genomes must be positive"));
        }
        let rate_sum =
            self.mutation_rate + self.intra_island_crossover_rate + self.inter_island_crossover_rate;
        if (rate_sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("reproduction rates sum to {rate_sum}, not 1")));
        }
        if self.mutation_ops.is_empty() {
            return Err(Error::invalid("no mutation operators enabled"));
        }
        let op_sum: f64 = self.mutation_ops.iter().map(|(_, w)| w).sum();
        if (op_sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mutation op weights sum to {op_sum}, not 1")));
        }
        if self.mutation_ops.iter().any(|&(_, w)| w < 0.0) {
            return Err(Error::invalid("negative mutation op weight"));
        }
        let (lo, hi) = self.time_skip_range;
        if lo < 1 || lo > hi || hi > MAX_TIME_SKIP {
            return Err(Error::invalid(format!("time skip range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Island {
    pub id: usize,
    pub seed: Genome,
    pub members: Vec<Genome>,
}

impl Island {
    fn is_full(&self, capacity: usize) -> bool {
        self.members.len() >= capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    InsertedWithEviction,
    /// The arriving genome was the worst of the full island and was
    /// immediately evicted again.
    Rejected,
}

/// One convergence-log row, written after every processed result.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    /// Results processed so far (the x axis: genomes evaluated).
    pub inserted: usize,
    pub best_mse: f64,
    pub island: usize,
    pub genome_id: u64,
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CandidateSource {
    Seed,
    Mutation,
    IntraCrossover,
    InterCrossover,
}

/// Counters for auditing engine behaviour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub seeds: usize,
    pub mutations: usize,
    pub intra_crossovers: usize,
    pub inter_crossovers: usize,
    /// Category decisions made while every island was full.
    pub full_regime_mutations: usize,
    pub full_regime_intra: usize,
    pub full_regime_inter: usize,
    /// Must stay zero: inter-island crossover before all islands filled.
    pub inter_before_all_full: usize,
    /// Largest island size ever observed after an insertion.
    pub max_island_size: usize,
}

pub struct EngineState {
    config: EvolveConfig,
    islands: Vec<Island>,
    cursor: usize,
    generated: usize,
    processed: usize,
    best: Option<Genome>,
    log: Vec<LogEntry>,
    ids: IdAllocator,
    rng: ChaCha8Rng,
    stats: EngineStats,
}

impl EngineState {
    /// `seeds` is either a single genome (cloned onto every island) or one
    /// genome per island.
    pub fn new(config: EvolveConfig, seeds: Vec<Genome>) -> Result<EngineState> {
        config.validate()?;
        if seeds.is_empty() || (seeds.len() != 1 && seeds.len() != config.n_islands) {
            return Err(Error::invalid(format!(
                "expected 1 or {} seed genomes, got {}",
                config.n_islands,
                seeds.len()
            )));
        }
        for seed in &seeds {
            seed.validate()?;
            if seed.input_params != seeds[0].input_params
                || seed.output_params != seeds[0].output_params
            {
                return Err(Error::invalid("seed genomes disagree on parameter lists"));
            }
        }

        let mut next_node = 0;
        let mut next_edge = 0;
        for seed in &seeds {
            next_node = next_node.max(seed.nodes.last().map_or(0, |n| n.id.0 + 1));
            next_edge = next_edge.max(seed.edges.last().map_or(0, |e| e.id.0 + 1));
        }
        let ids = IdAllocator::starting_at(next_node, next_edge);

        let islands = (0..config.n_islands)
            .map(|id| Island {
                id,
                seed: seeds[if seeds.len() == 1 { 0 } else { id }].clone(),
                members: Vec::with_capacity(config.island_capacity),
            })
            .collect();

        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(EngineState {
            config,
            islands,
            cursor: 0,
            generated: 0,
            processed: 0,
            best: None,
            log: Vec::new(),
            ids,
            rng,
            stats: EngineStats::default(),
        })
    }

    pub fn config(&self) -> &EvolveConfig {
        &self.config
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn best(&self) -> Option<&Genome> {
        self.best.as_ref()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn generated(&self) -> usize {
        self.generated
    }

    fn all_islands_full(&self) -> bool {
        self.islands.iter().all(|i| i.is_full(self.config.island_capacity))
    }

    /// Produce the next untrained candidate, round-robin over islands.
    /// Returns `None` once the evaluation budget is exhausted.
    pub fn generate_candidate(&mut self) -> Option<(Genome, usize)> {
        if self.generated >= self.config.max_genomes {
            return None;
        }
        let island_idx = self.cursor % self.config.n_islands;
        self.cursor += 1;

        let all_full = self.all_islands_full();
        let island_full = self.islands[island_idx].is_full(self.config.island_capacity);
        let source = if self.islands[island_idx].members.is_empty() {
            CandidateSource::Seed
        } else if !island_full {
            CandidateSource::Mutation
        } else {
            let roll: f64 = self.rng.random();
            if !all_full {
                // The inter-island share is folded into intra-island
                // crossover until every island has filled.
                if roll < self.config.mutation_rate {
                    CandidateSource::Mutation
                } else {
                    CandidateSource::IntraCrossover
                }
            } else if roll < self.config.mutation_rate {
                CandidateSource::Mutation
            } else if roll < self.config.mutation_rate + self.config.intra_island_crossover_rate
                || self.islands.len() < 2
            {
                // A single island has no partner to cross with.
                CandidateSource::IntraCrossover
            } else {
                CandidateSource::InterCrossover
            }
        };

        let mut child = match source {
            CandidateSource::Seed => {
                self.stats.seeds += 1;
                self.islands[island_idx].seed.clone()
            }
            CandidateSource::Mutation => {
                self.stats.mutations += 1;
                if all_full {
                    self.stats.full_regime_mutations += 1;
                }
                let parent = self.islands[island_idx]
                    .members
                    .choose(&mut self.rng)
                    .expect("non-empty island");
                mutation::mutate(parent, &self.config, &mut self.ids, &mut self.rng).0
            }
            CandidateSource::IntraCrossover => {
                self.stats.intra_crossovers += 1;
                if all_full {
                    self.stats.full_regime_intra += 1;
                }
                let members = &self.islands[island_idx].members;
                let first = self.rng.random_range(0..members.len());
                let second = if members.len() > 1 {
                    // Distinct second parent.
                    let mut s = self.rng.random_range(0..members.len() - 1);
                    if s >= first {
                        s += 1;
                    }
                    s
                } else {
                    first
                };
                crossover::crossover(&members[first], &members[second], self.config.blend, &mut self.rng)
                    .expect("island members are trained and compatible")
            }
            CandidateSource::InterCrossover => {
                self.stats.inter_crossovers += 1;
                self.stats.full_regime_inter += 1;
                if !all_full {
                    self.stats.inter_before_all_full += 1;
                }
                let members = &self.islands[island_idx].members;
                let first = &members[self.rng.random_range(0..members.len())];
                let mut other_idx = self.rng.random_range(0..self.islands.len() - 1);
                if other_idx >= island_idx {
                    other_idx += 1;
                }
                let second = self.islands[other_idx]
                    .members
                    .iter()
                    .min_by(|a, b| a.fitness.partial_cmp(&b.fitness).unwrap())
                    .expect("full island");
                crossover::crossover(first, second, self.config.blend, &mut self.rng)
                    .expect("island members are trained and compatible")
            }
        };

        child.metadata.genome_id = self.generated as u64;
        child.metadata.island = Some(island_idx);
        self.generated += 1;
        Some((child, island_idx))
    }

    /// Insert a trained genome into its island, evicting the worst member
    /// if the island overflows. Updates the best-so-far genome and appends
    /// one convergence-log row.
    pub fn insert_result(&mut self, genome: Genome, island_idx: usize) -> Result<InsertOutcome> {
        let Some(fitness) = genome.fitness else {
            return Err(Error::invalid("genome has no fitness"));
        };
        if fitness.is_nan() {
            return Err(Error::invalid("genome fitness is NaN"));
        }
        if island_idx >= self.islands.len() {
            return Err(Error::invalid(format!("unknown island {island_idx}")));
        }

        let genome_id = genome.metadata.genome_id;
        let is_best = self.best.as_ref().is_none_or(|b| fitness < b.fitness.unwrap());
        if is_best {
            self.best = Some(genome.clone());
        }

        let island = &mut self.islands[island_idx];
        island.members.push(genome);
        let outcome = if island.members.len() > self.config.island_capacity {
            // >= keeps the earliest member on ties, so a tying newcomer is
            // the one evicted.
            let mut worst = 0;
            for i in 1..island.members.len() {
                if island.members[i].fitness.unwrap() >= island.members[worst].fitness.unwrap() {
                    worst = i;
                }
            }
            let evicted_newcomer = worst == island.members.len() - 1;
            island.members.remove(worst);
            if evicted_newcomer {
                InsertOutcome::Rejected
            } else {
                InsertOutcome::InsertedWithEviction
            }
        } else {
            InsertOutcome::Inserted
        };

        self.stats.max_island_size = self.stats.max_island_size.max(island.members.len());
        self.processed += 1;
        self.log.push(LogEntry {
            inserted: self.processed,
            best_mse: self.best.as_ref().unwrap().fitness.unwrap(),
            island: island_idx,
            genome_id,
        });
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Genome,
    pub log: Vec<LogEntry>,
    pub stats: EngineStats,
}

fn training_seed(run_seed: u64, genome_id: u64) -> u64 {
    run_seed ^ (genome_id.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Drive the full loop: generate candidates, train them on `workers`
/// threads, insert results until the budget is exhausted. Deterministic
/// for a fixed seed when `workers == 1`.
pub fn run(
    config: &EvolveConfig,
    train_config: &TrainConfig,
    train: &TimeSeriesSet,
    valid: &TimeSeriesSet,
    seeds: Vec<Genome>,
    workers: usize,
) -> Result<RunResult> {
    train.validate()?;
    valid.validate()?;
    train_config.validate()?;
    if workers == 0 {
        return Err(Error::invalid("need at least one worker"));
    }
    for seed in &seeds {
        for param in seed.input_params.iter().chain(seed.output_params.iter()) {
            if train.channel_index(param).is_none() {
                return Err(Error::schema(format!("dataset is missing channel {param}")));
            }
        }
    }

    let mut engine = EngineState::new(config.clone(), seeds)?;

    type Job = (Genome, usize);
    type Trained = (Result<Genome>, usize);
    let (job_tx, job_rx) = mpsc::channel::<Job>();
    let job_rx = Arc::new(Mutex::new(job_rx));
    let (result_tx, result_rx) = mpsc::channel::<Trained>();

    thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let job_rx = Arc::clone(&job_rx);
            let result_tx = result_tx.clone();
            scope.spawn(move || loop {
                let job = job_rx.lock().expect("job queue poisoned").recv();
                let Ok((mut genome, island)) = job else { break };
                let mut rng =
                    ChaCha8Rng::seed_from_u64(training_seed(config.seed, genome.metadata.genome_id));
                let outcome = sgd_train(&mut genome, train, valid, train_config, &mut rng);
                let sent = result_tx.send((outcome.map(|_| genome), island));
                if sent.is_err() {
                    break;
                }
            });
        }
        drop(result_tx);

        let mut in_flight = 0usize;
        for _ in 0..workers {
            match engine.generate_candidate() {
                Some(job) => {
                    job_tx.send(job).expect("workers alive");
                    in_flight += 1;
                }
                None => break,
            }
        }
        while in_flight > 0 {
            let (outcome, island) = result_rx.recv().expect("workers alive");
            in_flight -= 1;
            let genome = match outcome {
                Ok(genome) => genome,
                Err(err) => {
                    drop(job_tx);
                    return Err(err);
                }
            };
            engine.insert_result(genome, island)?;
            if let Some(job) = engine.generate_candidate() {
                job_tx.send(job).expect("workers alive");
                in_flight += 1;
            }
        }
        drop(job_tx);
        Ok(())
    })?;

    let best = engine.best.take().ok_or_else(|| Error::invalid("no genome was evaluated"))?;
    Ok(RunResult { best, log: engine.log, stats: engine.stats })
}
