//! Sequence-level evaluation and local training of a genome: forward pass
//! in depth order, mean-squared-error loss, backpropagation through time
//! across feedforward and arbitrarily time-skipped recurrent edges, and
//! stochastic gradient descent with Nesterov momentum plus gradient
//! clipping/boosting.

use crate::cells::{self, CellState, CellTrace};
use crate::data::{Series, TimeSeriesSet};
use crate::error::{Error, Result};
use crate::genome::{Genome, NodeKind};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How gradient steps are batched within one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// One full-sequence gradient step per training series (the series is
    /// the stochastic unit).
    PerSeries,
    /// Average gradients over all training series, one step per epoch.
    FullEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Nesterov momentum coefficient.
    pub momentum: f64,
    /// Rescale gradients whose norm exceeds this.
    pub clip_threshold: f64,
    /// Rescale nonzero gradients whose norm falls below this.
    pub boost_threshold: f64,
    /// Inputs at time t predict outputs at time t + offset.
    pub prediction_offset: usize,
    pub batching: Batching,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            learning_rate: 0.001,
            momentum: 0.9,
            clip_threshold: 1.0,
            boost_threshold: 0.05,
            prediction_offset: 1,
            batching: Batching::PerSeries,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        let positive = [self.learning_rate, self.clip_threshold, self.boost_threshold];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("learning rate and gradient thresholds must be positive"));
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.boost_threshold >= self.clip_threshold {
            return Err(Error::invalid("boost threshold must be below the clip threshold"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    /// Mean training MSE per epoch, recorded before each update.
    pub train_mse: Vec<f64>,
    /// Pooled validation MSE of the final weights; the genome's fitness.
    pub validation_mse: f64,
    pub best_epoch: usize,
}

/// Evaluation plan for a (genome, schema) pair: node ordering, active edge
/// lists and channel bindings resolved once.
struct Network {
    /// Enabled non-input node indices in (depth, id) order.
    order: Vec<usize>,
    /// Active edge indices grouped by target node index.
    incoming: Vec<Vec<usize>>,
    /// (input node index, channel index) pairs.
    input_bindings: Vec<(usize, usize)>,
    /// Output node indices in output_params order.
    output_nodes: Vec<usize>,
}

impl Network {
    fn build(genome: &Genome, schema: &[String]) -> Result<Network> {
        let mut input_bindings = Vec::with_capacity(genome.input_params.len());
        for (idx, node) in genome.nodes.iter().enumerate() {
            if node.kind == NodeKind::Input {
                let name = node.param_name.as_deref().unwrap_or_default();
                let channel = schema
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::schema(format!("series is missing input channel {name}")))?;
                input_bindings.push((idx, channel));
            }
        }

        let mut order: Vec<usize> = (0..genome.nodes.len())
            .filter(|&i| genome.nodes[i].enabled && genome.nodes[i].kind != NodeKind::Input)
            .collect();
        order.sort_by(|&a, &b| {
            let (na, nb) = (&genome.nodes[a], &genome.nodes[b]);
            na.depth.partial_cmp(&nb.depth).unwrap().then(na.id.cmp(&nb.id))
        });

        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); genome.nodes.len()];
        for (edge_idx, edge) in genome.edges.iter().enumerate() {
            if !edge.enabled {
                continue;
            }
            let target = genome.node_index(edge.target).expect("validated edge");
            incoming[target].push(edge_idx);
        }

        let output_nodes = genome
            .output_params
            .iter()
            .map(|name| {
                genome
                    .nodes
                    .iter()
                    .position(|n| n.kind == NodeKind::Output && n.param_name.as_deref() == Some(name))
                    .expect("validated genome binds every output param")
            })
            .collect();

        Ok(Network { order, incoming, input_bindings, output_nodes })
    }
}

/// Full forward history of one series.
struct ForwardTrace {
    /// Node outputs, node-major: `y[node][t]`.
    y: Vec<Vec<f64>>,
    /// Aggregated cell inputs.
    x: Vec<Vec<f64>>,
    /// LSTM cell states.
    c: Vec<Vec<f64>>,
    steps: usize,
}

fn forward_full(genome: &Genome, net: &Network, series: &Series) -> ForwardTrace {
    let steps = series.len();
    let n = genome.nodes.len();
    let mut trace = ForwardTrace {
        y: vec![vec![0.0; steps]; n],
        x: vec![vec![0.0; steps]; n],
        c: vec![vec![0.0; steps]; n],
        steps,
    };

    for &(node_idx, channel) in &net.input_bindings {
        trace.y[node_idx].copy_from_slice(&series.channels[channel]);
    }

    for t in 0..steps {
        for &node_idx in &net.order {
            let mut aggregated = 0.0;
            for &edge_idx in &net.incoming[node_idx] {
                let edge = &genome.edges[edge_idx];
                let source = genome.node_index(edge.source).expect("validated edge");
                let value = if edge.recurrent {
                    let skip = edge.time_skip as usize;
                    // Zero before the sequence start.
                    if t >= skip { trace.y[source][t - skip] } else { 0.0 }
                } else {
                    trace.y[source][t]
                };
                aggregated += edge.weight * value;
            }
            let node = &genome.nodes[node_idx];
            let prev = CellState {
                hidden: if t > 0 { trace.y[node_idx][t - 1] } else { 0.0 },
                cell: if t > 0 { trace.c[node_idx][t - 1] } else { 0.0 },
            };
            let (out, state) = cells::forward(node.cell_type, &node.params, aggregated, prev);
            trace.x[node_idx][t] = aggregated;
            trace.y[node_idx][t] = out;
            trace.c[node_idx][t] = state.cell;
        }
    }
    trace
}

/// Run the genome over a series. Returns one output vector per timestep,
/// ordered like `genome.output_params`.
pub fn predict(genome: &Genome, schema: &[String], series: &Series) -> Result<Vec<Vec<f64>>> {
    if series.is_empty() {
        return Err(Error::schema("empty series"));
    }
    let net = Network::build(genome, schema)?;
    let trace = forward_full(genome, &net, series);
    Ok((0..trace.steps)
        .map(|t| net.output_nodes.iter().map(|&n| trace.y[n][t]).collect())
        .collect())
}

/// Mean squared error over all timesteps and output channels.
pub fn mse(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "prediction/target length mismatch: {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::invalid("prediction/target width mismatch"));
        }
        for (a, b) in p.iter().zip(t) {
            let d = a - b;
            total += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("empty predictions"));
    }
    Ok(total / count as f64)
}

/// Target rows for a series: output channel values shifted by the
/// prediction offset, one row per usable timestep.
fn target_rows(
    schema: &[String],
    series: &Series,
    output_params: &[String],
    offset: usize,
) -> Result<Vec<Vec<f64>>> {
    if series.len() <= offset {
        return Err(Error::schema(format!(
            "series {} too short for prediction offset {offset}",
            series.name
        )));
    }
    let channels: Vec<usize> = output_params
        .iter()
        .map(|name| {
            schema
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::schema(format!("series is missing output channel {name}")))
        })
        .collect::<Result<_>>()?;
    Ok((0..series.len() - offset)
        .map(|t| channels.iter().map(|&c| series.channels[c][t + offset]).collect())
        .collect())
}

/// BPTT over one series: loss gradient for every enabled weight and bias,
/// in `collect_params` order, plus the series' training MSE.
fn gradients_for_series(
    genome: &Genome,
    net: &Network,
    schema: &[String],
    series: &Series,
    offset: usize,
) -> Result<(Vec<f64>, f64)> {
    let targets = target_rows(schema, series, &genome.output_params, offset)?;
    let trace = forward_full(genome, net, series);
    let steps = trace.steps;
    let horizon = steps - offset;
    let sample_count = (horizon * net.output_nodes.len()) as f64;

    // Loss seeding: d(mse)/dy for every scored output value.
    let mut d_y: Vec<Vec<f64>> = vec![vec![0.0; steps]; genome.nodes.len()];
    let mut loss = 0.0;
    for (k, &node_idx) in net.output_nodes.iter().enumerate() {
        for t in 0..horizon {
            let err = trace.y[node_idx][t] - targets[t][k];
            loss += err * err;
            d_y[node_idx][t] += 2.0 * err / sample_count;
        }
    }
    loss /= sample_count;

    // Gradient slots: enabled edges in id order, then enabled node params.
    let mut edge_slot = vec![usize::MAX; genome.edges.len()];
    let mut node_slot = vec![usize::MAX; genome.nodes.len()];
    let mut cursor = 0usize;
    for (i, edge) in genome.edges.iter().enumerate() {
        if edge.enabled {
            edge_slot[i] = cursor;
            cursor += 1;
        }
    }
    for (i, node) in genome.nodes.iter().enumerate() {
        if node.enabled {
            node_slot[i] = cursor;
            cursor += node.params.len();
        }
    }
    let mut grad = vec![0.0; cursor];

    // d loss / d cell-state flowing back from t+1, per node.
    let mut d_c = vec![0.0; genome.nodes.len()];

    for t in (0..steps).rev() {
        for &node_idx in net.order.iter().rev() {
            let node = &genome.nodes[node_idx];
            let cell_trace = CellTrace {
                input: trace.x[node_idx][t],
                prev: CellState {
                    hidden: if t > 0 { trace.y[node_idx][t - 1] } else { 0.0 },
                    cell: if t > 0 { trace.c[node_idx][t - 1] } else { 0.0 },
                },
            };
            let g = cells::backward(node.cell_type, &node.params, &cell_trace, d_y[node_idx][t], d_c[node_idx]);

            let slot = node_slot[node_idx];
            for (i, dp) in g.params.iter().enumerate() {
                grad[slot + i] += dp;
            }
            d_c[node_idx] = g.prev_cell;
            if t > 0 {
                d_y[node_idx][t - 1] += g.prev_hidden;
            }

            for &edge_idx in &net.incoming[node_idx] {
                let edge = &genome.edges[edge_idx];
                let source = genome.node_index(edge.source).expect("validated edge");
                let source_t = if edge.recurrent {
                    match t.checked_sub(edge.time_skip as usize) {
                        Some(ts) => ts,
                        None => continue,
                    }
                } else {
                    t
                };
                grad[edge_slot[edge_idx]] += trace.y[source][source_t] * g.input;
                d_y[source][source_t] += edge.weight * g.input;
            }
        }
    }

    Ok((grad, loss))
}

/// Public entry point for the BPTT gradient of one series.
pub fn compute_gradients(
    genome: &Genome,
    schema: &[String],
    series: &Series,
    prediction_offset: usize,
) -> Result<Vec<f64>> {
    let net = Network::build(genome, schema)?;
    gradients_for_series(genome, &net, schema, series, prediction_offset).map(|(g, _)| g)
}

/// Rescale the gradient to the clip threshold when its norm is too large,
/// or up to the boost threshold when it is too small (but nonzero). The
/// direction is never changed; a zero vector passes through untouched.
pub fn clip_or_boost(grad: &mut [f64], config: &TrainConfig) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > config.clip_threshold {
        config.clip_threshold / norm
    } else if norm > 0.0 && norm < config.boost_threshold {
        config.boost_threshold / norm
    } else {
        return;
    };
    for g in grad.iter_mut() {
        *g *= scale;
    }
}

/// Pooled validation MSE over every series of a set (total squared error
/// over total prediction count).
pub fn validation_mse(genome: &Genome, set: &TimeSeriesSet, prediction_offset: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for series in &set.series {
        let predictions = predict(genome, &set.schema, series)?;
        let targets = target_rows(&set.schema, series, &genome.output_params, prediction_offset)?;
        for (t, row) in targets.iter().enumerate() {
            for (k, target) in row.iter().enumerate() {
                let d = predictions[t][k] - target;
                total += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::invalid("no validation predictions"));
    }
    Ok(total / count as f64)
}

/// Train a genome with SGD + Nesterov momentum and score it on validation
/// data. Sets the genome's fitness. Non-finite losses or gradients abort
/// training and report the `+inf` fitness sentinel instead of failing, so
/// the genome stays insertable and simply ranks worst.
pub fn sgd_train<R: Rng + ?Sized>(
    genome: &mut Genome,
    train: &TimeSeriesSet,
    valid: &TimeSeriesSet,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<FitnessReport> {
    config.validate()?;
    train.validate()?;
    valid.validate()?;
    if train.schema != valid.schema {
        return Err(Error::schema("training and validation schemas differ"));
    }
    let net = Network::build(genome, &train.schema)?;

    let abort = |genome: &mut Genome, train_mse: Vec<f64>| {
        genome.fitness = Some(f64::INFINITY);
        FitnessReport { train_mse, validation_mse: f64::INFINITY, best_epoch: 0 }
    };

    let mut params = genome.collect_params();
    let mut velocity = vec![0.0; params.len()];
    let mut train_mse = Vec::with_capacity(config.epochs);

    let step = |params: &mut Vec<f64>, velocity: &mut Vec<f64>, grad: &mut Vec<f64>, genome: &mut Genome| {
        clip_or_boost(grad, config);
        for i in 0..params.len() {
            velocity[i] = config.momentum * velocity[i] + grad[i];
            params[i] -= config.learning_rate * (grad[i] + config.momentum * velocity[i]);
        }
        genome.apply_params(params);
    };

    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.series.len()).collect();
        if config.batching == Batching::PerSeries {
            order.shuffle(rng);
        }

        let mut epoch_loss = 0.0;
        let mut batched: Vec<f64> = vec![0.0; params.len()];
        for &series_idx in &order {
            let (mut grad, loss) =
                gradients_for_series(genome, &net, &train.schema, &train.series[series_idx], config.prediction_offset)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Ok(abort(genome, train_mse));
            }
            epoch_loss += loss;
            match config.batching {
                Batching::PerSeries => step(&mut params, &mut velocity, &mut grad, genome),
                Batching::FullEpoch => {
                    for (acc, g) in batched.iter_mut().zip(&grad) {
                        *acc += g / train.series.len() as f64;
                    }
                }
            }
        }
        if config.batching == Batching::FullEpoch {
            step(&mut params, &mut velocity, &mut batched, genome);
        }
        train_mse.push(epoch_loss / train.series.len() as f64);
    }

    let validation = validation_mse(genome, valid, config.prediction_offset)?;
    if !validation.is_finite() {
        return Ok(abort(genome, train_mse));
    }
    genome.fitness = Some(validation);
    let best_epoch = train_mse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map_or(0, |(i, _)| i);
    Ok(FitnessReport { train_mse, validation_mse: validation, best_epoch })
}
