//! Scalar forward/backward computation for every node type.
//!
//! Each node is a single unit: it receives one aggregated input value per
//! timestep (the weighted sum over its incoming edges) and produces one
//! output value. Gated cells keep their own hidden state (the previous
//! output) and, for LSTM, a separate cell state.
//!
//! Formulations follow the original publications:
//! - LSTM: Hochreiter & Schmidhuber (1997), with the usual input/forget/
//!   output gates and a tanh candidate.
//! - GRU: Cho et al. (2014) as written in Chung et al. (2014):
//!   `h' = (1 - z) * h + z * h_cand`.
//! - MGU: Zhou et al. (2016), a GRU with the reset and update gates fused
//!   into a single forget gate.
//! - UGRNN: Collins et al. (2016): `h' = g * h + (1 - g) * c`.
//! - Delta-RNN: Ororbia & Mikolov's differential state framework with a
//!   second-order inner term, a data-driven gate `r = sigmoid(x + b_r)`
//!   and identity outer function: `h' = r * h + (1 - r) * z_cand`.
//!
//! Gates use the logistic sigmoid, candidates and the simple neuron use
//! tanh. The backward pass recomputes gate activations from the stored
//! `(input, prev_state)` trace rather than caching them.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Simple,
    DeltaRnn,
    Gru,
    Lstm,
    Mgu,
    Ugrnn,
}

impl CellType {
    pub const ALL: [CellType; 6] = [
        CellType::Simple,
        CellType::DeltaRnn,
        CellType::Gru,
        CellType::Lstm,
        CellType::Mgu,
        CellType::Ugrnn,
    ];

    /// Internal parameter vector length.
    ///
    /// Layouts:
    /// - simple:    `[b]`
    /// - delta_rnn: `[alpha, beta1, beta2, v, b_z, b_r]`
    /// - gru:       `[w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h]`
    /// - lstm:      `[w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_c, u_c, b_c]`
    /// - mgu:       `[w_f, u_f, b_f, w_h, u_h, b_h]`
    /// - ugrnn:     `[w_g, u_g, b_g, w_c, u_c, b_c]`
    pub fn param_count(self) -> usize {
        match self {
            CellType::Simple => 1,
            CellType::DeltaRnn => 6,
            CellType::Gru => 9,
            CellType::Lstm => 12,
            CellType::Mgu => 6,
            CellType::Ugrnn => 6,
        }
    }

    /// Index of the forget-gate bias for cells that have one.
    /// Only those biases receive the one-time initialization boost.
    pub fn forget_bias_index(self) -> Option<usize> {
        match self {
            CellType::Lstm => Some(5),
            CellType::Mgu => Some(2),
            _ => None,
        }
    }
}

/// Draw a fresh parameter vector and apply the forget-gate bias boost
/// exactly once. Every code path that creates a cell goes through here.
pub fn init_params<R, F>(cell: CellType, boost: f64, rng: &mut R, mut draw: F) -> Vec<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    let mut params: Vec<f64> = (0..cell.param_count()).map(|_| draw(rng)).collect();
    if let Some(i) = cell.forget_bias_index() {
        params[i] += boost;
    }
    params
}

/// Recurrent state carried across timesteps. `hidden` is the previous
/// output; `cell` is only used by LSTM.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellState {
    pub hidden: f64,
    pub cell: f64,
}

/// Everything the backward pass needs to replay one forward step.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellTrace {
    pub input: f64,
    pub prev: CellState,
}

/// Gradients produced by one backward step.
#[derive(Debug, Clone)]
pub struct CellGradients {
    /// d loss / d params, same layout as the parameter vector.
    pub params: Vec<f64>,
    /// d loss / d aggregated input.
    pub input: f64,
    /// d loss / d previous hidden state (the cell's output at t-1).
    pub prev_hidden: f64,
    /// d loss / d previous LSTM cell state.
    pub prev_cell: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One forward step. Returns the output and the state to carry to t+1.
pub fn forward(cell: CellType, params: &[f64], input: f64, prev: CellState) -> (f64, CellState) {
    assert_eq!(params.len(), cell.param_count(), "cell parameter length");
    let h = prev.hidden;
    match cell {
        CellType::Simple => {
            let y = (input + params[0]).tanh();
            (y, CellState { hidden: y, cell: 0.0 })
        }
        CellType::DeltaRnn => {
            let [alpha, beta1, beta2, v, b_z, b_r] = params else { unreachable!() };
            let vh = v * h;
            let z_cand = (alpha * vh * input + beta1 * vh + beta2 * input + b_z).tanh();
            let r = sigmoid(input + b_r);
            let y = r * h + (1.0 - r) * z_cand;
            (y, CellState { hidden: y, cell: 0.0 })
        }
        CellType::Gru => {
            let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = params else { unreachable!() };
            let z = sigmoid(w_z * input + u_z * h + b_z);
            let r = sigmoid(w_r * input + u_r * h + b_r);
            let cand = (w_h * input + u_h * (r * h) + b_h).tanh();
            let y = (1.0 - z) * h + z * cand;
            (y, CellState { hidden: y, cell: 0.0 })
        }
        CellType::Lstm => {
            let [w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_c, u_c, b_c] = params else {
                unreachable!()
            };
            let i = sigmoid(w_i * input + u_i * h + b_i);
            let f = sigmoid(w_f * input + u_f * h + b_f);
            let o = sigmoid(w_o * input + u_o * h + b_o);
            let cand = (w_c * input + u_c * h + b_c).tanh();
            let c = f * prev.cell + i * cand;
            let y = o * c.tanh();
            (y, CellState { hidden: y, cell: c })
        }
        CellType::Mgu => {
            let [w_f, u_f, b_f, w_h, u_h, b_h] = params else { unreachable!() };
            let f = sigmoid(w_f * input + u_f * h + b_f);
            let cand = (w_h * input + u_h * (f * h) + b_h).tanh();
            let y = (1.0 - f) * h + f * cand;
            (y, CellState { hidden: y, cell: 0.0 })
        }
        CellType::Ugrnn => {
            let [w_g, u_g, b_g, w_c, u_c, b_c] = params else { unreachable!() };
            let g = sigmoid(w_g * input + u_g * h + b_g);
            let c = (w_c * input + u_c * h + b_c).tanh();
            let y = g * h + (1.0 - g) * c;
            (y, CellState { hidden: y, cell: 0.0 })
        }
    }
}

/// One backward step.
///
/// `d_output` is d loss / d output at this timestep, already including
/// every downstream contribution (loss, outgoing edges, and the cell's own
/// use of this output as `prev.hidden` at t+1). `d_cell_next` is
/// d loss / d cell-state flowing back from t+1 (LSTM only, zero otherwise).
pub fn backward(
    cell: CellType,
    params: &[f64],
    trace: &CellTrace,
    d_output: f64,
    d_cell_next: f64,
) -> CellGradients {
    assert_eq!(params.len(), cell.param_count(), "cell parameter length");
    let x = trace.input;
    let h = trace.prev.hidden;
    let mut g = CellGradients {
        params: vec![0.0; cell.param_count()],
        input: 0.0,
        prev_hidden: 0.0,
        prev_cell: 0.0,
    };
    match cell {
        CellType::Simple => {
            let y = (x + params[0]).tanh();
            let d_pre = d_output * (1.0 - y * y);
            g.params[0] = d_pre;
            g.input = d_pre;
        }
        CellType::DeltaRnn => {
            let [alpha, beta1, beta2, v, b_z, b_r] = params else { unreachable!() };
            let vh = v * h;
            let z_cand = (alpha * vh * x + beta1 * vh + beta2 * x + b_z).tanh();
            let r = sigmoid(x + b_r);

            let d_r = d_output * (h - z_cand);
            let d_cand = d_output * (1.0 - r);
            g.prev_hidden += d_output * r;

            let d_a = d_cand * (1.0 - z_cand * z_cand);
            g.params[0] = d_a * vh * x; // alpha
            g.params[1] = d_a * vh; // beta1
            g.params[2] = d_a * x; // beta2
            let d_vh = d_a * (alpha * x + beta1);
            g.params[3] = d_vh * h; // v
            g.prev_hidden += d_vh * v;
            g.params[4] = d_a; // b_z
            g.input += d_a * (alpha * vh + beta2);

            let d_ar = d_r * r * (1.0 - r);
            g.params[5] = d_ar; // b_r
            g.input += d_ar;
        }
        CellType::Gru => {
            let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = params else { unreachable!() };
            let z = sigmoid(w_z * x + u_z * h + b_z);
            let r = sigmoid(w_r * x + u_r * h + b_r);
            let cand = (w_h * x + u_h * (r * h) + b_h).tanh();

            let d_z = d_output * (cand - h);
            let d_cand = d_output * z;
            g.prev_hidden += d_output * (1.0 - z);

            let d_ah = d_cand * (1.0 - cand * cand);
            g.params[6] = d_ah * x; // w_h
            g.params[7] = d_ah * r * h; // u_h
            g.params[8] = d_ah; // b_h
            let d_r = d_ah * u_h * h;
            g.prev_hidden += d_ah * u_h * r;

            let d_az = d_z * z * (1.0 - z);
            let d_ar = d_r * r * (1.0 - r);
            g.params[0] = d_az * x; // w_z
            g.params[1] = d_az * h; // u_z
            g.params[2] = d_az; // b_z
            g.params[3] = d_ar * x; // w_r
            g.params[4] = d_ar * h; // u_r
            g.params[5] = d_ar; // b_r
            g.prev_hidden += d_az * u_z + d_ar * u_r;
            g.input = d_az * w_z + d_ar * w_r + d_ah * w_h;
        }
        CellType::Lstm => {
            let [w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_c, u_c, b_c] = params else {
                unreachable!()
            };
            let i = sigmoid(w_i * x + u_i * h + b_i);
            let f = sigmoid(w_f * x + u_f * h + b_f);
            let o = sigmoid(w_o * x + u_o * h + b_o);
            let cand = (w_c * x + u_c * h + b_c).tanh();
            let c = f * trace.prev.cell + i * cand;
            let tc = c.tanh();

            let d_o = d_output * tc;
            let d_c = d_output * o * (1.0 - tc * tc) + d_cell_next;
            let d_f = d_c * trace.prev.cell;
            let d_i = d_c * cand;
            let d_cand = d_c * i;
            g.prev_cell = d_c * f;

            let d_ai = d_i * i * (1.0 - i);
            let d_af = d_f * f * (1.0 - f);
            let d_ao = d_o * o * (1.0 - o);
            let d_ac = d_cand * (1.0 - cand * cand);
            g.params[0] = d_ai * x;
            g.params[1] = d_ai * h;
            g.params[2] = d_ai;
            g.params[3] = d_af * x;
            g.params[4] = d_af * h;
            g.params[5] = d_af;
            g.params[6] = d_ao * x;
            g.params[7] = d_ao * h;
            g.params[8] = d_ao;
            g.params[9] = d_ac * x;
            g.params[10] = d_ac * h;
            g.params[11] = d_ac;
            g.input = d_ai * w_i + d_af * w_f + d_ao * w_o + d_ac * w_c;
            g.prev_hidden = d_ai * u_i + d_af * u_f + d_ao * u_o + d_ac * u_c;
        }
        CellType::Mgu => {
            let [w_f, u_f, b_f, w_h, u_h, b_h] = params else { unreachable!() };
            let f = sigmoid(w_f * x + u_f * h + b_f);
            let cand = (w_h * x + u_h * (f * h) + b_h).tanh();

            let mut d_f = d_output * (cand - h);
            let d_cand = d_output * f;
            g.prev_hidden += d_output * (1.0 - f);

            let d_ah = d_cand * (1.0 - cand * cand);
            g.params[3] = d_ah * x; // w_h
            g.params[4] = d_ah * f * h; // u_h
            g.params[5] = d_ah; // b_h
            d_f += d_ah * u_h * h;
            g.prev_hidden += d_ah * u_h * f;

            let d_af = d_f * f * (1.0 - f);
            g.params[0] = d_af * x; // w_f
            g.params[1] = d_af * h; // u_f
            g.params[2] = d_af; // b_f
            g.prev_hidden += d_af * u_f;
            g.input = d_af * w_f + d_ah * w_h;
        }
        CellType::Ugrnn => {
            let [w_g, u_g, b_g, w_c, u_c, b_c] = params else { unreachable!() };
            let gate = sigmoid(w_g * x + u_g * h + b_g);
            let c = (w_c * x + u_c * h + b_c).tanh();

            let d_gate = d_output * (h - c);
            let d_c = d_output * (1.0 - gate);
            g.prev_hidden += d_output * gate;

            let d_ag = d_gate * gate * (1.0 - gate);
            let d_ac = d_c * (1.0 - c * c);
            g.params[0] = d_ag * x;
            g.params[1] = d_ag * h;
            g.params[2] = d_ag;
            g.params[3] = d_ac * x;
            g.params[4] = d_ac * h;
            g.params[5] = d_ac;
            g.prev_hidden += d_ag * u_g + d_ac * u_c;
            g.input = d_ag * w_g + d_ac * w_c;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_zero_weights_is_zero() {
        // With zero edge weights the aggregated input is zero regardless of
        // the raw input values, so the unit sits at tanh(0) = 0.
        let (y, _) = forward(CellType::Simple, &[0.0], 0.0, CellState::default());
        assert_eq!(y, 0.0);
    }

    #[test]
    fn lstm_all_zero_params_outputs_zero() {
        // Gates sit at sigmoid(0) = 0.5, candidate at tanh(0) = 0.
        let (y, state) = forward(CellType::Lstm, &[0.0; 12], 0.0, CellState::default());
        assert_eq!(y, 0.0);
        assert_eq!(state.cell, 0.0);
    }

    #[test]
    fn simple_backward_matches_hand_derivation() {
        // y = tanh(w*x + b) with the edge weight folded into the input;
        // loss = 0.5 (y - t)^2 so d_output = (y - t).
        let (w, b, x, t) = (0.7, -0.2, 1.3, 0.5);
        let input = w * x;
        let (y, _) = forward(CellType::Simple, &[b], input, CellState::default());
        let g = backward(
            CellType::Simple,
            &[b],
            &CellTrace { input, prev: CellState::default() },
            y - t,
            0.0,
        );
        // dL/dw = (y - t) (1 - y^2) x, reached through dL/d_input * x.
        let expected = (y - t) * (1.0 - y * y) * x;
        assert!((g.input * x - expected).abs() < 1e-15);
        assert!((g.params[0] - (y - t) * (1.0 - y * y)).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_boost_applied_exactly_once_at_creation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cell in CellType::ALL {
            // Constant draw makes the boost directly observable.
            let params = init_params(cell, 1.0, &mut rng, |_| 0.2);
            for (i, &p) in params.iter().enumerate() {
                let expected = if Some(i) == cell.forget_bias_index() { 1.2 } else { 0.2 };
                assert_eq!(p, expected, "{cell:?} param {i}");
            }
        }
        assert_eq!(CellType::Lstm.forget_bias_index(), Some(5));
        assert_eq!(CellType::Mgu.forget_bias_index(), Some(2));
        assert_eq!(CellType::Gru.forget_bias_index(), None);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cell in CellType::ALL {
            let params = init_params(cell, 0.0, &mut rng, |r| r.random_range(-1.0..1.0));
            let trace = CellTrace {
                input: 0.4,
                prev: CellState { hidden: -0.3, cell: 0.2 },
            };
            let g = backward(cell, &params, &trace, 0.0, 0.0);
            assert!(g.params.iter().all(|&v| v == 0.0));
            assert_eq!(g.input, 0.0);
            assert_eq!(g.prev_hidden, 0.0);
            assert_eq!(g.prev_cell, 0.0);
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for cell in CellType::ALL {
            let params = init_params(cell, 1.0, &mut rng, |r| r.random_range(-2.0..2.0));
            let prev = CellState { hidden: 0.25, cell: -0.5 };
            let (y1, s1) = forward(cell, &params, 0.9, prev);
            let (y2, s2) = forward(cell, &params, 0.9, prev);
            assert_eq!(y1.to_bits(), y2.to_bits());
            assert_eq!(s1.hidden.to_bits(), s2.hidden.to_bits());
            assert_eq!(s1.cell.to_bits(), s2.cell.to_bits());
        }
    }

    /// Central finite differences over every parameter, the input and the
    /// previous state for a single step with loss = 0.5 (y - t)^2.
    #[test]
    fn single_step_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h_step = 1e-6;
        for cell in CellType::ALL {
            for _ in 0..50 {
                let params: Vec<f64> =
                    (0..cell.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let input: f64 = rng.random_range(-2.0..2.0);
                let prev = CellState {
                    hidden: rng.random_range(-0.9..0.9),
                    cell: rng.random_range(-2.0..2.0),
                };
                let target: f64 = rng.random_range(-0.9..0.9);

                let loss = |p: &[f64], x: f64, prev: CellState| {
                    let (y, _) = forward(cell, p, x, prev);
                    0.5 * (y - target) * (y - target)
                };

                let (y, _) = forward(cell, &params, input, prev);
                let g = backward(
                    cell,
                    &params,
                    &CellTrace { input, prev },
                    y - target,
                    0.0,
                );

                let check = |analytic: f64, plus: f64, minus: f64| {
                    let fd = (plus - minus) / (2.0 * h_step);
                    let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
                    assert!(
                        rel < 1e-5,
                        "{cell:?}: analytic {analytic} vs fd {fd} (rel {rel})"
                    );
                };

                for i in 0..params.len() {
                    let mut p = params.clone();
                    p[i] += h_step;
                    let plus = loss(&p, input, prev);
                    p[i] -= 2.0 * h_step;
                    let minus = loss(&p, input, prev);
                    check(g.params[i], plus, minus);
                }
                check(
                    g.input,
                    loss(&params, input + h_step, prev),
                    loss(&params, input - h_step, prev),
                );
                check(
                    g.prev_hidden,
                    loss(&params, input, CellState { hidden: prev.hidden + h_step, ..prev }),
                    loss(&params, input, CellState { hidden: prev.hidden - h_step, ..prev }),
                );
                if cell == CellType::Lstm {
                    check(
                        g.prev_cell,
                        loss(&params, input, CellState { cell: prev.cell + h_step, ..prev }),
                        loss(&params, input, CellState { cell: prev.cell - h_step, ..prev }),
                    );
                }
            }
        }
    }
}
