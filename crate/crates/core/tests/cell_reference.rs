//! Every cell's forward pass against an independently transcribed copy of
//! its published formulation, on randomized parameters, inputs and states.

mod common;

use common::reference_cell_forward;
use evorn::cells::{forward, CellState, CellType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_matches_reference_formulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCE11);
    for cell in CellType::ALL {
        for round in 0..100 {
            let params: Vec<f64> =
                (0..cell.param_count()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let input: f64 = rng.random_range(-2.0..2.0);
            let prev = CellState {
                hidden: rng.random_range(-1.0..1.0),
                cell: rng.random_range(-2.0..2.0),
            };
            let (expected_y, expected_c) =
                reference_cell_forward(cell, &params, input, prev.hidden, prev.cell);
            let (y, state) = forward(cell, &params, input, prev);
            assert_eq!(y.to_bits(), expected_y.to_bits(), "{cell:?} round {round}");
            if cell == CellType::Lstm {
                assert_eq!(state.cell.to_bits(), expected_c.to_bits(), "{cell:?} round {round}");
            }
            assert_eq!(state.hidden.to_bits(), y.to_bits(), "hidden state is the output");
        }
    }
}

#[test]
fn outputs_stay_finite_and_bounded_from_zero_state() {
    // From a zero state every cell's output is a gated combination of
    // bounded quantities; sweep a few steps and confirm nothing blows up.
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    for cell in CellType::ALL {
        for _ in 0..20 {
            let params: Vec<f64> =
                (0..cell.param_count()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut state = CellState::default();
            for _ in 0..50 {
                let x: f64 = rng.random_range(-5.0..5.0);
                let (y, next) = forward(cell, &params, x, state);
                assert!(y.is_finite());
                assert!(y.abs() <= 1.0 + 1e-12, "{cell:?} output {y}");
                state = next;
            }
        }
    }
}
