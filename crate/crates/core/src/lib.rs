//! Memetic neuroevolution of recurrent neural networks for time-series
//! regression, with structure-aware transfer of evolved networks between
//! datasets of different input/output dimensionality.
//!
//! The engine evolves graph-encoded RNN genomes on islands: a coordinator
//! generates candidates round-robin by mutation and crossover, workers train
//! each candidate with backpropagation through time, and trained candidates
//! are inserted back into their island, evicting the worst member when the
//! island is full. A genome evolved on one dataset can be adapted to another
//! via the [`transfer`] module, which prunes unused inputs/outputs, disables
//! vestigial structure, and wires new inputs/outputs either to everything
//! (`astl`) or according to the seed network's own connectivity and weight
//! distributions (`nastl`), then reseeds every island with the result.

pub mod cells;
pub mod data;
pub mod error;
pub mod evolution;
pub mod genome;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};
pub use genome::{Edge, EdgeId, Genome, IdAllocator, NetworkStats, Node, NodeId, NodeKind};
