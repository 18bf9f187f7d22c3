//! Synthetic multi-channel series: sums of sinusoids plus autoregressive
//! noise, with optional coupling of each channel to the previous channel's
//! lagged value. Deterministic given the seed, and channel `j` is generated
//! identically regardless of how many channels follow it, so a 5-channel
//! task and an 8-channel task with the same seed share their first five
//! channels.

use super::{Series, TimeSeriesSet};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

/// Channels get disjoint harmonic sets spaced by this stride, which keeps
/// uncoupled channels close to orthogonal.
const HARMONIC_STRIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub channels: usize,
    pub series: usize,
    pub length: usize,
    /// Fundamental period in steps; all sinusoids are exact harmonics of it.
    pub base_period: u64,
    /// Sinusoids per channel.
    pub harmonics: usize,
    /// Weight of the previous channel's value at t-1 added into channel j.
    pub coupling: f64,
    /// Standard deviation of the AR(1) noise innovations.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            channels: 5,
            series: 4,
            length: 200,
            base_period: 64,
            harmonics: 3,
            coupling: 0.25,
            noise: 0.02,
            seed: 0,
        }
    }
}

pub fn synthesize(spec: &SynthSpec) -> Result<TimeSeriesSet> {
    if spec.channels == 0 || spec.series == 0 || spec.length < 2 {
        return Err(Error::invalid("synthetic spec needs channels, series and length >= 2"));
    }
    if spec.channels > HARMONIC_STRIDE {
        return Err(Error::invalid(format!("at most {HARMONIC_STRIDE} synthetic channels")));
    }
    let max_harmonic = spec.channels + (spec.harmonics - 1) * HARMONIC_STRIDE;
    if max_harmonic as u64 > spec.base_period / 2 {
        return Err(Error::invalid("base_period too short for the requested harmonics"));
    }

    let schema: Vec<String> = (0..spec.channels).map(|j| format!("c{j}")).collect();
    let mut series = Vec::with_capacity(spec.series);
    for s in 0..spec.series {
        let mut channels: Vec<Vec<f64>> = Vec::with_capacity(spec.channels);
        for j in 0..spec.channels {
            let mut rng = channel_rng(spec.seed, s, j);
            // Harmonic numbers are fixed per channel; only amplitude and
            // phase are random.
            let components: Vec<(u64, f64, f64)> = (0..spec.harmonics)
                .map(|i| {
                    let k = (1 + j + i * HARMONIC_STRIDE) as u64;
                    let amp = rng.random_range(0.3..1.0) / (1 + i) as f64;
                    let phase = rng.random_range(0.0..TAU);
                    (k, amp, phase)
                })
                .collect();
            let innovations = Normal::new(0.0, 1.0).expect("unit normal");

            let mut values = Vec::with_capacity(spec.length);
            let mut ar = 0.0;
            for t in 0..spec.length {
                // Integer phase arithmetic keeps noise-free channels
                // bit-exactly periodic in `base_period`.
                let mut v: f64 = components
                    .iter()
                    .map(|&(k, amp, phase)| {
                        let cycle = (k * t as u64) % spec.base_period;
                        amp * (TAU * cycle as f64 / spec.base_period as f64 + phase).sin()
                    })
                    .sum();
                if spec.noise > 0.0 {
                    ar = 0.7 * ar + spec.noise * innovations.sample(&mut rng);
                    v += ar;
                }
                if j > 0 && spec.coupling != 0.0 && t > 0 {
                    v += spec.coupling * channels[j - 1][t - 1];
                }
                values.push(v);
            }
            channels.push(values);
        }
        series.push(Series { name: format!("synth{s:03}"), channels });
    }
    Ok(TimeSeriesSet { schema, series })
}

fn channel_rng(seed: u64, series: usize, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + series as u64 * 256 + channel as u64);
    rng
}
