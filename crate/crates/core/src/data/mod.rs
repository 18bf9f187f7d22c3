//! Time-series ingestion, normalization and train/validation splitting.
//!
//! Input files are plain CSV: a header row of channel names, then one row
//! per second. Rows with non-numeric cells are hard errors; silently
//! imputing values would corrupt fitness comparisons between genomes.

mod synth;

pub use synth::{synthesize, SynthSpec};

use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// One named recording: per-channel value sequences, aligned to the owning
/// set's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub channels: Vec<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeriesSet {
    /// Ordered channel names shared by every series.
    pub schema: Vec<String>,
    pub series: Vec<Series>,
}

impl TimeSeriesSet {
    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    /// Schema and length invariants: unique channel names, every series
    /// carries every channel, all channels of a series have equal length
    /// of at least 2.
    pub fn validate(&self) -> Result<()> {
        if self.schema.is_empty() {
            return Err(Error::schema("empty channel schema"));
        }
        let mut sorted = self.schema.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::schema("duplicate channel name"));
        }
        for series in &self.series {
            if series.channels.len() != self.schema.len() {
                return Err(Error::schema(format!(
                    "series {} has {} channels, schema has {}",
                    series.name,
                    series.channels.len(),
                    self.schema.len()
                )));
            }
            let len = series.len();
            if len < 2 {
                return Err(Error::schema(format!("series {} is shorter than 2 steps", series.name)));
            }
            if series.channels.iter().any(|c| c.len() != len) {
                return Err(Error::schema(format!("series {} has ragged channels", series.name)));
            }
        }
        Ok(())
    }
}

/// Parse one flight CSV. Returns the header schema and the series, named
/// after the file stem. Cell errors name the 1-based file row and column.
pub fn load_flight_csv(path: &Path) -> Result<(Vec<String>, Series)> {
    let text = fs::read_to_string(path)?;
    let parse_err = |row: usize, col: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "missing header row".into()))?;
    let schema: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
    if schema.iter().any(|h| h.is_empty()) {
        return Err(parse_err(1, 1, "empty channel name in header".into()));
    }

    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != schema.len() {
            return Err(parse_err(
                row,
                1,
                format!("expected {} cells, found {}", schema.len(), cells.len()),
            ));
        }
        for (col_idx, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                parse_err(row, col_idx + 1, format!("not a number: {:?}", cell.trim()))
            })?;
            channels[col_idx].push(value);
        }
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((schema, Series { name, channels }))
}

/// Load every `.csv` in a directory (sorted by filename) into one set.
/// All files must share the same ordered header.
pub fn load_dir(dir: &Path) -> Result<TimeSeriesSet> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::schema(format!("no .csv files in {}", dir.display())));
    }

    let mut set = TimeSeriesSet::default();
    for path in &paths {
        let (schema, series) = load_flight_csv(path)?;
        if set.schema.is_empty() {
            set.schema = schema;
        } else if set.schema != schema {
            return Err(Error::schema(format!(
                "{} has a different header than the first file",
                path.display()
            )));
        }
        set.series.push(series);
    }
    Ok(set)
}

/// Order-preserving prefix/suffix split: the first `n_train` series train,
/// the last `n_valid` validate.
pub fn split(set: TimeSeriesSet, n_train: usize, n_valid: usize) -> Result<(TimeSeriesSet, TimeSeriesSet)> {
    if n_train == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if n_valid == 0 {
        return Err(Error::invalid("empty validation set"));
    }
    let total = set.series.len();
    if n_train + n_valid > total {
        return Err(Error::invalid(format!(
            "cannot split {total} series into {n_train} training and {n_valid} validation"
        )));
    }
    let mut series = set.series;
    let valid_series = series.split_off(total - n_valid);
    series.truncate(n_train);
    Ok((
        TimeSeriesSet { schema: set.schema.clone(), series },
        TimeSeriesSet { schema: set.schema, series: valid_series },
    ))
}

/// Per-channel min-max scaling to [0, 1]. Bounds come from the training
/// series only and are then applied to validation data unchanged, so
/// validation values may fall outside [0, 1]. Constant channels map to 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    /// (min, max) per schema channel.
    pub bounds: Vec<(f64, f64)>,
}

impl Normalizer {
    pub fn fit(train: &TimeSeriesSet) -> Normalizer {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); train.schema.len()];
        for series in &train.series {
            for (channel, bound) in series.channels.iter().zip(bounds.iter_mut()) {
                for &v in channel {
                    bound.0 = bound.0.min(v);
                    bound.1 = bound.1.max(v);
                }
            }
        }
        Normalizer { bounds }
    }

    pub fn apply(&self, set: &mut TimeSeriesSet) {
        for series in &mut set.series {
            for (channel, &(min, max)) in series.channels.iter_mut().zip(&self.bounds) {
                let range = max - min;
                for v in channel.iter_mut() {
                    *v = if range > 0.0 { (*v - min) / range } else { 0.5 };
                }
            }
        }
    }
}
