//! Raw recordings and the canonical preprocessed time-series matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Multichannel recording before preprocessing: rows are time samples,
/// columns are channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub samples: Matrix,
    pub sample_rate: f64,
    pub channel_names: Option<Vec<String>>,
}

impl RawRecording {
    pub fn new(samples: Matrix, sample_rate: f64, channel_names: Option<Vec<String>>) -> Result<Self> {
        if samples.rows() < 2 || samples.cols() < 1 {
            return Err(Error::Shape(format!(
                "recording needs at least 2 rows and 1 column, got {}x{}",
                samples.rows(),
                samples.cols()
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Parameter(format!("sample rate must be positive, got {sample_rate}")));
        }
        if let Some(names) = &channel_names {
            if names.len() != samples.cols() {
                return Err(Error::DimensionMismatch { expected: samples.cols(), got: names.len() });
            }
        }
        check_finite(&samples)?;
        Ok(Self { samples, sample_rate, channel_names })
    }

    pub fn channels(&self) -> usize {
        self.samples.cols()
    }
}

/// Where a [`TimeSeriesMatrix`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    RawPreprocessed,
    LatentEmbedding,
    Synthetic,
}

/// Uniformly sampled observations: `N` rows (time points) by `n` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMatrix {
    data: Matrix,
    dt: f64,
    origin: Origin,
}

impl TimeSeriesMatrix {
    pub fn new(data: Matrix, dt: f64, origin: Origin) -> Result<Self> {
        if data.rows() < 3 {
            return Err(Error::Shape(format!("time series needs at least 3 rows, got {}", data.rows())));
        }
        if data.cols() == 0 {
            return Err(Error::Shape(String::from("time series has no columns")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        check_finite(&data)?;
        Ok(Self { data, dt, origin })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    match m.first_non_finite() {
        Some((row, channel)) => Err(Error::NonFinite { channel, row }),
        None => Ok(()),
    }
}

/// Maps every channel affinely so its minimum lands on `lo` and its maximum
/// on `hi`. Constant channels go to the midpoint `(lo + hi) / 2`.
pub fn rescale_channels(rec: &RawRecording, lo: f64, hi: f64) -> Result<RawRecording> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("rescale bounds must satisfy lo < hi, got [{lo}, {hi}]")));
    }
    check_finite(&rec.samples)?;
    let m = &rec.samples;
    let mut out = m.clone();
    for c in 0..m.cols() {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..m.rows() {
            min = min.min(m[(r, c)]);
            max = max.max(m[(r, c)]);
        }
        if min == lo && max == hi {
            // already at the bounds; leave bit-identical
            continue;
        }
        if max > min {
            let scale = (hi - lo) / (max - min);
            for r in 0..m.rows() {
                let v = m[(r, c)];
                // pin the extremes exactly so a second pass is a no-op
                out[(r, c)] = if v == min {
                    lo
                } else if v == max {
                    hi
                } else {
                    lo + (v - min) * scale
                };
            }
        } else {
            let mid = 0.5 * (lo + hi);
            for r in 0..m.rows() {
                out[(r, c)] = mid;
            }
        }
    }
    Ok(RawRecording { samples: out, sample_rate: rec.sample_rate, channel_names: rec.channel_names.clone() })
}

/// Averages consecutive blocks of `block` rows. A trailing partial block is
/// dropped; the output time step is `block / sample_rate`.
pub fn block_subsample(rec: &RawRecording, block: usize) -> Result<TimeSeriesMatrix> {
    if block == 0 {
        return Err(Error::Parameter(String::from("block size must be at least 1")));
    }
    let m = &rec.samples;
    if block > m.rows() {
        return Err(Error::Parameter(format!("block size {block} exceeds row count {}", m.rows())));
    }
    let out_rows = m.rows() / block;
    let mut out = Matrix::zeros(out_rows, m.cols());
    for i in 0..out_rows {
        let row = out.row_mut(i);
        for r in i * block..(i + 1) * block {
            for (o, v) in row.iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        if block > 1 {
            for o in row.iter_mut() {
                *o /= block as f64;
            }
        }
    }
    TimeSeriesMatrix::new(out, block as f64 / rec.sample_rate, Origin::RawPreprocessed)
}

/// Rescale then subsample, in that order.
pub fn preprocess(rec: &RawRecording, lo: f64, hi: f64, block: usize) -> Result<TimeSeriesMatrix> {
    block_subsample(&rescale_channels(rec, lo, hi)?, block)
}
