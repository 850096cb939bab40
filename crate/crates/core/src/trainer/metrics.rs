//! Per-step metrics log and moving averages.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TrainerError;

/// One training step: reward received, Q of the executed pair, episode index
/// and the step's outcome (`running`, `arrival`, `collision` or `timeout`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub reward: f64,
    pub q: f64,
    pub episode: u64,
    pub outcome: String,
}

/// Append-only CSV writer for [`MetricRow`]s.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self { inner: csv::Writer::from_writer(out) }
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<(), TrainerError> {
        self.inner.serialize(row).map_err(|e| TrainerError::Metrics(e.to_string()))
    }

    pub fn flush(&mut self) -> Result<(), TrainerError> {
        self.inner.flush().map_err(|e| TrainerError::Metrics(e.to_string()))
    }

    pub fn into_inner(self) -> Result<W, TrainerError> {
        self.inner.into_inner().map_err(|e| TrainerError::Metrics(e.to_string()))
    }
}

pub fn read_metrics(reader: impl Read) -> Result<Vec<MetricRow>, TrainerError> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<Result<Vec<MetricRow>, _>>()
        .map_err(|e| TrainerError::Metrics(e.to_string()))
}

/// Trailing mean over the last `window` values (fewer at the start).
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    values: std::collections::VecDeque<f64>,
    sum: f64,
    since_resum: usize,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must be positive");
        Self { window, values: std::collections::VecDeque::with_capacity(window), sum: 0.0, since_resum: 0 }
    }

    pub fn push(&mut self, v: f64) -> f64 {
        self.values.push_back(v);
        self.sum += v;
        if self.values.len() > self.window {
            self.sum -= self.values.pop_front().unwrap_or(0.0);
        }
        self.since_resum += 1;
        // Periodic exact re-summation keeps rounding drift from accumulating.
        if self.since_resum >= self.window {
            self.sum = self.values.iter().sum();
            self.since_resum = 0;
        }
        self.mean()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.sum / self.values.len() as f64
        }
    }
}

pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut ma = MovingAverage::new(window);
    values.iter().map(|&v| ma.push(v)).collect()
}
