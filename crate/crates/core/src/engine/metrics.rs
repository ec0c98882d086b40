use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::long_seq_probability;

/// Wall-clock seconds per engine phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub draft: f64,
    pub compose: f64,
    pub verify: f64,
    pub rearrange: f64,
}

impl PhaseTimes {
    pub(crate) fn add(&mut self, other: &PhaseTimes) {
        self.draft += other.draft;
        self.compose += other.compose;
        self.verify += other.verify;
        self.rearrange += other.rearrange;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RearrangeEvent {
    pub step: u64,
    pub width_before: usize,
    pub width_after: usize,
    pub occupancy_before: f64,
    pub occupancy_after: f64,
    /// Triggered by the cache running out of width rather than the schedule.
    pub forced: bool,
}

/// How often a row accepts more drafts than the model drafter alone could
/// supply (deeper than its template), and the chance that at least one row of
/// a batch does so in a step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LongAcceptance {
    pub threshold: usize,
    pub count: u64,
    pub rate: f64,
    pub batch_size: usize,
    pub batch_probability: f64,
}

/// Counters of a generation run. Forward passes count active rows per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_acceptance_length: f64,
    pub forward_passes: u64,
    pub emitted_tokens: u64,
    pub steps: u64,
    /// `histogram[k]` is the number of row-steps that emitted `k` tokens.
    pub histogram: Vec<u64>,
    /// Valid slots over total slots after each step.
    pub cache_occupancy_series: Vec<f64>,
    pub rearrangements: Vec<RearrangeEvent>,
    pub long_acceptance: LongAcceptance,
    pub phase_times: Option<PhaseTimes>,
}

impl RunMetrics {
    pub(crate) fn record(&mut self, emitted: usize) {
        if self.histogram.len() <= emitted {
            self.histogram.resize(emitted + 1, 0);
        }
        self.histogram[emitted] += 1;
        self.forward_passes += 1;
        self.emitted_tokens += emitted as u64;
    }

    pub(crate) fn finish(&mut self) {
        self.mean_acceptance_length = if self.forward_passes == 0 {
            0.0
        } else {
            self.emitted_tokens as f64 / self.forward_passes as f64
        };
        let la = &mut self.long_acceptance;
        la.rate = if self.forward_passes == 0 {
            0.0
        } else {
            la.count as f64 / self.forward_passes as f64
        };
        la.batch_probability =
            long_seq_probability(la.rate.clamp(0.0, 1.0), la.batch_size.max(1) as u64)
                .unwrap_or(0.0);
    }

    /// Folds in the metrics of a later chunk of prompts.
    pub(crate) fn merge(&mut self, other: RunMetrics) {
        self.forward_passes += other.forward_passes;
        self.emitted_tokens += other.emitted_tokens;
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        let offset = self.steps;
        self.steps += other.steps;
        self.cache_occupancy_series
            .extend(other.cache_occupancy_series);
        self.rearrangements
            .extend(other.rearrangements.into_iter().map(|mut e| {
                e.step += offset;
                e
            }));
        self.long_acceptance.count += other.long_acceptance.count;
        self.long_acceptance.threshold = other.long_acceptance.threshold;
        self.long_acceptance.batch_size = other.long_acceptance.batch_size;
        match (&mut self.phase_times, other.phase_times) {
            (Some(a), Some(b)) => a.add(&b),
            (a @ None, b) => *a = b,
            _ => {}
        }
        self.finish();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// `emitted,count` rows for every non-empty bucket.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("emitted,count\n");
        for (k, &n) in self.histogram.iter().enumerate().filter(|(_, n)| **n > 0) {
            writeln!(out, "{k},{n}").unwrap();
        }
        out
    }

    pub fn occupancy_csv(&self) -> String {
        let mut out = String::from("step,occupancy\n");
        for (i, r) in self.cache_occupancy_series.iter().enumerate() {
            writeln!(out, "{},{r}", i + 1).unwrap();
        }
        out
    }
}

pub(crate) fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}
