use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Batch size `b`, tree size `t`, cached length `s` and hidden width `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostInputs {
    pub b: u64,
    pub t: u64,
    pub s: u64,
    pub h: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub flops: u128,
    pub reads: u128,
    pub ratio: f64,
}

impl StageCost {
    fn new(flops: u128, reads: u128) -> Self {
        Self {
            flops,
            reads,
            ratio: flops as f64 / reads as f64,
        }
    }
}

/// FLOPs and element reads of one attention layer's three stages. A
/// multiply-add counts as 2 FLOPs, reading one element as 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub qkv: StageCost,
    pub sdpa: StageCost,
    pub output: StageCost,
}

pub fn cost_model(c: CostInputs) -> Result<CostBreakdown, AnalysisError> {
    if c.b == 0 || c.t == 0 || c.h == 0 {
        return Err(AnalysisError::Domain(format!(
            "b, t and h must be positive, got b={} t={} h={}",
            c.b, c.t, c.h
        )));
    }
    let (b, t, s, h) = (c.b as u128, c.t as u128, c.s as u128, c.h as u128);
    Ok(CostBreakdown {
        qkv: StageCost::new(3 * 2 * b * t * h * h, 3 * (b * t * h + h * h)),
        sdpa: StageCost::new(2 * 2 * b * h * t * (t + s), b * h * t + 2 * b * h * (t + s)),
        output: StageCost::new(2 * b * t * h * h, b * t * h + h * h),
    })
}

impl CostBreakdown {
    /// Roofline time of the three stages in FLOP units: each stage is bound
    /// by compute or by reads at `flops_per_read` machine balance.
    pub fn roofline_time(&self, flops_per_read: f64) -> f64 {
        [self.qkv, self.sdpa, self.output]
            .iter()
            .map(|s| (s.flops as f64).max(s.reads as f64 * flops_per_read))
            .sum()
    }
}

/// Chance that at least one of `b` rows takes a long acceptance in a step,
/// each independently with probability `p`.
pub fn long_seq_probability(p: f64, b: u64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::Domain(format!("p={p} is not a probability")));
    }
    if b == 0 {
        return Err(AnalysisError::Domain("b must be at least 1".into()));
    }
    let miss = match i32::try_from(b) {
        Ok(b) => (1.0 - p).powi(b),
        Err(_) => (1.0 - p).powf(b as f64),
    };
    Ok(1.0 - miss)
}
