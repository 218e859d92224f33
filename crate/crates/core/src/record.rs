//! Per-run outcome records shared by the algorithm modules.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::reservoir::ArmId;

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    /// Output arm, `None` when the algorithm declared failure.
    pub chosen: Option<ArmId>,
    /// True mean of the output arm (evaluation only).
    pub true_mean: Option<f64>,
    pub samples_used: u64,
    pub arms_touched: u64,
    /// The success threshold the run is judged against.
    pub target: f64,
    pub success: bool,
    /// Some derived parameter had to be clamped into its valid range.
    pub degenerate_params: bool,
    /// The estimation stage ran out of budget before the final stage started.
    pub estimation_exhausted: bool,
    /// Quantile estimate produced by the run, if any.
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEvent>>,
}

impl RunRecord {
    pub(crate) fn new(target: f64) -> Self {
        RunRecord {
            chosen: None,
            true_mean: None,
            samples_used: 0,
            arms_touched: 0,
            target,
            success: false,
            degenerate_params: false,
            estimation_exhausted: false,
            estimate: None,
            trace: None,
        }
    }

    /// Writes the checkpoint trace as JSON lines.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        for ev in self.trace.iter().flatten() {
            serde_json::to_writer(&mut out, ev).map_err(|e| crate::Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Which comparison a checkpoint uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// First checkpoint, raw mean against `α − ϱ`.
    Initial,
    /// Raw mean against a threshold falling by `1/√ln N` per checkpoint.
    Early,
    /// Angle of the mean against a threshold falling in Fisher-distance steps.
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Reject,
    /// Threshold below the range of the statistic, so the check cannot reject.
    Vacuous,
    Accept,
}

/// One checkpoint evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEvent {
    pub arm: ArmId,
    pub checkpoint: usize,
    pub phase: Phase,
    pub pulls: u64,
    pub empirical_mean: f64,
    /// Raw-mean threshold, or angle threshold in the Fisher phase.
    pub threshold: f64,
    pub decision: Decision,
}
