//! History-based predictions: when the user leaves the current WiFi network,
//! when the next browsing request arrives, and how long one page fetch takes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

fn positive(what: &'static str, value: f64) -> Result<f64, PredictError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PredictError::NonPositive { what, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorParams {
    /// Quantile of past session durations used as the stay estimate.
    pub session_quantile: f64,
    /// Quantile of past inter-request gaps used for the next request.
    pub gap_quantile: f64,
    pub cold_session_s: f64,
    pub cold_gap_s: f64,
    pub cold_fetch_s: f64,
}

impl Default for PredictorParams {
    fn default() -> Self {
        PredictorParams {
            session_quantile: 0.25,
            gap_quantile: 0.25,
            cold_session_s: 600.0,
            cold_gap_s: 300.0,
            cold_fetch_s: 2.0,
        }
    }
}

impl PredictorParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, q) in [
            ("predictor.session_quantile", self.session_quantile),
            ("predictor.gap_quantile", self.gap_quantile),
        ] {
            if !(q > 0.0 && q < 1.0) {
                return Err(format!("{name} must lie in (0,1), got {q}"));
            }
        }
        for (name, v) in [
            ("predictor.cold_session_s", self.cold_session_s),
            ("predictor.cold_gap_s", self.cold_gap_s),
            ("predictor.cold_fetch_s", self.cold_fetch_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// The ⌈q·n⌉-th smallest value (1-based), or `None` for an empty slice.
///
/// `q·n` is nudged down by 1e-9 before rounding up so that products such as
/// `0.1 · 30 = 3.0000000000000004` select rank 3, not 4.
pub fn nearest_rank(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let rank = ((q * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[rank - 1])
}

/// Completed WiFi session durations, per access point and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHistory {
    per_ap: BTreeMap<String, Vec<f64>>,
    global: Vec<f64>,
    quantile: f64,
    cold_start_s: f64,
}

impl SessionHistory {
    pub fn new(quantile: f64, cold_start_s: f64) -> Self {
        SessionHistory {
            per_ap: BTreeMap::new(),
            global: Vec::new(),
            quantile,
            cold_start_s,
        }
    }

    pub fn record_session(&mut self, ap_id: &str, duration: f64) -> Result<(), PredictError> {
        let d = positive("session duration", duration)?;
        self.per_ap.entry(ap_id.to_owned()).or_default().push(d);
        self.global.push(d);
        Ok(())
    }

    pub fn durations(&self, ap_id: &str) -> &[f64] {
        self.per_ap.get(ap_id).map_or(&[], Vec::as_slice)
    }

    pub fn global(&self) -> &[f64] {
        &self.global
    }

    /// Expected stay at `ap_id`, falling back to all sessions and then to the
    /// cold-start default.
    pub fn expected_stay(&self, ap_id: &str) -> f64 {
        nearest_rank(self.durations(ap_id), self.quantile)
            .or_else(|| nearest_rank(&self.global, self.quantile))
            .unwrap_or(self.cold_start_s)
    }

    pub fn predict_departure(&self, ap_id: &str, session_start: Timestamp) -> Timestamp {
        session_start + self.expected_stay(ap_id)
    }
}

/// Gaps between consecutive user requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistory {
    gaps: Vec<f64>,
    quantile: f64,
    cold_start_s: f64,
}

impl GapHistory {
    pub fn new(quantile: f64, cold_start_s: f64) -> Self {
        GapHistory {
            gaps: Vec::new(),
            quantile,
            cold_start_s,
        }
    }

    pub fn record_gap(&mut self, gap: f64) -> Result<(), PredictError> {
        self.gaps.push(positive("request gap", gap)?);
        Ok(())
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn predict_next_request(&self, last_request: Timestamp) -> Timestamp {
        last_request + nearest_rank(&self.gaps, self.quantile).unwrap_or(self.cold_start_s)
    }
}

/// Running mean of observed fetch durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchTimeEstimator {
    count: u64,
    total_s: f64,
    cold_start_s: f64,
}

impl FetchTimeEstimator {
    pub fn new(cold_start_s: f64) -> Self {
        FetchTimeEstimator {
            count: 0,
            total_s: 0.0,
            cold_start_s,
        }
    }

    pub fn record_fetch(&mut self, duration: f64) -> Result<(), PredictError> {
        self.total_s += positive("fetch duration", duration)?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_seconds(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_s / self.count as f64
        }
    }

    pub fn estimate_fetch(&self) -> f64 {
        if self.count == 0 {
            self.cold_start_s
        } else {
            self.mean_seconds()
        }
    }
}

/// All three predictors, built from one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPredictor {
    pub sessions: SessionHistory,
    pub gaps: GapHistory,
    pub fetch: FetchTimeEstimator,
}

impl NetPredictor {
    pub fn new(params: &PredictorParams) -> Self {
        NetPredictor {
            sessions: SessionHistory::new(params.session_quantile, params.cold_session_s),
            gaps: GapHistory::new(params.gap_quantile, params.cold_gap_s),
            fetch: FetchTimeEstimator::new(params.cold_fetch_s),
        }
    }
}
