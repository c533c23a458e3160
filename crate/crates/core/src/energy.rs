//! Radio energy accounting with high-power tail states.
//!
//! The ledger keeps a piecewise-constant radio timeline covering
//! `[0, horizon)`. Each transfer marks its span Active and is followed by a
//! Tail of the same radio kind. A transfer that starts while a tail is still
//! pending cuts that tail short, and a fresh tail follows the new transfer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RadioKind {
    WiFi,
    Cellular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RadioState {
    Idle,
    ActiveWiFi,
    ActiveCell,
    TailWiFi,
    TailCell,
}

impl RadioState {
    pub const ALL: [RadioState; 5] = [
        RadioState::Idle,
        RadioState::ActiveWiFi,
        RadioState::ActiveCell,
        RadioState::TailWiFi,
        RadioState::TailCell,
    ];

    pub fn active(kind: RadioKind) -> Self {
        match kind {
            RadioKind::WiFi => RadioState::ActiveWiFi,
            RadioKind::Cellular => RadioState::ActiveCell,
        }
    }

    pub fn tail(kind: RadioKind) -> Self {
        match kind {
            RadioKind::WiFi => RadioState::TailWiFi,
            RadioKind::Cellular => RadioState::TailCell,
        }
    }

    pub fn kind(self) -> Option<RadioKind> {
        match self {
            RadioState::Idle => None,
            RadioState::ActiveWiFi | RadioState::TailWiFi => Some(RadioKind::WiFi),
            RadioState::ActiveCell | RadioState::TailCell => Some(RadioKind::Cellular),
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, RadioState::ActiveWiFi | RadioState::ActiveCell)
    }
}

impl fmt::Display for RadioState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Power draw per state (watts) and tail lengths (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    pub p_idle: f64,
    pub p_active_wifi: f64,
    pub p_active_cell: f64,
    pub p_tail_wifi: f64,
    pub p_tail_cell: f64,
    pub t_tail_wifi: f64,
    pub t_tail_cell: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            p_idle: 0.05,
            p_active_wifi: 0.7,
            p_active_cell: 1.2,
            p_tail_wifi: 0.3,
            p_tail_cell: 0.6,
            t_tail_wifi: 3.0,
            t_tail_cell: 12.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.p_idle,
            self.p_active_wifi,
            self.p_active_cell,
            self.p_tail_wifi,
            self.p_tail_cell,
            self.t_tail_wifi,
            self.t_tail_cell,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("energy parameters must be finite".into());
        }
        if self.p_idle < 0.0 {
            return Err("energy.p_idle must be non-negative".into());
        }
        for (kind, tail, active) in [
            ("wifi", self.p_tail_wifi, self.p_active_wifi),
            ("cell", self.p_tail_cell, self.p_active_cell),
        ] {
            if !(self.p_idle <= tail && tail <= active) {
                return Err(format!("energy: need p_idle <= p_tail_{kind} <= p_active_{kind}"));
            }
        }
        if self.t_tail_wifi < 0.0 || self.t_tail_cell < 0.0 {
            return Err("energy tail durations must be non-negative".into());
        }
        Ok(())
    }

    pub fn power(&self, state: RadioState) -> f64 {
        match state {
            RadioState::Idle => self.p_idle,
            RadioState::ActiveWiFi => self.p_active_wifi,
            RadioState::ActiveCell => self.p_active_cell,
            RadioState::TailWiFi => self.p_tail_wifi,
            RadioState::TailCell => self.p_tail_cell,
        }
    }

    pub fn tail_len(&self, kind: RadioKind) -> f64 {
        match kind {
            RadioKind::WiFi => self.t_tail_wifi,
            RadioKind::Cellular => self.t_tail_cell,
        }
    }

    pub fn tail_power(&self, kind: RadioKind) -> f64 {
        self.power(RadioState::tail(kind))
    }

    pub fn max_active_power(&self) -> f64 {
        self.p_active_wifi.max(self.p_active_cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub state: RadioState,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// What a transfer was for. Used only for byte attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    Demand,
    Prefetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub kind: RadioKind,
    pub purpose: Purpose,
    pub start: f64,
    pub end: f64,
    pub bytes: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("transfer at {start} starts before the previous transfer at {previous}")]
    OutOfOrder { start: f64, previous: f64 },
    #[error("{kind:?} transfer at {start} overlaps an active {other:?} transfer ending at {active_end}")]
    OverlappingActive {
        kind: RadioKind,
        other: RadioKind,
        start: f64,
        active_end: f64,
    },
    #[error("invalid transfer start {start} / duration {duration}")]
    InvalidTransfer { start: f64, duration: f64 },
    #[error("timeline does not cover [0, {horizon}]")]
    IncompleteTimeline { horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    horizon: f64,
    params: EnergyParams,
    segments: Vec<Segment>,
    transfers: Vec<TransferRecord>,
}

impl EnergyLedger {
    /// An all-idle timeline over `[0, horizon)`.
    pub fn new(horizon: f64, params: EnergyParams) -> Self {
        let segments = if horizon > 0.0 {
            vec![Segment {
                state: RadioState::Idle,
                start: 0.0,
                end: horizon,
            }]
        } else {
            Vec::new()
        };
        EnergyLedger {
            horizon,
            params,
            segments,
            transfers: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn timeline(&self) -> &[Segment] {
        &self.segments
    }

    pub fn transfers(&self) -> &[TransferRecord] {
        &self.transfers
    }

    /// Accounts an untagged transfer; see [`EnergyLedger::record`].
    pub fn account_transfer(&mut self, kind: RadioKind, start: f64, duration: f64) -> Result<(), EnergyError> {
        self.record(kind, Purpose::Demand, start, duration, 0)
    }

    /// Marks `[start, start + duration)` Active on `kind`, followed by its tail.
    ///
    /// Transfers must arrive in non-decreasing start order. Anything past the
    /// horizon is clipped from the timeline, but the transfer (and its bytes)
    /// is still recorded.
    pub fn record(
        &mut self,
        kind: RadioKind,
        purpose: Purpose,
        start: f64,
        duration: f64,
        bytes: u64,
    ) -> Result<(), EnergyError> {
        if !(start.is_finite() && start >= 0.0 && duration.is_finite() && duration >= 0.0) {
            return Err(EnergyError::InvalidTransfer { start, duration });
        }
        if let Some(prev) = self.transfers.last() {
            if start < prev.start {
                return Err(EnergyError::OutOfOrder {
                    start,
                    previous: prev.start,
                });
            }
        }
        let mut end = start + duration;
        if let Some(active) = self.segments.iter().rev().find(|s| s.state.is_active()) {
            if active.end > start && duration > 0.0 {
                let other = active.state.kind().expect("active segments have a kind");
                if other != kind {
                    return Err(EnergyError::OverlappingActive {
                        kind,
                        other,
                        start,
                        active_end: active.end,
                    });
                }
                end = end.max(active.end);
            }
        }
        self.transfers.push(TransferRecord {
            kind,
            purpose,
            start,
            end: start + duration,
            bytes,
        });

        if duration == 0.0 || start >= self.horizon {
            return Ok(());
        }
        let h = self.horizon;
        let end = end.min(h);
        self.cut_at(start);
        self.push(RadioState::active(kind), start, end);
        let tail_end = (end + self.params.tail_len(kind)).min(h);
        self.push(RadioState::tail(kind), end, tail_end);
        self.push(RadioState::Idle, tail_end, h);
        Ok(())
    }

    fn cut_at(&mut self, t: f64) {
        while self.segments.last().is_some_and(|s| s.start >= t) {
            self.segments.pop();
        }
        if let Some(last) = self.segments.last_mut() {
            last.end = last.end.min(t);
        }
    }

    fn push(&mut self, state: RadioState, start: f64, end: f64) {
        if end <= start {
            return;
        }
        match self.segments.last_mut() {
            Some(last) if last.state == state && last.end == start => last.end = end,
            _ => self.segments.push(Segment { state, start, end }),
        }
    }

    /// End of the tail following the most recent transfer of `kind`, if that
    /// tail is still pending at `t`.
    pub fn open_tail_until(&self, kind: RadioKind, t: f64) -> Option<f64> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .filter(|s| s.state == RadioState::tail(kind))
            .map(|s| s.end)
    }

    /// Contiguous cover of `[0, horizon)` and every tail preceded by an
    /// active segment of its own kind.
    pub fn is_partition(&self) -> bool {
        if self.horizon <= 0.0 {
            return self.segments.is_empty();
        }
        let Some(first) = self.segments.first() else {
            return false;
        };
        let contiguous = self.segments.windows(2).all(|w| w[0].end == w[1].start);
        let tails_ok = self.segments.iter().enumerate().all(|(i, s)| match s.state {
            RadioState::TailWiFi | RadioState::TailCell => {
                i > 0 && self.segments[i - 1].state == RadioState::active(s.state.kind().unwrap())
            }
            _ => true,
        });
        first.start == 0.0
            && self.segments.last().map(|s| s.end) == Some(self.horizon)
            && contiguous
            && self.segments.iter().all(|s| s.end > s.start)
            && tails_ok
    }

    pub fn state_seconds(&self) -> BTreeMap<RadioState, f64> {
        let mut out: BTreeMap<RadioState, f64> = RadioState::ALL.iter().map(|&s| (s, 0.0)).collect();
        for s in &self.segments {
            *out.get_mut(&s.state).unwrap() += s.len();
        }
        out
    }

    pub fn joules_by_state(&self, params: &EnergyParams) -> BTreeMap<RadioState, f64> {
        let mut out: BTreeMap<RadioState, f64> = RadioState::ALL.iter().map(|&s| (s, 0.0)).collect();
        for s in &self.segments {
            *out.get_mut(&s.state).unwrap() += params.power(s.state) * s.len();
        }
        out
    }

    /// Σ power(state) × segment length, priced with `params`.
    pub fn total_energy_with(&self, params: &EnergyParams) -> Result<f64, EnergyError> {
        if !self.is_partition() {
            return Err(EnergyError::IncompleteTimeline { horizon: self.horizon });
        }
        Ok(self.segments.iter().map(|s| params.power(s.state) * s.len()).sum())
    }

    pub fn total_energy(&self) -> f64 {
        self.total_energy_with(&self.params)
            .expect("the ledger maintains a complete timeline")
    }
}
