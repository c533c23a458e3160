//! Browser bindings: an energy timeline explorer, a one-shot simulation and
//! a budget sweep. Everything crosses the boundary as JSON text.

use newsfetch::energy::{RadioKind, RadioState, Segment};
use newsfetch::sim::{run_with, Selection, SimOptions};
use newsfetch::synth::{generate, SynthParams};
use newsfetch::{Config, EnergyLedger, EnergyParams, MetricsReport, Trace};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
pub struct TransferIn {
    pub kind: RadioKind,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Serialize)]
pub struct Timeline {
    pub segments: Vec<Segment>,
    pub joules: f64,
    pub joules_by_state: Vec<(RadioState, f64)>,
    pub seconds_by_state: Vec<(RadioState, f64)>,
}

/// Accounts the transfers (sorted by start) on a fresh ledger with default
/// radio parameters.
pub fn timeline(transfers_json: &str, horizon: f64) -> Result<Timeline, String> {
    let mut transfers: Vec<TransferIn> = serde_json::from_str(transfers_json).map_err(|e| e.to_string())?;
    transfers.sort_by(|a, b| a.start.total_cmp(&b.start));
    let params = EnergyParams::default();
    let mut ledger = EnergyLedger::new(horizon, params);
    for t in &transfers {
        ledger
            .account_transfer(t.kind, t.start, t.duration)
            .map_err(|e| e.to_string())?;
    }
    Ok(Timeline {
        segments: ledger.timeline().to_vec(),
        joules: ledger.total_energy(),
        joules_by_state: ledger.joules_by_state(&params).into_iter().collect(),
        seconds_by_state: ledger.state_seconds().into_iter().collect(),
    })
}

fn synth_trace(seed: u64, days: u32) -> Result<Trace, String> {
    generate(&SynthParams {
        seed,
        days,
        ..SynthParams::default()
    })
    .map_err(|e| e.to_string())
}

fn options(random: bool) -> SimOptions {
    SimOptions {
        selection: if random {
            Selection::Random
        } else {
            Selection::Preference
        },
        ..SimOptions::default()
    }
}

pub fn simulate_report(seed: u64, days: u32, budget: usize, random: bool) -> Result<MetricsReport, String> {
    let trace = synth_trace(seed, days)?;
    let mut cfg = Config::default();
    cfg.scheduler.budget_count = budget;
    Ok(run_with(&trace, &cfg, options(random)).report)
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub budget: usize,
    pub preference: MetricsReport,
    pub random: MetricsReport,
}

/// Both rankings at budgets 0..=max_budget on one generated trace.
pub fn sweep_points(seed: u64, days: u32, max_budget: usize) -> Result<Vec<SweepPoint>, String> {
    let trace = synth_trace(seed, days)?;
    Ok((0..=max_budget)
        .map(|budget| {
            let mut cfg = Config::default();
            cfg.scheduler.budget_count = budget;
            SweepPoint {
                budget,
                preference: run_with(&trace, &cfg, options(false)).report,
                random: run_with(&trace, &cfg, options(true)).report,
            }
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

/// `transfers` is a JSON array of `{kind: "WiFi"|"Cellular", start, duration}`.
#[wasm_bindgen]
pub fn energy_timeline(transfers: &str, horizon: f64) -> Result<String, JsValue> {
    to_js(timeline(transfers, horizon))
}

#[wasm_bindgen]
pub fn simulate(seed: u32, days: u32, budget: u32, random: bool) -> Result<String, JsValue> {
    to_js(simulate_report(seed as u64, days, budget as usize, random))
}

#[wasm_bindgen]
pub fn sweep(seed: u32, days: u32, max_budget: u32) -> Result<String, JsValue> {
    to_js(sweep_points(seed as u64, days, max_budget as usize))
}
