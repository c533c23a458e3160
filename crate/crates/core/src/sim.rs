//! Deterministic discrete-event replay of a trace through the preference
//! model, the predictors, the scheduler and the energy ledger.
//!
//! Events at the same instant run in a fixed order: network boundaries,
//! user reads, transfer completions, prefetch starts, refresh ticks.
//! Foreground traffic always wins: a demand fetch aborts a running prefetch,
//! and no prefetch starts while a demand fetch is on the air.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::energy::{EnergyLedger, Purpose, RadioKind};
use crate::netpredict::NetPredictor;
use crate::preference::PreferenceModel;
use crate::scheduler::{self, Candidate, PrefetchPlan};
use crate::trace::{NetKind, Timestamp, Trace};

/// How prefetch candidates are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Selection {
    /// By learned preference score.
    #[default]
    Preference,
    /// By a fixed pseudo-random key per article (ablation).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlanMode {
    /// Finish just before the predicted departure.
    #[default]
    Delayed,
    /// Start as soon as possible.
    Eager,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub selection: Selection,
    pub plan_mode: PlanMode,
    pub piggyback: bool,
    /// Test mode: the next-request prediction is the actual next read time.
    pub next_request_oracle: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            selection: Selection::Preference,
            plan_mode: PlanMode::Delayed,
            piggyback: true,
            next_request_oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fetched_at: Timestamp,
    pub size_bytes: u64,
    pub read: bool,
}

/// Flat evaluation summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reads: u64,
    pub hits: u64,
    pub misses_wifi: u64,
    pub misses_cell: u64,
    pub misses_unavailable: u64,
    pub hit_ratio: f64,
    pub cellular_bytes: u64,
    pub wifi_demand_bytes: u64,
    pub prefetch_bytes: u64,
    pub wasted_bytes: u64,
    pub prefetch_jobs_completed: u64,
    pub prefetch_jobs_aborted: u64,
    pub energy_joules: f64,
    pub baseline_energy_joules: f64,
    pub baseline_bytes: u64,
    pub bandwidth_ratio: f64,
    pub hb_metric: f64,
    pub mean_freshness_age_s: f64,
}

impl MetricsReport {
    pub fn demand_bytes(&self) -> u64 {
        self.cellular_bytes + self.wifi_demand_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.demand_bytes() + self.prefetch_bytes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    fn fill_ratios(&mut self, baseline_bytes: u64, baseline_energy: f64) {
        self.baseline_bytes = baseline_bytes;
        self.baseline_energy_joules = baseline_energy;
        let total = self.total_bytes();
        // With no demand traffic at all the ratio is anchored at 1 and grows
        // by one per prefetched byte.
        self.bandwidth_ratio = if baseline_bytes == 0 {
            1.0 + total as f64
        } else {
            total as f64 / baseline_bytes as f64
        };
        self.hb_metric = if self.bandwidth_ratio == 0.0 {
            0.0
        } else {
            self.hit_ratio / self.bandwidth_ratio
        };
    }
}

/// Field-wise `b − a` over every numeric field of two reports.
pub fn compare(a: &MetricsReport, b: &MetricsReport) -> BTreeMap<String, f64> {
    let (serde_json::Value::Object(ma), serde_json::Value::Object(mb)) =
        (serde_json::to_value(a).unwrap(), serde_json::to_value(b).unwrap())
    else {
        unreachable!("reports serialize as objects")
    };
    ma.iter()
        .filter_map(|(k, va)| {
            let x = va.as_f64()?;
            let y = mb.get(k)?.as_f64()?;
            Some((k.clone(), y - x))
        })
        .collect()
}

/// A delayed plan as the simulator emitted it, with the deadline it had
/// to meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub made_at: Timestamp,
    pub predicted_departure: Timestamp,
    pub deadline: f64,
    pub plan: PrefetchPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshnessSample {
    pub article_id: String,
    pub fetched_at: Timestamp,
    pub read_at: Timestamp,
}

impl FreshnessSample {
    pub fn age(&self) -> f64 {
        self.read_at - self.fetched_at
    }
}

/// Everything a single pass produces, for callers that need more than the
/// summary numbers.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub ledger: EnergyLedger,
    pub model: PreferenceModel,
    pub predictor: NetPredictor,
    pub cache: BTreeMap<String, CacheEntry>,
    pub freshness: Vec<FreshnessSample>,
    pub plans: Vec<PlanRecord>,
}

/// Runs the trace with prefetching, then a demand-only baseline pass, and
/// fills in the ratio fields from the two.
pub fn run(trace: &Trace, config: &Config) -> MetricsReport {
    run_with(trace, config, SimOptions::default()).report
}

pub fn run_with(trace: &Trace, config: &Config, options: SimOptions) -> SimOutcome {
    let mut outcome = simulate(trace, config, options);
    let baseline = if config.scheduler.budget_count == 0 {
        outcome.report.clone()
    } else {
        let mut base_cfg = *config;
        base_cfg.scheduler.budget_count = 0;
        simulate(trace, &base_cfg, options).report
    };
    outcome
        .report
        .fill_ratios(baseline.demand_bytes(), baseline.energy_joules);
    outcome
}

/// One pass with no baseline; ratio fields are left at zero.
pub fn simulate(trace: &Trace, config: &Config, options: SimOptions) -> SimOutcome {
    Sim::new(trace, config, options).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    NetBoundary(usize),
    Read(usize),
    DemandDone,
    PrefetchDone(u64),
    PrefetchStart(u64),
    Refresh,
}

impl EventKind {
    fn class(self) -> u8 {
        match self {
            EventKind::NetBoundary(_) => 0,
            EventKind::Read(_) => 1,
            EventKind::DemandDone => 2,
            EventKind::PrefetchDone(_) => 3,
            EventKind::PrefetchStart(_) => 4,
            EventKind::Refresh => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    at: Timestamp,
    seq: u64,
    kind: EventKind,
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .cmp(&self.at)
            .then_with(|| other.kind.class().cmp(&self.kind.class()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Session {
    ap: String,
    start: Timestamp,
    predicted_departure: Timestamp,
    jobs_used: usize,
    bytes_used: u64,
}

struct RunningJob {
    id: u64,
    article_id: String,
    start: f64,
    end: f64,
    size: u64,
    bandwidth: f64,
}

struct Sim<'a> {
    trace: &'a Trace,
    cfg: &'a Config,
    opts: SimOptions,
    queue: BinaryHeap<Event>,
    seq: u64,
    model: PreferenceModel,
    predictor: NetPredictor,
    ledger: EnergyLedger,
    cache: BTreeMap<String, CacheEntry>,
    cached_ids: BTreeSet<String>,
    read_ids: BTreeSet<String>,
    net_idx: usize,
    session: Option<Session>,
    running: Option<RunningJob>,
    next_job_id: u64,
    plan_gen: u64,
    batch: VecDeque<Candidate>,
    demand_busy_until: f64,
    last_request: Option<Timestamp>,
    read_cursor: usize,
    random_keys: BTreeMap<String, f64>,
    freshness: Vec<FreshnessSample>,
    plans: Vec<PlanRecord>,
    report: MetricsReport,
}

impl<'a> Sim<'a> {
    fn new(trace: &'a Trace, cfg: &'a Config, opts: SimOptions) -> Self {
        let random_keys = match opts.selection {
            Selection::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                trace
                    .articles()
                    .iter()
                    .map(|a| (a.id.clone(), rng.gen::<f64>()))
                    .collect()
            }
            Selection::Preference => BTreeMap::new(),
        };
        Sim {
            trace,
            cfg,
            opts,
            queue: BinaryHeap::new(),
            seq: 0,
            model: PreferenceModel::new(cfg.preference),
            predictor: NetPredictor::new(&cfg.predictor),
            ledger: EnergyLedger::new(trace.horizon().secs(), cfg.energy),
            cache: BTreeMap::new(),
            cached_ids: BTreeSet::new(),
            read_ids: BTreeSet::new(),
            net_idx: 0,
            session: None,
            running: None,
            next_job_id: 0,
            plan_gen: 0,
            batch: VecDeque::new(),
            demand_busy_until: 0.0,
            last_request: None,
            read_cursor: 0,
            random_keys,
            freshness: Vec::new(),
            plans: Vec::new(),
            report: MetricsReport::default(),
        }
    }

    fn push(&mut self, at: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            at: Timestamp::new(at).expect("event times are valid"),
            seq: self.seq,
            kind,
        });
    }

    fn run(mut self) -> SimOutcome {
        let horizon = self.trace.horizon().secs();
        for (i, n) in self.trace.network().iter().enumerate() {
            self.push(n.start.secs(), EventKind::NetBoundary(i));
        }
        for (i, r) in self.trace.reads().iter().enumerate() {
            self.push(r.at.secs(), EventKind::Read(i));
        }
        let period = self.cfg.preference.refresh_period_s;
        let mut k = 1u64;
        while (k as f64) * period <= horizon {
            self.push(k as f64 * period, EventKind::Refresh);
            k += 1;
        }

        while let Some(ev) = self.queue.pop() {
            let now = ev.at.secs();
            if now > horizon {
                break;
            }
            match ev.kind {
                EventKind::NetBoundary(i) => self.on_boundary(i, now),
                EventKind::Read(i) => self.on_read(i, now),
                EventKind::DemandDone => self.replan(now, true),
                EventKind::PrefetchDone(id) => self.on_prefetch_done(id, now),
                EventKind::PrefetchStart(gen) => {
                    if gen == self.plan_gen {
                        self.replan(now, false);
                    }
                }
                EventKind::Refresh => {
                    self.model.keywords.refresh(ev.at);
                    self.replan(now, false);
                }
            }
        }
        self.finish(horizon)
    }

    fn finish(mut self, horizon: f64) -> SimOutcome {
        if let Some(job) = &self.running {
            if job.end <= horizon {
                let id = job.id;
                self.complete_prefetch(id);
            } else {
                self.abort_prefetch(horizon);
            }
        }
        self.close_session(horizon);

        for entry in self.cache.values().filter(|e| !e.read) {
            self.report.wasted_bytes += entry.size_bytes;
        }
        let r = &mut self.report;
        r.hit_ratio = if r.reads == 0 {
            0.0
        } else {
            r.hits as f64 / r.reads as f64
        };
        r.mean_freshness_age_s = if self.freshness.is_empty() {
            0.0
        } else {
            self.freshness.iter().map(FreshnessSample::age).sum::<f64>() / self.freshness.len() as f64
        };
        r.energy_joules = self.ledger.total_energy();

        SimOutcome {
            report: self.report,
            ledger: self.ledger,
            model: self.model,
            predictor: self.predictor,
            cache: self.cache,
            freshness: self.freshness,
            plans: self.plans,
        }
    }

    fn current_kind(&self) -> NetKind {
        self.trace.network()[self.net_idx].kind
    }

    fn current_bandwidth(&self) -> f64 {
        self.trace.network()[self.net_idx].bandwidth()
    }

    fn on_boundary(&mut self, idx: usize, now: f64) {
        if idx > 0 {
            if let Some(job) = &self.running {
                if job.end <= now {
                    let id = job.id;
                    self.complete_prefetch(id);
                }
            }
            if self.trace.network()[idx - 1].kind == NetKind::WiFi {
                self.abort_prefetch(now);
                self.close_session(now);
            }
        }
        self.net_idx = idx;
        let interval = &self.trace.network()[idx];
        if interval.kind == NetKind::WiFi {
            let ap = interval.ap_id.clone().unwrap_or_default();
            let start = interval.start;
            let predicted_departure = self.predictor.sessions.predict_departure(&ap, start);
            self.session = Some(Session {
                ap,
                start,
                predicted_departure,
                jobs_used: 0,
                bytes_used: 0,
            });
            self.replan(now, false);
        }
    }

    fn close_session(&mut self, now: f64) {
        self.batch.clear();
        self.plan_gen += 1;
        if let Some(s) = self.session.take() {
            let stayed = now - s.start.secs();
            if stayed > 0.0 {
                self.predictor
                    .sessions
                    .record_session(&s.ap, stayed)
                    .expect("positive duration");
            }
        }
    }

    fn on_read(&mut self, idx: usize, now: f64) {
        let read = &self.trace.reads()[idx];
        self.read_cursor = idx + 1;
        let article = self
            .trace
            .article(&read.article_id)
            .expect("validated traces only reference known articles");
        let at = read.at;

        self.report.reads += 1;
        self.model.observe(article);
        if let Some(last) = self.last_request {
            let gap = at - last;
            if gap > 0.0 {
                self.predictor.gaps.record_gap(gap).expect("positive gap");
            }
        }
        self.last_request = Some(at);
        self.read_ids.insert(article.id.clone());

        if let Some(entry) = self.cache.get_mut(&article.id) {
            self.report.hits += 1;
            entry.read = true;
            self.freshness.push(FreshnessSample {
                article_id: article.id.clone(),
                fetched_at: entry.fetched_at,
                read_at: at,
            });
            return;
        }

        let kind = match self.current_kind() {
            NetKind::WiFi => RadioKind::WiFi,
            NetKind::Cellular => RadioKind::Cellular,
            NetKind::None => {
                self.report.misses_unavailable += 1;
                return;
            }
        };

        // Foreground preempts background.
        self.abort_prefetch(now);
        self.batch.clear();
        self.plan_gen += 1;

        let start = now.max(self.demand_busy_until);
        let duration = article.size_bytes as f64 / self.current_bandwidth();
        self.ledger
            .record(kind, Purpose::Demand, start, duration, article.size_bytes)
            .expect("demand fetches are serialized");
        self.demand_busy_until = start + duration;
        match kind {
            RadioKind::WiFi => {
                self.report.misses_wifi += 1;
                self.report.wifi_demand_bytes += article.size_bytes;
            }
            RadioKind::Cellular => {
                self.report.misses_cell += 1;
                self.report.cellular_bytes += article.size_bytes;
            }
        }
        self.push(self.demand_busy_until, EventKind::DemandDone);
    }

    fn on_prefetch_done(&mut self, id: u64, now: f64) {
        if self.running.as_ref().map(|j| j.id) != Some(id) {
            return;
        }
        self.complete_prefetch(id);
        while let Some(next) = self.batch.pop_front() {
            if self.read_ids.contains(&next.article_id) || self.cached_ids.contains(&next.article_id) {
                continue;
            }
            if self.interferes(next.est_fetch_s, now) {
                break;
            }
            self.start_prefetch(&next.article_id, now);
            return;
        }
        self.batch.clear();
        self.replan(now, false);
    }

    fn complete_prefetch(&mut self, id: u64) {
        let Some(job) = self.running.take_if(|j| j.id == id) else {
            return;
        };
        let duration = job.end - job.start;
        self.ledger
            .record(RadioKind::WiFi, Purpose::Prefetch, job.start, duration, job.size)
            .expect("prefetches never overlap demand fetches");
        self.predictor
            .fetch
            .record_fetch(duration)
            .expect("positive fetch time");
        self.report.prefetch_bytes += job.size;
        self.report.prefetch_jobs_completed += 1;
        if let Some(s) = &mut self.session {
            s.jobs_used += 1;
            s.bytes_used += job.size;
        }
        self.cached_ids.insert(job.article_id.clone());
        self.cache.insert(
            job.article_id,
            CacheEntry {
                fetched_at: Timestamp::from_secs(job.end),
                size_bytes: job.size,
                read: false,
            },
        );
    }

    /// Stops the running job at `now`; the bytes already moved are wasted.
    fn abort_prefetch(&mut self, now: f64) {
        let Some(job) = self.running.take() else { return };
        let elapsed = (now - job.start).max(0.0);
        let bytes = ((elapsed * job.bandwidth).floor() as u64).min(job.size);
        self.ledger
            .record(RadioKind::WiFi, Purpose::Prefetch, job.start, elapsed, bytes)
            .expect("prefetches never overlap demand fetches");
        self.report.prefetch_bytes += bytes;
        self.report.wasted_bytes += bytes;
        self.report.prefetch_jobs_aborted += 1;
    }

    fn start_prefetch(&mut self, article_id: &str, now: f64) {
        let article = self.trace.article(article_id).expect("candidates are trace articles");
        let bandwidth = self.current_bandwidth();
        let id = self.next_job_id;
        self.next_job_id += 1;
        let end = now + article.size_bytes as f64 / bandwidth;
        self.running = Some(RunningJob {
            id,
            article_id: article.id.clone(),
            start: now,
            end,
            size: article.size_bytes,
            bandwidth,
        });
        self.push(end, EventKind::PrefetchDone(id));
    }

    /// Predicted time of the next user request, if one is expected after `now`.
    fn predicted_next_request(&self, now: f64) -> Option<Timestamp> {
        if self.opts.next_request_oracle {
            return self.trace.reads()[self.read_cursor..]
                .iter()
                .map(|r| r.at)
                .find(|&t| t.secs() >= now);
        }
        // A prediction already in the past carries no information.
        self.last_request
            .map(|last| self.predictor.gaps.predict_next_request(last))
            .filter(|t| t.secs() > now)
    }

    fn interferes(&self, est: f64, now: f64) -> bool {
        self.predicted_next_request(now)
            .is_some_and(|next| !scheduler::non_interference(est, Timestamp::from_secs(now), next))
    }

    fn candidates(&self, now: Timestamp) -> Vec<Candidate> {
        match self.opts.selection {
            Selection::Preference => scheduler::gather_candidates(
                self.trace,
                now,
                &self.model,
                &self.read_ids,
                &self.cached_ids,
                &self.predictor.fetch,
                &self.cfg.scheduler,
            ),
            Selection::Random => {
                let est = self.predictor.fetch.estimate_fetch();
                let mut out: Vec<Candidate> = self
                    .trace
                    .articles()
                    .iter()
                    .filter(|a| {
                        a.published_at <= now && !self.read_ids.contains(&a.id) && !self.cached_ids.contains(&a.id)
                    })
                    .map(|a| Candidate {
                        article_id: a.id.clone(),
                        score: self.random_keys[&a.id],
                        size_bytes: a.size_bytes,
                        est_fetch_s: est,
                    })
                    .collect();
                out.sort_by(scheduler::rank_order);
                out
            }
        }
    }

    /// Rebuilds the prefetch plan from the current state. `after_demand`
    /// marks a user fetch completion, where an open WiFi tail may be used.
    fn replan(&mut self, now: f64, after_demand: bool) {
        self.plan_gen += 1;
        if self.current_kind() != NetKind::WiFi
            || self.running.is_some()
            || now < self.demand_busy_until
            || !self.batch.is_empty()
        {
            return;
        }
        let Some(session) = &self.session else { return };
        let sc = &self.cfg.scheduler;
        let count_left = sc.budget_count.saturating_sub(session.jobs_used);
        let bytes_left = if sc.budget_bytes == 0 {
            0
        } else if session.bytes_used >= sc.budget_bytes {
            return;
        } else {
            sc.budget_bytes - session.bytes_used
        };
        if count_left == 0 {
            return;
        }
        let departure = session.predicted_departure;
        let t = Timestamp::from_secs(now);
        let selected = scheduler::select(&self.candidates(t), count_left, bytes_left);
        if selected.is_empty() {
            return;
        }

        if after_demand && self.opts.piggyback {
            if let Some(tail_end) = self.ledger.open_tail_until(RadioKind::WiFi, now) {
                let next = self
                    .predicted_next_request(now)
                    .unwrap_or(Timestamp::from_secs(f64::MAX));
                let mut batch: VecDeque<Candidate> =
                    scheduler::piggyback(&selected, Timestamp::from_secs(tail_end), t, next).into();
                if let Some(first) = batch.pop_front() {
                    self.batch = batch;
                    self.start_prefetch(&first.article_id, now);
                    return;
                }
            }
        }

        let margin = sc.safety_margin_s;
        let plan = match self.opts.plan_mode {
            PlanMode::Delayed => scheduler::plan_delayed(&selected, t, departure, margin),
            PlanMode::Eager => scheduler::plan_eager(&selected, t, departure, margin),
        };
        let Some(first) = plan.jobs.first().cloned() else {
            return;
        };
        self.plans.push(PlanRecord {
            made_at: t,
            predicted_departure: departure,
            deadline: departure.secs() - margin,
            plan,
        });

        if first.planned_start.secs() <= now {
            if self.interferes(first.est_fetch_s, now) {
                // Try again once the expected request has had its chance.
                if let Some(next) = self.predicted_next_request(now) {
                    self.push(next.secs(), EventKind::PrefetchStart(self.plan_gen));
                }
                return;
            }
            self.start_prefetch(&first.article_id, now);
        } else {
            self.push(first.planned_start.secs(), EventKind::PrefetchStart(self.plan_gen));
        }
    }
}
