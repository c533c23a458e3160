//! What to prefetch and when.
//!
//! Candidates are ranked by preference score and cut to a budget prefix.
//! The selected batch is then placed to finish just before the predicted
//! WiFi departure, or run right away inside an open WiFi tail window.
//! Nothing here ever plans a cellular transfer.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::netpredict::FetchTimeEstimator;
use crate::preference::PreferenceModel;
use crate::trace::{Timestamp, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub article_id: String,
    pub score: f64,
    pub size_bytes: u64,
    pub est_fetch_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Maximum prefetches per WiFi session.
    pub budget_count: usize,
    /// Maximum prefetched bytes per WiFi session; 0 means unlimited.
    pub budget_bytes: u64,
    /// Weight of the keyword share in the preference blend.
    pub alpha: f64,
    pub safety_margin_s: f64,
    pub min_score: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            budget_count: 10,
            budget_bytes: 0,
            alpha: 0.6,
            safety_margin_s: 30.0,
            min_score: 0.05,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("scheduler.alpha must lie in [0,1], got {}", self.alpha));
        }
        if !(self.safety_margin_s.is_finite() && self.safety_margin_s >= 0.0) {
            return Err(format!(
                "scheduler.safety_margin_s must be non-negative, got {}",
                self.safety_margin_s
            ));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(format!("scheduler.min_score must lie in [0,1], got {}", self.min_score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedJob {
    pub article_id: String,
    pub planned_start: Timestamp,
    pub est_fetch_s: f64,
}

impl PlannedJob {
    pub fn planned_end(&self) -> f64 {
        self.planned_start.secs() + self.est_fetch_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefetchPlan {
    pub jobs: Vec<PlannedJob>,
    pub planned_completion: Timestamp,
}

impl PrefetchPlan {
    pub fn empty(at: Timestamp) -> Self {
        PrefetchPlan {
            jobs: Vec::new(),
            planned_completion: at,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }
}

/// Descending score, ties to the smaller article id.
pub fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.article_id.cmp(&b.article_id))
}

/// Everything published by `now` that is neither read nor cached, has some
/// keyword or path affinity, and scores at least `min_score`. Returned in
/// rank order.
pub fn gather_candidates(
    trace: &Trace,
    now: Timestamp,
    model: &PreferenceModel,
    read: &BTreeSet<String>,
    cached: &BTreeSet<String>,
    estimator: &FetchTimeEstimator,
    cfg: &SchedulerConfig,
) -> Vec<Candidate> {
    let est = estimator.estimate_fetch();
    let mut out: Vec<Candidate> = trace
        .articles()
        .iter()
        .filter(|a| a.published_at <= now && !read.contains(&a.id) && !cached.contains(&a.id))
        .filter_map(|a| {
            let s = model.score(a, cfg.alpha);
            let affinity = s.kw_component > 0.0 || s.path_component > 0.0;
            (affinity && s.value >= cfg.min_score).then(|| Candidate {
                article_id: a.id.clone(),
                score: s.value,
                size_bytes: a.size_bytes,
                est_fetch_s: est,
            })
        })
        .collect();
    out.sort_by(rank_order);
    out
}

/// The longest rank-order prefix within both budgets. No skipping ahead
/// past an item that does not fit.
pub fn select(candidates: &[Candidate], budget_count: usize, budget_bytes: u64) -> Vec<Candidate> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(rank_order);
    let mut bytes = 0u64;
    let mut out = Vec::new();
    for c in ranked {
        if out.len() >= budget_count {
            break;
        }
        bytes = bytes.saturating_add(c.size_bytes);
        if budget_bytes > 0 && bytes > budget_bytes {
            break;
        }
        out.push(c);
    }
    out
}

/// Places `selected` (already in rank order) back to back so the batch
/// ends as close as possible to `departure − margin` without starting
/// before `now`. Lowest-ranked jobs are dropped until the rest fit.
pub fn plan_delayed(selected: &[Candidate], now: Timestamp, departure: Timestamp, margin: f64) -> PrefetchPlan {
    let deadline = departure.secs() - margin;
    let mut keep = selected.len();
    while keep > 0 {
        if let Some(plan) = place(&selected[..keep], now.secs(), deadline) {
            return plan;
        }
        keep -= 1;
    }
    PrefetchPlan::empty(now)
}

/// Same batch, started immediately.
pub fn plan_eager(selected: &[Candidate], now: Timestamp, departure: Timestamp, margin: f64) -> PrefetchPlan {
    let deadline = departure.secs() - margin;
    let mut keep = selected.len();
    while keep > 0 {
        let (jobs, end) = chain(&selected[..keep], now.secs());
        if end <= deadline {
            return PrefetchPlan {
                jobs,
                planned_completion: Timestamp::from_secs(end),
            };
        }
        keep -= 1;
    }
    PrefetchPlan::empty(now)
}

fn chain(jobs: &[Candidate], start: f64) -> (Vec<PlannedJob>, f64) {
    let mut t = start;
    let planned = jobs
        .iter()
        .map(|c| {
            let j = PlannedJob {
                article_id: c.article_id.clone(),
                planned_start: Timestamp::from_secs(t),
                est_fetch_s: c.est_fetch_s,
            };
            t += c.est_fetch_s;
            j
        })
        .collect();
    (planned, t)
}

fn place(jobs: &[Candidate], now: f64, deadline: f64) -> Option<PrefetchPlan> {
    let total: f64 = jobs.iter().map(|c| c.est_fetch_s).sum();
    let mut start = (deadline - total).max(now);
    // Summing the chain can round past the deadline; walk the start back.
    for _ in 0..64 {
        if start < now || start < 0.0 {
            return None;
        }
        let (planned, end) = chain(jobs, start);
        if end <= deadline {
            return Some(PrefetchPlan {
                jobs: planned,
                planned_completion: Timestamp::from_secs(end),
            });
        }
        start = (start - (end - deadline)).min(start.next_down());
    }
    None
}

/// The longest rank-order prefix of `pending` that finishes, run back to
/// back from `now`, by both the tail end and the predicted next request.
pub fn piggyback(
    pending: &[Candidate],
    tail_open_until: Timestamp,
    now: Timestamp,
    predicted_next_request: Timestamp,
) -> Vec<Candidate> {
    let limit = tail_open_until.min(predicted_next_request).secs();
    let mut t = now.secs();
    pending
        .iter()
        .take_while(|c| {
            t += c.est_fetch_s;
            t <= limit
        })
        .cloned()
        .collect()
}

/// A job of `est` seconds started at `now` ends no later than the
/// predicted next request.
pub fn non_interference(est: f64, now: Timestamp, predicted_next_request: Timestamp) -> bool {
    now.secs() + est <= predicted_next_request.secs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::KeywordParams;
    use crate::trace::{Article, NetInterval, ReadEvent, SitePath};
    use proptest::prelude::*;

    fn cand(id: &str, score: f64, size: u64, est: f64) -> Candidate {
        Candidate {
            article_id: id.into(),
            score,
            size_bytes: size,
            est_fetch_s: est,
        }
    }

    fn ts(s: f64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    fn ids(cs: &[Candidate]) -> Vec<&str> {
        cs.iter().map(|c| c.article_id.as_str()).collect()
    }

    #[test]
    fn select_examples() {
        let cs = [cand("a", 0.9, 1, 1.0), cand("b", 0.8, 1, 1.0), cand("c", 0.7, 1, 1.0)];
        assert_eq!(ids(&select(&cs, 2, 0)), ["a", "b"]);
        assert!(select(&cs, 0, 0).is_empty());

        let sized = [
            cand("a", 0.9, 600, 1.0),
            cand("b", 0.8, 500, 1.0),
            cand("c", 0.7, 100, 1.0),
        ];
        assert_eq!(ids(&select(&sized, 3, 700)), ["a"]);
    }

    #[test]
    fn byte_prefix_is_not_the_best_subset() {
        // Exhaustive check over all 2^3 subsets under the 700-byte limit.
        let sized = [
            cand("a", 0.9, 600, 1.0),
            cand("b", 0.8, 500, 1.0),
            cand("c", 0.7, 100, 1.0),
        ];
        let mut best = 0.0f64;
        for mask in 0u32..8 {
            let pick: Vec<&Candidate> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| &sized[i]).collect();
            if pick.iter().map(|c| c.size_bytes).sum::<u64>() <= 700 {
                best = best.max(pick.iter().map(|c| c.score).sum());
            }
        }
        let prefix: f64 = select(&sized, 3, 700).iter().map(|c| c.score).sum();
        assert_eq!(prefix, 0.9);
        assert!((best - 1.6).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let cs = [cand("b", 0.5, 1, 1.0), cand("a", 0.5, 1, 1.0)];
        assert_eq!(ids(&select(&cs, 1, 0)), ["a"]);
    }

    #[test]
    fn delayed_examples() {
        let p = plan_delayed(&[cand("a", 0.9, 1, 5.0)], ts(0.0), ts(100.0), 5.0);
        assert_eq!(p.jobs[0].planned_start, ts(90.0));
        assert_eq!(p.planned_completion, ts(95.0));

        let two = [cand("hi", 0.9, 1, 5.0), cand("lo", 0.4, 1, 5.0)];
        let p = plan_delayed(&two, ts(95.0), ts(100.0), 0.0);
        assert_eq!(ids_of(&p), ["hi"]);
        assert_eq!(p.jobs[0].planned_start, ts(95.0));

        let p = plan_delayed(&two, ts(120.0), ts(100.0), 0.0);
        assert!(p.is_empty());
    }

    fn ids_of(p: &PrefetchPlan) -> Vec<&str> {
        p.jobs.iter().map(|j| j.article_id.as_str()).collect()
    }

    #[test]
    fn piggyback_examples() {
        let jobs = [cand("a", 0.9, 1, 4.0), cand("b", 0.8, 1, 4.0), cand("c", 0.7, 1, 4.0)];
        assert_eq!(ids(&piggyback(&jobs, ts(10.0), ts(0.0), ts(30.0))), ["a", "b"]);
        assert!(piggyback(&jobs, ts(10.0), ts(0.0), ts(3.0)).is_empty());
        assert!(piggyback(&[], ts(10.0), ts(0.0), ts(30.0)).is_empty());
    }

    #[test]
    fn non_interference_examples() {
        assert!(non_interference(5.0, ts(0.0), ts(10.0)));
        assert!(!non_interference(5.0, ts(6.0), ts(10.0)));
        assert!(non_interference(5.0, ts(5.0), ts(10.0)));
    }

    fn article(id: &str, published: f64, section: &str, kw: &[&str]) -> Article {
        Article {
            id: id.into(),
            published_at: ts(published),
            path: SitePath::new("news", section),
            keywords: kw.iter().map(|s| s.to_string()).collect(),
            size_bytes: 100,
        }
    }

    #[test]
    fn gather_examples() {
        let arts = vec![
            article("a", 10.0, "tech", &["chip"]),
            article("b", 10.0, "sport", &["ball"]),
            article("c", 500.0, "tech", &["chip"]),
            article("seen", 0.0, "tech", &["chip"]),
        ];
        let trace = Trace::new(
            arts,
            vec![ReadEvent {
                at: ts(1.0),
                article_id: "seen".into(),
            }],
            vec![NetInterval::wifi(0.0, 1000.0, 1e4, "home")],
        )
        .unwrap();
        let est = FetchTimeEstimator::new(2.0);
        let cfg = SchedulerConfig {
            min_score: 0.5,
            ..SchedulerConfig::default()
        };
        let none = BTreeSet::new();
        let mut model = PreferenceModel::new(KeywordParams::default());

        // nothing published yet
        assert!(gather_candidates(&trace, ts(5.0), &model, &none, &none, &est, &cfg).is_empty());
        // nothing learned: no affinity
        assert!(gather_candidates(&trace, ts(20.0), &model, &none, &none, &est, &cfg).is_empty());

        model.observe(trace.article("seen").unwrap());
        let read: BTreeSet<String> = ["seen".to_string()].into();
        let got = gather_candidates(&trace, ts(20.0), &model, &read, &none, &est, &cfg);
        assert_eq!(ids(&got), ["a"]);
        assert_eq!(got[0].score, 1.0);
        assert_eq!(got[0].est_fetch_s, 2.0);

        let cached: BTreeSet<String> = ["a".to_string()].into();
        assert!(gather_candidates(&trace, ts(20.0), &model, &read, &cached, &est, &cfg).is_empty());
    }

    #[test]
    fn gather_applies_min_score() {
        // weights a=5, b=3, c=2 with alpha=1: x=[a,b] scores 0.8, y=[b] scores 0.3
        let trace = Trace::new(
            vec![article("x", 0.0, "s", &["a", "b"]), article("y", 0.0, "s", &["b"])],
            vec![],
            vec![NetInterval::wifi(0.0, 10.0, 1.0, "ap")],
        )
        .unwrap();
        let mut model = PreferenceModel::new(KeywordParams::default());
        model.keywords.observe_keywords(&["a"; 5]);
        model.keywords.observe_keywords(&["b"; 3]);
        model.keywords.observe_keywords(&["c"; 2]);
        let cfg = SchedulerConfig {
            alpha: 1.0,
            min_score: 0.5,
            ..SchedulerConfig::default()
        };
        let none = BTreeSet::new();
        let mut est = FetchTimeEstimator::new(2.0);
        est.record_fetch(3.0).unwrap();
        let all = gather_candidates(
            &trace,
            ts(1.0),
            &model,
            &none,
            &none,
            &est,
            &SchedulerConfig { min_score: 0.0, ..cfg },
        );
        assert_eq!(all.iter().map(|c| c.score).collect::<Vec<_>>(), [0.8, 0.3]);
        let got = gather_candidates(&trace, ts(1.0), &model, &none, &none, &est, &cfg);
        assert_eq!(ids(&got), ["x"]);
        assert_eq!(got[0].est_fetch_s, 3.0);
    }

    fn cands() -> impl Strategy<Value = Vec<Candidate>> {
        proptest::collection::vec((0.0f64..1.0, 1u64..1000, 0.1f64..20.0), 0..12).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (s, b, e))| cand(&format!("c{i:02}"), s, b, e))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn budget_selection_is_prefix(cs in cands(), b in 0usize..12, bytes in 0u64..5000) {
            let small = select(&cs, b, bytes);
            let large = select(&cs, b + 1, bytes);
            prop_assert!(small.len() <= large.len());
            prop_assert_eq!(&large[..small.len()], &small[..]);
        }

        #[test]
        fn plans_meet_the_deadline(
            cs in cands(),
            now in 0.0f64..1000.0,
            ahead in -50.0f64..300.0,
            margin in 0.0f64..60.0,
        ) {
            let mut sel = cs.clone();
            sel.sort_by(rank_order);
            let dep = Timestamp::new(now + ahead).unwrap_or(Timestamp::ZERO);
            for plan in [plan_delayed(&sel, ts(now), dep, margin), plan_eager(&sel, ts(now), dep, margin)] {
                if !plan.is_empty() {
                    prop_assert!(plan.planned_completion.secs() <= dep.secs() - margin);
                    prop_assert!(plan.jobs[0].planned_start >= ts(now));
                    for w in plan.jobs.windows(2) {
                        prop_assert!(w[0].planned_end() <= w[1].planned_start.secs());
                    }
                    let n = plan.jobs.len();
                    prop_assert_eq!(ids_of(&plan), ids(&sel[..n]));
                }
            }
        }
    }
}
