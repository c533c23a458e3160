//! Seeded synthetic traces.
//!
//! Articles draw keywords from a Zipf popularity law. A hidden user likes a
//! random subset of keywords and site sections and reads, at Poisson times,
//! unread articles chosen in proportion to that hidden affinity. Connectivity
//! follows a daily WiFi template with jittered edges; the gaps are cellular
//! except for configured offline windows.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Article, NetInterval, ReadEvent, SitePath, Timestamp, Trace, TraceError};

const DAY: f64 = 86_400.0;
const HOUR: f64 = 3_600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiSlot {
    pub start_hour: f64,
    pub duration_hours: f64,
    pub ap_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineSlot {
    pub start_hour: f64,
    pub duration_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub seed: u64,
    pub days: u32,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub sites: usize,
    pub sections_per_site: usize,
    /// 0 disables subsections.
    pub subsections_per_section: usize,
    pub articles_per_day: usize,
    /// Mean of the Poisson read count per day.
    pub reads_per_day: f64,
    pub keywords_per_article: (usize, usize),
    pub article_bytes: (u64, u64),
    /// Daily template; a slot may run past midnight.
    pub wifi_sessions: Vec<WifiSlot>,
    /// Daily windows without any network, carved out of non-WiFi time.
    pub offline_windows: Vec<OfflineSlot>,
    /// Each session edge moves by up to this many minutes either way.
    pub jitter_minutes: f64,
    pub wifi_bandwidth: f64,
    pub cell_bandwidth: f64,
    /// Share of the vocabulary the hidden user likes.
    pub liked_keyword_share: f64,
    /// Share of (site, section) pairs the hidden user likes.
    pub liked_section_share: f64,
    /// Reader weight of an article in a liked section, on top of one per
    /// liked keyword it carries.
    pub liked_section_weight: f64,
    /// When set, reads favour articles younger than about this many hours.
    pub recency_hours: Option<f64>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 42,
            days: 14,
            vocab_size: 400,
            zipf_exponent: 0.7,
            sites: 4,
            sections_per_site: 5,
            subsections_per_section: 2,
            articles_per_day: 100,
            reads_per_day: 30.0,
            keywords_per_article: (3, 6),
            article_bytes: (20_000, 200_000),
            wifi_sessions: vec![
                WifiSlot {
                    start_hour: 9.0,
                    duration_hours: 8.0,
                    ap_id: "work".into(),
                },
                WifiSlot {
                    start_hour: 19.0,
                    duration_hours: 12.5,
                    ap_id: "home".into(),
                },
            ],
            offline_windows: vec![OfflineSlot {
                start_hour: 17.5,
                duration_hours: 0.75,
            }],
            jitter_minutes: 20.0,
            wifi_bandwidth: 500_000.0,
            cell_bandwidth: 100_000.0,
            liked_keyword_share: 0.1,
            liked_section_share: 0.25,
            liked_section_weight: 2.0,
            recency_hours: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.days == 0 {
            return bad("days must be positive".into());
        }
        if self.vocab_size == 0 || self.sites == 0 || self.sections_per_site == 0 {
            return bad("vocab_size, sites and sections_per_site must be positive".into());
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return bad(format!("zipf_exponent must be positive, got {}", self.zipf_exponent));
        }
        if !(self.reads_per_day.is_finite() && self.reads_per_day >= 0.0) {
            return bad(format!(
                "reads_per_day must be non-negative, got {}",
                self.reads_per_day
            ));
        }
        let (kmin, kmax) = self.keywords_per_article;
        if kmin == 0 || kmin > kmax {
            return bad(format!(
                "keywords_per_article ({kmin}, {kmax}) must satisfy 1 <= min <= max"
            ));
        }
        let (bmin, bmax) = self.article_bytes;
        if bmin == 0 || bmin > bmax {
            return bad(format!("article_bytes ({bmin}, {bmax}) must satisfy 1 <= min <= max"));
        }
        for bw in [self.wifi_bandwidth, self.cell_bandwidth] {
            if !(bw.is_finite() && bw > 0.0) {
                return bad(format!("bandwidths must be positive, got {bw}"));
            }
        }
        for s in &self.wifi_sessions {
            if s.ap_id.is_empty() || !(s.duration_hours > 0.0 && s.duration_hours <= 24.0) || !s.start_hour.is_finite()
            {
                return bad(format!("bad wifi slot {s:?}"));
            }
        }
        for s in &self.offline_windows {
            if !(s.duration_hours > 0.0 && s.duration_hours <= 24.0) || !s.start_hour.is_finite() {
                return bad(format!("bad offline window {s:?}"));
            }
        }
        for (name, v) in [
            ("liked_keyword_share", self.liked_keyword_share),
            ("liked_section_share", self.liked_section_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0,1], got {v}"));
            }
        }
        if !(self.jitter_minutes.is_finite() && self.jitter_minutes >= 0.0) {
            return bad("jitter_minutes must be non-negative".into());
        }
        if !(self.liked_section_weight.is_finite() && self.liked_section_weight >= 0.0) {
            return bad("liked_section_weight must be non-negative".into());
        }
        if let Some(h) = self.recency_hours {
            if !(h.is_finite() && h > 0.0) {
                return bad("recency_hours must be positive".into());
            }
        }
        Ok(())
    }
}

/// The hidden preferences a generated reader acts on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentUser {
    pub keywords: BTreeSet<String>,
    pub sections: BTreeSet<(String, String)>,
    pub section_weight: f64,
}

impl LatentUser {
    pub fn affinity(&self, article: &Article) -> f64 {
        let mut kws: Vec<&String> = article.keywords.iter().collect();
        kws.sort();
        kws.dedup();
        let liked_kw = kws.iter().filter(|k| self.keywords.contains(k.as_str())).count() as f64;
        let liked_path = self
            .sections
            .contains(&(article.path.site.clone(), article.path.section.clone()));
        0.02 + liked_kw + if liked_path { self.section_weight } else { 0.0 }
    }
}

pub fn keyword_token(rank: usize) -> String {
    format!("kw{rank:04}")
}

pub fn generate(params: &SynthParams) -> Result<Trace, SynthError> {
    generate_with_user(params).map(|(t, _)| t)
}

/// Like [`generate`], also returning the hidden user.
pub fn generate_with_user(params: &SynthParams) -> Result<(Trace, LatentUser), SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let horizon = params.days as f64 * DAY;

    let network = build_network(params, horizon, &mut rng);
    let user = latent_user(params, &mut rng);
    let articles = build_articles(params, &mut rng);
    let reads = build_reads(params, horizon, &articles, &user, &mut rng);

    Ok((Trace::new(articles, reads, network)?, user))
}

fn latent_user(p: &SynthParams, rng: &mut ChaCha8Rng) -> LatentUser {
    let n_kw = (p.liked_keyword_share * p.vocab_size as f64).round() as usize;
    let keywords = index::sample(rng, p.vocab_size, n_kw)
        .into_iter()
        .map(keyword_token)
        .collect();
    let pairs = p.sites * p.sections_per_site;
    let n_sec = (p.liked_section_share * pairs as f64).round() as usize;
    let sections = index::sample(rng, pairs, n_sec)
        .into_iter()
        .map(|i| {
            (
                site_name(i / p.sections_per_site),
                section_name(i % p.sections_per_site),
            )
        })
        .collect();
    LatentUser {
        keywords,
        sections,
        section_weight: p.liked_section_weight,
    }
}

fn site_name(i: usize) -> String {
    format!("site{i}")
}

fn section_name(i: usize) -> String {
    format!("sec{i}")
}

fn build_articles(p: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Article> {
    let zipf: Vec<f64> = (1..=p.vocab_size).map(|r| (r as f64).powf(-p.zipf_exponent)).collect();
    let vocab = WeightedIndex::new(&zipf).expect("zipf weights are positive");
    let mut out = Vec::with_capacity(p.days as usize * p.articles_per_day);
    for day in 0..p.days {
        let mut times: Vec<u32> = (0..p.articles_per_day).map(|_| rng.gen_range(0..DAY as u32)).collect();
        times.sort_unstable();
        for (i, t) in times.into_iter().enumerate() {
            let mut path = SitePath::new(
                site_name(rng.gen_range(0..p.sites)),
                section_name(rng.gen_range(0..p.sections_per_site)),
            );
            if p.subsections_per_section > 0 && rng.gen_bool(0.5) {
                path.subsection = Some(format!("sub{}", rng.gen_range(0..p.subsections_per_section)));
            }
            let n_kw = rng.gen_range(p.keywords_per_article.0..=p.keywords_per_article.1);
            let keywords = (0..n_kw).map(|_| keyword_token(vocab.sample(rng))).collect();
            out.push(Article {
                id: format!("d{day}-{i:04}"),
                published_at: Timestamp::from_secs(day as f64 * DAY + t as f64),
                path,
                keywords,
                size_bytes: rng.gen_range(p.article_bytes.0..=p.article_bytes.1),
            });
        }
    }
    out
}

fn build_reads(
    p: &SynthParams,
    horizon: f64,
    articles: &[Article],
    user: &LatentUser,
    rng: &mut ChaCha8Rng,
) -> Vec<ReadEvent> {
    let mut reads = Vec::new();
    if p.reads_per_day == 0.0 || articles.is_empty() {
        return reads;
    }
    let affinity: Vec<f64> = articles.iter().map(|a| user.affinity(a)).collect();
    let mut unread = vec![true; articles.len()];
    let rate = p.reads_per_day / DAY;
    let recency = p.recency_hours.map(|h| h * HOUR);
    let mut t = 0.0f64;
    loop {
        let u: f64 = rng.gen();
        t += (-(1.0 - u).ln() / rate).ceil().max(1.0);
        if t > horizon {
            break;
        }
        let ts = Timestamp::from_secs(t);
        // articles are sorted by publication time within and across days
        let published = articles.partition_point(|a| a.published_at <= ts);
        let weights: Vec<f64> = (0..published)
            .map(|i| {
                if unread[i] {
                    match recency {
                        Some(r) => affinity[i] * (-(t - articles[i].published_at.secs()) / r).exp(),
                        None => affinity[i],
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let Ok(pick) = WeightedIndex::new(&weights) else {
            continue;
        };
        let i = pick.sample(rng);
        unread[i] = false;
        reads.push(ReadEvent {
            at: ts,
            article_id: articles[i].id.clone(),
        });
    }
    reads
}

fn jitter(rng: &mut ChaCha8Rng, minutes: f64) -> f64 {
    if minutes == 0.0 {
        return 0.0;
    }
    (rng.gen_range(-minutes..=minutes) * 60.0).round()
}

fn build_network(p: &SynthParams, horizon: f64, rng: &mut ChaCha8Rng) -> Vec<NetInterval> {
    // (start, end, ap) WiFi spans, including those spilling in from the day before.
    let mut wifi: Vec<(f64, f64, String)> = Vec::new();
    let mut offline: Vec<(f64, f64)> = Vec::new();
    for day in -1..p.days as i64 {
        let base = day as f64 * DAY;
        for slot in &p.wifi_sessions {
            let s = base + (slot.start_hour * HOUR).round() + jitter(rng, p.jitter_minutes);
            let e = base + ((slot.start_hour + slot.duration_hours) * HOUR).round() + jitter(rng, p.jitter_minutes);
            wifi.push((s.max(0.0), e.min(horizon), slot.ap_id.clone()));
        }
        for slot in &p.offline_windows {
            let s = base + (slot.start_hour * HOUR).round();
            let e = s + (slot.duration_hours * HOUR).round();
            offline.push((s.max(0.0), e.min(horizon)));
        }
    }
    wifi.retain(|(s, e, _)| s < e);
    wifi.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64, String)> = Vec::new();
    for (s, e, ap) in wifi {
        let s = merged.last().map_or(s, |last| s.max(last.1));
        if s < e {
            merged.push((s, e, ap));
        }
    }
    offline.retain(|(s, e)| s < e);
    offline.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = Vec::new();
    let mut t = 0.0;
    let fill_gap = |from: f64, to: f64, out: &mut Vec<NetInterval>| {
        let mut cur = from;
        for &(s, e) in &offline {
            let (s, e) = (s.max(cur), e.min(to));
            if s >= e {
                continue;
            }
            if cur < s {
                out.push(NetInterval::cellular(cur, s, p.cell_bandwidth));
            }
            out.push(NetInterval::offline(s, e));
            cur = e;
        }
        if cur < to {
            out.push(NetInterval::cellular(cur, to, p.cell_bandwidth));
        }
    };
    for (s, e, ap) in merged {
        if t < s {
            fill_gap(t, s, &mut out);
        }
        out.push(NetInterval::wifi(s, e, p.wifi_bandwidth, ap));
        t = e;
    }
    if t < horizon {
        fill_gap(t, horizon, &mut out);
    }
    out
}
