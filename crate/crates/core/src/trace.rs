//! The simulator's input world: article publications, user reads and the
//! connectivity timeline, plus the line-delimited JSON trace format.
//!
//! Connectivity is exhaustive. Every instant of `[0, horizon]` belongs to
//! exactly one [`NetInterval`], and periods without any network are written
//! explicitly with kind `none`. Intervals are half-open `[start, end)`, except
//! that `horizon` itself resolves to the last interval.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since the trace epoch. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn new(seconds: f64) -> Option<Self> {
        (seconds.is_finite() && seconds >= 0.0).then_some(Timestamp(seconds))
    }

    /// Panics if `seconds` is negative or not finite.
    pub fn from_secs(seconds: f64) -> Self {
        Self::new(seconds).unwrap_or_else(|| panic!("invalid timestamp {seconds}"))
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for Timestamp {
    type Output = Timestamp;

    /// Saturates at zero so that subtracting a margin never produces an
    /// invalid timestamp.
    fn add(self, rhs: f64) -> Timestamp {
        Timestamp((self.0 + rhs).max(0.0))
    }
}

impl Sub<f64> for Timestamp {
    type Output = Timestamp;

    fn sub(self, rhs: f64) -> Timestamp {
        Timestamp((self.0 - rhs).max(0.0))
    }
}

impl Sub for Timestamp {
    type Output = f64;

    fn sub(self, rhs: Timestamp) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Where an article lives inside a news site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SitePath {
    pub site: String,
    pub section: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsection: Option<String>,
}

impl SitePath {
    pub fn new(site: impl Into<String>, section: impl Into<String>) -> Self {
        SitePath {
            site: site.into(),
            section: section.into(),
            subsection: None,
        }
    }

    pub fn with_subsection(mut self, subsection: impl Into<String>) -> Self {
        self.subsection = Some(subsection.into());
        self
    }

    fn is_valid(&self) -> bool {
        !self.site.is_empty() && !self.section.is_empty() && self.subsection.as_deref().is_none_or(|s| !s.is_empty())
    }
}

impl fmt::Display for SitePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.site, self.section)?;
        if let Some(sub) = &self.subsection {
            write!(f, "/{sub}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub id: String,
    pub published_at: Timestamp,
    pub path: SitePath,
    /// Lowercase tokens with multiset semantics.
    pub keywords: Vec<String>,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadEvent {
    pub at: Timestamp,
    pub article_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NetKind {
    #[serde(rename = "wifi")]
    WiFi,
    #[serde(rename = "cell")]
    Cellular,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetInterval {
    pub kind: NetKind,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Absent iff `kind` is [`NetKind::None`].
    pub bandwidth_bytes_per_s: Option<f64>,
    /// Present iff `kind` is [`NetKind::WiFi`].
    pub ap_id: Option<String>,
}

impl NetInterval {
    pub fn wifi(start: f64, end: f64, bandwidth: f64, ap_id: impl Into<String>) -> Self {
        NetInterval {
            kind: NetKind::WiFi,
            start: Timestamp::from_secs(start),
            end: Timestamp::from_secs(end),
            bandwidth_bytes_per_s: Some(bandwidth),
            ap_id: Some(ap_id.into()),
        }
    }

    pub fn cellular(start: f64, end: f64, bandwidth: f64) -> Self {
        NetInterval {
            kind: NetKind::Cellular,
            start: Timestamp::from_secs(start),
            end: Timestamp::from_secs(end),
            bandwidth_bytes_per_s: Some(bandwidth),
            ap_id: None,
        }
    }

    pub fn offline(start: f64, end: f64) -> Self {
        NetInterval {
            kind: NetKind::None,
            start: Timestamp::from_secs(start),
            end: Timestamp::from_secs(end),
            bandwidth_bytes_per_s: None,
            ap_id: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Bandwidth in bytes per second, zero when offline.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_bytes_per_s.unwrap_or(0.0)
    }

    fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("empty trace")]
    Empty,
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: invalid value: {reason}")]
    InvalidValue { line: usize, reason: String },
    #[error("duplicate article id {0:?}")]
    DuplicateArticle(String),
    #[error("read at {at} references unknown article {article_id:?}")]
    UnknownArticle { article_id: String, at: Timestamp },
    #[error("read precedes publication: article {article_id:?} read at {at}, published at {published_at}")]
    ReadBeforePublication {
        article_id: String,
        at: Timestamp,
        published_at: Timestamp,
    },
    #[error("trace has no network intervals")]
    NoNetwork,
    #[error("network intervals overlap at {at}")]
    OverlappingIntervals { at: Timestamp },
    #[error("network intervals leave a gap between {from} and {to}")]
    GappedIntervals { from: Timestamp, to: Timestamp },
    #[error("{what} at {at} lies after the trace horizon {horizon}")]
    AfterHorizon {
        what: String,
        at: Timestamp,
        horizon: Timestamp,
    },
    #[error("time {t} outside trace range [0, {horizon}]")]
    OutOfRange { t: f64, horizon: Timestamp },
}

/// A validated trace. Construct it with [`parse_trace`] or [`Trace::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    horizon: Timestamp,
    articles: Vec<Article>,
    reads: Vec<ReadEvent>,
    network: Vec<NetInterval>,
    index: HashMap<String, usize>,
}

impl Trace {
    /// Validates and normalizes the parts of a trace. Reads and network
    /// intervals are sorted (stably), articles keep their given order.
    pub fn new(
        articles: Vec<Article>,
        mut reads: Vec<ReadEvent>,
        mut network: Vec<NetInterval>,
    ) -> Result<Self, TraceError> {
        let mut index = HashMap::with_capacity(articles.len());
        for (i, a) in articles.iter().enumerate() {
            if index.insert(a.id.clone(), i).is_some() {
                return Err(TraceError::DuplicateArticle(a.id.clone()));
            }
        }

        network.sort_by_key(|n| n.start);
        let Some(first) = network.first() else {
            return Err(TraceError::NoNetwork);
        };
        if first.start != Timestamp::ZERO {
            return Err(TraceError::GappedIntervals {
                from: Timestamp::ZERO,
                to: first.start,
            });
        }
        for pair in network.windows(2) {
            match pair[1].start.cmp(&pair[0].end) {
                Ordering::Less => return Err(TraceError::OverlappingIntervals { at: pair[1].start }),
                Ordering::Greater => {
                    return Err(TraceError::GappedIntervals {
                        from: pair[0].end,
                        to: pair[1].start,
                    })
                }
                Ordering::Equal => {}
            }
        }
        let horizon = network.last().map(|n| n.end).unwrap_or_default();

        reads.sort_by_key(|r| r.at);
        for r in &reads {
            let Some(&i) = index.get(&r.article_id) else {
                return Err(TraceError::UnknownArticle {
                    article_id: r.article_id.clone(),
                    at: r.at,
                });
            };
            let published_at = articles[i].published_at;
            if r.at < published_at {
                return Err(TraceError::ReadBeforePublication {
                    article_id: r.article_id.clone(),
                    at: r.at,
                    published_at,
                });
            }
            if r.at > horizon {
                return Err(TraceError::AfterHorizon {
                    what: format!("read of {:?}", r.article_id),
                    at: r.at,
                    horizon,
                });
            }
        }
        for a in &articles {
            if a.published_at > horizon {
                return Err(TraceError::AfterHorizon {
                    what: format!("publication of {:?}", a.id),
                    at: a.published_at,
                    horizon,
                });
            }
        }

        Ok(Trace {
            horizon,
            articles,
            reads,
            network,
            index,
        })
    }

    pub fn horizon(&self) -> Timestamp {
        self.horizon
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn reads(&self) -> &[ReadEvent] {
        &self.reads
    }

    pub fn network(&self) -> &[NetInterval] {
        &self.network
    }

    pub fn article(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    /// The interval active at `t`; at `t == horizon` this is the last one.
    pub fn network_at(&self, t: f64) -> Result<&NetInterval, TraceError> {
        self.network_index_at(t).map(|i| &self.network[i])
    }

    pub fn network_index_at(&self, t: f64) -> Result<usize, TraceError> {
        if !(t >= 0.0 && t <= self.horizon.secs()) {
            return Err(TraceError::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let t = Timestamp(t);
        // Number of intervals starting at or before t; the last of them holds t.
        let i = self.network.partition_point(|n| n.start <= t);
        let i = i.saturating_sub(1);
        debug_assert!(self.network[i].contains(t) || t == self.horizon);
        Ok(i)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Article {
        id: String,
        published_at: f64,
        site: String,
        section: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subsection: Option<String>,
        keywords: Vec<String>,
        size_bytes: u64,
    },
    Read {
        at: f64,
        article_id: String,
    },
    Net {
        kind: NetKind,
        start: f64,
        end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth_bytes_per_s: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ap_id: Option<String>,
    },
}

fn timestamp(line: usize, field: &str, v: f64) -> Result<Timestamp, TraceError> {
    Timestamp::new(v).ok_or_else(|| TraceError::InvalidValue {
        line,
        reason: format!("{field} must be finite and non-negative, got {v}"),
    })
}

fn invalid(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::InvalidValue {
        line,
        reason: reason.into(),
    }
}

/// Parses the line-delimited JSON trace format. Records may appear in any
/// order; blank lines are ignored.
pub fn parse_trace(input: &[u8]) -> Result<Trace, TraceError> {
    let text = std::str::from_utf8(input).map_err(|e| TraceError::Malformed {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;

    let mut articles = Vec::new();
    let mut reads = Vec::new();
    let mut network = Vec::new();
    let mut seen = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| TraceError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        match record {
            Record::Article {
                id,
                published_at,
                site,
                section,
                subsection,
                keywords,
                size_bytes,
            } => {
                if id.is_empty() {
                    return Err(invalid(line, "article id is empty"));
                }
                if seen.insert(id.clone(), line).is_some() {
                    return Err(TraceError::DuplicateArticle(id));
                }
                let path = SitePath {
                    site,
                    section,
                    subsection,
                };
                if !path.is_valid() {
                    return Err(invalid(line, format!("empty path component in {path}")));
                }
                if keywords.is_empty() {
                    return Err(invalid(line, format!("article {id:?} has no keywords")));
                }
                if keywords.iter().any(|k| k.is_empty()) {
                    return Err(invalid(line, format!("article {id:?} has an empty keyword")));
                }
                if size_bytes == 0 {
                    return Err(invalid(line, "size_bytes must be at least 1"));
                }
                articles.push(Article {
                    id,
                    published_at: timestamp(line, "published_at", published_at)?,
                    path,
                    keywords,
                    size_bytes,
                });
            }
            Record::Read { at, article_id } => reads.push(ReadEvent {
                at: timestamp(line, "at", at)?,
                article_id,
            }),
            Record::Net {
                kind,
                start,
                end,
                bandwidth_bytes_per_s,
                ap_id,
            } => {
                let start = timestamp(line, "start", start)?;
                let end = timestamp(line, "end", end)?;
                if start >= end {
                    return Err(invalid(line, format!("interval start {start} is not before end {end}")));
                }
                match (kind, bandwidth_bytes_per_s) {
                    (NetKind::None, Some(_)) => {
                        return Err(invalid(line, "offline interval must not carry a bandwidth"))
                    }
                    (NetKind::WiFi | NetKind::Cellular, None) => {
                        return Err(invalid(line, "connected interval needs bandwidth_bytes_per_s"))
                    }
                    (_, Some(b)) if !(b.is_finite() && b > 0.0) => {
                        return Err(invalid(line, format!("bandwidth must be positive, got {b}")))
                    }
                    _ => {}
                }
                match (kind, &ap_id) {
                    (NetKind::WiFi, None) => return Err(invalid(line, "wifi interval needs ap_id")),
                    (NetKind::WiFi, Some(ap)) if ap.is_empty() => return Err(invalid(line, "ap_id is empty")),
                    (NetKind::Cellular | NetKind::None, Some(_)) => {
                        return Err(invalid(line, "only wifi intervals carry an ap_id"))
                    }
                    _ => {}
                }
                network.push(NetInterval {
                    kind,
                    start,
                    end,
                    bandwidth_bytes_per_s,
                    ap_id,
                });
            }
        }
    }

    if articles.is_empty() && reads.is_empty() && network.is_empty() {
        return Err(TraceError::Empty);
    }
    Trace::new(articles, reads, network)
}

/// Writes a trace in the line format accepted by [`parse_trace`]: network
/// intervals first, then articles, then reads.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    let mut push = |r: Record| {
        out.push_str(&serde_json::to_string(&r).expect("records always serialize"));
        out.push('\n');
    };
    for n in &trace.network {
        push(Record::Net {
            kind: n.kind,
            start: n.start.secs(),
            end: n.end.secs(),
            bandwidth_bytes_per_s: n.bandwidth_bytes_per_s,
            ap_id: n.ap_id.clone(),
        });
    }
    for a in &trace.articles {
        push(Record::Article {
            id: a.id.clone(),
            published_at: a.published_at.secs(),
            site: a.path.site.clone(),
            section: a.path.section.clone(),
            subsection: a.path.subsection.clone(),
            keywords: a.keywords.clone(),
            size_bytes: a.size_bytes,
        });
    }
    for r in &trace.reads {
        push(Record::Read {
            at: r.at.secs(),
            article_id: r.article_id.clone(),
        });
    }
    out
}
