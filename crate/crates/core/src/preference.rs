//! User news preference: a bounded, decaying keyword store plus a
//! site → section → subsection visit tree, blended into one article score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::{Article, SitePath, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeywordParams {
    /// Maximum number of keywords kept after a refresh.
    pub capacity: usize,
    /// Multiplicative decay applied once per elapsed refresh period.
    pub decay: f64,
    /// Weights at or below this floor are evicted on refresh.
    pub floor: f64,
    pub refresh_period_s: f64,
}

impl Default for KeywordParams {
    fn default() -> Self {
        KeywordParams {
            capacity: 200,
            decay: 0.7,
            floor: 0.05,
            refresh_period_s: 86_400.0,
        }
    }
}

impl KeywordParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.capacity == 0 {
            return Err("preference.capacity must be positive".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(format!("preference.decay must lie in (0,1), got {}", self.decay));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(format!("preference.floor must be non-negative, got {}", self.floor));
        }
        if !(self.refresh_period_s.is_finite() && self.refresh_period_s > 0.0) {
            return Err(format!(
                "preference.refresh_period_s must be positive, got {}",
                self.refresh_period_s
            ));
        }
        Ok(())
    }
}

/// Keyword → weight. Reads add weight; refresh decays and trims the list.
///
/// Capacity is only enforced by [`KeywordStore::refresh`], so between two
/// refreshes the store may hold more than `capacity` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordStore {
    entries: BTreeMap<String, f64>,
    params: KeywordParams,
    last_refresh: Timestamp,
}

impl KeywordStore {
    pub fn new(params: KeywordParams) -> Self {
        KeywordStore {
            entries: BTreeMap::new(),
            params,
            last_refresh: Timestamp::ZERO,
        }
    }

    pub fn with_entries<'a>(params: KeywordParams, entries: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut store = Self::new(params);
        store.entries = entries.into_iter().map(|(k, w)| (k.to_owned(), w)).collect();
        store
    }

    pub fn params(&self) -> &KeywordParams {
        &self.params
    }

    pub fn last_refresh(&self) -> Timestamp {
        self.last_refresh
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, keyword: &str) -> f64 {
        self.entries.get(keyword).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &w)| (k.as_str(), w))
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Every keyword occurrence adds one to its weight.
    pub fn observe_keywords<S: AsRef<str>>(&mut self, keywords: &[S]) {
        for k in keywords {
            *self.entries.entry(k.as_ref().to_owned()).or_insert(0.0) += 1.0;
        }
    }

    pub fn observe_read(&mut self, article: &Article) {
        self.observe_keywords(&article.keywords);
    }

    /// Applies one decay step per whole refresh period elapsed since the last
    /// refresh, evicts weights at or below the floor, then trims to capacity
    /// (highest weight first, ties to the lexicographically smaller keyword).
    /// The trim happens even when no period has elapsed, so the store is
    /// within capacity whenever a refresh returns. Returns the number of
    /// periods applied.
    pub fn refresh(&mut self, now: Timestamp) -> u64 {
        let elapsed = now - self.last_refresh;
        let periods = if elapsed < self.params.refresh_period_s {
            0
        } else {
            (elapsed / self.params.refresh_period_s).floor() as u64
        };
        for _ in 0..periods {
            if self.entries.is_empty() {
                break;
            }
            for w in self.entries.values_mut() {
                *w *= self.params.decay;
            }
            let floor = self.params.floor;
            self.entries.retain(|_, w| *w > floor);
        }

        if self.entries.len() > self.params.capacity {
            let mut ranked: Vec<(String, f64)> = std::mem::take(&mut self.entries).into_iter().collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(self.params.capacity);
            self.entries = ranked.into_iter().collect();
        }

        self.last_refresh = self.last_refresh + periods as f64 * self.params.refresh_period_s;
        // Guard against rounding leaving last_refresh past now.
        if self.last_refresh > now {
            self.last_refresh = now;
        }
        periods
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitNode {
    /// Visits to this node or anything beneath it.
    pub visits: u64,
    /// Visits that stopped at this node.
    pub direct: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<String, VisitNode>,
}

impl VisitNode {
    fn is_consistent(&self) -> bool {
        let child_sum: u64 = self.children.values().map(|c| c.visits).sum();
        self.visits == self.direct + child_sum && self.children.values().all(VisitNode::is_consistent)
    }
}

/// Visit counts along site → section → subsection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteTree {
    sites: BTreeMap<String, VisitNode>,
    total_visits: u64,
}

impl SiteTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_visits(&self) -> u64 {
        self.total_visits
    }

    pub fn observe_visit(&mut self, path: &SitePath) {
        self.total_visits += 1;
        let site = self.sites.entry(path.site.clone()).or_default();
        site.visits += 1;
        let section = site.children.entry(path.section.clone()).or_default();
        section.visits += 1;
        match &path.subsection {
            Some(sub) => {
                let leaf = section.children.entry(sub.clone()).or_default();
                leaf.visits += 1;
                leaf.direct += 1;
            }
            None => section.direct += 1,
        }
    }

    /// Count at `site`, `site/section` or `site/section/subsection`.
    pub fn count(&self, site: &str, section: Option<&str>, subsection: Option<&str>) -> u64 {
        let Some(s) = self.sites.get(site) else { return 0 };
        let Some(section) = section else { return s.visits };
        let Some(sec) = s.children.get(section) else { return 0 };
        let Some(sub) = subsection else { return sec.visits };
        sec.children.get(sub).map_or(0, |n| n.visits)
    }

    /// Visit count of the deepest node along `path` that the tree knows,
    /// divided by all visits. Zero for an unknown site or an empty tree.
    pub fn path_weight(&self, path: &SitePath) -> f64 {
        if self.total_visits == 0 {
            return 0.0;
        }
        let Some(site) = self.sites.get(&path.site) else {
            return 0.0;
        };
        let mut count = site.visits;
        if let Some(section) = site.children.get(&path.section) {
            count = section.visits;
            if let Some(sub) = path.subsection.as_ref().and_then(|s| section.children.get(s)) {
                count = sub.visits;
            }
        }
        count as f64 / self.total_visits as f64
    }

    /// Checks `visits = direct + Σ child visits` at every node and that the
    /// site counts add up to the total.
    pub fn is_consistent(&self) -> bool {
        let site_sum: u64 = self.sites.values().map(|s| s.visits).sum();
        site_sum == self.total_visits && self.sites.values().all(VisitNode::is_consistent)
    }

    pub fn sites(&self) -> impl Iterator<Item = (&str, &VisitNode)> {
        self.sites.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceScore {
    pub value: f64,
    pub kw_component: f64,
    pub path_component: f64,
}

/// Share of the store's total weight held by the article's distinct keywords.
pub fn keyword_component<S: AsRef<str>>(store: &KeywordStore, keywords: &[S]) -> f64 {
    let total = store.total_weight();
    if total <= 0.0 {
        return 0.0;
    }
    let mut distinct: Vec<&str> = keywords.iter().map(AsRef::as_ref).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let overlap: f64 = distinct.iter().map(|k| store.weight(k)).sum();
    (overlap / total).clamp(0.0, 1.0)
}

/// `alpha · keyword share + (1 − alpha) · path weight`.
pub fn score_article(store: &KeywordStore, tree: &SiteTree, article: &Article, alpha: f64) -> PreferenceScore {
    let kw_component = keyword_component(store, &article.keywords);
    let path_component = tree.path_weight(&article.path);
    let value = (alpha * kw_component + (1.0 - alpha) * path_component).clamp(0.0, 1.0);
    PreferenceScore {
        value,
        kw_component,
        path_component,
    }
}

/// Both halves of the learned model, updated together on every read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceModel {
    pub keywords: KeywordStore,
    pub sites: SiteTree,
}

impl PreferenceModel {
    pub fn new(params: KeywordParams) -> Self {
        PreferenceModel {
            keywords: KeywordStore::new(params),
            sites: SiteTree::new(),
        }
    }

    pub fn observe(&mut self, article: &Article) {
        self.keywords.observe_read(article);
        self.sites.observe_visit(&article.path);
    }

    pub fn score(&self, article: &Article, alpha: f64) -> PreferenceScore {
        score_article(&self.keywords, &self.sites, article, alpha)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(capacity: usize, decay: f64, floor: f64) -> KeywordParams {
        KeywordParams {
            capacity,
            decay,
            floor,
            refresh_period_s: 100.0,
        }
    }

    fn weights(store: &KeywordStore) -> Vec<(String, f64)> {
        store.entries().map(|(k, w)| (k.to_owned(), w)).collect()
    }

    fn article(keywords: &[&str], path: SitePath) -> Article {
        Article {
            id: "x".into(),
            published_at: Timestamp::ZERO,
            path,
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            size_bytes: 1,
        }
    }

    #[test]
    fn observe_counts_occurrences() {
        let mut s = KeywordStore::new(KeywordParams::default());
        s.observe_keywords(&["a", "a", "b"]);
        assert_eq!(weights(&s), [("a".into(), 2.0), ("b".into(), 1.0)]);

        let mut s = KeywordStore::with_entries(KeywordParams::default(), [("a", 3.0)]);
        s.observe_keywords(&["a"]);
        assert_eq!(s.weight("a"), 4.0);

        let mut s = KeywordStore::with_entries(KeywordParams::default(), [("a", 1.0)]);
        s.observe_keywords(&["b", "c"]);
        assert_eq!(s.len(), 3);
        assert!(s.entries().all(|(_, w)| w == 1.0));
    }

    #[test]
    fn refresh_decays_once_per_period() {
        let mut s = KeywordStore::with_entries(params(10, 0.5, 0.1), [("a", 2.0), ("b", 1.0)]);
        assert_eq!(s.refresh(Timestamp::from_secs(99.0)), 0);
        assert_eq!(s.weight("a"), 2.0);
        assert_eq!(s.refresh(Timestamp::from_secs(150.0)), 1);
        assert_eq!(weights(&s), [("a".into(), 1.0), ("b".into(), 0.5)]);
        assert_eq!(s.last_refresh().secs(), 100.0);
        // 150 s more: only one further whole period counted from t=100.
        assert_eq!(s.refresh(Timestamp::from_secs(250.0)), 1);
        assert_eq!(s.weight("a"), 0.5);
    }

    #[test]
    fn refresh_evicts_at_floor() {
        let mut s = KeywordStore::with_entries(params(10, 0.5, 0.1), [("a", 0.15)]);
        s.refresh(Timestamp::from_secs(100.0));
        assert!(s.is_empty());

        // exactly at the floor is evicted too
        let mut s = KeywordStore::with_entries(params(10, 0.5, 0.1), [("a", 0.2)]);
        s.refresh(Timestamp::from_secs(100.0));
        assert!(s.is_empty());
    }

    #[test]
    fn refresh_trims_with_lexicographic_ties() {
        let mut s = KeywordStore::with_entries(params(2, 0.9, 0.05), [("a", 3.0), ("c", 2.0), ("b", 2.0)]);
        s.refresh(Timestamp::from_secs(100.0));
        let w = weights(&s);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].0, "a");
        assert!((w[0].1 - 2.7).abs() < 1e-12);
        assert_eq!(w[1].0, "b");
        assert!((w[1].1 - 1.8).abs() < 1e-12);
    }

    #[test]
    fn early_refresh_trims_without_decay() {
        let mut s = KeywordStore::with_entries(params(2, 0.5, 0.1), [("a", 3.0), ("c", 2.0), ("b", 2.0)]);
        assert_eq!(s.refresh(Timestamp::from_secs(10.0)), 0);
        assert_eq!(weights(&s), [("a".into(), 3.0), ("b".into(), 2.0)]);
        assert_eq!(s.last_refresh(), Timestamp::ZERO);
    }

    #[test]
    fn visit_tree_counts() {
        let mut t = SiteTree::new();
        let mobile = SitePath::new("newsX", "tech").with_subsection("mobile");
        t.observe_visit(&mobile);
        assert_eq!(t.count("newsX", None, None), 1);
        assert_eq!(t.count("newsX", Some("tech"), None), 1);
        assert_eq!(t.count("newsX", Some("tech"), Some("mobile")), 1);
        assert_eq!(t.total_visits(), 1);

        t.observe_visit(&mobile);
        assert_eq!(t.count("newsX", Some("tech"), Some("mobile")), 2);
        assert_eq!(t.count("newsX", None, None), 2);

        t.observe_visit(&SitePath::new("newsX", "sports"));
        assert_eq!(t.count("newsX", None, None), 3);
        assert_eq!(t.count("newsX", Some("tech"), None), 2);
        assert_eq!(t.count("newsX", Some("sports"), None), 1);
        assert_eq!(t.total_visits(), 3);
        assert!(t.is_consistent());

        assert!((t.path_weight(&mobile) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.path_weight(&SitePath::new("other", "tech")), 0.0);
        // an unseen subsection falls back to its section
        let video = SitePath::new("newsX", "tech").with_subsection("video");
        assert!((t.path_weight(&video) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(SiteTree::new().path_weight(&mobile), 0.0);
    }

    #[test]
    fn score_examples() {
        // The path half is fixed at 0.5 by a tree with one matching visit out of two.
        let mut tree = SiteTree::new();
        let liked = SitePath::new("s", "liked");
        tree.observe_visit(&liked);
        tree.observe_visit(&SitePath::new("s2", "other"));

        let store = KeywordStore::with_entries(KeywordParams::default(), [("a", 3.0), ("b", 1.0)]);
        let s = score_article(&store, &tree, &article(&["a"], liked.clone()), 0.5);
        assert_eq!(s.kw_component, 0.75);
        assert_eq!(s.path_component, 0.5);
        assert_eq!(s.value, 0.625);

        // path weight 0.4 with an empty store
        let mut tree = SiteTree::new();
        for i in 0..5 {
            let p = if i < 2 { liked.clone() } else { SitePath::new("z", "z") };
            tree.observe_visit(&p);
        }
        let empty = KeywordStore::new(KeywordParams::default());
        let s = score_article(&empty, &tree, &article(&["a"], liked), 0.5);
        assert_eq!(s.kw_component, 0.0);
        assert!((s.value - 0.2).abs() < 1e-15);

        let store = KeywordStore::with_entries(KeywordParams::default(), [("a", 1.0)]);
        let s = score_article(&store, &SiteTree::new(), &article(&["a"], SitePath::new("q", "q")), 1.0);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn duplicate_keywords_count_once_in_score() {
        let store = KeywordStore::with_entries(KeywordParams::default(), [("a", 1.0), ("b", 3.0)]);
        let once = keyword_component(&store, &["a"]);
        let stuffed = keyword_component(&store, &["a", "a", "a", "a"]);
        assert_eq!(once, stuffed);
    }

    #[test]
    fn model_json_round_trip() {
        let mut m = PreferenceModel::new(KeywordParams::default());
        m.observe(&article(&["a", "b"], SitePath::new("s", "t").with_subsection("u")));
        let back = PreferenceModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn refresh_never_raises_a_weight(
            ws in proptest::collection::btree_map("[a-f]{1,2}", 0.01f64..50.0, 0..30),
            decay in 0.05f64..0.999,
            elapsed in 0.0f64..1000.0,
        ) {
            let mut s = KeywordStore::new(params(5, decay, 0.0));
            s.entries = ws.clone();
            s.refresh(Timestamp::from_secs(elapsed));
            prop_assert!(s.len() <= 5 || elapsed < 100.0);
            for (k, w) in s.entries() {
                prop_assert!(w <= ws[k]);
            }
        }

        #[test]
        fn tree_stays_consistent(visits in proptest::collection::vec((0u8..3, 0u8..3, proptest::option::of(0u8..3)), 0..200)) {
            let mut t = SiteTree::new();
            for (s, sec, sub) in visits {
                let mut p = SitePath::new(format!("s{s}"), format!("c{sec}"));
                p.subsection = sub.map(|x| format!("u{x}"));
                t.observe_visit(&p);
            }
            prop_assert!(t.is_consistent());
        }

        #[test]
        fn ranking_invariant_under_scaling(
            ws in proptest::collection::btree_map("[a-e]", 0.1f64..10.0, 1..5),
            arts in proptest::collection::vec(proptest::collection::vec("[a-e]", 1..4), 2..6),
            c in 0.01f64..100.0,
            alpha in 0.0f64..=1.0,
        ) {
            let base = KeywordStore { entries: ws.clone(), params: KeywordParams::default(), last_refresh: Timestamp::ZERO };
            let scaled = KeywordStore {
                entries: ws.iter().map(|(k, w)| (k.clone(), w * c)).collect(),
                ..base.clone()
            };
            let tree = SiteTree::new();
            let score = |s: &KeywordStore, kws: &Vec<String>| {
                let refs: Vec<&str> = kws.iter().map(String::as_str).collect();
                score_article(s, &tree, &article(&refs, SitePath::new("a", "b")), alpha).value
            };
            for x in &arts {
                for y in &arts {
                    let (bx, by) = (score(&base, x), score(&base, y));
                    let (sx, sy) = (score(&scaled, x), score(&scaled, y));
                    // allow for rounding when the two scores are within an ulp-scale band
                    if (bx - by).abs() > 1e-9 {
                        prop_assert_eq!(bx < by, sx < sy);
                    }
                    prop_assert!((0.0..=1.0).contains(&sx));
                }
            }
        }
    }
}
