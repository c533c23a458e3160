use std::collections::BTreeMap;

use newsfetch::synth::{generate, generate_with_user, keyword_token, SynthParams};
use newsfetch::{parse_trace, serialize_trace, NetKind};

/// Ranks with ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn read_keywords_follow_the_latent_preference() {
    let p = SynthParams {
        seed: 5,
        days: 28,
        ..SynthParams::default()
    };
    let (trace, user) = generate_with_user(&p).unwrap();
    let mut freq: BTreeMap<String, f64> = BTreeMap::new();
    for r in trace.reads() {
        for k in &trace.article(&r.article_id).unwrap().keywords {
            *freq.entry(k.clone()).or_default() += 1.0;
        }
    }
    let vocab: Vec<String> = (0..p.vocab_size).map(keyword_token).collect();
    let read_freq: Vec<f64> = vocab.iter().map(|k| freq.get(k).copied().unwrap_or(0.0)).collect();
    let liked: Vec<f64> = vocab.iter().map(|k| user.keywords.contains(k) as u8 as f64).collect();
    let rho = pearson(&ranks(&read_freq), &ranks(&liked));
    assert!(rho > 0.0, "spearman {rho}");
}

#[test]
fn generated_traces_round_trip() {
    for seed in 0..5 {
        let trace = generate(&SynthParams {
            seed,
            days: 3,
            ..SynthParams::default()
        })
        .unwrap();
        let text = serialize_trace(&trace);
        let back = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(serialize_trace(&back), text);
    }
}

#[test]
fn seeds_are_deterministic_and_distinct() {
    let p = SynthParams {
        days: 2,
        ..SynthParams::default()
    };
    let a = serialize_trace(&generate(&p).unwrap());
    let b = serialize_trace(&generate(&p).unwrap());
    assert_eq!(a, b);
    let c = serialize_trace(&generate(&SynthParams { seed: p.seed + 1, ..p }).unwrap());
    assert_ne!(a, c);
}

#[test]
fn network_follows_the_daily_template() {
    let p = SynthParams {
        days: 5,
        ..SynthParams::default()
    };
    let trace = generate(&p).unwrap();
    let net = trace.network();
    assert_eq!(net.first().unwrap().start.secs(), 0.0);
    assert_eq!(trace.horizon().secs(), 5.0 * 86_400.0);
    for k in [NetKind::WiFi, NetKind::Cellular, NetKind::None] {
        assert!(net.iter().any(|n| n.kind == k), "no {k:?} interval");
    }
    // each WiFi interval carries an access point from the template
    for n in net.iter().filter(|n| n.kind == NetKind::WiFi) {
        let ap = n.ap_id.as_deref().unwrap();
        assert!(p.wifi_sessions.iter().any(|s| s.ap_id == ap));
    }
}

#[test]
fn articles_land_in_their_day() {
    let trace = generate(&SynthParams {
        days: 1,
        articles_per_day: 100,
        ..SynthParams::default()
    })
    .unwrap();
    assert_eq!(trace.articles().len(), 100);
    assert!(trace.articles().iter().all(|a| a.published_at.secs() < 86_400.0));
}
