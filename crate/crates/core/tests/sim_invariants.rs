use newsfetch::sim::{compare, run_with, PlanMode, Selection, SimOptions};
use newsfetch::synth::{generate, SynthParams};
use newsfetch::{run, Config, Trace};

fn traces() -> Vec<Trace> {
    (0..6)
        .map(|seed| {
            generate(&SynthParams {
                seed,
                days: 3,
                articles_per_day: 40,
                ..SynthParams::default()
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn report_counters_are_consistent() {
    for trace in traces() {
        for budget in [0, 3, 12] {
            let mut cfg = Config::default();
            cfg.scheduler.budget_count = budget;
            let r = run(&trace, &cfg);
            assert_eq!(r.reads, trace.reads().len() as u64);
            assert_eq!(r.hits + r.misses_wifi + r.misses_cell + r.misses_unavailable, r.reads);
            let h = if r.reads == 0 {
                0.0
            } else {
                r.hits as f64 / r.reads as f64
            };
            assert_eq!(r.hit_ratio, h);
            assert!(r.wasted_bytes <= r.prefetch_bytes);
            if r.bandwidth_ratio > 0.0 {
                assert_eq!(r.hb_metric, r.hit_ratio / r.bandwidth_ratio);
            }
        }
    }
}

#[test]
fn energy_stays_within_power_bounds() {
    for trace in traces() {
        let horizon = trace.horizon().secs();
        for budget in [0, 10] {
            let mut cfg = Config::default();
            cfg.scheduler.budget_count = budget;
            let r = run(&trace, &cfg);
            assert!(r.energy_joules >= cfg.energy.p_idle * horizon);
            if budget == 0 {
                assert!(r.energy_joules <= cfg.energy.max_active_power() * horizon);
            }
        }
    }
}

#[test]
fn serialized_reports_are_deterministic() {
    let trace = &traces()[0];
    let cfg = Config::default();
    for opts in [
        SimOptions::default(),
        SimOptions {
            selection: Selection::Random,
            plan_mode: PlanMode::Eager,
            ..SimOptions::default()
        },
    ] {
        let a = run_with(trace, &cfg, opts).report.to_json();
        let b = run_with(trace, &cfg, opts).report.to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn random_ablation_depends_on_the_config_seed() {
    let trace = &traces()[1];
    let opts = SimOptions {
        selection: Selection::Random,
        ..SimOptions::default()
    };
    let mut a = Config::default();
    let mut b = Config::default();
    a.seed = 1;
    b.seed = 2;
    let ca = run_with(trace, &a, opts).cache;
    let cb = run_with(trace, &b, opts).cache;
    assert_ne!(ca.keys().collect::<Vec<_>>(), cb.keys().collect::<Vec<_>>());
}

#[test]
fn budget_increase_adds_prefetch_bytes() {
    for trace in traces() {
        let mut cfg = Config::default();
        cfg.scheduler.budget_count = 0;
        let base = run(&trace, &cfg);
        cfg.scheduler.budget_count = 8;
        let more = run(&trace, &cfg);
        let diff = compare(&base, &more);
        assert!(diff["prefetch_bytes"] >= 0.0);
        assert!(compare(&more, &more).values().all(|&v| v == 0.0));
    }
}

#[test]
fn hits_never_fall_as_budget_grows() {
    let trace = &traces()[2];
    let mut last = 0;
    for budget in 0..=15 {
        let mut cfg = Config::default();
        cfg.scheduler.budget_count = budget;
        let hits = run(trace, &cfg).hits;
        assert!(hits >= last, "budget {budget}: {hits} < {last}");
        last = hits;
    }
}
