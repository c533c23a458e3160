use newsfetch_web::{simulate_report, sweep_points, timeline};

#[test]
fn timeline_matches_the_tail_model() {
    // default wifi: active 0.7 W, tail 0.3 W for 3 s, idle 0.05 W
    let t = timeline(r#"[{"kind":"WiFi","start":10,"duration":5}]"#, 60.0).unwrap();
    assert_eq!(t.segments.len(), 4);
    let want = 5.0 * 0.7 + 3.0 * 0.3 + 52.0 * 0.05;
    assert!((t.joules - want).abs() < 1e-9);
}

#[test]
fn timeline_sorts_input_and_rejects_overlap() {
    let t = timeline(
        r#"[{"kind":"WiFi","start":30,"duration":2},{"kind":"WiFi","start":0,"duration":2}]"#,
        60.0,
    )
    .unwrap();
    assert_eq!(t.segments.first().unwrap().start, 0.0);
    assert!(timeline(
        r#"[{"kind":"WiFi","start":0,"duration":10},{"kind":"Cellular","start":5,"duration":2}]"#,
        60.0
    )
    .is_err());
    assert!(timeline("nope", 60.0).is_err());
}

#[test]
fn simulate_and_sweep_agree() {
    let r = simulate_report(3, 2, 5, false).unwrap();
    let pts = sweep_points(3, 2, 5).unwrap();
    assert_eq!(pts.len(), 6);
    assert_eq!(pts[5].preference, r);
    assert_eq!(pts[0].preference.hits, 0);
    assert!(simulate_report(3, 0, 5, false).is_err());
}
