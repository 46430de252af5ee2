mod common;

use contend::io::{bundled_scenario, CONVERGENCE_TOL};
use contend::model::{AppIdx, ReauctionPolicy, ResourceIdx};
use contend::oracle::{shared_baseline, static_schedule_baseline};
use contend::sim::{detect_convergence, metrics, run, Baselines, SimError};

#[test]
fn static_matrix_settles_immediately() {
    let s =
        contend::Scenario::from_matrix(common::levels(&[1, 2, 4, 8, 16]), &common::matrix_m(), 10);
    let tr = run(&s, 10, 3, None).unwrap();
    assert_eq!(tr.periods.len(), 10);
    let first = &tr.periods[0].assignment;
    for p in &tr.periods[1..] {
        assert_eq!(p.assignment.holdings, first.holdings);
    }
    assert!(detect_convergence(&tr, 3, CONVERGENCE_TOL).unwrap() <= 1);
}

#[test]
fn empty_horizon_gives_empty_trace() {
    let tr = run(
        &contend::Scenario::from_matrix(common::levels(&[1]), &[vec![1.0]], 1),
        0,
        0,
        None,
    )
    .unwrap();
    assert!(tr.periods.is_empty());
    assert_eq!(tr.revenue(), 0.0);
}

#[test]
fn congestion_scenario_converges() {
    let s = bundled_scenario("congestion").unwrap().unwrap();
    let tr = run(&s, s.horizon_end(), 0, None).unwrap();
    let c = detect_convergence(&tr, 3, CONVERGENCE_TOL).expect("no convergence");
    assert!(c < tr.periods.len());
}

#[test]
fn reauction_on_events_keeps_holdings_between_events() {
    let mut s =
        contend::Scenario::from_matrix(common::levels(&[1, 2, 4, 8, 16]), &common::matrix_m(), 10);
    s.config.reauction = ReauctionPolicy::OnEvents;
    let tr = run(&s, 6, 0, None).unwrap();
    let first = &tr.periods[0].assignment;
    for p in &tr.periods[1..] {
        assert!(p.bids.is_empty());
        assert_eq!(p.assignment.holdings, first.holdings);
    }
}

#[test]
fn phase_changes_beat_the_static_schedule() {
    let s = bundled_scenario("hmmer_mcf").unwrap().unwrap();
    let tr = run(&s, s.horizon_end(), 0, None).unwrap();
    let baselines = Baselines {
        shared: Some(shared_baseline(&s).unwrap()),
        private: None,
        static_schedule: Some(static_schedule_baseline(&s).unwrap().1),
    };
    let r = metrics(&tr, &baselines, 3, CONVERGENCE_TOL).unwrap();
    assert!(r.improvement_over_static.unwrap() > 0.0);
    assert!(r.gain_over_shared > 0.0);
}

#[test]
fn auction_matching_shared_reports_no_gain() {
    // a single shared slot everyone must squeeze into: the auction can do no better
    let mut s = contend::Scenario::from_matrix(common::levels(&[1]), &[vec![1.0]], 5);
    s.shared_resource = Some(ResourceIdx(0));
    let tr = run(&s, 5, 0, None).unwrap();
    let baselines = Baselines {
        shared: Some(shared_baseline(&s).unwrap()),
        ..Baselines::default()
    };
    let r = metrics(&tr, &baselines, 3, CONVERGENCE_TOL).unwrap();
    assert_eq!(r.improvement_pct, vec![0.0]);
    assert_eq!(r.gain_over_shared, 0.0);
}

#[test]
fn zero_baseline_is_an_error() {
    let mut s = contend::Scenario::from_matrix(common::levels(&[1]), &[vec![0.0]], 2);
    s.shared_resource = Some(ResourceIdx(0));
    let tr = run(&s, 2, 0, None).unwrap();
    let baselines = Baselines {
        shared: Some(shared_baseline(&s).unwrap()),
        ..Baselines::default()
    };
    assert!(matches!(
        metrics(&tr, &baselines, 3, CONVERGENCE_TOL),
        Err(SimError::ZeroBaseline)
    ));
}

#[test]
fn departures_stop_payments() {
    let s = bundled_scenario("synthetic16").unwrap().unwrap();
    let tr = run(&s, s.horizon_end(), 0, None).unwrap();
    for p in &tr.periods {
        for (i, app) in s.applications.iter().enumerate() {
            if !app.is_active(p.t) {
                assert_eq!(p.assignment.resource_of(AppIdx(i)), None);
                assert_eq!(p.assignment.payments[i], 0.0);
            }
        }
    }
}
