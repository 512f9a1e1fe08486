mod common;

use voltreg::datasets::write_bundle;
use voltreg::netmodel::{load_feeder, load_profile, FeederModel, NetError, Phase};
use voltreg::Scenario;

#[test]
fn bundled_feeder_has_expected_shape() {
    let m = load_feeder(common::data("ieee37.json")).unwrap();
    assert_eq!(m.oltcs.len(), 1);
    assert_eq!(m.pv_units.len(), 30);
    let total: f64 = m.pv_units.iter().map(|u| u.dc_kw).sum();
    assert!((3900.0..4300.0).contains(&total), "{total}");
    assert!(m.pv_units.iter().all(|u| (23.0..=206.0).contains(&u.dc_kw)));
    assert_eq!(m.source.nodes.len(), 3);
    assert!(m.node_index("799", Phase::A).is_some());
    assert_eq!(m.non_slack_nodes().len(), m.n_nodes() - 3);
}

#[test]
fn feeder_round_trips_through_json() {
    let m = load_feeder(common::data("ieee37.json")).unwrap();
    let again = FeederModel::from_json(&m.to_json()).unwrap();
    assert_eq!(m, again);
}

#[test]
fn malformed_files_are_rejected() {
    assert!(matches!(FeederModel::from_json("{"), Err(NetError::Parse(_))));
    assert!(matches!(load_feeder("/nonexistent/feeder.json"), Err(NetError::Io(_))));
}

#[test]
fn bundled_profiles_cover_a_day() {
    let load = load_profile("load", common::data("load_shape.csv")).unwrap();
    let pv = load_profile("pv", common::data("pv_1kw.csv")).unwrap();
    assert_eq!(load.len(), 2880);
    assert_eq!(pv.len(), 2880);
    assert_eq!(load.dt_s, 30.0);
    assert_eq!(pv.at(0), 0.0);
    let peak = (0..pv.len()).map(|k| pv.at(k)).fold(0.0, f64::max);
    assert!(peak > 0.8 && peak <= 1.1);
}

#[test]
fn regenerated_bundle_matches_the_shipped_one() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_bundle(dir.path()).unwrap();
    for f in &files {
        let fresh = std::fs::read(dir.path().join(f)).unwrap();
        let shipped = std::fs::read(common::data(f)).unwrap();
        assert!(fresh == shipped, "{f} differs from the bundled copy");
    }
    for f in ["ieee37_cloudy_avr.json", "ieee37_cloudy_ovr.json", "synthetic1k_ovr.json"] {
        let s = Scenario::from_path(dir.path().join(f)).unwrap();
        s.load_data().unwrap();
    }
}

#[test]
fn synthetic_feeder_is_large() {
    let m = load_feeder(common::data("synthetic1k.json")).unwrap();
    assert!(m.n_nodes() >= 1000, "{}", m.n_nodes());
}
