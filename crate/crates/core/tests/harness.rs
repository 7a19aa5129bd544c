use std::path::{Path, PathBuf};

use approx::assert_relative_eq;
use greengrid::sim::{compare, load_scenario, parse_scenario, run_policy, Policy, Scenario};
use greengrid::Error;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn toy_text() -> String {
    std::fs::read_to_string(data("toy.scenario")).unwrap()
}

fn parse(text: &str) -> greengrid::Result<Scenario> {
    parse_scenario(text, data("edited.scenario"))
}

fn messages(err: Error) -> Vec<String> {
    match err {
        Error::Validation(m) => m,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn bundled_ieee37_site_placement() {
    let s = load_scenario(data("ieee37.scenario")).unwrap();
    assert_eq!(s.n_stations(), 31);
    assert_eq!(s.green_sites.len(), 5);
    let mut green: Vec<&str> = s.green_sites.iter().map(|g| s.feeder.label(g.bus)).collect();
    green.sort();
    assert_eq!(green, ["725", "731", "735", "741", "742"]);
    assert_eq!(s.feeder.label(greengrid::grid_model::BusId::SLACK), "799");
}

#[test]
fn absent_bus_is_a_validation_error() {
    let text = toy_text().replace("{ bus = \"pv\", column = \"solar\" }", "{ bus = \"nowhere\", column = \"solar\" }");
    let msgs = messages(parse(&text).unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("nowhere")), "{msgs:?}");
}

#[test]
fn zero_horizon_is_a_validation_error() {
    let msgs = messages(parse(&toy_text().replace("horizon = 24", "horizon = 0")).unwrap_err());
    assert!(msgs.iter().any(|m| m.contains("horizon")), "{msgs:?}");
}

#[test]
fn validation_lists_every_problem() {
    let text = toy_text()
        .replace("horizon = 24", "horizon = 0")
        .replace("tracked_buses = [\"bs\"]", "tracked_buses = [\"ghost\"]");
    let msgs = messages(parse(&text).unwrap_err());
    assert!(msgs.len() >= 2, "{msgs:?}");
}

#[test]
fn accounting_identity_every_slot_and_policy() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    for policy in Policy::ALL {
        let run = run_policy(&s, policy).unwrap();
        for r in &run.trajectory.records {
            let lhs = r.e0 + r.g_true.sum();
            let rhs = r.p.sum() + r.p_loss;
            assert!((lhs - rhs).abs() <= 1e-10, "{policy} slot {}: {lhs} vs {rhs}", r.t);
        }
    }
}

#[test]
fn brown_only_imports_everything() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    let run = run_policy(&s, Policy::BrownOnly).unwrap();
    for r in &run.trajectory.records {
        assert_eq!(r.g_true.sum(), 0.0);
        assert_eq!(r.e0, r.p.sum() + r.p_loss);
    }
}

#[test]
fn comparing_a_run_with_itself_gives_zero_deltas() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    let run = run_policy(&s, Policy::Online).unwrap();
    let cmp = compare(&[run.clone(), run]).unwrap();
    for &(e0, f, loss) in &cmp.deltas {
        assert_eq!((e0, f, loss), (0.0, 0.0, 0.0));
    }
}

#[test]
fn mismatched_horizons_are_rejected() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    let short = parse(&toy_text().replace("horizon = 24", "horizon = 10")).unwrap();
    let a = run_policy(&short, Policy::OneShot).unwrap();
    let b = run_policy(&s, Policy::OneShot).unwrap();
    assert!(matches!(compare(&[a, b]), Err(Error::MismatchedHorizons(10, 24))));
}

#[test]
fn green_reduces_loss_against_brown_only() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    let online = compare(&[run_policy(&s, Policy::BrownOnly).unwrap(), run_policy(&s, Policy::Online).unwrap()])
        .unwrap();
    assert!(online.deltas[1].2 < 0.0, "{:?}", online.deltas);
}

#[test]
fn noiseless_online_and_oneshot_agree() {
    let text = toy_text().replace("relative_sigma = 0.2", "relative_sigma = 0.0");
    let s = parse(&text).unwrap();
    let online = run_policy(&s, Policy::Online).unwrap();
    let oneshot = run_policy(&s, Policy::OneShot).unwrap();
    // the toy's single station always sits on its own floor
    for (a, b) in online.trajectory.records.iter().zip(&oneshot.trajectory.records) {
        assert_relative_eq!(a.p[0], b.p[0], max_relative = 1e-6);
    }
}

#[test]
fn same_seed_same_results() {
    let s = load_scenario(data("toy.scenario")).unwrap();
    assert_eq!(run_policy(&s, Policy::Online).unwrap(), run_policy(&s, Policy::Online).unwrap());
}
