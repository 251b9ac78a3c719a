use cellfree_oracle::{compare_terms, estimate_sub_expectations};
use cellfree_outage::config::{PilotMode, SystemConfig};
use cellfree_outage::moments::sub_expectations;
use cellfree_outage::sinr::DeploymentInstance;

fn small(m: usize, n: usize, k: usize, tau: usize, mode: PilotMode) -> SystemConfig {
    SystemConfig { num_aps: m, antennas_per_ap: n, num_users: k, tau_p: tau, pilot_mode: mode, area_side_km: 0.3, ..Default::default() }
}

#[test]
fn contaminated_terms_match_sampling() {
    let cfg = small(3, 2, 3, 2, PilotMode::RandomContaminated);
    let inst = DeploymentInstance::new(&cfg, 11, 0).unwrap();
    let exact = sub_expectations(&inst.stats, &inst.deployment, &cfg, 1).unwrap();
    let mc = estimate_sub_expectations(&inst.deployment, &inst.stats, &inst.pilots, 2, 1, 200_000, 5).unwrap();
    let checks = compare_terms(&exact, &mc);
    assert_eq!(checks.len(), 9 + 4 * 2);
    for c in &checks {
        assert!(c.z_score() < 4.0, "{}: exact {} vs {} +- {}", c.label(), c.exact, c.estimate, c.std_err);
    }
}

#[test]
fn tampered_term_is_caught() {
    let cfg = small(2, 1, 2, 1, PilotMode::RandomContaminated);
    let inst = DeploymentInstance::new(&cfg, 3, 0).unwrap();
    let mut exact = sub_expectations(&inst.stats, &inst.deployment, &cfg, 0).unwrap();
    exact.a2b[1] *= 1.2;
    let mc = estimate_sub_expectations(&inst.deployment, &inst.stats, &inst.pilots, 1, 0, 200_000, 8).unwrap();
    let worst = compare_terms(&exact, &mc).into_iter().max_by(|a, b| a.z_score().total_cmp(&b.z_score())).unwrap();
    assert_eq!(worst.term, "E[A^2 B^i]");
    assert!(worst.z_score() > 4.0);
}

#[test]
fn orthogonal_terms_match_sampling() {
    let cfg = small(2, 2, 3, 3, PilotMode::Orthogonal);
    let inst = DeploymentInstance::new(&cfg, 21, 0).unwrap();
    let exact = sub_expectations(&inst.stats, &inst.deployment, &cfg, 2).unwrap();
    let mc = estimate_sub_expectations(&inst.deployment, &inst.stats, &inst.pilots, 2, 2, 200_000, 6).unwrap();
    for c in compare_terms(&exact, &mc) {
        assert!(c.z_score() < 4.0, "{}: z = {}", c.label(), c.z_score());
    }
}
