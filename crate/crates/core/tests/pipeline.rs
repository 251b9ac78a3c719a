use cellfree_outage::prelude::*;
use cellfree_outage::sinr::DeploymentInstance;

fn orthogonal(m: usize, n: usize, k: usize) -> SystemConfig {
    SystemConfig { num_aps: m, antennas_per_ap: n, num_users: k, tau_p: k, pilot_mode: PilotMode::Orthogonal, ..Default::default() }
}

#[test]
fn same_seed_same_network() {
    let cfg = orthogonal(8, 2, 4);
    let a = DeploymentInstance::new(&cfg, 11, 3).unwrap();
    let b = DeploymentInstance::new(&cfg, 11, 3).unwrap();
    assert_eq!(a.deployment.beta, b.deployment.beta);
    assert_eq!(a.stats.gamma, b.stats.gamma);
    let c = DeploymentInstance::new(&cfg, 11, 4).unwrap();
    assert_ne!(a.deployment.beta, c.deployment.beta);
}

#[test]
fn general_moments_reduce_to_orthogonal_form() {
    let cfg = orthogonal(6, 3, 4);
    let inst = DeploymentInstance::new(&cfg, 5, 0).unwrap();
    for k in 0..4 {
        let g = moments_general(&inst.stats, &inst.deployment, &cfg, k).unwrap();
        let o = moments_npc(&inst.stats, &inst.deployment, &cfg, k).unwrap();
        for (x, y) in [(g.ex, o.ex), (g.ex2, o.ex2), (g.ey, o.ey), (g.ey2, o.ey2), (g.exy, o.exy)] {
            assert!((x - y).abs() <= 1e-12 * y.abs(), "{x} vs {y}");
        }
    }
}

#[test]
fn analytic_curves_are_cdfs_and_track_simulation() {
    let cfg = orthogonal(20, 2, 4);
    let grid: Vec<f64> = (-30..=20).step_by(2).map(f64::from).collect();
    let mc = run_monte_carlo(&cfg, 1, 20_000, &grid, 9).unwrap();
    let inst = DeploymentInstance::new(&cfg, 9, 0).unwrap();
    let users = cfg.num_users as f64;
    let mut udr_avg = vec![0.0; grid.len()];
    for k in 0..cfg.num_users {
        let ms = moments_npc(&inst.stats, &inst.deployment, &cfg, k).unwrap();
        let ln = fit_lognormal(&ms).unwrap();
        let mut prev = 0.0;
        for (j, &t) in grid.iter().enumerate() {
            let udr = outage_udr(&inst.stats, &inst.deployment, &cfg, db_to_linear(t), k).unwrap();
            assert!((0.0..=1.0).contains(&udr));
            udr_avg[j] += udr / users;
            let lop = outage_lognormal(&ln, db_to_linear(t));
            assert!((0.0..=1.0).contains(&lop) && lop >= prev);
            prev = lop;
        }
        let (lb, ub) = rate_bounds(&ln);
        let rate = rate_lognormal(&ln).unwrap();
        assert!(lb < rate && rate < ub);
    }
    // per user the reduction can be far off (one user here has a dominant
    // AP); the user average is what gets compared
    for (j, &t) in grid.iter().enumerate() {
        let sim = mc.system.op[j];
        assert!((udr_avg[j] - sim).abs() < 0.1, "{t} dB: udr {} sim {sim}", udr_avg[j]);
    }
}

#[test]
fn collocated_paths_agree() {
    let cfg = SystemConfig { collocated: true, ..orthogonal(10, 2, 5) };
    let inst = DeploymentInstance::new(&cfg, 2, 0).unwrap();
    let beta: Vec<f64> = inst.deployment.beta.row(0).to_vec();
    let gamma: Vec<f64> = inst.stats.gamma.row(0).to_vec();
    for t in [-20.0, -10.0, 0.0] {
        let th = db_to_linear(t);
        let closed = outage_mmimo_closed_form(&beta, &gamma, 20, inst.deployment.rho_u, th, 1).unwrap();
        let udr = outage_udr(&inst.stats, &inst.deployment, &cfg, th, 1).unwrap();
        assert!((closed - udr).abs() < 1e-6, "{t} dB: {closed} vs {udr}");
    }
}
