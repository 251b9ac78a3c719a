use cellfree_oracle::{ks_distance, lognormal_rate_mc, sample_hypoexp};
use cellfree_outage::hypoexp::HypoExpParams;
use cellfree_outage::lognormal::{rate_lognormal, LogNormalParams};

#[test]
fn rate_integral_matches_sampling() {
    for (mu, sigma) in [(0.0, 0.5), (2.0, 1.5), (-3.0, 1.0)] {
        let exact = rate_lognormal(&LogNormalParams::from_mu_sigma(mu, sigma)).unwrap();
        let mc = lognormal_rate_mc(mu, sigma, 400_000, 17);
        assert!((exact - mc.mean).abs() < 4.0 * mc.std_err, "mu {mu} sigma {sigma}: {exact} vs {mc:?}");
    }
}

#[test]
fn hypoexp_cdf_matches_sampling() {
    let scales = [0.4, 1.3, 2.0, 2.0 * (1.0 + 1e-10), 5.5];
    let p = HypoExpParams::new(scales.to_vec()).unwrap();
    let mut xs = sample_hypoexp(&scales, 200_000, 4);
    let d = ks_distance(&mut xs, |x| p.cdf(x));
    // 99.9% quantile of the KS statistic is about 1.95 / sqrt(n)
    assert!(d < 1.95 / (200_000f64).sqrt(), "KS distance {d}");
}

#[test]
fn two_scale_value() {
    let mut xs = sample_hypoexp(&[1.0, 2.0], 1_000_000, 9);
    let below = xs.iter().filter(|&&x| x < 2.0).count() as f64 / 1e6;
    let want = -(1.0 - (-2.0f64).exp()) + 2.0 * (1.0 - (-1.0f64).exp());
    let se = (want * (1.0 - want) / 1e6).sqrt();
    assert!((below - want).abs() < 4.0 * se);
    let p = HypoExpParams::new(vec![1.0, 2.0]).unwrap();
    assert!(ks_distance(&mut xs, |x| p.cdf(x)) < 0.005);
}
