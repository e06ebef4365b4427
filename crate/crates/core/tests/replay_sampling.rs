mod support;

/// First set of the 20 checked below.
const BASE_SET: u64 = 100;

#[test]
fn per_and_copper_draws_fit_their_masses() {
    for set in BASE_SET..BASE_SET + 20 {
        let outcome = support::replay_chi_square(set);
        assert!(outcome.per_p > 0.01, "set {set}: per p = {}", outcome.per_p);
        assert!(outcome.copper_p > 0.01, "set {set}: copper p = {}", outcome.copper_p);
    }
}

/// With a correct sampler the p-values are uniform: about 1% fall below
/// 0.01 and the median sits near one half.
#[test]
fn p_values_are_calibrated() {
    let mut ps: Vec<f64> = (0..200)
        .map(support::replay_chi_square)
        .flat_map(|o| [o.per_p, o.copper_p])
        .collect();
    ps.sort_by(f64::total_cmp);
    let low = ps.iter().filter(|&&p| p < 0.01).count();
    assert!(low <= 12, "{low} of 400 below 0.01");
    let median = ps[ps.len() / 2];
    assert!((0.4..0.6).contains(&median), "median p {median}");
}
