mod support;

#[test]
fn backprop_matches_central_differences() {
    let worst = (0..100).map(support::gradient_check).fold(0.0, f64::max);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
