use fastcolor_core::gradients::gradient_report;

#[test]
fn every_layer_and_network_matches_finite_differences() {
    for seed in [1, 2, 3] {
        let report = gradient_report(seed).unwrap();
        assert_eq!(report.len(), 12);
        for c in report {
            assert!(c.max_error <= 1e-4, "seed {seed}: {} error {}", c.name, c.max_error);
        }
    }
}
