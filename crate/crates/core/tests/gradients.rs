use cdrl_core::agents::{gradient_suite, SuiteLoss};
use cdrl_core::approx::gradcheck::FD_TOLERANCE;

#[test]
fn every_network_and_loss_passes_finite_differences() {
    let cases = gradient_suite(20, 7).unwrap();
    assert_eq!(cases.len(), 15);
    for c in &cases {
        assert!(c.draws >= 20);
        assert!(c.report.checked > 0, "{} {} {}: nothing checked", c.env, c.method, c.loss.name());
        assert!(
            c.passed(),
            "{} {} {} [{}]: max rel err {:.3e} over tolerance {FD_TOLERANCE:e}",
            c.env,
            c.method,
            c.loss.name(),
            c.networks,
            c.report.max_rel_err
        );
    }
    let nets = |env: &str, loss: SuiteLoss| {
        cases
            .iter()
            .filter(|c| c.env == env && c.loss == loss)
            .map(|c| c.networks.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(nets("pixel_grid", SuiteLoss::Intervention), vec!["encoder"]);
    assert_eq!(nets("monster_treasure", SuiteLoss::Sparsity), vec!["masker"]);
    assert_eq!(nets("pixel_grid", SuiteLoss::RewardFidelity), vec!["encoder+masker+reward_head"]);
    assert_eq!(
        nets("pixel_grid", SuiteLoss::TdComponent),
        vec!["encoder+q_head", "encoder+masker+q_head"]
    );
}
