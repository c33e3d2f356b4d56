//! Optimize, persist, reload and evaluate, end to end.

use fsc_core::dp::{value_iteration, DpParams, PolicyTable};
use fsc_core::mc::{directed_info_rate, markov_lower_bound, LowerBoundParams, Source};
use fsc_core::oracle::exact_directed_info;
use fsc_core::{ChannelSpec, Error, InputConstraint};

fn ge(eps_b: f64) -> ChannelSpec {
    ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, eps_b)
        .unwrap()
        .with_constraint(InputConstraint::rll_1_inf())
        .unwrap()
}

#[test]
fn reloaded_policy_evaluates_identically() {
    let ch = ge(0.4);
    let sol = value_iteration(&ch, &DpParams::new(1, 1, 1, 0.2, 0.2, 20)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    sol.table.save(&path).unwrap();
    let back = PolicyTable::load(&path).unwrap();
    let a = directed_info_rate(&ch, &Source::Table(sol.table), 1, 1, 50_000, 500, 9).unwrap();
    let b = directed_info_rate(&ch, &Source::Table(back), 1, 1, 50_000, 500, 9).unwrap();
    assert_eq!(a, b);
    // the evaluated rate sits near the DP average reward
    assert!((a.mean - sol.sigma).abs() < 0.1, "{} vs {}", a.mean, sol.sigma);
}

#[test]
fn policy_for_another_channel_is_rejected() {
    let sol = value_iteration(&ge(0.5), &DpParams::new(0, 0, 1, 0.5, 0.5, 3)).unwrap();
    let err = directed_info_rate(&ge(0.4), &Source::Table(sol.table), 0, 0, 1000, 10, 1).unwrap_err();
    assert!(matches!(err, Error::InvalidParameters(_)), "{err:?}");
}

#[test]
fn delay_shape_must_match_the_table() {
    let ch = ge(0.5);
    let sol = value_iteration(&ch, &DpParams::new(1, 1, 1, 0.5, 0.5, 3)).unwrap();
    let err = directed_info_rate(&ch, &Source::Table(sol.table), 0, 1, 1000, 10, 1).unwrap_err();
    assert!(matches!(err, Error::DelayMismatch { .. }));
}

#[test]
fn exact_and_simulated_rates_agree_on_a_memoryless_channel() {
    let bsc = ChannelSpec::bsc(0.2).unwrap();
    let src = Source::iud(&bsc).unwrap();
    let exact = exact_directed_info(&bsc, &src, 0, 0, 6).unwrap() / 6.0;
    let est = directed_info_rate(&bsc, &src, 0, 0, 200_000, 100, 4).unwrap();
    assert!((exact - est.mean).abs() < 4.0 * est.std_error + 1e-3);
}

#[test]
fn lower_bound_sits_below_the_upper_bound() {
    let ch = ge(0.5);
    let sol = value_iteration(&ch, &DpParams::new(1, 1, 1, 0.2, 0.2, 20)).unwrap();
    let upper = directed_info_rate(&ch, &Source::Table(sol.table), 1, 1, 100_000, 1000, 3).unwrap();
    let lb = markov_lower_bound(
        &ch,
        &LowerBoundParams { order: 1, step: 0.1, n: 100_000, n_search: 20_000, burn_in: 1000, seed: 3, budget: 1_000_000 },
    )
    .unwrap();
    assert!(lb.estimate.mean <= upper.mean + 3.0 * upper.std_error.max(lb.estimate.std_error));
}
