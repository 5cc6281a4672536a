//! The fourteen acceptance criteria at their fixed tolerances. Each test
//! prints one PASS/FAIL line; run with `--nocapture` to see them.

use layered_cftp::validation::run_criterion;

const SEED: u64 = 2026;

fn criterion(id: u8) {
    let outcome = run_criterion(id, SEED).expect("criterion runs");
    println!("{outcome}");
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn c01_toy_cftp_is_uniform() {
    criterion(1);
}

#[test]
fn c02_forward_doubling_bias() {
    criterion(2);
}

#[test]
fn c03_fresh_coins_bias() {
    criterion(3);
}

#[test]
fn c04_work_bound() {
    criterion(4);
}

#[test]
fn c05_normal_coupler_min_width() {
    criterion(5);
}

#[test]
fn c06_image_sizes() {
    criterion(6);
}

#[test]
fn c07_coupler_marginals() {
    criterion(7);
}

#[test]
fn c08_ex_post_facto() {
    criterion(8);
}

#[test]
fn c09_two_site_variance() {
    criterion(9);
}

#[test]
fn c10_covariance_oracle() {
    criterion(10);
}

#[test]
fn c11_composite_efficiency() {
    criterion(11);
}

#[test]
fn c12_chain_energy_claim() {
    criterion(12);
}

#[test]
fn c13_autogamma() {
    criterion(13);
}

#[test]
fn c14_determinism() {
    criterion(14);
}
