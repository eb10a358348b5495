mod common;

fn assert_suite(result: Result<(), String>) {
    if let Err(e) = result {
        panic!("{e}");
    }
}

#[test]
fn leibniz_rule() {
    assert_suite(common::leibniz());
}

#[test]
fn total_derivatives_commute() {
    assert_suite(common::commutation());
}

#[test]
fn prolongation_is_linear() {
    assert_suite(common::linearity());
}

#[test]
fn bracket_jacobi_identity() {
    assert_suite(common::jacobi());
}

#[test]
fn parser_round_trip() {
    assert_suite(common::round_trip());
}

#[test]
fn zero_test_agrees_with_evaluation() {
    assert_suite(common::zero_test());
}
