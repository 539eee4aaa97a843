//! Cross-checks the hand-rolled special functions against `statrs`.

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use demo_mbo::eval::stats::{ln_gamma, regularized_incomplete_beta, student_t_two_sided};
use demo_mbo::eval::welch_t_test;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ln_gamma_matches(x in 1e-3f64..200.0) {
        let want = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ln_gamma(x) - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn incomplete_beta_matches(x in 0.0f64..=1.0, a in 0.05f64..50.0, b in 0.05f64..50.0) {
        let want = statrs::function::beta::beta_reg(a, b, x);
        prop_assert!((regularized_incomplete_beta(x, a, b) - want).abs() <= 1e-9);
    }

    #[test]
    fn two_sided_t_matches(t in -20.0f64..20.0, dof in 0.5f64..200.0) {
        let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
        let want = 2.0 * dist.cdf(-t.abs());
        prop_assert!((student_t_two_sided(t, dof) - want).abs() <= 1e-9);
    }

    #[test]
    fn welch_p_matches(a in proptest::collection::vec(-3.0f64..3.0, 2..12), b in proptest::collection::vec(-3.0f64..3.0, 2..12)) {
        let Ok(r) = welch_t_test(&a, &b) else { return Ok(()) };
        let dist = StudentsT::new(0.0, 1.0, r.dof).unwrap();
        prop_assert!((r.p - 2.0 * dist.cdf(-r.t.abs())).abs() <= 1e-9);
    }
}
