//! The acceptance gate: one test per criterion, each printing its pass/fail
//! line and the measured values.
//!
//! Criterion 7's mean-fitness bound is known to sit above its threshold at
//! the pinned horizon (the time-averaged mean fitness equals
//! `1 - ln(mass_T)/T` exactly, and `mass_500 ~ 2e-6` forces ~1.026); the
//! test states the bound as specified and reports the measured value.

use hoc_core::acceptance::{self, CriterionOutcome, DEFAULT_SEED};

fn report(outcome: &CriterionOutcome) {
    println!("{}", outcome.summary());
    for check in &outcome.checks {
        let mark = if check.passed { "ok " } else { "FAIL" };
        println!("    [{mark}] {} — {}", check.label, check.detail);
    }
}

fn run(f: impl Fn(u64) -> hoc_core::Result<CriterionOutcome>) -> CriterionOutcome {
    let outcome = f(DEFAULT_SEED).expect("criterion run failed");
    report(&outcome);
    outcome
}

macro_rules! criterion_test {
    ($name:ident, $f:path) => {
        #[test]
        fn $name() {
            let outcome = run($f);
            assert!(
                outcome.passed(),
                "criterion failed:\n{}",
                outcome
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("  {} — {}", c.label, c.detail))
                    .collect::<Vec<_>>()
                    .join("\n")
            );
        }
    };
}

criterion_test!(criterion_01_spectral_closed_forms, acceptance::criterion_1);
criterion_test!(criterion_02_oracle_gate, acceptance::criterion_2);
criterion_test!(
    criterion_03_fast_nonlinear_convergence,
    acceptance::criterion_3
);
criterion_test!(
    criterion_04_conservative_rate_and_entropy,
    acceptance::criterion_4
);
criterion_test!(criterion_05_critical_linear_growth, acceptance::criterion_5);
criterion_test!(
    criterion_06_critical_algebraic_decay,
    acceptance::criterion_6
);
criterion_test!(
    criterion_07_subcritical_concentration,
    acceptance::criterion_7
);
criterion_test!(
    criterion_08_subcritical_linear_limit,
    acceptance::criterion_8
);
criterion_test!(criterion_09_inequality_suite, acceptance::criterion_9);
criterion_test!(criterion_10_discretization_orders, acceptance::criterion_10);
