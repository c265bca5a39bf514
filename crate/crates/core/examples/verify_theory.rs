// Runs the certificate suite twice: with the derived γ2 exponent in the σ
// update, and with the misprinted one, which the oracle rejects.

use mmtfl::verify::{run_suite, VerifyConfig};
use mmtfl::SigmaExponent;

pub fn main() -> mmtfl::Result<()> {
    let derived = run_suite(&VerifyConfig::default())?;
    for check in &derived.checks {
        println!(
            "{} {:<36} worst {:.2e} over {} trials",
            if check.passed { "pass" } else { "FAIL" },
            check.name,
            check.worst_residual,
            check.trials
        );
    }
    println!("derived exponent: all passed = {}", derived.passed);

    let typeset = run_suite(&VerifyConfig { sigma_exponent: SigmaExponent::Typeset, ..VerifyConfig::default() })?;
    let failing: Vec<&str> = typeset.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    println!("typeset exponent: failing checks {failing:?}");
    Ok(())
}
