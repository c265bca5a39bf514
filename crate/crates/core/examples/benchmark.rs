// Repeated-split benchmark on D1 with cross-validated γ, printed in the
// report CSV layout. Pass a repeat count to go beyond the default of two.

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::eval::{gamma_grid, run_benchmark, ExperimentPlan, Method};
use mmtfl::{FitOptions, LossKind};

pub fn main() -> mmtfl::Result<()> {
    let repeats = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let (data, _) = generate(&SyntheticSpec::d1(7))?;
    let plan = ExperimentPlan {
        train_fractions: vec![0.33],
        repeats,
        cv_folds: 3,
        methods: vec![Method::Stl, Method::Mmtfl { p: 2, k: 2 }, Method::Mmtfl { p: 2, k: 1 }],
        gamma_grid: gamma_grid(&[0.01, 1.0, 100.0]),
    };
    let report = run_benchmark("d1", &data, LossKind::LeastSquares, &plan, &FitOptions::default(), 42)?;
    report.write_csv(std::io::stdout())?;
    for row in &report.rows {
        println!("{} picked γ {:?}", row.method, row.selected_gammas);
    }
    Ok(())
}
