// Multitask logistic regression on sign labels, scored by F1 against
// independent single-task fits.

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::eval::{random_split, score_model};
use mmtfl::{fit, fit_single_task, FitOptions, LossKind, MultitaskDataset, RegularizerSpec, TaskData};

pub fn main() -> mmtfl::Result<()> {
    let spec = SyntheticSpec { tasks: 6, n: 120, d: 30, ..SyntheticSpec::d1(21) };
    let (data, _) = generate(&spec)?;
    let labelled = MultitaskDataset::new(
        data.tasks()
            .iter()
            .map(|t| TaskData::new(t.id.clone(), t.x.clone(), t.y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })))
            .collect::<mmtfl::Result<Vec<_>>>()?,
    )?;
    let (train, test) = random_split(&labelled, 0.33, 2)?;
    let opts = FitOptions::default();

    let stl = fit_single_task(&train, &RegularizerSpec::new(2, 2, 1.0, 1.0, LossKind::Logistic)?, &opts)?;
    println!("{:<10} F1 {:.4}", "STL", score_model(&stl.alpha(), &test, LossKind::Logistic)?);
    for (p, k) in [(2, 2), (2, 1), (1, 2)] {
        let model = RegularizerSpec::new(p, k, 1.0, 1.0, LossKind::Logistic)?;
        let result = fit(&train, &model, &opts)?;
        let zero_gates = result.decomposition.c().iter().filter(|c| **c < 1e-6).count();
        println!(
            "{:<10} F1 {:.4}  ({:?} after {} iterations, {zero_gates} gates below 1e-6)",
            model.label(),
            score_model(&result.alpha(), &test, LossKind::Logistic)?,
            result.termination,
            result.iterations
        );
    }
    Ok(())
}
