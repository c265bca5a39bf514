// Generates the two synthetic benchmarks and prints their sharing structure.

use mmtfl::datagen::{generate, SyntheticSpec};

pub fn main() -> mmtfl::Result<()> {
    let (d1, truth1) = generate(&SyntheticSpec::d1(7))?;
    println!(
        "D1: {} tasks x {} examples x {} features, {} irrelevant, {} relevant",
        d1.n_tasks(),
        d1.tasks()[0].n_samples(),
        d1.n_features(),
        truth1.irrelevant_features.len(),
        truth1.relevant_features().len()
    );

    let (d2, truth2) = generate(&SyntheticSpec::d2(7))?;
    let used: Vec<usize> = (0..d2.n_tasks())
        .map(|t| truth2.support.column(t).iter().filter(|&&s| s).count())
        .collect();
    println!(
        "D2: {} tasks in groups {:?}, features used per task {:?}",
        d2.n_tasks(),
        truth2.task_groups,
        used
    );

    // First task of each group, to show the staircase.
    let mut leaders = Vec::new();
    for (t, &g) in truth2.task_groups.iter().enumerate() {
        if leaders.len() == g {
            leaders.push(t);
        }
    }
    println!("shared features between group leaders:");
    for &s in &leaders {
        let row: Vec<String> = leaders.iter().map(|&t| format!("{:3}", truth2.shared_features(s, t))).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
