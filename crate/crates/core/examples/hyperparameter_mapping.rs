// Moves between the multiplicative parameters (p, k, γ1, γ2) and the joint
// row-penalty parameters (q, λ), then checks on a fitted model that both
// objectives agree.

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::{
    fit, joint_objective, map_joint_to_multiplicative, map_multiplicative_to_joint, multiplicative_objective,
    FitOptions, RegularizerSpec,
};

pub fn main() -> mmtfl::Result<()> {
    for (p, k, g1, g2) in [(2, 2, 1.0, 1.0), (2, 1, 8.0, 1.0), (1, 2, 1.0, 8.0), (1, 1, 0.5, 2.0)] {
        let (q, lambda) = map_multiplicative_to_joint(p, k, g1, g2)?;
        let (k_back, g1_back, g2_back) = map_joint_to_multiplicative(p, q, lambda, g1 / g2)?;
        println!(
            "(p={p}, k={k}, γ1={g1}, γ2={g2}) -> (q={q:.4}, λ={lambda:.4}) -> (k={k_back}, γ1={g1_back:.4}, γ2={g2_back:.4})"
        );
    }

    let spec = SyntheticSpec { tasks: 4, n: 40, d: 20, ..SyntheticSpec::d1(5) };
    let (data, _) = generate(&spec)?;
    let model = RegularizerSpec::least_squares(2, 1, 3.0, 1.0)?;
    let result = fit(&data, &model, &FitOptions::default())?;
    let j1 = multiplicative_objective(&result.decomposition, &data, &model)?;
    let j2 = joint_objective(&result.alpha(), &data, &model)?;
    println!(
        "fitted {} after {} iterations: multiplicative {j1:.10}, joint {j2:.10}, relative gap {:.2e}",
        model.label(),
        result.iterations,
        (j1 - j2).abs() / j2.abs().max(1.0)
    );
    Ok(())
}
