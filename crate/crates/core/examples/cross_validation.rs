// Three-fold cross-validation over a small γ grid on a reduced D2, followed
// by a refit on the full training split.

use mmtfl::datagen::{generate, SyntheticSpec};
use mmtfl::eval::{evaluate_split, gamma_grid, random_split, Method};
use mmtfl::{FitOptions, LossKind};

pub fn main() -> mmtfl::Result<()> {
    let spec = SyntheticSpec { tasks: 12, n: 80, d: 60, overlap: 4, common: 6, irrelevant: 3, ..SyntheticSpec::d2(3) };
    let (data, _) = generate(&spec)?;
    let (train, test) = random_split(&data, 0.5, 9)?;
    let grid = gamma_grid(&[0.1, 1.0, 10.0]);
    let opts = FitOptions::default();

    for method in [Method::Stl, Method::Mmtfl { p: 1, k: 2 }, Method::Mmtfl { p: 2, k: 2 }] {
        let out = evaluate_split(&train, &test, method, LossKind::LeastSquares, &grid, 3, &opts, 4)?;
        let scored: Vec<String> = out
            .cv
            .grid
            .iter()
            .map(|g| match g.score {
                Some(s) => format!("({},{})={s:.3}", g.gamma1, g.gamma2),
                None => format!("({},{})=failed", g.gamma1, g.gamma2),
            })
            .collect();
        println!("{method}: cv {}", scored.join(" "));
        println!(
            "{method}: picked γ = ({}, {}), cv R² {:.4}, test R² {:.4}",
            out.cv.gamma1, out.cv.gamma2, out.cv.score, out.score
        );
    }
    Ok(())
}
