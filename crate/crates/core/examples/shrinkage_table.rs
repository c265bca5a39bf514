// Closed-form gates for the four (p, k) cells, checked against a
// brute-force minimization of the penalty in each gate.

use mmtfl::verify::{brute_force_c_oracle, default_oracle_grid};
use mmtfl::{closed_form_c_from_b, RegularizerSpec};
use nalgebra::DMatrix;

pub fn main() -> mmtfl::Result<()> {
    let b = DMatrix::from_row_slice(3, 3, &[3.0, 4.0, 0.0, 1.0, -2.0, 3.0, 0.0, 0.0, 0.0]);
    let (gamma1, gamma2) = (2.0, 0.5);
    println!("B rows: (3, 4, 0), (1, -2, 3), (0, 0, 0); gamma1 = {gamma1}, gamma2 = {gamma2}");
    println!("{:<8} {:>10} {:>10} {:>10}", "cell", "c_1", "c_2", "c_3");
    for (p, k) in [(2, 2), (1, 1), (2, 1), (1, 2)] {
        let spec = RegularizerSpec::least_squares(p, k, gamma1, gamma2)?;
        let c = closed_form_c_from_b(&b, &spec);
        println!("({p},{k})    {:>10.5} {:>10.5} {:>10.5}", c[0], c[1], c[2]);

        // Hold each row of A = diag(c) B fixed and search for the best gate.
        for j in 0..b.nrows() {
            let row: Vec<f64> = b.row(j).iter().map(|v| v * c[j]).collect();
            let oracle = brute_force_c_oracle(&row, &spec, default_oracle_grid(&row, &spec, c[j]))?;
            assert!((oracle - c[j]).abs() < 1e-3, "({p},{k}) row {j}: {oracle} vs {}", c[j]);
        }
    }
    println!("every gate matches the brute-force oracle to 1e-3");
    Ok(())
}
