use nalgebra::{DMatrix, DVector};

/// Sufficient statistics of a least-squares task: `XᵀX`, `Xᵀy`, `yᵀy`.
///
/// Scaling the columns of `X` by `c` maps these to `diag(c) XᵀX diag(c)`
/// and `c ∘ Xᵀy`, so the alternating solver forms them once per task.
#[derive(Debug, Clone)]
pub(crate) struct LeastSquaresGram {
    pub(crate) g: DMatrix<f64>,
    pub(crate) b: DVector<f64>,
    pub(crate) yy: f64,
}

impl LeastSquaresGram {
    pub(crate) fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        LeastSquaresGram {
            g: x.tr_mul(x),
            b: x.tr_mul(y),
            yy: y.norm_squared(),
        }
    }

    pub(crate) fn scaled(&self, c: &DVector<f64>) -> Self {
        let d = c.len();
        LeastSquaresGram {
            g: DMatrix::from_fn(d, d, |i, j| c[i] * self.g[(i, j)] * c[j]),
            b: self.b.component_mul(c),
            yy: self.yy,
        }
    }

    /// `∇ ||Xβ − y||² = 2(Gβ − b)`.
    pub(crate) fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.g * beta - &self.b) * 2.0
    }
}
