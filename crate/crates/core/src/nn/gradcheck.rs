//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only re-runs the forward pass; it shares nothing with the
//! backward rules it checks.

use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Tape, Var};

/// Finite-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Central-difference half step.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so that entries whose
    /// true gradient is zero are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-4,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(self.floor)
    }

    /// Central difference of `f` with respect to every entry of `x`.
    pub fn numeric_gradient(&self, x: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
        let mut probe = x.clone();
        let mut grad = Matrix::zeros(x.rows(), x.cols());
        for k in 0..x.len() {
            let orig = probe.as_slice()[k];
            probe.as_mut_slice()[k] = orig + self.step;
            let plus = f(&probe);
            probe.as_mut_slice()[k] = orig - self.step;
            let minus = f(&probe);
            probe.as_mut_slice()[k] = orig;
            grad.as_mut_slice()[k] = (plus - minus) / (2.0 * self.step);
        }
        grad
    }

    /// Largest relative error between `analytic` and `numeric`.
    pub fn max_error(&self, analytic: &Matrix, numeric: &Matrix) -> f64 {
        assert_eq!(analytic.shape(), numeric.shape());
        analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(&a, &n)| self.relative_error(a, n))
            .fold(0.0, f64::max)
    }
}

/// Builds `f` on a fresh tape with `inputs` as free inputs and compares the
/// tape gradient of the scalar result with central differences, using the
/// default settings. Returns the largest relative error over all inputs.
pub fn check_input_gradients(inputs: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    check_input_gradients_with(GradCheck::default(), inputs, f)
}

pub fn check_input_gradients_with(
    settings: GradCheck,
    inputs: &[Matrix],
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) -> f64 {
    let eval = |values: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.input(v.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).get(0, 0)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.input(v.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).expect("scalar output");

    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(inputs[k].rows(), inputs[k].cols()));
        let numeric = settings.numeric_gradient(&inputs[k], |probe| {
            let mut values = inputs.to_vec();
            values[k] = probe.clone();
            eval(&values)
        });
        worst = worst.max(settings.max_error(&analytic, &numeric));
    }
    worst
}

/// Uniform random matrix in `[lo, hi)`.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}
