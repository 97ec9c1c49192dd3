use edgeattn::{Tape, Tensor, Var};
use rand::seq::index::sample;
use rand::Rng;

use super::grad_close;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct CheckReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checked += other.checked;
        self.failures.extend(other.failures);
    }
}

fn weighted_output(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var, weights: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

/// Compares the tape gradient of `sum(weights * build(inputs))` with central
/// differences on up to `per_input` sampled coordinates of every input.
pub fn check_op(
    label: &str,
    inputs: &[Tensor],
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    per_input: usize,
    rng: &mut impl Rng,
) -> CheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_requires_grad(true))).collect();
    let out = build(&mut tape, &vars);
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let weights = Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let grads = tape.backward_with(out, weights.clone()).unwrap();

    let mut report = CheckReport::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let k = per_input.min(input.numel());
        for j in sample(rng, input.numel(), k) {
            let probe = |delta: f64| {
                let mut perturbed = inputs.to_vec();
                let mut d = perturbed[i].data().to_vec();
                d[j] += delta;
                perturbed[i] = Tensor::new(input.shape(), d).unwrap();
                weighted_output(&perturbed, build, &weights)
            };
            let numeric = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
            let a = analytic.data()[j];
            report.checked += 1;
            if !grad_close(a, numeric, REL_TOL) {
                report.failures.push(format!("{label} input {i} coord {j}: analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    report
}
