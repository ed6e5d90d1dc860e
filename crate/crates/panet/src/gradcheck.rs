//! Finite-difference verification of analytic gradients.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares analytic gradients of a scalar function against central
/// differences and returns the maximum relative error.
///
/// `f` rebuilds the computation from leaf vars on a fresh tape.
/// `coords` restricts the check to `(param_index, element_index)` pairs;
/// `None` checks every coordinate of every parameter.
pub fn finite_diff_check(
    params: &[Tensor],
    step: f64,
    coords: Option<&[(usize, usize)]>,
    f: impl Fn(&Tape, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |theta: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = theta.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        if loss.value().len() != 1 {
            return Err(Error::Usage("finite_diff_check: loss must be scalar".into()));
        }
        Ok(loss.value().item())
    };

    // Analytic gradients at theta.
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.of(v)).collect();

    let all_coords: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all_coords = params
                .iter()
                .enumerate()
                .flat_map(|(pi, t)| (0..t.len()).map(move |ei| (pi, ei)))
                .collect();
            &all_coords
        }
    };

    let mut max_rel = 0.0f64;
    for &(pi, ei) in coords {
        let perturbed = |delta: f64| -> Vec<Tensor> {
            let mut theta: Vec<Tensor> = params.to_vec();
            let mut data = theta[pi].to_vec();
            data[ei] += delta;
            theta[pi] = Tensor::new(theta[pi].shape().to_vec(), data);
            theta
        };
        let a = analytic[pi].data()[ei];
        let rel_at = |h: f64| -> Result<f64> {
            let numeric = (eval(&perturbed(h))? - eval(&perturbed(-h))?) / (2.0 * h);
            Ok((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8))
        };
        let mut rel = rel_at(step)?;
        // A step that straddles a relu kink inflates the central difference
        // by O(step); shrinking the step separates that artifact from a real
        // gradient error, which would not improve.
        if rel > 1e-5 {
            rel = rel.min(rel_at(step / 10.0)?);
        }
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Checks every differentiable primitive on small random inputs and
/// returns the worst relative error across all of them.
pub fn primitive_suite(seed: u64) -> Result<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Magnitudes bounded away from zero keep relu and the relative-error
    // denominator off their kinks.
    let mut t = |shape: Vec<usize>| -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(
            shape,
            (0..n)
                .map(|_| {
                    let mag = rng.gen_range(0.3..1.0);
                    if rng.gen_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect(),
        )
    };
    let mut worst = 0.0f64;
    let mut run = |params: &[Tensor], f: &dyn Fn(&Tape, &[Var]) -> Result<Var>| -> Result<()> {
        let err = finite_diff_check(params, DEFAULT_STEP, None, f)?;
        worst = worst.max(err);
        Ok(())
    };

    run(&[t(vec![2, 3]), t(vec![2, 3])], &|_, v| v[0].add(&v[1])?.mul(&v[0])?.sum().into_ok())?;
    run(&[t(vec![2, 3]), t(vec![2, 3])], &|_, v| v[0].sub(&v[1])?.mul(&v[1])?.sum().into_ok())?;
    run(&[t(vec![2, 3]), t(vec![2, 3])], &|_, v| v[0].mul(&v[1])?.sum().into_ok())?;
    run(&[t(vec![2, 3])], &|_, v| v[0].mul(&v[0])?.scale(1.7).sum().into_ok())?;
    run(&[t(vec![2, 3]), t(vec![3])], &|_, v| {
        v[0].add_bias(&v[1])?.mul(&v[0])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![3, 2])], &|_, v| v[0].matmul(&v[1])?.sum().into_ok())?;
    run(&[t(vec![2, 3])], &|_, v| {
        v[0].transpose()?.matmul(&v[0])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![3, 2])], &|_, v| {
        v[0].reshape(vec![3, 2])?.mul(&v[1])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![2, 3])], &|_, v| {
        v[0].relu().mul(&v[1])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![2, 3])], &|_, v| {
        v[0].softmax_lastdim()?.mul(&v[1])?.sum().into_ok()
    })?;
    let positive = Tensor::new(vec![2, 2], vec![0.4, 0.9, 1.3, 0.6]);
    run(&[positive], &|_, v| v[0].log_clamped(1e-12).sum().into_ok())?;
    run(&[t(vec![3, 4]), t(vec![3, 4])], &|_, v| {
        v[0].mul(&v[1])?.mean_rows()?.sum().into_ok()
    })?;
    run(&[t(vec![4, 3]), t(vec![2, 3])], &|_, v| {
        v[0].slice_rows(1, 3)?.mul(&v[1])?.sum().into_ok()
    })?;
    run(&[t(vec![3, 4]), t(vec![3, 2])], &|_, v| {
        v[0].slice_cols(1, 3)?.mul(&v[1])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 4]), t(vec![4]), t(vec![4]), t(vec![2, 4])], &|_, v| {
        v[0].layer_norm(&v[1], &v[2], 1e-5)?.mul(&v[3])?.sum().into_ok()
    })?;
    run(&[t(vec![2, 2, 3])], &|_, v| {
        v[0].mul(&v[0])?.global_avg_pool()?.sum().into_ok()
    })?;
    run(&[t(vec![2, 4, 2])], &|_, v| {
        v[0].mul(&v[0])?.avg_pool2()?.sum().into_ok()
    })?;
    run(&[t(vec![4, 4, 2]), t(vec![3, 3, 2, 2])], &|_, v| {
        v[0].conv2d(&v[1], 1, 1)?.sum().into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![1, 3]), t(vec![3, 3])], &|_, v| {
        crate::autograd::concat_rows(&[&v[0], &v[1]])?
            .mul(&v[2])?
            .sum()
            .into_ok()
    })?;
    run(&[t(vec![2, 3]), t(vec![2, 2]), t(vec![2, 5])], &|_, v| {
        crate::autograd::concat_cols(&[&v[0], &v[1]])?
            .mul(&v[2])?
            .sum()
            .into_ok()
    })?;
    Ok(worst)
}

trait IntoOk {
    fn into_ok(self) -> Result<Var>;
}

impl IntoOk for Var {
    fn into_ok(self) -> Result<Var> {
        Ok(self)
    }
}

/// Full-pipeline gradient check on the smallest model configuration with a
/// synthetic two-view sample; returns the maximum relative error.
pub fn end_to_end_check(seed: u64) -> Result<f64> {
    use crate::model::{forward, BoundParams, HyperParams, Mode, ModelParams};
    use crate::shapegen::dataset::MultiViewSample;
    use rand::Rng;
    use rand::SeedableRng;

    let hp = HyperParams::tiny();
    let params = ModelParams::init(&hp, seed)?;
    let theta: Vec<Tensor> = params.named().iter().map(|(_, t)| (*t).clone()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xE2E);
    let sample = MultiViewSample {
        label: 1,
        viewpoints: vec![[0.0, 0.0, 1.0]; 2],
        views: (0..2)
            .map(|_| (0..hp.r * hp.r).map(|_| rng.gen_range(0.0..1.0f32)).collect())
            .collect(),
    };
    let (n_conv, n_apr) = (params.conv_w.len(), params.apr.len());
    finite_diff_check(&theta, DEFAULT_STEP, None, |tape, vars| {
        let bound = BoundParams::from_ordered(n_conv, n_apr, vars)?;
        let fwd = forward(tape, &bound, &hp, &sample, 1.0, 0.1, Mode::Eval)?;
        Ok(fwd.loss.total)
    })
}
