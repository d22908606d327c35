//! Central-difference validation of analytic gradients. The loss closure
//! must be deterministic: it is re-evaluated at perturbed parameters and
//! any internal randomness would swamp the difference quotient.

use super::param::ParamSet;

/// Runs `loss_fn` once to populate analytic gradients, then perturbs every
/// scalar by ±h and returns the maximum relative error
/// |analytic − numeric| / max(1e-8, |analytic| + |numeric|).
///
/// `loss_fn` must compute the scalar loss and write gradients into the set.
pub fn gradient_check<F>(params: &mut ParamSet, mut loss_fn: F, h: f64) -> f64
where
    F: FnMut(&mut ParamSet) -> f64,
{
    assert!(h > 0.0 && h.is_finite());
    params.zero_grads();
    let base = loss_fn(params);
    assert!(base.is_finite(), "loss is not finite at the evaluation point");
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().to_vec()).collect();

    let mut max_rel = 0.0_f64;
    for pi in 0..params.len() {
        for si in 0..params.get(pi).value.len() {
            let orig = params.get(pi).value.data()[si];

            params.get_mut(pi).value.data_mut()[si] = orig + h;
            params.zero_grads();
            let up = loss_fn(params);

            params.get_mut(pi).value.data_mut()[si] = orig - h;
            params.zero_grads();
            let down = loss_fn(params);

            params.get_mut(pi).value.data_mut()[si] = orig;
            assert!(up.is_finite() && down.is_finite(), "perturbed loss not finite");

            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi][si];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    // Restore gradients to the analytic ones at the unperturbed point.
    params.zero_grads();
    let check = loss_fn(params);
    debug_assert_eq!(check, base);
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::ops;
    use crate::diff::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rand_tensor(rng: &mut ChaCha12Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn quadratic_at_three() {
        // f(theta) = theta^2 at theta = 3: analytic 6, central difference
        // is exact for polynomials of degree 2.
        let mut ps = ParamSet::new();
        ps.register("theta", Tensor::from_vec(&[1], vec![3.0]));
        let rel = gradient_check(
            &mut ps,
            |ps| {
                let t = ps.value(0).data()[0];
                ps.get_mut(0).grad.data_mut()[0] += 2.0 * t;
                t * t
            },
            1e-5,
        );
        assert!(rel < 1e-9, "rel-err {rel}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut ps = ParamSet::new();
        ps.register("theta", Tensor::from_vec(&[2], vec![1.0, -2.0]));
        let rel = gradient_check(&mut ps, |_| 42.0, 1e-5);
        assert_eq!(rel, 0.0);
    }

    #[test]
    fn affine_chain_gradients() {
        // loss = mean CE over softmax(relu(x W1 + b1) W2 + b2) with x from
        // an embedding table, exercising every op's backward in one chain.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut ps = ParamSet::new();
        let table = ps.register("table", rand_tensor(&mut rng, &[5, 3]));
        let w1 = ps.register("w1", rand_tensor(&mut rng, &[3, 4]));
        let b1 = ps.register("b1", rand_tensor(&mut rng, &[4]));
        let w2 = ps.register("w2", rand_tensor(&mut rng, &[4, 3]));
        let b2 = ps.register("b2", rand_tensor(&mut rng, &[3]));
        let indices = vec![0_u32, 3, 4, 1, 3, 2];
        let targets = vec![1_u32, 0, 2, 2, 1, 0];

        let rel = gradient_check(
            &mut ps,
            |ps| {
                let x = ops::embedding_forward(ps.value(table), &indices);
                let pre = ops::affine_forward(&x, ps.value(w1), ps.value(b1));
                let hid = ops::relu_forward(&pre);
                let logits = ops::affine_forward(&hid, ps.value(w2), ps.value(b2));
                let (loss, dlogits) = ops::softmax_cross_entropy(&logits, &targets);
                let (dhid, dw2, db2) = ops::affine_backward(&hid, ps.value(w2), &dlogits);
                let dpre = ops::relu_backward(&pre, &dhid);
                let (dx, dw1, db1) = ops::affine_backward(&x, ps.value(w1), &dpre);
                ops::embedding_backward(&mut ps.get_mut(table).grad, &indices, &dx);
                ps.get_mut(w1).grad.add_assign(&dw1);
                ps.get_mut(b1).grad.add_assign(&db1);
                ps.get_mut(w2).grad.add_assign(&dw2);
                ps.get_mut(b2).grad.add_assign(&db2);
                loss
            },
            1e-5,
        );
        assert!(rel < 1e-6, "rel-err {rel}");
    }

    #[test]
    fn mmd_gradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let prior = rand_tensor(&mut rng, &[6, 3]);
        let mut ps = ParamSet::new();
        let z = ps.register("z", rand_tensor(&mut rng, &[6, 3]));
        let rel = gradient_check(
            &mut ps,
            |ps| {
                let (v, dz) = ops::rbf_mmd(ps.value(z), &prior, 0.9);
                ps.get_mut(z).grad.add_assign(&dz);
                v
            },
            1e-5,
        );
        assert!(rel < 1e-5, "rel-err {rel}");
    }

    #[test]
    fn relu_gradient_away_from_zero() {
        let mut ps = ParamSet::new();
        // Inputs far from 0 so the +-h perturbation never crosses the kink.
        ps.register("x", Tensor::from_vec(&[1, 4], vec![-1.0, 2.0, -0.5, 3.0]));
        let rel = gradient_check(
            &mut ps,
            |ps| {
                let x = ps.value(0).clone();
                let y = ops::relu_forward(&x);
                // loss = sum of squares of relu output.
                let loss: f64 = y.data().iter().map(|v| v * v).sum();
                let mut dy = y.clone();
                dy.scale(2.0);
                let dx = ops::relu_backward(&x, &dy);
                ps.get_mut(0).grad.add_assign(&dx);
                loss
            },
            1e-5,
        );
        assert!(rel < 1e-6, "rel-err {rel}");
    }
}
