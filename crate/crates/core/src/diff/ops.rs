//! Forward and backward passes for every op in the model. All gradients are
//! hand-derived and pinned by finite-difference tests in `gradcheck`.

use super::tensor::Tensor;
use crate::exec;

/// Gathers rows of `table` ([V, D]) at `indices`, producing [B, D].
pub fn embedding_forward(table: &Tensor, indices: &[u32]) -> Tensor {
    let (v, d) = (table.n_rows(), table.n_cols());
    let mut out = Tensor::zeros(&[indices.len(), d]);
    for (b, &idx) in indices.iter().enumerate() {
        let idx = idx as usize;
        assert!(idx < v, "embedding index {idx} out of range {v}");
        out.row_mut(b).copy_from_slice(table.row(idx));
    }
    out
}

/// Accumulates `grad_out` ([B, D]) into `grad_table` ([V, D]) at `indices`.
/// Rows hit more than once accumulate, matching the forward's gather.
pub fn embedding_backward(grad_table: &mut Tensor, indices: &[u32], grad_out: &Tensor) {
    assert_eq!(grad_out.n_rows(), indices.len());
    assert_eq!(grad_out.n_cols(), grad_table.n_cols());
    for (b, &idx) in indices.iter().enumerate() {
        let dst = grad_table.row_mut(idx as usize);
        for (d, g) in dst.iter_mut().zip(grad_out.row(b)) {
            *d += g;
        }
    }
}

/// y = x @ w + b, shapes [B,I] x [I,O] + [O] -> [B,O].
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut y = x.matmul(w);
    let o = y.n_cols();
    assert_eq!(b.len(), o);
    let bias = b.data();
    for r in 0..y.n_rows() {
        for (yv, &bv) in y.row_mut(r).iter_mut().zip(bias) {
            *yv += bv;
        }
    }
    y
}

/// Returns (dx, dw, db) for y = x @ w + b given dy.
pub fn affine_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let dx = dy.matmul_nt(w);
    let dw = x.matmul_tn(dy);
    let mut db = Tensor::zeros(&[dy.n_cols()]);
    for r in 0..dy.n_rows() {
        for (d, g) in db.data_mut().iter_mut().zip(dy.row(r)) {
            *d += g;
        }
    }
    (dx, dw, db)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    y
}

/// dx from dy using the pre-activation input; the derivative at 0 is 0.
pub fn relu_backward(x_pre: &Tensor, dy: &Tensor) -> Tensor {
    assert_eq!(x_pre.shape(), dy.shape());
    let mut dx = dy.clone();
    for (d, &x) in dx.data_mut().iter_mut().zip(x_pre.data()) {
        if x <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Per-row negative log-likelihood of `targets` under softmax of `logits`.
/// Stabilized with max subtraction; never produces NaN for finite logits.
pub fn softmax_nll_rows(logits: &Tensor, targets: &[u32]) -> Vec<f64> {
    let (b, k) = (logits.n_rows(), logits.n_cols());
    assert_eq!(targets.len(), b);
    exec::map_indexed(b, |r| {
        let row = logits.row(r);
        let t = targets[r] as usize;
        assert!(t < k, "target {t} out of range {k}");
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        m + sum.ln() - row[t]
    })
}

/// Mean cross-entropy over the batch plus d(loss)/d(logits), which is
/// (softmax - onehot) / B per row.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[u32]) -> (f64, Tensor) {
    let (b, k) = (logits.n_rows(), logits.n_cols());
    assert_eq!(targets.len(), b);
    assert!(b > 0, "empty batch");
    let inv_b = 1.0 / b as f64;
    let rows = exec::map_indexed(b, |r| {
        let row = logits.row(r);
        let t = targets[r] as usize;
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let nll = m + sum.ln() - row[t];
        let mut grad: Vec<f64> = row.iter().map(|&v| (v - m).exp() / sum * inv_b).collect();
        grad[t] -= inv_b;
        (nll, grad)
    });
    let loss = rows.iter().map(|(nll, _)| nll).sum::<f64>() * inv_b;
    let mut dlogits = Tensor::zeros(&[b, k]);
    for (r, (_, grad)) in rows.iter().enumerate() {
        dlogits.row_mut(r).copy_from_slice(grad);
    }
    (loss, dlogits)
}

fn rbf_kernel(a: &[f64], b: &[f64], inv_two_sigma_sq: f64) -> f64 {
    let mut d2 = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-d2 * inv_two_sigma_sq).exp()
}

/// Biased (V-statistic) RBF maximum mean discrepancy between `z` ([Nz, D])
/// and `p` ([Np, D]) with bandwidth `sigma`, plus the gradient with respect
/// to `z`. The three kernel terms use the same summation order so identical
/// inputs cancel exactly.
pub fn rbf_mmd(z: &Tensor, p: &Tensor, sigma: f64) -> (f64, Tensor) {
    let (nz, d) = (z.n_rows(), z.n_cols());
    let (np, d2) = (p.n_rows(), p.n_cols());
    assert_eq!(d, d2, "latent dims {d} vs {d2}");
    assert!(nz > 0 && np > 0, "empty sample");
    assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive");
    let c = 1.0 / (2.0 * sigma * sigma);

    let zz: f64 = exec::sum_indexed(nz, |i| {
        let zi = z.row(i);
        (0..nz).map(|j| rbf_kernel(zi, z.row(j), c)).sum::<f64>()
    });
    let pp: f64 = exec::sum_indexed(np, |i| {
        let pi = p.row(i);
        (0..np).map(|j| rbf_kernel(pi, p.row(j), c)).sum::<f64>()
    });
    let zp: f64 = exec::sum_indexed(nz, |i| {
        let zi = z.row(i);
        (0..np).map(|j| rbf_kernel(zi, p.row(j), c)).sum::<f64>()
    });
    let value = zz / (nz * nz) as f64 + pp / (np * np) as f64 - 2.0 * zp / (nz * np) as f64;

    // d/dz_i = (2/(Nz^2 sigma^2)) sum_j -k(z_i,z_j)(z_i - z_j)
    //        + (2/(Nz Np sigma^2)) sum_j  k(z_i,p_j)(z_i - p_j)
    let sig2 = sigma * sigma;
    let coef_zz = 2.0 / ((nz * nz) as f64 * sig2);
    let coef_zp = 2.0 / ((nz * np) as f64 * sig2);
    let grad_rows = exec::map_indexed(nz, |i| {
        let zi = z.row(i);
        let mut g = vec![0.0; d];
        for j in 0..nz {
            let zj = z.row(j);
            let k = rbf_kernel(zi, zj, c);
            for ((gv, &a), &b) in g.iter_mut().zip(zi).zip(zj) {
                *gv -= coef_zz * k * (a - b);
            }
        }
        for j in 0..np {
            let pj = p.row(j);
            let k = rbf_kernel(zi, pj, c);
            for ((gv, &a), &b) in g.iter_mut().zip(zi).zip(pj) {
                *gv += coef_zp * k * (a - b);
            }
        }
        g
    });
    (value, Tensor::from_vec(&[nz, d], grad_rows.concat()))
}
