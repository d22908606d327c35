//! Dense row-major f64 tensors. Only what the model needs: rank 1 and 2,
//! matrix products in the three orientations backward passes require.

use crate::exec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match buffer length {}",
            shape,
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a rank-2 tensor.
    pub fn n_rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    pub fn n_cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.n_cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// out = self @ other, shapes [B,I] x [I,O] -> [B,O].
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (b, i) = (self.n_rows(), self.n_cols());
        let (i2, o) = (other.n_rows(), other.n_cols());
        assert_eq!(i, i2, "matmul inner dims {} vs {}", i, i2);
        let lhs = &self.data;
        let rhs = &other.data;
        let rows = exec::map_indexed(b, |r| {
            let x = &lhs[r * i..(r + 1) * i];
            let mut out = vec![0.0; o];
            for (k, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w = &rhs[k * o..(k + 1) * o];
                for (ov, &wv) in out.iter_mut().zip(w) {
                    *ov += xv * wv;
                }
            }
            out
        });
        Tensor::from_vec(&[b, o], rows.concat())
    }

    /// out = self^T @ other, shapes [B,I] x [B,O] -> [I,O]. Used for dW.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        let (b, i) = (self.n_rows(), self.n_cols());
        let (b2, o) = (other.n_rows(), other.n_cols());
        assert_eq!(b, b2, "matmul_tn batch dims {} vs {}", b, b2);
        let lhs = &self.data;
        let rhs = &other.data;
        let rows = exec::map_indexed(i, |r| {
            let mut out = vec![0.0; o];
            for bi in 0..b {
                let xv = lhs[bi * i + r];
                if xv == 0.0 {
                    continue;
                }
                let g = &rhs[bi * o..(bi + 1) * o];
                for (ov, &gv) in out.iter_mut().zip(g) {
                    *ov += xv * gv;
                }
            }
            out
        });
        Tensor::from_vec(&[i, o], rows.concat())
    }

    /// out = self @ other^T, shapes [B,O] x [I,O] -> [B,I]. Used for dx.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (b, o) = (self.n_rows(), self.n_cols());
        let (i, o2) = (other.n_rows(), other.n_cols());
        assert_eq!(o, o2, "matmul_nt inner dims {} vs {}", o, o2);
        let lhs = &self.data;
        let rhs = &other.data;
        let rows = exec::map_indexed(b, |r| {
            let g = &lhs[r * o..(r + 1) * o];
            let mut out = vec![0.0; i];
            for (iv, ov) in out.iter_mut().enumerate() {
                let w = &rhs[iv * o..(iv + 1) * o];
                let mut acc = 0.0;
                for (&gv, &wv) in g.iter().zip(w) {
                    acc += gv * wv;
                }
                *ov = acc;
            }
            out
        });
        Tensor::from_vec(&[b, i], rows.concat())
    }

    /// Horizontal concatenation: all parts share a row count.
    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let b = parts[0].n_rows();
        assert!(parts.iter().all(|p| p.n_rows() == b));
        let total: usize = parts.iter().map(|p| p.n_cols()).sum();
        let mut out = Tensor::zeros(&[b, total]);
        for r in 0..b {
            let dst = out.row_mut(r);
            let mut off = 0;
            for p in parts {
                let w = p.n_cols();
                dst[off..off + w].copy_from_slice(p.row(r));
                off += w;
            }
        }
        out
    }

    /// Inverse of `concat_cols` for the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Vec<Tensor> {
        assert_eq!(widths.iter().sum::<usize>(), self.n_cols());
        let b = self.n_rows();
        let mut parts: Vec<Tensor> = widths.iter().map(|&w| Tensor::zeros(&[b, w])).collect();
        for r in 0..b {
            let src = self.row(r);
            let mut off = 0;
            for (p, &w) in parts.iter_mut().zip(widths) {
                p.row_mut(r).copy_from_slice(&src[off..off + w]);
                off += w;
            }
        }
        parts
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}
