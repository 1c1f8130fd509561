use crate::error::{Error, Result};

/// Dense row-major f64 matrix; rows are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}×{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_f32_rows<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.iter().map(|&x| f64::from(x)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// `x · wᵀ + b` for `w` stored `out × in`.
pub(crate) fn affine(x: &Matrix, w: &[f64], b: &[f64]) -> Matrix {
    let (n_in, n_out) = (x.cols, b.len());
    debug_assert_eq!(w.len(), n_in * n_out);
    let mut y = Matrix::zeros(x.rows, n_out);
    for r in 0..x.rows {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, out) in yr.iter_mut().enumerate() {
            let wr = &w[o * n_in..(o + 1) * n_in];
            *out = b[o] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

/// Accumulates the weight and bias gradients of `affine` into `gw`, `gb` and
/// returns the gradient with respect to `x`.
pub(crate) fn affine_backward(x: &Matrix, w: &[f64], dy: &Matrix, gw: &mut [f64], gb: &mut [f64]) -> Matrix {
    let (n_in, n_out) = (x.cols, dy.cols);
    let mut dx = Matrix::zeros(x.rows, n_in);
    for r in 0..x.rows {
        let xr = x.row(r);
        let dyr = dy.row(r);
        let dxr = &mut dx.data[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let g = dyr[o];
            if g == 0.0 {
                continue;
            }
            gb[o] += g;
            let wr = &w[o * n_in..(o + 1) * n_in];
            let gwr = &mut gw[o * n_in..(o + 1) * n_in];
            for k in 0..n_in {
                gwr[k] += g * xr[k];
                dxr[k] += g * wr[k];
            }
        }
    }
    dx
}

pub(crate) fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient through `relu`, given the pre-activation.
pub(crate) fn relu_backward(pre: &Matrix, dy: &Matrix) -> Matrix {
    Matrix {
        rows: dy.rows,
        cols: dy.cols,
        data: pre.data.iter().zip(&dy.data).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect(),
    }
}
