//! Row-major dense 2-D tensor over `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor2D::from_vec",
                format!("{rows}x{cols}"),
                format!("data len {}", data.len()),
            ));
        }
        Ok(Tensor2D { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor2D { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `W x` for a vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
        out
    }

    /// `Wᵀ x` for a vector `x` of length `rows`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xi;
            }
        }
        out
    }

    /// Rank-1 accumulation `self += u vᵀ` with `u` of length `rows` and `v`
    /// of length `cols`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(self.rows, u.len());
        debug_assert_eq!(self.cols, v.len());
        for (i, ui) in u.iter().enumerate() {
            if *ui == 0.0 {
                continue;
            }
            let row = self.row_mut(i);
            for (w, vj) in row.iter_mut().zip(v) {
                *w += ui * vj;
            }
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Tensor2D, s: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "Tensor2D::add_scaled",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sq_sum(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_hand_example() {
        let w = Tensor2D::from_vec(2, 3, vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.5]).unwrap();
        assert_eq!(w.matvec(&[1.0, 2.0, 3.0]), vec![-2.0, 5.5]);
    }

    #[test]
    fn matvec_transpose_hand_example() {
        let w = Tensor2D::from_vec(2, 3, vec![1.0, 0.0, -1.0, 2.0, 1.0, 0.5]).unwrap();
        assert_eq!(w.matvec_transpose(&[1.0, 2.0]), vec![5.0, 2.0, 0.0]);
    }

    #[test]
    fn add_outer_hand_example() {
        let mut w = Tensor2D::zeros(2, 2);
        w.add_outer(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(w.data(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor2D::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_adjoint_identity(
            rows in 1usize..6, cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            // <Wx, y> == <x, Wᵀy> for all x, y.
            let mut s = crate::numerics::SeededRng::new(seed);
            let w = Tensor2D::from_fn(rows, cols, |_, _| s.range(-2.0, 2.0));
            let x: Vec<f64> = (0..cols).map(|_| s.range(-2.0, 2.0)).collect();
            let y: Vec<f64> = (0..rows).map(|_| s.range(-2.0, 2.0)).collect();
            let lhs = crate::numerics::dot(&w.matvec(&x), &y);
            let rhs = crate::numerics::dot(&x, &w.matvec_transpose(&y));
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn add_outer_matches_matvec_product(
            rows in 1usize..5, cols in 1usize..5,
            seed in any::<u64>(),
        ) {
            // (u vᵀ) x == u (v · x).
            let mut s = crate::numerics::SeededRng::new(seed);
            let u: Vec<f64> = (0..rows).map(|_| s.range(-2.0, 2.0)).collect();
            let v: Vec<f64> = (0..cols).map(|_| s.range(-2.0, 2.0)).collect();
            let x: Vec<f64> = (0..cols).map(|_| s.range(-2.0, 2.0)).collect();
            let mut w = Tensor2D::zeros(rows, cols);
            w.add_outer(&u, &v);
            let got = w.matvec(&x);
            let vx = crate::numerics::dot(&v, &x);
            for (g, ui) in got.iter().zip(&u) {
                prop_assert!((g - ui * vx).abs() < 1e-10);
            }
        }
    }
}
