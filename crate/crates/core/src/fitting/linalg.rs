//! Small dense symmetric solves for the normal equations.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor. `Err(k)` names the first pivot that is
/// not safely positive, relative to the largest diagonal entry.
pub(crate) fn cholesky(a: &Matrix) -> Result<Matrix, usize> {
    let n = a.n;
    let scale = (0..n).map(|i| a.at(i, i).abs()).fold(0.0, f64::max);
    let floor = scale * 1e-13;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            d -= l.at(j, k) * l.at(j, k);
        }
        if !(d > floor) || !d.is_finite() {
            return Err(j);
        }
        let d = libm::sqrt(d);
        *l.at_mut(j, j) = d;
        for i in j + 1..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            *l.at_mut(i, j) = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.n;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.at(i, k) * y[k];
        }
        y[i] /= l.at(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.at(k, i) * y[k];
        }
        y[i] /= l.at(i, i);
    }
    y
}

pub(crate) fn cholesky_inverse(l: &Matrix) -> Matrix {
    let n = l.n;
    let mut inv = Matrix::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, &e);
        for i in 0..n {
            *inv.at_mut(i, j) = col[i];
        }
    }
    // symmetrize round-off
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv.at(i, j) + inv.at(j, i));
            *inv.at_mut(i, j) = m;
            *inv.at_mut(j, i) = m;
        }
    }
    inv
}
