//! Small dense matrices of size d×d (d ≤ 3) stored inline.

use num_complex::Complex64;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    pub d: usize,
    v: [f64; 9],
}

impl Mat {
    pub fn zeros(d: usize) -> Self {
        assert!(d == 2 || d == 3, "dimension must be 2 or 3");
        Mat { d, v: [0.0; 9] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Mat::zeros(d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn from_rows(d: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), d * d);
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = rows[i * d + j];
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Mat::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m[(i, j)] = self[(j, i)];
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self[(i, i)]).sum()
    }

    pub fn sym(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    /// Trace-free part.
    pub fn dev(&self) -> Self {
        let t = self.trace() / self.d as f64;
        *self - Mat::identity(self.d).scale(t)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut m = *self;
        m.v.iter_mut().for_each(|x| *x *= c);
        m
    }

    pub fn dot(&self, other: &Mat) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self[(i, j)] * other[(i, j)];
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                m = m.max(self[(i, j)].abs());
            }
        }
        m
    }

    pub fn det(&self) -> f64 {
        let a = |i, j| self[(i, j)];
        match self.d {
            2 => a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
            _ => {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
        }
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Mat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let a = |i, j| self[(i, j)];
        let mut m = Mat::zeros(self.d);
        match self.d {
            2 => {
                m[(0, 0)] = a(1, 1);
                m[(0, 1)] = -a(0, 1);
                m[(1, 0)] = -a(1, 0);
                m[(1, 1)] = a(0, 0);
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                        m[(i, j)] = a(r0, c0) * a(r1, c1) - a(r0, c1) * a(r1, c0);
                    }
                }
            }
        }
        Some(m.scale(1.0 / det))
    }

    pub fn matvec(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for i in 0..self.d {
            for j in 0..self.d {
                y[i] += self[(i, j)] * x[j];
            }
        }
        y
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.v[i * 3 + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.v[i * 3 + j]
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(mut self, rhs: Mat) -> Mat {
        for (a, b) in self.v.iter_mut().zip(rhs.v) {
            *a += b;
        }
        self
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(mut self, rhs: Mat) -> Mat {
        for (a, b) in self.v.iter_mut().zip(rhs.v) {
            *a -= b;
        }
        self
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        let mut m = Mat::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                let mut s = 0.0;
                for k in 0..self.d {
                    s += self[(i, k)] * rhs[(k, j)];
                }
                m[(i, j)] = s;
            }
        }
        m
    }
}

/// Complex d×d matrix used for per-mode symbol solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat {
    pub d: usize,
    v: [Complex64; 9],
}

impl CMat {
    pub fn zeros(d: usize) -> Self {
        CMat {
            d,
            v: [Complex64::new(0.0, 0.0); 9],
        }
    }

    pub fn scaled_identity(d: usize, c: Complex64) -> Self {
        let mut m = CMat::zeros(d);
        for i in 0..d {
            m[(i, i)] = c;
        }
        m
    }

    pub fn matvec(&self, x: &[Complex64]) -> [Complex64; 3] {
        let mut y = [Complex64::new(0.0, 0.0); 3];
        for i in 0..self.d {
            for j in 0..self.d {
                y[i] += self[(i, j)] * x[j];
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    /// Returns `None` if a pivot underflows relative to the matrix scale.
    pub fn inverse(&self) -> Option<CMat> {
        let d = self.d;
        let scale = self.max_abs();
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        let mut a = *self;
        let mut inv = CMat::scaled_identity(d, Complex64::new(1.0, 0.0));
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
                .unwrap();
            if a[(piv, col)].norm() <= 1e-14 * scale {
                return None;
            }
            if piv != col {
                for j in 0..d {
                    a.v.swap(piv * 3 + j, col * 3 + j);
                    inv.v.swap(piv * 3 + j, col * 3 + j);
                }
            }
            let p = a[(col, col)].inv();
            for j in 0..d {
                a[(col, j)] *= p;
                inv[(col, j)] *= p;
            }
            for i in 0..d {
                if i == col {
                    continue;
                }
                let f = a[(i, col)];
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    let (acj, icj) = (a[(col, j)], inv[(col, j)]);
                    a[(i, j)] -= f * acj;
                    inv[(i, j)] -= f * icj;
                }
            }
        }
        Some(inv)
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.v[i * 3 + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.v[i * 3 + j]
    }
}
