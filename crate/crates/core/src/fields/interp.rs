use super::field::Field;
use super::grid::Grid;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Trigonometric interpolant Re Σ_k ĉ_k e^{iπk·x} of every component of a field,
/// evaluated by direct mode summation.
pub struct Interpolant {
    grid: Grid,
    spec: Vec<Vec<Complex64>>,
    ks: Vec<i64>,
}

impl Interpolant {
    pub fn new(f: &Field) -> Self {
        let grid = f.grid().clone();
        let ks = (0..grid.n()).map(|j| grid.wavenumber(j)).collect();
        Interpolant {
            spec: f.spectrum().to_vec(),
            grid,
            ks,
        }
    }

    pub fn n_components(&self) -> usize {
        self.spec.len()
    }

    pub fn eval(&self, x: &[f64]) -> [f64; 9] {
        let n = self.grid.n();
        let d = self.grid.d();
        let phases: Vec<Vec<Complex64>> = (0..d)
            .map(|a| self.ks.iter().map(|&k| Complex64::cis(PI * k as f64 * x[a])).collect())
            .collect();
        let mut out = [0.0; 9];
        for (c, s) in self.spec.iter().enumerate() {
            let mut total = Complex64::new(0.0, 0.0);
            match d {
                2 => {
                    for i0 in 0..n {
                        let row = &s[i0 * n..(i0 + 1) * n];
                        let inner: Complex64 = row.iter().zip(&phases[1]).map(|(a, b)| a * b).sum();
                        total += phases[0][i0] * inner;
                    }
                }
                _ => {
                    for i0 in 0..n {
                        let mut mid = Complex64::new(0.0, 0.0);
                        for i1 in 0..n {
                            let base = (i0 * n + i1) * n;
                            let row = &s[base..base + n];
                            let inner: Complex64 =
                                row.iter().zip(&phases[2]).map(|(a, b)| a * b).sum();
                            mid += phases[1][i1] * inner;
                        }
                        total += phases[0][i0] * mid;
                    }
                }
            }
            out[c] = total.re;
        }
        out
    }

    /// Evaluates at many points in parallel; result indexed [component][point].
    pub fn eval_many(&self, points: &[[f64; 3]]) -> Vec<Vec<f64>> {
        let vals: Vec<[f64; 9]> = points.par_iter().map(|x| self.eval(x)).collect();
        (0..self.n_components())
            .map(|c| vals.iter().map(|v| v[c]).collect())
            .collect()
    }
}
