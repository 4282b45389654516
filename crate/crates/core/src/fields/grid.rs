use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Uniform periodic grid on the torus [−1,1]^d with n points per axis.
///
/// Spectral coefficients are the coefficients of e^{iπk·y}:
/// ĉ_k = N⁻¹ Σ_j f(y_j) e^{−iπk·y_j}, so a constant field c has ĉ_0 = c.
#[derive(Clone)]
pub struct Grid {
    d: usize,
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid {{ d: {}, n: {} }}", self.d, self.n)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n
    }
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidGrid(format!("dimension {d} not in {{2, 3}}")));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be even and >= 2")));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            d,
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Cell volume h^d used by the rectangle rule.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// |Ω| = 2^d.
    pub fn volume(&self) -> f64 {
        2f64.powi(self.d as i32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut r = flat;
        for a in (0..self.d).rev() {
            idx[a] = r % self.n;
            r /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx[..self.d].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = -1.0 + idx[a] as f64 * h;
        }
        x
    }

    /// Signed wavenumber of a storage index along one axis; the Nyquist index maps to −n/2.
    pub fn wavenumber(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn mode(&self, flat: usize) -> [i64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0; 3];
        for a in 0..self.d {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    pub fn is_nyquist(&self, k: i64) -> bool {
        k.unsigned_abs() as usize == self.n / 2
    }

    /// Physical wave vector ξ = πk.
    pub fn xi(&self, flat: usize) -> [f64; 3] {
        let k = self.mode(flat);
        let mut xi = [0.0; 3];
        for a in 0..self.d {
            xi[a] = PI * k[a] as f64;
        }
        xi
    }

    /// Spectral symbol of ∂^order along `axis`; the Nyquist mode is dropped for odd orders.
    pub fn derivative_symbol(&self, flat: usize, axis: usize, order: u32) -> Complex64 {
        let k = self.mode(flat)[axis];
        if order % 2 == 1 && self.is_nyquist(k) {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, PI * k as f64).powu(order)
    }

    /// 2/3-rule mask: keeps modes with |k_a| ≤ n/3 on every axis.
    pub fn keeps_mode(&self, flat: usize) -> bool {
        let cut = (self.n / 3) as i64;
        let k = self.mode(flat);
        k[..self.d].iter().all(|&ka| ka.abs() <= cut)
    }

    fn axis_pass(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = self.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for a in 0..self.d {
            let stride = n.pow((self.d - 1 - a) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * n;
            for start in (0..total).step_by(block) {
                for off in 0..stride {
                    let base = start + off;
                    for (i, z) in line.iter_mut().enumerate() {
                        *z = data[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, z) in line.iter().enumerate() {
                        data[base + i * stride] = *z;
                    }
                }
            }
        }
    }

    fn parity(&self, flat: usize) -> f64 {
        let k = self.mode(flat);
        if k[..self.d].iter().sum::<i64>().rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Physical values → coefficients of e^{iπk·y}, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.axis_pass(data, &self.fwd);
        let inv_n = 1.0 / self.len() as f64;
        for (flat, z) in data.iter_mut().enumerate() {
            *z *= self.parity(flat) * inv_n;
        }
    }

    /// Coefficients of e^{iπk·y} → physical values, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        for (flat, z) in data.iter_mut().enumerate() {
            *z *= self.parity(flat);
        }
        self.axis_pass(data, &self.inv);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    pub fn inverse_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut data = spec.to_vec();
        self.inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }
}
