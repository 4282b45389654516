use super::grid::Grid;
use crate::error::{Error, Result};
use crate::tensor::Mat;
use num_complex::Complex64;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
}

impl Rank {
    pub fn components(self, d: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => d,
            Rank::Tensor => d * d,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Tensor => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Rank> {
        match c {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::Tensor),
            _ => None,
        }
    }
}

/// Real field on a periodic grid. Physical values are authoritative; the
/// spectrum is computed on first use and dropped on any mutable access.
/// Tensor components are stored row-major, component (i, j) at i·d + j.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    rank: Rank,
    comps: Vec<Vec<f64>>,
    spec: OnceLock<Vec<Vec<Complex64>>>,
}

impl Field {
    pub fn zeros(grid: &Grid, rank: Rank) -> Field {
        let nc = rank.components(grid.d());
        Field {
            grid: grid.clone(),
            rank,
            comps: vec![vec![0.0; grid.len()]; nc],
            spec: OnceLock::new(),
        }
    }

    pub fn from_components(grid: &Grid, rank: Rank, comps: Vec<Vec<f64>>) -> Result<Field> {
        let nc = rank.components(grid.d());
        if comps.len() != nc || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::ShapeMismatch(format!(
                "expected {nc} components of length {}",
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            rank,
            comps,
            spec: OnceLock::new(),
        })
    }

    pub fn constant(grid: &Grid, rank: Rank, values: &[f64]) -> Field {
        let comps = values.iter().map(|&v| vec![v; grid.len()]).collect();
        Field::from_components(grid, rank, comps).expect("component count matches rank")
    }

    pub fn scalar_from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Field {
        let d = grid.d();
        let data = (0..grid.len()).map(|p| f(&grid.point(p)[..d])).collect();
        Field::from_components(grid, Rank::Scalar, vec![data]).unwrap()
    }

    pub fn vector_from_fn(grid: &Grid, f: impl Fn(&[f64]) -> [f64; 3]) -> Field {
        let d = grid.d();
        let mut out = Field::zeros(grid, Rank::Vector);
        for p in 0..grid.len() {
            let v = f(&grid.point(p)[..d]);
            for c in 0..d {
                out.comps[c][p] = v[c];
            }
        }
        out
    }

    pub fn tensor_from_fn(grid: &Grid, f: impl Fn(usize) -> Mat) -> Field {
        let mut out = Field::zeros(grid, Rank::Tensor);
        for p in 0..grid.len() {
            out.set_mat(p, &f(p));
        }
        out
    }

    pub fn from_spectrum(grid: &Grid, rank: Rank, spec: &[Vec<Complex64>]) -> Field {
        let comps = spec.iter().map(|s| grid.inverse_real(s)).collect();
        Field::from_components(grid, rank, comps).expect("spectrum shape matches rank")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        self.spec.take();
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn spectrum(&self) -> &[Vec<Complex64>] {
        self.spec
            .get_or_init(|| self.comps.iter().map(|c| self.grid.forward_real(c)).collect())
    }

    pub fn vec_at(&self, p: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (c, comp) in self.comps.iter().enumerate() {
            v[c] = comp[p];
        }
        v
    }

    pub fn set_vec(&mut self, p: usize, v: &[f64]) {
        self.spec.take();
        for (c, comp) in self.comps.iter_mut().enumerate() {
            comp[p] = v[c];
        }
    }

    pub fn mat_at(&self, p: usize) -> Mat {
        let d = self.grid.d();
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.comps[i * d + j][p];
            }
        }
        m
    }

    pub fn set_mat(&mut self, p: usize, m: &Mat) {
        self.spec.take();
        let d = self.grid.d();
        for i in 0..d {
            for j in 0..d {
                self.comps[i * d + j][p] = m[(i, j)];
            }
        }
    }

    fn check_same(&self, other: &Field) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        assert_eq!(self.rank, other.rank, "rank mismatch");
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let comps = self.comps.iter().map(|c| c.iter().map(|&x| f(x)).collect()).collect();
        Field::from_components(&self.grid, self.rank, comps).unwrap()
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        self.check_same(other);
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Field::from_components(&self.grid, self.rank, comps).unwrap()
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|x| c * x)
    }

    /// self + c·other
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, s: &Field) -> Field {
        assert_eq!(s.rank, Rank::Scalar);
        assert_eq!(self.grid, s.grid);
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(&s.comps[0]).map(|(&x, &y)| x * y).collect())
            .collect();
        Field::from_components(&self.grid, self.rank, comps).unwrap()
    }

    pub fn mean(&self, c: usize) -> f64 {
        self.comps[c].iter().sum::<f64>() / self.grid.len() as f64
    }

    /// ∫_Ω f_c by the rectangle rule.
    pub fn integral(&self, c: usize) -> f64 {
        self.comps[c].iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    pub fn min_value(&self, c: usize) -> f64 {
        self.comps[c].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Zeroes every mode outside the 2/3-rule band.
    pub fn dealiased(&self) -> Field {
        let grid = &self.grid;
        let spec: Vec<Vec<Complex64>> = self
            .spectrum()
            .iter()
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(i, &z)| if grid.keeps_mode(i) { z } else { Complex64::new(0.0, 0.0) })
                    .collect()
            })
            .collect();
        Field::from_spectrum(grid, self.rank, &spec)
    }

    fn spectral_map(&self, c: usize, symbol: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let s: Vec<Complex64> = self.spectrum()[c]
            .iter()
            .enumerate()
            .map(|(i, &z)| z * symbol(i))
            .collect();
        self.grid.inverse_real(&s)
    }

    /// ∂^order along `axis`, componentwise.
    pub fn derivative(&self, axis: usize, order: u32) -> Field {
        let g = &self.grid;
        let comps = (0..self.comps.len())
            .map(|c| self.spectral_map(c, |i| g.derivative_symbol(i, axis, order)))
            .collect();
        Field::from_components(g, self.rank, comps).unwrap()
    }

    /// Mixed derivative ∂^α with α a multi-index.
    pub fn mixed_derivative(&self, alpha: &[u32]) -> Field {
        let g = &self.grid;
        let sym = |i: usize| {
            alpha
                .iter()
                .enumerate()
                .fold(Complex64::new(1.0, 0.0), |acc, (a, &o)| acc * g.derivative_symbol(i, a, o))
        };
        let comps = (0..self.comps.len()).map(|c| self.spectral_map(c, sym)).collect();
        Field::from_components(g, self.rank, comps).unwrap()
    }

    /// Gradient: scalar → vector, vector → tensor with (∇u)_{ij} = ∂_j u_i.
    pub fn gradient(&self) -> Field {
        let g = &self.grid;
        let d = g.d();
        let rank = match self.rank {
            Rank::Scalar => Rank::Vector,
            Rank::Vector => Rank::Tensor,
            Rank::Tensor => panic!("gradient of a tensor field is not supported"),
        };
        let mut comps = Vec::with_capacity(self.comps.len() * d);
        for c in 0..self.comps.len() {
            for j in 0..d {
                comps.push(self.spectral_map(c, |i| g.derivative_symbol(i, j, 1)));
            }
        }
        Field::from_components(g, rank, comps).unwrap()
    }

    /// Divergence: vector → scalar, tensor → vector with (div S)_i = Σ_j ∂_j S_ij.
    pub fn divergence(&self) -> Field {
        let g = &self.grid;
        let d = g.d();
        let rows = match self.rank {
            Rank::Vector => 1,
            Rank::Tensor => d,
            Rank::Scalar => panic!("divergence of a scalar field"),
        };
        let mut comps = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut s = vec![Complex64::new(0.0, 0.0); g.len()];
            for j in 0..d {
                let c = if rows == 1 { j } else { r * d + j };
                for (i, z) in self.spectrum()[c].iter().enumerate() {
                    s[i] += z * g.derivative_symbol(i, j, 1);
                }
            }
            comps.push(g.inverse_real(&s));
        }
        let rank = if rows == 1 { Rank::Scalar } else { Rank::Vector };
        Field::from_components(g, rank, comps).unwrap()
    }

    pub fn laplacian(&self) -> Field {
        let g = &self.grid;
        let sym = |i: usize| (0..g.d()).map(|a| g.derivative_symbol(i, a, 2)).sum::<Complex64>();
        let comps = (0..self.comps.len()).map(|c| self.spectral_map(c, sym)).collect();
        Field::from_components(g, self.rank, comps).unwrap()
    }

    /// Symmetric gradient 𝔻u = (∇u + ∇uᵀ)/2 of a vector field.
    pub fn sym_gradient(&self) -> Field {
        assert_eq!(self.rank, Rank::Vector);
        let grad = self.gradient();
        let d = self.grid.d();
        let mut out = Field::zeros(&self.grid, Rank::Tensor);
        for p in 0..self.grid.len() {
            let m = grad.mat_at(p).sym();
            for i in 0..d {
                for j in 0..d {
                    out.comps[i * d + j][p] = m[(i, j)];
                }
            }
        }
        out
    }

    /// Pointwise product of a tensor field with a tensor field, (A·B)(x).
    pub fn mat_mul(&self, other: &Field) -> Field {
        assert_eq!(self.rank, Rank::Tensor);
        assert_eq!(other.rank, Rank::Tensor);
        Field::tensor_from_fn(&self.grid, |p| self.mat_at(p) * other.mat_at(p))
    }

    /// Pointwise trace of a tensor field.
    pub fn trace(&self) -> Field {
        assert_eq!(self.rank, Rank::Tensor);
        let d = self.grid.d();
        let data = (0..self.grid.len())
            .map(|p| (0..d).map(|i| self.comps[i * d + i][p]).sum())
            .collect();
        Field::from_components(&self.grid, Rank::Scalar, vec![data]).unwrap()
    }
}
