//! Viscosity laws, the stress tensor, its quasilinear coefficient tensor and
//! the strong-ellipticity certificate.

use crate::error::{Error, Result};
use crate::fields::{Field, Rank};
use crate::tensor::Mat;
use num_complex::Complex64;

/// Shear viscosity μ(s) as a function of s = |Dᴰu|².
#[derive(Debug, Clone, PartialEq)]
pub enum ShearLaw {
    Constant { mu0: f64 },
    /// μ₀(1+s)^{(p−2)/2}
    PowerLaw { mu0: f64, p: f64 },
    /// μ₀/(1+s)
    Reciprocal { mu0: f64 },
    /// Σ cᵢ sⁱ
    Polynomial { coeffs: Vec<f64> },
}

/// Bulk viscosity λ(r) as a function of r = div u.
#[derive(Debug, Clone, PartialEq)]
pub enum BulkLaw {
    Constant { lambda0: f64 },
    Polynomial { coeffs: Vec<f64> },
}

fn poly_derivs<const N: usize>(coeffs: &[f64], x: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for (order, o) in out.iter_mut().enumerate() {
        let mut xp = 1.0;
        for i in order..coeffs.len() {
            let falling: f64 = (0..order).map(|j| (i - j) as f64).product();
            *o += coeffs[i] * falling * xp;
            xp *= x;
        }
    }
    out
}

impl ShearLaw {
    /// [μ, μ', μ'', μ'''] at s.
    pub fn derivs(&self, s: f64) -> [f64; 4] {
        match self {
            ShearLaw::Constant { mu0 } => [*mu0, 0.0, 0.0, 0.0],
            ShearLaw::PowerLaw { mu0, p } => {
                let e = (p - 2.0) / 2.0;
                let b = 1.0 + s;
                [
                    mu0 * b.powf(e),
                    mu0 * e * b.powf(e - 1.0),
                    mu0 * e * (e - 1.0) * b.powf(e - 2.0),
                    mu0 * e * (e - 1.0) * (e - 2.0) * b.powf(e - 3.0),
                ]
            }
            ShearLaw::Reciprocal { mu0 } => {
                let b = 1.0 + s;
                [mu0 / b, -mu0 / (b * b), 2.0 * mu0 / b.powi(3), -6.0 * mu0 / b.powi(4)]
            }
            ShearLaw::Polynomial { coeffs } => poly_derivs::<4>(coeffs, s),
        }
    }
}

impl BulkLaw {
    /// [λ, λ', λ''] at r.
    pub fn derivs(&self, r: f64) -> [f64; 3] {
        match self {
            BulkLaw::Constant { lambda0 } => [*lambda0, 0.0, 0.0],
            BulkLaw::Polynomial { coeffs } => poly_derivs::<3>(coeffs, r),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityModel {
    pub shear: ShearLaw,
    pub bulk: BulkLaw,
    pub s_max: f64,
    pub r_max: f64,
}

impl ViscosityModel {
    pub const DEFAULT_S_MAX: f64 = 100.0;
    pub const DEFAULT_R_MAX: f64 = 10.0;

    pub fn new(shear: ShearLaw, bulk: BulkLaw) -> Self {
        ViscosityModel {
            shear,
            bulk,
            s_max: Self::DEFAULT_S_MAX,
            r_max: Self::DEFAULT_R_MAX,
        }
    }

    pub fn newtonian(mu0: f64, lambda0: f64) -> Self {
        Self::new(ShearLaw::Constant { mu0 }, BulkLaw::Constant { lambda0 })
    }

    pub fn power_law(mu0: f64, p: f64, lambda0: f64) -> Self {
        Self::new(ShearLaw::PowerLaw { mu0, p }, BulkLaw::Constant { lambda0 })
    }

    pub fn with_ranges(mut self, s_max: f64, r_max: f64) -> Self {
        self.s_max = s_max;
        self.r_max = r_max;
        self
    }

    pub fn mu(&self, s: f64) -> [f64; 4] {
        self.shear.derivs(s)
    }

    pub fn lambda(&self, r: f64) -> [f64; 3] {
        self.bulk.derivs(r)
    }

    /// Strict range enforcement for s = |Dᴰ|² and r = tr D.
    pub fn check(&self, s: f64, r: f64, point: usize) -> Result<()> {
        if !(0.0..=self.s_max).contains(&s) {
            return Err(Error::RangeViolation {
                quantity: "|D^D|^2",
                value: s,
                min: 0.0,
                max: self.s_max,
                point,
            });
        }
        if !(-self.r_max..=self.r_max).contains(&r) {
            return Err(Error::RangeViolation {
                quantity: "div u",
                value: r,
                min: -self.r_max,
                max: self.r_max,
                point,
            });
        }
        Ok(())
    }
}

/// Pressure law π(ρ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PressureLaw {
    /// π = aρ
    Isothermal { a: f64 },
    /// π = aρ^γ
    Polytropic { a: f64, gamma: f64 },
}

impl PressureLaw {
    /// [π, π', π''] at ρ.
    pub fn derivs(&self, rho: f64) -> [f64; 3] {
        match *self {
            PressureLaw::Isothermal { a } => [a * rho, a, 0.0],
            PressureLaw::Polytropic { a, gamma } => [
                a * rho.powf(gamma),
                a * gamma * rho.powf(gamma - 1.0),
                a * gamma * (gamma - 1.0) * rho.powf(gamma - 2.0),
            ],
        }
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.derivs(rho)[0]
    }

    pub fn prime(&self, rho: f64) -> f64 {
        self.derivs(rho)[1]
    }
}

/// 2μ(|Dᴰ|²)Dᴰ + λ(tr D) tr D · I at one point.
pub fn stress_at(model: &ViscosityModel, d: &Mat, point: usize) -> Result<Mat> {
    let dd = d.dev();
    let s = dd.norm_sq();
    let r = d.trace();
    model.check(s, r, point)?;
    let mu = model.mu(s)[0];
    let lam = model.lambda(r)[0];
    Ok(dd.scale(2.0 * mu) + Mat::identity(d.d).scale(lam * r))
}

/// Stress field of a symmetric strain field.
pub fn stress(model: &ViscosityModel, d: &Field) -> Result<Field> {
    assert_eq!(d.rank(), Rank::Tensor);
    let mut out = Field::zeros(d.grid(), Rank::Tensor);
    for p in 0..d.grid().len() {
        out.set_mat(p, &stress_at(model, &d.mat_at(p), p)?);
    }
    Ok(out)
}

/// a_{jk}^{lm}, stored with index ((j·3 + k)·3 + l)·3 + m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTensor {
    pub d: usize,
    a: [f64; 81],
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

impl CoefficientTensor {
    pub fn get(&self, j: usize, k: usize, l: usize, m: usize) -> f64 {
        self.a[((j * 3 + k) * 3 + l) * 3 + m]
    }

    /// Σ a_{jk}^{lm} ξ_{jl} ξ_{km}
    pub fn contract(&self, xi: &Mat) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        s += self.get(j, k, l, m) * xi[(j, l)] * xi[(k, m)];
                    }
                }
            }
        }
        s
    }

    /// (Σ_{k,l,m} a_{jk}^{lm} h_k[l][m])_j where h_k[l][m] = ∂_l∂_m u_k.
    pub fn apply_hessian(&self, h: &[[f64; 9]; 3]) -> [f64; 3] {
        let d = self.d;
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate().take(d) {
            for (k, hk) in h.iter().enumerate().take(d) {
                for l in 0..d {
                    for m in 0..d {
                        *o += self.get(j, k, l, m) * hk[l * 3 + m];
                    }
                }
            }
        }
        out
    }

    /// Complex variant of [`Self::apply_hessian`].
    pub fn apply_hessian_c(&self, h: &[[Complex64; 9]; 3]) -> [Complex64; 3] {
        let d = self.d;
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (j, o) in out.iter_mut().enumerate().take(d) {
            for (k, hk) in h.iter().enumerate().take(d) {
                for l in 0..d {
                    for m in 0..d {
                        *o += hk[l * 3 + m] * self.get(j, k, l, m);
                    }
                }
            }
        }
        out
    }

    /// Max defect of each listed index relation against a_{jk}^{lm}:
    /// [a_{kj}^{lm}, a^{jk}_{lm}, a^{jm}_{lk}, a^{lk}_{jm}].
    pub fn symmetry_defects(&self) -> [f64; 4] {
        let d = self.d;
        let mut out = [0.0f64; 4];
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        let a = self.get(j, k, l, m);
                        let others = [
                            self.get(k, j, l, m),
                            self.get(l, m, j, k),
                            self.get(l, k, j, m),
                            self.get(j, m, l, k),
                        ];
                        for (o, b) in out.iter_mut().zip(others) {
                            *o = o.max((a - b).abs());
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn coefficient_tensor(model: &ViscosityModel, d: &Mat) -> Result<CoefficientTensor> {
    coefficient_tensor_at(model, d, 0)
}

pub fn coefficient_tensor_at(
    model: &ViscosityModel,
    d: &Mat,
    point: usize,
) -> Result<CoefficientTensor> {
    let dim = d.d;
    let dd = d.dev();
    let s = dd.norm_sq();
    let r = d.trace();
    model.check(s, r, point)?;
    let [mu, mu1, ..] = model.mu(s);
    let [lam, lam1, _] = model.lambda(r);
    let c = lam + lam1 * r - 2.0 / dim as f64 * mu;
    let mut a = [0.0; 81];
    for j in 0..dim {
        for k in 0..dim {
            for l in 0..dim {
                for m in 0..dim {
                    a[((j * 3 + k) * 3 + l) * 3 + m] = mu
                        * (delta(j, k) * delta(l, m) + delta(j, m) * delta(k, l))
                        + 4.0 * mu1 * dd[(j, l)] * dd[(k, m)]
                        + c * delta(k, m) * delta(j, l);
                }
            }
        }
    }
    Ok(CoefficientTensor { d: dim, a })
}

/// 2μ|ξᴰ|² + 4μ'(Dᴰ:ξᴰ)² + (λ+λ'r)(tr ξ)².
pub fn quadratic_form(model: &ViscosityModel, d: &Mat, xi: &Mat) -> Result<f64> {
    let dd = d.dev();
    let s = dd.norm_sq();
    let r = d.trace();
    model.check(s, r, 0)?;
    let [mu, mu1, ..] = model.mu(s);
    let [lam, lam1, _] = model.lambda(r);
    let xd = xi.dev();
    let tr = xi.trace();
    let cross = dd.dot(&xd);
    Ok(2.0 * mu * xd.norm_sq() + 4.0 * mu1 * cross * cross + (lam + lam1 * r) * tr * tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipticity {
    pub c_el: f64,
    /// s at which the shear branch attains its minimum
    pub s_min: f64,
    /// r at which λ + λ'r attains its minimum
    pub r_min: f64,
    pub shear_min: f64,
    pub bulk_min: f64,
}

/// Scan-based ellipticity constant: min over {2μ(s) where μ' ≥ 0, 2μ(s)+4μ'(s)s where μ' < 0,
/// λ(r)+λ'(r)r} on n_scan endpoint-inclusive samples of [0, s_max] and [−r_max, r_max].
pub fn ellipticity_constant(
    model: &ViscosityModel,
    s_max: f64,
    r_max: f64,
    n_scan: usize,
) -> Result<Ellipticity> {
    if n_scan < 2 {
        return Err(Error::Degenerate("n_scan must be at least 2".into()));
    }
    let m = (n_scan - 1) as f64;
    let (mut shear_min, mut s_min) = (f64::INFINITY, 0.0);
    for i in 0..n_scan {
        let s = s_max * i as f64 / m;
        let [mu, mu1, ..] = model.mu(s);
        let v = if mu1 >= 0.0 { 2.0 * mu } else { 2.0 * mu + 4.0 * mu1 * s };
        if v < shear_min {
            shear_min = v;
            s_min = s;
        }
    }
    let (mut bulk_min, mut r_min) = (f64::INFINITY, 0.0);
    for i in 0..n_scan {
        let r = -r_max + 2.0 * r_max * i as f64 / m;
        let [lam, lam1, _] = model.lambda(r);
        let v = lam + lam1 * r;
        if v < bulk_min {
            bulk_min = v;
            r_min = r;
        }
    }
    let c_el = shear_min.min(bulk_min);
    if !(c_el > 0.0) {
        return Err(Error::Ellipticity {
            c_el,
            s: s_min,
            r: r_min,
        });
    }
    Ok(Ellipticity {
        c_el,
        s_min,
        r_min,
        shear_min,
        bulk_min,
    })
}

/// Second derivatives ∂_l∂_m u_k of a vector field, indexed [k][l·3+m][point].
fn hessians(u: &Field) -> Vec<[Vec<f64>; 9]> {
    let g = u.grid();
    let d = g.d();
    (0..d)
        .map(|k| {
            let mut h: [Vec<f64>; 9] = Default::default();
            for l in 0..d {
                for m in l..d {
                    let s: Vec<Complex64> = u.spectrum()[k]
                        .iter()
                        .enumerate()
                        .map(|(i, &z)| {
                            let sym = if l == m {
                                g.derivative_symbol(i, l, 2)
                            } else {
                                g.derivative_symbol(i, l, 1) * g.derivative_symbol(i, m, 1)
                            };
                            z * sym
                        })
                        .collect();
                    let v = g.inverse_real(&s);
                    if l != m {
                        h[m * 3 + l] = v.clone();
                    }
                    h[l * 3 + m] = v;
                }
            }
            h
        })
        .collect()
}

/// Pointwise frozen coefficient tensors a(𝔻u) acting as Σ a_{jk}^{lm} ∂_l∂_m v_k.
#[derive(Debug, Clone)]
pub struct QuasilinearOperator {
    pub coeffs: Vec<CoefficientTensor>,
}

impl QuasilinearOperator {
    pub fn frozen_at(model: &ViscosityModel, u: &Field) -> Result<Self> {
        let dfield = u.sym_gradient();
        let coeffs = (0..u.grid().len())
            .map(|p| coefficient_tensor_at(model, &dfield.mat_at(p), p))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuasilinearOperator { coeffs })
    }

    pub fn apply(&self, v: &Field) -> Field {
        let g = v.grid();
        let d = g.d();
        let h = hessians(v);
        let mut out = Field::zeros(g, Rank::Vector);
        for (p, a) in self.coeffs.iter().enumerate() {
            let mut hp = [[0.0; 9]; 3];
            for k in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        hp[k][l * 3 + m] = h[k][l * 3 + m][p];
                    }
                }
            }
            out.set_vec(p, &a.apply_hessian(&hp));
        }
        out
    }
}

/// div 𝒮(𝔻u) by the quasilinear route Σ a_{jk}^{lm}(𝔻u) ∂_l∂_m u_k, dealiased.
pub fn stress_divergence(model: &ViscosityModel, u: &Field) -> Result<Field> {
    Ok(QuasilinearOperator::frozen_at(model, u)?.apply(u).dealiased())
}

/// div 𝒮(𝔻u) by spectral divergence of the pointwise stress, dealiased.
pub fn stress_divergence_direct(model: &ViscosityModel, u: &Field) -> Result<Field> {
    Ok(stress(model, &u.sym_gradient())?.divergence().dealiased())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanValueResidual {
    pub mu: f64,
    pub lambda: f64,
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

fn composite_gauss(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let mid = (i as f64 + 0.5) * h;
        for (x, w) in GAUSS4 {
            s += 0.5 * h * w * f(mid + 0.5 * h * x);
        }
    }
    s
}

/// Residuals of μ(|A|²) − μ(|B|²) = 2∫₀¹ μ'(|C_s|²) C_s:(A−B) ds, C_s = sA+(1−s)B, and of
/// λ(a) − λ(b) = ∫₀¹ λ'(sa+(1−s)b)(a−b) ds with a = tr A, b = tr B, by composite
/// 4-point Gauss–Legendre quadrature on n_quad panels.
pub fn mean_value_identity_check(
    model: &ViscosityModel,
    a: &Mat,
    b: &Mat,
    n_quad: usize,
) -> MeanValueResidual {
    let diff = *a - *b;
    let integral = composite_gauss(n_quad, |s| {
        let c = a.scale(s) + b.scale(1.0 - s);
        2.0 * model.mu(c.norm_sq())[1] * c.dot(&diff)
    });
    let mu = (model.mu(a.norm_sq())[0] - model.mu(b.norm_sq())[0] - integral).abs();
    let (ta, tb) = (a.trace(), b.trace());
    let lint = composite_gauss(n_quad, |s| model.lambda(s * ta + (1.0 - s) * tb)[1] * (ta - tb));
    let lambda = (model.lambda(ta)[0] - model.lambda(tb)[0] - lint).abs();
    MeanValueResidual { mu, lambda }
}
