//! Fourier symbols of the constant-coefficient resolvent λI + E(ξ) + E(ξ,λ) and the
//! numerical checks run on them: sector inequality, resolvent bounds, multiplier
//! derivative bounds and Monte-Carlo R-bound estimates.

use crate::constitutive::CoefficientTensor;
use crate::error::{Error, Result};
use crate::tensor::{CMat, Mat};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Σ_{β,ν} = {λ : |arg(λ − ν)| ≤ π − β}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub beta: f64,
    pub nu: f64,
}

impl Sector {
    pub fn new(beta: f64, nu: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < PI / 2.0) || !(nu > 0.0) {
            return Err(Error::Degenerate(format!("sector needs β ∈ (0, π/2), ν > 0; got β={beta}, ν={nu}")));
        }
        Ok(Sector { beta, nu })
    }

    pub fn contains(&self, lambda: Complex64) -> bool {
        let z = lambda - self.nu;
        // rounding in λ − ν grows like ν/|λ − ν|
        let tol = 4.0 * f64::EPSILON * (1.0 + self.nu.abs() / z.norm());
        z.norm() == 0.0 || z.arg().abs() <= PI - self.beta + tol
    }

    /// λ = ν + r e^{iφ} with r log-spaced in [1e-2, 1e4] and φ evenly spanning both
    /// boundary rays.
    pub fn lambda_grid(&self, n_r: usize, n_phi: usize) -> Vec<Complex64> {
        let phi_max = PI - self.beta;
        let mut out = Vec::with_capacity(n_r * n_phi);
        for i in 0..n_r {
            let r = 10f64.powf(-2.0 + 6.0 * i as f64 / (n_r.max(2) - 1) as f64);
            for j in 0..n_phi {
                let phi = -phi_max + 2.0 * phi_max * j as f64 / (n_phi.max(2) - 1) as f64;
                out.push(self.nu + Complex64::from_polar(r, phi));
            }
        }
        out
    }

    /// Uniform angle, log-uniform radius in [1e-2, 1e4].
    pub fn sample(&self, rng: &mut impl Rng) -> Complex64 {
        let phi_max = PI - self.beta;
        let r = 10f64.powf(rng.random_range(-2.0..4.0));
        let phi = rng.random_range(-phi_max..=phi_max);
        self.nu + Complex64::from_polar(r, phi)
    }
}

/// Wavevectors with |ξ| log-spaced in [lo, hi] along evenly spread directions; ξ = 0 first.
pub fn xi_grid(d: usize, n_mag: usize, n_dir: usize, lo: f64, hi: f64) -> Vec<[f64; 3]> {
    let mut dirs = Vec::with_capacity(n_dir);
    if d == 2 {
        for j in 0..n_dir {
            let a = PI * j as f64 / n_dir as f64;
            dirs.push([a.cos(), a.sin(), 0.0]);
        }
    } else {
        // Fibonacci points on the upper hemisphere; the symbol is even in ξ
        let golden = PI * (3.0 - 5f64.sqrt());
        for j in 0..n_dir {
            let z = 1.0 - (j as f64 + 0.5) / n_dir as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * j as f64;
            dirs.push([r * a.cos(), r * a.sin(), z]);
        }
    }
    let mut out = vec![[0.0; 3]];
    for i in 0..n_mag {
        let m = lo * (hi / lo).powf(i as f64 / (n_mag.max(2) - 1) as f64);
        for dir in &dirs {
            out.push([m * dir[0], m * dir[1], m * dir[2]]);
        }
    }
    out
}

fn norm_sq(xi: &[f64; 3], d: usize) -> f64 {
    xi[..d].iter().map(|x| x * x).sum()
}

/// E(ξ)_{mj} = (1/γ₁) Σ_{kl} a_{mj}^{kl} ξ_k ξ_l.
pub fn e_symbol(a: &CoefficientTensor, gamma1: f64, xi: &[f64]) -> Mat {
    let d = a.d;
    let mut e = Mat::zeros(d);
    for m in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += a.get(m, j, k, l) * xi[k] * xi[l];
                }
            }
            e[(m, j)] = s / gamma1;
        }
    }
    e
}

/// λI + E(ξ) + (γ₂/(λγ₁)) ξ⊗ξ.
pub fn assemble_symbol(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    xi: &[f64],
    lambda: Complex64,
) -> Result<CMat> {
    if lambda.norm() == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let d = a.d;
    let e = e_symbol(a, gamma1, xi);
    let mut m = CMat::scaled_identity(d, lambda);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] += e[(i, j)] + xi[i] * xi[j] * gamma2 / (gamma1 * lambda);
        }
    }
    Ok(m)
}

fn to_dense(m: &CMat) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.d, m.d, |i, j| m[(i, j)])
}

/// (σ_max, σ_min) of a small complex matrix.
pub fn singular_extremes(m: &CMat) -> (f64, f64) {
    let sv = to_dense(m).singular_values();
    (sv.max(), sv.min())
}

pub fn op_norm(m: &CMat) -> f64 {
    singular_extremes(m).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorCheck {
    /// max of sin(β/2)(|λ|+|ξ|²) − |λ+|ξ|²|; must be ≤ 0
    pub max_violation: f64,
    /// samples exceeding rounding (8 ulp relative)
    pub violations: usize,
    pub samples: usize,
    pub worst_lambda: Complex64,
    pub worst_xi_sq: f64,
}

/// |λ + |ξ|²| ≥ sin(β/2)(|λ| + |ξ|²) over all (λ, |ξ|²) pairs.
pub fn sector_inequality_check(sector: &Sector, lambdas: &[Complex64], xi_sq: &[f64]) -> SectorCheck {
    let s = (sector.beta / 2.0).sin();
    let per: Vec<(f64, usize, Complex64, f64)> = lambdas
        .par_iter()
        .map(|&l| {
            let mut worst = (f64::NEG_INFINITY, 0usize, l, 0.0);
            for &x in xi_sq {
                let scale = l.norm() + x;
                let v = s * scale - (l + x).norm();
                if v > 8.0 * f64::EPSILON * scale {
                    worst.1 += 1;
                }
                if v > worst.0 {
                    worst = (v, worst.1, l, x);
                }
            }
            worst
        })
        .collect();
    let mut out = SectorCheck {
        max_violation: f64::NEG_INFINITY,
        violations: 0,
        samples: lambdas.len() * xi_sq.len(),
        worst_lambda: Complex64::new(0.0, 0.0),
        worst_xi_sq: 0.0,
    };
    for (v, c, l, x) in per {
        out.violations += c;
        if v > out.max_violation {
            out.max_violation = v;
            out.worst_lambda = l;
            out.worst_xi_sq = x;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventScan {
    pub c_observed: f64,
    pub argmax_lambda: Complex64,
    pub argmax_xi: [f64; 3],
}

/// sup (|λ| + |ξ|²)·‖(λI + E + E_λ)⁻¹‖ over the sample grid.
pub fn resolvent_bound_scan(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    xis: &[[f64; 3]],
    lambdas: &[Complex64],
) -> Result<ResolventScan> {
    if xis.is_empty() || lambdas.is_empty() {
        return Err(Error::Degenerate("empty scan grid".into()));
    }
    let d = a.d;
    let per: Vec<Result<(f64, Complex64, [f64; 3])>> = lambdas
        .par_iter()
        .map(|&l| {
            let mut best = (f64::NEG_INFINITY, l, [0.0; 3]);
            for xi in xis {
                let m = assemble_symbol(a, gamma1, gamma2, &xi[..d], l)?;
                let (smax, smin) = singular_extremes(&m);
                if !(smin > 1e-13 * smax) {
                    return Err(Error::SingularSymbol {
                        xi: xi[..d].to_vec(),
                        lambda: l,
                        condition: smax / smin,
                    });
                }
                let v = (l.norm() + norm_sq(xi, d)) / smin;
                if v > best.0 {
                    best = (v, l, *xi);
                }
            }
            Ok(best)
        })
        .collect();
    let mut out = ResolventScan {
        c_observed: f64::NEG_INFINITY,
        argmax_lambda: Complex64::new(0.0, 0.0),
        argmax_xi: [0.0; 3],
    };
    for r in per {
        let (v, l, xi) = r?;
        if v > out.c_observed {
            out = ResolventScan {
                c_observed: v,
                argmax_lambda: l,
                argmax_xi: xi,
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
}

/// Resolvent scan on a base grid and on one with every sample count doubled.
pub fn resolvent_refinement(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    sector: &Sector,
    n_r: usize,
    n_phi: usize,
    n_mag: usize,
    n_dir: usize,
) -> Result<RefinementStudy> {
    let d = a.d;
    let coarse = resolvent_bound_scan(
        a,
        gamma1,
        gamma2,
        &xi_grid(d, n_mag, n_dir, 1e-2, 1e3),
        &sector.lambda_grid(n_r, n_phi),
    )?
    .c_observed;
    let fine = resolvent_bound_scan(
        a,
        gamma1,
        gamma2,
        &xi_grid(d, 2 * n_mag, 2 * n_dir, 1e-2, 1e3),
        &sector.lambda_grid(2 * n_r, 2 * n_phi),
    )?
    .c_observed;
    Ok(RefinementStudy {
        coarse,
        fine,
        relative_change: (fine - coarse).abs() / coarse,
    })
}

/// Smallest sampled radius r such that ‖(λI + E)⁻¹E_λ‖ ≤ 1/2 for every sampled λ in the
/// sector with |λ − ν| ≥ r; also checks that the full symbol is invertible there.
pub fn perturbation_threshold(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    sector: &Sector,
    xis: &[[f64; 3]],
    n_r: usize,
    n_phi: usize,
) -> Result<f64> {
    let d = a.d;
    let grid = sector.lambda_grid(n_r, n_phi);
    let worst: Vec<f64> = grid
        .chunks(n_phi)
        .map(|ring| {
            ring.par_iter()
                .map(|&l| {
                    let mut w: f64 = 0.0;
                    for xi in xis {
                        let e = e_symbol(a, gamma1, &xi[..d]);
                        let mut base = CMat::scaled_identity(d, l);
                        let mut el = CMat::zeros(d);
                        for i in 0..d {
                            for j in 0..d {
                                base[(i, j)] += e[(i, j)];
                                el[(i, j)] = Complex64::new(xi[i] * xi[j] * gamma2 / gamma1, 0.0) / l;
                            }
                        }
                        let v = match base.inverse() {
                            Some(inv) => op_norm(&mul(&inv, &el)),
                            None => f64::INFINITY,
                        };
                        w = w.max(v);
                    }
                    w
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    let radii: Vec<f64> = grid.chunks(n_phi).map(|ring| (ring[0] - sector.nu).norm()).collect();
    let mut threshold = f64::INFINITY;
    for i in (0..worst.len()).rev() {
        if worst[i] <= 0.5 {
            threshold = radii[i];
        } else {
            break;
        }
    }
    if threshold.is_finite() {
        let above: Vec<Complex64> = grid
            .iter()
            .copied()
            .filter(|l| (l - sector.nu).norm() >= threshold)
            .collect();
        resolvent_bound_scan(a, gamma1, gamma2, xis, &above)?;
    }
    Ok(threshold)
}

fn mul(a: &CMat, b: &CMat) -> CMat {
    let d = a.d;
    let mut c = CMat::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                c[(i, j)] += a[(i, k)] * b[(k, j)];
            }
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    /// λ M⁻¹
    Lambda,
    /// |λ|^{1/2} iξ_j M⁻¹
    SqrtLambdaXi(usize),
    /// −ξ_jξ_k M⁻¹
    XiXi(usize, usize),
}

impl MultiplierKind {
    /// All members of the three families for dimension d.
    pub fn all(d: usize) -> Vec<MultiplierKind> {
        let mut v = vec![MultiplierKind::Lambda];
        v.extend((0..d).map(MultiplierKind::SqrtLambdaXi));
        for j in 0..d {
            for k in j..d {
                v.push(MultiplierKind::XiXi(j, k));
            }
        }
        v
    }
}

/// m(λ, ξ) for the given kind.
pub fn multiplier(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    kind: MultiplierKind,
    xi: &[f64],
    lambda: Complex64,
) -> Result<CMat> {
    let m = assemble_symbol(a, gamma1, gamma2, xi, lambda)?;
    let inv = m.inverse().ok_or_else(|| Error::SingularSymbol {
        xi: xi.to_vec(),
        lambda,
        condition: f64::INFINITY,
    })?;
    let c = match kind {
        MultiplierKind::Lambda => lambda,
        MultiplierKind::SqrtLambdaXi(j) => Complex64::new(0.0, lambda.norm().sqrt() * xi[j]),
        MultiplierKind::XiXi(j, k) => Complex64::new(-xi[j] * xi[k], 0.0),
    };
    let mut out = inv;
    for i in 0..a.d {
        for j in 0..a.d {
            out[(i, j)] *= c;
        }
    }
    Ok(out)
}

fn stencil(order: u32) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        _ => panic!("derivative order above 3"),
    }
}

/// ∂_ξ^α f by tensor-product central differences with step h.
pub fn fd_derivative(
    f: &impl Fn(&[f64]) -> Result<CMat>,
    xi: &[f64],
    alpha: &[u32],
    h: f64,
) -> Result<CMat> {
    let d = xi.len();
    let stencils: Vec<&[(f64, f64)]> = alpha.iter().map(|&o| stencil(o)).collect();
    let total: u32 = alpha.iter().sum();
    let mut idx = vec![0usize; d];
    let mut acc: Option<CMat> = None;
    loop {
        let mut point = xi.to_vec();
        let mut w = 1.0;
        for a in 0..d {
            let (off, c) = stencils[a][idx[a]];
            point[a] += off * h;
            w *= c;
        }
        let val = f(&point)?;
        let acc_m = acc.get_or_insert_with(|| CMat::zeros(val.d));
        for i in 0..val.d {
            for j in 0..val.d {
                acc_m[(i, j)] += val[(i, j)] * w;
            }
        }
        let mut a = 0;
        loop {
            if a == d {
                let mut out = acc.unwrap();
                let s = h.powi(total as i32);
                for i in 0..out.d {
                    for j in 0..out.d {
                        out[(i, j)] /= s;
                    }
                }
                return Ok(out);
            }
            idx[a] += 1;
            if idx[a] < stencils[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

pub const FD_REL_STEP: f64 = 1e-4;
pub const MIN_XI_NORM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierCheck {
    pub c_alpha: f64,
    /// same supremum with the step halved
    pub c_alpha_half: f64,
    pub relative_change: f64,
    pub rejected: usize,
}

/// sup |∂_ξ^α m(λ,ξ)|·|ξ|^{|α|} over the samples, with h = 1e-4·max(1,|ξ|) and a
/// step-halving comparison. Samples with |ξ| below 1e-6 are rejected.
pub fn multiplier_derivative_check(
    a: &CoefficientTensor,
    gamma1: f64,
    gamma2: f64,
    kind: MultiplierKind,
    alpha: &[u32],
    lambdas: &[Complex64],
    xis: &[[f64; 3]],
) -> Result<MultiplierCheck> {
    let d = a.d;
    let order: u32 = alpha.iter().sum();
    let kept: Vec<&[f64; 3]> = xis.iter().filter(|x| norm_sq(x, d).sqrt() >= MIN_XI_NORM).collect();
    let rejected = xis.len() - kept.len();
    if rejected > 0 {
        log::debug!("multiplier check: rejected {rejected} samples with |ξ| < {MIN_XI_NORM:e}");
    }
    let per: Vec<Result<(f64, f64)>> = lambdas
        .par_iter()
        .map(|&l| {
            let f = |x: &[f64]| multiplier(a, gamma1, gamma2, kind, x, l);
            let mut best = (0.0f64, 0.0f64);
            for xi in &kept {
                let r = norm_sq(xi, d).sqrt();
                let h = FD_REL_STEP * r.max(1.0);
                let w = r.powi(order as i32);
                let full = op_norm(&fd_derivative(&f, &xi[..d], alpha, h)?) * w;
                let half = op_norm(&fd_derivative(&f, &xi[..d], alpha, 0.5 * h)?) * w;
                best = (best.0.max(full), best.1.max(half));
            }
            Ok(best)
        })
        .collect();
    let (mut c, mut c_half) = (0.0f64, 0.0f64);
    for r in per {
        let (x, y) = r?;
        c = c.max(x);
        c_half = c_half.max(y);
    }
    Ok(MultiplierCheck {
        c_alpha: c,
        c_alpha_half: c_half,
        relative_change: (c - c_half).abs() / c.max(f64::MIN_POSITIVE),
        rejected,
    })
}

/// Vector-field spectrum: one complex array per component.
pub type Spectrum = Vec<Vec<Complex64>>;

fn spectrum_norm_sq(s: &Spectrum) -> f64 {
    s.iter().flatten().map(|z| z.norm_sqr()).sum()
}

/// Monte-Carlo lower bound for the R-bound of {T_j}: for each test set (f_1..f_n),
/// sqrt(mean ‖Σ r_j T_j f_j‖² / mean ‖Σ r_j f_j‖²) over Rademacher signs, maxed over sets.
pub fn rbound_estimate(
    family: &[&(dyn Fn(&Spectrum) -> Spectrum + Sync)],
    test_sets: &[Vec<Spectrum>],
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if family.is_empty() || n_trials == 0 {
        return Err(Error::Degenerate("empty family or no trials".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for set in test_sets {
        if set.len() != family.len() {
            return Err(Error::ShapeMismatch(format!(
                "test set has {} functions for a family of {}",
                set.len(),
                family.len()
            )));
        }
        if set.iter().all(|f| spectrum_norm_sq(f) == 0.0) {
            continue;
        }
        let images: Vec<Spectrum> = family.iter().zip(set).map(|(t, f)| t(f)).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..n_trials {
            let signs: Vec<f64> = (0..set.len())
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            num += spectrum_norm_sq(&signed_sum(&images, &signs));
            den += spectrum_norm_sq(&signed_sum(set, &signs));
        }
        if den > 0.0 {
            let v = (num / den).sqrt();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.ok_or_else(|| Error::Degenerate("all test functions vanish".into()))
}

fn signed_sum(items: &[Spectrum], signs: &[f64]) -> Spectrum {
    let mut out: Spectrum = items[0].iter().map(|c| vec![Complex64::new(0.0, 0.0); c.len()]).collect();
    for (it, &s) in items.iter().zip(signs) {
        for (o, c) in out.iter_mut().zip(it) {
            for (x, y) in o.iter_mut().zip(c) {
                *x += y * s;
            }
        }
    }
    out
}
