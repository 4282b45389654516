//! Resolvent problems and implicit time stepping for the linearized system
//!
//!   ∂_tθ + ρ₀ div v = 𝒢,   ρ₀∂_t v − 𝒜(𝔻u₀)(𝔻v) + π'(ρ₀)∇θ = ℱ,
//!
//! where v = ũ − u₀. Eliminating θ = (g − ρ₀ div v)/λ from the resolvent system
//! leaves λv − B_λ v = F_λ with
//!   B_λ v = (1/ρ₀)𝒜(𝔻u₀)v + (π'(ρ₀)/(ρ₀λ))∇(ρ₀ div v),
//!   F_λ   = f − (π'(ρ₀)/(ρ₀λ))∇g.
//! The constant part B̄ = (1/γ₁)𝒜(D̄) + (γ₂/(γ₁λ))∇div is inverted mode by mode and the
//! remainder P_λ = B_λ − B̄ is handled by Richardson iteration.

use crate::constitutive::{coefficient_tensor, CoefficientTensor, QuasilinearOperator};
use crate::error::{Error, Result};
use crate::fields::{lq_norm, Field, Grid, Rank, TimeSeries};
use crate::lagrangian::Background;
use crate::tensor::{CMat, Mat};
use num_complex::Complex64;
use rayon::prelude::*;

pub const RICHARDSON_TOL: f64 = 1e-10;
pub const RICHARDSON_MAX_ITER: usize = 200;
pub const DIVERGENCE_WINDOW: usize = 5;
pub const MAX_SUBSTEPS: usize = 64;

/// Frozen data of the linearized operator.
#[derive(Debug, Clone)]
pub struct LinearOperatorData {
    pub rho_star: f64,
    pub theta0: Field,
    pub rho0: Field,
    pub u0: Field,
    pub a0: QuasilinearOperator,
    /// π'(ρ* + θ₀)
    pub pi_prime: Field,
    /// mean of ρ₀
    pub gamma1: f64,
    /// mean of ρ₀π'(ρ₀)
    pub gamma2: f64,
    /// mean of 𝔻u₀
    pub d_bar: Mat,
    pub a_bar: CoefficientTensor,
}

impl LinearOperatorData {
    pub fn new(bg: &Background) -> Result<Self> {
        let pi_prime = bg.rho0.map(|r| bg.pressure.prime(r));
        let gamma1 = bg.rho0.mean(0);
        let gamma2 = pi_prime.mul_scalar(&bg.rho0).mean(0);
        let du = bg.u0.sym_gradient();
        let d = bg.grid().d();
        let mut d_bar = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                d_bar[(i, j)] = du.mean(i * d + j);
            }
        }
        let a_bar = coefficient_tensor(&bg.model, &d_bar)?;
        Ok(LinearOperatorData {
            rho_star: bg.rho_star,
            theta0: bg.theta0.clone(),
            rho0: bg.rho0.clone(),
            u0: bg.u0.clone(),
            a0: bg.a0.clone(),
            pi_prime,
            gamma1,
            gamma2,
            d_bar,
            a_bar,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }

    /// B_λ v for real λ.
    pub fn apply_b_lambda(&self, v: &Field, lambda: f64) -> Field {
        let visc = self.a0.apply(v).zip_map_scalar(&self.rho0, |a, r| a / r);
        let grad = v.divergence().mul_scalar(&self.rho0).gradient();
        let w = self.pi_prime.zip_map(&self.rho0, |p, r| p / (r * lambda));
        visc.add(&grad.mul_scalar(&w))
    }

    /// F_λ = f − (π'(ρ₀)/(ρ₀λ))∇g.
    pub fn reduce(&self, g: &Field, f: &Field, lambda: f64) -> Result<Field> {
        if lambda == 0.0 {
            return Err(Error::ZeroLambda);
        }
        let w = self.pi_prime.zip_map(&self.rho0, |p, r| p / (r * lambda));
        Ok(f.sub(&g.gradient().mul_scalar(&w)))
    }

    /// θ = (g − ρ₀ div v)/λ.
    pub fn recover_theta(&self, g: &Field, v: &Field, lambda: f64) -> Field {
        g.sub(&v.divergence().mul_scalar(&self.rho0)).scale(1.0 / lambda)
    }

    pub fn constant_part(&self, lambda: Complex64) -> Result<ConstantResolvent> {
        ConstantResolvent::new(self.grid(), &self.a_bar, self.gamma1, self.gamma2, lambda)
    }
}

trait ScalarWeight {
    fn zip_map_scalar(&self, s: &Field, f: impl Fn(f64, f64) -> f64) -> Field;
}

impl ScalarWeight for Field {
    fn zip_map_scalar(&self, s: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        let comps = self
            .components()
            .iter()
            .map(|c| c.iter().zip(s.comp(0)).map(|(&a, &b)| f(a, b)).collect())
            .collect();
        Field::from_components(self.grid(), self.rank(), comps).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct ResolventProblem {
    pub lambda: Complex64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub f_lambda: Field,
}

/// F_λ = ℱ − (1/λ)∇𝒢 with unit weights.
pub fn reduce_resolvent(g: &Field, f: &Field, lambda: f64) -> Result<Field> {
    if lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    Ok(f.sub(&g.gradient().scale(1.0 / lambda)))
}

/// Per-mode inverses of λI − B̄ built from the discrete derivative symbols of the grid,
/// so the constant part matches the physical-space operators exactly.
pub struct ConstantResolvent {
    grid: Grid,
    pub lambda: Complex64,
    bbar: Vec<CMat>,
    inv: Vec<CMat>,
}

impl ConstantResolvent {
    pub fn new(
        grid: &Grid,
        a_bar: &CoefficientTensor,
        gamma1: f64,
        gamma2: f64,
        lambda: Complex64,
    ) -> Result<Self> {
        if lambda == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroLambda);
        }
        let d = grid.d();
        let built: Vec<(CMat, Option<CMat>)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let s1: Vec<Complex64> = (0..d).map(|a| grid.derivative_symbol(i, a, 1)).collect();
                let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
                for l in 0..d {
                    for m in 0..d {
                        h[l][m] = if l == m { grid.derivative_symbol(i, l, 2) } else { s1[l] * s1[m] };
                    }
                }
                let mut b = CMat::zeros(d);
                for j in 0..d {
                    for k in 0..d {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for l in 0..d {
                            for m in 0..d {
                                acc += h[l][m] * a_bar.get(j, k, l, m);
                            }
                        }
                        b[(j, k)] = acc / gamma1 + s1[j] * s1[k] * gamma2 / (gamma1 * lambda);
                    }
                }
                let mut m = CMat::scaled_identity(d, lambda);
                for j in 0..d {
                    for k in 0..d {
                        m[(j, k)] -= b[(j, k)];
                    }
                }
                (b, m.inverse())
            })
            .collect();
        let mut bbar = Vec::with_capacity(built.len());
        let mut inv = Vec::with_capacity(built.len());
        for (i, (b, mi)) in built.into_iter().enumerate() {
            match mi {
                Some(mi) => inv.push(mi),
                None => {
                    return Err(Error::SingularSymbol {
                        xi: grid.xi(i)[..d].to_vec(),
                        lambda,
                        condition: f64::INFINITY,
                    })
                }
            }
            bbar.push(b);
        }
        Ok(ConstantResolvent {
            grid: grid.clone(),
            lambda,
            bbar,
            inv,
        })
    }

    /// λI − B̄ at one storage index.
    pub fn mode_matrix(&self, flat: usize) -> CMat {
        let d = self.grid.d();
        let mut m = CMat::scaled_identity(d, self.lambda);
        for j in 0..d {
            for k in 0..d {
                m[(j, k)] -= self.bbar[flat][(j, k)];
            }
        }
        m
    }

    fn per_mode(&self, mats: &[CMat], spec: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let d = self.grid.d();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); self.grid.len()]; d];
        for (i, m) in mats.iter().enumerate() {
            let x: Vec<Complex64> = (0..d).map(|c| spec[c][i]).collect();
            let y = m.matvec(&x);
            for c in 0..d {
                out[c][i] = y[c];
            }
        }
        out
    }

    /// (λI − B̄)⁻¹ applied to a vector spectrum.
    pub fn solve_spectrum(&self, spec: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        self.per_mode(&self.inv, spec)
    }

    /// Real-field solve; exact for real λ.
    pub fn solve(&self, f: &Field) -> Field {
        Field::from_spectrum(&self.grid, Rank::Vector, &self.solve_spectrum(f.spectrum()))
    }

    /// B̄ v.
    pub fn apply_bbar(&self, v: &Field) -> Field {
        Field::from_spectrum(&self.grid, Rank::Vector, &self.per_mode(&self.bbar, v.spectrum()))
    }
}

/// Constant-coefficient solve for a frozen strain D (real part for real λ).
pub fn constant_resolvent_solve(
    model: &crate::constitutive::ViscosityModel,
    problem: &ResolventProblem,
    d_frozen: &Mat,
) -> Result<Field> {
    let a = coefficient_tensor(model, d_frozen)?;
    let cr = ConstantResolvent::new(
        problem.f_lambda.grid(),
        &a,
        problem.gamma1,
        problem.gamma2,
        problem.lambda,
    )?;
    Ok(cr.solve(&problem.f_lambda))
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub theta: Field,
    pub v: Field,
    pub report: SolveReport,
}

/// Richardson iteration (λ − B̄)v^{m+1} = F_λ + P_λ v^m from v⁰ = 0 with a prebuilt
/// constant part. The residual ‖λv − B_λv − F_λ‖₂/‖F_λ‖₂ equals ‖P_λ(v^{m+1} − v^m)‖₂/‖F_λ‖₂.
pub fn richardson(
    op: &LinearOperatorData,
    cr: &ConstantResolvent,
    f_lambda: &Field,
    lambda: f64,
) -> Result<(Field, SolveReport)> {
    let mut report = SolveReport::default();
    let f_norm = lq_norm(f_lambda, 2.0);
    let mut v = Field::zeros(op.grid(), Rank::Vector);
    if f_norm == 0.0 {
        return Ok((v, report));
    }
    let p_apply = |v: &Field| op.apply_b_lambda(v, lambda).sub(&cr.apply_bbar(v));
    let mut pv = Field::zeros(op.grid(), Rank::Vector);
    let mut growing = 0;
    loop {
        v = cr.solve(&f_lambda.add(&pv));
        report.iterations += 1;
        let pv_next = p_apply(&v);
        let res = lq_norm(&pv_next.sub(&pv), 2.0) / f_norm;
        pv = pv_next;
        if let Some(&prev) = report.residuals.last() {
            let ratio = res / prev;
            report.ratios.push(ratio);
            growing = if ratio >= 1.0 || !ratio.is_finite() { growing + 1 } else { 0 };
        }
        report.residuals.push(res);
        log::trace!("richardson it={} res={res:e}", report.iterations);
        if res < RICHARDSON_TOL {
            return Ok((v, report));
        }
        if growing >= DIVERGENCE_WINDOW || !res.is_finite() {
            return Err(Error::NonContraction {
                ratio: report.ratios.last().copied().unwrap_or(f64::NAN),
                iterations: report.iterations,
                lambda: Complex64::new(lambda, 0.0),
            });
        }
        if report.iterations >= RICHARDSON_MAX_ITER {
            return Err(Error::IterationCap {
                iterations: report.iterations,
                residual: res,
            });
        }
    }
}

/// Solves λθ + ρ₀ div v = g, λv − (1/ρ₀)𝒜(𝔻u₀)v + (π'/ρ₀)∇θ = f for real λ > 0.
pub fn variable_resolvent_solve(
    op: &LinearOperatorData,
    g: &Field,
    f: &Field,
    lambda: f64,
) -> Result<ResolventSolution> {
    let f_lambda = op.reduce(g, f, lambda)?;
    let cr = op.constant_part(Complex64::new(lambda, 0.0))?;
    let (v, report) = richardson(op, &cr, &f_lambda, lambda)?;
    let theta = op.recover_theta(g, &v, lambda);
    Ok(ResolventSolution { theta, v, report })
}

#[derive(Debug, Clone)]
pub struct MarchResult {
    pub theta: TimeSeries,
    /// ũ = u₀ + v
    pub u: TimeSeries,
    /// Richardson iterations per step, summed over substeps
    pub iterations: Vec<usize>,
    /// substeps used per step (1 unless contraction failed at λ = 1/Δt)
    pub substeps: Vec<usize>,
    pub max_residual: f64,
}

fn lerp(a: &Field, b: &Field, s: f64) -> Field {
    a.scale(1.0 - s).add(&b.scale(s))
}

/// Implicit Euler from θ = 0, ũ = u₀ with λ = 1/Δt. On non-contraction the step is
/// retried with 2, 4, … substeps (λ doubled each time) and linearly interpolated data.
pub fn time_march(op: &LinearOperatorData, g_rhs: &TimeSeries, f_rhs: &TimeSeries) -> Result<MarchResult> {
    let grid = op.grid();
    let n = g_rhs.len();
    let dt = g_rhs.dt();
    let mut theta = vec![Field::zeros(grid, Rank::Scalar)];
    let mut v = vec![Field::zeros(grid, Rank::Vector)];
    let mut iterations = Vec::new();
    let mut substeps = Vec::new();
    let mut max_residual: f64 = 0.0;
    let mut cache: Vec<(usize, ConstantResolvent)> = Vec::new();
    for step in 0..n - 1 {
        let mut s = 1;
        loop {
            let lambda = s as f64 / dt;
            if !cache.iter().any(|(k, _)| *k == s) {
                cache.push((s, op.constant_part(Complex64::new(lambda, 0.0))?));
            }
            let cr = &cache.iter().find(|(k, _)| *k == s).unwrap().1;
            let mut th = theta[step].clone();
            let mut vv = v[step].clone();
            let mut its = 0;
            let mut failed = None;
            for j in 1..=s {
                let frac = j as f64 / s as f64;
                let gg = lerp(&g_rhs.values[step], &g_rhs.values[step + 1], frac);
                let ff = lerp(&f_rhs.values[step], &f_rhs.values[step + 1], frac);
                let g = gg.add(&th.scale(lambda));
                let f = ff.zip_map_scalar(&op.rho0, |a, r| a / r).add(&vv.scale(lambda));
                let f_lambda = op.reduce(&g, &f, lambda)?;
                match richardson(op, cr, &f_lambda, lambda) {
                    Ok((vn, rep)) => {
                        its += rep.iterations;
                        if let Some(&r) = rep.residuals.last() {
                            max_residual = max_residual.max(r);
                        }
                        th = op.recover_theta(&g, &vn, lambda);
                        vv = vn;
                    }
                    Err(e @ Error::NonContraction { .. }) | Err(e @ Error::IterationCap { .. }) => {
                        failed = Some(e);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            match failed {
                None => {
                    theta.push(th);
                    v.push(vv);
                    iterations.push(its);
                    substeps.push(s);
                    if s > 1 {
                        log::info!("step {step}: contraction needed {s} substeps (λ = {lambda:e})");
                    }
                    break;
                }
                Some(e) if s >= MAX_SUBSTEPS => return Err(e),
                Some(_) => s *= 2,
            }
        }
    }
    let t = g_rhs.t_final();
    let u: Vec<Field> = v.iter().map(|vi| vi.add(&op.u0)).collect();
    Ok(MarchResult {
        theta: TimeSeries::new(t, theta)?,
        u: TimeSeries::new(t, u)?,
        iterations,
        substeps,
        max_residual,
    })
}
