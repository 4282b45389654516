//! Flow maps, the matrix E = I − (∇X)⁻¹ and the right-hand sides of the
//! transformed and linearized systems in Lagrangian coordinates.
//!
//! Conventions: (∇ũ)_{ij} = ∂_j ũ_i, row vectors act on matrices from the
//! left, so (∇π E)_i = Σ_j ∂_j π E_{ji}.

use crate::constitutive::{self, PressureLaw, QuasilinearOperator, ViscosityModel};
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, Interpolant, Rank, TimeSeries};
use crate::tensor::Mat;

pub const DEFAULT_SIGMA: f64 = 0.5;
pub const PICARD_TOL: f64 = 1e-13;
pub const PICARD_MAX_ITER: usize = 50;
pub const INVERSE_TOL: f64 = 1e-10;
pub const INVERSE_MAX_ITER: usize = 100;

#[derive(Debug, Clone)]
pub struct LagrangianMap {
    pub times: Vec<f64>,
    /// X(t,·) − y per time sample
    pub displacement: Vec<Field>,
    pub jacobian: Vec<Field>,
    pub e: Vec<Field>,
    /// sup_t max_y |∇X − I| (Frobenius)
    pub sigma_observed: f64,
    /// Picard sweeps used per step (empty for Lagrangian-velocity maps)
    pub picard_iterations: Vec<usize>,
}

/// I − J⁻¹, or `None` if J is singular.
pub fn e_from_jacobian(j: &Mat) -> Option<Mat> {
    j.inverse().map(|inv| Mat::identity(j.d) - inv)
}

impl LagrangianMap {
    fn from_displacements(times: Vec<f64>, displacement: Vec<Field>, sigma: f64) -> Result<Self> {
        let grid = displacement[0].grid().clone();
        let d = grid.d();
        let mut jacobian = Vec::with_capacity(times.len());
        let mut e = Vec::with_capacity(times.len());
        let mut sigma_observed: f64 = 0.0;
        for (t, disp) in times.iter().zip(&displacement) {
            let grad = disp.gradient();
            let mut jf = Field::zeros(&grid, Rank::Tensor);
            let mut ef = Field::zeros(&grid, Rank::Tensor);
            let mut local: f64 = 0.0;
            for p in 0..grid.len() {
                let g = grad.mat_at(p);
                local = local.max(g.norm_sq().sqrt());
                let j = Mat::identity(d) + g;
                let det = j.det();
                if !(det > 0.0) {
                    return Err(Error::SingularJacobian { t: *t, point: p, det });
                }
                jf.set_mat(p, &j);
                ef.set_mat(p, &e_from_jacobian(&j).unwrap());
            }
            if local >= sigma {
                return Err(Error::SigmaViolation {
                    t: *t,
                    observed: local,
                    sigma,
                });
            }
            sigma_observed = sigma_observed.max(local);
            jacobian.push(jf);
            e.push(ef);
        }
        Ok(LagrangianMap {
            times,
            displacement,
            jacobian,
            e,
            sigma_observed,
            picard_iterations: Vec::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.displacement[0].grid()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Identity map on the given time grid.
    pub fn identity(grid: &Grid, times: Vec<f64>) -> Self {
        let zero = Field::zeros(grid, Rank::Vector);
        let n = times.len();
        LagrangianMap::from_displacements(times, vec![zero; n], f64::INFINITY)
            .expect("identity map is valid")
    }

    /// Map positions X(t_i, y) on the grid.
    pub fn positions(&self, i: usize) -> Vec<[f64; 3]> {
        let g = self.grid();
        let disp = &self.displacement[i];
        (0..g.len())
            .map(|p| {
                let mut x = g.point(p);
                for (a, xa) in x.iter_mut().enumerate().take(g.d()) {
                    *xa += disp.comp(a)[p];
                }
                x
            })
            .collect()
    }

    /// Diagnostic for the bound ‖E‖_∞ ≤ C‖∇X − I‖_∞: returns max over t of the ratio.
    pub fn e_bound_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (jf, ef) in self.jacobian.iter().zip(&self.e) {
            let g = jf.grid();
            let (mut num, mut den): (f64, f64) = (0.0, 0.0);
            for p in 0..g.len() {
                num = num.max(ef.mat_at(p).norm_sq().sqrt());
                den = den.max((jf.mat_at(p) - Mat::identity(g.d())).norm_sq().sqrt());
            }
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        worst
    }
}

/// X(t,y) = y + ∫₀ᵗ u(s, X(s,y)) ds for an Eulerian velocity, by trapezoid steps solved
/// with Picard iteration and direct Fourier evaluation of u off the grid.
pub fn flow_map(u: &TimeSeries, sigma: f64) -> Result<LagrangianMap> {
    let grid = u.values[0].grid().clone();
    let d = grid.d();
    let dt = u.dt();
    let mut positions: Vec<[f64; 3]> = (0..grid.len()).map(|p| grid.point(p)).collect();
    let mut displacement = vec![Field::zeros(&grid, Rank::Vector)];
    let mut iterations = Vec::new();
    let mut interp_prev = Interpolant::new(&u.values[0]);
    for n in 0..u.len() - 1 {
        let t_next = u.times[n + 1];
        let u_prev = interp_prev.eval_many(&positions);
        let interp_next = Interpolant::new(&u.values[n + 1]);
        let base: Vec<[f64; 3]> = positions
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let mut b = *x;
                for a in 0..d {
                    b[a] += 0.5 * dt * u_prev[a][p];
                }
                b
            })
            .collect();
        let mut next: Vec<[f64; 3]> = positions
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let mut b = *x;
                for a in 0..d {
                    b[a] += dt * u_prev[a][p];
                }
                b
            })
            .collect();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let u_next = interp_next.eval_many(&next);
            let mut change: f64 = 0.0;
            for (p, x) in next.iter_mut().enumerate() {
                for a in 0..d {
                    let v = base[p][a] + 0.5 * dt * u_next[a][p];
                    change = change.max((v - x[a]).abs());
                    x[a] = v;
                }
            }
            if change < PICARD_TOL {
                break;
            }
            if sweeps >= PICARD_MAX_ITER || !change.is_finite() {
                return Err(Error::PicardDivergence {
                    t: t_next,
                    iterations: sweeps,
                });
            }
        }
        iterations.push(sweeps);
        positions = next;
        let mut disp = Field::zeros(&grid, Rank::Vector);
        for (p, x) in positions.iter().enumerate() {
            let y = grid.point(p);
            let v: Vec<f64> = (0..d).map(|a| x[a] - y[a]).collect();
            disp.set_vec(p, &v);
        }
        displacement.push(disp);
        interp_prev = interp_next;
    }
    let mut map = LagrangianMap::from_displacements(u.times.clone(), displacement, sigma)?;
    map.picard_iterations = iterations;
    Ok(map)
}

/// X(t,y) = y + ∫₀ᵗ w(s,y) ds for a velocity already given in Lagrangian coordinates
/// (cumulative trapezoid rule).
pub fn flow_map_lagrangian(w: &TimeSeries, sigma: f64) -> Result<LagrangianMap> {
    let dt = w.dt();
    let mut displacement = vec![Field::zeros(w.values[0].grid(), Rank::Vector)];
    for n in 0..w.len() - 1 {
        let inc = w.values[n].add(&w.values[n + 1]).scale(0.5 * dt);
        let next = displacement[n].add(&inc);
        displacement.push(next);
    }
    LagrangianMap::from_displacements(w.times.clone(), displacement, sigma)
}

/// E at time sample i.
pub fn e_matrix(map: &LagrangianMap, i: usize) -> &Field {
    &map.e[i]
}

/// f(X(t_i, y)) on the grid.
pub fn pull_back(f: &Field, map: &LagrangianMap, i: usize) -> Field {
    let it = Interpolant::new(f);
    let comps = it.eval_many(&map.positions(i));
    Field::from_components(f.grid(), f.rank(), comps).unwrap()
}

/// Grid points y(x) = X⁻¹(t_i, x) by the iteration y ← x − (X(y) − y).
pub fn inverse_points(map: &LagrangianMap, i: usize) -> Result<Vec<[f64; 3]>> {
    let g = map.grid();
    let d = g.d();
    let it = Interpolant::new(&map.displacement[i]);
    let xs: Vec<[f64; 3]> = (0..g.len()).map(|p| g.point(p)).collect();
    let mut ys = xs.clone();
    for _ in 0..INVERSE_MAX_ITER {
        let disp = it.eval_many(&ys);
        let mut change: f64 = 0.0;
        for (p, y) in ys.iter_mut().enumerate() {
            for a in 0..d {
                let v = xs[p][a] - disp[a][p];
                change = change.max((v - y[a]).abs());
                y[a] = v;
            }
        }
        if change < INVERSE_TOL {
            return Ok(ys);
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::InverseMap {
        t: map.times[i],
        residual: f64::NAN,
    })
}

/// f̃(X⁻¹(t_i, x)) on the grid.
pub fn push_forward(f: &Field, map: &LagrangianMap, i: usize) -> Result<Field> {
    let ys = inverse_points(map, i)?;
    Ok(push_forward_at(f, &ys))
}

/// Evaluates f at precomputed preimages from [`inverse_points`].
pub fn push_forward_at(f: &Field, ys: &[[f64; 3]]) -> Field {
    let comps = Interpolant::new(f).eval_many(ys);
    Field::from_components(f.grid(), f.rank(), comps).unwrap()
}

/// Pieces of the transformed right-hand side at one time sample.
struct Transformed {
    /// G = ρ̃ tr(∇ũ E)
    g: Field,
    /// ∇π(ρ̃)E + div 𝒮̃ − Σ_{jk} ∂_k 𝒮̃_{ij} E_{kj}, without the −div 𝒮(𝔻ũ) term
    f_geom: Field,
}

fn transformed_parts(
    model: &ViscosityModel,
    pressure: &PressureLaw,
    e: &Field,
    rho: &Field,
    u: &Field,
) -> Result<Transformed> {
    let grid = u.grid();
    let d = grid.d();
    let gu = u.gradient();
    let gue = gu.mat_mul(e);
    let mut st = Field::zeros(grid, Rank::Tensor);
    let mut gfield = Field::zeros(grid, Rank::Scalar);
    for p in 0..grid.len() {
        let a = gu.mat_at(p);
        let b = gue.mat_at(p);
        let gcal = a.sym().dev() - b.sym().dev();
        let dcal = a.trace() - b.trace();
        let s = gcal.norm_sq();
        model.check(s, dcal, p)?;
        let mu = model.mu(s)[0];
        let lam = model.lambda(dcal)[0];
        st.set_mat(p, &(gcal.scale(2.0 * mu) + Mat::identity(d).scale(lam * dcal)));
        gfield.comp_mut(0)[p] = rho.comp(0)[p] * b.trace();
    }
    let div_st = st.divergence();
    let st_grad: Vec<Field> = (0..d).map(|k| st.derivative(k, 1)).collect();
    let grad_rho = rho.gradient();
    let mut f = Field::zeros(grid, Rank::Vector);
    for p in 0..grid.len() {
        let em = e.mat_at(p);
        let pp = pressure.prime(rho.comp(0)[p]);
        let mut v = [0.0; 3];
        for (i, vi) in v.iter_mut().enumerate().take(d) {
            let mut acc = div_st.comp(i)[p];
            for j in 0..d {
                acc += pp * grad_rho.comp(j)[p] * em[(j, i)];
                for k in 0..d {
                    acc -= st_grad[k].comp(i * d + j)[p] * em[(k, j)];
                }
            }
            *vi = acc;
        }
        f.set_vec(p, &v);
    }
    Ok(Transformed {
        g: gfield.dealiased(),
        f_geom: f.dealiased(),
    })
}

/// (G, F) of the transformed system with E given at the current time:
/// G = ρ̃ tr(∇ũE), F = ∇π(ρ̃)E + div 𝒮̃ − div 𝒮(𝔻ũ) − Σ_{jk} ∂_k𝒮̃_{ij}E_{kj}.
pub fn transformed_rhs(
    model: &ViscosityModel,
    pressure: &PressureLaw,
    e: &Field,
    rho: &Field,
    u: &Field,
) -> Result<(Field, Field)> {
    let parts = transformed_parts(model, pressure, e, rho, u)?;
    let div_sy = constitutive::stress_divergence_direct(model, u)?;
    Ok((parts.g, parts.f_geom.sub(&div_sy)))
}

/// Data fixed by the initial state: ρ₀ = ρ* + θ₀, u₀ and the frozen operator 𝒜(𝔻u₀).
#[derive(Debug, Clone)]
pub struct Background {
    pub model: ViscosityModel,
    pub pressure: PressureLaw,
    pub rho_star: f64,
    pub theta0: Field,
    pub rho0: Field,
    pub u0: Field,
    pub a0: QuasilinearOperator,
}

impl Background {
    pub fn new(model: ViscosityModel, pressure: PressureLaw, rho0: &Field, u0: &Field) -> Result<Self> {
        for (p, &r) in rho0.comp(0).iter().enumerate() {
            if !(r > 0.0) {
                return Err(Error::NonPositiveDensity { value: r, point: p });
            }
        }
        let rho_star = rho0.mean(0);
        let theta0 = rho0.map(|r| r - rho_star);
        let a0 = QuasilinearOperator::frozen_at(&model, u0)?;
        Ok(Background {
            model,
            pressure,
            rho_star,
            theta0,
            rho0: rho0.clone(),
            u0: u0.clone(),
            a0,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }
}

/// (𝒢, ℱ) of the linearized system:
/// 𝒢 = G − θ div ũ − ρ₀ div u₀,
/// ℱ = F − θ∂_tũ + div 𝒮(𝔻ũ) − 𝒜(𝔻u₀)(𝔻(ũ−u₀)) − π'(ρ₀)∇θ₀ − (π'(ρ̃) − π'(ρ₀))∇(θ₀+θ),
/// with ρ̃ = ρ₀ + θ, both 2/3-dealiased.
pub fn linearized_rhs(
    bg: &Background,
    e: &Field,
    theta: &Field,
    u_tilde: &Field,
    dt_u: &Field,
) -> Result<(Field, Field)> {
    let rho = bg.rho0.add(theta);
    for (p, &r) in rho.comp(0).iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::NonPositiveDensity { value: r, point: p });
        }
    }
    let parts = transformed_parts(&bg.model, &bg.pressure, e, &rho, u_tilde)?;
    let g = parts
        .g
        .sub(&theta.mul_scalar(&u_tilde.divergence()))
        .sub(&bg.u0.divergence().mul_scalar(&bg.rho0));
    let v = u_tilde.sub(&bg.u0);
    let grad_theta0 = bg.theta0.gradient();
    let grad_total = bg.theta0.add(theta).gradient();
    let pp0 = bg.rho0.map(|r| bg.pressure.prime(r));
    let dpp = rho.map(|r| bg.pressure.prime(r)).sub(&pp0);
    let f = parts
        .f_geom
        .sub(&dt_u.mul_scalar(theta))
        .sub(&bg.a0.apply(&v))
        .sub(&grad_theta0.mul_scalar(&pp0))
        .sub(&grad_total.mul_scalar(&dpp));
    // the linear parts of div 𝒮̃ and 𝒜(𝔻u₀)v only cancel under the same projection
    Ok((g.dealiased(), f.dealiased()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series_const(grid: &Grid, t: f64, n: usize, f: impl Fn(&[f64]) -> [f64; 3]) -> TimeSeries {
        TimeSeries::constant(t, n, &Field::vector_from_fn(grid, f)).unwrap()
    }

    #[test]
    fn constant_velocity_is_exact() {
        let g = Grid::new(2, 16).unwrap();
        let u = series_const(&g, 0.5, 6, |_| [0.3, -0.7, 0.0]);
        let map = flow_map(&u, DEFAULT_SIGMA).unwrap();
        for (i, t) in map.times.iter().enumerate() {
            let disp = &map.displacement[i];
            for p in 0..g.len() {
                assert!((disp.comp(0)[p] - 0.3 * t).abs() < 1e-14);
                assert!((disp.comp(1)[p] + 0.7 * t).abs() < 1e-14);
            }
            assert!(map.e[i].max_abs() < 1e-13);
        }
        let zero = series_const(&g, 0.5, 3, |_| [0.0; 3]);
        let id = flow_map(&zero, DEFAULT_SIGMA).unwrap();
        assert_eq!(id.displacement[2].max_abs(), 0.0);
        assert_eq!(id.e[2].max_abs(), 0.0);
        assert_eq!(id.jacobian[2].mat_at(5), Mat::identity(2));
    }

    #[test]
    fn e_from_simple_jacobians() {
        assert_eq!(e_from_jacobian(&Mat::identity(2)).unwrap(), Mat::zeros(2));
        let e = e_from_jacobian(&Mat::diag(&[2.0, 1.0])).unwrap();
        assert_eq!(e, Mat::diag(&[0.5, 0.0]));
        assert!(e_from_jacobian(&Mat::zeros(2)).is_none());
        let a = Mat::from_rows(2, &[0.3, -0.2, 0.5, 0.1]);
        for eps in [1e-2, 1e-3] {
            let e = e_from_jacobian(&(Mat::identity(2) + a.scale(eps))).unwrap();
            assert!((e - a.scale(eps)).max_abs() < 2.0 * eps * eps);
        }
    }

    #[test]
    fn shear_flow_expansion() {
        let g = Grid::new(2, 16).unwrap();
        let eps = 1e-3;
        let t = 0.05;
        let u = series_const(&g, t, 2, |x| [eps * (PI * x[1]).sin(), 0.0, 0.0]);
        let map = flow_map(&u, DEFAULT_SIGMA).unwrap();
        for p in 0..g.len() {
            let y = g.point(p);
            // X₁ = y₁ + εt sin(πy₂) exactly for this shear
            assert!((map.displacement[1].comp(0)[p] - eps * t * (PI * y[1]).sin()).abs() < 1e-15);
            let e = map.e[1].mat_at(p);
            assert!((e[(0, 1)] - eps * t * PI * (PI * y[1]).cos()).abs() < (eps * t * PI).powi(2) + 1e-14);
        }
        assert!(map.picard_iterations.iter().all(|&k| k <= 25));
    }

    #[test]
    fn e_vanishes_iff_gradient_vanishes() {
        let g = Grid::new(2, 16).unwrap();
        let c = series_const(&g, 0.2, 3, |_| [0.1, 0.2, 0.0]);
        assert!(flow_map(&c, DEFAULT_SIGMA).unwrap().e[2].max_abs() < 1e-13);
        let s = series_const(&g, 0.2, 3, |x| [0.1 * (PI * x[1]).sin(), 0.0, 0.0]);
        assert!(flow_map(&s, DEFAULT_SIGMA).unwrap().e[2].max_abs() > 1e-3);
    }

    #[test]
    fn sigma_violation_is_reported() {
        let g = Grid::new(2, 16).unwrap();
        let steep = series_const(&g, 0.5, 11, |x| [3.0 * (PI * x[1]).sin(), 0.0, 0.0]);
        match flow_map(&steep, DEFAULT_SIGMA) {
            Err(Error::SigmaViolation { t, observed, .. }) => {
                assert!(t > 0.0 && t < 0.5);
                assert!(observed >= DEFAULT_SIGMA);
            }
            other => panic!("expected sigma violation, got {other:?}"),
        }
    }

    #[test]
    fn pull_push_round_trip() {
        let g = Grid::new(2, 32).unwrap();
        let u = series_const(&g, 0.1, 3, |x| {
            [0.4 * (PI * x[1]).sin(), 0.3 * (PI * (x[0] + x[1])).cos(), 0.0]
        });
        let map = flow_map(&u, DEFAULT_SIGMA).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).sin() + 0.2);
        let back = push_forward(&pull_back(&f, &map, 2), &map, 2).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-8);
        let c = Field::constant(&g, Rank::Scalar, &[1.7]);
        assert!(pull_back(&c, &map, 2).sub(&c).max_abs() < 1e-13);
        assert!(push_forward(&c, &map, 2).unwrap().sub(&c).max_abs() < 1e-13);
        let id = LagrangianMap::identity(&g, vec![0.0, 0.1]);
        assert!(pull_back(&f, &id, 1).sub(&f).max_abs() < 1e-13);
    }

    #[test]
    fn transformed_rhs_vanishes_without_geometry() {
        let g = Grid::new(2, 16).unwrap();
        let m = ViscosityModel::power_law(1.0, 1.8, 1.0);
        let pr = PressureLaw::Isothermal { a: 1.0 };
        let e0 = Field::zeros(&g, Rank::Tensor);
        let rho = Field::scalar_from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
        let u = Field::vector_from_fn(&g, |x| [0.1 * (PI * x[1]).sin(), 0.05 * (PI * x[0]).sin(), 0.0]);
        let (gg, f) = transformed_rhs(&m, &pr, &e0, &rho, &u).unwrap();
        assert!(gg.max_abs() < 1e-14);
        assert!(f.max_abs() < 1e-11);
    }

    #[test]
    fn transformed_rhs_is_second_order_in_amplitude() {
        let g = Grid::new(2, 16).unwrap();
        let m = ViscosityModel::newtonian(1.0, 1.0);
        let pr = PressureLaw::Isothermal { a: 1.0 };
        let rho = Field::constant(&g, Rank::Scalar, &[1.0]);
        let norm = |eps: f64| {
            let w = series_const(&g, 0.1, 3, |x| [eps * (PI * x[1]).sin(), eps * (PI * x[0]).cos(), 0.0]);
            let map = flow_map_lagrangian(&w, DEFAULT_SIGMA).unwrap();
            let (_, f) = transformed_rhs(&m, &pr, &map.e[2], &rho, &w.values[2]).unwrap();
            f.max_abs()
        };
        let (a, b) = (norm(0.02), norm(0.01));
        assert!(((a / b).log2() - 2.0).abs() < 0.05, "ratio {}", a / b);
    }

    #[test]
    fn newtonian_expanded_form_matches() {
        let g = Grid::new(2, 32).unwrap();
        let (mu0, lam0) = (0.7, 0.4);
        let m = ViscosityModel::newtonian(mu0, lam0);
        let pr = PressureLaw::Polytropic { a: 1.0, gamma: 1.4 };
        let w = series_const(&g, 0.1, 3, |x| [0.2 * (PI * x[1]).sin(), 0.1 * (PI * x[0]).cos(), 0.0]);
        let map = flow_map_lagrangian(&w, DEFAULT_SIGMA).unwrap();
        let e = &map.e[2];
        let u = &w.values[2];
        let rho = Field::scalar_from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).sin());
        let (_, f) = transformed_rhs(&m, &pr, e, &rho, u).unwrap();

        // Expanded: 𝒮̃ − 𝒮(𝔻ũ) = −2μ₀ sym(∇ũE)ᴰ − λ₀ tr(∇ũE) I for Newtonian laws.
        let gue = u.gradient().mat_mul(e);
        let corr = Field::tensor_from_fn(&g, |p| {
            let b = gue.mat_at(p);
            b.sym().dev().scale(-2.0 * mu0) - Mat::identity(2).scale(lam0 * b.trace())
        });
        let st = Field::tensor_from_fn(&g, |p| {
            let a = u.gradient().mat_at(p);
            let b = gue.mat_at(p);
            let gc = a.sym().dev() - b.sym().dev();
            gc.scale(2.0 * mu0) + Mat::identity(2).scale(lam0 * (a.trace() - b.trace()))
        });
        let grad_rho = rho.gradient();
        let expanded = Field::vector_from_fn(&g, |_| [0.0; 3]);
        let mut expanded = expanded.add(&corr.divergence());
        let sg: Vec<Field> = (0..2).map(|k| st.derivative(k, 1)).collect();
        for p in 0..g.len() {
            let em = e.mat_at(p);
            let pp = pr.prime(rho.comp(0)[p]);
            let mut v = expanded.vec_at(p);
            for i in 0..2 {
                for j in 0..2 {
                    v[i] += pp * grad_rho.comp(j)[p] * em[(j, i)];
                    for k in 0..2 {
                        v[i] -= sg[k].comp(i * 2 + j)[p] * em[(k, j)];
                    }
                }
            }
            expanded.set_vec(p, &v);
        }
        assert!(f.sub(&expanded.dealiased()).max_abs() < 1e-10);
    }

    #[test]
    fn geometric_terms_match_eulerian_chain_rule() {
        // For any map X, (div_x 𝒮(𝔻_x u))∘X = div 𝒮̃ − Σ ∂_k𝒮̃_ij E_kj with ũ = u∘X.
        let g = Grid::new(2, 48).unwrap();
        let m = ViscosityModel::power_law(1.0, 1.8, 0.5);
        let pr = PressureLaw::Isothermal { a: 1.0 };
        let drift = series_const(&g, 0.1, 3, |x| [0.3 * (PI * x[1]).sin(), 0.2 * (PI * x[0]).sin(), 0.0]);
        let map = flow_map(&drift, DEFAULT_SIGMA).unwrap();
        let u = Field::vector_from_fn(&g, |x| [0.2 * (PI * x[1]).cos(), 0.1 * (PI * (x[0] - x[1])).sin(), 0.0]);
        let u_t = pull_back(&u, &map, 2);
        let rho = Field::constant(&g, Rank::Scalar, &[1.0]);
        let (_, f) = transformed_rhs(&m, &pr, &map.e[2], &rho, &u_t).unwrap();
        let geom = f.add(&constitutive::stress_divergence_direct(&m, &u_t).unwrap());
        let euler = pull_back(&constitutive::stress_divergence_direct(&m, &u).unwrap(), &map, 2);
        let err = geom.sub(&euler).max_abs() / euler.max_abs();
        assert!(err < 1e-8, "relative mismatch {err:e}");
    }

    #[test]
    fn linearized_rhs_rest_and_rigid_cases() {
        let g = Grid::new(2, 16).unwrap();
        let m = ViscosityModel::newtonian(1.0, 1.0);
        let pr = PressureLaw::Isothermal { a: 2.0 };
        let rho0 = Field::constant(&g, Rank::Scalar, &[1.3]);
        let u0 = Field::constant(&g, Rank::Vector, &[0.2, -0.1]);
        let bg = Background::new(m.clone(), pr, &rho0, &u0).unwrap();
        let zero_s = Field::zeros(&g, Rank::Scalar);
        let zero_v = Field::zeros(&g, Rank::Vector);
        let e0 = Field::zeros(&g, Rank::Tensor);
        let (gg, f) = linearized_rhs(&bg, &e0, &zero_s, &u0, &zero_v).unwrap();
        assert!(gg.max_abs() < 1e-14 && f.max_abs() < 1e-14);

        // non-rigid u₀: 𝒢 = −ρ* div u₀
        let u0 = Field::vector_from_fn(&g, |x| [0.1 * (PI * x[0]).sin(), 0.0, 0.0]);
        let bg = Background::new(m.clone(), pr, &rho0, &u0).unwrap();
        let (gg, _) = linearized_rhs(&bg, &e0, &zero_s, &u0, &zero_v).unwrap();
        let expect = u0.divergence().scale(-1.3);
        assert!(gg.sub(&expect).max_abs() < 1e-13);

        let bad = Field::constant(&g, Rank::Scalar, &[-2.0]);
        assert!(matches!(
            linearized_rhs(&bg, &e0, &bad, &u0, &zero_v),
            Err(Error::NonPositiveDensity { .. })
        ));
    }

    #[test]
    fn newtonian_linearization_is_exact() {
        // div𝒮(𝔻ũ) − 𝒜(𝔻u₀)(𝔻(ũ−u₀)) = div𝒮(𝔻u₀) for linear laws
        let g = Grid::new(2, 16).unwrap();
        let m = ViscosityModel::newtonian(0.9, 0.6);
        let u0 = Field::vector_from_fn(&g, |x| [0.1 * (PI * x[1]).sin(), 0.2 * (PI * x[0]).cos(), 0.0]);
        let u = Field::vector_from_fn(&g, |x| [0.3 * (2.0 * PI * x[0]).sin(), 0.1 * (PI * x[1]).sin(), 0.0]);
        let a0 = QuasilinearOperator::frozen_at(&m, &u0).unwrap();
        let lhs = constitutive::stress_divergence(&m, &u).unwrap().sub(&a0.apply(&u.sub(&u0)));
        let rhs = constitutive::stress_divergence_direct(&m, &u0).unwrap();
        assert!(lhs.sub(&rhs).max_abs() < 1e-11);
    }
}
