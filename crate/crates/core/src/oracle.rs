//! Explicit Eulerian reference solver
//!
//!   ∂_tρ + div(ρu) = S_ρ,   ∂_t(ρu) + div(ρu⊗u) + ∇π(ρ) = div 𝒮(𝔻u) + S_m,
//!
//! marched with classical RK4, plus exponential-trigonometric polynomials for
//! manufactured solutions.

use crate::constitutive::{self, PressureLaw, ViscosityModel};
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, Rank, TimeSeries};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct EulerianState {
    pub rho: Field,
    pub u: Field,
    pub t: f64,
}

impl EulerianState {
    pub fn new(rho: Field, u: Field, t: f64) -> Result<Self> {
        check_density(&rho)?;
        Ok(EulerianState { rho, u, t })
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral(0)
    }
}

fn check_density(rho: &Field) -> Result<()> {
    for (p, &r) in rho.comp(0).iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::NonPositiveDensity { value: r, point: p });
        }
    }
    Ok(())
}

/// Source terms (S_ρ, S_m) as a function of time.
pub type Source<'a> = &'a (dyn Fn(f64) -> (Field, Field) + Sync);

/// (∂_tρ, ∂_tu) with dρ/dt = −div(ρu) + S_ρ and
/// du/dt = (div𝒮 − ∇π − ρ(u·∇)u + S_m − uS_ρ)/ρ, dealiased.
pub fn eulerian_rhs(
    model: &ViscosityModel,
    pressure: &PressureLaw,
    state: &EulerianState,
    source: Option<Source>,
) -> Result<(Field, Field)> {
    check_density(&state.rho)?;
    let (rho, u) = (&state.rho, &state.u);
    let grid = rho.grid();
    let d = grid.d();
    let flux = u.mul_scalar(rho);
    let mut drho = flux.divergence().scale(-1.0);
    let visc = constitutive::stress_divergence(model, u)?;
    let grad_p = rho.map(|r| pressure.value(r)).gradient();
    let gu = u.gradient();
    let mut du = Field::zeros(grid, Rank::Vector);
    let src = source.map(|s| s(state.t));
    for p in 0..grid.len() {
        let r = rho.comp(0)[p];
        let uv = u.vec_at(p);
        let mut v = [0.0; 3];
        for i in 0..d {
            let mut conv = 0.0;
            for j in 0..d {
                conv += uv[j] * gu.comp(i * d + j)[p];
            }
            let mut acc = visc.comp(i)[p] - grad_p.comp(i)[p] - r * conv;
            if let Some((sr, sm)) = &src {
                acc += sm.comp(i)[p] - uv[i] * sr.comp(0)[p];
            }
            v[i] = acc / r;
        }
        du.set_vec(p, &v);
    }
    if let Some((sr, _)) = &src {
        drho = drho.add(sr);
    }
    Ok((drho.dealiased(), du.dealiased()))
}

/// Explicit step limit min(0.25 h²/ν_max, 0.8 h/(|u|_max + c_max)) with
/// ν_max = (2μ + |λ|)_max/ρ_min and c² = π'(ρ).
pub fn stable_dt(model: &ViscosityModel, pressure: &PressureLaw, state: &EulerianState) -> Result<f64> {
    let grid = state.rho.grid();
    let h = grid.spacing();
    let dfield = state.u.sym_gradient();
    let mut nu_max: f64 = 0.0;
    let mut wave: f64 = 0.0;
    let rho_min = state.rho.min_value(0);
    for p in 0..grid.len() {
        let dm = dfield.mat_at(p);
        let s = dm.dev().norm_sq();
        let r = dm.trace();
        model.check(s, r, p)?;
        nu_max = nu_max.max(2.0 * model.mu(s)[0] + model.lambda(r)[0].abs());
        let speed = state.u.vec_at(p).iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = pressure.prime(state.rho.comp(0)[p]).max(0.0).sqrt();
        wave = wave.max(speed + c);
    }
    let diff = if nu_max > 0.0 { 0.25 * h * h * rho_min / nu_max } else { f64::INFINITY };
    let adv = if wave > 0.0 { 0.8 * h / wave } else { f64::INFINITY };
    Ok(diff.min(adv))
}

pub const INSTABILITY_GROWTH: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct EulerianTrajectory {
    pub rho: TimeSeries,
    pub u: TimeSeries,
    /// max_t |∫ρ(t) − ∫ρ(0)| / ∫ρ(0)
    pub mass_drift: f64,
}

/// Classical RK4 over n_t uniform steps.
pub fn rk4_march(
    model: &ViscosityModel,
    pressure: &PressureLaw,
    state0: &EulerianState,
    t_final: f64,
    n_t: usize,
    source: Option<Source>,
) -> Result<EulerianTrajectory> {
    if n_t == 0 {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    let dt = t_final / n_t as f64;
    let limit = stable_dt(model, pressure, state0)?;
    if dt > limit {
        return Err(Error::StepTooLarge { dt, limit });
    }
    let scale0 = state0.rho.max_abs().max(state0.u.max_abs()).max(1.0);
    let mass0 = state0.mass();
    let mut rhos = vec![state0.rho.clone()];
    let mut us = vec![state0.u.clone()];
    let mut st = state0.clone();
    let mut drift: f64 = 0.0;
    let stage = |s: &EulerianState, k: &(Field, Field), c: f64, t: f64| {
        EulerianState {
            rho: s.rho.axpy(c, &k.0),
            u: s.u.axpy(c, &k.1),
            t,
        }
    };
    for n in 0..n_t {
        let t = state0.t + n as f64 * dt;
        st.t = t;
        let k1 = eulerian_rhs(model, pressure, &st, source)?;
        let k2 = eulerian_rhs(model, pressure, &stage(&st, &k1, 0.5 * dt, t + 0.5 * dt), source)?;
        let k3 = eulerian_rhs(model, pressure, &stage(&st, &k2, 0.5 * dt, t + 0.5 * dt), source)?;
        let k4 = eulerian_rhs(model, pressure, &stage(&st, &k3, dt, t + dt), source)?;
        let w = dt / 6.0;
        let rho = st
            .rho
            .axpy(w, &k1.0)
            .axpy(2.0 * w, &k2.0)
            .axpy(2.0 * w, &k3.0)
            .axpy(w, &k4.0);
        let u = st.u.axpy(w, &k1.1).axpy(2.0 * w, &k2.1).axpy(2.0 * w, &k3.1).axpy(w, &k4.1);
        let growth = rho.max_abs().max(u.max_abs()) / scale0;
        if !(growth <= INSTABILITY_GROWTH) {
            return Err(Error::Instability { t: t + dt, growth });
        }
        st = EulerianState { rho, u, t: t + dt };
        drift = drift.max((st.mass() - mass0).abs() / mass0.abs());
        rhos.push(st.rho.clone());
        us.push(st.u.clone());
    }
    Ok(EulerianTrajectory {
        rho: TimeSeries::new(t_final, rhos)?,
        u: TimeSeries::new(t_final, us)?,
        mass_drift: drift,
    })
}

/// One term c·e^{st}·e^{iπk·x}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub c: Complex64,
    pub s: Complex64,
    pub k: [i64; 3],
}

/// Finite sum of exponential-trigonometric terms; evaluation takes the real part.
/// Closed under sums, products and derivatives, which is all the manufactured
/// sources need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrigPoly {
    pub terms: Vec<ExpTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly {
            terms: vec![ExpTerm {
                c: Complex64::new(c, 0.0),
                s: Complex64::new(0.0, 0.0),
                k: [0; 3],
            }],
        }
    }

    /// amp·e^{rate·t}·cos(πk·x + phase)
    pub fn cos_mode(amp: f64, rate: f64, k: [i64; 3], phase: f64) -> Self {
        let half = Complex64::from_polar(0.5 * amp, phase);
        let s = Complex64::new(rate, 0.0);
        TrigPoly {
            terms: vec![
                ExpTerm { c: half, s, k },
                ExpTerm {
                    c: half.conj(),
                    s,
                    k: [-k[0], -k[1], -k[2]],
                },
            ],
        }
    }

    /// amp·e^{rate·t}·sin(πk·x)
    pub fn sin_mode(amp: f64, rate: f64, k: [i64; 3]) -> Self {
        TrigPoly::cos_mode(amp, rate, k, -PI / 2.0)
    }

    /// Multiplies by cos(ωt).
    pub fn times_cos_t(&self, omega: f64) -> Self {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            for sign in [1.0, -1.0] {
                out.push(ExpTerm {
                    c: t.c * 0.5,
                    s: t.s + Complex64::new(0.0, sign * omega),
                    k: t.k,
                });
            }
        }
        TrigPoly { terms: out }.simplified()
    }

    pub fn add(&self, o: &TrigPoly) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&o.terms);
        TrigPoly { terms }.simplified()
    }

    pub fn scale(&self, a: f64) -> Self {
        TrigPoly {
            terms: self.terms.iter().map(|t| ExpTerm { c: t.c * a, ..*t }).collect(),
        }
    }

    pub fn sub(&self, o: &TrigPoly) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &TrigPoly) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * o.terms.len());
        for a in &self.terms {
            for b in &o.terms {
                terms.push(ExpTerm {
                    c: a.c * b.c,
                    s: a.s + b.s,
                    k: [a.k[0] + b.k[0], a.k[1] + b.k[1], a.k[2] + b.k[2]],
                });
            }
        }
        TrigPoly { terms }.simplified()
    }

    pub fn dt(&self) -> Self {
        TrigPoly {
            terms: self.terms.iter().map(|t| ExpTerm { c: t.c * t.s, ..*t }).collect(),
        }
        .simplified()
    }

    pub fn dx(&self, axis: usize) -> Self {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .map(|t| ExpTerm {
                    c: t.c * Complex64::new(0.0, PI * t.k[axis] as f64),
                    ..*t
                })
                .collect(),
        }
        .simplified()
    }

    fn simplified(self) -> Self {
        let mut out: Vec<ExpTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            if let Some(e) = out.iter_mut().find(|e| e.k == t.k && e.s == t.s) {
                e.c += t.c;
            } else {
                out.push(t);
            }
        }
        out.retain(|t| t.c.norm() > 0.0);
        TrigPoly { terms: out }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|e| {
                let phase: f64 = (0..x.len().min(3)).map(|a| PI * e.k[a] as f64 * x[a]).sum();
                (e.c * (e.s * t).exp() * Complex64::cis(phase)).re
            })
            .sum()
    }

    /// Grid values; assembled in Fourier space when every mode is resolved.
    pub fn to_field(&self, grid: &Grid, t: f64) -> Field {
        let n = grid.n() as i64;
        let d = grid.d();
        let resolved = self
            .terms
            .iter()
            .all(|e| e.k[..d].iter().all(|&k| 2 * k.abs() < n) && e.k[d..].iter().all(|&k| k == 0));
        if !resolved {
            return Field::scalar_from_fn(grid, |x| self.eval(t, x));
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
        for e in &self.terms {
            let c = 0.5 * e.c * (e.s * t).exp();
            let pos: Vec<usize> = e.k[..d].iter().map(|&k| k.rem_euclid(n) as usize).collect();
            let neg: Vec<usize> = e.k[..d].iter().map(|&k| (-k).rem_euclid(n) as usize).collect();
            spec[grid.flat_index(&pos)] += c;
            spec[grid.flat_index(&neg)] += c.conj();
        }
        Field::from_spectrum(grid, Rank::Scalar, &[spec])
    }
}

/// Manufactured solution (ρ, u) for a Newtonian model with isothermal pressure
/// π = aρ, with the exact sources (S_ρ, S_m) built symbolically.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub d: usize,
    pub rho: TrigPoly,
    pub u: Vec<TrigPoly>,
    pub s_rho: TrigPoly,
    pub s_m: Vec<TrigPoly>,
}

impl Manufactured {
    pub fn new(rho: TrigPoly, u: Vec<TrigPoly>, mu0: f64, lambda0: f64, a: f64) -> Self {
        let d = u.len();
        let mom: Vec<TrigPoly> = u.iter().map(|ui| rho.mul(ui)).collect();
        let mut s_rho = rho.dt();
        for j in 0..d {
            s_rho = s_rho.add(&mom[j].dx(j));
        }
        let mut div_u = TrigPoly::default();
        for (j, uj) in u.iter().enumerate() {
            div_u = div_u.add(&uj.dx(j));
        }
        let bulk = mu0 * (1.0 - 2.0 / d as f64) + lambda0;
        let s_m = (0..d)
            .map(|i| {
                let mut s = mom[i].dt().add(&rho.dx(i).scale(a));
                for j in 0..d {
                    s = s.add(&mom[i].mul(&u[j]).dx(j));
                    s = s.sub(&u[i].dx(j).dx(j).scale(mu0));
                }
                s.sub(&div_u.dx(i).scale(bulk))
            })
            .collect();
        Manufactured { d, rho, u, s_rho, s_m }
    }

    pub fn state(&self, grid: &Grid, t: f64) -> EulerianState {
        let rho = self.rho.to_field(grid, t);
        let u = self.vector(grid, &self.u, t);
        EulerianState { rho, u, t }
    }

    fn vector(&self, grid: &Grid, comps: &[TrigPoly], t: f64) -> Field {
        let c = comps.iter().map(|p| p.to_field(grid, t).into_components().remove(0)).collect();
        Field::from_components(grid, Rank::Vector, c).unwrap()
    }

    pub fn source(&self, grid: &Grid, t: f64) -> (Field, Field) {
        (self.s_rho.to_field(grid, t), self.vector(grid, &self.s_m, t))
    }

    /// Exact (∂_tρ, ∂_tu) on the grid.
    pub fn time_derivative(&self, grid: &Grid, t: f64) -> (Field, Field) {
        let drho = self.rho.dt().to_field(grid, t);
        let du: Vec<TrigPoly> = self.u.iter().map(|p| p.dt()).collect();
        (drho, self.vector(grid, &du, t))
    }
}
