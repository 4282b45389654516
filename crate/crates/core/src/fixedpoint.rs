//! The solution map Φ(ϑ, w) = (θ, ũ) of the linearized Lagrangian system, its measured
//! contraction factor and the fixed-point iteration with the map back to Eulerian variables.

use crate::constitutive::{self, PressureLaw, ViscosityModel};
use crate::error::{Error, Result};
use crate::fields::{gauge, gauge_difference, mixed_norm, Field, Grid, NormSpec, Rank, TimeSeries};
use crate::lagrangian::{self, linearized_rhs, Background, LagrangianMap};
use crate::linsolve::{time_march, LinearOperatorData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

pub const DEFAULT_T: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub bg: Background,
    pub op: LinearOperatorData,
    pub p: f64,
    pub q: f64,
    pub t_final: f64,
    /// time samples including t = 0
    pub n_t: usize,
    pub sigma: f64,
}

impl ProblemSetup {
    pub fn new(
        model: ViscosityModel,
        pressure: PressureLaw,
        rho0: &Field,
        u0: &Field,
        t_final: f64,
        n_t: usize,
    ) -> Result<Self> {
        if n_t < 2 {
            return Err(Error::TooFewSamples { needed: 2, found: n_t });
        }
        if !(t_final > 0.0) {
            return Err(Error::Degenerate(format!("T must be positive, got {t_final}")));
        }
        let bg = Background::new(model, pressure, rho0, u0)?;
        let op = LinearOperatorData::new(&bg)?;
        ProblemSetup {
            bg,
            op,
            p: 2.0,
            q: 4.0,
            t_final,
            n_t,
            sigma: lagrangian::DEFAULT_SIGMA,
        }
        .with_exponents(2.0, 4.0)
    }

    pub fn with_exponents(mut self, p: f64, q: f64) -> Result<Self> {
        let d = self.grid().d() as f64;
        if !(p > 1.0) || !(q > d) {
            return Err(Error::Degenerate(format!("need p > 1 and q > d, got p={p}, q={q}")));
        }
        self.p = p;
        self.q = q;
        Ok(self)
    }

    pub fn with_t_final(&self, t_final: f64) -> Self {
        ProblemSetup {
            t_final,
            ..self.clone()
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.bg.grid()
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.n_t - 1) as f64
    }

    /// (ϑ, w) = (0, u₀) at every time.
    pub fn initial_state(&self) -> FixedPointState {
        let theta = TimeSeries::constant(self.t_final, self.n_t, &Field::zeros(self.grid(), Rank::Scalar)).unwrap();
        let w = TimeSeries::constant(self.t_final, self.n_t, &self.bg.u0).unwrap();
        FixedPointState {
            theta,
            w,
            gauge: 0.0,
            iteration: 0,
        }
    }

    pub fn gauge(&self, theta: &TimeSeries, w: &TimeSeries) -> Result<f64> {
        gauge(theta, w, &self.bg.u0, self.p, self.q)
    }

    pub fn difference(&self, a: &FixedPointState, b: &FixedPointState) -> Result<f64> {
        gauge_difference(&a.theta, &a.w, &b.theta, &b.w, self.p, self.q)
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointState {
    pub theta: TimeSeries,
    pub w: TimeSeries,
    /// [ϑ, w]_{T,M}
    pub gauge: f64,
    pub iteration: usize,
}

impl FixedPointState {
    pub fn new(setup: &ProblemSetup, theta: TimeSeries, w: TimeSeries) -> Result<Self> {
        let gauge = setup.gauge(&theta, &w)?;
        Ok(FixedPointState {
            theta,
            w,
            gauge,
            iteration: 0,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct PhiTelemetry {
    pub richardson_iterations: usize,
    pub max_substeps: usize,
    pub sigma_observed: f64,
}

/// ∂_t by backward differences (forward at t = 0), matching implicit Euler.
fn backward_derivative(s: &TimeSeries) -> TimeSeries {
    let dt = s.dt();
    let v = &s.values;
    let mut out = Vec::with_capacity(v.len());
    out.push(v[1].sub(&v[0]).scale(1.0 / dt));
    for i in 1..v.len() {
        out.push(v[i].sub(&v[i - 1]).scale(1.0 / dt));
    }
    TimeSeries {
        times: s.times.clone(),
        values: out,
    }
}

/// Φ(ϑ, w): right-hand sides from the flow map of w, then the linear march.
pub fn phi_map(setup: &ProblemSetup, state: &FixedPointState) -> Result<(FixedPointState, PhiTelemetry)> {
    let map = lagrangian::flow_map_lagrangian(&state.w, setup.sigma)?;
    let dw = backward_derivative(&state.w);
    let mut gs = Vec::with_capacity(setup.n_t);
    let mut fs = Vec::with_capacity(setup.n_t);
    for i in 0..state.w.len() {
        let (g, f) = linearized_rhs(&setup.bg, &map.e[i], &state.theta.values[i], &state.w.values[i], &dw.values[i])?;
        gs.push(g);
        fs.push(f);
    }
    let t = state.w.t_final();
    let march = time_march(&setup.op, &TimeSeries::new(t, gs)?, &TimeSeries::new(t, fs)?)?;
    let gauge = setup.gauge(&march.theta, &march.u)?;
    let out = FixedPointState {
        theta: march.theta,
        w: march.u,
        gauge,
        iteration: state.iteration + 1,
    };
    let tel = PhiTelemetry {
        richardson_iterations: march.iterations.iter().sum(),
        max_substeps: march.substeps.iter().copied().max().unwrap_or(1),
        sigma_observed: map.sigma_observed,
    };
    Ok((out, tel))
}

/// sin²(πs/2) on s = t/T: vanishes with its derivative at t = 0.
fn bump(s: f64) -> f64 {
    (0.5 * PI * s).sin().powi(2)
}

fn band_limited(grid: &Grid, rng: &mut ChaCha8Rng, kmax: i64) -> Field {
    let d = grid.d();
    let mut modes = Vec::new();
    let range = -kmax..=kmax;
    for k0 in range.clone() {
        for k1 in range.clone() {
            let k2s: Vec<i64> = if d == 3 { range.clone().collect() } else { vec![0] };
            for k2 in k2s {
                if (k0, k1, k2) == (0, 0, 0) {
                    continue;
                }
                let amp: f64 = rng.random_range(-1.0..1.0);
                let phase: f64 = rng.random_range(0.0..2.0 * PI);
                modes.push(([k0, k1, k2], amp, phase));
            }
        }
    }
    Field::scalar_from_fn(grid, |x| {
        modes
            .iter()
            .map(|(k, a, ph)| {
                let arg: f64 = (0..d).map(|i| PI * k[i] as f64 * x[i]).sum();
                a * (arg + ph).cos()
            })
            .sum()
    })
}

/// Random element of H_{T,M} with gauge exactly `target`: ϑ = b(t/T)R_θ, w = u₀ + b(t/T)R_w.
pub fn random_probe(setup: &ProblemSetup, target: f64, seed: u64) -> Result<FixedPointState> {
    let grid = setup.grid();
    let d = grid.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_theta = band_limited(grid, &mut rng, 2);
    let comps: Vec<Vec<f64>> = (0..d).map(|_| band_limited(grid, &mut rng, 2).into_components().remove(0)).collect();
    let r_w = Field::from_components(grid, Rank::Vector, comps)?;
    let t = setup.t_final;
    let profile: Vec<f64> = (0..setup.n_t).map(|i| bump(i as f64 / (setup.n_t - 1) as f64)).collect();
    let build = |c: f64| -> Result<FixedPointState> {
        let theta = TimeSeries::new(t, profile.iter().map(|&b| r_theta.scale(c * b)).collect())?;
        let w = TimeSeries::new(t, profile.iter().map(|&b| setup.bg.u0.axpy(c * b, &r_w)).collect())?;
        FixedPointState::new(setup, theta, w)
    };
    let unit = build(1.0)?;
    build(target / unit.gauge)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub t_final: f64,
    pub m: f64,
    pub factor: f64,
    pub pairs: usize,
}

/// Max over random pairs of [Φx¹ − Φx²]/[x¹ − x²] for each T, with M = 2·[Φ(0,u₀)] and
/// probes of gauge M/2 built from the same seeds for every T.
pub fn contraction_study(setup: &ProblemSetup, n_pairs: usize, t_list: &[f64], seed: u64) -> Result<Vec<ContractionRow>> {
    if n_pairs < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n_pairs });
    }
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let s = setup.with_t_final(t);
        let (first, _) = phi_map(&s, &s.initial_state())?;
        let m = 2.0 * first.gauge;
        // M = 0 collapses the ball to the initial state: every pair is identical
        let target = 0.5 * m;
        let ratios: Vec<Result<Option<f64>>> = (0..n_pairs)
            .into_par_iter()
            .map(|k| {
                let x1 = random_probe(&s, target, seed + 2 * k as u64)?;
                let x2 = random_probe(&s, target, seed + 2 * k as u64 + 1)?;
                let den = s.difference(&x1, &x2)?;
                if den == 0.0 {
                    log::info!("contraction study: identical pair {k} skipped");
                    return Ok(None);
                }
                let (y1, _) = phi_map(&s, &x1)?;
                let (y2, _) = phi_map(&s, &x2)?;
                Ok(Some(s.difference(&y1, &y2)? / den))
            })
            .collect();
        let mut factor: f64 = 0.0;
        let mut pairs = 0;
        for r in ratios {
            if let Some(v) = r? {
                factor = factor.max(v);
                pairs += 1;
            }
        }
        log::info!("contraction study: T={t} M={m:e} factor={factor:e}");
        rows.push(ContractionRow {
            t_final: t,
            m,
            factor,
            pairs,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub gauge_difference: f64,
    /// ratio of consecutive differences (NaN for the first)
    pub factor: f64,
    pub t_final: f64,
    pub m: f64,
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub theta: TimeSeries,
    pub u_tilde: TimeSeries,
    pub rho: TimeSeries,
    pub u: TimeSeries,
    pub map: LagrangianMap,
    pub history: Vec<HistoryRow>,
    pub t_final: f64,
    pub m: f64,
    pub halvings: usize,
    pub iterations: usize,
}

struct Converged {
    state: FixedPointState,
    m: f64,
    iterations: usize,
}

fn iterate(setup: &ProblemSetup, tol: f64, max_iter: usize, history: &mut Vec<HistoryRow>) -> Result<Converged> {
    let x0 = setup.initial_state();
    let (mut x, _) = phi_map(setup, &x0)?;
    let m = 2.0 * x.gauge;
    let mut prev = setup.difference(&x, &x0)?;
    history.push(HistoryRow {
        iteration: 1,
        gauge_difference: prev,
        factor: f64::NAN,
        t_final: setup.t_final,
        m,
    });
    let mut k = 1;
    while prev >= tol {
        if k >= max_iter {
            return Err(Error::IterationCap {
                iterations: k,
                residual: prev,
            });
        }
        let (next, _) = phi_map(setup, &x)?;
        k += 1;
        if next.gauge > m {
            log::warn!("iterate {k} left the ball: gauge {:e} > M = {m:e}", next.gauge);
        }
        let diff = setup.difference(&next, &x)?;
        let factor = diff / prev;
        history.push(HistoryRow {
            iteration: k,
            gauge_difference: diff,
            factor,
            t_final: setup.t_final,
            m,
        });
        x = next;
        if !(factor < 1.0) && diff >= tol {
            return Err(Error::NonContraction {
                ratio: factor,
                iterations: k,
                lambda: num_complex::Complex64::new(1.0 / setup.dt(), 0.0),
            });
        }
        prev = diff;
    }
    Ok(Converged {
        state: x,
        m,
        iterations: k,
    })
}

/// Iterates Φ from (0, u₀) until [x^{k+1} − x^k] < tol, halving T on failure, then maps the
/// fixed point back to Eulerian variables.
pub fn solve_nonlinear(setup: &ProblemSetup, tol: f64, max_iter: usize) -> Result<NonlinearSolution> {
    let mut history = Vec::new();
    let mut t = setup.t_final;
    for halvings in 0..=MAX_HALVINGS {
        let s = setup.with_t_final(t);
        match iterate(&s, tol, max_iter, &mut history) {
            Ok(c) => {
                let (rho, u, map) = to_eulerian(&s, &c.state.theta, &c.state.w)?;
                return Ok(NonlinearSolution {
                    theta: c.state.theta,
                    u_tilde: c.state.w,
                    rho,
                    u,
                    map,
                    history,
                    t_final: t,
                    m: c.m,
                    halvings,
                    iterations: c.iterations,
                });
            }
            Err(e) => {
                log::warn!("fixed point failed at T = {t}: {e}; halving T");
                t *= 0.5;
            }
        }
    }
    Err(Error::TimeExhausted {
        halvings: MAX_HALVINGS,
        last_t: t * 2.0,
    })
}

/// ρ = (ρ₀ + θ)∘X⁻¹ and u = ũ∘X⁻¹ with X the flow map of ũ.
pub fn to_eulerian(
    setup: &ProblemSetup,
    theta: &TimeSeries,
    u_tilde: &TimeSeries,
) -> Result<(TimeSeries, TimeSeries, LagrangianMap)> {
    let map = lagrangian::flow_map_lagrangian(u_tilde, setup.sigma)?;
    let mut rho = Vec::with_capacity(theta.len());
    let mut u = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let ys = lagrangian::inverse_points(&map, i)?;
        rho.push(lagrangian::push_forward_at(&setup.bg.rho0.add(&theta.values[i]), &ys));
        u.push(lagrangian::push_forward_at(&u_tilde.values[i], &ys));
    }
    let t = theta.t_final();
    Ok((TimeSeries::new(t, rho)?, TimeSeries::new(t, u)?, map))
}

/// L²(Q_T) norms of ∂_tρ + div(ρu) and ∂_t(ρu) + div(ρu⊗u) + ∇π(ρ) − div 𝒮(𝔻u), with
/// second-order differences in time.
pub fn residual_check(
    model: &ViscosityModel,
    pressure: &PressureLaw,
    rho: &TimeSeries,
    u: &TimeSeries,
) -> Result<(f64, f64)> {
    let grid = rho.values[0].grid().clone();
    let d = grid.d();
    let mom = TimeSeries {
        times: rho.times.clone(),
        values: rho.values.iter().zip(&u.values).map(|(r, v)| v.mul_scalar(r)).collect(),
    };
    let drho = rho.time_derivative_series();
    let dmom = mom.time_derivative_series();
    let mut mass_res = Vec::with_capacity(rho.len());
    let mut mom_res = Vec::with_capacity(rho.len());
    for i in 0..rho.len() {
        let (r, v, m) = (&rho.values[i], &u.values[i], &mom.values[i]);
        mass_res.push(drho.values[i].add(&m.divergence()));
        let mut flux = Field::zeros(&grid, Rank::Tensor);
        for a in 0..d {
            for b in 0..d {
                flux.comp_mut(a * d + b).copy_from_slice(&m.comp(a).iter().zip(v.comp(b)).map(|(x, y)| x * y).collect::<Vec<_>>());
            }
        }
        let grad_p = r.map(|x| pressure.value(x)).gradient();
        let visc = constitutive::stress_divergence_direct(model, v)?;
        mom_res.push(dmom.values[i].add(&flux.divergence()).add(&grad_p).sub(&visc));
    }
    let spec = NormSpec::new(2.0, 2.0, 0);
    let t = rho.t_final();
    Ok((
        mixed_norm(&TimeSeries::new(t, mass_res)?, spec)?,
        mixed_norm(&TimeSeries::new(t, mom_res)?, spec)?,
    ))
}
