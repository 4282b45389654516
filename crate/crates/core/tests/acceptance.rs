//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Run with `cargo test -p nnflow --test acceptance -- --nocapture --test-threads 1`.

use nalgebra::{Matrix2, Vector2};
use nnflow::constitutive::{
    coefficient_tensor, ellipticity_constant, quadratic_form, BulkLaw, PressureLaw, ShearLaw, ViscosityModel,
};
use nnflow::corpus;
use nnflow::fields::{lq_norm, mixed_norm, Field, Grid, NormSpec, Rank, TimeSeries};
use nnflow::fixedpoint::{contraction_study, residual_check, solve_nonlinear, ProblemSetup, DEFAULT_TOL};
use nnflow::lagrangian::{flow_map, pull_back, push_forward, Background, LagrangianMap, DEFAULT_SIGMA};
use nnflow::linsolve::{time_march, variable_resolvent_solve, ConstantResolvent, LinearOperatorData};
use nnflow::oracle::{rk4_march, EulerianState};
use nnflow::symbol::{
    multiplier_derivative_check, resolvent_refinement, sector_inequality_check, xi_grid, MultiplierKind, Sector,
};
use nnflow::tensor::Mat;
use nnflow::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn slope(hs: &[f64], es: &[f64]) -> f64 {
    // least-squares slope of log e against log h
    let n = hs.len() as f64;
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = es.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_01_constitutive_algebra() {
    let start = Instant::now();
    let models = [
        ViscosityModel::power_law(1.0, 1.8, 0.5),
        ViscosityModel::new(ShearLaw::PowerLaw { mu0: 0.7, p: 2.5 }, BulkLaw::Polynomial { coeffs: vec![0.6, 0.2, 0.1] }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_form: f64 = 0.0;
    let mut worst_sym = [0.0f64; 4];
    for i in 0..10_000 {
        let m = &models[i % 2];
        let d = 2 + i % 2;
        let dv: Vec<f64> = (0..d * d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut dm = Mat::from_rows(d, &dv);
        dm = dm.sym();
        let xv: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xi = Mat::from_rows(d, &xv).sym();
        let a = coefficient_tensor(m, &dm).unwrap();
        let direct = a.contract(&xi);
        let form = quadratic_form(m, &dm, &xi).unwrap();
        worst_form = worst_form.max((direct - form).abs() / direct.abs().max(1e-300));
        for (w, s) in worst_sym.iter_mut().zip(a.symmetry_defects()) {
            *w = w.max(s);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_form <= 1e-12 && worst_sym.iter().all(|&s| s == 0.0) && secs < 5.0;
    verdict(
        1,
        "constitutive algebra",
        pass,
        format!(
            "form rel err {worst_form:.2e}; symmetry defects [a_kj^lm, a^jk_lm, a^jm_lk, a^lk_jm] = {}; {secs:.2} s",
            sci(&worst_sym)
        ),
    );
}

#[test]
fn criterion_02_ellipticity_gate() {
    let newt = ellipticity_constant(&ViscosityModel::newtonian(1.0, 1.0), 1.0, 1.0, 1001).unwrap();
    let recip = ViscosityModel::new(ShearLaw::Reciprocal { mu0: 1.0 }, BulkLaw::Constant { lambda0: 1.0 });
    let rejected = ellipticity_constant(&recip, 1.0, 1.0, 1001);
    let (rej_ok, s) = match rejected {
        Err(Error::Ellipticity { s, .. }) => (s == 1.0, s),
        _ => (false, f64::NAN),
    };
    let pass = (newt.c_el - 1.0).abs() < 1e-15 && rej_ok;
    verdict(2, "ellipticity gate", pass, format!("newtonian C_el = {}, counterexample minimizer s = {s}", newt.c_el));
}

#[test]
fn criterion_03_spectral_infrastructure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round: f64 = 0.0;
    let mut deriv: f64 = 0.0;
    let mut one: f64 = 0.0;
    for d in [2, 3] {
        let g = Grid::new(d, 16).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = Field::from_components(&g, Rank::Scalar, vec![vals]).unwrap();
        let back = Field::from_spectrum(&g, Rank::Scalar, f.spectrum());
        round = round.max(back.sub(&f).max_abs() / f.max_abs());
        for k in 1..=5 {
            let kf = k as f64;
            let m = Field::scalar_from_fn(&g, |x| (PI * kf * x[d - 1]).sin());
            let exact = Field::scalar_from_fn(&g, |x| PI * kf * (PI * kf * x[d - 1]).cos());
            deriv = deriv.max(m.derivative(d - 1, 1).sub(&exact).max_abs() / (PI * kf));
        }
        let c = Field::constant(&g, Rank::Scalar, &[1.0]);
        for q in [1.0, 2.0, 3.5, 4.0, 8.0] {
            let expect = 2f64.powf(d as f64 / q);
            one = one.max((lq_norm(&c, q) - expect).abs() / expect);
        }
    }
    let pass = round <= 1e-13 && deriv <= 1e-12 && one <= 1e-13;
    verdict(3, "spectral infrastructure", pass, format!("round trip {round:.2e}, derivative {deriv:.2e}, ‖1‖_q {one:.2e}"));
}

fn series(g: &Grid, t: f64, n_t: usize, f: impl Fn(&[f64]) -> [f64; 3]) -> TimeSeries {
    TimeSeries::constant(t, n_t, &Field::vector_from_fn(g, f)).unwrap()
}

#[test]
fn criterion_04_lagrangian() {
    let g = Grid::new(2, 64).unwrap();
    // constant velocity: X = y + t·c
    let c = [0.3, -0.2];
    let map = flow_map(&series(&g, 0.2, 5, |_| [c[0], c[1], 0.0]), DEFAULT_SIGMA).unwrap();
    let mut const_err: f64 = 0.0;
    for (i, &t) in map.times.iter().enumerate() {
        for p in 0..g.len() {
            let y = g.point(p);
            let x = [map.displacement[i].comp(0)[p], map.displacement[i].comp(1)[p]];
            const_err = const_err.max((x[0] - t * c[0]).abs()).max((x[1] - t * c[1]).abs());
            let _ = y;
        }
    }
    let u = series(&g, 0.1, 3, |x| [0.4 * (PI * x[1]).sin(), 0.3 * (PI * (x[0] + x[1])).cos(), 0.0]);
    let map = flow_map(&u, DEFAULT_SIGMA).unwrap();
    let f = Field::scalar_from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).sin() + 0.2);
    let back = push_forward(&pull_back(&f, &map, 2), &map, 2).unwrap();
    let round = back.sub(&f).max_abs();
    let steep = series(&Grid::new(2, 16).unwrap(), 0.5, 11, |x| [3.0 * (PI * x[1]).sin(), 0.0, 0.0]);
    let detected = matches!(flow_map(&steep, DEFAULT_SIGMA), Err(Error::SigmaViolation { .. }));
    let id_ok = LagrangianMap::identity(&g, vec![0.0]).e_bound_ratio() == 0.0;
    let pass = const_err < 1e-14 && round <= 1e-8 && detected && id_ok;
    verdict(
        4,
        "lagrangian correctness",
        pass,
        format!("constant-velocity error {const_err:.2e}, round trip {round:.2e}, σ violation detected: {detected}"),
    );
}

#[test]
fn criterion_05_symbol_bench() {
    let sector = Sector::new(PI / 4.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lambdas: Vec<Complex64> = (0..1000).map(|_| sector.sample(&mut rng)).collect();
    let xs: Vec<f64> = (0..100).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 99.0)).collect();
    let chk = sector_inequality_check(&sector, &lambdas, &xs);
    let a = coefficient_tensor(&ViscosityModel::newtonian(1.0, 1.0), &Mat::zeros(2)).unwrap();
    let a_pl = coefficient_tensor(
        &ViscosityModel::power_law(1.0, 1.8, 0.5),
        &Mat::from_rows(2, &[0.2, 0.1, 0.1, -0.3]),
    )
    .unwrap();
    let r1 = resolvent_refinement(&a, 1.0, 1.0, &sector, 8, 8, 10, 4).unwrap();
    let r2 = resolvent_refinement(&a_pl, 1.2, 0.8, &sector, 8, 8, 10, 4).unwrap();
    let lam_grid = sector.lambda_grid(6, 8);
    let xis = xi_grid(2, 8, 4, 1e-2, 1e2);
    let mut worst_mult: f64 = 0.0;
    let mut all_finite = true;
    for kind in MultiplierKind::all(2) {
        for alpha in [[0u32, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            let m = multiplier_derivative_check(&a, 1.0, 1.0, kind, &alpha, &lam_grid, &xis).unwrap();
            all_finite &= m.c_alpha.is_finite();
            worst_mult = worst_mult.max(m.relative_change);
        }
    }
    let pass = chk.samples >= 100_000
        && chk.violations == 0
        && r1.fine.is_finite()
        && r2.fine.is_finite()
        && r1.relative_change < 0.1
        && r2.relative_change < 0.1
        && all_finite
        && worst_mult < 0.15;
    verdict(
        5,
        "symbol bench",
        pass,
        format!(
            "{} sector samples, {} violations; resolvent C {:.4} / {:.4} change {:.2e} / {:.2e}; multiplier step change {worst_mult:.2e}",
            chk.samples, chk.violations, r1.fine, r2.fine, r1.relative_change, r2.relative_change
        ),
    );
}

fn newtonian_op(g: &Grid, eps: f64) -> LinearOperatorData {
    let m = ViscosityModel::newtonian(1.0, 0.5);
    let pr = PressureLaw::Isothermal { a: 1.0 };
    let rho0 = Field::scalar_from_fn(g, |x| 1.0 + eps * (PI * x[0]).cos());
    LinearOperatorData::new(&Background::new(m, pr, &rho0, &Field::zeros(g, Rank::Vector)).unwrap()).unwrap()
}

fn dense_mode_error() -> f64 {
    let g = Grid::new(2, 8).unwrap();
    let m = ViscosityModel::power_law(1.0, 1.7, 0.4);
    let a = coefficient_tensor(&m, &Mat::from_rows(2, &[0.3, 0.1, 0.1, -0.2])).unwrap();
    let lam = Complex64::new(2.0, 1.5);
    let (g1, g2) = (1.3, 0.8);
    let cr = ConstantResolvent::new(&g, &a, g1, g2, lam).unwrap();
    let k = g.flat_index(&[2, 7, 0]);
    let xi = g.xi(k);
    let f = [Complex64::new(0.4, -0.2), Complex64::new(-1.0, 0.3)];
    let mut spec = vec![vec![Complex64::new(0.0, 0.0); g.len()]; 2];
    spec[0][k] = f[0];
    spec[1][k] = f[1];
    let out = cr.solve_spectrum(&spec);
    let mut mm = Matrix2::<Complex64>::identity() * lam;
    for j in 0..2 {
        for kk in 0..2 {
            let mut e = 0.0;
            for l in 0..2 {
                for q in 0..2 {
                    e += a.get(j, kk, l, q) * xi[l] * xi[q];
                }
            }
            mm[(j, kk)] += Complex64::new(e / g1, 0.0) + xi[j] * xi[kk] * g2 / (g1 * lam);
        }
    }
    let sol = mm.try_inverse().unwrap() * Vector2::new(f[0], f[1]);
    ((out[0][k] - sol[0]).norm().max((out[1][k] - sol[1]).norm())) / sol.norm()
}

fn march_error(n_t: usize) -> f64 {
    let g = Grid::new(2, 8).unwrap();
    let op = newtonian_op(&g, 0.0);
    let t = 0.4;
    let gs = TimeSeries::constant(t, n_t + 1, &Field::scalar_from_fn(&g, |x| (PI * x[0]).cos())).unwrap();
    let fs = TimeSeries::constant(t, n_t + 1, &Field::zeros(&g, Rank::Vector)).unwrap();
    let r = time_march(&op, &gs, &fs).unwrap();
    // θ = a cos(πy₁), v₁ = b sin(πy₁): y' = Ay + (1, 0)
    let c = 2.0 * 1.0 * 0.5 + 0.5;
    let am = Matrix2::new(0.0, -PI, PI, -c * PI * PI);
    let exact = am.try_inverse().unwrap() * ((am * t).exp() - Matrix2::identity()) * Vector2::new(1.0, 0.0);
    let th = Field::scalar_from_fn(&g, |x| exact[0] * (PI * x[0]).cos());
    let u = Field::vector_from_fn(&g, |x| [exact[1] * (PI * x[0]).sin(), 0.0, 0.0]);
    r.theta.values[n_t].sub(&th).max_abs().max(r.u.values[n_t].sub(&u).max_abs())
}

#[test]
fn criterion_06_linear_solver() {
    let dense = dense_mode_error();
    let steps = [10usize, 20, 40, 80, 160];
    let errs: Vec<f64> = steps.iter().map(|&n| march_error(n)).collect();
    let slopes: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = dense <= 1e-12 && slopes.iter().all(|s| (s - 1.0).abs() <= 0.15);
    verdict(6, "linear solver", pass, format!("dense mode error {dense:.2e}, implicit Euler slopes {slopes:.3?}"));
}

#[test]
fn criterion_07_neumann_correction() {
    let g = Grid::new(2, 16).unwrap();
    let gg = Field::scalar_from_fn(&g, |x| (PI * x[1]).sin() * 0.3);
    let ff = Field::vector_from_fn(&g, |x| [(PI * (x[0] + x[1])).cos(), 0.5 * (PI * x[0]).sin(), 0.0]);
    let lam = 4.0;
    let mut per_eps = Vec::new();
    let mut worst_res: f64 = 0.0;
    for eps in [0.05, 0.1, 0.2] {
        let op = newtonian_op(&g, eps);
        let sol = variable_resolvent_solve(&op, &gg, &ff, lam).unwrap();
        let ratio = sol.report.ratios[1..].iter().cloned().fold(0.0, f64::max);
        per_eps.push(ratio / eps);
        // independent residual through the Newtonian stress
        let m = ViscosityModel::newtonian(1.0, 0.5);
        let visc = nnflow::constitutive::stress(&m, &sol.v.sym_gradient()).unwrap().divergence();
        let gt = sol.theta.gradient();
        let mut r = Field::zeros(&g, Rank::Vector);
        for p in 0..g.len() {
            let rho = op.rho0.comp(0)[p];
            let pp = op.pi_prime.comp(0)[p];
            let v: Vec<f64> = (0..2)
                .map(|c| lam * sol.v.comp(c)[p] - visc.comp(c)[p] / rho + pp / rho * gt.comp(c)[p] - ff.comp(c)[p])
                .collect();
            r.set_vec(p, &v);
        }
        let mass = sol.theta.scale(lam).add(&sol.v.divergence().mul_scalar(&op.rho0)).sub(&gg);
        worst_res = worst_res.max(lq_norm(&r, 2.0) / lq_norm(&ff, 2.0)).max(mass.max_abs() / gg.max_abs());
    }
    let spread = per_eps.iter().cloned().fold(0.0, f64::max) / per_eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = spread <= 2.0 && worst_res <= 1e-9;
    verdict(
        7,
        "neumann correction",
        pass,
        format!("ratio/ε = {per_eps:.4?} (spread {spread:.3}), residual {worst_res:.2e}"),
    );
}

#[test]
fn criterion_08_contraction() {
    let g = Grid::new(2, 32).unwrap();
    let ts = [0.1, 0.05, 0.025, 0.0125];
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [corpus::newtonian(&g, 0.1), corpus::power_law(&g, 0.1)] {
        let s = ProblemSetup::new(p.model.clone(), p.pressure, &p.rho0, &p.u0, 0.1, 11).unwrap();
        let rows = contraction_study(&s, 4, &ts, 7).unwrap();
        let f: Vec<f64> = rows.iter().map(|r| r.factor).collect();
        pass &= f[3] < 1.0 && f.windows(2).all(|w| w[1] < w[0]);
        detail.push(format!("{} [{}]", p.name, sci(&f)));
    }
    verdict(8, "contraction of Φ", pass, detail.join("; "));
}

#[test]
fn criterion_09_cross_validation() {
    let g = Grid::new(2, 32).unwrap();
    let p = corpus::newtonian(&g, 0.01);
    let n_t = 21;
    let s = ProblemSetup::new(p.model.clone(), p.pressure, &p.rho0, &p.u0, 0.1, n_t).unwrap();
    let sol = solve_nonlinear(&s, 1e-10, 50).unwrap();
    let dt = sol.t_final / (n_t - 1) as f64;
    let steps = 400;
    let st = EulerianState::new(p.rho0.clone(), p.u0.clone(), 0.0).unwrap();
    let tr = rk4_march(&p.model, &p.pressure, &st, sol.t_final, steps, None).unwrap();
    let stride = steps / (n_t - 1);
    let pick = |v: &[Field]| TimeSeries::new(sol.t_final, (0..n_t).map(|i| v[i * stride].clone()).collect()).unwrap();
    let (rr, ur) = (pick(&tr.rho.values), pick(&tr.u.values));
    let l2 = NormSpec::new(2.0, 2.0, 0);
    let diff = (mixed_norm(&sol.rho.sub(&rr), l2).unwrap().powi(2) + mixed_norm(&sol.u.sub(&ur), l2).unwrap().powi(2)).sqrt();
    // relative to the reference deviation from the mean state
    let mean = Field::constant(&g, Rank::Scalar, &[p.rho0.mean(0)]);
    let size = (mixed_norm(&rr.sub_field(&mean), l2).unwrap().powi(2) + mixed_norm(&ur, l2).unwrap().powi(2)).sqrt();
    let rel = diff / size;
    let mass: Vec<f64> = sol.rho.values.iter().map(|r| r.integral(0)).collect();
    let drift = mass.iter().map(|m| (m - mass[0]).abs() / mass[0]).fold(0.0, f64::max);
    let bound = 5e-3f64.max(10.0 * dt);
    let pass = rel <= bound && drift <= 1e-10 && tr.mass_drift <= 1e-10;
    verdict(
        9,
        "end-to-end cross-validation",
        pass,
        format!(
            "relative L² difference {rel:.3e} (bound {bound:.1e}); mass drift fixed point {drift:.2e}, RK4 {:.2e}",
            tr.mass_drift
        ),
    );
}

#[test]
fn criterion_10_residual_order() {
    let levels = [(16usize, 21usize), (32, 41), (64, 81)];
    let mut dts = Vec::new();
    let mut mass = Vec::new();
    let mut mom = Vec::new();
    for (n, n_t) in levels {
        let g = Grid::new(2, n).unwrap();
        let p = corpus::newtonian(&g, 0.1);
        let s = ProblemSetup::new(p.model.clone(), p.pressure, &p.rho0, &p.u0, 0.1, n_t).unwrap();
        let sol = solve_nonlinear(&s, DEFAULT_TOL * 1e-2, 50).unwrap();
        let (a, b) = residual_check(&p.model, &p.pressure, &sol.rho, &sol.u).unwrap();
        dts.push(sol.t_final / (n_t - 1) as f64);
        mass.push(a);
        mom.push(b);
    }
    let (om, oq) = (slope(&dts, &mass), slope(&dts, &mom));
    let pass = om >= 1.0 && oq >= 1.0;
    verdict(
        10,
        "residual order",
        pass,
        format!("mass residuals [{}] order {om:.3}; momentum residuals [{}] order {oq:.3}", sci(&mass), sci(&mom)),
    );
}
