//! Named test problems on [−1,1]^d used by the tests, the acceptance suite and the CLI.

use crate::constitutive::{PressureLaw, ViscosityModel};
use crate::fields::{Field, Grid, Rank};
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: &'static str,
    pub model: ViscosityModel,
    pub pressure: PressureLaw,
    pub rho0: Field,
    pub u0: Field,
}

pub const NAMES: [&str; 3] = ["rest", "newtonian", "power-law"];

/// ρ₀ = 1 + (ε/2)cos(πy₁)cos(πy₂), u₀ = ε(sin(πy₂), ½cos(πy₁), ·).
pub fn initial_data(grid: &Grid, eps: f64) -> (Field, Field) {
    let rho0 = Field::scalar_from_fn(grid, |x| 1.0 + 0.5 * eps * (PI * x[0]).cos() * (PI * x[1]).cos());
    let d = grid.d();
    let u0 = Field::vector_from_fn(grid, |x| {
        let third = if d == 3 { 0.5 * eps * (PI * x[0]).sin() } else { 0.0 };
        [eps * (PI * x[1]).sin(), 0.5 * eps * (PI * x[0]).cos(), third]
    });
    (rho0, u0)
}

pub fn rest(grid: &Grid) -> Problem {
    Problem {
        name: "rest",
        model: ViscosityModel::newtonian(1.0, 1.0),
        pressure: PressureLaw::Isothermal { a: 1.0 },
        rho0: Field::constant(grid, Rank::Scalar, &[1.0]),
        u0: Field::zeros(grid, Rank::Vector),
    }
}

pub fn newtonian(grid: &Grid, eps: f64) -> Problem {
    let (rho0, u0) = initial_data(grid, eps);
    Problem {
        name: "newtonian",
        model: ViscosityModel::newtonian(0.5, 0.25),
        pressure: PressureLaw::Isothermal { a: 1.0 },
        rho0,
        u0,
    }
}

/// Shear-thinning μ(s) = ½(1+s)^{−0.1} with polytropic pressure.
pub fn power_law(grid: &Grid, eps: f64) -> Problem {
    let (rho0, u0) = initial_data(grid, eps);
    Problem {
        name: "power-law",
        model: ViscosityModel::power_law(0.5, 1.8, 0.25),
        pressure: PressureLaw::Polytropic { a: 1.0, gamma: 1.4 },
        rho0,
        u0,
    }
}

pub fn by_name(name: &str, grid: &Grid, eps: f64) -> Option<Problem> {
    match name {
        "rest" => Some(rest(grid)),
        "newtonian" => Some(newtonian(grid, eps)),
        "power-law" => Some(power_law(grid, eps)),
        _ => None,
    }
}
