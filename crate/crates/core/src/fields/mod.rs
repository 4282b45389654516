//! Periodic grids, spectral differentiation and the mixed space-time norms.

mod field;
mod grid;
mod interp;
pub mod io;
mod norms;

pub use field::{Field, Rank};
pub use grid::Grid;
pub use interp::Interpolant;
pub use norms::{
    embedding_check, gauge, gauge_difference, lq_norm, lq_norm_pow, mixed_norm, multi_indices,
    sobolev_norm, v_norm, w1inf_norm, w1p_norm, NormSpec, TimeSeries,
};

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid, rank: Rank, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..rank.components(grid.d()))
            .map(|_| (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Field::from_components(grid, rank, comps).unwrap()
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = Grid::new(2, 8).unwrap();
        let f = Field::constant(&g, Rank::Scalar, &[2.5]);
        let s = &f.spectrum()[0];
        assert!((s[0] - Complex64::new(2.5, 0.0)).norm() < 1e-15);
        assert!(s[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn sine_has_two_modes() {
        let g = Grid::new(2, 16).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (PI * x[0]).sin());
        let s = &f.spectrum()[0];
        let nonzero: Vec<usize> = (0..g.len()).filter(|&i| s[i].norm() > 1e-14).collect();
        assert_eq!(nonzero.len(), 2);
        for &i in &nonzero {
            let k = g.mode(i);
            assert_eq!((k[0].abs(), k[1]), (1, 0));
            // sin(πy) = (e^{iπy} − e^{−iπy})/(2i)
            let expect = Complex64::new(0.0, -0.5 * k[0] as f64);
            assert!((s[i] - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for d in [2, 3] {
            let g = Grid::new(d, 8).unwrap();
            let f = random_field(&g, Rank::Scalar, 7);
            let back = Field::from_spectrum(&g, Rank::Scalar, f.spectrum());
            assert!(back.sub(&f).max_abs() <= 1e-13 * f.max_abs());
            let spec_l2: f64 = f.spectrum()[0].iter().map(|z| z.norm_sqr()).sum::<f64>() * g.volume();
            let l2 = lq_norm_pow(&f, 2.0);
            assert!((spec_l2 - l2).abs() <= 1e-12 * l2);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let g = Grid::new(2, 8).unwrap();
        let f = random_field(&g, Rank::Scalar, 3);
        let s = &f.spectrum()[0];
        for i in 0..g.len() {
            let idx = g.multi_index(i);
            let neg = [(g.n() - idx[0]) % g.n(), (g.n() - idx[1]) % g.n(), 0];
            assert!((s[i] - s[g.flat_index(&neg)].conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn derivatives_of_modes() {
        let g = Grid::new(2, 16).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (PI * x[0]).sin());
        let df = f.derivative(0, 1);
        let exact = Field::scalar_from_fn(&g, |x| PI * (PI * x[0]).cos());
        assert!(df.sub(&exact).max_abs() < 1e-12);
        let c = Field::constant(&g, Rank::Scalar, &[3.0]);
        assert!(c.derivative(1, 1).max_abs() < 1e-15);
        let m = Field::scalar_from_fn(&g, |x| (PI * (2.0 * x[0] - 3.0 * x[1])).cos());
        let lap = m.laplacian();
        assert!(lap.sub(&m.scale(-PI * PI * 13.0)).max_abs() < 1e-10);
    }

    #[test]
    fn nyquist_dropped_for_odd_derivative() {
        let g = Grid::new(2, 8).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (4.0 * PI * x[0]).cos());
        assert!(f.derivative(0, 1).max_abs() < 1e-13);
        let f2 = f.derivative(0, 2);
        assert!(f2.sub(&f.scale(-16.0 * PI * PI)).max_abs() < 1e-10);
    }

    #[test]
    fn derivative_commutes_with_round_trip() {
        let g = Grid::new(2, 16).unwrap();
        let f = random_field(&g, Rank::Scalar, 11);
        let a = f.derivative(1, 1);
        let b = Field::from_spectrum(&g, Rank::Scalar, f.spectrum()).derivative(1, 1);
        assert!(a.sub(&b).max_abs() < 1e-11);
    }

    #[test]
    fn norm_examples() {
        let g = Grid::new(2, 16).unwrap();
        let one = Field::constant(&g, Rank::Scalar, &[1.0]);
        for q in [2.0, 3.0, 4.0] {
            let v = sobolev_norm(&one, NormSpec::new(2.0, q, 0));
            assert!((v - 2f64.powf(2.0 / q)).abs() < 1e-13);
        }
        let s = Field::scalar_from_fn(&g, |x| (PI * x[0]).sin());
        assert!((lq_norm(&s, 2.0) - 2f64.sqrt()).abs() < 1e-13);
        let r = random_field(&g, Rank::Vector, 5);
        let spec = NormSpec::new(2.0, 4.0, 2);
        assert!((sobolev_norm(&r.scale(-3.0), spec) - 3.0 * sobolev_norm(&r, spec)).abs() < 1e-10 * sobolev_norm(&r, spec));
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(3, 1).len(), 4);
        assert_eq!(multi_indices(3, 2).len(), 10);
    }

    #[test]
    fn mixed_norm_examples() {
        let g = Grid::new(2, 8).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (PI * x[1]).cos() + 0.5);
        let spec = NormSpec::new(2.0, 4.0, 1);
        let series = TimeSeries::constant(1.0, 5, &f).unwrap();
        assert!((mixed_norm(&series, spec).unwrap() - sobolev_norm(&f, spec)).abs() < 1e-12);

        // f(t) = t·g: trapezoid error is second order in Δt
        let spec0 = spec.with_k(0);
        let gn = sobolev_norm(&f, spec0);
        let t_final: f64 = 0.7;
        let exact = gn * (t_final.powi(3) / 3.0f64).sqrt();
        let err = |m: usize| {
            let vals = (0..=m).map(|i| f.scale(t_final * i as f64 / m as f64)).collect();
            let s = TimeSeries::new(t_final, vals).unwrap();
            (mixed_norm(&s, spec0).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < 1e-3 * exact);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn gauge_vanishes_at_initial_pair() {
        let g = Grid::new(2, 8).unwrap();
        let u0 = Field::vector_from_fn(&g, |x| [(PI * x[1]).sin(), 0.0, 0.0]);
        let theta = TimeSeries::constant(0.1, 4, &Field::zeros(&g, Rank::Scalar)).unwrap();
        let w = TimeSeries::constant(0.1, 4, &u0).unwrap();
        assert_eq!(gauge(&theta, &w, &u0, 2.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn too_few_samples() {
        let g = Grid::new(2, 8).unwrap();
        let f = Field::zeros(&g, Rank::Scalar);
        assert!(TimeSeries::new(1.0, vec![f]).is_err());
    }

    #[test]
    fn embedding_ratio_zero_and_refinement() {
        let g = Grid::new(2, 8).unwrap();
        let z = TimeSeries::constant(0.1, 3, &Field::zeros(&g, Rank::Vector)).unwrap();
        assert_eq!(embedding_check(&z, 2.0, 4.0).unwrap(), 0.0);
        let ratio = |n: usize| {
            let g = Grid::new(2, n).unwrap();
            let u = Field::vector_from_fn(&g, |x| [(PI * x[1]).sin(), (PI * x[0]).cos(), 0.0]);
            embedding_check(&TimeSeries::constant(0.1, 3, &u).unwrap(), 2.0, 4.0).unwrap()
        };
        let (a, b) = (ratio(16), ratio(32));
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() < 0.05 * b);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::new(2, 8).unwrap();
        let f = random_field(&g, Rank::Tensor, 2);
        let mut buf = Vec::new();
        io::write_snapshot(&mut buf, &f, 0.25).unwrap();
        let (h, t) = io::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(h.rank(), Rank::Tensor);
        assert_eq!(h.components(), f.components());
        assert!(io::read_snapshot(&buf[..10]).is_err());
    }

    #[test]
    fn interpolant_reproduces_modes_off_grid() {
        let g = Grid::new(2, 16).unwrap();
        let f = Field::scalar_from_fn(&g, |x| (PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.3);
        let it = Interpolant::new(&f);
        for x in [[0.123, -0.77, 0.0], [0.999, 0.5, 0.0], [-1.3, 2.2, 0.0]] {
            let exact = (PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.3;
            assert!((it.eval(&x)[0] - exact).abs() < 1e-13);
        }
        let p = 37;
        assert!((it.eval(&g.point(p))[0] - f.comp(0)[p]).abs() < 1e-13);
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = Grid::new(2, 12).unwrap();
        let low = Field::scalar_from_fn(&g, |x| (4.0 * PI * x[0]).sin());
        assert!(low.dealiased().sub(&low).max_abs() < 1e-14);
        let high = Field::scalar_from_fn(&g, |x| (5.0 * PI * x[1]).cos());
        assert!(high.dealiased().max_abs() < 1e-14);
    }
}
