use super::field::{Field, Rank};
use crate::error::{Error, Result};

/// Samples f(t_0), …, f(t_{n−1}) on the uniform grid t_i = i·T/(n−1).
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Field>,
}

impl TimeSeries {
    pub fn new(t_final: f64, values: Vec<Field>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: values.len(),
            });
        }
        let m = values.len() - 1;
        let times = (0..=m).map(|i| t_final * i as f64 / m as f64).collect();
        Ok(TimeSeries { times, values })
    }

    pub fn constant(t_final: f64, n_t: usize, value: &Field) -> Result<Self> {
        TimeSeries::new(t_final, vec![value.clone(); n_t])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn rank(&self) -> Rank {
        self.values[0].rank()
    }

    pub fn sub(&self, other: &TimeSeries) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    /// Subtracts a time-independent field from every sample.
    pub fn sub_field(&self, f: &Field) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(|a| a.sub(f)).collect(),
        }
    }

    /// Second-order finite-difference ∂_t at sample i (one-sided at the ends).
    pub fn time_derivative(&self, i: usize) -> Field {
        let v = &self.values;
        let dt = self.dt();
        let m = v.len();
        if m == 2 {
            return v[1].sub(&v[0]).scale(1.0 / dt);
        }
        if i == 0 {
            v[0].scale(-3.0).axpy(4.0, &v[1]).axpy(-1.0, &v[2]).scale(0.5 / dt)
        } else if i == m - 1 {
            v[m - 1].scale(3.0).axpy(-4.0, &v[m - 2]).axpy(1.0, &v[m - 3]).scale(0.5 / dt)
        } else {
            v[i + 1].sub(&v[i - 1]).scale(0.5 / dt)
        }
    }

    pub fn time_derivative_series(&self) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            values: (0..self.len()).map(|i| self.time_derivative(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub p: f64,
    pub q: f64,
    pub k: u32,
}

impl NormSpec {
    pub fn new(p: f64, q: f64, k: u32) -> Self {
        NormSpec { p, q, k }
    }

    pub fn with_k(self, k: u32) -> Self {
        NormSpec { k, ..self }
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec { p: 2.0, q: 4.0, k: 0 }
    }
}

/// Multi-indices α ∈ ℕ^d with |α| ≤ k.
pub fn multi_indices(d: usize, k: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for a in &out {
            let used: u32 = a.iter().sum();
            for o in 0..=(k - used) {
                let mut b = a.clone();
                b.push(o);
                next.push(b);
            }
        }
        out = next;
    }
    out.sort_by_key(|a| a.iter().sum::<u32>());
    out
}

/// q-th power of the L^q norm, summed over components (rectangle rule).
pub fn lq_norm_pow(f: &Field, q: f64) -> f64 {
    let h = f.grid().cell_volume();
    f.components()
        .iter()
        .map(|c| c.iter().map(|x| x.abs().powf(q)).sum::<f64>())
        .sum::<f64>()
        * h
}

pub fn lq_norm(f: &Field, q: f64) -> f64 {
    lq_norm_pow(f, q).powf(1.0 / q)
}

/// ‖f‖_{W^{k,q}} = (Σ_{|α|≤k} ‖∂^α f‖_q^q)^{1/q}.
pub fn sobolev_norm(f: &Field, spec: NormSpec) -> f64 {
    let d = f.grid().d();
    multi_indices(d, spec.k)
        .iter()
        .map(|a| {
            if a.iter().all(|&o| o == 0) {
                lq_norm_pow(f, spec.q)
            } else {
                lq_norm_pow(&f.mixed_derivative(a), spec.q)
            }
        })
        .sum::<f64>()
        .powf(1.0 / spec.q)
}

/// max over |α| ≤ 1 of ‖∂^α f‖_∞.
pub fn w1inf_norm(f: &Field) -> f64 {
    let d = f.grid().d();
    (0..d).fold(f.max_abs(), |m, a| m.max(f.derivative(a, 1).max_abs()))
}

fn trapezoid(dt: f64, g: &[f64]) -> f64 {
    let m = g.len();
    let inner: f64 = g[1..m - 1].iter().sum();
    dt * (0.5 * (g[0] + g[m - 1]) + inner)
}

fn lp_of(series: &TimeSeries, p: f64, pointwise: impl Fn(&Field) -> f64) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: series.len(),
        });
    }
    let g: Vec<f64> = series.values.iter().map(|f| pointwise(f).powf(p)).collect();
    Ok(trapezoid(series.dt(), &g).powf(1.0 / p))
}

/// ‖f‖_{L^p(0,T;W^{k,q})} by the composite trapezoid rule.
pub fn mixed_norm(series: &TimeSeries, spec: NormSpec) -> Result<f64> {
    lp_of(series, spec.p, |f| sobolev_norm(f, spec))
}

/// ‖f‖_{W^{1,p}(0,T;W^{k,q})} = (‖f‖^p_{L^p W^{k,q}} + ‖∂_t f‖^p_{L^p W^{k,q}})^{1/p}.
pub fn w1p_norm(series: &TimeSeries, spec: NormSpec) -> Result<f64> {
    let a = mixed_norm(series, spec)?;
    let b = mixed_norm(&series.time_derivative_series(), spec)?;
    Ok((a.powf(spec.p) + b.powf(spec.p)).powf(1.0 / spec.p))
}

/// ‖v‖_{𝒱^{p,q}} = ‖v‖_{L^p W^{2,q}} + ‖v‖_{W^{1,p} L^q}.
pub fn v_norm(series: &TimeSeries, p: f64, q: f64) -> Result<f64> {
    let spec = NormSpec::new(p, q, 2);
    Ok(mixed_norm(series, spec)? + w1p_norm(series, spec.with_k(0))?)
}

/// Fixed-point gauge [ϑ, w] = ‖ϑ‖_{W^{1,p}(W^{1,q})} + ‖w − u₀‖_{𝒱^{p,q}}.
pub fn gauge(theta: &TimeSeries, w: &TimeSeries, u0: &Field, p: f64, q: f64) -> Result<f64> {
    let a = w1p_norm(theta, NormSpec::new(p, q, 1))?;
    let b = v_norm(&w.sub_field(u0), p, q)?;
    Ok(a + b)
}

/// Gauge of a difference of two pairs: ‖ϑ¹−ϑ²‖_{W^{1,p}(W^{1,q})} + ‖w¹−w²‖_{𝒱}.
pub fn gauge_difference(
    theta1: &TimeSeries,
    w1: &TimeSeries,
    theta2: &TimeSeries,
    w2: &TimeSeries,
    p: f64,
    q: f64,
) -> Result<f64> {
    let a = w1p_norm(&theta1.sub(theta2), NormSpec::new(p, q, 1))?;
    let b = v_norm(&w1.sub(w2), p, q)?;
    Ok(a + b)
}

/// sup_t ‖u‖_{W^{1,∞}} / (‖u‖^p_{L^p W^{2,q}} + ‖u‖^p_{W^{1,p} L^q})^{1/p}; zero for u ≡ 0.
pub fn embedding_check(series: &TimeSeries, p: f64, q: f64) -> Result<f64> {
    let num = series.values.iter().map(w1inf_norm).fold(0.0, f64::max);
    if num == 0.0 {
        return Ok(0.0);
    }
    let spec = NormSpec::new(p, q, 2);
    let a = mixed_norm(series, spec)?;
    let b = w1p_norm(series, spec.with_k(0))?;
    Ok(num / (a.powf(p) + b.powf(p)).powf(1.0 / p))
}
