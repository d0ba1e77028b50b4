//! Scalar solvers: survival probability `xi`, the critical level `u*`, and
//! the vacant giant density `zeta(u, rho)`.
//!
//! All three equations are solved by bisection. The random-interlacement
//! functional `F(u) = E[exp(-u cap)]` enters through a closure returning a
//! Monte Carlo estimate; callers are expected to evaluate it on a fixed tree
//! sample so that the residual is monotone in `u`.

use serde::{Deserialize, Serialize};

use crate::engine::EstimateCI;
use crate::error::{Error, Result};

/// Default tolerance for the deterministic equations.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest `u` tried when bracketing `u*` (the bracket doubles from 1).
pub const U_MAX_LIMIT: f64 = 1024.0;

/// Positive root of `exp(-mu s) = 1 - s` for `mu > 1`: the survival
/// probability of a Poisson(`mu`) branching process.
fn positive_root(mu: f64, tol: f64) -> f64 {
    let g = |s: f64| (-mu * s).exp() - 1.0 + s;
    // g decreases on (0, ln mu / mu) and increases afterwards, so the
    // minimiser and 1 bracket the nontrivial root
    let mut lo = mu.ln() / mu;
    let mut hi = 1.0f64;
    loop {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol && g(mid).abs() <= tol {
            return mid;
        }
        if hi - lo <= f64::EPSILON * 4.0 {
            return mid;
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    Ok(())
}

/// Unique solution in (0, 1) of `exp(-rho xi) = 1 - xi`.
pub fn solve_xi(rho: f64, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::Subcritical(format!(
            "no positive solution for rho = {rho} <= 1"
        )));
    }
    Ok(positive_root(rho, tol))
}

/// Mean degree of the vacant exploration graph, `rho xi F + rho (1 - xi)`.
pub fn vacant_mean_degree(rho: f64, xi: f64, functional_value: f64) -> f64 {
    rho * xi * functional_value + rho * (1.0 - xi)
}

/// Residual whose root is `u*`: `rho xi F(u) + rho (1 - xi) - 1`.
pub fn u_star_residual(rho: f64, xi: f64, functional_value: f64) -> f64 {
    vacant_mean_degree(rho, xi, functional_value) - 1.0
}

/// Giant-component density of the vacant graph at level `u`: the solution
/// of `exp(-zeta mu) = 1 - zeta` with `mu` the vacant mean degree.
pub fn solve_zeta(rho: f64, functional_value: f64, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    let xi = solve_xi(rho, tol)?;
    let mu = vacant_mean_degree(rho, xi, functional_value);
    if mu <= 1.0 {
        return Err(Error::Subcritical(format!(
            "zeta = 0 regime (vacant mean degree {mu} <= 1)"
        )));
    }
    Ok(positive_root(mu, tol))
}

/// `zeta` with the subcritical regime mapped to 0.
pub fn zeta_or_zero(rho: f64, functional_value: f64, tol: f64) -> Result<f64> {
    match solve_zeta(rho, functional_value, tol) {
        Ok(z) => Ok(z),
        Err(Error::Subcritical(_)) if rho > 1.0 => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacantPrediction {
    /// Predicted `|V^u| / n = xi F(u)`.
    pub vacant_fraction: f64,
    /// Predicted `|Vbar^u| rho / n = (xi F(u) + 1 - xi) rho`.
    pub vacant_mean_degree: f64,
}

pub fn predicted_vacant_fraction(rho: f64, functional_value: f64) -> Result<VacantPrediction> {
    if !(0.0..=1.0).contains(&functional_value) {
        return Err(Error::InvalidParameter(format!(
            "functional value {functional_value} outside [0, 1]"
        )));
    }
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    Ok(VacantPrediction {
        vacant_fraction: xi * functional_value,
        vacant_mean_degree: vacant_mean_degree(rho, xi, functional_value),
    })
}

/// Giant-component size over `n` of the vacant exploration graph at level
/// `u`. That graph has about `(xi F + 1 - xi) n` vertices and mean degree
/// `mu = rho (xi F + 1 - xi)`, so its giant holds `zeta(mu)` of its own
/// vertices: `zeta (xi F + 1 - xi) = zeta mu / rho`. Zero when `mu <= 1`.
pub fn predicted_giant_fraction(rho: f64, functional_value: f64, tol: f64) -> Result<f64> {
    let xi = solve_xi(rho, tol)?;
    let zeta = zeta_or_zero(rho, functional_value, tol)?;
    Ok(zeta * vacant_mean_degree(rho, xi, functional_value) / rho)
}

/// `u*` with the interval obtained by re-solving at the functional's CI
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UStar {
    pub u_star: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl UStar {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci95_high - self.ci95_low)
    }
}

fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, u_max: f64, tol_u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, u_max);
    while hi - lo > tol_u {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `rho xi F(u) + rho (1 - xi) = 1` for `u`.
pub fn solve_u_star<F>(rho: f64, functional: F, tol_u: f64) -> Result<UStar>
where
    F: Fn(f64) -> EstimateCI,
{
    check_tol(tol_u)?;
    let xi = solve_xi(rho, DEFAULT_TOL)?;
    let residual = |u: f64, pick: fn(&EstimateCI) -> f64| u_star_residual(rho, xi, pick(&functional(u)));
    let mean = |e: &EstimateCI| e.mean;
    let low = |e: &EstimateCI| e.ci95_low;
    let high = |e: &EstimateCI| e.ci95_high;

    // the upper CI endpoint gives the largest root, so bracket with it
    let mut u_max = 1.0;
    while residual(u_max, high) > 0.0 {
        u_max *= 2.0;
        if u_max > U_MAX_LIMIT {
            return Err(Error::NoSignChange { u_max: U_MAX_LIMIT });
        }
    }
    if residual(0.0, low) <= 0.0 {
        return Err(Error::NoSignChange { u_max });
    }
    Ok(UStar {
        u_star: bisect_decreasing(|u| residual(u, mean), u_max, tol_u),
        ci95_low: bisect_decreasing(|u| residual(u, low), u_max, tol_u),
        ci95_high: bisect_decreasing(|u| residual(u, high), u_max, tol_u),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalPoint {
    pub u: f64,
    pub estimate: EstimateCI,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSolution {
    pub rho: f64,
    pub xi: f64,
    pub u_star: UStar,
    pub functional_at: Vec<FunctionalPoint>,
    pub solver_tolerance: f64,
}

impl CriticalSolution {
    /// Solves for `xi` and `u*` and records the functional at `u*` and at the
    /// requested extra points.
    pub fn solve<F>(rho: f64, functional: F, tol: f64, extra_u: &[f64]) -> Result<Self>
    where
        F: Fn(f64) -> EstimateCI,
    {
        let xi = solve_xi(rho, tol)?;
        let u_star = solve_u_star(rho, &functional, tol.max(1e-6))?;
        let mut us: Vec<f64> = extra_u.to_vec();
        us.push(u_star.u_star);
        let functional_at = us
            .into_iter()
            .map(|u| FunctionalPoint {
                u,
                estimate: functional(u),
            })
            .collect();
        Ok(CriticalSolution {
            rho,
            xi,
            u_star,
            functional_at,
            solver_tolerance: tol,
        })
    }
}

/// Offspring generating function of the surviving subtree,
/// `ftilde(s) = (f((1 - q) s + q) - q) / (1 - q)` with `f(s) = exp(rho (s - 1))`
/// and `q = 1 - xi`.
pub fn tilde_f(rho: f64, xi: f64, s: f64) -> f64 {
    let q = 1.0 - xi;
    ((rho * ((1.0 - q) * s + q - 1.0)).exp() - q) / (1.0 - q)
}

/// Closed form of `(ftilde^{-1})'(t) = 1 / (rho xi t + rho (1 - xi))`.
pub fn tilde_f_inverse_derivative(rho: f64, xi: f64, t: f64) -> f64 {
    1.0 / vacant_mean_degree(rho, xi, t)
}
