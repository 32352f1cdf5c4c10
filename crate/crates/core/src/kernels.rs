//! Closed-form elastostatic fundamental solutions: the Kelvin matrix and its
//! gradient, and the 33-derivative of the bimaterial (Rongved) solution with
//! its quadratic-form analysis on the interface plane.

use crate::elasticity::{IsotropicElastic, Mat3};
use std::f64::consts::PI;
use thiserror::Error;

pub use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("evaluation point coincides with the pole")]
    Pole,
    #[error("Poisson ratio {0} outside [0, 1/2)")]
    Poisson(f64),
    #[error("shear modulus {0} must be positive")]
    Shear(f64),
    #[error("pole height r = {0} must be positive")]
    Height(f64),
    #[error("gamma = {0} outside (0, 1]")]
    Gamma(f64),
    #[error("point lies below the interface (x3 = {0})")]
    BelowInterface(f64),
}

/// Kelvin matrix Γᴷ(x,y) and its x-gradient, `grad[k][(i,j)] = ∂Γᵢⱼ/∂xₖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KelvinEval {
    pub matrix: Mat3,
    pub grad: [Mat3; 3],
}

impl KelvinEval {
    /// Displacement gradient ∇(Γl), entries ∂ⱼ(Γl)ᵢ.
    pub fn displacement_gradient(&self, l: &Vec3) -> Mat3 {
        Mat3::from_fn(|i, j| (0..3).map(|m| self.grad[j][(i, m)] * l[m]).sum())
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad
            .iter()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

fn kelvin_prefactor(c: &IsotropicElastic) -> (f64, f64) {
    let nu = c.nu();
    (1.0 / (16.0 * PI * c.mu() * (1.0 - nu)), 3.0 - 4.0 * nu)
}

/// Γᴷ(x,y) = 1/(16πμ(1−ν)) · [ (x−y)⊗(x−y)/|x−y|³ + (3−4ν) I/|x−y| ].
pub fn kelvin(x: &Vec3, y: &Vec3, c: &IsotropicElastic) -> Result<KelvinEval, KernelError> {
    let r = x - y;
    let d = r.norm();
    if d == 0.0 {
        return Err(KernelError::Pole);
    }
    let (pre, k) = kelvin_prefactor(c);
    let d3 = d * d * d;
    let d5 = d3 * d * d;
    let matrix = Mat3::from_fn(|i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        pre * (r[i] * r[j] / d3 + k * delta / d)
    });
    let grad = std::array::from_fn(|m| {
        Mat3::from_fn(|i, j| {
            let dij = if i == j { 1.0 } else { 0.0 };
            let dim = if i == m { 1.0 } else { 0.0 };
            let djm = if j == m { 1.0 } else { 0.0 };
            pre * ((dim * r[j] + r[i] * djm) / d3
                - 3.0 * r[i] * r[j] * r[m] / d5
                - k * dij * r[m] / d3)
        })
    });
    Ok(KelvinEval { matrix, grad })
}

/// Pointwise constant C in |Γᴷ| ≤ C/|x−y| and |∇Γᴷ| ≤ C/|x−y|²:
/// 1/(16πμ(1−ν)) · (1 + (3−4ν)).
pub fn kelvin_decay_constant(c: &IsotropicElastic) -> f64 {
    let (pre, k) = kelvin_prefactor(c);
    pre * (1.0 + k)
}

/// Two half-spaces bonded along x₃ = 0: (μ, ν) above, (μ′, ν′) below,
/// unit force at (0, 0, r).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BimaterialConfig {
    pub mu: f64,
    pub nu: f64,
    pub mu_p: f64,
    pub nu_p: f64,
    pub r: f64,
}

impl BimaterialConfig {
    pub fn new(mu: f64, nu: f64, mu_p: f64, nu_p: f64, r: f64) -> Result<Self, KernelError> {
        for n in [nu, nu_p] {
            if !(0.0..0.5).contains(&n) {
                return Err(KernelError::Poisson(n));
            }
        }
        for m in [mu, mu_p] {
            if !(m > 0.0) {
                return Err(KernelError::Shear(m));
            }
        }
        if !(r > 0.0) {
            return Err(KernelError::Height(r));
        }
        Ok(Self {
            mu,
            nu,
            mu_p,
            nu_p,
            r,
        })
    }

    pub fn from_phases(
        exterior: &IsotropicElastic,
        interior: &IsotropicElastic,
        r: f64,
    ) -> Result<Self, KernelError> {
        Self::new(
            exterior.mu(),
            exterior.nu(),
            interior.mu(),
            interior.nu(),
            r,
        )
    }

    pub fn exterior(&self) -> IsotropicElastic {
        IsotropicElastic::from_mu_nu(self.mu, self.nu).expect("validated")
    }

    pub fn interior(&self) -> IsotropicElastic {
        IsotropicElastic::from_mu_nu(self.mu_p, self.nu_p).expect("validated")
    }

    pub fn pole(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.r)
    }

    /// 16 r² (1−ν) π μ · D₁ · D₂, the normalisation that turns the interface
    /// value into the quadratic form Aμ² + Bμ′² + Cμμ′.
    pub fn quadratic_form_scale(&self) -> f64 {
        let d1 = self.mu + self.mu_p * (3.0 - 4.0 * self.nu);
        let d2 = self.mu_p + self.mu * (3.0 - 4.0 * self.nu_p);
        16.0 * self.r * self.r * (1.0 - self.nu) * PI * self.mu * d1 * d2
    }
}

/// ∂Γᴿ₃₃/∂x₃ at a point of the closed upper half-space.
pub fn rongved_d33(x: &Vec3, cfg: &BimaterialConfig) -> Result<f64, KernelError> {
    if x[2] < 0.0 {
        return Err(KernelError::BelowInterface(x[2]));
    }
    let BimaterialConfig {
        mu,
        nu,
        mu_p,
        nu_p,
        r,
    } = *cfg;
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let rho2 = x1 * x1 + x2 * x2;
    let r1 = (rho2 + (x3 - r) * (x3 - r)).sqrt();
    let r2 = (rho2 + (x3 + r) * (x3 + r)).sqrt();
    if r1 == 0.0 {
        return Err(KernelError::Pole);
    }
    let k = 3.0 - 4.0 * nu;
    let kp = 3.0 - 4.0 * nu_p;
    let a = (mu - mu_p) / (mu + mu_p * k);
    let (p, q) = (x3 - r, x3 + r);
    let r1_3 = r1.powi(3);
    let r1_5 = r1.powi(5);
    let r2_3 = r2.powi(3);
    let r2_5 = r2.powi(5);
    let r2_7 = r2.powi(7);
    let w = rho2 - 2.0 * q * q;

    let first =
        k * (-p / r1_3 + a * (k * (-q / r2_3) + 2.0 * r * q * (-3.0 * q / r2_5) + 2.0 * r / r2_3));
    let second = 2.0 * p / r1_3 + p * p * (-3.0 * p / r1_5);
    let jump_ratio =
        (mu * (1.0 - 2.0 * nu) * kp - mu_p * (1.0 - 2.0 * nu_p) * k) / (mu_p + mu * kp);
    // the (μ−μ′) prefactor of the brace cancels against the denominator of this term
    let cancelled = -4.0 * (1.0 - nu) * mu / (mu + mu_p * k) * jump_ratio * (-q / r2_3);
    let third = a
        * (k * 2.0 * x3 / r2_3 + k * (x3 * x3 - r * r) * (-3.0 * q / r2_5)
            - 2.0 * r / r2_5 * w
            - 2.0 * r * x3 * w * (-5.0 * q / r2_7)
            - 2.0 * r * x3 / r2_5 * (-4.0 * q));
    Ok((first + second + third + cancelled) / (16.0 * (1.0 - nu) * PI * mu))
}

/// Coefficients of the interface quadratic form. `a` uses the factor
/// (3γ² − 2ν), which is what the closed form expands to; see README.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RongvedCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RongvedCoeffs {
    pub fn form(&self, mu: f64, mu_p: f64) -> f64 {
        self.a * mu * mu + self.b * mu_p * mu_p + self.c * mu * mu_p
    }
}

pub fn rongved_coeffs(nu: f64, nu_p: f64, gamma: f64) -> Result<RongvedCoeffs, KernelError> {
    for n in [nu, nu_p] {
        if !(0.0..0.5).contains(&n) {
            return Err(KernelError::Poisson(n));
        }
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(KernelError::Gamma(gamma));
    }
    let g2 = gamma * gamma;
    let g3 = g2 * gamma;
    let a = 4.0 * nu * g3 * (3.0 - 4.0 * nu_p) * (3.0 * g2 - 2.0 * nu);
    let b = 4.0 * g3 * (2.0 - 8.0 * nu + 3.0 * g2 - 6.0 * nu * g2 + 8.0 * nu * nu);
    Ok(RongvedCoeffs {
        a,
        b,
        c: g_gamma(nu, nu_p, gamma),
    })
}

/// The μμ′ coefficient g_γ(ν, ν′).
pub fn g_gamma(nu: f64, nu_p: f64, gamma: f64) -> f64 {
    let g3 = gamma.powi(3);
    let g5 = gamma.powi(5);
    let k = 3.0 - 4.0 * nu;
    let kp = 3.0 - 4.0 * nu_p;
    (3.0 * g5 + (1.0 - 4.0 * nu) * g3) * (1.0 + k * kp)
        + (4.0 * nu_p - 2.0)
            * (k * ((4.0 * nu - 1.0) * g3 - 6.0 * g5) + 15.0 * g5 - 12.0 * nu * g5 - 2.0 * g3)
        - 4.0 * g3 * (1.0 - nu) * (1.0 - 2.0 * nu_p) * k
}

/// Outcome of [`verify_lower_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    /// min over samples of r² ∂Γᴿ₃₃/∂x₃.
    pub c_measured: f64,
    pub min_a: f64,
    pub min_b: f64,
    pub min_c: f64,
    pub samples: usize,
    pub grid_points: usize,
    pub passed: bool,
}

/// Samples ρ ∈ [0, r/√2] on x₃ = 0 and a (ν, ν′) grid at the matching γ
/// values, asserting positivity of the derivative and of A, C.
pub fn verify_lower_bound(
    cfg: &BimaterialConfig,
    radial_samples: usize,
    nu_grid: usize,
) -> Result<LowerBoundReport, KernelError> {
    let r = cfg.r;
    let mut c_measured = f64::INFINITY;
    let mut gammas = Vec::new();
    for s in 0..radial_samples {
        let rho = r / 2f64.sqrt() * s as f64 / (radial_samples.max(2) - 1) as f64;
        for t in 0..8 {
            let th = 2.0 * PI * t as f64 / 8.0;
            let x = Vec3::new(rho * th.cos(), rho * th.sin(), 0.0);
            c_measured = c_measured.min(r * r * rongved_d33(&x, cfg)?);
        }
        gammas.push(1.0 / (1.0 + (rho / r).powi(2)).sqrt());
    }
    let (mut min_a, mut min_b, mut min_c) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut grid_points = 0;
    let hi = 0.49;
    for &g in &gammas {
        for i in 0..nu_grid {
            for j in 0..nu_grid {
                let nu = hi * i as f64 / (nu_grid.max(2) - 1) as f64;
                let nu_p = hi * j as f64 / (nu_grid.max(2) - 1) as f64;
                let co = rongved_coeffs(nu, nu_p, g)?;
                min_a = min_a.min(co.a);
                min_b = min_b.min(co.b);
                min_c = min_c.min(co.c);
                grid_points += 1;
            }
        }
    }
    Ok(LowerBoundReport {
        c_measured,
        min_a,
        min_b,
        min_c,
        samples: radial_samples * 8,
        grid_points,
        passed: c_measured > 0.0 && min_a >= 0.0 && min_c >= 0.0 && min_b > 0.0,
    })
}

/// Central-difference divergence of the Kelvin stress field ℂ∇(Γl) at x.
/// Returns the residual and the magnitude of the largest individual term.
pub fn kelvin_pde_residual(
    x: &Vec3,
    y: &Vec3,
    l: &Vec3,
    c: &IsotropicElastic,
    step: f64,
) -> Result<(Vec3, f64), KernelError> {
    let stress = |p: &Vec3| -> Result<Mat3, KernelError> {
        let k = kelvin(p, y, c)?;
        Ok(c.apply(&k.displacement_gradient(l)))
    };
    let mut res = Vec3::zeros();
    let mut scale: f64 = 0.0;
    for j in 0..3 {
        let mut e = Vec3::zeros();
        e[j] = step;
        let sp = stress(&(x + e))?;
        let sm = stress(&(x - e))?;
        for i in 0..3 {
            let term = (sp[(i, j)] - sm[(i, j)]) / (2.0 * step);
            res[i] += term;
            scale = scale.max(term.abs());
        }
    }
    Ok((res, scale))
}
