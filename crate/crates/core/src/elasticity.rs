//! Isotropic elasticity tensors, symmetric 3×3 algebra and the a priori
//! material checks (strong convexity, visibility, monotonicity).

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticityError {
    #[error("shear modulus mu = {mu} is below the margin alpha0 = {alpha0}")]
    Shear { mu: f64, alpha0: f64 },
    #[error("bulk combination 2mu + 3lambda = {value} is below the margin gamma0 = {gamma0}")]
    Bulk { value: f64, gamma0: f64 },
    #[error("Poisson ratio {nu} is outside [0, 1/2)")]
    Poisson { nu: f64 },
    #[error("lambda + mu = {0} must be positive")]
    Degenerate(f64),
    #[error("convexity margins must be positive (alpha = {alpha}, gamma = {gamma})")]
    Margins { alpha: f64, gamma: f64 },
    #[error("visibility condition fails: contrast {contrast} < eta0 = {eta0}")]
    Visibility { contrast: f64, eta0: f64 },
    #[error("declared monotonicity {declared:?} does not hold: {reason}")]
    Monotonicity {
        declared: Monotonicity,
        reason: String,
    },
}

/// Symmetric 3×3 matrix stored by its six independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub yz: f64,
    pub xz: f64,
    pub xy: f64,
}

impl SymMat3 {
    /// Symmetric part of an arbitrary matrix.
    pub fn sym_part(a: &Mat3) -> Self {
        Self {
            xx: a[(0, 0)],
            yy: a[(1, 1)],
            zz: a[(2, 2)],
            yz: 0.5 * (a[(1, 2)] + a[(2, 1)]),
            xz: 0.5 * (a[(0, 2)] + a[(2, 0)]),
            xy: 0.5 * (a[(0, 1)] + a[(1, 0)]),
        }
    }

    pub fn to_matrix(&self) -> Mat3 {
        Mat3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    /// Coordinates in the orthonormal basis of Sym(3) (off-diagonals carry √2),
    /// so the Frobenius product becomes the Euclidean one.
    pub fn to_vec6(&self) -> Vector6<f64> {
        Vector6::new(
            self.xx,
            self.yy,
            self.zz,
            SQRT2 * self.yz,
            SQRT2 * self.xz,
            SQRT2 * self.xy,
        )
    }

    pub fn from_vec6(v: &Vector6<f64>) -> Self {
        Self {
            xx: v[0],
            yy: v[1],
            zz: v[2],
            yz: v[3] / SQRT2,
            xz: v[4] / SQRT2,
            xy: v[5] / SQRT2,
        }
    }

    /// The k-th element of the orthonormal basis.
    pub fn basis(k: usize) -> Self {
        let mut v = Vector6::zeros();
        v[k] = 1.0;
        Self::from_vec6(&v)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.to_vec6().dot(&other.to_vec6())
    }

    pub fn norm(&self) -> f64 {
        self.to_vec6().norm()
    }
}

/// Frobenius product A·B = tr(AᵀB).
pub fn frob(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

/// An isotropic fourth-order tensor ℂA = 2μÂ + λ tr(A) I, with no sign
/// requirement on the moduli. Differences of admissible tensors live here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lame {
    pub lambda: f64,
    pub mu: f64,
}

impl Lame {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }

    pub fn apply(&self, a: &Mat3) -> Mat3 {
        let sym = 0.5 * (a + a.transpose());
        sym * (2.0 * self.mu) + Mat3::identity() * (self.lambda * a.trace())
    }

    pub fn apply_sym(&self, a: &SymMat3) -> SymMat3 {
        let t = self.lambda * a.trace();
        let m2 = 2.0 * self.mu;
        SymMat3 {
            xx: m2 * a.xx + t,
            yy: m2 * a.yy + t,
            zz: m2 * a.zz + t,
            yz: m2 * a.yz,
            xz: m2 * a.xz,
            xy: m2 * a.xy,
        }
    }

    /// Matrix of the tensor on Sym(3) in the orthonormal basis.
    pub fn matrix6(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        for k in 0..6 {
            let col = self.apply_sym(&SymMat3::basis(k)).to_vec6();
            m.set_column(k, &col);
        }
        m
    }

    /// Eigenvalues on Sym(3): deviatoric 2μ (five-fold) and spherical 2μ+3λ.
    pub fn eigenvalues(&self) -> (f64, f64) {
        (2.0 * self.mu, 2.0 * self.mu + 3.0 * self.lambda)
    }

    /// Strong convexity with margins: μ ≥ α and 2μ+3λ ≥ γ.
    pub fn is_strongly_convex(&self, alpha: f64, gamma: f64) -> bool {
        self.mu >= alpha && 2.0 * self.mu + 3.0 * self.lambda >= gamma
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.lambda * s, self.mu * s)
    }
}

impl std::ops::Sub for Lame {
    type Output = Lame;
    fn sub(self, rhs: Lame) -> Lame {
        Lame::new(self.lambda - rhs.lambda, self.mu - rhs.mu)
    }
}

impl std::ops::Neg for Lame {
    type Output = Lame;
    fn neg(self) -> Lame {
        Lame::new(-self.lambda, -self.mu)
    }
}

/// An admissible isotropic elastic phase.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IsotropicElastic {
    lambda: f64,
    mu: f64,
}

/// Result of [`IsotropicElastic::check_strong_convexity`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub passed: bool,
    pub xi0: f64,
    pub shear_margin: f64,
    pub bulk_margin: f64,
    /// Smallest ℂA·A/|A|² over the basis and the random samples.
    pub sampled_min_ratio: f64,
    pub violations: Vec<ElasticityError>,
}

impl IsotropicElastic {
    /// Admissible phase: μ > 0, 2μ+3λ > 0 and Poisson ratio in [0, 1/2).
    pub fn new(lambda: f64, mu: f64) -> Result<Self, ElasticityError> {
        if !(mu > 0.0) {
            return Err(ElasticityError::Shear { mu, alpha0: 0.0 });
        }
        if !(2.0 * mu + 3.0 * lambda > 0.0) {
            return Err(ElasticityError::Bulk {
                value: 2.0 * mu + 3.0 * lambda,
                gamma0: 0.0,
            });
        }
        let c = Self { lambda, mu };
        c.poisson()?;
        Ok(c)
    }

    /// Build from shear modulus and Poisson ratio.
    pub fn from_mu_nu(mu: f64, nu: f64) -> Result<Self, ElasticityError> {
        if !(0.0..0.5).contains(&nu) {
            return Err(ElasticityError::Poisson { nu });
        }
        Self::new(2.0 * mu * nu / (1.0 - 2.0 * nu), mu)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lame(&self) -> Lame {
        Lame::new(self.lambda, self.mu)
    }

    pub fn apply(&self, a: &Mat3) -> Mat3 {
        self.lame().apply(a)
    }

    /// ν = λ / (2(λ+μ)).
    pub fn poisson(&self) -> Result<f64, ElasticityError> {
        poisson(self.lambda, self.mu)
    }

    /// Poisson ratio of an already validated phase.
    pub fn nu(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// α₀ = γ₀ = 10⁻⁶ max(λ, μ).
    pub fn default_margins(&self) -> (f64, f64) {
        let m = 1e-6 * self.lambda.max(self.mu);
        (m, m)
    }

    pub fn check_strong_convexity<R: Rng>(
        &self,
        alpha0: f64,
        gamma0: f64,
        samples: usize,
        rng: &mut R,
    ) -> Result<ConvexityReport, ElasticityError> {
        if !(alpha0 > 0.0 && gamma0 > 0.0) {
            return Err(ElasticityError::Margins {
                alpha: alpha0,
                gamma: gamma0,
            });
        }
        let mut violations = Vec::new();
        let bulk = 2.0 * self.mu + 3.0 * self.lambda;
        if self.mu < alpha0 {
            violations.push(ElasticityError::Shear {
                mu: self.mu,
                alpha0,
            });
        }
        if bulk < gamma0 {
            violations.push(ElasticityError::Bulk {
                value: bulk,
                gamma0,
            });
        }
        let xi0 = (2.0 * alpha0).min(gamma0);
        let lame = self.lame();
        let ratio = |a: &SymMat3| lame.apply_sym(a).dot(a) / a.dot(a);
        let mut min_ratio = (0..6)
            .map(|k| ratio(&SymMat3::basis(k)))
            .fold(f64::INFINITY, f64::min);
        for _ in 0..samples {
            let a = random_sym(rng);
            min_ratio = min_ratio.min(ratio(&a));
        }
        Ok(ConvexityReport {
            passed: violations.is_empty(),
            xi0,
            shear_margin: self.mu - alpha0,
            bulk_margin: bulk - gamma0,
            sampled_min_ratio: min_ratio,
            violations,
        })
    }
}

pub fn poisson(lambda: f64, mu: f64) -> Result<f64, ElasticityError> {
    if !(lambda + mu > 0.0) {
        return Err(ElasticityError::Degenerate(lambda + mu));
    }
    let nu = lambda / (2.0 * (lambda + mu));
    if (0.0..0.5).contains(&nu) {
        Ok(nu)
    } else {
        Err(ElasticityError::Poisson { nu })
    }
}

/// Random symmetric matrix with i.i.d. Gaussian entries.
pub fn random_sym<R: Rng>(rng: &mut R) -> SymMat3 {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    SymMat3 {
        xx: g(),
        yy: g(),
        zz: g(),
        yz: g(),
        xz: g(),
        xy: g(),
    }
}

/// Random (not necessarily symmetric) 3×3 matrix.
pub fn random_mat3<R: Rng>(rng: &mut R) -> Mat3 {
    Mat3::from_fn(|_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Monotonicity {
    /// ℂᵉ − ℂⁱ strongly convex.
    ExteriorMinusInterior,
    /// ℂⁱ − ℂᵉ strongly convex.
    InteriorMinusExterior,
    None,
}

impl Monotonicity {
    /// +1 when ℂᵉ − ℂⁱ is the convex difference, −1 for the reverse, 0 otherwise.
    pub fn sign(&self) -> f64 {
        match self {
            Monotonicity::ExteriorMinusInterior => 1.0,
            Monotonicity::InteriorMinusExterior => -1.0,
            Monotonicity::None => 0.0,
        }
    }
}

/// An inclusion phase ℂⁱ inside a background ℂᵉ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiphaseMaterial {
    pub interior: IsotropicElastic,
    pub exterior: IsotropicElastic,
    pub eta0: f64,
    pub monotonicity: Monotonicity,
}

impl BiphaseMaterial {
    /// Validated pair. `margins = (α₁, γ₁)` is used for the monotonicity check.
    pub fn new(
        interior: IsotropicElastic,
        exterior: IsotropicElastic,
        eta0: f64,
        monotonicity: Monotonicity,
        margins: (f64, f64),
    ) -> Result<Self, ElasticityError> {
        let m = Self {
            interior,
            exterior,
            eta0,
            monotonicity,
        };
        let contrast = m.contrast_sq();
        if eta0 > 0.0 && contrast < eta0 {
            return Err(ElasticityError::Visibility { contrast, eta0 });
        }
        let (a1, g1) = margins;
        let diff = match monotonicity {
            Monotonicity::None => return Ok(m),
            Monotonicity::ExteriorMinusInterior => m.exterior_minus_interior(),
            Monotonicity::InteriorMinusExterior => -m.exterior_minus_interior(),
        };
        if !diff.is_strongly_convex(a1, g1) {
            return Err(ElasticityError::Monotonicity {
                declared: monotonicity,
                reason: format!(
                    "difference has mu = {}, 2mu+3lambda = {} against margins ({a1}, {g1})",
                    diff.mu,
                    2.0 * diff.mu + 3.0 * diff.lambda
                ),
            });
        }
        Ok(m)
    }

    /// Pair without visibility threshold, monotonicity detected from the data.
    pub fn detect(interior: IsotropicElastic, exterior: IsotropicElastic) -> Self {
        let d = exterior.lame() - interior.lame();
        let mono = if d.is_strongly_convex(f64::MIN_POSITIVE, f64::MIN_POSITIVE) {
            Monotonicity::ExteriorMinusInterior
        } else if (-d).is_strongly_convex(f64::MIN_POSITIVE, f64::MIN_POSITIVE) {
            Monotonicity::InteriorMinusExterior
        } else {
            Monotonicity::None
        };
        Self {
            interior,
            exterior,
            eta0: 0.0,
            monotonicity: mono,
        }
    }

    /// Same tensor inside and outside.
    pub fn homogeneous(c: IsotropicElastic) -> Self {
        Self {
            interior: c,
            exterior: c,
            eta0: 0.0,
            monotonicity: Monotonicity::None,
        }
    }

    /// (λⁱ−λᵉ)² + (μⁱ−μᵉ)².
    pub fn contrast_sq(&self) -> f64 {
        let d = self.exterior_minus_interior();
        d.lambda * d.lambda + d.mu * d.mu
    }

    pub fn exterior_minus_interior(&self) -> Lame {
        self.exterior.lame() - self.interior.lame()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.interior == self.exterior
    }

    /// σ = min{2|Δμ|, |2Δμ + 3Δλ|}.
    pub fn sigma(&self) -> f64 {
        let d = self.exterior_minus_interior();
        (2.0 * d.mu.abs()).min((2.0 * d.mu + 3.0 * d.lambda).abs())
    }

    pub fn phase(&self, inside: bool) -> IsotropicElastic {
        if inside {
            self.interior
        } else {
            self.exterior
        }
    }
}

/// Smallest eigenvalue of a symmetric 6×6 matrix.
pub fn min_eigenvalue6(m: &Matrix6<f64>) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}
