//! Interface algebra at a flat face between two isotropic phases: the
//! matrix Q, the moment tensor 𝕄, transmission of gradients and the jump of
//! the b-field.

use crate::elasticity::{BiphaseMaterial, IsotropicElastic, Lame, Mat3, SymMat3};
use crate::kernels::Vec3;
use nalgebra::{Matrix6, SymmetricEigen};

/// Q = (ℂⁱ(· ⊗ n) n)⁻¹ for a unit normal n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTensor {
    pub q: Mat3,
    pub q_inv: Mat3,
}

pub fn build_q(interior: &IsotropicElastic, n: &Vec3) -> QTensor {
    let n = n.normalize();
    let nn = n * n.transpose();
    let q_inv = (Mat3::identity() + nn) * interior.mu() + nn * interior.lambda();
    // Q⁻¹ = μ I + (λ+μ) n⊗n, inverted by Sherman-Morrison
    let mu = interior.mu();
    let s = interior.lambda() + mu;
    let q = (Mat3::identity() - nn * (s / (mu + s))) / mu;
    QTensor { q, q_inv }
}

/// 𝕄 for a material pair and face normal, stored as a map on Sym(3).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTensor {
    diff: Lame,
    q: QTensor,
    n: Vec3,
    pub matrix6: Matrix6<f64>,
}

impl MomentTensor {
    /// 𝕄A = (ℂᵉ−ℂⁱ)A + (ℂᵉ−ℂⁱ)[Q((ℂᵉ−ℂⁱ)A n) ⊗ n].
    pub fn apply(&self, a: &Mat3) -> Mat3 {
        let da = self.diff.apply(a);
        let z = self.q.q * (da * self.n);
        da + self.diff.apply(&(z * self.n.transpose()))
    }

    pub fn apply_sym(&self, a: &SymMat3) -> SymMat3 {
        SymMat3::sym_part(&self.apply(&a.to_matrix()))
    }

    pub fn normal(&self) -> Vec3 {
        self.n
    }

    pub fn symmetry_residual(&self) -> f64 {
        (self.matrix6 - self.matrix6.transpose()).norm()
            / self.matrix6.norm().max(f64::MIN_POSITIVE)
    }

    pub fn eigenvalues(&self) -> nalgebra::Vector6<f64> {
        let s = 0.5 * (self.matrix6 + self.matrix6.transpose());
        SymmetricEigen::new(s).eigenvalues
    }
}

pub fn build_m(materials: &BiphaseMaterial, n: &Vec3) -> MomentTensor {
    let n = n.normalize();
    let diff = materials.exterior_minus_interior();
    let q = build_q(&materials.interior, &n);
    let mut m = MomentTensor {
        diff,
        q,
        n,
        matrix6: Matrix6::zeros(),
    };
    for k in 0..6 {
        let col = m.apply_sym(&SymMat3::basis(k)).to_vec6();
        m.matrix6.set_column(k, &col);
    }
    m
}

/// Interior gradient across the face from the exterior one:
/// δ = Q((ℂⁱ−ℂᵉ)∇̂uᵉ n), ∇uⁱ = ∇uᵉ − δ⊗n.
pub fn transmission(grad_ue: &Mat3, materials: &BiphaseMaterial, n: &Vec3) -> Mat3 {
    let n = n.normalize();
    let q = build_q(&materials.interior, &n);
    let diff = materials.interior.lame() - materials.exterior.lame();
    let delta = q.q * (diff.apply(grad_ue) * n);
    grad_ue - delta * n.transpose()
}

/// Residuals of the two transmission conditions: tangential derivatives
/// (∇uᵉ−∇uⁱ)τ for τ ⊥ n, and tractions ℂᵉ∇̂uᵉn − ℂⁱ∇̂uⁱn.
pub fn transmission_residuals(
    grad_ue: &Mat3,
    grad_ui: &Mat3,
    materials: &BiphaseMaterial,
    n: &Vec3,
) -> (f64, f64) {
    let n = n.normalize();
    let p = Mat3::identity() - n * n.transpose();
    let tangential = ((grad_ue - grad_ui) * p).norm();
    let traction =
        (materials.exterior.apply(grad_ue) * n - materials.interior.apply(grad_ui) * n).norm();
    (tangential, traction)
}

/// b = (ℂ∇u·∇v)𝒰 − (ℂ∇u)(∇v𝒰) − (ℂ∇v)(∇u𝒰).
pub fn bfield(c: &Lame, grad_u: &Mat3, grad_v: &Mat3, field: &Vec3) -> Vec3 {
    let su = c.apply(grad_u);
    let sv = c.apply(grad_v);
    let e = su.component_mul(grad_v).sum();
    field * e - su.transpose() * (grad_v * field) - sv.transpose() * (grad_u * field)
}

/// Both sides of (bⁱ−bᵉ)·n = −(𝒰·n) 𝕄∇̂uᵉ·∇̂vᵉ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpReport {
    /// Through the moment tensor.
    pub formula: f64,
    /// From b-fields with transmitted interior gradients.
    pub direct: f64,
}

impl JumpReport {
    pub fn relative_gap(&self) -> f64 {
        let s = self.formula.abs().max(self.direct.abs());
        if s == 0.0 {
            0.0
        } else {
            (self.formula - self.direct).abs() / s
        }
    }
}

/// Evaluates the jump both ways for exterior gradients at a face point where
/// the homotopy field takes the value `u_field`.
pub fn bfield_jump(
    grad_ue: &Mat3,
    grad_ve: &Mat3,
    u_field: &Vec3,
    materials: &BiphaseMaterial,
    n: &Vec3,
) -> JumpReport {
    let n = n.normalize();
    let m = build_m(materials, &n);
    let sue = 0.5 * (grad_ue + grad_ue.transpose());
    let sve = 0.5 * (grad_ve + grad_ve.transpose());
    let formula = -u_field.dot(&n) * m.apply(&sue).component_mul(&sve).sum();
    let gui = transmission(grad_ue, materials, &n);
    let gvi = transmission(grad_ve, materials, &n);
    let bi = bfield(&materials.interior.lame(), &gui, &gvi, u_field);
    let be = bfield(&materials.exterior.lame(), grad_ue, grad_ve, u_field);
    JumpReport {
        formula,
        direct: (bi - be).dot(&n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::{random_mat3, random_sym, Monotonicity};
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(li: f64, mi: f64, le: f64, me: f64) -> BiphaseMaterial {
        BiphaseMaterial::detect(
            IsotropicElastic::new(li, mi).unwrap(),
            IsotropicElastic::new(le, me).unwrap(),
        )
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() < 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn q_for_vertical_normal() {
        let c = IsotropicElastic::new(0.0, 1.0).unwrap();
        let q = build_q(&c, &Vec3::z());
        assert_relative_eq!(
            q.q,
            Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.5)),
            epsilon = 1e-15
        );
        let c = IsotropicElastic::new(0.8, 1.7).unwrap();
        let q = build_q(&c, &Vec3::z());
        assert_relative_eq!(
            q.q_inv,
            Mat3::from_diagonal(&Vec3::new(1.7, 1.7, 0.8 + 3.4)),
            epsilon = 1e-15
        );
        assert_relative_eq!(q.q * q.q_inv, Mat3::identity(), epsilon = 1e-14);
    }

    #[test]
    fn q_inverse_is_the_normal_quadratic_form() {
        let c = IsotropicElastic::new(0.6, 1.2).unwrap();
        let n = Vec3::new(0.3, -0.4, 0.5).normalize();
        let q = build_q(&c, &n);
        for i in 0..3 {
            for j in 0..3 {
                let (zi, ej) = (Vec3::ith(i, 1.0), Vec3::ith(j, 1.0));
                let lhs = c
                    .apply(&(zi * n.transpose()))
                    .component_mul(&(ej * n.transpose()))
                    .sum();
                assert_relative_eq!(lhs, q.q_inv[(j, i)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn q_rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = IsotropicElastic::new(1.1, 0.9).unwrap();
        for _ in 0..20 {
            let n = random_unit(&mut rng);
            let r = Rotation3::new(random_unit(&mut rng) * rng.random_range(0.0..3.0)).into_inner();
            let lhs = build_q(&c, &(r * n)).q;
            let rhs = r * build_q(&c, &n).q * r.transpose();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }

    #[test]
    fn equal_phases_give_zero_moment() {
        let m = build_m(&pair(1.0, 2.0, 1.0, 2.0), &Vec3::x());
        assert_eq!(m.matrix6.norm(), 0.0);
    }

    #[test]
    fn monotone_pair_eigenvalue_bound() {
        let mat = pair(1.0, 1.0, 2.0, 2.0);
        assert_eq!(mat.monotonicity, Monotonicity::ExteriorMinusInterior);
        assert_relative_eq!(mat.sigma(), 2.0);
        for n in [Vec3::z(), Vec3::new(1.0, 2.0, -0.5)] {
            let m = build_m(&mat, &n);
            assert!(m.symmetry_residual() < 1e-14);
            assert!(m.eigenvalues().min() >= 2.0 - 1e-10);
        }
    }

    #[test]
    fn stiffer_interior_normal_mode_is_scaled_by_stiffness_ratio() {
        // -𝕄(n⊗n)·(n⊗n) = |Δ(λ+2μ)| (λᵉ+2μᵉ)/(λⁱ+2μⁱ), below σ when the ratio is small
        let mat = pair(2.0, 2.0, 1.0, 1.0);
        assert_eq!(mat.monotonicity, Monotonicity::InteriorMinusExterior);
        assert_relative_eq!(mat.sigma(), 2.0);
        let m = build_m(&mat, &Vec3::z());
        let nn = Vec3::z() * Vec3::z().transpose();
        let val = -m.apply(&nn).component_mul(&nn).sum();
        assert_relative_eq!(val, 3.0 * 3.0 / 6.0, epsilon = 1e-13);
        assert!(-m.eigenvalues().max() > 0.0);
        assert!(-m.eigenvalues().max() < mat.sigma());
    }

    #[test]
    fn moment_dominates_difference_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mat = pair(0.5, 0.7, 1.5, 1.9);
        let m = build_m(&mat, &Vec3::new(0.2, 0.9, 0.1));
        let d = mat.exterior_minus_interior();
        for _ in 0..200 {
            let a = random_sym(&mut rng);
            let lhs = m.apply_sym(&a).dot(&a);
            let rhs = d.apply_sym(&a).dot(&a);
            assert!(lhs >= rhs - 1e-12 * rhs.abs());
        }
    }

    #[test]
    fn moment_frame_equivariance() {
        let mat = pair(0.5, 0.7, 1.5, 1.9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = random_unit(&mut rng);
        let r = Rotation3::new(Vec3::new(0.3, 1.1, -0.4)).into_inner();
        let m0 = build_m(&mat, &n);
        let m1 = build_m(&mat, &(r * n));
        let a = random_sym(&mut rng).to_matrix();
        let lhs = m1.apply(&(r * a * r.transpose()));
        let rhs = r * m0.apply(&a) * r.transpose();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn transmission_satisfies_both_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mat = pair(0.4, 0.6, 2.0, 3.0);
        for _ in 0..50 {
            let n = random_unit(&mut rng);
            let ge = random_mat3(&mut rng);
            let gi = transmission(&ge, &mat, &n);
            let (t, s) = transmission_residuals(&ge, &gi, &mat, &n);
            assert!(t <= 1e-12 * ge.norm() && s <= 1e-12 * ge.norm() * 3.0);
            let lhs = mat.exterior_minus_interior().apply(&gi);
            let sym = 0.5 * (ge + ge.transpose());
            assert_relative_eq!(
                lhs,
                build_m(&mat, &n).apply(&sym),
                epsilon = 1e-11 * ge.norm()
            );
        }
    }

    #[test]
    fn tangential_shear_traction() {
        // e1⊗e2 with n = e3: zero normal traction on both sides, no jump
        let mat = pair(0.4, 0.6, 2.0, 3.0);
        let ge = Vec3::x() * Vec3::y().transpose();
        let gi = transmission(&ge, &mat, &Vec3::z());
        assert_relative_eq!(gi, ge, epsilon = 1e-15);
        let t = mat.exterior.apply(&ge) * Vec3::z();
        assert_eq!(t, Vec3::zeros());
    }

    #[test]
    fn jump_two_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mat = pair(0.4, 0.6, 2.0, 3.0);
        for _ in 0..100 {
            let n = random_unit(&mut rng);
            let u = random_unit(&mut rng) * rng.random_range(0.1..2.0);
            let rep = bfield_jump(&random_mat3(&mut rng), &random_mat3(&mut rng), &u, &mat, &n);
            assert!(rep.relative_gap() < 1e-10, "{rep:?}");
        }
    }

    #[test]
    fn jump_vanishes_for_tangential_field_or_equal_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mat = pair(0.4, 0.6, 2.0, 3.0);
        let (ge, ve) = (random_mat3(&mut rng), random_mat3(&mut rng));
        let rep = bfield_jump(&ge, &ve, &Vec3::x(), &mat, &Vec3::z());
        assert_eq!(rep.formula, 0.0);
        assert!(rep.direct.abs() < 1e-12);
        let same = pair(1.0, 1.0, 1.0, 1.0);
        let rep = bfield_jump(&ge, &ve, &Vec3::z(), &same, &Vec3::z());
        assert_eq!(rep.formula, 0.0);
        assert!(rep.direct.abs() < 1e-13);
    }

    fn unit_from(a: f64, b: f64) -> Vec3 {
        let z = 2.0 * b - 1.0;
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * a.cos(), r * a.sin(), z)
    }

    proptest::proptest! {
        #[test]
        fn stiffer_exterior_moment_exceeds_sigma(
            li in 0.0f64..2.0, mi in 0.3f64..2.0, dl in 0.0f64..1.5, dm in 0.1f64..1.5,
            a in 0.0f64..6.3, b in 0.0f64..1.0,
        ) {
            let mat = pair(li, mi, li + dl, mi + dm);
            let m = build_m(&mat, &unit_from(a, b));
            proptest::prop_assert!(m.symmetry_residual() <= 1e-12);
            proptest::prop_assert!(m.eigenvalues().min() >= mat.sigma() - 1e-10);
        }

        #[test]
        fn stiffer_interior_moment_is_negative_definite(
            li in 0.0f64..2.0, mi in 0.3f64..2.0, dl in 0.0f64..1.5, dm in 0.1f64..1.5,
            a in 0.0f64..6.3, b in 0.0f64..1.0,
        ) {
            let mat = pair(li + dl, mi + dm, li, mi);
            let m = build_m(&mat, &unit_from(a, b));
            proptest::prop_assert!(m.symmetry_residual() <= 1e-12);
            proptest::prop_assert!(m.eigenvalues().max() < 0.0);
        }

        #[test]
        fn transmission_matches_moment(seed in 0u64..10_000, a in 0.0f64..6.3, b in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mat = pair(rng.random_range(0.0..2.0), rng.random_range(0.2..2.0), rng.random_range(0.0..2.0), rng.random_range(0.2..2.0));
            let n = unit_from(a, b);
            let ge = random_mat3(&mut rng);
            let gi = transmission(&ge, &mat, &n);
            let (t, s) = transmission_residuals(&ge, &gi, &mat, &n);
            proptest::prop_assert!(t.max(s) <= 1e-12 * (1.0 + ge.norm()) * 4.0);
            let lhs = mat.exterior_minus_interior().apply(&gi);
            let rhs = build_m(&mat, &n).apply(&(0.5 * (ge + ge.transpose())));
            proptest::prop_assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + ge.norm()));
        }
    }
}
