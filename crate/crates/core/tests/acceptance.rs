//! End-to-end acceptance run. Criteria execute one after another inside a
//! single test so that at most one large factorization is alive at a time;
//! each prints one PASS/FAIL line and the test fails if any of them does.

use lamestab::cli::{run_stability_sweep, sigma_traces, ExperimentConfig};
use lamestab::elasticity::{random_mat3, BiphaseMaterial, IsotropicElastic, Monotonicity};
use lamestab::forward::{dtn_assemble, BoxFace, Fem, Focus, GridSpec, Mesh, Sigma, SolverKind};
use lamestab::geometry::{triangle_lattice, BoxDomain, Vec3};
use lamestab::greens::{
    default_probes, rongved_fem_oracle, s_scaling_experiment, AugmentedDomain, GreenSystem,
    RongvedOracleOptions, SScalingConfig,
};
use lamestab::homotopy::{
    build_field, pushed_cube, verify_homotopy, HomotopyOptions, VerifyOptions,
};
use lamestab::kernels::{
    kelvin, kelvin_pde_residual, rongved_coeffs, rongved_d33, BimaterialConfig,
};
use lamestab::moment::{bfield_jump, build_m, transmission, transmission_residuals};
use lamestab::polyhedra::{
    decomposition_bound, decomposition_sup, hausdorff_boundary, modified_distance,
    random_trihedral, AdmissibilityParams, Polyhedron,
};
use lamestab::shape_deriv::{endpoint_check, fit_slope, ShapeProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn iso(l: f64, m: f64) -> IsotropicElastic {
    IsotropicElastic::new(l, m).unwrap()
}

fn reference_materials() -> BiphaseMaterial {
    BiphaseMaterial::detect(iso(2.0, 2.0), iso(1.0, 1.0))
}

fn omega_ref() -> BoxDomain {
    BoxDomain::centered(Vec3::zeros(), 2.5)
}

fn unit_cube() -> Polyhedron {
    Polyhedron::cube(Vec3::zeros(), 1.0)
}

/// Reference deformation problem: unit cube D₀, top face pushed by `push`.
fn shape_problem(mesh: Mesh, push: f64) -> (ShapeProblem, Vec<f64>, Vec<f64>) {
    let omega = omega_ref();
    let sigma = Sigma::on_face(&mesh, &omega, BoxFace::TOP).unwrap();
    let field = build_field(
        &unit_cube(),
        &pushed_cube(Vec3::zeros(), 1.0, push),
        &AdmissibilityParams::default(),
        &HomotopyOptions::default(),
    )
    .unwrap();
    let sp = ShapeProblem::new(
        mesh,
        sigma,
        reference_materials(),
        SolverKind::Cholesky,
        |x| field.displacement(x),
    )
    .unwrap();
    let (bump, shear) = sigma_traces(&omega, BoxFace::TOP);
    let f = sp.sigma.sample(&sp.mesh, bump);
    let g = sp.sigma.sample(&sp.mesh, shear);
    (sp, f, g)
}

fn c1_kernels() -> Outcome {
    let c = iso(0.7, 1.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sym: f64 = 0.0;
    let mut slopes = Vec::new();
    let mut pde: f64 = 0.0;
    for _ in 0..50 {
        let y = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let d = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let k = kelvin(&(y + d), &y, &c).unwrap().matrix;
        let kt = kelvin(&y, &(y + d), &c).unwrap().matrix;
        sym = sym.max((k - kt.transpose()).norm() / k.norm());
        let rs: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].to_vec();
        let lr: Vec<f64> = rs.iter().map(|r: &f64| r.ln()).collect();
        let lg: Vec<f64> = rs
            .iter()
            .map(|r| kelvin(&(y + d * *r), &y, &c).unwrap().matrix.norm().ln())
            .collect();
        let ld: Vec<f64> = rs
            .iter()
            .map(|r| kelvin(&(y + d * *r), &y, &c).unwrap().grad_norm().ln())
            .collect();
        slopes.push((fit_slope(&lr, &lg), fit_slope(&lr, &ld)));
        let l = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            1.0,
        )
        .normalize();
        let (res, scale) = kelvin_pde_residual(&(y + d * 0.8), &y, &l, &c, 1e-4).unwrap();
        pde = pde.max(res.norm() / scale);
    }
    let worst_slope = slopes
        .iter()
        .map(|(a, b)| (a + 1.0).abs().max((b + 2.0).abs()))
        .fold(0.0, f64::max);
    ensure(sym <= 1e-6, || format!("symmetry {sym:e}"))?;
    ensure(worst_slope <= 1e-6, || {
        format!("decay slope deviation {worst_slope:e}")
    })?;
    ensure(pde <= 1e-5, || format!("PDE residual {pde:e}"))?;
    Ok(format!(
        "symmetry {sym:.1e}, slope dev {worst_slope:.1e}, PDE residual {pde:.1e}"
    ))
}

fn c2_rongved_identity() -> Outcome {
    let n = 10;
    let mut worst: f64 = 0.0;
    let mut min_a = f64::INFINITY;
    let mut min_c = f64::INFINITY;
    let mut min_d = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let nu = 0.49 * i as f64 / (n - 1) as f64;
            let nu_p = 0.49 * j as f64 / (n - 1) as f64;
            for k in 0..n {
                let gamma = 0.5 + 0.5 * k as f64 / (n - 1) as f64;
                let alpha = (1.0 / (gamma * gamma) - 1.0).sqrt();
                for (mu, mu_p) in [(1.0, 2.0), (1.7, 0.6)] {
                    let cfg = BimaterialConfig::new(mu, nu, mu_p, nu_p, 0.8).unwrap();
                    let x = Vec3::new(alpha * cfg.r * 0.6, alpha * cfg.r * 0.8, 0.0);
                    let co = rongved_coeffs(nu, nu_p, gamma).unwrap();
                    let lhs = rongved_d33(&x, &cfg).unwrap() * cfg.quadratic_form_scale();
                    let rhs = co.form(mu, mu_p);
                    worst = worst.max((lhs - rhs).abs() / rhs.abs());
                    if gamma * gamma >= 2.0 / 3.0 {
                        min_a = min_a.min(co.a);
                        min_c = min_c.min(co.c);
                        min_d = min_d.min(rongved_d33(&x, &cfg).unwrap());
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-10, || {
        format!("identity relative error {worst:e}")
    })?;
    ensure(min_a >= 0.0 && min_c >= 0.0, || {
        format!("min A {min_a}, min C {min_c}")
    })?;
    ensure(min_d > 0.0, || format!("min ∂₃Γ₃₃ on ρ ≤ r/√2 is {min_d}"))?;
    Ok(format!("identity {worst:.1e} over 2000 points, min A {min_a:.3}, min C {min_c:.3}, min ∂₃Γ₃₃ {min_d:.3e}"))
}

fn c3_rongved_fem() -> Outcome {
    let cfg = BimaterialConfig::new(1.0, 0.25, 2.0, 0.3, 1.0).unwrap();
    let probes = default_probes(cfg.r);
    let coarse = rongved_fem_oracle(
        &cfg,
        &probes,
        &RongvedOracleOptions::default(),
        SolverKind::Cholesky,
    )
    .map_err(|e| e.to_string())?;
    let fine_opts = RongvedOracleOptions {
        h: 1.0 / 16.0,
        ..Default::default()
    };
    let fine = rongved_fem_oracle(
        &cfg,
        &probes,
        &fine_opts,
        SolverKind::Pcg {
            tol: 1e-10,
            max_iter: 20_000,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(coarse.max_relative_error <= 0.05, || {
        format!("h = r/8 error {}", coarse.max_relative_error)
    })?;
    ensure(fine.max_relative_error < coarse.max_relative_error, || {
        format!(
            "no improvement: {} then {}",
            coarse.max_relative_error, fine.max_relative_error
        )
    })?;
    Ok(format!(
        "max rel error {:.2}% at h = r/8 ({} dofs), {:.2}% at r/16 ({} dofs)",
        100.0 * coarse.max_relative_error,
        coarse.dofs,
        100.0 * fine.max_relative_error,
        fine.dofs
    ))
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

fn c4_moment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sym, mut tr, mut jump): (f64, f64, f64) = (0.0, 0.0, 0.0);
    // worst min eig(±𝕄) − σ, per branch: exterior stiffer, interior stiffer
    let mut eig_gap = [f64::INFINITY; 2];
    let mut interior_definite = true;
    for k in 0..100 {
        let base = iso(rng.random_range(0.0..2.0), rng.random_range(0.3..2.0));
        let (dl, dm) = (rng.random_range(0.0..1.5), rng.random_range(0.1..1.5));
        let other = iso(base.lambda() + dl, base.mu() + dm);
        let mat = if k % 2 == 0 {
            BiphaseMaterial::detect(base, other)
        } else {
            BiphaseMaterial::detect(other, base)
        };
        if mat.monotonicity == Monotonicity::None {
            return Err(format!("generated pair {k} is not monotone"));
        }
        let n = random_unit(&mut rng);
        let m = build_m(&mat, &n);
        sym = sym.max(m.symmetry_residual());
        let lo = (m.eigenvalues() * mat.monotonicity.sign()).min();
        let b = k % 2;
        eig_gap[b] = eig_gap[b].min(lo - (mat.sigma() - 1e-10));
        interior_definite &= lo > 0.0;
        let ge = random_mat3(&mut rng);
        let gv = random_mat3(&mut rng);
        let gi = transmission(&ge, &mat, &n);
        let (t, s) = transmission_residuals(&ge, &gi, &mat, &n);
        tr = tr.max(t.max(s) / ge.norm());
        jump = jump.max(bfield_jump(&ge, &gv, &random_unit(&mut rng), &mat, &n).relative_gap());
    }
    ensure(sym <= 1e-12, || format!("symmetry {sym:e}"))?;
    ensure(eig_gap[0] >= 0.0 && eig_gap[1] >= 0.0, || {
        format!(
            "min eig − σ: exterior stiffer {:.3e}, interior stiffer {:.3e} (±𝕄 definite: {interior_definite})",
            eig_gap[0], eig_gap[1]
        )
    })?;
    ensure(tr <= 1e-12, || format!("transmission {tr:e}"))?;
    ensure(jump <= 1e-10, || format!("jump {jump:e}"))?;
    Ok(format!(
        "symmetry {sym:.1e}, min eig − σ ≥ {:.3e}, transmission {tr:.1e}, jump {jump:.1e}",
        eig_gap[0].min(eig_gap[1])
    ))
}

fn c5_homotopy() -> Outcome {
    let params = AdmissibilityParams::default();
    let r0 = params.r0;
    let c = unit_cube();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lines = Vec::new();
    let mut checks = vec![(c.clone(), pushed_cube(Vec3::zeros(), 1.0, 0.01))];
    let o = Polyhedron::octahedron(Vec3::zeros(), 1.0);
    let top = (0..6)
        .max_by(|&a, &b| o.vertices()[a].z.total_cmp(&o.vertices()[b].z))
        .unwrap();
    checks.push((
        o.clone(),
        o.vertex_moved(
            top,
            &(Vec3::new(0.003, -0.002, 0.00346).normalize() * 0.005),
        )
        .unwrap(),
    ));
    for (k, (p0, p1)) in checks.iter().enumerate() {
        let f = build_field(p0, p1, &params, &HomotopyOptions::default())
            .map_err(|e| format!("pair {k}: {e}"))?;
        let r = verify_homotopy(p0, p1, &f, &VerifyOptions::default());
        ensure(r.vertex_residual <= 1e-12 * r0, || {
            format!("vertex residual {:e}", r.vertex_residual)
        })?;
        ensure(r.face_residual <= r.face_tolerance, || {
            format!(
                "Φ₁(∂D₀) off ∂D₁ by {:e} > {:e}",
                r.face_residual, r.face_tolerance
            )
        })?;
        ensure(r.det_range[0] >= 0.5 && r.det_range[1] <= 1.5, || {
            format!("det DΦ range {:?}", r.det_range)
        })?;
        ensure(r.samples >= 10_000, || {
            format!("only {} samples", r.samples)
        })?;
        lines.push(format!(
            "det [{:.3}, {:.3}]",
            r.det_range[0], r.det_range[1]
        ));
    }
    for a in [0.00125, 0.0025, 0.005, 0.01] {
        let p1 = pushed_cube(Vec3::zeros(), 1.0, a);
        let f = build_field(&c, &p1, &params, &HomotopyOptions::default())
            .map_err(|e| format!("push {a}: {e}"))?;
        let r = verify_homotopy(&c, &p1, &f, &VerifyOptions::default());
        xs.push(r.d_h.ln());
        ys.push((r.sup_u + r0 * r.sup_du).ln());
    }
    let slope = fit_slope(&xs, &ys);
    ensure((slope - 1.0).abs() <= 0.1, || {
        format!("‖𝒰‖ + r₀‖D𝒰‖ slope {slope}")
    })?;
    Ok(format!("{}, amplitude slope {slope:.4}", lines.join(", ")))
}

fn c6_dtn() -> Outcome {
    let omega = omega_ref();
    let h = 0.125;
    let mesh = Mesh::inclusion(&omega, &unit_cube(), h).map_err(|e| e.to_string())?;
    let sigma = Sigma::on_face(&mesh, &omega, BoxFace::TOP).map_err(|e| e.to_string())?;
    let ext = iso(1.0, 1.0);
    let hom = BiphaseMaterial::homogeneous(ext);
    let tagged = Fem::new(
        &mesh,
        mesh.inside.iter().map(|&i| hom.phase(i).lame()).collect(),
    )
    .unwrap();
    let plain = Fem::new(&mesh, vec![ext.lame(); mesh.tets.len()]).unwrap();
    let lt =
        dtn_assemble(&mesh, &tagged, &sigma, SolverKind::Cholesky).map_err(|e| e.to_string())?;
    let lp =
        dtn_assemble(&mesh, &plain, &sigma, SolverKind::Cholesky).map_err(|e| e.to_string())?;
    let solver_tol = lt.max_residual.max(lp.max_residual).max(f64::EPSILON);
    let inv = (&lt.matrix - &lp.matrix).norm_l2() / lp.matrix.norm_l2();
    ensure(inv <= 10.0 * solver_tol, || {
        format!("invisibility {inv:e} vs solver {solver_tol:e}")
    })?;

    let mats = reference_materials();
    let fem = Fem::new(
        &mesh,
        mesh.inside.iter().map(|&i| mats.phase(i).lame()).collect(),
    )
    .unwrap();
    let op = dtn_assemble(&mesh, &fem, &sigma, SolverKind::Cholesky).map_err(|e| e.to_string())?;
    ensure(op.asymmetry <= 1e-8, || {
        format!("asymmetry {:e}", op.asymmetry)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let generic: Vec<f64> = (0..fem.dofs())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let scale = fem.energy(&generic);
    let mut rigid: f64 = 0.0;
    for k in 0..6 {
        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .flat_map(|x| {
                let e = Vec3::ith(k % 3, 1.0);
                let v = if k < 3 { e } else { e.cross(x) };
                [v.x, v.y, v.z]
            })
            .collect();
        let norm2: f64 =
            u.iter().map(|a| a * a).sum::<f64>() / generic.iter().map(|a| a * a).sum::<f64>();
        rigid = rigid.max(fem.energy(&u).abs() / (scale * norm2));
    }
    ensure(rigid <= 1e-12, || format!("rigid energy {rigid:e}"))?;

    let (sp, f, g) = shape_problem(mesh, 0.01);
    let e = endpoint_check(&sp, &f, &g).map_err(|e| e.to_string())?;
    ensure(e.relative_error <= 1e-6, || {
        format!("F(1) − F(0) vs pairing {e:?}")
    })?;
    Ok(format!(
        "h = {h}: invisibility {inv:.1e}, asymmetry {:.1e}, rigid {rigid:.1e}, endpoint {:.1e}",
        op.asymmetry, e.relative_error
    ))
}

fn c7_shape_derivative() -> Outcome {
    let omega = omega_ref();
    let mesh = Mesh::inclusion(&omega, &unit_cube(), 0.125).map_err(|e| e.to_string())?;
    let (sp, f, g) = shape_problem(mesh, 0.01);
    let fd = sp
        .fd_validate(&f, &g, &[0.2, 0.1, 0.05, 0.025])
        .map_err(|e| e.to_string())?;
    ensure((fd.slope - 2.0).abs() <= 0.3, || {
        format!("FD slope {}", fd.slope)
    })?;
    let contrast = sp
        .f_prime_distributed(0.0, &f, &f)
        .map_err(|e| e.to_string())?;
    let hom = sp
        .with_materials(BiphaseMaterial::homogeneous(iso(1.0, 1.0)))
        .f_prime_distributed(0.0, &f, &f)
        .map_err(|e| e.to_string())?;
    ensure(hom.abs() <= 0.01 * contrast.abs(), || {
        format!("homogeneous F′ {hom:e} against contrast F′ {contrast:e}")
    })?;
    drop(sp);

    let spec = GridSpec::uniform(omega, 0.125).with_focus(Focus {
        center: Vec3::zeros(),
        radius: 0.6,
        h: 0.0625,
        ratio: 1.5,
    });
    let mesh = Mesh::inclusions(&spec, &[&unit_cube()]).map_err(|e| e.to_string())?;
    let (sp, f, _) = shape_problem(mesh, 0.01);
    let dist = sp
        .f_prime_distributed(0.0, &f, &f)
        .map_err(|e| e.to_string())?;
    let bnd = sp
        .f_prime_boundary(&unit_cube(), &f, &f, 0.0625)
        .map_err(|e| e.to_string())?;
    ensure(bnd.agrees_with(dist, 0.05), || {
        format!(
            "boundary {} vs distributed {dist} (collar {})",
            bnd.value, bnd.collar_abs
        )
    })?;
    Ok(format!(
        "FD slope {:.3}; homogeneous/contrast {:.1e}; boundary {:.4e} vs distributed {:.4e}, gap {:.1}% (collar bound {:.1}%)",
        fd.slope,
        (hom / contrast).abs(),
        bnd.value,
        dist,
        100.0 * (bnd.value - dist).abs() / dist.abs(),
        100.0 * bnd.collar_abs / dist.abs()
    ))
}

fn c8_s_scaling() -> Outcome {
    let mats = reference_materials();
    let dom = AugmentedDomain::default_for(BoxDomain::centered(Vec3::zeros(), 2.0), 0.5)
        .map_err(|e| e.to_string())?;
    let d0 = unit_cube();
    let d1 = Polyhedron::cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.25));
    let p = Vec3::new(0.0, 0.0, 0.5);
    let spec = dom.spec(0.25).with_focus(Focus {
        center: p,
        radius: 0.005,
        h: 0.005,
        ratio: 1.5,
    });
    let mesh = dom.mesh(&spec, &[&d0, &d1]).map_err(|e| e.to_string())?;
    let m1 = mesh.with_inside(mesh.tag(&d1));
    let s0 = GreenSystem::new(mesh, d0, mats, SolverKind::Cholesky).map_err(|e| e.to_string())?;
    let s1 = GreenSystem::new(m1, d1, mats, SolverKind::Cholesky).map_err(|e| e.to_string())?;
    let hs: Vec<f64> = (0..6)
        .map(|k| 0.2 * 10f64.powf(-(k as f64) / 5.0))
        .collect();
    let t = s_scaling_experiment(&s0, &s1, &SScalingConfig::new(p, Vec3::z(), hs))
        .map_err(|e| e.to_string())?;
    let fits: Vec<String> = t
        .fits
        .iter()
        .map(|f| format!("(λ {:.3}, e{}) {:.3}", f.lambda, f.direction + 1, f.slope))
        .collect();
    ensure(t.passed, || format!("no fit in band: {}", fits.join(", ")))?;
    let good: Vec<&String> = t
        .fits
        .iter()
        .zip(&fits)
        .filter(|(f, _)| f.in_band)
        .map(|(_, s)| s)
        .collect();
    Ok(format!(
        "in band: {}",
        good.iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    ))
}

fn c9_stability() -> Outcome {
    let cfg = ExperimentConfig::default();
    let s = run_stability_sweep(&cfg).map_err(|e| e.to_string())?;
    ensure(s.passed, || format!("{:?}", s.failures))?;
    Ok(format!(
        "h = {}: {} points, slope C = {:.2}, correlation {:.5}, max deviation {:.2}%",
        s.h,
        s.points.len(),
        s.slope.unwrap_or(f64::NAN),
        s.correlation.unwrap_or(f64::NAN),
        100.0 * s.max_deviation
    ))
}

/// Directed boundary distance from a dense lattice on the faces of `a`.
fn lattice_directed(a: &Polyhedron, b: &Polyhedron, n: usize) -> f64 {
    (0..a.triangles().len())
        .flat_map(|t| triangle_lattice(&a.triangle_points(t), n))
        .map(|p| b.boundary_distance(&p))
        .fold(0.0, f64::max)
}

fn c10_geometry() -> Outcome {
    let omega = omega_ref();
    let c = unit_cube();
    let o = Polyhedron::octahedron(Vec3::zeros(), 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut pairs = vec![
        (c.clone(), pushed_cube(Vec3::zeros(), 1.0, 0.02)),
        (c.clone(), c.translated(&Vec3::new(0.05, -0.03, 0.02))),
        (c.clone(), c.scaled(1.1, &Vec3::zeros())),
        (
            o.clone(),
            o.vertex_moved(0, &Vec3::new(0.02, 0.01, 0.0)).unwrap(),
        ),
    ];
    for _ in 0..8 {
        let t = Vec3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
        );
        pairs.push((
            c.clone(),
            c.translated(&t)
                .scaled(rng.random_range(0.85..1.15), &Vec3::zeros()),
        ));
    }
    let n = 24;
    let mut worst_gap: f64 = 0.0;
    for (p0, p1) in &pairs {
        let h = hausdorff_boundary(p0, p1, 1e-3);
        let brute = lattice_directed(p0, p1, n).max(lattice_directed(p1, p0, n));
        let spacing = p0.diam().max(p1.diam()) / n as f64;
        ensure(brute <= h.upper + 1e-12, || {
            format!("lattice {brute} above upper bound {}", h.upper)
        })?;
        ensure(h.lower - brute <= spacing, || {
            format!("lattice {brute} below {} by more than {spacing}", h.lower)
        })?;
        worst_gap = worst_gap.max(h.lower - brute);
        let dm = modified_distance(p0, p1, &omega, 1.0 / 32.0);
        ensure(dm.value <= h.upper + 1e-12, || {
            format!("d_μ {} > d_H {}", dm.value, h.upper)
        })?;
    }
    let theta0 = PI / 6.0;
    let bound = decomposition_bound(theta0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let t = random_trihedral(&mut rng, theta0);
        let s = decomposition_sup(t.normals).map_err(|e| e.to_string())?;
        worst = worst.max(s);
    }
    ensure(worst <= bound, || {
        format!("decomposition sup {worst} exceeds bound {bound}")
    })?;
    Ok(format!(
        "{} pairs, lattice gap ≤ {worst_gap:.2e}; normal-decomposition sup {worst:.3} ≤ {bound:.3} over 10⁴ triples",
        pairs.len()
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 kernel exactness", c1_kernels),
        ("2 Rongved quadratic-form identity", c2_rongved_identity),
        ("3 Rongved vs FEM oracle", c3_rongved_fem),
        ("4 moment tensor", c4_moment),
        ("5 homotopy", c5_homotopy),
        ("6 DtN correctness", c6_dtn),
        ("7 shape derivative", c7_shape_derivative),
        ("8 S-scaling", c8_s_scaling),
        ("9 Lipschitz stability sweep", c9_stability),
        ("10 geometry suite", c10_geometry),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let t0 = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                println!("FAIL criterion {name}: {why} [{secs:.1}s]");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
