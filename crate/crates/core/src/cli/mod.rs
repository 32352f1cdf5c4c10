//! Batch front end. Each suite reads an [`ExperimentConfig`], runs one
//! pipeline and writes CSV and JSON artifacts into `out_dir`. Every CSV row
//! starts with the provenance columns `suite, mesh_h, solver_tol`.

mod config;
mod stability;

pub use config::{parse_face, read_polyhedron, BaseShape, ConfigError, ExperimentConfig, Family};
pub use stability::{
    facing_face, origin_fit, perturb, run_stability_sweep, StabilitySummary, SweepPoint, SweepSkip,
    MAX_DEVIATION, MIN_CORRELATION,
};

use crate::elasticity::ElasticityError;
use crate::forward::{
    dtn_assemble, BoxFace, DtnError, Fem, Focus, Mesh, MeshError, Sigma, SolveError,
};
use crate::geometry::{BoxDomain, Vec3};
use crate::greens::{
    s_scaling_experiment, AugmentedDomain, GreenSystem, GreensError, SScalingConfig,
};
use crate::homotopy::{build_field, verify_homotopy, HomotopyOptions, VerifyOptions};
use crate::kernels::{rongved_coeffs, verify_lower_bound, BimaterialConfig, KernelError};
use crate::polyhedra::{
    hausdorff_boundary, modified_distance, validate_class_p, AdmissibilityParams, ParamsError,
    Polyhedron,
};
use crate::shape_deriv::{ShapeError, ShapeProblem};
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "unknown suite `{0}`; expected one of validate, kernels, dtn, sderiv, sscale, stability"
    )]
    UnknownSuite(String),
    #[error(
        "materials are not monotone: interior (λ, μ) = {interior:?}, exterior {exterior:?}; \
         neither difference of the tensors is strongly convex"
    )]
    NotMonotone {
        interior: (f64, f64),
        exterior: (f64, f64),
    },
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("base polyhedron is not admissible:\n{0}")]
    Base(String),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Dtn(#[from] DtnError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for problems with the input, 1 for everything that went wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::UnknownSuite(_)
            | CliError::NotMonotone { .. }
            | CliError::Params(_)
            | CliError::Base(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Validate,
    Kernels,
    Dtn,
    Sderiv,
    Sscale,
    Stability,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Validate,
        Suite::Kernels,
        Suite::Dtn,
        Suite::Sderiv,
        Suite::Sscale,
        Suite::Stability,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Validate => "validate",
            Suite::Kernels => "kernels",
            Suite::Dtn => "dtn",
            Suite::Sderiv => "sderiv",
            Suite::Sscale => "sscale",
            Suite::Stability => "stability",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CliError::UnknownSuite(s.into()))
    }
}

/// What a suite produced: the files it wrote and the checks that failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub files: Vec<String>,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }
}

/// Runs `name` and maps the outcome to an exit status: 0 pass, 1 failed
/// assertion or runtime error, 2 configuration error.
pub fn run_suite(name: &str, cfg: &ExperimentConfig) -> i32 {
    let result = name.parse::<Suite>().and_then(|s| run(s, cfg));
    match result {
        Ok(rep) => {
            for f in &rep.files {
                eprintln!("wrote {f}");
            }
            for f in &rep.failures {
                eprintln!("FAIL {name}: {f}");
            }
            rep.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(suite: Suite, cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    match suite {
        Suite::Validate => validate_suite(cfg),
        Suite::Kernels => kernels_suite(cfg),
        Suite::Dtn => dtn_suite(cfg),
        Suite::Sderiv => sderiv_suite(cfg),
        Suite::Sscale => sscale_suite(cfg),
        Suite::Stability => stability_suite(cfg),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Prefixes every non-empty line of `csv` with the provenance columns; the
/// first line of each block is taken as a header.
pub fn with_provenance(csv: &str, suite: &str, h: f64, tol: f64) -> String {
    let mut out = String::new();
    let mut header = true;
    for line in csv.lines() {
        if line.is_empty() {
            out.push('\n');
            header = true;
            continue;
        }
        if header {
            let _ = writeln!(out, "suite,mesh_h,solver_tol,{line}");
            header = false;
        } else {
            let _ = writeln!(out, "{suite},{h},{tol:e},{line}");
        }
    }
    out
}

fn write(
    cfg: &ExperimentConfig,
    rep: &mut SuiteReport,
    name: &str,
    contents: &str,
) -> Result<(), CliError> {
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    rep.files.push(path.display().to_string());
    Ok(())
}

fn csv_of(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

fn params(cfg: &ExperimentConfig) -> Result<AdmissibilityParams, CliError> {
    Ok(cfg.params()?)
}

/// D₁ for the single-pair suites: the pair file, else the family member at
/// the largest amplitude.
fn second(cfg: &ExperimentConfig, p0: &Polyhedron) -> Result<Polyhedron, CliError> {
    if let Some(p) = cfg.pair_polyhedron()? {
        return Ok(p);
    }
    let a = cfg.amplitudes.iter().copied().fold(0.0, f64::max) * cfg.r0;
    perturb(p0, cfg.family, a, &cfg.sigma_face.outward(), cfg.seed, 0).map_err(|reason| {
        ConfigError::Invalid {
            key: "family".into(),
            reason,
        }
        .into()
    })
}

/// Traces on Σ vanishing on its rim: a mostly normal bump and a tangential shear.
pub fn sigma_traces(
    omega: &BoxDomain,
    face: BoxFace,
) -> (impl Fn(&Vec3) -> Vec3, impl Fn(&Vec3) -> Vec3) {
    let (t1, t2) = ((face.axis + 1) % 3, (face.axis + 2) % 3);
    let c = omega.center();
    let half = (omega.hi - omega.lo) / 2.0;
    let n = face.outward();
    let weight =
        move |x: &Vec3| (half[t1] - (x[t1] - c[t1]).abs()) * (half[t2] - (x[t2] - c[t2]).abs());
    let mut e1 = Vec3::zeros();
    e1[t1] = 1.0;
    let mut e2 = Vec3::zeros();
    e2[t2] = 1.0;
    (
        move |x: &Vec3| (e2 * 0.1 - n) * weight(x),
        move |x: &Vec3| (e1 + e2 * 0.2) * weight(x),
    )
}

fn validate_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let omega = cfg.omega();
    let params = params(cfg)?;
    let p0 = cfg.base_polyhedron()?;
    let base = validate_class_p(&p0, &omega, &params);
    let mut text = format!("base\n{}", base.to_text());
    if !base.passed() {
        rep.fail("base polyhedron is not admissible");
    }
    let mut csv = String::from(
        "amplitude,admissible,d_h,d_mu,homotopy,det_min,det_max,vertex_residual,reason\n",
    );
    let opts = HomotopyOptions {
        delta0: cfg.delta0,
        ..Default::default()
    };
    let verify = VerifyOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    for (i, &a) in cfg.amplitudes.iter().enumerate() {
        let p1 = match perturb(
            &p0,
            cfg.family,
            a * cfg.r0,
            &cfg.sigma_face.outward(),
            cfg.seed,
            i as u64,
        ) {
            Ok(p) => p,
            Err(e) => {
                let _ = writeln!(
                    csv,
                    "{a},false,,,false,,,,generator: {}",
                    e.replace(',', ";")
                );
                continue;
            }
        };
        let r = validate_class_p(&p1, &omega, &params);
        let d_h = hausdorff_boundary(&p0, &p1, cfg.r0 / 512.0).value();
        let d_mu = modified_distance(&p0, &p1, &omega, cfg.r0 / 16.0).value;
        if d_mu > d_h * (1.0 + 1e-9) + cfg.r0 / 512.0 {
            rep.fail(format!("amplitude {a}: d_mu {d_mu} exceeds d_H {d_h}"));
        }
        let _ = writeln!(text, "\namplitude {a}\n{}", r.to_text());
        if !r.passed() {
            let _ = writeln!(
                csv,
                "{a},false,{d_h:e},{d_mu:e},false,,,,class check failed"
            );
            continue;
        }
        match build_field(&p0, &p1, &params, &opts) {
            Ok(field) => {
                let h = verify_homotopy(&p0, &p1, &field, &verify);
                let ok = h.passed(cfg.r0);
                if !ok {
                    rep.fail(format!("amplitude {a}: homotopy {:?}", h.failures(cfg.r0)));
                }
                let _ = writeln!(
                    csv,
                    "{a},true,{d_h:e},{d_mu:e},{ok},{:.6},{:.6},{:e},",
                    h.det_range[0], h.det_range[1], h.vertex_residual
                );
            }
            Err(e) => {
                let _ = writeln!(
                    csv,
                    "{a},true,{d_h:e},{d_mu:e},false,,,,{}",
                    e.to_string().replace(',', ";")
                );
            }
        }
    }
    write(cfg, &mut rep, "validate.txt", &text)?;
    write(
        cfg,
        &mut rep,
        "validate.csv",
        &with_provenance(&csv, "validate", 0.0, 0.0),
    )?;
    Ok(rep)
}

fn kernels_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let mut csv = String::from("gamma,nu,nu_p,A,B,C,min_C\n");
    let (ng, nn) = (cfg.kernel_gamma, cfg.kernel_nu);
    let g_lo = (2.0f64 / 3.0).sqrt();
    let mut worst: f64 = f64::INFINITY;
    for i in 0..ng {
        let gamma = g_lo + (1.0 - g_lo) * i as f64 / (ng - 1) as f64;
        let mut rows = Vec::new();
        for a in 0..nn {
            for b in 0..nn {
                let nu = 0.49 * a as f64 / (nn - 1) as f64;
                let nu_p = 0.49 * b as f64 / (nn - 1) as f64;
                let c = rongved_coeffs(nu, nu_p, gamma)?;
                if c.a < 0.0 {
                    rep.fail(format!(
                        "A = {} < 0 at (ν, ν′, γ) = ({nu}, {nu_p}, {gamma})",
                        c.a
                    ));
                }
                rows.push((nu, nu_p, c));
            }
        }
        let min_c = rows.iter().map(|r| r.2.c).fold(f64::INFINITY, f64::min);
        worst = worst.min(min_c);
        for (nu, nu_p, c) in rows {
            let _ = writeln!(
                csv,
                "{gamma:.12},{nu:.6},{nu_p:.6},{:.12e},{:.12e},{:.12e},{min_c:.12e}",
                c.a, c.b, c.c
            );
        }
    }
    if worst < 0.0 {
        rep.fail(format!("min C = {worst} < 0 on γ² ≥ 2/3"));
    }
    write(
        cfg,
        &mut rep,
        "kernels.csv",
        &with_provenance(&csv, "kernels", 0.0, 0.0),
    )?;
    let (e, i) = (cfg.exterior, cfg.interior);
    let summary = match (e.poisson(), i.poisson()) {
        (Ok(nu), Ok(nu_p)) if (0.0..0.5).contains(&nu) && (0.0..0.5).contains(&nu_p) => {
            let b = BimaterialConfig::new(e.mu(), nu, i.mu(), nu_p, cfg.r0)?;
            let r = verify_lower_bound(&b, 33, nn)?;
            if !r.passed {
                rep.fail(format!("lower bound check failed: {r:?}"));
            }
            json!({
                "mu": e.mu(), "nu": nu, "mu_p": i.mu(), "nu_p": nu_p, "r": cfg.r0,
                "c_measured": r.c_measured, "min_a": r.min_a, "min_b": r.min_b, "min_c": r.min_c,
                "samples": r.samples, "grid_points": r.grid_points, "passed": r.passed, "min_c_grid": worst,
            })
        }
        _ => json!({ "skipped": "Poisson ratio outside [0, 1/2)", "min_c_grid": worst }),
    };
    write(
        cfg,
        &mut rep,
        "kernels.json",
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    Ok(rep)
}

pub const DTN_SYMMETRY_TOL: f64 = 1e-8;

fn dtn_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let omega = cfg.omega();
    let p0 = cfg.base_polyhedron()?;
    let mats = cfg.materials();
    let mesh = Mesh::inclusion(&omega, &p0, cfg.h)?;
    let sigma = Sigma::on_face(&mesh, &omega, cfg.sigma_face)?;
    let fem = Fem::new(
        &mesh,
        mesh.inside.iter().map(|&i| mats.phase(i).lame()).collect(),
    )?;
    let op = dtn_assemble(&mesh, &fem, &sigma, cfg.solver)?;
    if op.asymmetry > DTN_SYMMETRY_TOL {
        rep.fail(format!(
            "DtN asymmetry {:e} above {DTN_SYMMETRY_TOL:e}",
            op.asymmetry
        ));
    }
    let (f, g) = sigma_traces(&omega, cfg.sigma_face);
    let (f, g) = (sigma.sample(&mesh, f), sigma.sample(&mesh, g));
    let fem_h = Fem::new(&mesh, vec![cfg.exterior.lame(); mesh.tets.len()])?;
    let op_h = dtn_assemble(&mesh, &fem_h, &sigma, cfg.solver)?;
    let summary = json!({
        "suite": "dtn", "mesh_h": cfg.h, "solver_tol": cfg.solver_tol(),
        "sigma_dofs": sigma.dofs(), "mesh_dofs": 3 * mesh.nodes.len(),
        "asymmetry": op.asymmetry, "max_residual": op.max_residual,
        "pair_ff": op.pair(&f, &f), "pair_fg": op.pair(&f, &g), "pair_gf": op.pair(&g, &f),
        "homogeneous_pair_ff": op_h.pair(&f, &f),
    });
    let mut csv = String::from("i,j,value\n");
    let n = op.matrix.nrows();
    for i in 0..n {
        for j in 0..n {
            let _ = writeln!(csv, "{i},{j},{:.15e}", op.matrix[(i, j)]);
        }
    }
    write(
        cfg,
        &mut rep,
        "dtn.csv",
        &with_provenance(&csv, "dtn", cfg.h, cfg.solver_tol()),
    )?;
    write(
        cfg,
        &mut rep,
        "dtn.json",
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    Ok(rep)
}

pub const FD_SLOPE_BAND: [f64; 2] = [1.7, 2.3];

fn sderiv_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let omega = cfg.omega();
    let params = params(cfg)?;
    let p0 = cfg.base_polyhedron()?;
    let p1 = second(cfg, &p0)?;
    let opts = HomotopyOptions {
        delta0: cfg.delta0,
        ..Default::default()
    };
    let field = build_field(&p0, &p1, &params, &opts).map_err(|e| ConfigError::Invalid {
        key: "family".into(),
        reason: format!("no homotopy for the pair: {e}"),
    })?;
    let mesh = Mesh::inclusion(&omega, &p0, cfg.h)?;
    let sigma = Sigma::on_face(&mesh, &omega, cfg.sigma_face)?;
    let sp = ShapeProblem::new(mesh, sigma, cfg.materials(), cfg.solver, |x| {
        field.displacement(x)
    })?;
    let (f, g) = sigma_traces(&omega, cfg.sigma_face);
    let (f, g) = (sp.sigma.sample(&sp.mesh, f), sp.sigma.sample(&sp.mesh, g));
    let b = sp.bundle(&p0, &f, &g, &cfg.t_list, cfg.edge_margin)?;
    if let Err(e) = b.fd.check(FD_SLOPE_BAND[0], FD_SLOPE_BAND[1]) {
        rep.fail(e.to_string());
    }
    if !b.boundary.agrees_with(b.distributed, 0.05) {
        rep.fail(format!(
            "boundary form {} against distributed {} beyond max(5%, collar {})",
            b.boundary.value, b.distributed, b.boundary.collar_abs
        ));
    }
    write(cfg, &mut rep, "sderiv.json", &b.to_json())?;
    let fd = csv_of(|w| b.fd.write_csv(w));
    write(
        cfg,
        &mut rep,
        "sderiv_fd.csv",
        &with_provenance(&fd, "sderiv", cfg.h, cfg.solver_tol()),
    )?;
    Ok(rep)
}

fn sscale_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let omega = cfg.omega();
    let mats = cfg.materials();
    let dom = AugmentedDomain::new(omega, cfg.sigma_face, cfg.r0, cfg.r0, 0.25)?;
    let p0 = cfg.base_polyhedron()?;
    let n = cfg.sigma_face.outward();
    let face = facing_face(&p0, &n);
    let p1 = match cfg.pair_polyhedron()? {
        Some(p) => p,
        None => p0
            .face_offset(face, cfg.sscale_offset)
            .map_err(|e| ConfigError::Invalid {
                key: "sscale_offset".into(),
                reason: e.to_string(),
            })?,
    };
    let verts = &p0.faces()[face];
    let point = verts.iter().map(|&v| p0.vertices()[v]).sum::<Vec3>() / verts.len() as f64;
    let spec = dom.spec(cfg.sscale_h).with_focus(Focus {
        center: point,
        radius: cfg.focus_h,
        h: cfg.focus_h,
        ratio: 1.5,
    });
    let mesh = dom.mesh(&spec, &[&p0, &p1])?;
    let m1 = mesh.with_inside(mesh.tag(&p1));
    let s0 = GreenSystem::new(mesh, p0.clone(), mats, cfg.solver)?;
    let s1 = GreenSystem::new(m1, p1, mats, cfg.solver)?;
    let mut sc = SScalingConfig::new(point, p0.normal(face), cfg.h_list.clone());
    sc.lambdas = cfg.lambda_w.clone();
    let t = s_scaling_experiment(&s0, &s1, &sc)?;
    for w in &t.warnings {
        eprintln!("sscale: {w}");
    }
    if !t.passed {
        rep.fail(format!(
            "no (λ_w, direction) fit in [{}, {}]: {:?}",
            sc.band[0],
            sc.band[1],
            t.fits
                .iter()
                .map(|f| (f.lambda, f.direction, f.slope))
                .collect::<Vec<_>>()
        ));
    }
    let csv = csv_of(|w| t.write_csv(w));
    write(
        cfg,
        &mut rep,
        "sscale.csv",
        &with_provenance(&csv, "sscale", cfg.focus_h, cfg.solver_tol()),
    )?;
    Ok(rep)
}

fn stability_suite(cfg: &ExperimentConfig) -> Result<SuiteReport, CliError> {
    let mut rep = SuiteReport::default();
    let s = run_stability_sweep(cfg)?;
    for f in &s.failures {
        rep.fail(f.clone());
    }
    write(cfg, &mut rep, "stability.csv", &csv_of(|w| s.write_csv(w)))?;
    write(cfg, &mut rep, "stability.json", &s.to_json())?;
    Ok(rep)
}
