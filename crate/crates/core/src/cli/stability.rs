//! Perturbation families and the sweep of d_H against r₀²‖Λ_{D₀} − Λ_{D₁}‖_*.

use super::config::{ExperimentConfig, Family};
use super::CliError;
use crate::elasticity::Monotonicity;
use crate::forward::{dtn_assemble, dtn_norm_diff, DtnOperator, Fem, Mesh, Sigma, TraceGrams};
use crate::geometry::Vec3;
use crate::homotopy::{build_field, HomotopyOptions};
use crate::polyhedra::{validate_class_p, Polyhedron};
use crate::shape_deriv::ShapeProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall, UnitSphere};
use serde::Serialize;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Index of the face of `p` whose outward normal is closest to `dir`.
pub fn facing_face(p: &Polyhedron, dir: &Vec3) -> usize {
    (0..p.faces().len())
        .max_by(|&a, &b| p.normal(a).dot(dir).total_cmp(&p.normal(b).dot(dir)))
        .expect("polyhedron has faces")
}

/// Member of `family` at displacement size `amount`; `index` selects the
/// random stream for the stochastic families.
pub fn perturb(
    base: &Polyhedron,
    family: Family,
    amount: f64,
    towards: &Vec3,
    seed: u64,
    index: u64,
) -> Result<Polyhedron, String> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index + 1)));
    let dir = |rng: &mut ChaCha8Rng| Vec3::from(UnitSphere.sample(rng));
    match family {
        Family::PushedFace => base
            .face_offset(facing_face(base, towards), amount)
            .map_err(|e| e.to_string()),
        Family::Translation => Ok(base.translated(&(dir(&mut rng) * amount))),
        Family::Scaling => {
            let c = base.centroid();
            let rmax = base
                .vertices()
                .iter()
                .map(|v| (v - c).norm())
                .fold(0.0, f64::max);
            Ok(base.scaled(1.0 + amount / rmax, &c))
        }
        Family::SingleVertex => {
            let v = rng.random_range(0..base.vertices().len());
            base.vertex_moved(v, &(dir(&mut rng) * amount))
                .map_err(|e| e.to_string())
        }
        Family::Iid => {
            let vs = base
                .vertices()
                .iter()
                .map(|v| v + Vec3::from(UnitBall.sample(&mut rng)) * amount)
                .collect();
            base.with_vertices(vs).map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Amplitude as a multiple of r₀.
    pub amplitude: f64,
    pub d_h: f64,
    /// r₀²‖Λ_{D₀} − Λ_{D₁}‖_*.
    pub norm: f64,
    /// |d_H − C·norm| / d_H under the fitted C.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSkip {
    pub amplitude: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub family: String,
    pub r0: f64,
    pub h: f64,
    pub solver_tol: f64,
    pub points: Vec<SweepPoint>,
    pub skipped: Vec<SweepSkip>,
    /// Slope of the fit through the origin, the empirical Lipschitz constant.
    pub slope: Option<f64>,
    pub correlation: Option<f64>,
    pub max_deviation: f64,
    pub residual: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl StabilitySummary {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "suite,family,mesh_h,solver_tol,r0,amplitude,d_h,r0sq_norm,deviation"
        )?;
        for p in &self.points {
            writeln!(
                w,
                "stability,{},{},{:e},{},{},{:.12e},{:.12e},{:.6e}",
                self.family,
                self.h,
                self.solver_tol,
                self.r0,
                p.amplitude,
                p.d_h,
                p.norm,
                p.deviation
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub const MIN_CORRELATION: f64 = 0.95;
pub const MAX_DEVIATION: f64 = 0.15;

/// Least squares through the origin, Pearson correlation and per-point deviation.
pub fn origin_fit(x: &[f64], y: &[f64]) -> (Option<f64>, Option<f64>, Vec<f64>, f64) {
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    if sxx == 0.0 {
        return (None, None, vec![0.0; x.len()], 0.0);
    }
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let dev = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            if *b == 0.0 {
                (c * a).abs()
            } else {
                (b - c * a).abs() / b.abs()
            }
        })
        .collect();
    let residual = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - c * a).powi(2))
        .sum::<f64>()
        .sqrt();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let corr = (vx > 0.0 && vy > 0.0).then(|| sxy / (vx * vy).sqrt());
    (Some(c), corr, dev, residual)
}

enum Outcome {
    Point(f64, f64),
    Skip(String),
}

fn one_pair(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    sigma: &Sigma,
    p0: &Polyhedron,
    l0: &DtnOperator,
    grams: &TraceGrams,
    p1: Result<Polyhedron, String>,
) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let p1 = match p1 {
        Ok(p) => p,
        Err(e) => return Ok(Outcome::Skip(format!("generator: {e}"))),
    };
    let rep = validate_class_p(&p1, &cfg.omega(), &params);
    if !rep.passed() {
        let failed: Vec<_> = rep
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        return Ok(Outcome::Skip(format!("class check failed: {failed:?}")));
    }
    let opts = HomotopyOptions {
        delta0: cfg.delta0,
        ..Default::default()
    };
    let field = match build_field(p0, &p1, &params, &opts) {
        Ok(f) => f,
        Err(e) => return Ok(Outcome::Skip(format!("homotopy: {e}"))),
    };
    let sp = ShapeProblem::new(
        mesh.clone(),
        sigma.clone(),
        cfg.materials(),
        cfg.solver,
        |x| field.displacement(x),
    )?;
    let m1 = sp.moved(1.0)?;
    let l1 = dtn_assemble(&m1, &sp.fem(&m1)?, sigma, cfg.solver)?;
    let norm = cfg.r0 * cfg.r0 * dtn_norm_diff(l0, &l1, grams)?;
    Ok(Outcome::Point(field.d_h, norm))
}

/// Sweeps the configured family over the amplitudes. Λ_{D₁} is assembled
/// on the reference mesh moved by the homotopy, so every point differs from
/// Λ_{D₀} only through the geometry.
pub fn run_stability_sweep(cfg: &ExperimentConfig) -> Result<StabilitySummary, CliError> {
    let mats = cfg.materials();
    if mats.monotonicity == Monotonicity::None {
        return Err(CliError::NotMonotone {
            interior: (cfg.interior.lambda(), cfg.interior.mu()),
            exterior: (cfg.exterior.lambda(), cfg.exterior.mu()),
        });
    }
    let omega = cfg.omega();
    let p0 = cfg.base_polyhedron()?;
    let base = validate_class_p(&p0, &omega, &cfg.params()?);
    if !base.passed() {
        return Err(CliError::Base(base.to_text()));
    }
    let mesh = Mesh::inclusion(&omega, &p0, cfg.h)?;
    let sigma = Sigma::on_face(&mesh, &omega, cfg.sigma_face)?;
    let grams = TraceGrams::new(&mesh, &sigma, cfg.r0)?;
    let lame = mesh.inside.iter().map(|&i| mats.phase(i).lame()).collect();
    let l0 = dtn_assemble(&mesh, &Fem::new(&mesh, lame)?, &sigma, cfg.solver)?;
    let towards = cfg.sigma_face.outward();

    let n = cfg.amplitudes.len();
    let results: Mutex<Vec<Option<Result<Outcome, CliError>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let amount = cfg.amplitudes[i] * cfg.r0;
                let p1 = perturb(&p0, cfg.family, amount, &towards, cfg.seed, i as u64);
                let out = one_pair(cfg, &mesh, &sigma, &p0, &l0, &grams, p1);
                results.lock().expect("no poisoned lock")[i] = Some(out);
            });
        }
    });

    let mut raw = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .enumerate()
    {
        let amplitude = cfg.amplitudes[i];
        match r.expect("every index visited")? {
            Outcome::Point(d_h, norm) => raw.push((amplitude, d_h, norm)),
            Outcome::Skip(reason) => {
                eprintln!("stability: amplitude {amplitude} skipped: {reason}");
                skipped.push(SweepSkip { amplitude, reason });
            }
        }
    }
    let x: Vec<f64> = raw.iter().map(|p| p.2).collect();
    let y: Vec<f64> = raw.iter().map(|p| p.1).collect();
    let (slope, correlation, dev, residual) = origin_fit(&x, &y);
    let points: Vec<SweepPoint> = raw
        .iter()
        .zip(&dev)
        .map(|(&(amplitude, d_h, norm), &deviation)| SweepPoint {
            amplitude,
            d_h,
            norm,
            deviation,
        })
        .collect();
    let max_deviation = dev.iter().copied().fold(0.0, f64::max);
    let mut failures = Vec::new();
    let degenerate = x.iter().all(|v| *v == 0.0) && y.iter().all(|v| *v <= 1e-12 * cfg.r0);
    if points.is_empty() {
        failures.push("no admissible pair in the sweep".to_string());
    } else if !degenerate {
        match correlation {
            Some(c) if c >= MIN_CORRELATION => {}
            Some(c) => failures.push(format!("correlation {c:.4} below {MIN_CORRELATION}")),
            None if points.len() < 2 => {}
            None => failures.push("correlation undefined".to_string()),
        }
        if max_deviation > MAX_DEVIATION {
            failures.push(format!(
                "deviation {max_deviation:.4} above {MAX_DEVIATION}"
            ));
        }
    }
    Ok(StabilitySummary {
        family: cfg.family.name().to_string(),
        r0: cfg.r0,
        h: cfg.h,
        solver_tol: cfg.solver_tol(),
        points,
        skipped,
        slope,
        correlation,
        max_deviation,
        residual,
        passed: failures.is_empty(),
        failures,
    })
}
