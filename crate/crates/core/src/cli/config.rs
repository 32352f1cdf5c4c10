//! Flat `key = value` experiment files.
//!
//! Blank lines and text after `#` are ignored. Lists are comma separated.
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults. Recognised keys and their defaults:
//!
//! ```text
//! out_dir          = out
//! seed             = 7
//! r0               = 0.5
//! m0               = 2             # Lipschitz constant of the class
//! omega_half       = 1.25          # Ω = [−omega_half, omega_half]³
//! sigma_face       = top           # top bottom xmin xmax ymin ymax
//! h                = 0.125
//! solver           = cholesky      # cholesky | pcg
//! pcg_tol          = 1e-10
//! pcg_max_iter     = 20000
//! interior_lambda  = 2
//! interior_mu      = 2
//! exterior_lambda  = 1
//! exterior_mu      = 1
//! base             = cube          # cube tetrahedron octahedron file
//! base_size        = 1.0           # edge length, or circumradius for the octahedron
//! base_file        =               # polyhedron JSON, for base = file
//! pair_file        =               # optional fixed D₁ used instead of the family
//! family           = pushed_face   # pushed_face translation scaling single_vertex iid
//! amplitudes       = 0.005, 0.01, 0.02   # multiples of r0
//! t_list           = 0.2, 0.1, 0.05, 0.025
//! h_list           = 0.2, 0.126, 0.0796, 0.0502, 0.0317, 0.02
//! lambda_w         = 0.6666666666666666, 0.75, 0.8
//! sscale_offset    = -0.25         # offset of the Σ-facing face of D₁ for sscale
//! sscale_h         = 0.25
//! focus_h          = 0.005
//! kernel_nu        = 10            # ν, ν′ grid points on [0, 0.49]
//! kernel_gamma     = 10            # γ grid points on [√(2/3), 1]
//! edge_margin      = 0.0625
//! workers          = 1
//! ```

use crate::elasticity::{BiphaseMaterial, IsotropicElastic};
use crate::forward::{BoxFace, SolverKind};
use crate::geometry::{BoxDomain, Vec3};
use crate::polyhedra::{AdmissibilityParams, Polyhedron};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("file {path}: {reason}")]
    File { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseShape {
    Cube,
    Tetrahedron,
    Octahedron,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// The face of the base facing Σ moved along its normal.
    PushedFace,
    Translation,
    /// Dilation about the vertex centroid.
    Scaling,
    SingleVertex,
    /// Independent displacement of every vertex, uniform in a ball.
    Iid,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::PushedFace => "pushed_face",
            Family::Translation => "translation",
            Family::Scaling => "scaling",
            Family::SingleVertex => "single_vertex",
            Family::Iid => "iid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub r0: f64,
    pub m0: f64,
    pub omega_half: f64,
    pub sigma_face: BoxFace,
    pub h: f64,
    pub solver: SolverKind,
    pub interior: IsotropicElastic,
    pub exterior: IsotropicElastic,
    pub base: BaseShape,
    pub base_size: f64,
    pub base_file: Option<PathBuf>,
    pub pair_file: Option<PathBuf>,
    pub family: Family,
    pub amplitudes: Vec<f64>,
    pub t_list: Vec<f64>,
    pub h_list: Vec<f64>,
    pub lambda_w: Vec<f64>,
    pub sscale_offset: f64,
    pub sscale_h: f64,
    pub focus_h: f64,
    pub kernel_nu: usize,
    pub kernel_gamma: usize,
    pub edge_margin: f64,
    pub workers: usize,
    /// δ₀ of the homotopy regime; amplitudes above it are rejected.
    pub delta0: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 7,
            r0: 0.5,
            m0: 2.0,
            omega_half: 1.25,
            sigma_face: BoxFace::TOP,
            h: 0.125,
            solver: SolverKind::Cholesky,
            interior: IsotropicElastic::new(2.0, 2.0).expect("valid"),
            exterior: IsotropicElastic::new(1.0, 1.0).expect("valid"),
            base: BaseShape::Cube,
            base_size: 1.0,
            base_file: None,
            pair_file: None,
            family: Family::PushedFace,
            amplitudes: vec![0.005, 0.01, 0.02],
            t_list: vec![0.2, 0.1, 0.05, 0.025],
            h_list: (0..6)
                .map(|k| 0.2 * 10f64.powf(-(k as f64) / 5.0))
                .collect(),
            lambda_w: vec![2.0 / 3.0, 0.75, 0.8],
            sscale_offset: -0.25,
            sscale_h: 0.25,
            focus_h: 0.005,
            kernel_nu: 10,
            kernel_gamma: 10,
            edge_margin: 0.0625,
            workers: 1,
            delta0: 0.05,
        }
    }
}

const KEYS: &[&str] = &[
    "out_dir",
    "seed",
    "r0",
    "m0",
    "omega_half",
    "sigma_face",
    "h",
    "solver",
    "pcg_tol",
    "pcg_max_iter",
    "interior_lambda",
    "interior_mu",
    "exterior_lambda",
    "exterior_mu",
    "base",
    "base_size",
    "base_file",
    "pair_file",
    "family",
    "amplitudes",
    "t_list",
    "h_list",
    "lambda_w",
    "sscale_offset",
    "sscale_h",
    "focus_h",
    "kernel_nu",
    "kernel_gamma",
    "edge_margin",
    "workers",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim().parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        value: v.into(),
    })
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

pub fn parse_face(s: &str) -> Option<BoxFace> {
    let (axis, upper) = match s {
        "top" | "zmax" => (2, true),
        "bottom" | "zmin" => (2, false),
        "xmin" => (0, false),
        "xmax" => (0, true),
        "ymin" => (1, false),
        "ymax" => (1, true),
        _ => return None,
    };
    Some(BoxFace { axis, upper })
}

impl ExperimentConfig {
    /// Parses `text`; relative file paths are resolved against `dir`.
    pub fn parse(text: &str, dir: &Path) -> Result<Self, ConfigError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.into()));
            }
            if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.into()));
            }
        }
        let mut c = Self::default();
        let get = |k: &str| kv.get(k).map(String::as_str).filter(|v| !v.is_empty());
        if let Some(v) = get("out_dir") {
            c.out_dir = dir.join(v);
        }
        if let Some(v) = get("seed") {
            c.seed = num("seed", v)?;
        }
        for (k, slot) in [
            ("r0", &mut c.r0),
            ("m0", &mut c.m0),
            ("omega_half", &mut c.omega_half),
            ("h", &mut c.h),
            ("base_size", &mut c.base_size),
            ("sscale_offset", &mut c.sscale_offset),
            ("sscale_h", &mut c.sscale_h),
            ("focus_h", &mut c.focus_h),
            ("edge_margin", &mut c.edge_margin),
        ] {
            if let Some(v) = get(k) {
                *slot = num(k, v)?;
            }
        }
        for (k, slot) in [
            ("kernel_nu", &mut c.kernel_nu),
            ("kernel_gamma", &mut c.kernel_gamma),
            ("workers", &mut c.workers),
        ] {
            if let Some(v) = get(k) {
                *slot = num(k, v)?;
            }
        }
        for (k, slot) in [
            ("amplitudes", &mut c.amplitudes),
            ("t_list", &mut c.t_list),
            ("h_list", &mut c.h_list),
            ("lambda_w", &mut c.lambda_w),
        ] {
            if let Some(v) = get(k) {
                *slot = list(k, v)?;
            }
        }
        if let Some(v) = get("sigma_face") {
            c.sigma_face = parse_face(v)
                .ok_or_else(|| invalid("sigma_face", format!("unknown face `{v}`")))?;
        }
        let tol: f64 = get("pcg_tol")
            .map(|v| num("pcg_tol", v))
            .transpose()?
            .unwrap_or(1e-10);
        let max_iter: usize = get("pcg_max_iter")
            .map(|v| num("pcg_max_iter", v))
            .transpose()?
            .unwrap_or(20_000);
        c.solver = match get("solver").unwrap_or("cholesky") {
            "cholesky" => SolverKind::Cholesky,
            "pcg" => SolverKind::Pcg { tol, max_iter },
            other => return Err(invalid("solver", format!("unknown solver `{other}`"))),
        };
        let phase =
            |l: &str, m: &str, def: IsotropicElastic| -> Result<IsotropicElastic, ConfigError> {
                let lambda = get(l)
                    .map(|v| num(l, v))
                    .transpose()?
                    .unwrap_or(def.lambda());
                let mu = get(m).map(|v| num(m, v)).transpose()?.unwrap_or(def.mu());
                IsotropicElastic::new(lambda, mu).map_err(|e| invalid(m, e.to_string()))
            };
        c.interior = phase("interior_lambda", "interior_mu", c.interior)?;
        c.exterior = phase("exterior_lambda", "exterior_mu", c.exterior)?;
        if let Some(v) = get("base") {
            c.base = match v {
                "cube" => BaseShape::Cube,
                "tetrahedron" => BaseShape::Tetrahedron,
                "octahedron" => BaseShape::Octahedron,
                "file" => BaseShape::File,
                other => return Err(invalid("base", format!("unknown base `{other}`"))),
            };
        }
        c.base_file = get("base_file").map(|v| dir.join(v));
        c.pair_file = get("pair_file").map(|v| dir.join(v));
        if let Some(v) = get("family") {
            c.family = match v {
                "pushed_face" => Family::PushedFace,
                "translation" => Family::Translation,
                "scaling" => Family::Scaling,
                "single_vertex" => Family::SingleVertex,
                "iid" => Family::Iid,
                other => return Err(invalid("family", format!("unknown family `{other}`"))),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.into(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (k, v) in [
            ("r0", self.r0),
            ("m0", self.m0),
            ("omega_half", self.omega_half),
            ("h", self.h),
            ("base_size", self.base_size),
            ("sscale_h", self.sscale_h),
            ("focus_h", self.focus_h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(k, format!("must be positive, got {v}")));
            }
        }
        if self.edge_margin < 0.0 {
            return Err(invalid("edge_margin", "must be non-negative"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.kernel_nu < 2 || self.kernel_gamma < 2 {
            return Err(invalid("kernel_nu", "grids need at least 2 points"));
        }
        if let Some(a) = self
            .amplitudes
            .iter()
            .find(|a| !(**a >= 0.0 && **a <= self.delta0))
        {
            return Err(invalid(
                "amplitudes",
                format!("{a} is outside [0, {}], the homotopy regime", self.delta0),
            ));
        }
        if let Some(t) = self.t_list.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(invalid("t_list", format!("{t} is outside (0, 1]")));
        }
        if let Some(h) = self.h_list.iter().find(|h| !(**h > 0.0)) {
            return Err(invalid("h_list", format!("{h} is not positive")));
        }
        if let Some(l) = self.lambda_w.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(invalid("lambda_w", format!("{l} is outside (0, 1)")));
        }
        if self.base == BaseShape::File && self.base_file.is_none() {
            return Err(invalid("base_file", "required for base = file"));
        }
        for (k, p) in [
            ("base_file", &self.base_file),
            ("pair_file", &self.pair_file),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(invalid(k, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<AdmissibilityParams, ConfigError> {
        AdmissibilityParams::new(self.r0, self.m0, 20.0, std::f64::consts::PI / 6.0)
            .map_err(|e| invalid("m0", e.to_string()))
    }

    pub fn omega(&self) -> BoxDomain {
        BoxDomain::centered(Vec3::zeros(), 2.0 * self.omega_half)
    }

    pub fn materials(&self) -> BiphaseMaterial {
        BiphaseMaterial::detect(self.interior, self.exterior)
    }

    pub fn solver_tol(&self) -> f64 {
        match self.solver {
            SolverKind::Cholesky => 0.0,
            SolverKind::Pcg { tol, .. } => tol,
        }
    }

    pub fn base_polyhedron(&self) -> Result<Polyhedron, ConfigError> {
        let s = self.base_size;
        Ok(match self.base {
            BaseShape::Cube => Polyhedron::cube(Vec3::zeros(), s),
            BaseShape::Tetrahedron => Polyhedron::regular_tetrahedron(Vec3::zeros(), s),
            BaseShape::Octahedron => Polyhedron::octahedron(Vec3::zeros(), s),
            BaseShape::File => read_polyhedron(self.base_file.as_deref().expect("validated"))?,
        })
    }

    pub fn pair_polyhedron(&self) -> Result<Option<Polyhedron>, ConfigError> {
        self.pair_file.as_deref().map(read_polyhedron).transpose()
    }
}

pub fn read_polyhedron(path: &Path) -> Result<Polyhedron, ConfigError> {
    let err = |reason: String| ConfigError::File {
        path: path.into(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    Polyhedron::from_json_str(&text).map_err(|e| err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::parse("", Path::new(".")).unwrap();
        assert_eq!(c.amplitudes, vec![0.005, 0.01, 0.02]);
        assert_eq!(c.h_list.len(), 6);
        let c = ExperimentConfig::parse(
            "# comment\nseed = 11\nsolver = pcg\npcg_tol = 1e-9 # inline\namplitudes = 0.01,0.02\nsigma_face = xmin\n",
            Path::new("/tmp"),
        )
        .unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(
            c.solver,
            SolverKind::Pcg {
                tol: 1e-9,
                max_iter: 20_000
            }
        );
        assert_eq!(c.amplitudes, vec![0.01, 0.02]);
        assert_eq!(
            c.sigma_face,
            BoxFace {
                axis: 0,
                upper: false
            }
        );
    }

    #[test]
    fn malformed_input_is_rejected() {
        let p = Path::new(".");
        assert!(matches!(
            ExperimentConfig::parse("seed 3", p),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("sead = 3", p),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("h = 1\nh = 2", p),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("h = abc", p),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("amplitudes = 0.5", p),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("interior_mu = -1", p),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("base = file\nbase_file = nope.json", p),
            Err(ConfigError::Invalid { .. })
        ));
    }
}
