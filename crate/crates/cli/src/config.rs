//! Run configuration: JSON schema, parsing with line-anchored errors and
//! resolution into model objects.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dissipative_ising::model::{build_nearest_neighbor_couplings, build_power_law_couplings, Boundary};
use dissipative_ising::{
    CouplingMatrix, DecoherenceRates, InitialProductState, LatticeGeometry, Spacing, TimeGrid,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form description, copied to the metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub model: ModelSection,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub coupling: CouplingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    PowerLaw,
    AllToAll,
    NearestNeighbor,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub kind: CouplingKind,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// CSV matrix, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Chain,
    Square,
    Triangular,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: GeometryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Open,
    Periodic,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(default)]
    pub gamma_ud: f64,
    #[serde(default)]
    pub gamma_du: f64,
    #[serde(default)]
    pub gamma_el: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angles {
    Uniform(f64),
    PerSite(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "default_theta")]
    pub theta: Angles,
    #[serde(default = "default_phi")]
    pub phi: Angles,
}

fn default_theta() -> Angles {
    Angles::Uniform(FRAC_PI_2)
}

fn default_phi() -> Angles {
    Angles::Uniform(0.0)
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            phi: default_phi(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    Trajectories,
    Lindblad,
    Compare,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::ClosedForm => "closed_form",
            Backend::Trajectories => "trajectories",
            Backend::Lindblad => "lindblad",
            Backend::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrKind {
    #[serde(rename = "++")]
    PlusPlus,
    #[serde(rename = "+-")]
    PlusMinus,
    #[serde(rename = "-+")]
    MinusPlus,
    #[serde(rename = "--")]
    MinusMinus,
    #[serde(rename = "+z")]
    PlusZ,
    #[serde(rename = "-z")]
    MinusZ,
}

impl CorrKind {
    pub fn tag(self) -> &'static str {
        match self {
            CorrKind::PlusPlus => "pp",
            CorrKind::PlusMinus => "pm",
            CorrKind::MinusPlus => "mp",
            CorrKind::MinusMinus => "mm",
            CorrKind::PlusZ => "pz",
            CorrKind::MinusZ => "mz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PsiSpec {
    Angle(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    SpinLength,
    Bloch,
    FluctX,
    Corr {
        j: usize,
        k: usize,
        kind: CorrKind,
    },
    Variance {
        psi: f64,
    },
    Squeezing {
        psi: PsiSpec,
    },
    PhiCurve {
        #[serde(rename = "J")]
        j: f64,
        /// Γ_r/Γ_r^c values with balanced Raman rates; the configured rates when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raman_ratios: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    SingleParticle,
    DecoherenceFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Time,
    /// Multiples of the revival time `Nπ/(2|J|)`.
    Revival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpacingKind {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesSection {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: SpacingKind,
    #[serde(default)]
    pub unit: TimeUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub backend: Backend,
    pub observables: Vec<Observable>,
    pub times: TimesSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_path")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_output_path() -> PathBuf {
    PathBuf::from("output")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            path: default_output_path(),
            format: Format::default(),
        }
    }
}

/// Configuration text with its origin, for error messages.
pub struct Source {
    pub name: String,
    pub text: String,
    /// Directory against which relative paths in the config resolve.
    pub base: PathBuf,
}

impl Source {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        Ok(Self {
            name: path.display().to_string(),
            text,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Line of the last key in `path`, searching each key after the previous one.
    pub fn line_of(&self, path: &[&str]) -> Option<usize> {
        let mut pos = 0;
        for key in path {
            let needle = format!("\"{key}\"");
            pos += self.text[pos..].find(&needle)?;
        }
        Some(self.text[..pos].matches('\n').count() + 1)
    }

    /// A configuration error anchored at the line of `path` when it can be found.
    pub fn error(&self, path: &[&str], message: impl std::fmt::Display) -> CliError {
        let dotted = path.join(".");
        match self.line_of(path) {
            Some(line) => CliError::Config(format!("{}:{line}: {dotted}: {message}", self.name)),
            None => CliError::Config(format!("{}: {dotted}: {message}", self.name)),
        }
    }

    pub fn parse(&self) -> CliResult<RunConfig> {
        serde_json::from_str(&self.text).map_err(|e| {
            CliError::Config(format!("{}:{}:{}: {}", self.name, e.line(), e.column(), strip_position(&e)))
        })
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    }
}

/// A validated configuration resolved into model objects.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: RunConfig,
    pub couplings: CouplingMatrix,
    pub geometry: Option<LatticeGeometry>,
    pub rates: DecoherenceRates,
    pub initial: InitialProductState,
    pub times: TimeGrid,
    pub n_traj: usize,
    pub seed: u64,
}

pub const DEFAULT_N_TRAJ: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0;
const LINDBLAD_MAX_SPINS: usize = dissipative_ising::lindblad::MAX_SPINS;

impl Plan {
    pub fn from_source(src: &Source, seed_override: Option<u64>) -> CliResult<Self> {
        let config = src.parse()?;
        Self::resolve(src, config, seed_override)
    }

    pub fn resolve(src: &Source, config: RunConfig, seed_override: Option<u64>) -> CliResult<Self> {
        let n = config.model.n;
        if n == 0 {
            return Err(src.error(&["model", "n"], "must be at least 1"));
        }
        let geometry = resolve_geometry(src, &config.model)?;
        let couplings = resolve_couplings(src, &config.model, geometry.as_ref())?;

        let r = &config.rates;
        let rates = DecoherenceRates::new(r.gamma_ud, r.gamma_du, r.gamma_el).map_err(|e| {
            let key = match &e {
                dissipative_ising::Error::InvalidParameter { name, .. } => *name,
                _ => "gamma_ud",
            };
            src.error(&["rates", key], e)
        })?;

        let theta = expand(src, &config.initial.theta, n, "theta")?;
        let phi = expand(src, &config.initial.phi, n, "phi")?;
        let initial = InitialProductState::new(theta, phi).map_err(|e| src.error(&["initial"], e))?;

        let times = resolve_times(src, &config)?;
        let n_traj = config.run.n_traj.unwrap_or(DEFAULT_N_TRAJ);
        let seed = seed_override.or(config.run.seed).unwrap_or(DEFAULT_SEED);

        let plan = Self {
            config,
            couplings,
            geometry,
            rates,
            initial,
            times,
            n_traj,
            seed,
        };
        plan.check_compatibility(src)?;
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.config.model.n
    }

    fn check_compatibility(&self, src: &Source) -> CliResult<()> {
        let run = &self.config.run;
        let backend = run.backend;
        let x_polarized = self.initial.is_x_polarized();
        let n = self.n();
        if run.observables.is_empty() {
            return Err(src.error(&["run", "observables"], "list at least one observable"));
        }
        let needs_closed_form = matches!(backend, Backend::ClosedForm | Backend::Compare) || !run.references.is_empty();
        if needs_closed_form && !x_polarized {
            let what = if run.references.is_empty() {
                format!("backend {}", backend.name())
            } else {
                "references".to_string()
            };
            return Err(src.error(
                &["initial"],
                format!(
                    "{what} needs the x-polarized start (theta = pi/2, phi = 0 on every site); \
                     use backend \"trajectories\" or \"lindblad\" for general angles"
                ),
            ));
        }
        if matches!(backend, Backend::Lindblad | Backend::Compare) && n > LINDBLAD_MAX_SPINS {
            return Err(src.error(
                &["model", "n"],
                format!("backend {} is limited to {LINDBLAD_MAX_SPINS} spins, got {n}", backend.name()),
            ));
        }
        if matches!(backend, Backend::Trajectories | Backend::Compare) && self.n_traj < 2 {
            return Err(src.error(&["run", "n_traj"], "need at least two trajectories"));
        }
        for (i, obs) in run.observables.iter().enumerate() {
            let at = |msg: String| src.error(&["run", "observables"], format!("entry {i}: {msg}"));
            match obs {
                Observable::Corr { j, k, .. } => {
                    if *j >= n || *k >= n {
                        return Err(at(format!("sites ({j}, {k}) out of range for {n} spins")));
                    }
                    if j == k {
                        return Err(at("corr needs two distinct sites".into()));
                    }
                }
                Observable::Squeezing { psi: PsiSpec::Keyword(k) } if k != "min" => {
                    return Err(at(format!("squeezing psi must be a number or \"min\", got \"{k}\"")));
                }
                Observable::Variance { psi } | Observable::Squeezing { psi: PsiSpec::Angle(psi) } if !psi.is_finite() => {
                    return Err(at("psi must be finite".into()));
                }
                Observable::PhiCurve { j, raman_ratios } => {
                    if backend != Backend::ClosedForm {
                        return Err(at(format!(
                            "phi_curve is evaluated analytically; use backend \"closed_form\" (got \"{}\")",
                            backend.name()
                        )));
                    }
                    if !j.is_finite() || *j == 0.0 {
                        return Err(at("phi_curve J must be finite and non-zero".into()));
                    }
                    if let Some(rs) = raman_ratios {
                        if rs.is_empty() || rs.iter().any(|r| !r.is_finite() || *r < 0.0) {
                            return Err(at("raman_ratios must be a non-empty list of finite values >= 0".into()));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn expand(src: &Source, angles: &Angles, n: usize, key: &str) -> CliResult<Vec<f64>> {
    match angles {
        Angles::Uniform(v) => Ok(vec![*v; n]),
        Angles::PerSite(v) if v.len() == n => Ok(v.clone()),
        Angles::PerSite(v) => Err(src.error(&["initial", key], format!("{} values for {n} spins", v.len()))),
    }
}

fn resolve_geometry(src: &Source, model: &ModelSection) -> CliResult<Option<LatticeGeometry>> {
    let Some(g) = &model.geometry else {
        return Ok(None);
    };
    let err = |key: &str, msg: String| src.error(&["model", "geometry", key], msg);
    let dims = |want: usize| -> CliResult<Vec<usize>> {
        match &g.dims {
            Some(d) if d.len() == want => Ok(d.clone()),
            Some(d) => Err(err("dims", format!("expected {want} dimensions, got {}", d.len()))),
            None => Err(src.error(&["model", "geometry"], format!("{:?} lattice needs \"dims\"", g.kind))),
        }
    };
    let geom = match g.kind {
        GeometryKind::Chain => {
            let d = match &g.dims {
                Some(_) => dims(1)?[0],
                None => model.n,
            };
            LatticeGeometry::chain(d)
        }
        GeometryKind::Square => {
            let d = dims(2)?;
            LatticeGeometry::square(d[0], d[1])
        }
        GeometryKind::Triangular => {
            let d = dims(2)?;
            LatticeGeometry::triangular(d[0], d[1])
        }
        GeometryKind::Explicit => {
            let Some(pos) = &g.positions else {
                return Err(src.error(&["model", "geometry"], "explicit geometry needs \"positions\""));
            };
            let mut pts = Vec::with_capacity(pos.len());
            for p in pos {
                if p.is_empty() || p.len() > 3 {
                    return Err(err("positions", "each position needs 1 to 3 coordinates".into()));
                }
                let mut q = [0.0; 3];
                q[..p.len()].copy_from_slice(p);
                pts.push(q);
            }
            LatticeGeometry::explicit(pts)
        }
    }
    .map_err(|e| src.error(&["model", "geometry"], e))?;
    let geom = match g.boundary {
        Some(BoundaryKind::Periodic) => geom
            .with_boundary(Boundary::Periodic)
            .map_err(|e| err("boundary", e.to_string()))?,
        _ => geom,
    };
    if geom.n_sites() != model.n {
        return Err(src.error(
            &["model", "geometry"],
            format!("geometry has {} sites but model.n is {}", geom.n_sites(), model.n),
        ));
    }
    Ok(Some(geom))
}

fn resolve_couplings(src: &Source, model: &ModelSection, geometry: Option<&LatticeGeometry>) -> CliResult<CouplingMatrix> {
    let c = &model.coupling;
    let n = model.n;
    let need_j = || -> CliResult<f64> {
        match c.j {
            Some(j) if j.is_finite() => Ok(j),
            Some(_) => Err(src.error(&["model", "coupling", "J"], "must be finite")),
            None => Err(src.error(&["model", "coupling"], "missing \"J\"")),
        }
    };
    let need_geometry = |what: &str| -> CliResult<&LatticeGeometry> {
        geometry.ok_or_else(|| src.error(&["model", "coupling", "kind"], format!("{what} couplings need model.geometry")))
    };
    match c.kind {
        CouplingKind::AllToAll => {
            CouplingMatrix::all_to_all(n, need_j()?).map_err(|e| src.error(&["model", "coupling"], e))
        }
        CouplingKind::PowerLaw => {
            let j = need_j()?;
            let zeta = c.zeta.ok_or_else(|| src.error(&["model", "coupling"], "power_law needs \"zeta\""))?;
            if !zeta.is_finite() || zeta < 0.0 {
                return Err(src.error(&["model", "coupling", "zeta"], "must be finite and >= 0"));
            }
            if zeta == 0.0 && geometry.is_none() {
                return CouplingMatrix::all_to_all(n, j).map_err(|e| src.error(&["model", "coupling"], e));
            }
            build_power_law_couplings(need_geometry("power_law")?, j, zeta).map_err(|e| src.error(&["model", "coupling"], e))
        }
        CouplingKind::NearestNeighbor => {
            let geometry = match geometry {
                Some(g) => g.clone(),
                None => LatticeGeometry::chain(n).map_err(|e| src.error(&["model", "n"], e))?,
            };
            build_nearest_neighbor_couplings(&geometry, need_j()?).map_err(|e| src.error(&["model", "coupling"], e))
        }
        CouplingKind::File => {
            let rel = c
                .path
                .as_ref()
                .ok_or_else(|| src.error(&["model", "coupling"], "file couplings need \"path\""))?;
            let path = src.base.join(rel);
            let m = read_matrix(&path).map_err(|msg| src.error(&["model", "coupling", "path"], msg))?;
            if m.n_spins() != n {
                return Err(src.error(
                    &["model", "coupling", "path"],
                    format!("matrix is {0}x{0} but model.n is {n}", m.n_spins()),
                ));
            }
            Ok(m)
        }
    }
}

/// Reads an N×N coupling matrix from headerless CSV.
pub fn read_matrix(path: &Path) -> Result<CouplingMatrix, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(k, v)| {
                v.parse::<f64>()
                    .map_err(|_| format!("{}:{}: column {}: not a number: {v:?}", path.display(), i + 1, k + 1))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(format!("{}:{}: expected {n} columns, got {}", path.display(), i + 1, r.len()));
    }
    CouplingMatrix::from_rows(&rows).map_err(|e| format!("{}: {e}", path.display()))
}

fn resolve_times(src: &Source, config: &RunConfig) -> CliResult<TimeGrid> {
    let t = &config.run.times;
    let scale = match t.unit {
        TimeUnit::Time => 1.0,
        TimeUnit::Revival => {
            let j = config
                .model
                .coupling
                .j
                .filter(|j| j.is_finite() && *j != 0.0)
                .ok_or_else(|| src.error(&["run", "times", "unit"], "\"revival\" needs a non-zero model.coupling.J"))?;
            dissipative_ising::collective::revival_time(config.model.n, j).map_err(|e| src.error(&["run", "times", "unit"], e))?
        }
    };
    let spacing = match t.spacing {
        SpacingKind::Linear => Spacing::Linear,
        SpacingKind::Log => Spacing::Log,
    };
    TimeGrid::build(t.start * scale, t.stop * scale, t.count, spacing).map_err(|e| src.error(&["run", "times"], e))
}
