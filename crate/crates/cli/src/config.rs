//! Experiment configuration. Files use TOML syntax but are read as a flat map
//! of dotted keys (`params.beta = 0.05`); every key must be recognized for the
//! chosen scale, and every problem found is reported at once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chemoscale::chemotaxis::ChemoParams;
use chemoscale::compare::EpsilonSearch;
use chemoscale::euler::EulerParams;
use chemoscale::grid::{PhaseGrid, SpatialGrid};
use chemoscale::kernel::AlignmentKernel;
use chemoscale::time::StepSchedule;
use chemoscale::vlasov::VlasovParams;
use toml::Value;

use crate::error::{CliError, Result};

/// Dotted key to value.
pub type Flat = BTreeMap<String, Value>;

pub fn parse_flat(text: &str, origin: &str) -> Result<Flat> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut flat = Flat::new();
    flatten("", table, &mut flat);
    Ok(flat)
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Applies a `key=value` override. The value is read as a TOML value and
/// falls back to a bare string.
pub fn apply_override(flat: &mut Flat, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::BadOverride(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::BadOverride(spec.to_string()));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    flat.insert(key.to_string(), value);
    Ok(())
}

/// Renders a value the way it is written in config files.
pub fn render(value: &Value) -> String {
    match value {
        Value::String(s) => format!("{s:?}"),
        Value::Array(items) => format!("[{}]", items.iter().map(render).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Particle,
    Vlasov,
    Euler,
    Compare,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Particle => "particle",
            Scale::Vlasov => "vlasov",
            Scale::Euler => "euler",
            Scale::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDataSpec {
    TwoBumpV {
        v0: f64,
        sigma_x: f64,
        sigma_v: f64,
    },
    MonokineticGauss {
        x0: f64,
        v0: f64,
        sigma_x: f64,
        sigma_v: f64,
    },
    TwoBumpXv {
        x1: f64,
        v1: f64,
        x2: f64,
        v2: f64,
        sigma_x: f64,
        sigma_v: f64,
    },
    CosineDensity {
        c2: f64,
    },
    /// `x,v,value` rows for phase-space scales, `x,mu,Q` rows for `euler`.
    CustomCsv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// `None` when the alignment term is switched off.
    pub kernel: Option<AlignmentKernel>,
    pub chemo: ChemoParams,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_final: f64,
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSpec {
    pub n: usize,
    pub normalize_source: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerSpec {
    pub nx: usize,
    pub blowup_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    E0,
    E1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub times: Vec<f64>,
    /// Pressure coefficients with a full Euler run each.
    pub epsilons: Vec<f64>,
    pub search: Option<EpsilonSearch>,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub scale: Scale,
    pub x_min: f64,
    pub x_max: f64,
    /// Phase-space x spacing.
    pub dx: Option<f64>,
    /// `(v_min, v_max, dv)`.
    pub v: Option<(f64, f64, f64)>,
    pub params: ModelParams,
    pub initial: InitialDataSpec,
    pub time: TimeSpec,
    pub seed: Option<u64>,
    pub particles: Option<ParticleSpec>,
    pub euler: Option<EulerSpec>,
    /// Tolerated velocity-boundary loss relative to the initial mass.
    pub max_boundary_loss: Option<f64>,
    pub compare: Option<CompareSpec>,
    /// Half-width of the velocity band whose mass fraction is reported.
    pub v_band: Option<f64>,
    pub write_phase: bool,
    pub output_dir: Option<PathBuf>,
    pub inferred: Vec<String>,
    /// Every key as resolved, echoed into the run header.
    pub resolved: Flat,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

struct Reader<'a> {
    map: &'a Flat,
    used: BTreeSet<String>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(map: &'a Flat) -> Self {
        Self {
            map,
            used: BTreeSet::new(),
            errors: Vec::new(),
        }
    }

    fn fail(&mut self, key: &str, message: impl fmt::Display) {
        self.errors.push(format!("{key}: {message}"));
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.map.get(key)
    }

    fn missing<T>(&mut self, key: &str, fallback: T) -> T {
        self.fail(key, "missing");
        fallback
    }

    fn number_opt(&mut self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.fail(key, format!("expected a number, got {}", type_name(other)));
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> f64 {
        if !self.map.contains_key(key) {
            self.used.insert(key.to_string());
            return self.missing(key, f64::NAN);
        }
        self.number_opt(key).unwrap_or(f64::NAN)
    }

    fn integer_opt(&mut self, key: &str) -> Option<i64> {
        match self.raw(key)? {
            Value::Integer(i) => Some(*i),
            other => {
                self.fail(key, format!("expected an integer, got {}", type_name(other)));
                None
            }
        }
    }

    fn count(&mut self, key: &str) -> usize {
        if !self.map.contains_key(key) {
            self.used.insert(key.to_string());
            return self.missing(key, 0);
        }
        match self.integer_opt(key) {
            Some(i) if i >= 1 => i as usize,
            Some(i) => {
                self.fail(key, format!("must be at least 1, got {i}"));
                0
            }
            None => 0,
        }
    }

    fn flag_opt(&mut self, key: &str) -> Option<bool> {
        match self.raw(key)? {
            Value::Boolean(b) => Some(*b),
            other => {
                self.fail(key, format!("expected true or false, got {}", type_name(other)));
                None
            }
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        if !self.map.contains_key(key) {
            self.used.insert(key.to_string());
            return self.missing(key, false);
        }
        self.flag_opt(key).unwrap_or(false)
    }

    fn text_opt(&mut self, key: &str) -> Option<String> {
        match self.raw(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.fail(key, format!("expected a string, got {}", type_name(other)));
                None
            }
        }
    }

    fn text(&mut self, key: &str) -> String {
        if !self.map.contains_key(key) {
            self.used.insert(key.to_string());
            return self.missing(key, String::new());
        }
        self.text_opt(key).unwrap_or_default()
    }

    fn numbers(&mut self, key: &str) -> Vec<f64> {
        let Some(value) = self.raw(key) else {
            return self.missing(key, Vec::new());
        };
        let Value::Array(items) = value else {
            self.fail(key, format!("expected an array of numbers, got {}", type_name(value)));
            return Vec::new();
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(f) => out.push(*f),
                Value::Integer(i) => out.push(*i as f64),
                other => {
                    self.fail(key, format!("expected numbers, found {}", type_name(other)));
                    return Vec::new();
                }
            }
        }
        out
    }

    fn strings_opt(&mut self, key: &str) -> Vec<String> {
        let Some(value) = self.raw(key) else {
            return Vec::new();
        };
        let Value::Array(items) = value else {
            self.fail(key, format!("expected an array of strings, got {}", type_name(value)));
            return Vec::new();
        };
        items
            .iter()
            .filter_map(|item| match item {
                Value::String(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    fn positive(&mut self, key: &str) -> f64 {
        let v = self.number(key);
        if v.is_finite() && v <= 0.0 {
            self.fail(key, format!("must be positive, got {v}"));
        }
        v
    }

    fn nonnegative(&mut self, key: &str) -> f64 {
        let v = self.number(key);
        if v < 0.0 {
            self.fail(key, format!("must be nonnegative, got {v}"));
        }
        v
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative `initial.path` values are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let flat = parse_flat(&text, &path.display().to_string())?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Self::from_flat(flat, &name, path.parent())
    }

    pub fn from_flat(flat: Flat, default_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut r = Reader::new(&flat);

        let name = r.text_opt("meta.name").unwrap_or_else(|| default_name.to_string());
        r.text_opt("meta.description");
        let inferred = r.strings_opt("meta.inferred");

        let scale_text = r.text("scale");
        let scale = match scale_text.as_str() {
            "particle" => Scale::Particle,
            "vlasov" => Scale::Vlasov,
            "euler" => Scale::Euler,
            "compare" => Scale::Compare,
            other => {
                if !other.is_empty() {
                    r.fail("scale", format!("expected particle, vlasov, euler or compare, got `{other}`"));
                }
                Scale::Vlasov
            }
        };
        let phase_scale = scale != Scale::Euler;

        let x_min = r.number("grid.x_min");
        let x_max = r.number("grid.x_max");
        if x_max <= x_min {
            r.fail("grid.x_max", format!("must exceed grid.x_min ({x_min}), got {x_max}"));
        }
        let (dx, v) = if phase_scale {
            let dx = r.positive("grid.dx");
            let v_min = r.number("grid.v_min");
            let v_max = r.number("grid.v_max");
            let dv = r.positive("grid.dv");
            if v_max <= v_min {
                r.fail("grid.v_max", format!("must exceed grid.v_min ({v_min}), got {v_max}"));
            }
            (Some(dx), Some((v_min, v_max, dv)))
        } else {
            (None, None)
        };

        let alignment = r.flag("params.alignment");
        let kernel = if alignment {
            let beta = r.positive("params.beta");
            let radius = r.positive("params.kernel_radius");
            AlignmentKernel::new(beta, radius).ok()
        } else {
            None
        };
        let eta = r.nonnegative("params.eta");
        let chemo = if eta != 0.0 {
            let d = r.nonnegative("params.diffusion");
            let kappa = r.nonnegative("params.kappa");
            let radius = r.nonnegative("params.chemo_radius");
            match ChemoParams::new(d, kappa, radius, eta) {
                Ok(c) => c,
                Err(e) => {
                    if d.is_finite() && kappa.is_finite() && radius.is_finite() {
                        r.fail("params", e);
                    }
                    ChemoParams::off()
                }
            }
        } else {
            // Chemical constants are accepted but unused when the coupling is off.
            r.number_opt("params.diffusion");
            r.number_opt("params.kappa");
            r.number_opt("params.chemo_radius");
            ChemoParams::off()
        };
        let alpha = r.nonnegative("params.alpha");
        let epsilon = (scale == Scale::Euler).then(|| r.nonnegative("params.epsilon"));
        let p = matches!(scale, Scale::Euler | Scale::Compare).then(|| {
            let p = r.number("params.p");
            if p.is_finite() && p <= 1.0 {
                r.fail("params.p", format!("must exceed 1, got {p}"));
            }
            p
        });
        let params = ModelParams {
            kernel,
            chemo,
            alpha,
            epsilon,
            p,
        };

        let initial = read_initial(&mut r, base_dir);
        match (&initial, phase_scale) {
            (InitialDataSpec::CosineDensity { .. }, true) => {
                r.fail("initial.kind", format!("cosine_density is hydrodynamic data, not usable at scale {scale}"))
            }
            (InitialDataSpec::TwoBumpV { .. } | InitialDataSpec::MonokineticGauss { .. } | InitialDataSpec::TwoBumpXv { .. }, false) => {
                r.fail("initial.kind", "phase-space data needs a phase grid; use scale = \"compare\" or custom_csv")
            }
            _ => {}
        }

        let time = TimeSpec {
            dt: r.positive("time.dt"),
            t_final: r.positive("time.t_final"),
            snapshots: r.numbers("time.snapshots"),
        };
        for &s in &time.snapshots {
            if !(s >= 0.0 && s <= time.t_final) {
                r.fail("time.snapshots", format!("{s} lies outside [0, {}]", time.t_final));
            }
        }

        let particles = match scale {
            Scale::Particle => Some(read_particles(&mut r)),
            Scale::Vlasov if flat.contains_key("particles.n") => Some(read_particles(&mut r)),
            _ => None,
        };
        let seed = if particles.is_some() {
            match r.integer_opt("seed") {
                Some(s) if s >= 0 => Some(s as u64),
                Some(s) => {
                    r.fail("seed", format!("must be nonnegative, got {s}"));
                    None
                }
                None => {
                    if !flat.contains_key("seed") {
                        r.fail("seed", "missing (particle sampling needs a recorded seed)");
                    }
                    None
                }
            }
        } else {
            None
        };

        let euler = matches!(scale, Scale::Euler | Scale::Compare).then(|| EulerSpec {
            nx: r.count("euler.nx"),
            blowup_factor: r.positive("euler.blowup_factor"),
        });
        let max_boundary_loss =
            matches!(scale, Scale::Vlasov | Scale::Compare).then(|| r.nonnegative("vlasov.max_boundary_loss"));
        let compare = (scale == Scale::Compare).then(|| read_compare(&mut r, &time));
        let v_band = if matches!(scale, Scale::Vlasov | Scale::Particle) {
            let b = r.number_opt("diagnostics.v_band");
            if let Some(b) = b {
                if b <= 0.0 {
                    r.fail("diagnostics.v_band", format!("must be positive, got {b}"));
                }
            }
            b
        } else {
            None
        };
        let write_phase = if scale == Scale::Vlasov {
            r.flag_opt("output.phase").unwrap_or(false)
        } else {
            false
        };
        let output_dir = r.text_opt("output.dir").map(PathBuf::from);

        for key in &inferred {
            if !flat.contains_key(key) {
                r.errors.push(format!("meta.inferred: `{key}` is not a key of this config"));
            }
        }
        let unknown: Vec<String> = flat.keys().filter(|k| !r.used.contains(*k)).cloned().collect();
        for key in unknown {
            r.fail(&key, format!("unknown key for scale {scale}"));
        }

        let mut errors = r.errors;
        let config = ExperimentConfig {
            name,
            scale,
            x_min,
            x_max,
            dx,
            v,
            params,
            initial,
            time,
            seed,
            particles,
            euler,
            max_boundary_loss,
            compare,
            v_band,
            write_phase,
            output_dir,
            inferred,
            resolved: flat.clone(),
        };
        if errors.is_empty() {
            config.check_solver_inputs(&mut errors);
        }
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(CliError::Validation(errors))
        }
    }

    /// Constructs the grids and schedules once so that solver-side rejections
    /// surface as validation errors.
    fn check_solver_inputs(&self, errors: &mut Vec<String>) {
        if self.scale != Scale::Euler {
            if let Err(e) = self.phase_grid() {
                errors.push(format!("grid: {e}"));
            }
            if let Err(e) = StepSchedule::new(self.time.dt, self.time.t_final, &self.time.snapshots) {
                errors.push(format!("time: {e}"));
            }
        }
        if self.euler.is_some() {
            if let Err(e) = self.euler_grid() {
                errors.push(format!("euler.nx: {e}"));
            }
        }
        if let Some(c) = &self.compare {
            if let Some(s) = &c.search {
                if let Err(e) = EpsilonSearch::new(s.lo, s.hi, s.tol) {
                    errors.push(format!("compare: {e}"));
                }
            }
        }
    }

    pub fn phase_grid(&self) -> chemoscale::Result<PhaseGrid> {
        let dx = self.dx.unwrap_or(f64::NAN);
        let (v_min, v_max, dv) = self.v.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        PhaseGrid::from_spacing((self.x_min, self.x_max, dx), (v_min, v_max, dv))
    }

    /// Bounded hydrodynamic grid over the configured x range.
    pub fn euler_grid(&self) -> chemoscale::Result<SpatialGrid> {
        let nx = self.euler.map_or(0, |e| e.nx);
        SpatialGrid::bounded(self.x_min, self.x_max, nx)
    }

    pub fn vlasov_params(&self) -> chemoscale::Result<VlasovParams> {
        VlasovParams::new(self.params.kernel, self.params.chemo, self.params.alpha)
    }

    pub fn euler_params(&self, epsilon: f64) -> chemoscale::Result<EulerParams> {
        EulerParams::new(
            self.params.kernel,
            self.params.chemo,
            self.params.alpha,
            epsilon,
            self.params.p.unwrap_or(2.0),
        )
    }
}

fn read_particles(r: &mut Reader) -> ParticleSpec {
    ParticleSpec {
        n: r.count("particles.n"),
        normalize_source: r.flag("particles.normalize_source"),
    }
}

fn read_compare(r: &mut Reader, time: &TimeSpec) -> CompareSpec {
    let times = r.numbers("compare.times");
    for &t in &times {
        if !time.snapshots.iter().any(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0)) {
            r.fail("compare.times", format!("{t} is not one of time.snapshots"));
        }
    }
    let epsilons = r.numbers("compare.epsilons");
    for &e in &epsilons {
        if e < 0.0 {
            r.fail("compare.epsilons", format!("must be nonnegative, got {e}"));
        }
    }
    let optimize = r.flag("compare.optimize");
    let (search, objective) = if optimize {
        let lo = r.nonnegative("compare.eps_lo");
        let hi = r.number("compare.eps_hi");
        let tol = r.positive("compare.eps_tol");
        let objective = match r.text("compare.objective").as_str() {
            "E0" => Objective::E0,
            "E1" => Objective::E1,
            "" => Objective::E0,
            other => {
                r.fail("compare.objective", format!("expected \"E0\" or \"E1\", got `{other}`"));
                Objective::E0
            }
        };
        let search = EpsilonSearch::new(lo, hi, tol).ok();
        if search.is_none() && lo.is_finite() && hi.is_finite() && tol.is_finite() {
            r.fail("compare.eps_hi", format!("need 0 <= eps_lo < eps_hi, got [{lo}, {hi}]"));
        }
        (search, objective)
    } else {
        (None, Objective::E0)
    };
    if epsilons.is_empty() && !optimize {
        r.fail("compare.epsilons", "empty and compare.optimize is false: nothing to compare");
    }
    CompareSpec {
        times,
        epsilons,
        search,
        objective,
    }
}

fn read_initial(r: &mut Reader, base_dir: Option<&Path>) -> InitialDataSpec {
    let kind = r.text("initial.kind");
    let sigma = |r: &mut Reader| (r.positive("initial.sigma_x"), r.positive("initial.sigma_v"));
    match kind.as_str() {
        "two_bump_v" => {
            let v0 = r.number("initial.v0");
            let (sigma_x, sigma_v) = sigma(r);
            InitialDataSpec::TwoBumpV { v0, sigma_x, sigma_v }
        }
        "monokinetic_gauss" => {
            let x0 = r.number("initial.x0");
            let v0 = r.number("initial.v0");
            let (sigma_x, sigma_v) = sigma(r);
            InitialDataSpec::MonokineticGauss {
                x0,
                v0,
                sigma_x,
                sigma_v,
            }
        }
        "two_bump_xv" => {
            let x1 = r.number("initial.x1");
            let v1 = r.number("initial.v1");
            let x2 = r.number("initial.x2");
            let v2 = r.number("initial.v2");
            let (sigma_x, sigma_v) = sigma(r);
            InitialDataSpec::TwoBumpXv {
                x1,
                v1,
                x2,
                v2,
                sigma_x,
                sigma_v,
            }
        }
        "cosine_density" => InitialDataSpec::CosineDensity {
            c2: r.nonnegative("initial.c2"),
        },
        "custom_csv" => {
            let path = PathBuf::from(r.text("initial.path"));
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path,
            };
            InitialDataSpec::CustomCsv { path }
        }
        other => {
            if !other.is_empty() {
                r.fail(
                    "initial.kind",
                    format!(
                        "expected two_bump_v, monokinetic_gauss, two_bump_xv, cosine_density or custom_csv, got `{other}`"
                    ),
                );
            }
            InitialDataSpec::CosineDensity { c2: 0.0 }
        }
    }
}
