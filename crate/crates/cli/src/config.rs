//! TOML experiment configuration.
//!
//! Paths inside a config are resolved against the directory holding the
//! config file. Every check that can fail before any numerics run happens in
//! [`ExperimentConfig::load`], so a bad config never leaves partial output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diabatic::dynamics::{EvolveOptions, IntegratorKind};
use diabatic::instance::{DEFAULT_DELTA_W, DEFAULT_EDGE_PENALTY, DEFAULT_ENERGY_SCALE_GHZ};
use diabatic::spectrum::{uniform_grid, GapSearchOptions, JStarOptions};
use diabatic::sweep::{SweepOptions, DEFAULT_JXX_BRACKET};
use diabatic::{CatalystSpec, GraphInstance};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Either an explicit list or `points` uniform values from `start` to `stop`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, points } => uniform_grid(*start, *stop, *points),
        }
    }

    fn checked(&self, name: &str, ok: impl Fn(f64) -> bool, rule: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.values();
        if v.is_empty() {
            return bad(format!("{name}: axis is empty"));
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite() || !ok(**x)) {
            return bad(format!("{name}: value {x} must be {rule}"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    /// One instance file.
    pub path: Option<PathBuf>,
    /// Several instance files, in order.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    /// Canonical bipartite instances of these sizes.
    #[serde(default)]
    pub bipartite_sizes: Vec<usize>,
    pub energy_scale_ghz: Option<f64>,
    pub delta_w_raw: Option<f64>,
    pub edge_penalty_raw: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalystSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Coupled qubit pairs; defaults to the last two qubits of every
    /// subgraph after the first.
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Reference strength; J*xx is searched for when absent.
    pub strength: Option<f64>,
    /// ΔJxx applied to the reference by `spectrum` and `validate`.
    #[serde(default)]
    pub delta: f64,
    pub bracket: Option<(f64, f64)>,
    pub window: Option<(f64, f64)>,
}

fn yes() -> bool {
    true
}

impl Default for CatalystSection {
    fn default() -> Self {
        Self {
            enabled: true,
            pairs: None,
            strength: None,
            delta: 0.0,
            bracket: None,
            window: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub s: Axis,
    #[serde(default = "four")]
    pub levels: usize,
    #[serde(default = "default_prominence")]
    pub prominence_fraction: f64,
}

fn four() -> usize {
    4
}

fn default_prominence() -> f64 {
    GapSearchOptions::default().prominence_fraction
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            s: Axis::Range { start: 0.0, stop: 1.0, points: 2001 },
            levels: 4,
            prominence_fraction: default_prominence(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorKind,
}

fn default_tolerance() -> f64 {
    SweepOptions::default().evolve.tolerance
}

fn default_integrator() -> IntegratorKind {
    IntegratorKind::Magnus
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            integrator: default_integrator(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_a_us: Axis,
    pub delta_jxx: Axis,
    /// t_a rows written out as separate slices.
    #[serde(default)]
    pub slice_t_a_us: Vec<f64>,
    /// ΔJxx columns written out as separate slices.
    #[serde(default)]
    pub slice_delta_jxx: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    #[serde(default = "default_fwhm_times")]
    pub fwhm_t_a_us: Vec<f64>,
    #[serde(default = "default_decay_deltas")]
    pub decay_delta_jxx: Vec<f64>,
    #[serde(default = "default_decay_points")]
    pub decay_points: usize,
    #[serde(default = "default_decay_span")]
    pub decay_span: f64,
    #[serde(default = "default_fwhm_tolerance")]
    pub fwhm_tolerance: f64,
}

fn default_fwhm_times() -> Vec<f64> {
    vec![3.0, 5.0, 10.0]
}

fn default_decay_deltas() -> Vec<f64> {
    vec![0.05, -0.05, 0.1, -0.1]
}

fn default_decay_points() -> usize {
    SweepOptions::default().decay_points
}

fn default_decay_span() -> f64 {
    SweepOptions::default().decay_span
}

fn default_fwhm_tolerance() -> f64 {
    SweepOptions::default().fwhm_tolerance
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            fwhm_t_a_us: default_fwhm_times(),
            decay_delta_jxx: default_decay_deltas(),
            decay_points: default_decay_points(),
            decay_span: default_decay_span(),
            fwhm_tolerance: default_fwhm_tolerance(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LzSection {
    #[serde(default = "default_decay_deltas")]
    pub delta_jxx: Vec<f64>,
    /// Shared t_a axis; per-detuning Landau-Zener axes when absent.
    pub t_a_us: Option<Axis>,
}

impl Default for LzSection {
    fn default() -> Self {
        Self {
            delta_jxx: default_decay_deltas(),
            t_a_us: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    /// Bitstring pairs, qubit 0 first; the (G₀, G₁) pair when empty.
    #[serde(default)]
    pub states: Vec<(String, String)>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    #[serde(default = "default_validate_s")]
    pub s: Vec<f64>,
    #[serde(default = "default_validate_tolerance")]
    pub tolerance: f64,
}

fn default_validate_s() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

fn default_validate_tolerance() -> f64 {
    1e-9
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            s: default_validate_s(),
            tolerance: default_validate_tolerance(),
        }
    }
}

/// The file as written by the user.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub instance: InstanceSection,
    #[serde(default)]
    pub catalyst: CatalystSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub lz: LzSection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

/// A loaded instance with the label used in output rows.
#[derive(Clone, Debug)]
pub struct NamedInstance {
    pub label: String,
    pub instance: GraphInstance,
}

/// Config after resolution and validation.
#[derive(Debug)]
pub struct Resolved {
    pub raw: ExperimentConfig,
    pub base_dir: PathBuf,
    pub instances: Vec<NamedInstance>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("parse error: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Resolved, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let raw = Self::parse(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        raw.resolve(base_dir)
    }

    pub fn resolve(self, base_dir: PathBuf) -> Result<Resolved, ConfigError> {
        self.check()?;
        let instances = self.load_instances(&base_dir)?;
        for inst in &instances {
            if let Some(pairs) = &self.catalyst.pairs {
                let params = inst.instance.normalize::<f64>().map_err(|e| ConfigError(e.to_string()))?;
                CatalystSpec::new(pairs.clone(), 1.0)
                    .and_then(|c| c.validate(&params))
                    .map_err(|e| ConfigError(format!("catalyst for {}: {e}", inst.label)))?;
            }
        }
        Ok(Resolved {
            raw: self,
            base_dir,
            instances,
        })
    }

    fn check(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, x: f64| if x.is_finite() && x > 0.0 { Ok(()) } else { bad(format!("{name} must be positive, got {x}")) };
        positive("dynamics.tolerance", self.dynamics.tolerance)?;
        positive("validate.tolerance", self.validate.tolerance)?;
        positive("scaling.fwhm_tolerance", self.scaling.fwhm_tolerance)?;
        positive("scaling.decay_span", self.scaling.decay_span)?;
        if let Some(e) = self.instance.energy_scale_ghz {
            positive("instance.energy_scale_ghz", e)?;
        }
        if let Some(j) = self.catalyst.strength {
            if !(j.is_finite() && j >= 0.0) {
                return bad(format!("catalyst.strength must be non-negative, got {j}"));
            }
        }
        if !(self.catalyst.delta > -1.0) {
            return bad("catalyst.delta must exceed -1");
        }
        if let Some((lo, hi)) = self.catalyst.bracket {
            if !(lo >= 0.0 && hi > lo) {
                return bad(format!("catalyst.bracket [{lo}, {hi}] is not an increasing non-negative pair"));
            }
        }
        if let Some((lo, hi)) = self.catalyst.window {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return bad(format!("catalyst.window [{lo}, {hi}] must lie inside (0, 1)"));
            }
        }
        self.spectrum.s.checked("spectrum.s", |s| (0.0..=1.0).contains(&s), "in [0, 1]")?;
        if self.spectrum.levels < 2 {
            return bad("spectrum.levels must be at least 2");
        }
        if let Some(g) = &self.grid {
            g.t_a_us.checked("grid.t_a_us", |t| t > 0.0, "positive")?;
            g.delta_jxx.checked("grid.delta_jxx", |d| d > -1.0, "above -1")?;
        }
        if self.scaling.fwhm_t_a_us.iter().any(|t| !(*t > 0.0)) {
            return bad("scaling.fwhm_t_a_us must be positive");
        }
        if self.scaling.decay_delta_jxx.iter().chain(&self.lz.delta_jxx).any(|d| !(*d > -1.0)) {
            return bad("detunings must exceed -1");
        }
        if self.scaling.decay_points < 4 {
            return bad("scaling.decay_points must be at least 4");
        }
        if self.lz.delta_jxx.is_empty() {
            return bad("lz.delta_jxx is empty");
        }
        if let Some(t) = &self.lz.t_a_us {
            t.checked("lz.t_a_us", |t| t > 0.0, "positive")?;
        }
        if self.validate.s.is_empty() || self.validate.s.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("validate.s must be a nonempty list in [0, 1]");
        }
        Ok(())
    }

    fn load_instances(&self, base: &Path) -> Result<Vec<NamedInstance>, ConfigError> {
        let sec = &self.instance;
        let mut out = Vec::new();
        let files = sec.path.iter().chain(&sec.paths);
        for p in files {
            let full = base.join(p);
            if !full.is_file() {
                return bad(format!("instance file {} does not exist", full.display()));
            }
            let mut instance = GraphInstance::load(&full).map_err(|e| ConfigError(e.to_string()))?;
            if let Some(e) = sec.energy_scale_ghz {
                instance = instance.with_energy_scale(e).map_err(|e| ConfigError(e.to_string()))?;
            }
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            out.push(NamedInstance { label, instance });
        }
        for &n in &sec.bipartite_sizes {
            let instance = GraphInstance::bipartite(
                n,
                sec.delta_w_raw.unwrap_or(DEFAULT_DELTA_W),
                sec.edge_penalty_raw.unwrap_or(DEFAULT_EDGE_PENALTY),
                sec.energy_scale_ghz.unwrap_or(DEFAULT_ENERGY_SCALE_GHZ),
            )
            .map_err(|e| ConfigError(format!("bipartite n={n}: {e}")))?;
            out.push(NamedInstance { label: format!("bipartite_n{n}"), instance });
        }
        if out.is_empty() {
            return bad("no instance: set instance.path, instance.paths or instance.bipartite_sizes");
        }
        Ok(out)
    }
}

impl Resolved {
    pub fn single(&self, command: &str) -> Result<&NamedInstance, ConfigError> {
        match self.instances.as_slice() {
            [one] => Ok(one),
            many => bad(format!("`{command}` takes exactly one instance, config names {}", many.len())),
        }
    }

    pub fn pairs_for(&self, instance: &GraphInstance) -> Vec<(usize, usize)> {
        self.raw.catalyst.pairs.clone().unwrap_or_else(|| CatalystSpec::default_pairs(instance.sizes()))
    }

    pub fn search_options(&self) -> JStarOptions {
        let mut o = JStarOptions::default();
        if let Some(w) = self.raw.catalyst.window {
            o.window = w;
        }
        o
    }

    pub fn bracket(&self) -> (f64, f64) {
        self.raw.catalyst.bracket.unwrap_or(DEFAULT_JXX_BRACKET)
    }

    pub fn gap_options(&self) -> GapSearchOptions {
        GapSearchOptions {
            prominence_fraction: self.raw.spectrum.prominence_fraction,
            ..Default::default()
        }
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            tolerance: self.raw.dynamics.tolerance,
            integrator: self.raw.dynamics.integrator,
            samples: 1,
            tracked_levels: 2,
            ..Default::default()
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            evolve: self.evolve_options(),
            search: self.search_options(),
            bracket: self.bracket(),
            fwhm_tolerance: self.raw.scaling.fwhm_tolerance,
            decay_points: self.raw.scaling.decay_points,
            decay_span: self.raw.scaling.decay_span,
            ..Default::default()
        }
    }

    /// Hash of everything that influences results; output and cache
    /// locations are excluded.
    pub fn hash(&self) -> String {
        let mut science = self.raw.clone();
        science.out = None;
        science.cache = None;
        let files: Vec<String> = self.instances.iter().map(|i| i.instance.fingerprint()).collect();
        diabatic::cache::content_hash(&(science, files))
    }
}
