//! TOML run configuration: schema, defaults, validation and the
//! resolved-config echo.
//!
//! Units: every time (`horizon`, `delay`, `h`, `h_r`, impulse times, lags,
//! `sigmas`, `t0`, snapshot times) is in the unit of `model.horizon`.
//! Modal vectors (`w`, `y`, `coeffs`, ...) list coefficients of modes
//! `1..=N` in the orthonormal basis `√2 sin(nπx)`.

use std::fmt;
use std::path::{Path, PathBuf};

use beamctl_core::dynamics::{
    default_grid_points, node_index, Envelope, Forcing, GrowthConstants, History, Impulse, ImpulseMap, Nonlinearity,
    Nonlocal, PicardOptions, ProblemSpec, Segment,
};
use beamctl_core::synthesis::{default_sigmas, sigma_limit, ContractionOptions, FixedPointOptions};
use beamctl_core::{ControlSignal, ModalCoeffs, ModelParams, SpatialGrid, StateZ};
use serde::{Deserialize, Serialize};

/// A load-time failure tied to a configuration key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub grids: GridsBlock,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impulses: Vec<ImpulseBlock>,
    #[serde(default)]
    pub delays: DelaysBlock,
    #[serde(default)]
    pub nonlocal: NonlocalBlock,
    #[serde(default)]
    pub forcing: ForcingBlock,
    #[serde(default)]
    pub nonlinearity: NonlinearityBlock,
    #[serde(default)]
    pub history: HistoryBlock,
    #[serde(default)]
    pub control: ControlBlock,
    #[serde(default)]
    pub targets: TargetsBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub c: f64,
    pub d: f64,
    pub k: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    pub horizon: f64,
    pub delay: f64,
}

fn default_modes() -> usize {
    8
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsBlock {
    /// Time step, default `T/2000`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Step of a sampled history file, default `r/200`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_r: Option<f64>,
    /// Interior collocation points for `w⁺`, default `max(63, 2N + 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_points: Option<usize>,
    /// Simpson step for Gramians; absent means per-mode automatic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gramian_step: Option<f64>,
    /// Time intervals for the `M` and `‖Γ‖` suprema, default 2000.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_intervals: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseCatalog {
    Constant,
    LinearVelocity,
    SaturatingVelocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseBlock {
    pub time: f64,
    pub catalog: ImpulseCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    /// Declared Lipschitz constant `d_k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaysBlock {
    #[serde(default)]
    pub lags: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlocalBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_y: Option<Vec<f64>>,
    /// Declared `L_q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lq: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingCatalog {
    #[default]
    Zero,
    Modal,
    Sine,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingBlock {
    #[serde(default)]
    pub catalog: ForcingCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityCatalog {
    #[default]
    Zero,
    DelayedSaturating,
    BoundedSaturating,
    ControlSaturating,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeId {
    #[default]
    Identity,
    Sqrt,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityBlock {
    #[serde(default)]
    pub catalog: NonlinearityCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryCatalog {
    #[default]
    Zero,
    ModalConstant,
    Sampled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryBlock {
    #[serde(default)]
    pub catalog: HistoryCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    /// CSV with columns `t, w_1..w_N, y_1..y_N`; a repeated `t` marks a jump
    /// (left limit first). Relative paths are taken from the config's folder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCatalog {
    #[default]
    Zero,
    /// `u(t) = cos(ωt)·Σ cₙφ̂ₙ`.
    Modal,
}

/// Nominal control used by `simulate` and `approx`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    #[serde(default)]
    pub catalog: ControlCatalog,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_star_w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_star_y: Option<Vec<f64>>,
    /// Initial state of the `steer` command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0_w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0_y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_max_iter: Option<usize>,
    /// Start of the steering interval for `gramian` and `steer`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// A validated configuration together with the objects built from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The input with every default filled in.
    pub config: RunConfig,
    pub spec: ProblemSpec,
    pub nominal: ControlSignal,
    pub zstar: StateZ,
    pub z0: StateZ,
    pub sigmas: Vec<f64>,
    pub t0: f64,
    pub snapshot_times: Vec<f64>,
    pub fixed_point: FixedPointOptions,
    pub contraction: ContractionOptions,
}

impl Resolved {
    pub fn prefix(&self) -> &str {
        self.config.output.prefix.as_deref().unwrap_or("beamctl")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// TOML echo of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.config).expect("configuration serializes")
    }
}

/// Reads, validates and resolves a configuration file.
pub fn parse_config(path: &Path) -> CResult<Resolved> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &base)
}

/// [`parse_config`] on text, resolving relative paths against `base`.
pub fn parse_str(text: &str, base: &Path) -> CResult<Resolved> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| ConfigError::new("<toml>", one_line(&e.to_string())))?;
    let raw: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "<root>".to_string() } else { key };
        ConfigError::new(key, one_line(&e.into_inner().to_string()))
    })?;
    resolve(raw, base)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn positive(key: &str, v: f64) -> CResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be a finite number > 0, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> CResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, "must be finite"))
    }
}

fn modal(key: &str, v: &[f64], modes: usize) -> CResult<ModalCoeffs> {
    if v.len() != modes {
        return Err(ConfigError::new(
            key,
            format!("expected {modes} coefficients, got {}", v.len()),
        ));
    }
    ModalCoeffs::new(v.to_vec()).map_err(|e| ConfigError::new(key, e.to_string()))
}

fn required<'a, T>(key: &str, v: &'a Option<T>, catalog: &str) -> CResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| ConfigError::new(key, format!("required for catalog {catalog}")))
}

fn state(prefix: &str, w: &Option<Vec<f64>>, y: &Option<Vec<f64>>, modes: usize) -> CResult<StateZ> {
    let zeros = vec![0.0; modes];
    let w = modal(&format!("{prefix}_w"), w.as_deref().unwrap_or(&zeros), modes)?;
    let y = modal(&format!("{prefix}_y"), y.as_deref().unwrap_or(&zeros), modes)?;
    Ok(StateZ { w, y })
}

fn resolve(mut cfg: RunConfig, base: &Path) -> CResult<Resolved> {
    let m = &cfg.model;
    let c = positive("model.c", m.c)?;
    let d = positive("model.d", m.d)?;
    if !(m.k >= 0.0 && m.k.is_finite()) {
        return Err(ConfigError::new("model.k", format!("must be >= 0, got {}", m.k)));
    }
    if m.modes == 0 {
        return Err(ConfigError::new("model.modes", "must be >= 1"));
    }
    let horizon = positive("model.horizon", m.horizon)?;
    if !(m.delay > 0.0 && m.delay < horizon) {
        return Err(ConfigError::new(
            "model.delay",
            format!("must satisfy 0 < r < T, got r = {}, T = {horizon}", m.delay),
        ));
    }
    let delay = m.delay;
    let modes = m.modes;
    let params =
        ModelParams::new(c, d, m.k, modes, horizon, delay).map_err(|e| ConfigError::new("model", e.to_string()))?;

    // grids
    let g = &mut cfg.grids;
    let h = positive("grids.h", *g.h.get_or_insert(horizon / 2000.0))?;
    let steps = node_index(horizon, h)
        .filter(|n| *n >= 1)
        .ok_or_else(|| ConfigError::new("grids.h", format!("T = {horizon} is not a multiple of h = {h}")))?
        as usize;
    if node_index(delay, h).filter(|n| *n >= 1).is_none() {
        return Err(ConfigError::new(
            "grids.h",
            format!("the delay r = {delay} is not a multiple of h = {h}"),
        ));
    }
    let h_r = positive("grids.h_r", *g.h_r.get_or_insert(delay / 200.0))?;
    if node_index(delay, h_r).filter(|n| *n >= 1).is_none() {
        return Err(ConfigError::new(
            "grids.h_r",
            format!("the delay r = {delay} is not a multiple of h_r = {h_r}"),
        ));
    }
    let points = *g.spatial_points.get_or_insert(default_grid_points(modes));
    if points < 2 * modes + 1 {
        return Err(ConfigError::new(
            "grids.spatial_points",
            format!("need G >= 2N + 1 = {}, got {points}", 2 * modes + 1),
        ));
    }
    let grid = SpatialGrid::new(points, modes).map_err(|e| ConfigError::new("grids.spatial_points", e.to_string()))?;
    if let Some(q) = g.gramian_step {
        positive("grids.gramian_step", q)?;
    }
    let norm_intervals = *g.norm_intervals.get_or_insert(2000);
    if norm_intervals == 0 {
        return Err(ConfigError::new("grids.norm_intervals", "must be >= 1"));
    }
    let contraction = ContractionOptions {
        norm_intervals,
        quadrature_step: g.gramian_step,
    };

    // impulses
    let mut impulses = Vec::with_capacity(cfg.impulses.len());
    let mut prev = 0.0;
    for (i, b) in cfg.impulses.iter_mut().enumerate() {
        let key = |f: &str| format!("impulses[{i}].{f}");
        if !(b.time > prev && b.time < horizon) {
            return Err(ConfigError::new(
                key("time"),
                format!("impulse times must satisfy 0 < t_1 < ... < t_m < T, got {}", b.time),
            ));
        }
        if node_index(b.time, h).is_none() {
            return Err(ConfigError::new(
                key("time"),
                format!("impulse time {} is not a node of the time grid (h = {h})", b.time),
            ));
        }
        prev = b.time;
        let map = match b.catalog {
            ImpulseCatalog::Constant => {
                let w = modal(&key("w"), required(&key("w"), &b.w, "constant")?, modes)?;
                let y = modal(&key("y"), required(&key("y"), &b.y, "constant")?, modes)?;
                ImpulseMap::Constant(StateZ { w, y })
            }
            ImpulseCatalog::LinearVelocity => {
                let gain = finite(&key("gain"), *required(&key("gain"), &b.gain, "linear_velocity")?)?;
                let offset = b.offset.get_or_insert_with(|| vec![0.0; modes]);
                ImpulseMap::LinearVelocity {
                    gain,
                    offset: modal(&key("offset"), offset, modes)?,
                }
            }
            ImpulseCatalog::SaturatingVelocity => ImpulseMap::SaturatingVelocity {
                gain: finite(&key("gain"), *required(&key("gain"), &b.gain, "saturating_velocity")?)?,
            },
        };
        let declared = *b.d.get_or_insert(map.lipschitz());
        let imp = Impulse::new(b.time, map)
            .with_declared(declared)
            .map_err(|e| ConfigError::new(key("d"), e.to_string()))?;
        impulses.push(imp);
    }

    // delays and nonlocal
    let lags = cfg.delays.lags.clone();
    let mut prev = 0.0;
    for (j, &tau) in lags.iter().enumerate() {
        if !(tau > prev && tau < delay) {
            return Err(ConfigError::new(
                format!("delays.lags[{j}]"),
                format!("0 < tau_1 < ... < tau_q < r violated: tau = {tau}, r = {delay}"),
            ));
        }
        if node_index(tau, h).is_none() {
            return Err(ConfigError::new(
                format!("delays.lags[{j}]"),
                format!("lag {tau} is not a node of the time grid (h = {h})"),
            ));
        }
        prev = tau;
    }
    let q = lags.len();
    let nl = &mut cfg.nonlocal;
    let gamma_w = nl.gamma_w.get_or_insert_with(|| vec![0.0; q]).clone();
    let gamma_y = nl.gamma_y.get_or_insert_with(|| vec![0.0; q]).clone();
    for (name, v) in [("nonlocal.gamma_w", &gamma_w), ("nonlocal.gamma_y", &gamma_y)] {
        if v.len() != q {
            return Err(ConfigError::new(
                name,
                format!("expected {q} coefficients (one per lag), got {}", v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::new(name, "coefficients must be finite"));
        }
    }
    let nonlocal = Nonlocal { lags, gamma_w, gamma_y };
    let lq = *nl.lq.get_or_insert(nonlocal.lipschitz());
    if !(lq >= nonlocal.lipschitz()) {
        return Err(ConfigError::new(
            "nonlocal.lq",
            format!("declared L_q = {lq} is below max |gamma| = {}", nonlocal.lipschitz()),
        ));
    }

    // forcing
    let f = &mut cfg.forcing;
    let forcing = match f.catalog {
        ForcingCatalog::Zero => Forcing::Zero,
        ForcingCatalog::Modal => Forcing::Modal {
            coeffs: modal("forcing.coeffs", required("forcing.coeffs", &f.coeffs, "modal")?, modes)?,
            omega: finite("forcing.omega", *f.omega.get_or_insert(0.0))?,
        },
        ForcingCatalog::Sine => {
            let mode = *required("forcing.mode", &f.mode, "sine")?;
            if mode == 0 {
                return Err(ConfigError::new("forcing.mode", "must be >= 1"));
            }
            Forcing::Sine {
                mode,
                amplitude: finite(
                    "forcing.amplitude",
                    *required("forcing.amplitude", &f.amplitude, "sine")?,
                )?,
                omega: finite("forcing.omega", *f.omega.get_or_insert(0.0))?,
            }
        }
    };

    // nonlinearity
    let nb = &mut cfg.nonlinearity;
    let nonlinearity = match nb.catalog {
        NonlinearityCatalog::Zero => Nonlinearity::Zero,
        cat => {
            let name = match cat {
                NonlinearityCatalog::DelayedSaturating => "delayed_saturating",
                NonlinearityCatalog::BoundedSaturating => "bounded_saturating",
                _ => "control_saturating",
            };
            let a = finite("nonlinearity.a", *required("nonlinearity.a", &nb.a, name)?)?;
            match cat {
                NonlinearityCatalog::DelayedSaturating => Nonlinearity::DelayedSaturating { a },
                NonlinearityCatalog::BoundedSaturating => Nonlinearity::BoundedSaturating { a },
                _ => Nonlinearity::ControlSaturating { a },
            }
        }
    };
    let mut catalog = nonlinearity.constants(modes);
    catalog.beta += forcing.sup_norm(modes);
    let constants = GrowthConstants {
        lipschitz: *nb.l_f.get_or_insert(catalog.lipschitz),
        alpha: *nb.alpha1.get_or_insert(catalog.alpha),
        beta: *nb.beta1.get_or_insert(catalog.beta),
        envelope: match nb.envelope.get_or_insert(EnvelopeId::Identity) {
            EnvelopeId::Identity => Envelope::Identity,
            EnvelopeId::Sqrt => Envelope::Sqrt,
        },
    };
    for (key, declared, implied) in [
        ("nonlinearity.l_f", constants.lipschitz, catalog.lipschitz),
        ("nonlinearity.alpha1", constants.alpha, catalog.alpha),
        ("nonlinearity.beta1", constants.beta, catalog.beta),
    ] {
        if !(declared >= implied) {
            return Err(ConfigError::new(
                key,
                format!("declared value {declared} is below the catalog value {implied}"),
            ));
        }
    }

    // history
    let hb = &mut cfg.history;
    let history = match hb.catalog {
        HistoryCatalog::Zero => History::Zero,
        HistoryCatalog::ModalConstant => History::Constant(
            state("history", &hb.w, &hb.y, modes)
                .map_err(|e| ConfigError::new(e.key.replace("history_", "history."), e.message))?,
        ),
        HistoryCatalog::Sampled => {
            let file = required("history.file", &hb.file, "sampled")?;
            let path = if file.is_absolute() {
                file.clone()
            } else {
                base.join(file)
            };
            let path = std::fs::canonicalize(&path)
                .map_err(|e| ConfigError::new("history.file", format!("cannot open {}: {e}", path.display())))?;
            let seg = read_history(&path, delay, h_r, modes)?;
            for (i, _) in seg.jumps() {
                if node_index(seg.time(i), h).is_none() {
                    return Err(ConfigError::new(
                        "history.file",
                        format!("discontinuity at s = {} is not a node of the time grid", seg.time(i)),
                    ));
                }
            }
            hb.file = Some(path);
            History::Sampled(seg)
        }
    };

    // control
    let cb = &mut cfg.control;
    let nominal = match cb.catalog {
        ControlCatalog::Zero => ControlSignal::zeros(0.0, h, steps, modes),
        ControlCatalog::Modal => {
            let coeffs = modal(
                "control.coeffs",
                required("control.coeffs", &cb.coeffs, "modal")?,
                modes,
            )?;
            let omega = finite("control.omega", *cb.omega.get_or_insert(0.0))?;
            ControlSignal::from_fn(0.0, h, steps, |t| coeffs.scaled((omega * t).cos()))
        }
    }
    .map_err(|e| ConfigError::new("control", e.to_string()))?;

    // targets
    let tb = &mut cfg.targets;
    tb.z_star_w.get_or_insert_with(|| vec![0.0; modes]);
    tb.z_star_y.get_or_insert_with(|| vec![0.0; modes]);
    tb.z0_w.get_or_insert_with(|| vec![0.0; modes]);
    tb.z0_y.get_or_insert_with(|| vec![0.0; modes]);
    let zstar = state("targets.z_star", &tb.z_star_w, &tb.z_star_y, modes)?;
    let z0 = state("targets.z0", &tb.z0_w, &tb.z0_y, modes)?;

    // experiment
    let picard = PicardOptions {
        tol: positive("experiment.picard_tol", *cfg.experiment.picard_tol.get_or_insert(1e-10))?,
        max_iter: *cfg.experiment.picard_max_iter.get_or_insert(50),
    };
    if picard.max_iter == 0 {
        return Err(ConfigError::new("experiment.picard_max_iter", "must be >= 1"));
    }
    let spec = ProblemSpec {
        params,
        steps,
        grid,
        impulses,
        nonlocal,
        forcing,
        nonlinearity,
        constants,
        history,
        picard,
    };
    spec.validate()
        .map_err(|e| ConfigError::new("<model>", e.to_string()))?;

    let ex = &mut cfg.experiment;
    let limit = sigma_limit(&spec);
    let sigmas = ex.sigmas.get_or_insert_with(|| default_sigmas(&spec)).clone();
    for (i, s) in sigmas.iter().enumerate() {
        if !(*s > 0.0 && *s < limit) {
            return Err(ConfigError::new(
                format!("experiment.sigmas[{i}]"),
                format!("must satisfy 0 < sigma < min(T - t_m, r) = {limit}, got {s}"),
            ));
        }
        if i > 0 && *s >= sigmas[i - 1] {
            return Err(ConfigError::new(
                format!("experiment.sigmas[{i}]"),
                "sigmas must be strictly decreasing",
            ));
        }
    }
    let fixed_point = FixedPointOptions {
        tol: positive("experiment.tol", *ex.tol.get_or_insert(1e-10))?,
        max_iter: *ex.max_iter.get_or_insert(50),
    };
    if fixed_point.max_iter == 0 {
        return Err(ConfigError::new("experiment.max_iter", "must be >= 1"));
    }
    let t0 = *ex.t0.get_or_insert(0.0);
    if !(t0 >= 0.0 && t0 < horizon) || node_index(t0, h).is_none() {
        return Err(ConfigError::new(
            "experiment.t0",
            format!("must be a grid node in [0, T), got {t0}"),
        ));
    }
    let snapshot_times = ex
        .snapshot_times
        .get_or_insert_with(|| (0..=4).map(|i| horizon * i as f64 / 4.0).collect())
        .clone();
    for (i, t) in snapshot_times.iter().enumerate() {
        if !(*t >= 0.0 && *t <= horizon) {
            return Err(ConfigError::new(
                format!("experiment.snapshot_times[{i}]"),
                "must lie in [0, T]",
            ));
        }
    }

    let ob = &mut cfg.output;
    ob.prefix.get_or_insert_with(|| "beamctl".to_string());
    if ob
        .prefix
        .as_deref()
        .is_some_and(|p| p.is_empty() || p.contains(['/', '\\']))
    {
        return Err(ConfigError::new(
            "output.prefix",
            "must be a non-empty file name prefix",
        ));
    }
    if let Some(dir) = &ob.dir {
        if dir.is_relative() {
            ob.dir = Some(base.join(dir));
        }
    }

    Ok(Resolved {
        config: cfg,
        spec,
        nominal,
        zstar,
        z0,
        sigmas,
        t0,
        snapshot_times,
        fixed_point,
        contraction,
    })
}

/// Reads a sampled history `t, w_1..w_N, y_1..y_N` on `[−r, 0]` with step `h_r`.
pub fn read_history(path: &Path, delay: f64, h_r: f64, modes: usize) -> CResult<Segment> {
    let key = "history.file";
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ConfigError::new(key, format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| ConfigError::new(key, e.to_string()))?.clone();
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=modes).map(|n| format!("w_{n}")))
        .chain((1..=modes).map(|n| format!("y_{n}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(ConfigError::new(key, format!("header must be {}", expected.join(","))));
    }
    let mut rows: Vec<(f64, StateZ)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ConfigError::new(key, e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ConfigError::new(key, format!("row {}: {e}", line + 1)))?;
        let w = ModalCoeffs::new(vals[1..=modes].to_vec()).map_err(|e| ConfigError::new(key, e.to_string()))?;
        let y = ModalCoeffs::new(vals[modes + 1..].to_vec()).map_err(|e| ConfigError::new(key, e.to_string()))?;
        rows.push((vals[0], StateZ { w, y }));
    }
    let count = node_index(delay, h_r).unwrap_or(0) as usize;
    let mut values: Vec<StateZ> = Vec::with_capacity(count + 1);
    let mut marks = Vec::new();
    for (t, z) in rows {
        let i = node_index(t + delay, h_r)
            .filter(|i| *i >= 0 && *i as usize <= count)
            .ok_or_else(|| ConfigError::new(key, format!("time {t} is not a node of [-r, 0] with step h_r = {h_r}")))?
            as usize;
        if i + 1 == values.len() {
            // repeated time: the earlier row was the left limit
            let left = values.pop().expect("non-empty");
            marks.push((i, left));
        } else if i != values.len() {
            return Err(ConfigError::new(
                key,
                format!("rows must be sorted and cover every node, time {t} out of place"),
            ));
        }
        values.push(z);
    }
    if values.len() != count + 1 {
        return Err(ConfigError::new(
            key,
            format!("expected {} nodes on [-r, 0], got {}", count + 1, values.len()),
        ));
    }
    let mut seg = Segment::new(delay, h_r, values).map_err(|e| ConfigError::new(key, e.to_string()))?;
    for (i, left) in marks {
        seg = seg
            .with_left(i, left)
            .map_err(|e| ConfigError::new(key, e.to_string()))?;
    }
    Ok(seg)
}
