//! Scenario configuration files (TOML).
//!
//! ```toml
//! [body]
//! rows = [[-0.5, 0.5], [0.0, 0.0], [0.0, 0.0]]   # 3 rows, one column per landmark
//! [anchors]
//! rows = [[...], [...], [...]]
//! [pose]
//! angles_deg = [10.0, 20.0, 45.0]
//! translation = [-3.0, 0.5, 7.0]
//!
//! [[measurements]]
//! name = "range"
//! kind = "distance"          # distance | squared_distance | aoa | adoa
//! noise = { model = "normal", sigma = 0.1 }
//!
//! [connectivity]             # optional
//! fraction = 0.8             # default 1.0
//! seed = 7
//!
//! [sweep]                    # optional
//! parameter = "range.sigma"
//! values = [0.01, 0.1, 1.0]
//!
//! [monte_carlo]              # optional
//! trials = 1000
//! seed = 1
//! estimators = ["mds_procrustes", "mds_ls"]
//! ```
//!
//! AoA classes take `frame = { normal = [...], reference = [...] }`
//! (default: horizontal plane, azimuth from the x axis). ADoA classes take
//! `third_offset`: the third node of edge `(n, a)` is anchor
//! `(a + third_offset) mod n_A` (default 1). Optional `[tolerances]` and
//! `[intensity]` tables override the numerical defaults.

use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::dissimilarity::{AoaFrame, Tolerances};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::geometry::{rotation_from_euler, Conformation, EulerAngles, Pose};
use crate::intensity::{IntensityOptions, NoiseModel};
use crate::scenario::{complete_edges, EdgeClass, Scenario, ScenarioOptions};

pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    body: Option<RawConformation>,
    anchors: Option<RawConformation>,
    pose: Option<RawPose>,
    #[serde(default)]
    measurements: Vec<RawClass>,
    #[serde(default)]
    connectivity: RawConnectivity,
    sweep: Option<RawSweep>,
    #[serde(default)]
    monte_carlo: RawMonteCarlo,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    intensity: IntensityOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConformation {
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    angles_deg: [f64; 3],
    translation: [f64; 3],
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    Distance,
    SquaredDistance,
    Aoa,
    Adoa,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    normal: [f64; 3],
    reference: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    name: String,
    kind: RawKind,
    noise: NoiseModel,
    frame: Option<RawFrame>,
    third_offset: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConnectivity {
    fraction: f64,
    seed: u64,
}

impl Default for RawConnectivity {
    fn default() -> Self {
        Self { fraction: 1.0, seed: 0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMonteCarlo {
    trials: usize,
    seed: u64,
    estimators: Vec<String>,
}

impl Default for RawMonteCarlo {
    fn default() -> Self {
        Self { trials: DEFAULT_TRIALS, seed: 0, estimators: vec!["mds_procrustes".into(), "mds_ls".into()] }
    }
}

/// One group of measurements: every target–anchor pair with one kind and
/// noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementClass {
    pub name: String,
    pub class: EdgeClass,
    pub noise: NoiseModel,
}

/// Noise parameter `parameter` of measurement class `class` takes each of
/// `values` in turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub class: String,
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub body: Conformation,
    pub anchors: Conformation,
    pub angles_deg: [f64; 3],
    pub translation: Vector3<f64>,
    pub classes: Vec<MeasurementClass>,
    pub fraction: f64,
    pub subset_seed: u64,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub options: ScenarioOptions,
}

fn invalid(what: impl Into<String>) -> Error {
    Error::Validation(what.into())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    ScenarioConfig::from_raw(raw)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { line: None, message: format!("{}: {e}", path.display()) })?;
    parse_config(&text)
}

fn conformation(raw: Option<RawConformation>, what: &str) -> Result<Conformation> {
    let raw = raw.ok_or_else(|| invalid(what))?;
    if raw.rows.first().is_none_or(|r| r.is_empty()) {
        return Err(invalid(format!("{what}: conformation is empty")));
    }
    Conformation::from_rows(&raw.rows).map_err(|e| invalid(format!("{what}: {e}")))
}

impl ScenarioConfig {
    fn from_raw(raw: RawConfig) -> Result<Self> {
        let body = conformation(raw.body, "body")?;
        let anchors = conformation(raw.anchors, "anchors")?;
        let pose = raw.pose.ok_or_else(|| invalid("pose"))?;
        EulerAngles::from_degrees(pose.angles_deg[0], pose.angles_deg[1], pose.angles_deg[2])
            .map_err(|e| invalid(format!("pose: {e}")))?;
        if pose.translation.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pose: translation must be finite"));
        }
        if raw.measurements.is_empty() {
            return Err(invalid("measurements: at least one class is required"));
        }
        let mut classes = Vec::with_capacity(raw.measurements.len());
        for m in raw.measurements {
            if classes.iter().any(|c: &MeasurementClass| c.name == m.name) {
                return Err(invalid(format!("measurements: duplicate class name '{}'", m.name)));
            }
            m.noise.validate().map_err(|e| invalid(format!("measurements.{}: {e}", m.name)))?;
            let class = match m.kind {
                RawKind::Distance => EdgeClass::Distance,
                RawKind::SquaredDistance => EdgeClass::SquaredDistance,
                RawKind::Aoa => EdgeClass::Aoa(match m.frame {
                    Some(f) => AoaFrame::new(Vector3::from(f.normal), Vector3::from(f.reference))
                        .map_err(|e| invalid(format!("measurements.{}: frame: {e}", m.name)))?,
                    None => AoaFrame::horizontal(),
                }),
                RawKind::Adoa => {
                    let offset = m.third_offset.unwrap_or(1);
                    if offset % anchors.len() == 0 {
                        return Err(invalid(format!("measurements.{}: third_offset must not be a multiple of n_A", m.name)));
                    }
                    EdgeClass::Adoa { offset }
                }
            };
            classes.push(MeasurementClass { name: m.name, class, noise: m.noise });
        }
        let fraction = raw.connectivity.fraction;
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(invalid(format!("connectivity fraction must be in (0, 1], got {fraction}")));
        }
        let sweep = raw.sweep.map(|s| parse_sweep(s, &classes)).transpose()?;
        if raw.monte_carlo.trials == 0 {
            return Err(invalid("monte_carlo trials must be at least 1"));
        }
        let estimators = raw
            .monte_carlo
            .estimators
            .iter()
            .map(|name| Estimator::from_name(name).ok_or_else(|| invalid(format!("monte_carlo estimators: unknown '{name}'"))))
            .collect::<Result<Vec<_>>>()?;
        let config = Self {
            body,
            anchors,
            angles_deg: pose.angles_deg,
            translation: Vector3::from(pose.translation),
            classes,
            fraction,
            subset_seed: raw.connectivity.seed,
            sweep,
            trials: raw.monte_carlo.trials,
            seed: raw.monte_carlo.seed,
            estimators,
            options: ScenarioOptions { tolerances: raw.tolerances, intensity: raw.intensity },
        };
        for p in config.points() {
            config.scenario_at(p)?;
        }
        Ok(config)
    }

    pub fn pose(&self) -> Pose {
        let [a, b, g] = self.angles_deg;
        Pose::new(rotation_from_euler(EulerAngles::from_degrees(a, b, g).expect("validated")), self.translation)
    }

    /// Sweep values, or a single `None` point without a sweep.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    /// The scenario at one sweep point, after edge subsetting. The subset
    /// depends only on the seed and edge count, so it is shared by every point.
    pub fn scenario_at(&self, value: Option<f64>) -> Result<Scenario> {
        let mut edges = Vec::new();
        for c in &self.classes {
            let noise = match (&self.sweep, value) {
                (Some(s), Some(v)) if s.class == c.name => c
                    .noise
                    .with_param(&s.parameter, v)
                    .map_err(|e| invalid(format!("sweep value {v}: {e}")))?,
                _ => c.noise,
            };
            edges.extend(complete_edges(self.body.len(), self.anchors.len(), c.class, noise));
        }
        let full = Scenario::new(self.body.clone(), self.anchors.clone(), self.pose(), edges, self.options)?;
        full.subset(self.fraction, self.subset_seed)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_at(self.points()[0])
    }
}

fn parse_sweep(raw: RawSweep, classes: &[MeasurementClass]) -> Result<Sweep> {
    let (class, parameter) = raw
        .parameter
        .split_once('.')
        .ok_or_else(|| invalid(format!("sweep parameter '{}' must be <class>.<parameter>", raw.parameter)))?;
    let target = classes
        .iter()
        .find(|c| c.name == class)
        .ok_or_else(|| invalid(format!("sweep parameter: no measurement class '{class}'")))?;
    target
        .noise
        .with_param(parameter, param_value(&target.noise, parameter))
        .map_err(|e| invalid(format!("sweep parameter: {e}")))?;
    if raw.values.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if raw.values.windows(2).any(|w| w[1] <= w[0]) || raw.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sweep grid must be strictly increasing"));
    }
    Ok(Sweep { class: class.to_string(), parameter: parameter.to_string(), values: raw.values })
}

fn param_value(noise: &NoiseModel, name: &str) -> f64 {
    match (*noise, name) {
        (NoiseModel::Normal { sigma }, "sigma") => sigma,
        (NoiseModel::NormalPathloss { alpha, .. }, "alpha") => alpha,
        (NoiseModel::NormalPathloss { beta, .. }, "beta") => beta,
        (NoiseModel::VonMises { omega }, "omega") => omega,
        (NoiseModel::Nakagami { m }, "m") => m,
        (NoiseModel::Gamma { kappa }, "kappa") => kappa,
        _ => f64::NAN,
    }
}
