//! Scenario configuration. Files are TOML with a mandatory
//! `schema_version`; unknown keys are rejected and every key that carries a
//! physical quantity names its unit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::control::{AdaptiveMode, AdaptiveSettings, UpdatePolicy};
use crate::identify::NeuralConfig;
use crate::plant::{DisturbanceSpec, MicrogridParams};
use crate::polyalg::PolyMatrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub timing: TimingConfig,
    pub event: EventConfig,
    pub reference: ReferenceConfig,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub calibration: CalibrationConfig,
    pub monitor: MonitorConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            timing: TimingConfig::default(),
            event: EventConfig::default(),
            reference: ReferenceConfig::default(),
            plant: PlantConfig::default(),
            controller: ControllerConfig::default(),
            calibration: CalibrationConfig::default(),
            monitor: MonitorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub t_end_s: f64,
    pub dt_primary_s: f64,
    pub dt_secondary_s: f64,
    pub t_svc_on_s: f64,
    pub t_event_s: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            t_end_s: 2.5,
            dt_primary_s: 1e-6,
            dt_secondary_s: 5e-3,
            t_svc_on_s: 1.0,
            t_event_s: 2.0,
        }
    }
}

impl TimingConfig {
    /// Secondary samples in the run; row `k` sits at `t = k·dt_secondary`.
    pub fn rows(&self) -> usize {
        (self.t_end_s / self.dt_secondary_s).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (self.dt_secondary_s / self.dt_primary_s).round() as usize
    }

    pub fn sample_of(&self, t: f64) -> usize {
        (t / self.dt_secondary_s).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventConfig {
    pub enabled: bool,
    /// Multiplies the event load's impedance.
    pub load_factor: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            load_factor: 0.5,
        }
    }
}

/// A scalar applied to every channel, or one value per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerChannel {
    All(f64),
    Each(Vec<f64>),
}

impl PerChannel {
    pub fn expand(&self, m: usize) -> Result<DVector<f64>, HarnessError> {
        match self {
            PerChannel::All(v) => Ok(DVector::from_element(m, *v)),
            PerChannel::Each(v) if v.len() == m => Ok(DVector::from_column_slice(v)),
            PerChannel::Each(v) => Err(HarnessError::Config(format!(
                "expected {m} per-channel values, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub v_ref_v: PerChannel,
    /// Setpoint held before the secondary control engages.
    pub v_nominal_v: f64,
    /// Actuator limits; default `[0, 2·v_nominal_v]`.
    pub e_min_v: Option<f64>,
    pub e_max_v: Option<f64>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            v_ref_v: PerChannel::All(300.0),
            v_nominal_v: 300.0,
            e_min_v: None,
            e_max_v: None,
        }
    }
}

impl ReferenceConfig {
    pub fn limits(&self) -> (f64, f64) {
        (
            self.e_min_v.unwrap_or(0.0),
            self.e_max_v.unwrap_or(2.0 * self.v_nominal_v),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Full,
    Surrogate,
    LinearOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub microgrid: MicrogridParams,
    pub surrogate_tau_v_s: f64,
    pub oracle: Option<OracleConfig>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            kind: PlantKind::Full,
            microgrid: MicrogridParams::four_der(),
            surrogate_tau_v_s: 5e-3,
            oracle: None,
        }
    }
}

/// Coefficients as lists of row-major square matrices `[C₀, C₁, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub a: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub delay_d: usize,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
}

impl OracleConfig {
    pub fn poly(coeffs: &[Vec<Vec<f64>>]) -> Result<PolyMatrix, HarnessError> {
        let mats = coeffs
            .iter()
            .map(|rows| {
                let m = rows.len();
                if rows.iter().any(|r| r.len() != m) {
                    return Err(HarnessError::Config("oracle coefficient is not square".into()));
                }
                Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolyMatrix::new(mats).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_poly(p: &PolyMatrix) -> Vec<Vec<Vec<f64>>> {
        p.coeffs()
            .iter()
            .map(|c| {
                (0..c.nrows())
                    .map(|i| c.row(i).iter().copied().collect())
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Mmac,
    LinearOnly,
    NonlinearOnly,
    Oracle,
    FeedbackLinearization,
    None,
}

impl ControllerKind {
    pub fn adaptive_mode(self) -> Option<AdaptiveMode> {
        match self {
            ControllerKind::Mmac => Some(AdaptiveMode::Mmac),
            ControllerKind::LinearOnly => Some(AdaptiveMode::LinearOnly),
            ControllerKind::NonlinearOnly => Some(AdaptiveMode::NonlinearOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Pole of the design filter `F = (1 − pole·z⁻¹)I`; `R = F(1)`.
    pub f_pole: f64,
    pub adaptive: AdaptiveConfig,
    pub feedback_linearization: FeedbackLinConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Mmac,
            f_pole: 0.2,
            adaptive: AdaptiveConfig::default(),
            feedback_linearization: FeedbackLinConfig::default(),
        }
    }
}

/// `"auto"` (calibrated before the run) or a value in volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Volts(f64),
    Keyword(String),
}

impl RhoSpec {
    pub fn is_auto(&self) -> Result<bool, HarnessError> {
        match self {
            RhoSpec::Volts(v) if *v >= 0.0 && v.is_finite() => Ok(false),
            RhoSpec::Volts(v) => Err(HarnessError::Config(format!("rho_v = {v} must be ≥ 0"))),
            RhoSpec::Keyword(s) if s == "auto" => Ok(true),
            RhoSpec::Keyword(s) => Err(HarnessError::Config(format!(
                "rho_v must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    pub order_n: usize,
    pub delay_d: usize,
    pub rho_v: RhoSpec,
    pub h_min: f64,
    pub theta_max: f64,
    pub mu: f64,
    pub window_samples: usize,
    pub signal_base_v: f64,
    pub prior_gain: f64,
    pub update_policy: UpdatePolicy,
    pub hidden: usize,
    pub learn_rate: f64,
    pub w_max: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        let s = AdaptiveSettings::default();
        let n = NeuralConfig::default();
        Self {
            order_n: s.order_n,
            delay_d: s.delay_d,
            rho_v: RhoSpec::Keyword("auto".into()),
            h_min: s.h_min,
            theta_max: s.theta_max,
            mu: s.mu,
            window_samples: s.window_samples,
            signal_base_v: s.signal_base_v,
            prior_gain: s.prior_gain,
            update_policy: s.update_policy,
            hidden: n.hidden,
            learn_rate: n.learn_rate,
            w_max: n.w_max,
        }
    }
}

impl AdaptiveConfig {
    pub fn settings(&self, rho_v: f64, seed: u64) -> AdaptiveSettings {
        AdaptiveSettings {
            order_n: self.order_n,
            delay_d: self.delay_d,
            rho_v,
            h_min: self.h_min,
            theta_max: self.theta_max,
            mu: self.mu,
            window_samples: self.window_samples,
            signal_base_v: self.signal_base_v,
            prior_gain: self.prior_gain,
            update_policy: self.update_policy,
            neural: NeuralConfig {
                hidden: self.hidden,
                learn_rate: self.learn_rate,
                w_max: self.w_max,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackLinConfig {
    /// Imposed closed-loop rate.
    pub lambda_per_s: f64,
    /// Voltage time constant assumed by the model.
    pub model_tau_v_s: f64,
}

impl Default for FeedbackLinConfig {
    fn default() -> Self {
        Self {
            lambda_per_s: 10.0,
            model_tau_v_s: 5e-3,
        }
    }
}

/// Probing experiment used when `rho_v = "auto"`: the plant is settled at the
/// nominal setpoint, then driven by a seeded pseudo-random binary sequence
/// around it; a batch least-squares fit of the regression model gives the
/// largest residual, taken as `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub settle_s: f64,
    pub probe_samples: usize,
    pub probe_amplitude_v: f64,
    /// Each PRBS level is held for a random 1..=hold_max_samples samples.
    pub hold_max_samples: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            settle_s: 0.5,
            probe_samples: 300,
            probe_amplitude_v: 2.0,
            hold_max_samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Bound on `‖V_o‖` and `‖E*‖`; default `10·‖V_ref‖`.
    pub delta_v: Option<f64>,
}

/// Named presets applied on top of a loaded file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Surrogate plant at a 10 µs primary step.
    Ci,
    /// Full plant at a 1 µs primary step.
    Showcase,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ci" => Some(Profile::Ci),
            "showcase" => Some(Profile::Showcase),
            _ => None,
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig) {
        match self {
            Profile::Ci => {
                cfg.plant.kind = PlantKind::Surrogate;
                cfg.timing.dt_primary_s = 1e-5;
            }
            Profile::Showcase => {
                cfg.plant.kind = PlantKind::Full;
                cfg.timing.dt_primary_s = 1e-6;
            }
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let value: toml::Value = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self, HarnessError> {
        match value.get("schema_version").and_then(|v| v.as_integer()) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(HarnessError::Config(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(HarnessError::Config("missing integer schema_version".into())),
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn channels(&self) -> Result<usize, HarnessError> {
        match self.plant.kind {
            PlantKind::Full | PlantKind::Surrogate => Ok(self.plant.microgrid.ders.len()),
            PlantKind::LinearOracle => {
                let o =
                    self.plant.oracle.as_ref().ok_or_else(|| {
                        HarnessError::Config("linear-oracle plant needs [plant.oracle]".into())
                    })?;
                Ok(o.a.first().map(|c| c.len()).unwrap_or(0))
            }
        }
    }

    pub fn v_ref(&self) -> Result<DVector<f64>, HarnessError> {
        self.reference.v_ref_v.expand(self.channels()?)
    }

    pub fn delta(&self) -> Result<f64, HarnessError> {
        Ok(self
            .monitor
            .delta_v
            .unwrap_or_else(|| 10.0 * self.v_ref().map(|v| v.norm()).unwrap_or(0.0)))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: String| Err(HarnessError::Config(s));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version must be {SCHEMA_VERSION}"));
        }
        let t = &self.timing;
        let finite = [
            t.t_end_s,
            t.dt_primary_s,
            t.dt_secondary_s,
            t.t_svc_on_s,
            t.t_event_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("timing values must be finite".into());
        }
        if !(t.dt_primary_s > 0.0 && t.dt_secondary_s > 0.0) {
            return bad("time steps must be positive".into());
        }
        let ratio = t.dt_secondary_s / t.dt_primary_s;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "dt_secondary_s = {} is not an integer multiple of dt_primary_s = {}",
                t.dt_secondary_s, t.dt_primary_s
            ));
        }
        let rows = t.t_end_s / t.dt_secondary_s;
        if t.t_end_s < 0.0 || (rows - rows.round()).abs() > 1e-9 * rows.max(1.0) {
            return bad("t_end_s must be a non-negative multiple of dt_secondary_s".into());
        }
        // An empty run has no events to order; without a load event only the
        // engagement time has to fall inside the run.
        if t.t_end_s > 0.0 {
            let ordered = if self.event.enabled {
                0.0 <= t.t_svc_on_s && t.t_svc_on_s < t.t_event_s && t.t_event_s < t.t_end_s
            } else {
                0.0 <= t.t_svc_on_s && t.t_svc_on_s < t.t_end_s
            };
            if !ordered {
                return bad("timing must satisfy 0 ≤ t_svc_on_s < t_event_s < t_end_s".into());
            }
        }
        if self.event.enabled && !(self.event.load_factor > 0.0 && self.event.load_factor.is_finite()) {
            return bad(format!("load_factor {} must be positive", self.event.load_factor));
        }
        let (lo, hi) = self.reference.limits();
        if !(lo < hi) {
            return bad("actuator limits must satisfy e_min_v < e_max_v".into());
        }
        let m = self.channels()?;
        if m == 0 {
            return bad("plant has no channels".into());
        }
        self.v_ref()?;
        match self.plant.kind {
            PlantKind::Full | PlantKind::Surrogate => {
                self.plant
                    .microgrid
                    .validate()
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                if !(self.plant.surrogate_tau_v_s > 0.0) {
                    return bad("surrogate_tau_v_s must be positive".into());
                }
            }
            PlantKind::LinearOracle => {
                let o = self.plant.oracle.as_ref().expect("checked by channels()");
                OracleConfig::poly(&o.a)?;
                OracleConfig::poly(&o.b)?;
            }
        }
        let c = &self.controller;
        if c.kind == ControllerKind::Oracle && self.plant.kind != PlantKind::LinearOracle {
            return bad("the oracle controller needs a linear-oracle plant".into());
        }
        if c.kind == ControllerKind::FeedbackLinearization && self.plant.kind == PlantKind::LinearOracle {
            return bad("feedback linearization needs a microgrid plant".into());
        }
        let a = &c.adaptive;
        if a.order_n == 0 || a.delay_d == 0 || a.delay_d > a.order_n.max(1) {
            return bad("adaptive model needs n ≥ 1 and 1 ≤ d ≤ n".into());
        }
        a.rho_v.is_auto()?;
        if !(a.signal_base_v > 0.0 && a.h_min > 0.0 && a.theta_max >= a.h_min) {
            return bad(
                "adaptive scaling, h_min and theta_max must be positive with theta_max ≥ h_min".into(),
            );
        }
        if !(a.mu >= 0.0)
            || a.window_samples == 0
            || a.hidden == 0
            || !(a.w_max > 0.0)
            || !(a.learn_rate >= 0.0)
        {
            return bad("switch and network hyper-parameters out of range".into());
        }
        if !(c.f_pole.abs() < 1.0) {
            return bad("f_pole must lie inside the unit interval".into());
        }
        if c.feedback_linearization.lambda_per_s <= 0.0 || c.feedback_linearization.model_tau_v_s <= 0.0 {
            return bad("feedback linearization rates must be positive".into());
        }
        if let Some(d) = self.monitor.delta_v {
            if !(d > 0.0) {
                return bad("delta_v must be positive".into());
            }
        }
        let cal = &self.calibration;
        if cal.probe_samples == 0 || cal.hold_max_samples == 0 || !(cal.settle_s >= 0.0) {
            return bad("calibration needs probe samples and a non-negative settle time".into());
        }
        Ok(())
    }
}

/// Sets the value at a dotted path (array elements by index), creating
/// tables as needed.
pub fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), HarnessError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("bad parameter path {path:?}")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert((*part).to_string(), value);
                    return Ok(());
                }
                t.entry((*part).to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| HarnessError::Config(format!("{path}: {part:?} is not an array index")))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    HarnessError::Config(format!("{path}: index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(HarnessError::Config(format!(
                    "{path}: {part:?} is inside a scalar"
                )))
            }
        };
    }
    unreachable!("loop returns on the last component")
}

/// Parses one literal of a `--param` list: TOML syntax, with bare words
/// taken as strings.
pub fn parse_literal(s: &str) -> toml::Value {
    let doc = format!("v = {s}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.timing.rows(), 500);
        assert_eq!(cfg.timing.substeps(), 5000);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ScenarioConfig::from_toml_str("schema_version = 1\n[timing]\nt_end = 2.5\n");
        assert!(matches!(err, Err(HarnessError::Config(_))));
    }

    #[test]
    fn missing_schema_rejected() {
        assert!(ScenarioConfig::from_toml_str("seed = 3\n").is_err());
    }

    #[test]
    fn non_integer_ratio_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.timing.dt_primary_s = 3e-6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dotted_override() {
        let mut v = ScenarioConfig::default().to_value();
        set_path(&mut v, "controller.adaptive.mu", parse_literal("0.5")).unwrap();
        set_path(
            &mut v,
            "plant.microgrid.ders.2.d_q_v_per_var",
            parse_literal("2e-3"),
        )
        .unwrap();
        set_path(&mut v, "controller.kind", parse_literal("linear-only")).unwrap();
        let cfg = ScenarioConfig::from_value(v).unwrap();
        assert_eq!(cfg.controller.adaptive.mu, 0.5);
        assert_eq!(cfg.plant.microgrid.ders[2].d_q_v_per_var, 2e-3);
        assert_eq!(cfg.controller.kind, ControllerKind::LinearOnly);
    }

    #[test]
    fn rho_keyword() {
        assert!(RhoSpec::Keyword("auto".into()).is_auto().unwrap());
        assert!(RhoSpec::Keyword("fast".into()).is_auto().is_err());
        assert!(!RhoSpec::Volts(0.1).is_auto().unwrap());
    }
}
