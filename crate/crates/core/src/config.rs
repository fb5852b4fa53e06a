//! Scenario configuration: TOML schema, presets, `key=value` overrides and
//! resolution into the linear-unit quantities used by the algorithms.

use std::path::Path;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{build_transition, MotionState, TransitionModel};
use crate::error::{Error, Result};
use crate::mpc::SolverOptions;
use crate::rf::{ArrayGeometry, RfConstants};

/// Quality of the initial target estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `M_init = Qs`
    Accurate,
    /// `M_init = Qs + diag(init_inflation)`
    Inaccurate,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accurate => "accurate",
            Self::Inaccurate => "inaccurate",
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "accurate" => Ok(Self::Accurate),
            "inaccurate" => Ok(Self::Inaccurate),
            other => Err(Error::Config(format!("unknown init mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub uav_position: [f64; 2],
    pub uav_velocity: [f64; 2],
    pub target_position: [f64; 2],
    pub target_velocity: [f64; 2],
    pub gu_position: [f64; 2],
    pub altitude: f64,
    pub slots: usize,
    pub dt: f64,
    pub init: InitMode,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            uav_position: [0.0, 150.0],
            uav_velocity: [0.0, 0.0],
            target_position: [0.0, 400.0],
            target_velocity: [1.5, -2.0],
            gu_position: [300.0, 50.0],
            altitude: 50.0,
            slots: 300,
            dt: 0.2,
            init: InitMode::Accurate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfSection {
    pub tx_array: [usize; 2],
    pub rx_array: [usize; 2],
    pub tx_power_dbm: f64,
    pub carrier_hz: f64,
    pub speed_of_light: f64,
    pub matched_filter_gain: f64,
    pub comm_noise_dbm: f64,
    pub radar_noise_dbm: f64,
    /// Channel power at 1 m.
    pub beta0: f64,
    /// Radar cross section (m^2).
    pub rcs: f64,
    pub a1: f64,
    pub a2: f64,
    pub echo_snr_db: f64,
    /// Rate threshold (bps/Hz).
    pub r_th: f64,
}

impl Default for RfSection {
    fn default() -> Self {
        Self {
            tx_array: [4, 4],
            rx_array: [4, 4],
            tx_power_dbm: 30.0,
            carrier_hz: 30e9,
            speed_of_light: 299_792_458.0,
            matched_filter_gain: 1e3,
            comm_noise_dbm: -80.0,
            radar_noise_dbm: -80.0,
            beta0: 1e-6,
            rcs: 1.0,
            a1: 20.0,
            a2: 100.0,
            echo_snr_db: 5.0,
            r_th: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    /// Target process-noise variances `(x, y, vx, vy)`.
    pub process_noise: [f64; 4],
    /// Added to `Qs` for the inaccurate initial covariance.
    pub init_inflation: [f64; 4],
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { process_noise: [4e-4, 4e-4, 0.01, 0.01], init_inflation: [400.0, 400.0, 4.0, 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: usize,
    pub q_diag: [f64; 4],
    pub r_diag: [f64; 2],
    pub a_max: f64,
    pub v_max: f64,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self { horizon: 5, q_diag: [1.0; 4], r_diag: [1.0; 2], a_max: 10.0, v_max: 30.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub rf: RfSection,
    pub dynamics: DynamicsSection,
    pub mpc: MpcSection,
    pub solver: SolverOptions,
}

pub const PRESETS: [&str; 3] = ["case1", "case2", "case3"];

/// Built-in scenario: the default configuration with the case's initial UAV position.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let y = match name.to_ascii_lowercase().as_str() {
        "case1" => 100.0,
        "case2" => 150.0,
        "case3" => 200.0,
        other => return Err(Error::Config(format!("unknown preset `{other}` (expected one of {PRESETS:?})"))),
    };
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.uav_position = [0.0, y];
    Ok(cfg)
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> Result<toml::Value> {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => Ok(t.remove("v").expect("key present")),
        // Unquoted words such as `inaccurate` are taken as strings.
        Err(_) => Ok(toml::Value::String(raw.trim().to_string())),
    }
}

fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{entry}` is not of the form key=value")))?;
    let key = key.trim();
    let value = parse_value(raw)?;
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => {
            let known = table.get(s).and_then(|v| v.as_table()).is_some_and(|t| t.contains_key(f));
            if !known {
                return Err(Error::UnknownKey(key.to_string()));
            }
            (s.to_string(), f.to_string())
        }
        None => {
            let matches: Vec<(String, String)> = table
                .iter()
                .filter_map(|(s, v)| v.as_table().map(|t| (s, t)))
                .flat_map(|(s, t)| {
                    t.keys().filter(|f| f.eq_ignore_ascii_case(key)).map(move |f| (s.clone(), f.clone()))
                })
                .collect();
            match matches.len() {
                0 => return Err(Error::UnknownKey(key.to_string())),
                1 => matches.into_iter().next().expect("one match"),
                _ => {
                    return Err(Error::Config(format!("override key `{key}` is ambiguous; qualify it with a section")))
                }
            }
        }
    };
    table.get_mut(&section).and_then(|v| v.as_table_mut()).expect("section exists").insert(field, value);
    Ok(())
}

fn to_table(cfg: &ScenarioConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Config(e.to_string()))
}

fn from_table(table: toml::Table) -> Result<ScenarioConfig> {
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    parse_str(&text)
}

fn parse_str(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("unknown field") {
            Error::UnknownKey(msg.trim().to_string())
        } else {
            Error::Config(msg.trim().to_string())
        }
    })
}

/// Defaults for `preset` (or plain defaults), then the file, then overrides.
pub fn load_config<S: AsRef<str>>(
    path: Option<&Path>,
    preset_name: Option<&str>,
    overrides: &[S],
) -> Result<ScenarioConfig> {
    let base = match preset_name {
        Some(p) => preset(p)?,
        None => ScenarioConfig::default(),
    };
    let mut table = to_table(&base)?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        // Validates the file on its own so unknown keys are reported against it.
        parse_str(&text)?;
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        merge(&mut table, file);
    }
    for entry in overrides {
        apply_override(&mut table, entry.as_ref())?;
    }
    let cfg = from_table(table)?;
    cfg.validate()?;
    Ok(cfg)
}

/// TOML text that reloads to an identical configuration.
pub fn dump_config(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg = parse_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Linear-unit quantities derived from a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: TransitionModel,
    pub rf: RfConstants,
    pub geometry: ArrayGeometry,
    /// Transmit power budget (W).
    pub power: f64,
    /// `M_t * P_T`
    pub gamma: f64,
    /// `sigma_c^2 (2^R_th - 1) / beta0`
    pub eta: f64,
    /// `sigma_r^2 SNR_th / (G M_r beta_r)`
    pub gamma_th: f64,
    pub echo_snr_threshold: f64,
    pub rate_threshold: f64,
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
    pub horizon: usize,
    pub slots: usize,
    pub a_max: f64,
    pub v_max: f64,
    pub p_gu: Vector2<f64>,
    pub uav_init: MotionState,
    pub target_init: MotionState,
    pub init: InitMode,
    pub m_init: Matrix4<f64>,
    pub solver: SolverOptions,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let s = &self.scenario;
        let rf = &self.rf;
        let m = &self.mpc;
        let finite = s
            .uav_position
            .iter()
            .chain(&s.uav_velocity)
            .chain(&s.target_position)
            .chain(&s.target_velocity)
            .chain(&s.gu_position)
            .all(|x| x.is_finite());
        if !finite {
            return bad("positions and velocities must be finite");
        }
        if !(s.dt > 0.0) {
            return bad("scenario.dt must be positive");
        }
        if s.slots == 0 {
            return bad("scenario.slots must be at least 1");
        }
        if !(s.altitude >= 0.0) {
            return bad("scenario.altitude must be nonnegative");
        }
        if rf.tx_array.contains(&0) || rf.rx_array.contains(&0) {
            return bad("array dimensions must be at least 1");
        }
        let positive =
            [rf.carrier_hz, rf.speed_of_light, rf.matched_filter_gain, rf.beta0, rf.rcs, rf.a1, rf.a2, rf.r_th];
        if !positive.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return bad("rf constants must be positive and finite");
        }
        if !self.dynamics.process_noise.iter().chain(&self.dynamics.init_inflation).all(|&x| x >= 0.0) {
            return bad("noise variances must be nonnegative");
        }
        if m.horizon == 0 {
            return bad("mpc.horizon must be at least 1");
        }
        if !m.q_diag.iter().all(|&x| x >= 0.0) || !m.r_diag.iter().all(|&x| x > 0.0) {
            return bad("mpc.q_diag must be nonnegative and mpc.r_diag positive");
        }
        if !(m.a_max > 0.0 && m.v_max > 0.0) {
            return bad("mpc.a_max and mpc.v_max must be positive");
        }
        let v0 = Vector2::from(s.uav_velocity).norm();
        if v0 > m.v_max {
            return bad("initial UAV speed exceeds mpc.v_max");
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Mission duration `N * dt`.
    pub fn duration(&self) -> f64 {
        self.scenario.slots as f64 * self.scenario.dt
    }

    pub fn resolve(&self) -> Result<Scenario> {
        self.validate()?;
        let s = &self.scenario;
        let rf = &self.rf;
        let model = build_transition(s.dt, self.dynamics.process_noise)?;
        let sigma_c2 = dbm_to_watts(rf.comm_noise_dbm);
        let sigma_r2 = dbm_to_watts(rf.radar_noise_dbm);
        let consts = RfConstants::new(
            rf.beta0,
            rf.carrier_hz,
            rf.speed_of_light,
            rf.rcs,
            sigma_c2,
            sigma_r2,
            rf.matched_filter_gain,
            rf.a1,
            rf.a2,
            s.altitude,
        )?;
        let geometry = ArrayGeometry::new((rf.tx_array[0], rf.tx_array[1]), (rf.rx_array[0], rf.rx_array[1]))?;
        let power = dbm_to_watts(rf.tx_power_dbm);
        let echo_snr_threshold = db_to_linear(rf.echo_snr_db);
        let gamma = geometry.tx_count() as f64 * power;
        let eta = sigma_c2 * (2f64.powf(rf.r_th) - 1.0) / rf.beta0;
        let gamma_th = sigma_r2 * echo_snr_threshold / (consts.gain * geometry.rx_count() as f64 * consts.beta_r);
        let inflation = match s.init {
            InitMode::Accurate => Matrix4::zeros(),
            InitMode::Inaccurate => Matrix4::from_diagonal(&Vector4::from(self.dynamics.init_inflation)),
        };
        Ok(Scenario {
            config: self.clone(),
            m_init: model.qs + inflation,
            model,
            rf: consts,
            geometry,
            power,
            gamma,
            eta,
            gamma_th,
            echo_snr_threshold,
            rate_threshold: rf.r_th,
            q: Matrix4::from_diagonal(&Vector4::from(self.mpc.q_diag)),
            r: Matrix2::from_diagonal(&Vector2::from(self.mpc.r_diag)),
            horizon: self.mpc.horizon,
            slots: s.slots,
            a_max: self.mpc.a_max,
            v_max: self.mpc.v_max,
            p_gu: Vector2::from(s.gu_position),
            uav_init: MotionState::new(s.uav_position[0], s.uav_position[1], s.uav_velocity[0], s.uav_velocity[1]),
            target_init: MotionState::new(
                s.target_position[0],
                s.target_position[1],
                s.target_velocity[0],
                s.target_velocity[1],
            ),
            init: s.init,
            solver: self.solver.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn presets_set_uav_position() {
        assert_eq!(preset("case1").unwrap().scenario.uav_position, [0.0, 100.0]);
        assert_eq!(preset("case2").unwrap().scenario.uav_position, [0.0, 150.0]);
        assert_eq!(preset("CASE3").unwrap().scenario.uav_position, [0.0, 200.0]);
        assert!(preset("case4").is_err());
    }

    #[test]
    fn overrides_by_bare_and_dotted_key() {
        let cfg = load_config(None, Some("case2"), &["R_th=3.0", "mpc.a_max = 5", "init=inaccurate"]).unwrap();
        assert_eq!(cfg.rf.r_th, 3.0);
        assert_eq!(cfg.mpc.a_max, 5.0);
        assert_eq!(cfg.scenario.init, InitMode::Inaccurate);
        assert_eq!(cfg.scenario.uav_position, [0.0, 150.0]);
    }

    #[test]
    fn unknown_and_malformed_overrides() {
        assert!(matches!(load_config(None, None, &["nope=1"]), Err(Error::UnknownKey(_))));
        assert!(matches!(load_config(None, None, &["rf.nope=1"]), Err(Error::UnknownKey(_))));
        assert!(load_config(None, None, &["r_th"]).is_err());
        assert!(load_config(None, None, &["dt=0"]).is_err());
        assert!(load_config(None, None, &["dt=-0.1"]).is_err());
    }

    #[test]
    fn unknown_file_key_rejected() {
        assert!(matches!(parse_config("[rf]\nfoo = 1\n"), Err(Error::UnknownKey(_))));
        assert!(matches!(parse_config("[bogus]\nx = 1\n"), Err(Error::UnknownKey(_))));
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(dbm_to_watts(-80.0), 1e-11, max_relative = 1e-12);
        let sc = ScenarioConfig::default().resolve().unwrap();
        assert_relative_eq!(sc.power, 1.0, epsilon = 1e-15);
        assert_relative_eq!(sc.gamma, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn derived_thresholds() {
        let sc = ScenarioConfig::default().resolve().unwrap();
        assert_relative_eq!(sc.eta, 1e-11 * (2f64.powf(2.5) - 1.0) / 1e-6, max_relative = 1e-12);
        let expected = 1e-11 * 10f64.powf(0.5) / (1e3 * 16.0 * sc.rf.beta_r);
        assert_relative_eq!(sc.gamma_th, expected, max_relative = 1e-12);
        assert_relative_eq!(sc.config.duration(), 60.0, epsilon = 1e-12);
    }

    #[test]
    fn init_covariances() {
        let acc = ScenarioConfig::default().resolve().unwrap();
        assert_eq!(acc.m_init, acc.model.qs);
        let cfg = load_config(None, None, &["init=inaccurate"]).unwrap().resolve().unwrap();
        assert_relative_eq!(cfg.m_init[(0, 0)], 400.0004, epsilon = 1e-12);
        assert_relative_eq!(cfg.m_init[(3, 3)], 4.01, epsilon = 1e-12);
    }

    #[test]
    fn round_trip() {
        let cfg = load_config(None, Some("case3"), &["beta0=2e-6", "solver.soft_mode=false"]).unwrap();
        let text = dump_config(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
