//! Plant configuration, scenario time series, and the history library used
//! for kernel-weighted state references.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eaf_region::{CarbonBalanceCoefficients, EafPolytope};
use crate::process_units::{HehCoefficients, LagUnitParams, MsrStoichiometry, StorageId, StorageParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Key process units carrying a baseline operating state and a deviation
/// penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "UPPERCASE")]
pub enum CoreUnit {
    Ae,
    Sf,
    Eaf,
    Msr,
}

impl CoreUnit {
    pub const ALL: [CoreUnit; 4] = [CoreUnit::Ae, CoreUnit::Sf, CoreUnit::Eaf, CoreUnit::Msr];

    pub fn label(self) -> &'static str {
        match self {
            CoreUnit::Ae => "AE",
            CoreUnit::Sf => "SF",
            CoreUnit::Eaf => "EAF",
            CoreUnit::Msr => "MSR",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Horizon {
    pub t_periods: usize,
    pub dt_hours: f64,
    /// Rolling look-ahead window length L.
    pub lookahead: usize,
}

/// Linear conversion/consumption coefficients tying units together.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConversionCoefficients {
    /// Tonnes H2 produced per MWh into the electrolyzer.
    pub psi_ae_h2: f64,
    /// Tonnes H2 consumed per tonne DRI produced.
    pub psi_h_dri: f64,
    /// Compressor MWh per MWh of electrolyzer power.
    pub psi_er_comp: f64,
    /// Compressor MWh per tonne DRI produced.
    pub psi_ec_comp: f64,
    /// Expander MWh generated per tonne of H2 throughput.
    pub psi_eexp: f64,
    /// CCS MWh per tonne CO2 captured.
    pub psi_ccs: f64,
    /// Thermal MWh delivered per electric MWh of the low-temperature heater.
    pub psi_leh_eff: f64,
    /// On-site RES consumption ratio bounding cumulative sales.
    pub psi_sell: f64,
    /// Sensible heat (state units) per tonne for HDRI, CDRI, scrap.
    pub heat_per_tonne: [f64; 3],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prices {
    pub rho_curt: f64,
    pub rho_peak: f64,
    pub rho_h2_bf: f64,
    pub rho_thl: f64,
    pub rho_hl: f64,
}

/// Unit operating costs: C^E per MWh and C^M per tonne.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpCosts {
    pub c_e_ae: f64,
    pub c_e_eaf: f64,
    pub c_m_sf: f64,
    pub c_m_eaf: f64,
    pub c_m_msr: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Orders {
    /// Total DRI production order, tonnes over the horizon.
    pub sf_tonnes: f64,
    /// Total crude-steel order, tonnes over the horizon.
    pub eaf_tonnes: f64,
}

/// Baseline stable operating states of the core units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaseStates {
    pub p_ae: f64,
    pub m_qss: f64,
    pub p_eaf: f64,
    pub m_eaf: f64,
    pub m_metha_qss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMechanism {
    M1,
    M2,
    M3,
}

/// Per-unit deviation-penalty table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenaltyUnitParams {
    pub omega: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    /// Normalization capacity psi_{u,max}.
    pub psi_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub mechanism: PenaltyMechanism,
    pub lambda_p: f64,
    pub lambda_rf: f64,
    pub lambda_s: f64,
    pub tangent_cut_count: usize,
    pub units: BTreeMap<CoreUnit, PenaltyUnitParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub horizon: Horizon,
    pub eaf: EafPolytope,
    pub carbon: CarbonBalanceCoefficients,
    pub sf: LagUnitParams,
    pub msr: LagUnitParams,
    pub heh: HehCoefficients,
    pub msr_stoich: MsrStoichiometry,
    pub conversion: ConversionCoefficients,
    pub storages: Vec<StorageParams>,
    pub prices: Prices,
    pub op_costs: OpCosts,
    pub orders: Orders,
    pub base_states: BaseStates,
    pub penalty: PenaltyConfig,
    /// Grid connection capacity, MW; also the big-M for buy/sell exclusivity.
    pub grid_capacity_mw: f64,
    /// Electrolyzer power capacity, MW.
    pub p_ae_max: f64,
    /// Maximum steel output per period, tonnes.
    pub m_eaf_max: f64,
    /// Relative MIP gap for all solves.
    #[serde(default = "default_gap")]
    pub solver_gap: f64,
}

fn default_gap() -> f64 {
    1e-4
}

impl PlantConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: PlantConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: PlantConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn storage(&self, id: StorageId) -> Option<&StorageParams> {
        self.storages.iter().find(|s| s.storage_id == id)
    }

    /// Maximum per-step production of an ordered unit (the Mbar of the
    /// pacing feasibility condition).
    pub fn max_step_output(&self, unit: OrderUnit) -> f64 {
        match unit {
            OrderUnit::Sf => self.sf.qss_max_frac * self.sf.max_discharge,
            OrderUnit::Eaf => self.m_eaf_max,
        }
    }

    pub fn order(&self, unit: OrderUnit) -> f64 {
        match unit {
            OrderUnit::Sf => self.orders.sf_tonnes,
            OrderUnit::Eaf => self.orders.eaf_tonnes,
        }
    }

    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> Vec<String> {
        let mut findings = Vec::new();
        if let Err(e) = self.eaf.validate() {
            findings.push(format!("eaf polytope: {e}"));
        }
        if let Err(e) = self.sf.validate() {
            findings.push(format!("sf: {e}"));
        }
        if let Err(e) = self.msr.validate() {
            findings.push(format!("msr: {e}"));
        }
        for unit in [OrderUnit::Sf, OrderUnit::Eaf] {
            let cap = self.horizon.t_periods as f64 * self.max_step_output(unit);
            if self.order(unit) > cap + 1e-9 {
                findings.push(format!(
                    "order for {unit:?} ({}) exceeds horizon capacity ({cap})",
                    self.order(unit)
                ));
            }
        }
        // HEH electric demand must stay nonnegative for every hot/cold split,
        // otherwise the heater balance cannot be an equality in the MILP.
        let worst = self.heh.psi_tth
            - self.heh.psi_th_re * (self.heh.psi_ftg + self.heh.psi_whb) / self.heh.psi_eh;
        if worst < 0.0 {
            findings.push(
                "heat recovery exceeds HEH demand; electric heater balance would go negative"
                    .into(),
            );
        }
        for s in &self.storages {
            if s.e_min > s.e_initial || s.e_initial > s.e_max {
                findings.push(format!("storage {:?}: e_initial outside bounds", s.storage_id));
            }
            if !(0.0..=1.0).contains(&s.eta_ch) || !(0.0..=1.0).contains(&s.eta_dis) {
                findings.push(format!("storage {:?}: efficiencies must lie in (0,1]", s.storage_id));
            }
        }
        let t = self.horizon.t_periods as f64;
        if (t * self.base_states.m_qss - self.orders.sf_tonnes).abs() > 1e-6 {
            findings.push("baseline SF rate is inconsistent with the SF order".into());
        }
        if (t * self.base_states.m_eaf - self.orders.eaf_tonnes).abs() > 1e-6 {
            findings.push("baseline EAF steel rate is inconsistent with the EAF order".into());
        }
        if self.penalty.mechanism == PenaltyMechanism::M3 && self.penalty.tangent_cut_count < 2 {
            findings.push("M3 penalty requires at least 2 tangent cuts".into());
        }
        for (u, p) in &self.penalty.units {
            if p.psi_max <= 0.0 {
                findings.push(format!("penalty table for {u:?}: psi_max must be positive"));
            }
            if p.eps_plus < 0.0 || p.eps_minus < 0.0 {
                findings.push(format!("penalty table for {u:?}: deadbands must be nonnegative"));
            }
        }
        findings
    }
}

/// Units carrying a production order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OrderUnit {
    Sf,
    Eaf,
}

impl OrderUnit {
    pub const ALL: [OrderUnit; 2] = [OrderUnit::Sf, OrderUnit::Eaf];
}

/// One period of exogenous data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub t: usize,
    pub wind_mw: f64,
    pub solar_mw: f64,
    pub price_buy: f64,
    pub price_sell: f64,
    pub h2_demand_t: f64,
    pub heat_demand_mwh: f64,
}

pub const FEATURE_COUNT: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "wind_mw",
    "solar_mw",
    "price_buy",
    "price_sell",
    "h2_demand_t",
    "heat_demand_mwh",
];

impl ScenarioRow {
    pub fn feature(&self, q: usize) -> f64 {
        match q {
            0 => self.wind_mw,
            1 => self.solar_mw,
            2 => self.price_buy,
            3 => self.price_sell,
            4 => self.h2_demand_t,
            5 => self.heat_demand_mwh,
            _ => panic!("feature index out of range"),
        }
    }

    fn with_feature(mut self, q: usize, v: f64) -> Self {
        match q {
            0 => self.wind_mw = v,
            1 => self.solar_mw = v,
            2 => self.price_buy = v,
            3 => self.price_sell = v,
            4 => self.h2_demand_t = v,
            5 => self.heat_demand_mwh = v,
            _ => panic!("feature index out of range"),
        }
        self
    }

    pub fn map_feature(&self, q: usize, f: impl FnOnce(f64) -> f64) -> Self {
        self.with_feature(q, f(self.feature(q)))
    }
}

/// Exogenous time series over the full horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExogenousScenario {
    pub rows: Vec<ScenarioRow>,
}

impl ExogenousScenario {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_csv_str(text: &str) -> Result<Self, ConfigError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<ScenarioRow> = Vec::new();
        for rec in reader.deserialize() {
            let row: ScenarioRow = rec.map_err(|e| ConfigError::Parse {
                path: "<scenario>".into(),
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        let scenario = ExogenousScenario { rows };
        scenario.check()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_csv_str(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    fn check(&self) -> Result<(), ConfigError> {
        for (i, pair) in self.rows.windows(2).enumerate() {
            if pair[1].t <= pair[0].t {
                return Err(ConfigError::Invalid(format!(
                    "scenario period index must be strictly increasing at row {}",
                    i + 1
                )));
            }
        }
        for row in &self.rows {
            if row.wind_mw < 0.0
                || row.solar_mw < 0.0
                || row.h2_demand_t < 0.0
                || row.heat_demand_mwh < 0.0
            {
                return Err(ConfigError::Invalid(format!(
                    "negative power or demand at period {}",
                    row.t
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("csv serialize");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8")
    }
}

/// One historical scenario: feature series plus perfect-information storage
/// trajectories.
#[derive(Debug, Clone)]
pub struct HistoryScenario {
    pub features: [Vec<f64>; FEATURE_COUNT],
    pub soc: BTreeMap<StorageId, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct HistoryLibrary {
    pub scenarios: Vec<HistoryScenario>,
    pub bandwidths: [f64; FEATURE_COUNT],
}

#[derive(Debug, Deserialize)]
struct BandwidthFile {
    bandwidths: BTreeMap<String, f64>,
}

impl HistoryLibrary {
    /// Load every `*.csv` in `dir` as a scenario. Feature columns are the
    /// scenario columns; `soc_<storage>` columns carry the trajectories.
    /// Optional `bandwidths.json` overrides the per-feature defaults
    /// (sample standard deviation across the library).
    pub fn load(dir: &Path) -> Result<Self, ConfigError> {
        let mut scenarios = Vec::new();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| ConfigError::Io {
                path: dir.display().to_string(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for path in &paths {
            scenarios.push(Self::load_scenario(path)?);
        }
        if scenarios.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "history directory {} holds no scenario csv files",
                dir.display()
            )));
        }
        let t = scenarios[0].features[0].len();
        for s in &scenarios {
            if s.features.iter().any(|f| f.len() != t) {
                return Err(ConfigError::Invalid(
                    "history scenarios must share the time grid".into(),
                ));
            }
        }
        let mut bandwidths = Self::default_bandwidths(&scenarios);
        let bw_path = dir.join("bandwidths.json");
        if bw_path.exists() {
            let text = fs::read_to_string(&bw_path).map_err(|e| ConfigError::Io {
                path: bw_path.display().to_string(),
                source: e,
            })?;
            let file: BandwidthFile =
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: bw_path.display().to_string(),
                    message: e.to_string(),
                })?;
            for (q, name) in FEATURE_NAMES.iter().enumerate() {
                if let Some(&v) = file.bandwidths.get(*name) {
                    bandwidths[q] = v;
                }
            }
        }
        for (q, &b) in bandwidths.iter().enumerate() {
            if b <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "bandwidth for {} must be positive",
                    FEATURE_NAMES[q]
                )));
            }
        }
        Ok(HistoryLibrary {
            scenarios,
            bandwidths,
        })
    }

    fn load_scenario(path: &Path) -> Result<HistoryScenario, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
            .clone();
        let mut features: [Vec<f64>; FEATURE_COUNT] = Default::default();
        let mut soc: BTreeMap<StorageId, Vec<f64>> = BTreeMap::new();
        let soc_cols: Vec<(usize, StorageId)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                h.strip_prefix("soc_").and_then(|tail| {
                    StorageId::ALL
                        .iter()
                        .find(|s| s.label().eq_ignore_ascii_case(tail))
                        .map(|&s| (i, s))
                })
            })
            .collect();
        let feature_cols: Vec<(usize, usize)> = FEATURE_NAMES
            .iter()
            .enumerate()
            .filter_map(|(q, name)| {
                headers.iter().position(|h| h == *name).map(|i| (i, q))
            })
            .collect();
        if feature_cols.len() != FEATURE_COUNT {
            return Err(ConfigError::Parse {
                path: path.display().to_string(),
                message: "history scenario must carry all six feature columns".into(),
            });
        }
        for rec in reader.records() {
            let rec = rec.map_err(|e| ConfigError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let get = |i: usize| -> Result<f64, ConfigError> {
                rec.get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| ConfigError::Parse {
                        path: path.display().to_string(),
                        message: format!("bad numeric value in column {i}"),
                    })
            };
            for &(i, q) in &feature_cols {
                features[q].push(get(i)?);
            }
            for &(i, s) in &soc_cols {
                soc.entry(s).or_default().push(get(i)?);
            }
        }
        Ok(HistoryScenario { features, soc })
    }

    fn default_bandwidths(scenarios: &[HistoryScenario]) -> [f64; FEATURE_COUNT] {
        let mut out = [1.0; FEATURE_COUNT];
        for (q, bw) in out.iter_mut().enumerate() {
            let all: Vec<f64> = scenarios
                .iter()
                .flat_map(|s| s.features[q].iter().copied())
                .collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            *bw = if sd > 1e-9 { sd } else { 1.0 };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_csv_round_trip() {
        let csv = "t,wind_mw,solar_mw,price_buy,price_sell,h2_demand_t,heat_demand_mwh\n\
                   1,100.0,0.0,45.0,40.0,2.0,30.0\n\
                   2,110.0,5.0,50.0,44.0,2.0,30.0\n";
        let s = ExogenousScenario::from_csv_str(csv).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.rows[1].wind_mw, 110.0);
        let back = ExogenousScenario::from_csv_str(&s.to_csv_string()).unwrap();
        assert_eq!(back.rows[0].price_buy, 45.0);
    }

    #[test]
    fn scenario_rejects_non_increasing_t() {
        let csv = "t,wind_mw,solar_mw,price_buy,price_sell,h2_demand_t,heat_demand_mwh\n\
                   2,100.0,0.0,45.0,40.0,2.0,30.0\n\
                   1,110.0,5.0,50.0,44.0,2.0,30.0\n";
        assert!(ExogenousScenario::from_csv_str(csv).is_err());
    }

    #[test]
    fn scenario_rejects_negative_power() {
        let csv = "t,wind_mw,solar_mw,price_buy,price_sell,h2_demand_t,heat_demand_mwh\n\
                   1,-1.0,0.0,45.0,40.0,2.0,30.0\n";
        assert!(ExogenousScenario::from_csv_str(csv).is_err());
    }
}
