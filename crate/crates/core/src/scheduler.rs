//! The four scheduling problems (BD, BI, DD, DI) compiled to MILP.
//!
//! BD and BI are baseline problems with the core units locked at their
//! stable states; DD and DI free the core units against deviation penalties
//! and add the offer-shortfall machinery. All four share the physical
//! constraint stack; a constraint-replay auditor re-checks decoded
//! solutions without the solver in the loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BaseStates, CoreUnit, OrderUnit, PenaltyConfig, PenaltyMechanism, PenaltyUnitParams, PlantConfig, ScenarioRow};
use crate::milp::{LinExpr, MilpError, MilpModel, SolveStatus, VarId};
use crate::process_units::StorageId;

/// Normalized residual tolerance for the replay auditor.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bd,
    Bi,
    Dd,
    Di,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Bd => "bd",
            Mode::Bi => "bi",
            Mode::Dd => "dd",
            Mode::Di => "di",
        }
    }

    pub fn locks_core_units(self) -> bool {
        matches!(self, Mode::Bd | Mode::Bi)
    }
}

/// Operating states of the penalized core units for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreStates {
    pub p_ae: f64,
    pub m_qss: f64,
    pub p_eaf: f64,
    pub m_metha_qss: f64,
}

impl CoreStates {
    pub fn get(&self, u: CoreUnit) -> f64 {
        match u {
            CoreUnit::Ae => self.p_ae,
            CoreUnit::Sf => self.m_qss,
            CoreUnit::Eaf => self.p_eaf,
            CoreUnit::Msr => self.m_metha_qss,
        }
    }

    pub fn from_base(b: &BaseStates) -> Self {
        CoreStates {
            p_ae: b.p_ae,
            m_qss: b.m_qss,
            p_eaf: b.p_eaf,
            m_metha_qss: b.m_metha_qss,
        }
    }
}

/// Realized physical state handed to each rolling window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantState {
    pub storage_levels: BTreeMap<StorageId, f64>,
    pub sf_qss_prev: f64,
    pub msr_qss_prev: f64,
    /// Hot DRI produced in the previous period, available for charging.
    pub pending_hot: f64,
}

impl PlantState {
    /// Steady baseline state: storages at their initial levels, both lag
    /// units at the base rate, hot route primed with one base period.
    pub fn baseline(cfg: &PlantConfig) -> Self {
        let storage_levels = cfg
            .storages
            .iter()
            .map(|s| (s.storage_id, s.e_initial))
            .collect();
        PlantState {
            storage_levels,
            sf_qss_prev: cfg.base_states.m_qss,
            msr_qss_prev: cfg.base_states.m_metha_qss,
            pending_hot: cfg.base_states.m_qss,
        }
    }
}

/// Day-ahead offer series over the full horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfferSeries {
    pub mag: Vec<f64>,
    pub dir: Vec<f64>,
}

impl OfferSeries {
    /// Offers from the BD/DD net loads: B = netload_bd - netload_dd,
    /// magnitude |B|, direction sign(B) with sign(0) = 0.
    pub fn from_netloads(netload_bd: &[f64], netload_dd: &[f64]) -> Self {
        let mut mag = Vec::with_capacity(netload_bd.len());
        let mut dir = Vec::with_capacity(netload_bd.len());
        for (b, d) in netload_bd.iter().zip(netload_dd) {
            let off = b - d;
            mag.push(off.abs());
            dir.push(if off > 0.0 {
                1.0
            } else if off < 0.0 {
                -1.0
            } else {
                0.0
            });
        }
        OfferSeries { mag, dir }
    }

    pub fn is_offered(&self, t: usize) -> bool {
        self.mag[t] > 0.0
    }
}

/// Offer data sliced to a DI window.
#[derive(Debug, Clone)]
pub struct OfferWindow {
    pub mag: Vec<f64>,
    pub dir: Vec<f64>,
    /// BI benchmark net load over the same window, realized-truth run.
    pub netload_bi: Vec<f64>,
}

/// Production-order handling per problem.
#[derive(Debug, Clone)]
pub enum OrderMode {
    /// Exact horizon totals (BD, DD).
    ExactTotal,
    /// Per-window [lower, upper] bounds from the pacing rule (DI).
    WindowBounds(BTreeMap<OrderUnit, (f64, f64)>),
    /// No order rows (BI: the lock already pins production).
    None,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec<'a> {
    pub mode: Mode,
    pub plant: &'a PlantConfig,
    /// Global index of the first window period.
    pub window_start: usize,
    /// Exogenous (forecast) series over the window.
    pub rows: Vec<ScenarioRow>,
    pub init: PlantState,
    /// Core-unit lock values (BD/BI only).
    pub lock: Option<BaseStates>,
    /// Per-period deviation reference (DD: BD trajectory, DI: BI trajectory).
    pub penalty_reference: Option<Vec<CoreStates>>,
    /// Kernel SoC references for the tracking term (BI/DI).
    pub soc_reference: Option<BTreeMap<StorageId, Vec<f64>>>,
    /// Offer slice (DI only).
    pub offer: Option<OfferWindow>,
    pub order_mode: OrderMode,
    /// Remaining cumulative sell allowance for this window.
    pub sell_quota: f64,
    /// Running realized peak purchase; the peak variable must dominate it.
    pub peak_floor: f64,
    /// Window reaches the horizon end: terminal silo condition applies.
    pub terminal_silo: bool,
}

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("order for {unit:?} ({order}) exceeds horizon capacity ({capacity})")]
    InfeasibleOrder {
        unit: OrderUnit,
        order: f64,
        capacity: f64,
    },
    #[error("spec is inconsistent: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Solve(#[from] MilpError),
}

/// Per-period storage flows in a decoded solution.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StorageFlows {
    pub p_ch: f64,
    pub p_dis: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodDispatch {
    pub t: usize,
    pub p_buy: f64,
    pub p_sell: f64,
    pub p_curt: f64,
    pub netload: f64,
    pub p_ae: f64,
    pub p_eaf: f64,
    pub p_heh: f64,
    pub p_leh: f64,
    pub p_ccs: f64,
    pub p_comp: f64,
    pub p_exp: f64,
    pub m_qss: f64,
    pub m_dri_p: f64,
    pub m_hot_out: f64,
    /// Hot DRI actually charged this period (previous period's hot output).
    pub m_hdri_charge: f64,
    pub m_eaf: f64,
    pub m_scrap: f64,
    pub m_metha_qss: f64,
    pub m_metha_p: f64,
    pub m_carbon: f64,
    pub m_lime: f64,
    pub co2_out: f64,
    pub hl_sell: f64,
    pub thl_sell: f64,
    pub x: [f64; 3],
    pub storage: BTreeMap<StorageId, StorageFlows>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy_cost: f64,
    pub op_cost: f64,
    pub sell_revenue: f64,
    pub byproduct_revenue: f64,
    pub curtail_cost: f64,
    pub peak_cost: f64,
    pub penalty_deviation: f64,
    pub penalty_tracking: f64,
    pub penalty_shortfall: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.energy_cost + self.op_cost + self.curtail_cost + self.peak_cost
            + self.penalty_deviation
            + self.penalty_tracking
            + self.penalty_shortfall
            - self.sell_revenue
            - self.byproduct_revenue
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub mode: Mode,
    pub periods: Vec<PeriodDispatch>,
    pub peak: f64,
    pub objective: f64,
    pub cost: CostBreakdown,
    pub status_optimal: bool,
    pub mip_gap: f64,
}

struct PeriodVars {
    p_buy: VarId,
    p_sell: VarId,
    p_curt: VarId,
    b_grid: VarId,
    p_ae: VarId,
    m_qss: VarId,
    m_dri_p: VarId,
    m_hot_out: VarId,
    x: [VarId; 3],
    p_eaf: VarId,
    m_eaf: VarId,
    m_metha_qss: VarId,
    m_metha_p: VarId,
    p_heh: VarId,
    p_leh: VarId,
    hl_sell: VarId,
    thl_sell: VarId,
    storage: BTreeMap<StorageId, (VarId, VarId, VarId, Option<VarId>)>,
    shortfall: Option<VarId>,
}

/// Built model plus the decode map.
pub struct ModelBundle {
    pub model: MilpModel,
    periods: Vec<PeriodVars>,
    peak: VarId,
    window_start: usize,
    mode: Mode,
    penalty_terms: LinExpr,
    tracking_terms: LinExpr,
    shortfall_terms: LinExpr,
}

pub fn build_bd(spec: &ProblemSpec) -> Result<ModelBundle, SchedulerError> {
    expect_mode(spec, Mode::Bd)?;
    build(spec)
}

pub fn build_bi(spec: &ProblemSpec) -> Result<ModelBundle, SchedulerError> {
    expect_mode(spec, Mode::Bi)?;
    build(spec)
}

pub fn build_dd(spec: &ProblemSpec) -> Result<ModelBundle, SchedulerError> {
    expect_mode(spec, Mode::Dd)?;
    build(spec)
}

pub fn build_di(spec: &ProblemSpec) -> Result<ModelBundle, SchedulerError> {
    expect_mode(spec, Mode::Di)?;
    build(spec)
}

fn expect_mode(spec: &ProblemSpec, mode: Mode) -> Result<(), SchedulerError> {
    if spec.mode != mode {
        return Err(SchedulerError::BadSpec(format!(
            "expected mode {}, got {}",
            mode.label(),
            spec.mode.label()
        )));
    }
    Ok(())
}

fn check_spec(spec: &ProblemSpec) -> Result<(), SchedulerError> {
    let l = spec.rows.len();
    if l == 0 {
        return Err(SchedulerError::BadSpec("empty window".into()));
    }
    match spec.mode {
        Mode::Bd | Mode::Bi => {
            if spec.lock.is_none() {
                return Err(SchedulerError::BadSpec(
                    "baseline problems require the core-unit lock".into(),
                ));
            }
            if spec.offer.is_some() {
                return Err(SchedulerError::BadSpec(
                    "offers are a DI-only field".into(),
                ));
            }
        }
        Mode::Dd | Mode::Di => {
            if spec.lock.is_some() {
                return Err(SchedulerError::BadSpec(
                    "DR problems must not lock the core units".into(),
                ));
            }
            let r = spec
                .penalty_reference
                .as_ref()
                .ok_or_else(|| SchedulerError::BadSpec("DR problems need a deviation reference".into()))?;
            if r.len() != l {
                return Err(SchedulerError::BadSpec(
                    "deviation reference length mismatch".into(),
                ));
            }
            if spec.mode == Mode::Di {
                let o = spec
                    .offer
                    .as_ref()
                    .ok_or_else(|| SchedulerError::BadSpec("DI needs the offer window".into()))?;
                if o.mag.len() != l || o.dir.len() != l || o.netload_bi.len() != l {
                    return Err(SchedulerError::BadSpec("offer window length mismatch".into()));
                }
            } else if spec.offer.is_some() {
                return Err(SchedulerError::BadSpec("offers are a DI-only field".into()));
            }
        }
    }
    if let Some(refs) = &spec.soc_reference {
        for (id, series) in refs {
            if series.len() != l {
                return Err(SchedulerError::BadSpec(format!(
                    "soc reference for {id:?} has wrong length"
                )));
            }
        }
    }
    if matches!(spec.order_mode, OrderMode::ExactTotal) {
        for unit in OrderUnit::ALL {
            let capacity = l as f64 * spec.plant.max_step_output(unit);
            let order = spec.plant.order(unit);
            if order > capacity + 1e-9 {
                return Err(SchedulerError::InfeasibleOrder {
                    unit,
                    order,
                    capacity,
                });
            }
        }
    }
    Ok(())
}

fn build(spec: &ProblemSpec) -> Result<ModelBundle, SchedulerError> {
    check_spec(spec)?;
    let cfg = spec.plant;
    let l = spec.rows.len();
    let dt = cfg.horizon.dt_hours;
    let grid = cfg.grid_capacity_mw;
    let heat = cfg.conversion.heat_per_tonne;
    let conv = &cfg.conversion;
    let mut m = MilpModel::new();

    let peak = m.add_var("p_peak", spec.peak_floor.max(0.0), f64::INFINITY);
    let mut periods: Vec<PeriodVars> = Vec::with_capacity(l);

    for (i, row) in spec.rows.iter().enumerate() {
        let t = spec.window_start + i;
        let sfp = &cfg.sf;
        let msp = &cfg.msr;
        let mut storage = BTreeMap::new();
        for s in &cfg.storages {
            let ch = m.add_var(format!("ch_{}_{t}", s.storage_id.label()), 0.0, s.p_ch_max);
            let dis = m.add_var(format!("dis_{}_{t}", s.storage_id.label()), 0.0, s.p_dis_max);
            let e = m.add_var(format!("e_{}_{t}", s.storage_id.label()), s.e_min, s.e_max);
            // Exclusivity needs a binary only when both directions are open.
            let b = if s.p_ch_max > 0.0 && s.p_dis_max > 0.0 {
                Some(m.add_binary(format!("bst_{}_{t}", s.storage_id.label())))
            } else {
                None
            };
            storage.insert(s.storage_id, (ch, dis, e, b));
        }
        let pv = PeriodVars {
            p_buy: m.add_var(format!("p_buy_{t}"), 0.0, grid),
            p_sell: m.add_var(format!("p_sell_{t}"), 0.0, grid),
            p_curt: m.add_var(format!("p_curt_{t}"), 0.0, row.wind_mw + row.solar_mw),
            b_grid: m.add_binary(format!("b_grid_{t}")),
            p_ae: m.add_var(format!("p_ae_{t}"), 0.0, cfg.p_ae_max),
            m_qss: m.add_var(
                format!("m_qss_{t}"),
                sfp.qss_min_frac * sfp.max_discharge,
                sfp.qss_max_frac * sfp.max_discharge,
            ),
            m_dri_p: m.add_var(format!("m_dri_p_{t}"), 0.0, sfp.max_discharge),
            m_hot_out: m.add_var(format!("m_hot_out_{t}"), 0.0, sfp.max_discharge),
            x: [
                m.add_var(format!("x1_{t}"), 0.0, f64::INFINITY),
                m.add_var(format!("x2_{t}"), 0.0, f64::INFINITY),
                m.add_var(format!("x3_{t}"), 0.0, f64::INFINITY),
            ],
            p_eaf: m.add_var(format!("p_eaf_{t}"), 0.0, f64::INFINITY),
            m_eaf: m.add_var(format!("m_eaf_{t}"), 0.0, cfg.m_eaf_max),
            m_metha_qss: m.add_var(
                format!("m_metha_qss_{t}"),
                msp.qss_min_frac * msp.max_discharge,
                msp.qss_max_frac * msp.max_discharge,
            ),
            m_metha_p: m.add_var(format!("m_metha_p_{t}"), 0.0, msp.max_discharge),
            p_heh: m.add_var(format!("p_heh_{t}"), 0.0, f64::INFINITY),
            p_leh: m.add_var(format!("p_leh_{t}"), 0.0, grid),
            hl_sell: m.add_var(format!("hl_sell_{t}"), 0.0, row.h2_demand_t),
            thl_sell: m.add_var(format!("thl_sell_{t}"), 0.0, row.heat_demand_mwh),
            storage,
            shortfall: None,
        };
        periods.push(pv);
    }

    // Grid, storage, and peak structure.
    for (i, pv) in periods.iter().enumerate() {
        let t = spec.window_start + i;
        m.add_le(
            format!("excl_buy_{t}"),
            LinExpr::new().term(pv.p_buy, 1.0).term(pv.b_grid, grid),
            grid,
        );
        m.add_le(
            format!("excl_sell_{t}"),
            LinExpr::new().term(pv.p_sell, 1.0).term(pv.b_grid, -grid),
            0.0,
        );
        m.add_ge(
            format!("peak_dom_{t}"),
            LinExpr::new().term(peak, 1.0).term(pv.p_buy, -1.0),
            0.0,
        );
        for s in &cfg.storages {
            let (ch, dis, e, b) = pv.storage[&s.storage_id];
            let mut dyn_expr = LinExpr::new()
                .term(e, 1.0)
                .term(ch, -s.eta_ch * dt)
                .term(dis, dt / s.eta_dis);
            let rhs = if i == 0 {
                *spec.init.storage_levels.get(&s.storage_id).unwrap_or(&s.e_initial)
            } else {
                let prev = periods[i - 1].storage[&s.storage_id].2;
                dyn_expr.add_term(prev, -1.0);
                0.0
            };
            m.add_eq(format!("soc_{}_{t}", s.storage_id.label()), dyn_expr, rhs);
            if let Some(b) = b {
                m.add_le(
                    format!("stch_{}_{t}", s.storage_id.label()),
                    LinExpr::new().term(ch, 1.0).term(b, -s.p_ch_max),
                    0.0,
                );
                m.add_le(
                    format!("stdis_{}_{t}", s.storage_id.label()),
                    LinExpr::new().term(dis, 1.0).term(b, s.p_dis_max),
                    s.p_dis_max,
                );
            }
        }
    }

    // Terminal silo condition: the CDRI silo returns to its initial level so
    // consecutive horizons start identically.
    if spec.terminal_silo {
        if let Some(s) = cfg.storage(StorageId::Cdris) {
            let e_last = periods[l - 1].storage[&StorageId::Cdris].2;
            m.add_eq("terminal_silo", LinExpr::from_var(e_last), s.e_initial);
        }
    }

    // Process structure per period.
    let mref = cfg.eaf.b_eq[1];
    for (i, pv) in periods.iter().enumerate() {
        let t = spec.window_start + i;

        // Shaft furnace lag and ramp.
        let alpha_sf = cfg.sf.alpha(dt);
        let mut lag = LinExpr::new()
            .term(pv.m_dri_p, 1.0)
            .term(pv.m_qss, -(1.0 - alpha_sf));
        let rhs = if i == 0 {
            alpha_sf * spec.init.sf_qss_prev
        } else {
            lag.add_term(periods[i - 1].m_qss, -alpha_sf);
            0.0
        };
        m.add_eq(format!("sf_lag_{t}"), lag, rhs);
        let (ramp_lo, ramp_hi) = (
            cfg.sf.ramp_down_frac * cfg.sf.max_discharge,
            cfg.sf.ramp_up_frac * cfg.sf.max_discharge,
        );
        let mut ramp = LinExpr::from_var(pv.m_qss);
        let (lo, hi) = if i == 0 {
            (
                ramp_lo + spec.init.sf_qss_prev,
                ramp_hi + spec.init.sf_qss_prev,
            )
        } else {
            ramp.add_term(periods[i - 1].m_qss, -1.0);
            (ramp_lo, ramp_hi)
        };
        m.add_row(format!("sf_ramp_{t}"), ramp, lo, hi);

        // Methanol reactor lag and ramp.
        let alpha_ms = cfg.msr.alpha(dt);
        let mut lag = LinExpr::new()
            .term(pv.m_metha_p, 1.0)
            .term(pv.m_metha_qss, -(1.0 - alpha_ms));
        let rhs = if i == 0 {
            alpha_ms * spec.init.msr_qss_prev
        } else {
            lag.add_term(periods[i - 1].m_metha_qss, -alpha_ms);
            0.0
        };
        m.add_eq(format!("msr_lag_{t}"), lag, rhs);
        let (ramp_lo, ramp_hi) = (
            cfg.msr.ramp_down_frac * cfg.msr.max_discharge,
            cfg.msr.ramp_up_frac * cfg.msr.max_discharge,
        );
        let mut ramp = LinExpr::from_var(pv.m_metha_qss);
        let (lo, hi) = if i == 0 {
            (
                ramp_lo + spec.init.msr_qss_prev,
                ramp_hi + spec.init.msr_qss_prev,
            )
        } else {
            ramp.add_term(periods[i - 1].m_metha_qss, -1.0);
            (ramp_lo, ramp_hi)
        };
        m.add_row(format!("msr_ramp_{t}"), ramp, lo, hi);

        // DRI routing: produced = hot + silo charge; hot output feeds the
        // EAF one interval later as sensible heat x1.
        let mut split = LinExpr::new().term(pv.m_dri_p, 1.0).term(pv.m_hot_out, -1.0);
        if let Some(&(ch, _, _, _)) = pv.storage.get(&StorageId::Cdris) {
            split.add_term(ch, -1.0);
        }
        m.add_eq(format!("dri_split_{t}"), split, 0.0);
        let mut hot = LinExpr::from_var(pv.x[0]);
        let rhs = if i == 0 {
            heat[0] * spec.init.pending_hot
        } else {
            hot.add_term(periods[i - 1].m_hot_out, -heat[0]);
            0.0
        };
        m.add_le(format!("hot_avail_{t}"), hot, rhs);

        // Cold DRI and scrap sensible heats tied to storage discharges.
        let mut cold = LinExpr::from_var(pv.x[1]);
        if let Some(&(_, dis, _, _)) = pv.storage.get(&StorageId::Cdris) {
            cold.add_term(dis, -heat[1]);
        }
        m.add_eq(format!("cold_heat_{t}"), cold, 0.0);
        let mut scrap = LinExpr::from_var(pv.x[2]);
        if let Some(&(_, dis, _, _)) = pv.storage.get(&StorageId::ScS) {
            scrap.add_term(dis, -heat[2]);
        }
        m.add_eq(format!("scrap_heat_{t}"), scrap, 0.0);

        // EAF feasible region, scaled to this period's steel output.
        let a = cfg.eaf.a_eq;
        m.add_eq(
            format!("eaf_energy_{t}"),
            LinExpr::new()
                .term(pv.x[0], a[0][0])
                .term(pv.x[1], a[0][1])
                .term(pv.x[2], a[0][2])
                .term(pv.p_eaf, -1.0),
            0.0,
        );
        m.add_eq(
            format!("eaf_mass_{t}"),
            LinExpr::new()
                .term(pv.x[0], a[1][0])
                .term(pv.x[1], a[1][1])
                .term(pv.x[2], a[1][2])
                .term(pv.m_eaf, -1.0),
            0.0,
        );
        let z = [pv.x[0], pv.x[1], pv.x[2], pv.p_eaf];
        for c in 0..4 {
            m.add_ge(
                format!("eaf_zlo{c}_{t}"),
                LinExpr::new()
                    .term(z[c], 1.0)
                    .term(pv.m_eaf, -cfg.eaf.z_min[c] / mref),
                0.0,
            );
            m.add_le(
                format!("eaf_zhi{c}_{t}"),
                LinExpr::new()
                    .term(z[c], 1.0)
                    .term(pv.m_eaf, -cfg.eaf.z_max[c] / mref),
                0.0,
            );
        }

        // High-temperature heater balance; validated configs keep recovery
        // below demand, so this is an equality.
        let mut heh = LinExpr::new()
            .term(pv.p_heh, 1.0)
            .term(
                pv.m_dri_p,
                -(cfg.heh.psi_tth - cfg.heh.psi_th_re * cfg.heh.psi_ftg / cfg.heh.psi_eh),
            );
        if let Some(&(ch, _, _, _)) = pv.storage.get(&StorageId::Cdris) {
            heh.add_term(ch, cfg.heh.psi_th_re * cfg.heh.psi_whb / cfg.heh.psi_eh);
        }
        m.add_eq(format!("heh_{t}"), heh, 0.0);

        // Hydrogen balance.
        let mut h2 = LinExpr::new()
            .term(pv.p_ae, conv.psi_ae_h2)
            .term(pv.m_dri_p, -conv.psi_h_dri)
            .term(pv.m_metha_p, -cfg.msr_stoich.psi_h_metha)
            .term(pv.hl_sell, -1.0);
        if let Some(&(ch, dis, _, _)) = pv.storage.get(&StorageId::Ht) {
            h2.add_term(dis, 1.0);
            h2.add_term(ch, -1.0);
        }
        m.add_eq(format!("h2_bal_{t}"), h2, 0.0);

        // CO2 balance: EAF emissions are fully captured and either stored or
        // consumed by methanol synthesis.
        let co2_per_steel = cfg.carbon.psi_c_carbon * cfg.carbon.psi_carbon_per_steel
            + cfg.carbon.psi_c_lime * cfg.carbon.psi_lime_per_steel;
        let mut co2 = LinExpr::new()
            .term(pv.m_eaf, co2_per_steel)
            .term(pv.x[2], cfg.carbon.psi_c_scrap / heat[2])
            .term(pv.m_metha_p, -cfg.msr_stoich.psi_c_metha);
        if let Some(&(ch, dis, _, _)) = pv.storage.get(&StorageId::Cst) {
            co2.add_term(dis, 1.0);
            co2.add_term(ch, -1.0);
        }
        m.add_eq(format!("co2_bal_{t}"), co2, 0.0);

        // Low-temperature heat balance.
        let mut th = LinExpr::new()
            .term(pv.p_leh, conv.psi_leh_eff)
            .term(pv.thl_sell, -1.0);
        if let Some(&(ch, dis, _, _)) = pv.storage.get(&StorageId::Lts) {
            th.add_term(dis, 1.0);
            th.add_term(ch, -1.0);
        }
        m.add_eq(format!("heat_bal_{t}"), th, 0.0);

        // Power balance. Compressor and CCS powers are linear in other
        // variables; the expander runs on hydrogen-storage discharge.
        let row = &spec.rows[i];
        let mut pb = LinExpr::new()
            .term(pv.p_buy, 1.0)
            .term(pv.p_curt, -1.0)
            .term(pv.p_sell, -1.0)
            .term(pv.p_ae, -1.0 - conv.psi_er_comp)
            .term(pv.p_eaf, -1.0)
            .term(pv.p_heh, -1.0)
            .term(pv.p_leh, -1.0)
            .term(pv.m_dri_p, -conv.psi_ec_comp)
            .term(pv.m_eaf, -conv.psi_ccs * co2_per_steel)
            .term(pv.x[2], -conv.psi_ccs * cfg.carbon.psi_c_scrap / heat[2]);
        pb.constant = row.wind_mw + row.solar_mw;
        if let Some(&(ch, dis, _, _)) = pv.storage.get(&StorageId::Bess) {
            pb.add_term(dis, 1.0);
            pb.add_term(ch, -1.0);
        }
        if let Some(&(_, dis, _, _)) = pv.storage.get(&StorageId::Ht) {
            pb.add_term(dis, conv.psi_eexp);
        }
        m.add_eq(format!("power_bal_{t}"), pb, 0.0);
    }

    // Core-unit lock (BD/BI).
    if let Some(base) = &spec.lock {
        for (i, pv) in periods.iter().enumerate() {
            let t = spec.window_start + i;
            m.add_eq(format!("lock_ae_{t}"), LinExpr::from_var(pv.p_ae), base.p_ae);
            m.add_eq(format!("lock_sf_{t}"), LinExpr::from_var(pv.m_qss), base.m_qss);
            m.add_eq(format!("lock_eaf_{t}"), LinExpr::from_var(pv.p_eaf), base.p_eaf);
            m.add_eq(
                format!("lock_eafm_{t}"),
                LinExpr::from_var(pv.m_eaf),
                base.m_eaf,
            );
            m.add_eq(
                format!("lock_msr_{t}"),
                LinExpr::from_var(pv.m_metha_qss),
                base.m_metha_qss,
            );
        }
    }

    // Orders.
    match &spec.order_mode {
        OrderMode::ExactTotal => {
            for unit in OrderUnit::ALL {
                let mut sum = LinExpr::new();
                for pv in &periods {
                    sum.add_term(order_var(pv, unit), 1.0);
                }
                m.add_eq(format!("order_{unit:?}"), sum, cfg.order(unit));
            }
        }
        OrderMode::WindowBounds(bounds) => {
            for (unit, &(lo, hi)) in bounds {
                let mut sum = LinExpr::new();
                for pv in &periods {
                    sum.add_term(order_var(pv, *unit), 1.0);
                }
                m.add_row(format!("pace_{unit:?}"), sum, lo, hi);
            }
        }
        OrderMode::None => {}
    }

    // Cumulative sell quota.
    let mut sells = LinExpr::new();
    for pv in &periods {
        sells.add_term(pv.p_sell, 1.0);
    }
    m.add_le("sell_quota", sells, spec.sell_quota.max(0.0));

    // Economic objective.
    let p = &cfg.prices;
    let oc = &cfg.op_costs;
    let mut obj = LinExpr::new().term(peak, p.rho_peak);
    for (i, pv) in periods.iter().enumerate() {
        let row = &spec.rows[i];
        obj.add_term(pv.p_buy, row.price_buy);
        obj.add_term(pv.p_sell, -row.price_sell);
        obj.add_term(pv.p_curt, p.rho_curt);
        obj.add_term(pv.hl_sell, -p.rho_hl);
        obj.add_term(pv.thl_sell, -p.rho_thl);
        obj.add_term(pv.p_ae, oc.c_e_ae);
        obj.add_term(pv.p_eaf, oc.c_e_eaf);
        obj.add_term(pv.m_dri_p, oc.c_m_sf);
        obj.add_term(pv.m_eaf, oc.c_m_eaf);
        obj.add_term(pv.m_metha_p, oc.c_m_msr);
    }

    // Deviation penalties (DD/DI).
    let mut penalty_terms = LinExpr::new();
    if let Some(refs) = &spec.penalty_reference {
        for (i, reference) in refs.iter().enumerate() {
            let t = spec.window_start + i;
            for unit in CoreUnit::ALL {
                let Some(table) = cfg.penalty.units.get(&unit) else {
                    continue;
                };
                let var = core_var(&periods[i], unit);
                encode_penalty(
                    &mut m,
                    &cfg.penalty,
                    table,
                    var,
                    reference.get(unit),
                    &format!("{}_{t}", unit.label()),
                    &mut penalty_terms,
                )?;
            }
        }
    }
    obj.add_expr(&penalty_terms, 1.0);

    // SoC tracking (BI/DI).
    let mut tracking_terms = LinExpr::new();
    if let Some(refs) = &spec.soc_reference {
        for (id, series) in refs {
            for (i, &target) in series.iter().enumerate() {
                let Some(&(_, _, e, _)) = periods[i].storage.get(id) else {
                    continue;
                };
                let t = spec.window_start + i;
                let up = m.add_var(format!("trk_up_{}_{t}", id.label()), 0.0, f64::INFINITY);
                let dn = m.add_var(format!("trk_dn_{}_{t}", id.label()), 0.0, f64::INFINITY);
                m.add_eq(
                    format!("trk_{}_{t}", id.label()),
                    LinExpr::new().term(e, 1.0).term(up, -1.0).term(dn, 1.0),
                    target,
                );
                tracking_terms.add_term(up, cfg.penalty.lambda_rf);
                tracking_terms.add_term(dn, cfg.penalty.lambda_rf);
            }
        }
    }
    obj.add_expr(&tracking_terms, 1.0);

    // Offer shortfall (DI).
    let mut shortfall_terms = LinExpr::new();
    if let Some(offer) = &spec.offer {
        for i in 0..l {
            if offer.mag[i] <= 0.0 {
                continue;
            }
            let t = spec.window_start + i;
            let s = m.add_var(format!("shortfall_{t}"), 0.0, f64::INFINITY);
            periods[i].shortfall = Some(s);
            // s >= mag - d*(netload_bi - (p_buy - p_sell))
            let d = offer.dir[i];
            m.add_ge(
                format!("shortfall_def_{t}"),
                LinExpr::new()
                    .term(s, 1.0)
                    .term(periods[i].p_buy, -d)
                    .term(periods[i].p_sell, d),
                offer.mag[i] - d * offer.netload_bi[i],
            );
            shortfall_terms.add_term(s, cfg.penalty.lambda_s);
        }
    }
    obj.add_expr(&shortfall_terms, 1.0);

    m.set_objective(obj);
    Ok(ModelBundle {
        model: m,
        periods,
        peak,
        window_start: spec.window_start,
        mode: spec.mode,
        penalty_terms,
        tracking_terms,
        shortfall_terms,
    })
}

fn order_var(pv: &PeriodVars, unit: OrderUnit) -> VarId {
    match unit {
        OrderUnit::Sf => pv.m_dri_p,
        OrderUnit::Eaf => pv.m_eaf,
    }
}

fn core_var(pv: &PeriodVars, unit: CoreUnit) -> VarId {
    match unit {
        CoreUnit::Ae => pv.p_ae,
        CoreUnit::Sf => pv.m_qss,
        CoreUnit::Eaf => pv.p_eaf,
        CoreUnit::Msr => pv.m_metha_qss,
    }
}

/// Tangent abscissas for the M3 epigraph over the hinge h = (sigma*dpsi - eps)+,
/// clustered quadratically near zero where the relative error budget is
/// tightest.
pub fn tangent_points(eps: f64, count: usize) -> Vec<f64> {
    let hmax = (1.0 - eps).max(1e-6);
    (0..count)
        .map(|i| hmax * (i as f64 / (count - 1) as f64).powi(2))
        .collect()
}

/// Exact penalty value for a normalized deviation.
pub fn penalty_phi_exact(
    mechanism: PenaltyMechanism,
    table: &PenaltyUnitParams,
    dpsi: f64,
) -> f64 {
    let mut total = 0.0;
    for (sigma, alpha, beta, eps) in [
        (1.0, table.alpha_plus, table.beta_plus, table.eps_plus),
        (-1.0, table.alpha_minus, table.beta_minus, table.eps_minus),
    ] {
        let hinge = |e: f64| (sigma * dpsi - e).max(0.0);
        total += match mechanism {
            PenaltyMechanism::M1 => alpha * hinge(0.0),
            PenaltyMechanism::M2 => alpha * hinge(eps),
            PenaltyMechanism::M3 => alpha * ((beta * hinge(eps)).exp() - 1.0),
        };
    }
    total
}

/// Encode the per-period deviation penalty for one unit; appends the
/// objective contribution to `terms`.
fn encode_penalty(
    m: &mut MilpModel,
    cfg: &PenaltyConfig,
    table: &PenaltyUnitParams,
    var: VarId,
    reference: f64,
    tag: &str,
    terms: &mut LinExpr,
) -> Result<(), SchedulerError> {
    if cfg.mechanism == PenaltyMechanism::M3 && cfg.tangent_cut_count < 2 {
        return Err(SchedulerError::BadSpec(
            "M3 penalty requires at least 2 tangent cuts".into(),
        ));
    }
    let scale = cfg.lambda_p * table.omega;
    if scale == 0.0 {
        return Ok(());
    }
    for (side, sigma, alpha, beta, eps) in [
        ("p", 1.0, table.alpha_plus, table.beta_plus, table.eps_plus),
        ("m", -1.0, table.alpha_minus, table.beta_minus, table.eps_minus),
    ] {
        let eps = match cfg.mechanism {
            PenaltyMechanism::M1 => 0.0,
            _ => eps,
        };
        let h = m.add_var(format!("hinge_{side}_{tag}"), 0.0, f64::INFINITY);
        // h >= sigma*(psi - ref)/psi_max - eps
        m.add_ge(
            format!("hinge_def_{side}_{tag}"),
            LinExpr::new()
                .term(h, 1.0)
                .term(var, -sigma / table.psi_max),
            -sigma * reference / table.psi_max - eps,
        );
        match cfg.mechanism {
            PenaltyMechanism::M1 | PenaltyMechanism::M2 => {
                terms.add_term(h, scale * alpha);
            }
            PenaltyMechanism::M3 => {
                let phi = m.add_var(format!("phi_{side}_{tag}"), 0.0, f64::INFINITY);
                for (ci, g) in tangent_points(eps, cfg.tangent_cut_count).iter().enumerate() {
                    // phi >= f(g) + f'(g)(h - g), f(h) = exp(beta*h) - 1
                    let fg = (beta * g).exp() - 1.0;
                    let slope = beta * (beta * g).exp();
                    m.add_ge(
                        format!("cut{ci}_{side}_{tag}"),
                        LinExpr::new().term(phi, 1.0).term(h, -slope),
                        fg - slope * g,
                    );
                }
                terms.add_term(phi, scale * alpha);
            }
        }
    }
    Ok(())
}

/// Solve a problem spec end to end: build, optimize, decode, replay-audit.
pub fn solve_spec(spec: &ProblemSpec) -> Result<DispatchSolution, SchedulerError> {
    let bundle = build(spec)?;
    let result = bundle.model.solve(spec.plant.solver_gap)?;
    let solution = decode(spec, &bundle, &result.values, result.objective, &result);
    let findings = audit(spec, &solution);
    if !findings.is_empty() {
        return Err(SchedulerError::BadSpec(format!(
            "replay audit failed: {}",
            findings.join("; ")
        )));
    }
    Ok(solution)
}

fn decode(
    spec: &ProblemSpec,
    bundle: &ModelBundle,
    values: &[f64],
    objective: f64,
    result: &crate::milp::SolveResult,
) -> DispatchSolution {
    let cfg = spec.plant;
    let heat = cfg.conversion.heat_per_tonne;
    let v = |id: VarId| values[id.0];
    let mut periods = Vec::with_capacity(bundle.periods.len());
    let mut cost = CostBreakdown::default();
    for (i, pv) in bundle.periods.iter().enumerate() {
        let row = &spec.rows[i];
        let m_eaf = v(pv.m_eaf);
        let m_scrap = v(pv.x[2]) / heat[2];
        let (m_carbon, m_lime, co2_out) = crate::eaf_region::carbon_flows(&cfg.carbon, m_eaf, m_scrap);
        let storage: BTreeMap<StorageId, StorageFlows> = pv
            .storage
            .iter()
            .map(|(&id, &(ch, dis, e, _))| {
                (
                    id,
                    StorageFlows {
                        p_ch: v(ch),
                        p_dis: v(dis),
                        level: v(e),
                    },
                )
            })
            .collect();
        let ht_dis = storage.get(&StorageId::Ht).map_or(0.0, |f| f.p_dis);
        let m_hdri_charge = v(pv.x[0]) / heat[0];
        let p_buy = v(pv.p_buy);
        let p_sell = v(pv.p_sell);
        cost.energy_cost += row.price_buy * p_buy;
        cost.sell_revenue += row.price_sell * p_sell;
        cost.curtail_cost += cfg.prices.rho_curt * v(pv.p_curt);
        cost.byproduct_revenue +=
            cfg.prices.rho_hl * v(pv.hl_sell) + cfg.prices.rho_thl * v(pv.thl_sell);
        cost.op_cost += cfg.op_costs.c_e_ae * v(pv.p_ae)
            + cfg.op_costs.c_e_eaf * v(pv.p_eaf)
            + cfg.op_costs.c_m_sf * v(pv.m_dri_p)
            + cfg.op_costs.c_m_eaf * m_eaf
            + cfg.op_costs.c_m_msr * v(pv.m_metha_p);
        periods.push(PeriodDispatch {
            t: bundle.window_start + i,
            p_buy,
            p_sell,
            p_curt: v(pv.p_curt),
            netload: p_buy - p_sell,
            p_ae: v(pv.p_ae),
            p_eaf: v(pv.p_eaf),
            p_heh: v(pv.p_heh),
            p_leh: v(pv.p_leh),
            p_ccs: cfg.conversion.psi_ccs * co2_out,
            p_comp: cfg.conversion.psi_er_comp * v(pv.p_ae)
                + cfg.conversion.psi_ec_comp * v(pv.m_dri_p),
            p_exp: cfg.conversion.psi_eexp * ht_dis,
            m_qss: v(pv.m_qss),
            m_dri_p: v(pv.m_dri_p),
            m_hot_out: v(pv.m_hot_out),
            m_hdri_charge,
            m_eaf,
            m_scrap,
            m_metha_qss: v(pv.m_metha_qss),
            m_metha_p: v(pv.m_metha_p),
            m_carbon,
            m_lime,
            co2_out,
            hl_sell: v(pv.hl_sell),
            thl_sell: v(pv.thl_sell),
            x: [v(pv.x[0]), v(pv.x[1]), v(pv.x[2])],
            storage,
        });
    }
    cost.peak_cost = cfg.prices.rho_peak * v(bundle.peak);
    cost.penalty_deviation = bundle.penalty_terms.eval(values);
    cost.penalty_tracking = bundle.tracking_terms.eval(values);
    cost.penalty_shortfall = bundle.shortfall_terms.eval(values);
    DispatchSolution {
        mode: bundle.mode,
        periods,
        peak: v(bundle.peak),
        objective,
        cost,
        status_optimal: result.status == SolveStatus::Optimal,
        mip_gap: result.mip_gap,
    }
}

/// Independent constraint replay: re-check the physical constraint stack on
/// a decoded solution without trusting the solver. Returns findings; empty
/// means pass.
pub fn audit(spec: &ProblemSpec, sol: &DispatchSolution) -> Vec<String> {
    let cfg = spec.plant;
    let dt = cfg.horizon.dt_hours;
    let heat = cfg.conversion.heat_per_tonne;
    let conv = &cfg.conversion;
    let mut findings = Vec::new();
    fn note_residual(findings: &mut Vec<String>, t: usize, what: &str, residual: f64, scale: f64) {
        if residual.abs() > AUDIT_TOL * scale.max(1.0) {
            findings.push(format!("t={t}: {what} residual {residual:.3e}"));
        }
    }
    macro_rules! note {
        ($t:expr, $what:expr, $residual:expr, $scale:expr $(,)?) => {
            note_residual(&mut findings, $t, $what, $residual, $scale)
        };
    }

    let mut prev: Option<&PeriodDispatch> = None;
    for d in &sol.periods {
        let row = &spec.rows[d.t - spec.window_start];
        let t = d.t;

        // Power balance.
        let supply = row.wind_mw + row.solar_mw - d.p_curt + d.p_buy + d.p_exp
            + d.storage.get(&StorageId::Bess).map_or(0.0, |f| f.p_dis);
        let demand = d.p_sell
            + d.p_ae
            + d.p_eaf
            + d.p_heh
            + d.p_leh
            + d.p_comp
            + d.p_ccs
            + d.storage.get(&StorageId::Bess).map_or(0.0, |f| f.p_ch);
        note!(t, "power balance", supply - demand, supply.abs().max(demand.abs()));

        // Storage dynamics and exclusivity.
        for s in &cfg.storages {
            let f = &d.storage[&s.storage_id];
            let e_prev = match prev {
                Some(p) => p.storage[&s.storage_id].level,
                None => *spec
                    .init
                    .storage_levels
                    .get(&s.storage_id)
                    .unwrap_or(&s.e_initial),
            };
            let expected = e_prev + (s.eta_ch * f.p_ch - f.p_dis / s.eta_dis) * dt;
            note!(
                t,
                &format!("storage {} dynamics", s.storage_id.label()),
                f.level - expected,
                s.e_max,
            );
            if f.p_ch > AUDIT_TOL * s.p_ch_max.max(1.0)
                && f.p_dis > AUDIT_TOL * s.p_dis_max.max(1.0)
            {
                findings.push(format!(
                    "t={t}: storage {} charges and discharges simultaneously",
                    s.storage_id.label()
                ));
            }
            if f.level < s.e_min - AUDIT_TOL * s.e_max.max(1.0)
                || f.level > s.e_max + AUDIT_TOL * s.e_max.max(1.0)
            {
                findings.push(format!(
                    "t={t}: storage {} level {} outside [{}, {}]",
                    s.storage_id.label(),
                    f.level,
                    s.e_min,
                    s.e_max
                ));
            }
        }

        // Grid exclusivity.
        if d.p_buy > AUDIT_TOL * cfg.grid_capacity_mw && d.p_sell > AUDIT_TOL * cfg.grid_capacity_mw
        {
            findings.push(format!("t={t}: simultaneous grid buy and sell"));
        }

        // DRI routing: split equality and the hot-charge availability bound.
        let silo_ch = d.storage.get(&StorageId::Cdris).map_or(0.0, |f| f.p_ch);
        note!(
            t,
            "dri split",
            d.m_dri_p - d.m_hot_out - silo_ch,
            d.m_dri_p.abs(),
        );
        let pending = match prev {
            Some(p) => p.m_hot_out,
            None => spec.init.pending_hot,
        };
        if d.m_hdri_charge > pending + AUDIT_TOL * pending.max(1.0) {
            findings.push(format!(
                "t={t}: hot charge {} exceeds pending hot DRI {pending}",
                d.m_hdri_charge
            ));
        }

        // Sensible-heat couplings.
        let silo_dis = d.storage.get(&StorageId::Cdris).map_or(0.0, |f| f.p_dis);
        note!(t, "cold heat", d.x[1] - heat[1] * silo_dis, d.x[1].abs());
        let scs_dis = d.storage.get(&StorageId::ScS).map_or(0.0, |f| f.p_dis);
        note!(t, "scrap heat", d.x[2] - heat[2] * scs_dis, d.x[2].abs());

        // EAF region membership at the per-period scale.
        let z = [d.x[0], d.x[1], d.x[2], d.p_eaf];
        for r in 0..2 {
            let lhs: f64 = (0..4).map(|c| cfg.eaf.a_eq[r][c] * z[c]).sum();
            let rhs = if r == 0 { 0.0 } else { d.m_eaf };
            note!(t, &format!("eaf balance {r}"), lhs - rhs, z[0].abs().max(1.0));
        }
        let lambda = d.m_eaf / cfg.eaf.b_eq[1];
        for c in 0..4 {
            let lo = cfg.eaf.z_min[c] * lambda;
            let hi = cfg.eaf.z_max[c] * lambda;
            if z[c] < lo - AUDIT_TOL * hi.max(1.0) || z[c] > hi + AUDIT_TOL * hi.max(1.0) {
                findings.push(format!("t={t}: eaf state {c} = {} outside [{lo}, {hi}]", z[c]));
            }
        }

        // Lag dynamics.
        let alpha_sf = cfg.sf.alpha(dt);
        let sf_prev = prev.map_or(spec.init.sf_qss_prev, |p| p.m_qss);
        note!(
            t,
            "sf lag",
            d.m_dri_p - (alpha_sf * sf_prev + (1.0 - alpha_sf) * d.m_qss),
            d.m_dri_p.abs(),
        );
        let alpha_ms = cfg.msr.alpha(dt);
        let ms_prev = prev.map_or(spec.init.msr_qss_prev, |p| p.m_metha_qss);
        note!(
            t,
            "msr lag",
            d.m_metha_p - (alpha_ms * ms_prev + (1.0 - alpha_ms) * d.m_metha_qss),
            d.m_metha_p.abs(),
        );

        // Hydrogen, CO2 and heat balances.
        let ht = d.storage.get(&StorageId::Ht).map(|f| (f.p_ch, f.p_dis)).unwrap_or((0.0, 0.0));
        let h2 = conv.psi_ae_h2 * d.p_ae + ht.1
            - ht.0
            - conv.psi_h_dri * d.m_dri_p
            - cfg.msr_stoich.psi_h_metha * d.m_metha_p
            - d.hl_sell;
        note!(t, "h2 balance", h2, (conv.psi_ae_h2 * d.p_ae).abs().max(1.0));
        let cst = d.storage.get(&StorageId::Cst).map(|f| (f.p_ch, f.p_dis)).unwrap_or((0.0, 0.0));
        let co2 = d.co2_out + cst.1 - cst.0 - cfg.msr_stoich.psi_c_metha * d.m_metha_p;
        note!(t, "co2 balance", co2, d.co2_out.abs().max(1.0));
        let lts = d.storage.get(&StorageId::Lts).map(|f| (f.p_ch, f.p_dis)).unwrap_or((0.0, 0.0));
        let th = conv.psi_leh_eff * d.p_leh + lts.1 - lts.0 - d.thl_sell;
        note!(t, "heat balance", th, d.thl_sell.abs().max(1.0));

        // Peak dominance.
        if d.p_buy > sol.peak + AUDIT_TOL * cfg.grid_capacity_mw {
            findings.push(format!("t={t}: purchase exceeds the peak variable"));
        }

        prev = Some(d);
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn base_spec(cfg: &PlantConfig, rows: Vec<ScenarioRow>) -> ProblemSpec<'_> {
        let quota = cfg.conversion.psi_sell
            * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
        ProblemSpec {
            mode: Mode::Bd,
            plant: cfg,
            window_start: 0,
            rows,
            init: PlantState::baseline(cfg),
            lock: Some(cfg.base_states),
            penalty_reference: None,
            soc_reference: None,
            offer: None,
            order_mode: OrderMode::ExactTotal,
            sell_quota: quota,
            peak_floor: 0.0,
            terminal_silo: true,
        }
    }

    #[test]
    fn bd_zero_prices_and_costs_solves_to_zero() {
        let mut cfg = fixtures::toy_config(4);
        cfg.op_costs = crate::config::OpCosts {
            c_e_ae: 0.0,
            c_e_eaf: 0.0,
            c_m_sf: 0.0,
            c_m_eaf: 0.0,
            c_m_msr: 0.0,
        };
        cfg.prices.rho_curt = 0.0;
        cfg.prices.rho_peak = 0.0;
        cfg.prices.rho_hl = 0.0;
        cfg.prices.rho_thl = 0.0;
        let mut rows = fixtures::flat_rows(4, 200.0, 0.0);
        for r in &mut rows {
            r.price_buy = 0.0;
            r.price_sell = 0.0;
        }
        let spec = base_spec(&cfg, rows);
        let sol = solve_spec(&spec).unwrap();
        assert!(sol.objective.abs() < 1e-6, "objective {}", sol.objective);
    }

    #[test]
    fn bd_consistent_order_is_feasible_and_locked() {
        let cfg = fixtures::toy_config(4);
        let spec = base_spec(&cfg, fixtures::flat_rows(4, 200.0, 50.0));
        let sol = solve_spec(&spec).unwrap();
        for d in &sol.periods {
            assert!((d.p_ae - cfg.base_states.p_ae).abs() < 1e-6);
            assert!((d.m_qss - cfg.base_states.m_qss).abs() < 1e-6);
            assert!((d.p_eaf - cfg.base_states.p_eaf).abs() < 1e-6);
            assert!((d.m_eaf - cfg.base_states.m_eaf).abs() < 1e-6);
        }
        let total: f64 = sol.periods.iter().map(|d| d.m_eaf).sum();
        assert!((total - cfg.orders.eaf_tonnes).abs() < 1e-6);
    }

    #[test]
    fn bd_excessive_order_is_rejected() {
        let mut cfg = fixtures::toy_config(4);
        cfg.orders.eaf_tonnes = 1e9;
        let spec = base_spec(&cfg, fixtures::flat_rows(4, 200.0, 50.0));
        assert!(matches!(
            build_bd(&spec),
            Err(SchedulerError::InfeasibleOrder { unit: OrderUnit::Eaf, .. })
        ));
    }

    #[test]
    fn single_period_purchase_matches_hand_balance() {
        // No RES, flat price: the plant buys exactly the locked load.
        let cfg = fixtures::toy_config(1);
        let spec = base_spec(&cfg, fixtures::flat_rows(1, 0.0, 50.0));
        let sol = solve_spec(&spec).unwrap();
        let d = &sol.periods[0];
        let expected = d.p_ae + d.p_eaf + d.p_heh + d.p_leh + d.p_comp + d.p_ccs
            + d.storage[&StorageId::Bess].p_ch
            - d.storage[&StorageId::Bess].p_dis
            - d.p_exp
            + d.p_sell;
        assert!((d.p_buy - expected).abs() < 1e-6);
        assert!(d.p_buy > 0.0);
        assert!((sol.peak - d.p_buy).abs() < 1e-6);
    }

    #[test]
    fn dd_at_reference_with_huge_penalty_stays_near_baseline() {
        let mut cfg = fixtures::toy_config(4);
        cfg.penalty.lambda_p = 1e7;
        let rows = fixtures::flat_rows(4, 200.0, 50.0);
        let reference = vec![CoreStates::from_base(&cfg.base_states); 4];
        let quota = cfg.conversion.psi_sell
            * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
        let spec = ProblemSpec {
            mode: Mode::Dd,
            plant: &cfg,
            window_start: 0,
            rows,
            init: PlantState::baseline(&cfg),
            lock: None,
            penalty_reference: Some(reference),
            soc_reference: None,
            offer: None,
            order_mode: OrderMode::ExactTotal,
            sell_quota: quota,
            peak_floor: 0.0,
            terminal_silo: true,
        };
        let sol = solve_spec(&spec).unwrap();
        // M2 deadband absorbs small deviations; beyond it the huge weight
        // pins the units.
        for d in &sol.periods {
            let table = &cfg.penalty.units[&CoreUnit::Ae];
            let dev = (d.p_ae - cfg.base_states.p_ae).abs() / table.psi_max;
            assert!(dev <= table.eps_plus + 1e-4, "AE deviation {dev}");
        }
    }

    #[test]
    fn dd_lambda_sweep_is_pareto_ordered() {
        let cfg0 = fixtures::toy_config(4);
        let rows = fixtures::volatile_rows(4);
        let reference = vec![CoreStates::from_base(&cfg0.base_states); 4];
        let mut last_dp = f64::INFINITY;
        let mut last_ec = f64::NEG_INFINITY;
        for lambda in [0.0, 50.0, 5000.0] {
            let mut cfg = cfg0.clone();
            cfg.penalty.lambda_p = lambda;
            let quota = cfg.conversion.psi_sell
                * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
            let spec = ProblemSpec {
                mode: Mode::Dd,
                plant: &cfg,
                window_start: 0,
                rows: rows.clone(),
                init: PlantState::baseline(&cfg),
                lock: None,
                penalty_reference: Some(reference.clone()),
                soc_reference: None,
                offer: None,
                order_mode: OrderMode::ExactTotal,
                sell_quota: quota,
                peak_floor: 0.0,
                terminal_silo: true,
            };
            let sol = solve_spec(&spec).unwrap();
            let dp = if lambda > 0.0 {
                sol.cost.penalty_deviation / lambda
            } else {
                // recompute the (unweighted) deviation measure directly
                sol.periods
                    .iter()
                    .map(|d| {
                        CoreUnit::ALL
                            .iter()
                            .map(|&u| {
                                let table = &cfg.penalty.units[&u];
                                let psi = match u {
                                    CoreUnit::Ae => d.p_ae,
                                    CoreUnit::Sf => d.m_qss,
                                    CoreUnit::Eaf => d.p_eaf,
                                    CoreUnit::Msr => d.m_metha_qss,
                                };
                                let base = CoreStates::from_base(&cfg.base_states).get(u);
                                table.omega
                                    * penalty_phi_exact(
                                        cfg.penalty.mechanism,
                                        table,
                                        (psi - base) / table.psi_max,
                                    )
                            })
                            .sum::<f64>()
                    })
                    .sum()
            };
            let ec = sol.objective - sol.cost.penalty_deviation;
            assert!(dp <= last_dp + 1e-6, "D_p not nonincreasing: {dp} > {last_dp}");
            assert!(ec >= last_ec - 1e-6, "F_ec not nondecreasing: {ec} < {last_ec}");
            last_dp = dp;
            last_ec = ec;
        }
    }

    #[test]
    fn dd_with_zero_penalty_matches_unlocked_bd() {
        let mut cfg = fixtures::toy_config(4);
        cfg.penalty.lambda_p = 0.0;
        let rows = fixtures::volatile_rows(4);
        let quota = cfg.conversion.psi_sell
            * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
        let reference = vec![CoreStates::from_base(&cfg.base_states); 4];
        let dd = ProblemSpec {
            mode: Mode::Dd,
            plant: &cfg,
            window_start: 0,
            rows: rows.clone(),
            init: PlantState::baseline(&cfg),
            lock: None,
            penalty_reference: Some(reference),
            soc_reference: None,
            offer: None,
            order_mode: OrderMode::ExactTotal,
            sell_quota: quota,
            peak_floor: 0.0,
            terminal_silo: true,
        };
        let dd_sol = solve_spec(&dd).unwrap();
        let locked = base_spec(&cfg, rows);
        let bd_sol = solve_spec(&locked).unwrap();
        // the lock is the only structural difference, so freeing it can
        // only improve the objective
        assert!(dd_sol.objective <= bd_sol.objective + 1e-6);
    }

    #[test]
    fn offers_from_netloads_sign_convention() {
        let o = OfferSeries::from_netloads(&[100.0, 50.0, 80.0], &[80.0, 70.0, 80.0]);
        assert_eq!(o.mag, vec![20.0, 20.0, 0.0]);
        assert_eq!(o.dir, vec![1.0, -1.0, 0.0]);
        assert!(o.is_offered(0) && !o.is_offered(2));
    }

    #[test]
    fn di_exact_delivery_has_zero_shortfall() {
        let cfg = fixtures::toy_config(4);
        let rows = fixtures::flat_rows(4, 200.0, 50.0);
        // Zero-magnitude offers: shortfall machinery must stay inert.
        let quota = cfg.conversion.psi_sell
            * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
        let reference = vec![CoreStates::from_base(&cfg.base_states); 4];
        let mut bounds = BTreeMap::new();
        bounds.insert(OrderUnit::Sf, (cfg.orders.sf_tonnes, cfg.orders.sf_tonnes));
        bounds.insert(OrderUnit::Eaf, (cfg.orders.eaf_tonnes, cfg.orders.eaf_tonnes));
        let spec = ProblemSpec {
            mode: Mode::Di,
            plant: &cfg,
            window_start: 0,
            rows,
            init: PlantState::baseline(&cfg),
            lock: None,
            penalty_reference: Some(reference),
            soc_reference: None,
            offer: Some(OfferWindow {
                mag: vec![0.0; 4],
                dir: vec![0.0; 4],
                netload_bi: vec![0.0; 4],
            }),
            order_mode: OrderMode::WindowBounds(bounds),
            sell_quota: quota,
            peak_floor: 0.0,
            terminal_silo: true,
        };
        let sol = solve_spec(&spec).unwrap();
        assert_eq!(sol.cost.penalty_shortfall, 0.0);
        let steel: f64 = sol.periods.iter().map(|d| d.m_eaf).sum();
        assert!((steel - cfg.orders.eaf_tonnes).abs() < 1e-6);
    }

    #[test]
    fn penalty_m1_is_absolute_value() {
        let table = fixtures::penalty_table(1.0);
        assert!((penalty_phi_exact(PenaltyMechanism::M1, &table, -0.3) - 0.3).abs() < 1e-12);
        assert!((penalty_phi_exact(PenaltyMechanism::M1, &table, 0.3) - 0.3).abs() < 1e-12);
        assert_eq!(penalty_phi_exact(PenaltyMechanism::M1, &table, 0.0), 0.0);
    }

    #[test]
    fn penalty_m3_deadband_is_exact_zero() {
        let table = fixtures::penalty_table(1.0);
        for d in [-0.05, -0.02, 0.0, 0.02, 0.05] {
            assert_eq!(penalty_phi_exact(PenaltyMechanism::M3, &table, d), 0.0);
        }
    }

    #[test]
    fn penalty_m3_hand_value() {
        // beta = 2, eps = 0.05, dpsi = 0.55 -> exp(1) - 1
        let table = fixtures::penalty_table(1.0);
        let v = penalty_phi_exact(PenaltyMechanism::M3, &table, 0.55);
        assert!((v - (1.0f64.exp() - 1.0)).abs() < 1e-12);
        assert!((v - 1.71828).abs() < 1e-5);
    }

    #[test]
    fn m3_epigraph_tracks_exact_value_within_one_percent() {
        // Minimal model: fixed deviation, minimize the epigraph variable.
        let table = fixtures::penalty_table(1.0);
        let pcfg = PenaltyConfig {
            mechanism: PenaltyMechanism::M3,
            lambda_p: 1.0,
            lambda_rf: 0.0,
            lambda_s: 0.0,
            tangent_cut_count: 16,
            units: BTreeMap::new(),
        };
        for k in 0..=100 {
            let dpsi = -1.0 + 0.02 * k as f64;
            let mut m = MilpModel::new();
            let v = m.add_var("psi", -2.0, 2.0);
            m.add_eq("fix", LinExpr::from_var(v), dpsi);
            let mut terms = LinExpr::new();
            encode_penalty(&mut m, &pcfg, &table, v, 0.0, "g", &mut terms).unwrap();
            m.set_objective(terms);
            let r = m.solve(0.0).unwrap();
            let exact = penalty_phi_exact(PenaltyMechanism::M3, &table, dpsi);
            if exact == 0.0 {
                assert!(r.objective.abs() < 1e-9, "deadband not exact at {dpsi}");
            } else {
                let rel = (exact - r.objective) / exact;
                assert!(
                    (-1e-9..=0.01).contains(&rel),
                    "cut error {rel:.4} at dpsi {dpsi}"
                );
            }
        }
    }

    #[test]
    fn m3_with_too_few_cuts_is_rejected() {
        let table = fixtures::penalty_table(1.0);
        let pcfg = PenaltyConfig {
            mechanism: PenaltyMechanism::M3,
            lambda_p: 1.0,
            lambda_rf: 0.0,
            lambda_s: 0.0,
            tangent_cut_count: 1,
            units: BTreeMap::new(),
        };
        let mut m = MilpModel::new();
        let v = m.add_var("psi", -1.0, 1.0);
        let mut terms = LinExpr::new();
        assert!(encode_penalty(&mut m, &pcfg, &table, v, 0.0, "g", &mut terms).is_err());
    }

    #[test]
    fn bi_tracking_term_zero_when_reference_matches() {
        let cfg = fixtures::toy_config(4);
        let rows = fixtures::flat_rows(4, 200.0, 50.0);
        // First solve without tracking to get the natural trajectory.
        let free = base_spec(&cfg, rows.clone());
        let sol = solve_spec(&free).unwrap();
        let mut refs = BTreeMap::new();
        refs.insert(
            StorageId::Bess,
            sol.periods
                .iter()
                .map(|d| d.storage[&StorageId::Bess].level)
                .collect::<Vec<f64>>(),
        );
        let mut tracked = base_spec(&cfg, rows);
        tracked.mode = Mode::Bi;
        tracked.soc_reference = Some(refs);
        let sol2 = solve_spec(&tracked).unwrap();
        assert!(sol2.cost.penalty_tracking.abs() < 1e-5);
    }

    #[test]
    fn audited_bd_solution_is_clean_and_lp_dump_works() {
        let cfg = fixtures::toy_config(4);
        let spec = base_spec(&cfg, fixtures::volatile_rows(4));
        let bundle = build_bd(&spec).unwrap();
        let text = bundle.model.dump_lp();
        assert!(text.contains("power_bal_0"));
        let sol = solve_spec(&spec).unwrap();
        assert!(audit(&spec, &sol).is_empty());
    }
}
