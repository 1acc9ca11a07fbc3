//! Day-ahead to intra-day orchestration: forecast simulation, kernel SoC
//! references, rolling MPC solves with first-step commitment, pacing state,
//! and realized-cost assembly.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{HistoryLibrary, OrderUnit, PlantConfig, ScenarioRow};
use crate::config::{CoreUnit, ExogenousScenario};
use crate::scheduler::{
    self, CoreStates, CostBreakdown, DispatchSolution, Mode, OfferSeries, OfferWindow, OrderMode,
    PeriodDispatch, PlantState, ProblemSpec, SchedulerError,
};
use crate::process_units::StorageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacingMode {
    Arm,
    Fcfb,
}

impl PacingMode {
    pub fn label(self) -> &'static str {
        match self {
            PacingMode::Arm => "arm",
            PacingMode::Fcfb => "fcfb",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForecastModel {
    pub da_error_frac: f64,
    pub id_error_frac: f64,
    pub lookahead: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum RollingError {
    #[error("window k={k}: {source}")]
    Window {
        k: usize,
        #[source]
        source: SchedulerError,
    },
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("residual order {residual} for {unit:?} exceeds remaining capacity {capacity} at k={k}")]
    CapacityViolation {
        unit: OrderUnit,
        residual: f64,
        capacity: f64,
        k: usize,
    },
    #[error("realized production {realized} for {unit:?} misses the order {order}")]
    OrderShortfall {
        unit: OrderUnit,
        realized: f64,
        order: f64,
    },
    #[error("inconsistent inputs: {0}")]
    BadInput(String),
}

/// Realized bookkeeping across a rolling run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingLedger {
    pub k: usize,
    pub sell_cum: f64,
    pub res_cum: f64,
    pub peak: f64,
    pub residual: BTreeMap<OrderUnit, f64>,
}

impl RollingLedger {
    pub fn new(cfg: &PlantConfig) -> Self {
        let residual = OrderUnit::ALL.iter().map(|&u| (u, cfg.order(u))).collect();
        RollingLedger {
            k: 1,
            sell_cum: 0.0,
            res_cum: 0.0,
            peak: 0.0,
            residual,
        }
    }

    fn commit(&mut self, cfg: &PlantConfig, truth: &ScenarioRow, d: &PeriodDispatch) {
        let _ = cfg;
        self.sell_cum += d.p_sell;
        self.res_cum += truth.wind_mw + truth.solar_mw;
        self.peak = self.peak.max(d.p_buy);
        *self.residual.get_mut(&OrderUnit::Sf).unwrap() -= d.m_dri_p;
        *self.residual.get_mut(&OrderUnit::Eaf).unwrap() -= d.m_eaf;
        for r in self.residual.values_mut() {
            // guard against accumulated float dust
            if *r < 0.0 && *r > -1e-6 {
                *r = 0.0;
            }
        }
        self.k += 1;
    }
}

/// Multiplicative uniform forecast noise, seeded and floored at zero.
pub fn simulate_forecast(truth: &[ScenarioRow], error_frac: f64, seed: u64) -> Vec<ScenarioRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truth
        .iter()
        .map(|row| {
            let mut out = *row;
            for q in 0..crate::config::FEATURE_COUNT {
                let e: f64 = if error_frac > 0.0 {
                    rng.gen_range(-error_frac..=error_frac)
                } else {
                    0.0
                };
                out = out.map_feature(q, |v| (v * (1.0 + e)).max(0.0));
            }
            out
        })
        .collect()
}

/// Composite kernel weights over the library given an observed feature
/// prefix. Returns (weights, degenerate); degenerate means every kernel
/// underflowed (or the prefix was empty) and uniform weights were used.
pub fn kernel_weights(lib: &HistoryLibrary, observed: &[ScenarioRow]) -> (Vec<f64>, bool) {
    let s_count = lib.scenarios.len();
    let uniform = vec![1.0 / s_count as f64; s_count];
    let t1 = observed.len();
    if t1 == 0 {
        return (uniform, true);
    }
    let mut raw = Vec::with_capacity(s_count);
    for s in &lib.scenarios {
        let mut log_k = 0.0;
        for (q, sigma) in lib.bandwidths.iter().enumerate() {
            let mut dist2 = 0.0;
            for (i, row) in observed.iter().enumerate() {
                let g = row.feature(q);
                let gs = s.features[q].get(i).copied().unwrap_or(g);
                dist2 += (g - gs) * (g - gs);
            }
            log_k -= dist2 / (2.0 * sigma * sigma * t1 as f64);
        }
        raw.push(log_k.exp());
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return (uniform, true);
    }
    (raw.iter().map(|k| k / total).collect(), false)
}

/// Blend the library's perfect-information storage levels at period `t`
/// with precomputed scenario weights.
pub fn blend_soc(lib: &HistoryLibrary, weights: &[f64], t: usize) -> BTreeMap<StorageId, f64> {
    let mut out: BTreeMap<StorageId, f64> = BTreeMap::new();
    for (s, w) in lib.scenarios.iter().zip(weights) {
        for (&id, series) in &s.soc {
            if let Some(&v) = series.get(t) {
                *out.entry(id).or_insert(0.0) += w * v;
            }
        }
    }
    out
}

/// Kernel-weighted SoC reference at period `t` from the observed prefix.
pub fn soc_reference(
    lib: &HistoryLibrary,
    observed: &[ScenarioRow],
    t: usize,
) -> (BTreeMap<StorageId, f64>, bool) {
    let (w, degenerate) = kernel_weights(lib, observed);
    (blend_soc(lib, &w, t), degenerate)
}

/// Window production bounds for one ordered unit.
pub fn pacing_bounds(
    mode: PacingMode,
    residual: f64,
    window_len: usize,
    t_total: usize,
    k: usize,
    max_step_output: f64,
) -> Result<(f64, f64), RollingError> {
    let remaining = (t_total - k + 1) as f64;
    let r = residual.max(0.0);
    if r > remaining * max_step_output + 1e-9 {
        return Err(RollingError::CapacityViolation {
            unit: OrderUnit::Sf,
            residual: r,
            capacity: remaining * max_step_output,
            k,
        });
    }
    let l = window_len as f64;
    let lower = match mode {
        PacingMode::Arm => (l / remaining) * r,
        PacingMode::Fcfb => (r - (remaining - l) * max_step_output).max(0.0),
    };
    Ok((lower, r))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowMeta {
    pub k: usize,
    pub mode: Mode,
    pub objective: f64,
    pub optimal: bool,
    pub mip_gap: f64,
}

/// Committed per-period results of a rolling run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizedRun {
    pub periods: Vec<PeriodDispatch>,
    pub peak: f64,
    pub economics: CostBreakdown,
    pub windows: Vec<WindowMeta>,
}

impl RealizedRun {
    pub fn netloads(&self) -> Vec<f64> {
        self.periods.iter().map(|d| d.netload).collect()
    }

    pub fn core_states(&self) -> Vec<CoreStates> {
        self.periods
            .iter()
            .map(|d| CoreStates {
                p_ae: d.p_ae,
                m_qss: d.m_qss,
                p_eaf: d.p_eaf,
                m_metha_qss: d.m_metha_qss,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub bd: DispatchSolution,
    pub dd: DispatchSolution,
    pub offers: OfferSeries,
    pub bi: RealizedRun,
    pub di: RealizedRun,
    /// Realized offer shortfall penalty lambda_s * D_s.
    pub shortfall_penalty: f64,
    /// Realized process-deviation penalty lambda_p * D_p against BI.
    pub deviation_penalty: f64,
    /// Terminal hydrogen backfilling cost (signed).
    pub backfill_cost: f64,
    pub bi_global_cost: f64,
    pub di_global_cost: f64,
    pub kernel_degenerate_rolls: Vec<usize>,
}

/// Realized economics of a committed trajectory under the truth series.
pub fn realized_economics(
    cfg: &PlantConfig,
    truth: &[ScenarioRow],
    periods: &[PeriodDispatch],
    peak: f64,
) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for (row, d) in truth.iter().zip(periods) {
        c.energy_cost += row.price_buy * d.p_buy;
        c.sell_revenue += row.price_sell * d.p_sell;
        c.curtail_cost += cfg.prices.rho_curt * d.p_curt;
        c.byproduct_revenue += cfg.prices.rho_hl * d.hl_sell + cfg.prices.rho_thl * d.thl_sell;
        c.op_cost += cfg.op_costs.c_e_ae * d.p_ae
            + cfg.op_costs.c_e_eaf * d.p_eaf
            + cfg.op_costs.c_m_sf * d.m_dri_p
            + cfg.op_costs.c_m_eaf * d.m_eaf
            + cfg.op_costs.c_m_msr * d.m_metha_p;
    }
    c.peak_cost = cfg.prices.rho_peak * peak;
    c
}

fn state_after(cfg: &PlantConfig, d: &PeriodDispatch) -> PlantState {
    PlantState {
        storage_levels: cfg
            .storages
            .iter()
            .map(|s| (s.storage_id, d.storage[&s.storage_id].level))
            .collect(),
        sf_qss_prev: d.m_qss,
        msr_qss_prev: d.m_metha_qss,
        pending_hot: d.m_hot_out,
    }
}

fn window_seed(base: u64, k: usize, tag: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((k as u64) << 8)
        .wrapping_add(tag)
}

struct RollingPass<'a> {
    mode: Mode,
    reference: Option<&'a RealizedRun>,
    offers: Option<&'a OfferSeries>,
    pacing: Option<PacingMode>,
}

/// Shared feasibility checks before any stage runs.
pub fn check_run_inputs(cfg: &PlantConfig, truth: &ExogenousScenario) -> Result<(), RollingError> {
    let t_total = cfg.horizon.t_periods;
    if truth.len() != t_total {
        return Err(RollingError::BadInput(format!(
            "truth has {} periods, config horizon is {t_total}",
            truth.len()
        )));
    }
    for unit in OrderUnit::ALL {
        let capacity = t_total as f64 * cfg.max_step_output(unit);
        if cfg.order(unit) > capacity + 1e-9 {
            return Err(RollingError::CapacityViolation {
                unit,
                residual: cfg.order(unit),
                capacity,
                k: 1,
            });
        }
    }
    Ok(())
}

/// The day-ahead forecast draw shared by BD and DD.
pub fn day_ahead_rows(truth: &ExogenousScenario, forecast: &ForecastModel) -> Vec<ScenarioRow> {
    simulate_forecast(
        &truth.rows,
        forecast.da_error_frac,
        window_seed(forecast.seed, 0, 1),
    )
}

fn day_ahead_quota(cfg: &PlantConfig, rows: &[ScenarioRow]) -> f64 {
    cfg.conversion.psi_sell * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>()
}

/// Baseline day-ahead solve on a forecast series.
pub fn solve_bd(cfg: &PlantConfig, da_rows: &[ScenarioRow]) -> Result<DispatchSolution, RollingError> {
    let bd_spec = ProblemSpec {
        mode: Mode::Bd,
        plant: cfg,
        window_start: 0,
        rows: da_rows.to_vec(),
        init: PlantState::baseline(cfg),
        lock: Some(cfg.base_states),
        penalty_reference: None,
        soc_reference: None,
        offer: None,
        order_mode: OrderMode::ExactTotal,
        sell_quota: day_ahead_quota(cfg, da_rows),
        peak_floor: 0.0,
        terminal_silo: true,
    };
    scheduler::solve_spec(&bd_spec).map_err(|e| RollingError::Window { k: 0, source: e })
}

/// DR day-ahead solve against the BD reference, plus the resulting offers.
pub fn solve_dd(
    cfg: &PlantConfig,
    da_rows: &[ScenarioRow],
    bd: &DispatchSolution,
) -> Result<(DispatchSolution, OfferSeries), RollingError> {
    let bd_reference: Vec<CoreStates> = bd
        .periods
        .iter()
        .map(|d| CoreStates {
            p_ae: d.p_ae,
            m_qss: d.m_qss,
            p_eaf: d.p_eaf,
            m_metha_qss: d.m_metha_qss,
        })
        .collect();
    let dd_spec = ProblemSpec {
        mode: Mode::Dd,
        plant: cfg,
        window_start: 0,
        rows: da_rows.to_vec(),
        init: PlantState::baseline(cfg),
        lock: None,
        penalty_reference: Some(bd_reference),
        soc_reference: None,
        offer: None,
        order_mode: OrderMode::ExactTotal,
        sell_quota: day_ahead_quota(cfg, da_rows),
        peak_floor: 0.0,
        terminal_silo: true,
    };
    let dd = scheduler::solve_spec(&dd_spec).map_err(|e| RollingError::Window { k: 0, source: e })?;
    let bd_netloads: Vec<f64> = bd.periods.iter().map(|d| d.netload).collect();
    let dd_netloads: Vec<f64> = dd.periods.iter().map(|d| d.netload).collect();
    let offers = OfferSeries::from_netloads(&bd_netloads, &dd_netloads);
    Ok((dd, offers))
}

/// Baseline intra-day rolling run under realized truth.
pub fn run_bi(
    cfg: &PlantConfig,
    truth: &ExogenousScenario,
    library: &HistoryLibrary,
    forecast: &ForecastModel,
    degenerate_rolls: &mut Vec<usize>,
) -> Result<RealizedRun, RollingError> {
    rolling_pass(
        cfg,
        truth,
        library,
        forecast,
        RollingPass {
            mode: Mode::Bi,
            reference: None,
            offers: None,
            pacing: None,
        },
        degenerate_rolls,
    )
}

/// Execute the full BD, BI, DD, DI pipeline on one truth scenario.
pub fn run_pipeline(
    cfg: &PlantConfig,
    truth: &ExogenousScenario,
    library: &HistoryLibrary,
    forecast: &ForecastModel,
    pacing: PacingMode,
) -> Result<RunRecord, RollingError> {
    let t_total = cfg.horizon.t_periods;
    check_run_inputs(cfg, truth)?;

    // Pass 1: BD on the day-ahead forecast.
    let da_rows = day_ahead_rows(truth, forecast);
    let bd = solve_bd(cfg, &da_rows)?;

    // Pass 2: BI rolling under realized truth.
    let mut degenerate_rolls = Vec::new();
    let bi = run_bi(cfg, truth, library, forecast, &mut degenerate_rolls)?;

    // Pass 3: DD against the BD reference on the same day-ahead forecast.
    let (dd, offers) = solve_dd(cfg, &da_rows, &bd)?;

    // Pass 4: DI rolling against the BI benchmark.
    let di = rolling_pass(
        cfg,
        truth,
        library,
        forecast,
        RollingPass {
            mode: Mode::Di,
            reference: Some(&bi),
            offers: Some(&offers),
            pacing: Some(pacing),
        },
        &mut degenerate_rolls,
    )?;

    // Order completion audit on both realized runs.
    for (run, name) in [(&bi, "bi"), (&di, "di")] {
        let _ = name;
        for unit in OrderUnit::ALL {
            let realized: f64 = run
                .periods
                .iter()
                .map(|d| match unit {
                    OrderUnit::Sf => d.m_dri_p,
                    OrderUnit::Eaf => d.m_eaf,
                })
                .sum();
            let order = cfg.order(unit);
            if (realized - order).abs() > 1e-6 * order.max(1.0) {
                return Err(RollingError::OrderShortfall {
                    unit,
                    realized,
                    order,
                });
            }
        }
    }

    // Pass 5: realized global costs.
    let bi_econ = realized_economics(cfg, &truth.rows, &bi.periods, bi.peak);
    let di_econ = realized_economics(cfg, &truth.rows, &di.periods, di.peak);
    let bi_netloads = bi.netloads();
    let di_netloads = di.netloads();
    let mut shortfall = 0.0;
    for t in 0..t_total {
        if offers.is_offered(t) {
            let delivered = offers.dir[t] * (bi_netloads[t] - di_netloads[t]);
            shortfall += (offers.mag[t] - delivered).max(0.0);
        }
    }
    let shortfall_penalty = cfg.penalty.lambda_s * shortfall;
    let bi_core = bi.core_states();
    let mut deviation_penalty = 0.0;
    for (t, d) in di.periods.iter().enumerate() {
        for unit in CoreUnit::ALL {
            let Some(table) = cfg.penalty.units.get(&unit) else {
                continue;
            };
            let psi = match unit {
                CoreUnit::Ae => d.p_ae,
                CoreUnit::Sf => d.m_qss,
                CoreUnit::Eaf => d.p_eaf,
                CoreUnit::Msr => d.m_metha_qss,
            };
            let dpsi = (psi - bi_core[t].get(unit)) / table.psi_max;
            deviation_penalty += cfg.penalty.lambda_p
                * table.omega
                * scheduler::penalty_phi_exact(cfg.penalty.mechanism, table, dpsi);
        }
    }
    let ht_level = |run: &RealizedRun| {
        run.periods
            .last()
            .and_then(|d| d.storage.get(&StorageId::Ht))
            .map_or(0.0, |f| f.level)
    };
    let backfill_cost = cfg.prices.rho_h2_bf * (ht_level(&bi) - ht_level(&di));
    let bi_global_cost = bi_econ.total();
    let di_global_cost = di_econ.total() + shortfall_penalty + deviation_penalty + backfill_cost;

    let mut bi = bi;
    let mut di = di;
    bi.economics = bi_econ;
    di.economics = di_econ;
    Ok(RunRecord {
        bd,
        dd,
        offers,
        bi,
        di,
        shortfall_penalty,
        deviation_penalty,
        backfill_cost,
        bi_global_cost,
        di_global_cost,
        kernel_degenerate_rolls: degenerate_rolls,
    })
}

fn rolling_pass(
    cfg: &PlantConfig,
    truth: &ExogenousScenario,
    library: &HistoryLibrary,
    forecast: &ForecastModel,
    pass: RollingPass,
    degenerate_rolls: &mut Vec<usize>,
) -> Result<RealizedRun, RollingError> {
    let t_total = cfg.horizon.t_periods;
    let mut state = PlantState::baseline(cfg);
    let mut ledger = RollingLedger::new(cfg);
    let mut committed: Vec<PeriodDispatch> = Vec::with_capacity(t_total);
    let mut windows = Vec::with_capacity(t_total);
    let seed_tag = match pass.mode {
        Mode::Bi => 2,
        Mode::Di => 3,
        _ => 9,
    };

    for k in 1..=t_total {
        let l = forecast.lookahead.min(t_total - k + 1).max(1);
        // Current step is observed; the tail is forecast.
        let mut rows = vec![truth.rows[k - 1]];
        rows.extend(simulate_forecast(
            &truth.rows[k..k + l - 1],
            forecast.id_error_frac,
            window_seed(forecast.seed, k, seed_tag),
        ));

        // Kernel SoC references from the realized exogenous prefix.
        let (weights, degenerate) = kernel_weights(library, &truth.rows[..k - 1]);
        if degenerate && k > 1 {
            degenerate_rolls.push(k);
        }
        let mut soc_refs: BTreeMap<StorageId, Vec<f64>> = BTreeMap::new();
        for i in 0..l {
            for (id, v) in blend_soc(library, &weights, k - 1 + i) {
                soc_refs.entry(id).or_default().push(v);
            }
        }
        soc_refs.retain(|_, v| v.len() == l);

        let window_res: f64 = rows.iter().map(|r| r.wind_mw + r.solar_mw).sum();
        let sell_quota =
            (cfg.conversion.psi_sell * (ledger.res_cum + window_res) - ledger.sell_cum).max(0.0);

        let (lock, penalty_reference, offer, order_mode) = match pass.mode {
            Mode::Bi => (Some(cfg.base_states), None, None, OrderMode::None),
            Mode::Di => {
                let reference = pass.reference.expect("DI needs the BI benchmark");
                let refs: Vec<CoreStates> = reference.core_states()[k - 1..k - 1 + l].to_vec();
                let offers = pass.offers.expect("DI needs offers");
                let netload_bi: Vec<f64> = reference.netloads()[k - 1..k - 1 + l].to_vec();
                let ow = OfferWindow {
                    mag: offers.mag[k - 1..k - 1 + l].to_vec(),
                    dir: offers.dir[k - 1..k - 1 + l].to_vec(),
                    netload_bi,
                };
                let mut bounds = BTreeMap::new();
                for unit in OrderUnit::ALL {
                    let b = pacing_bounds(
                        pass.pacing.expect("DI needs a pacing mode"),
                        ledger.residual[&unit],
                        l,
                        t_total,
                        k,
                        cfg.max_step_output(unit),
                    )
                    .map_err(|e| match e {
                        RollingError::CapacityViolation { residual, capacity, .. } => {
                            RollingError::CapacityViolation {
                                unit,
                                residual,
                                capacity,
                                k,
                            }
                        }
                        other => other,
                    })?;
                    bounds.insert(unit, b);
                }
                (None, Some(refs), Some(ow), OrderMode::WindowBounds(bounds))
            }
            _ => unreachable!("rolling passes are BI or DI"),
        };

        let spec = ProblemSpec {
            mode: pass.mode,
            plant: cfg,
            window_start: k - 1,
            rows,
            init: state.clone(),
            lock,
            penalty_reference,
            soc_reference: Some(soc_refs),
            offer,
            order_mode,
            sell_quota,
            peak_floor: ledger.peak,
            terminal_silo: k + l - 1 == t_total,
        };
        let sol = scheduler::solve_spec(&spec).map_err(|e| RollingError::Window { k, source: e })?;
        let first = sol.periods[0].clone();
        windows.push(WindowMeta {
            k,
            mode: pass.mode,
            objective: sol.objective,
            optimal: sol.status_optimal,
            mip_gap: sol.mip_gap,
        });
        state = state_after(cfg, &first);
        ledger.commit(cfg, &truth.rows[k - 1], &first);
        committed.push(first);
    }

    let peak = ledger.peak;
    let economics = realized_economics(cfg, &truth.rows, &committed, peak);
    Ok(RealizedRun {
        periods: committed,
        peak,
        economics,
        windows,
    })
}
