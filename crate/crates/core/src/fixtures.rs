//! Canned plant configurations and scenarios for tests, benchmarks, and the
//! bundled data generator. The synthetic plant is sized so the baseline
//! states are mass- and energy-consistent; the toy plant shrinks everything
//! to two storages for fast solver round trips.

use std::collections::BTreeMap;

use crate::config::{
    BaseStates, ConversionCoefficients, CoreUnit, ExogenousScenario, HistoryLibrary,
    HistoryScenario, Horizon, OpCosts, Orders, PenaltyConfig, PenaltyMechanism, PenaltyUnitParams,
    PlantConfig, Prices, ScenarioRow,
};
use crate::eaf_region::{CarbonBalanceCoefficients, EafPolytope};
use crate::process_units::{
    HehCoefficients, LagUnitId, LagUnitParams, MsrStoichiometry, StorageId, StorageParams,
};
use crate::scheduler::{Mode, OrderMode, PlantState, ProblemSpec};

/// Calibrated EAF balance matrix shared by all fixtures, per tonne of steel.
pub fn calibrated_polytope(steel_ref: f64) -> EafPolytope {
    let l = steel_ref;
    EafPolytope {
        a_eq: [
            [3.24e-4, 3.11e-3, 2.35e-3, -1.0],
            [9.79e-4, 5.50e-3, 5.26e-3, 0.0],
        ],
        b_eq: [0.0, steel_ref],
        z_min: [0.0, 0.0, 0.0, 0.0],
        z_max: [1100.0 * l, 200.0 * l, 200.0 * l, 0.7 * l],
    }
}

/// Sensible heat per tonne for HDRI, CDRI, scrap in state units.
pub const HEAT_PER_TONNE: [f64; 3] = [1000.0, 168.2, 179.3];

pub fn penalty_table(psi_max: f64) -> PenaltyUnitParams {
    PenaltyUnitParams {
        omega: 1.0,
        alpha_plus: 1.0,
        alpha_minus: 1.0,
        beta_plus: 2.0,
        beta_minus: 2.0,
        eps_plus: 0.05,
        eps_minus: 0.05,
        psi_max,
    }
}

fn lag(unit_id: LagUnitId, max_discharge: f64, ramp: f64) -> LagUnitParams {
    LagUnitParams {
        unit_id,
        transition_time_constant: 1.0,
        qss_min_frac: 0.0,
        qss_max_frac: 1.0,
        ramp_up_frac: ramp,
        ramp_down_frac: -ramp,
        max_discharge,
    }
}

fn storage(
    id: StorageId,
    e_max: f64,
    rate_ch: f64,
    rate_dis: f64,
    eta: f64,
    init: f64,
) -> StorageParams {
    StorageParams {
        storage_id: id,
        e_min: 0.0,
        e_max,
        p_ch_max: rate_ch,
        p_dis_max: rate_dis,
        eta_ch: eta,
        eta_dis: eta,
        e_initial: init,
    }
}

/// Small two-storage plant (BESS + hydrogen tank) for fast solves. The EAF
/// runs on hot-charged DRI only; carbon coefficients are zero so the
/// methanol loop is inert.
pub fn toy_config(t_periods: usize) -> PlantConfig {
    let t = t_periods as f64;
    // 10 t/h DRI, all hot-charged: steel = psi_MI,HDRI * heat1 * mass
    let m_qss = 10.0;
    let m_eaf = 9.79e-4 * HEAT_PER_TONNE[0] * m_qss;
    let p_eaf = 3.24e-4 * HEAT_PER_TONNE[0] * m_qss;
    let p_ae = 0.054 * m_qss / 0.018;
    let mut units = BTreeMap::new();
    units.insert(CoreUnit::Ae, penalty_table(60.0));
    units.insert(CoreUnit::Sf, penalty_table(20.0));
    units.insert(CoreUnit::Eaf, penalty_table(10.0));
    units.insert(CoreUnit::Msr, penalty_table(1.0));
    PlantConfig {
        horizon: Horizon {
            t_periods,
            dt_hours: 1.0,
            lookahead: t_periods.min(4),
        },
        eaf: calibrated_polytope(1.0),
        carbon: CarbonBalanceCoefficients {
            psi_c_carbon: 0.0,
            psi_c_lime: 0.0,
            psi_c_scrap: 0.0,
            psi_carbon_per_steel: 0.0,
            psi_lime_per_steel: 0.0,
        },
        sf: lag(LagUnitId::Sf, 20.0, 0.5),
        msr: lag(LagUnitId::Msr, 1.0, 1.0),
        heh: HehCoefficients {
            psi_tth: 0.8,
            psi_th_re: 0.5,
            psi_eh: 1.0,
            psi_ftg: 0.2,
            psi_whb: 0.4,
        },
        msr_stoich: MsrStoichiometry {
            psi_h_metha: 0.192,
            psi_c_metha: 1.46,
        },
        conversion: ConversionCoefficients {
            psi_ae_h2: 0.018,
            psi_h_dri: 0.054,
            psi_er_comp: 0.03,
            psi_ec_comp: 0.1,
            psi_eexp: 0.5,
            psi_ccs: 0.2,
            psi_leh_eff: 0.95,
            psi_sell: 0.5,
            heat_per_tonne: HEAT_PER_TONNE,
        },
        storages: vec![
            storage(StorageId::Bess, 40.0, 20.0, 20.0, 0.95, 20.0),
            storage(StorageId::Ht, 5.0, 2.0, 2.0, 1.0, 2.5),
        ],
        prices: Prices {
            rho_curt: 5.0,
            rho_peak: 20.0,
            rho_h2_bf: 2500.0,
            rho_thl: 15.0,
            rho_hl: 1500.0,
        },
        op_costs: OpCosts {
            c_e_ae: 2.0,
            c_e_eaf: 3.0,
            c_m_sf: 1.0,
            c_m_eaf: 2.0,
            c_m_msr: 1.0,
        },
        orders: Orders {
            sf_tonnes: m_qss * t,
            eaf_tonnes: m_eaf * t,
        },
        base_states: BaseStates {
            p_ae,
            m_qss,
            p_eaf,
            m_eaf,
            m_metha_qss: 0.0,
        },
        penalty: PenaltyConfig {
            mechanism: PenaltyMechanism::M2,
            lambda_p: 50.0,
            lambda_rf: 5.0,
            lambda_s: 100.0,
            tangent_cut_count: 16,
            units,
        },
        grid_capacity_mw: 150.0,
        p_ae_max: 60.0,
        m_eaf_max: 2.0 * m_eaf,
        solver_gap: 1e-6,
    }
}

/// Flat exogenous rows: constant wind, no solar, fixed price pair.
pub fn flat_rows(t_periods: usize, wind_mw: f64, price_buy: f64) -> Vec<ScenarioRow> {
    (0..t_periods)
        .map(|t| ScenarioRow {
            t: t + 1,
            wind_mw,
            solar_mw: 0.0,
            price_buy,
            price_sell: 0.8 * price_buy,
            h2_demand_t: 0.5,
            heat_demand_mwh: 5.0,
        })
        .collect()
}

/// Alternating cheap-windy and expensive-calm periods, built to provoke
/// storage cycling and DR deviations.
pub fn volatile_rows(t_periods: usize) -> Vec<ScenarioRow> {
    (0..t_periods)
        .map(|t| {
            let windy = t % 2 == 0;
            ScenarioRow {
                t: t + 1,
                wind_mw: if windy { 120.0 } else { 0.0 },
                solar_mw: 0.0,
                price_buy: if windy { 10.0 } else { 90.0 },
                price_sell: if windy { 8.0 } else { 72.0 },
                h2_demand_t: 0.5,
                heat_demand_mwh: 5.0,
            }
        })
        .collect()
}

/// Full six-storage synthetic plant over 24 hourly periods. Baseline states
/// are derived from the reference mix: 100 t/h DRI all hot-charged plus
/// scrap melting to a 125 t/h steel rate.
pub fn synthetic_config() -> PlantConfig {
    let t_periods = 24usize;
    let t = t_periods as f64;
    let m_qss = 100.0;
    let m_eaf = 125.0;
    // Reference mix: hot DRI heat fixed by the routing chain, scrap closes
    // the mass balance, CDRI idle at baseline.
    let x1 = HEAT_PER_TONNE[0] * m_qss;
    let steel_hot = 9.79e-4 * x1;
    let x3 = (m_eaf - steel_hot) / 5.26e-3;
    let p_eaf = 3.24e-4 * x1 + 2.35e-3 * x3;
    let m_scrap = x3 / HEAT_PER_TONNE[2];
    let carbon = CarbonBalanceCoefficients {
        psi_c_carbon: 3.67,
        psi_c_lime: 0.44,
        psi_c_scrap: 0.005,
        psi_carbon_per_steel: 0.012,
        psi_lime_per_steel: 0.05,
    };
    let co2_base = (carbon.psi_c_carbon * carbon.psi_carbon_per_steel
        + carbon.psi_c_lime * carbon.psi_lime_per_steel)
        * m_eaf
        + carbon.psi_c_scrap * m_scrap;
    let m_metha_qss = co2_base / 1.46;
    let p_ae = (0.054 * m_qss + 0.192 * m_metha_qss) / 0.018;
    let mut units = BTreeMap::new();
    units.insert(CoreUnit::Ae, penalty_table(500.0));
    units.insert(CoreUnit::Sf, penalty_table(200.0));
    units.insert(CoreUnit::Eaf, penalty_table(100.0));
    units.insert(CoreUnit::Msr, penalty_table(12.0));
    PlantConfig {
        horizon: Horizon {
            t_periods,
            dt_hours: 1.0,
            lookahead: 8,
        },
        eaf: calibrated_polytope(125.0),
        carbon,
        // SF dynamics fast enough that a full-rate window is reachable from
        // any state; keeps the weak pacing benchmark recursively feasible.
        sf: LagUnitParams {
            transition_time_constant: 0.5,
            ..lag(LagUnitId::Sf, 200.0, 0.5)
        },
        msr: lag(LagUnitId::Msr, 12.0, 0.5),
        heh: HehCoefficients {
            psi_tth: 0.5,
            psi_th_re: 0.5,
            psi_eh: 0.95,
            psi_ftg: 0.15,
            psi_whb: 0.25,
        },
        msr_stoich: MsrStoichiometry {
            psi_h_metha: 0.192,
            psi_c_metha: 1.46,
        },
        conversion: ConversionCoefficients {
            psi_ae_h2: 0.018,
            psi_h_dri: 0.054,
            psi_er_comp: 0.02,
            psi_ec_comp: 0.05,
            psi_eexp: 0.4,
            psi_ccs: 0.25,
            psi_leh_eff: 0.95,
            psi_sell: 0.5,
            heat_per_tonne: HEAT_PER_TONNE,
        },
        storages: vec![
            storage(StorageId::Bess, 200.0, 100.0, 100.0, 0.95, 100.0),
            storage(StorageId::Lts, 200.0, 50.0, 50.0, 0.95, 50.0),
            storage(StorageId::Ht, 20.0, 10.0, 10.0, 1.0, 10.0),
            storage(StorageId::Cdris, 400.0, 100.0, 100.0, 1.0, 200.0),
            StorageParams {
                storage_id: StorageId::ScS,
                e_min: 0.0,
                e_max: 2000.0,
                p_ch_max: 0.0,
                p_dis_max: 60.0,
                eta_ch: 1.0,
                eta_dis: 1.0,
                e_initial: 1500.0,
            },
            // CO2 buffer sized to absorb scrap-heavy catch-up windows that
            // outrun the methanol reactor's absorption rate
            storage(StorageId::Cst, 300.0, 60.0, 60.0, 1.0, 50.0),
        ],
        prices: Prices {
            rho_curt: 8.0,
            rho_peak: 50.0,
            rho_h2_bf: 2500.0,
            rho_thl: 20.0,
            rho_hl: 1800.0,
        },
        op_costs: OpCosts {
            c_e_ae: 1.5,
            c_e_eaf: 2.5,
            c_m_sf: 2.0,
            c_m_eaf: 3.0,
            c_m_msr: 1.0,
        },
        orders: Orders {
            sf_tonnes: m_qss * t,
            eaf_tonnes: m_eaf * t,
        },
        base_states: BaseStates {
            p_ae,
            m_qss,
            p_eaf,
            m_eaf,
            m_metha_qss,
        },
        penalty: PenaltyConfig {
            mechanism: PenaltyMechanism::M2,
            lambda_p: 50.0,
            lambda_rf: 10.0,
            lambda_s: 10.0,
            tangent_cut_count: 16,
            units,
        },
        grid_capacity_mw: 600.0,
        p_ae_max: 500.0,
        m_eaf_max: 250.0,
        solver_gap: 1e-4,
    }
}

/// 24-hour exogenous profile: midday solar peak, moderate wind, evening
/// price peak. Values are synthetic.
pub fn synthetic_scenario() -> ExogenousScenario {
    let wind = [
        150.0, 145.0, 140.0, 130.0, 120.0, 110.0, 105.0, 100.0, 100.0, 105.0, 110.0, 115.0,
        120.0, 130.0, 140.0, 135.0, 120.0, 100.0, 80.0, 70.0, 75.0, 90.0, 110.0, 130.0,
    ];
    let solar = [
        0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 60.0, 140.0, 220.0, 280.0, 320.0, 340.0, 345.0, 330.0,
        290.0, 230.0, 160.0, 80.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ];
    let price = [
        40.0, 38.0, 36.0, 35.0, 35.0, 42.0, 50.0, 55.0, 48.0, 38.0, 30.0, 26.0, 24.0, 25.0,
        28.0, 36.0, 55.0, 85.0, 110.0, 115.0, 95.0, 70.0, 52.0, 44.0,
    ];
    let rows = (0..24)
        .map(|t| ScenarioRow {
            t: t + 1,
            wind_mw: wind[t],
            solar_mw: solar[t],
            price_buy: price[t],
            price_sell: 0.85 * price[t],
            h2_demand_t: 1.0,
            heat_demand_mwh: if (6..20).contains(&t) { 25.0 } else { 35.0 },
        })
        .collect();
    ExogenousScenario { rows }
}

/// Deterministic perturbation of the synthetic truth used as a historical
/// scenario. Variant 0 is the truth itself.
pub fn synthetic_history_features(variant: usize) -> ExogenousScenario {
    let base = synthetic_scenario();
    if variant == 0 {
        return base;
    }
    let k = variant as f64;
    let rows = base
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let wobble = 1.0 + 0.08 * k * ((i as f64 * 0.7 + k).sin());
            ScenarioRow {
                t: r.t,
                wind_mw: (r.wind_mw * wobble).max(0.0),
                solar_mw: (r.solar_mw * (2.0 - wobble)).max(0.0),
                price_buy: r.price_buy * (1.0 + 0.05 * k * ((i as f64 * 0.9).cos())),
                price_sell: r.price_sell * (1.0 + 0.05 * k * ((i as f64 * 0.9).cos())),
                h2_demand_t: r.h2_demand_t,
                heat_demand_mwh: r.heat_demand_mwh,
            }
        })
        .collect();
    ExogenousScenario { rows }
}

/// A full-horizon baseline day-ahead spec over the given rows.
pub fn bd_spec(cfg: &PlantConfig, rows: Vec<ScenarioRow>) -> ProblemSpec<'_> {
    let quota = cfg.conversion.psi_sell * rows.iter().map(|r| r.wind_mw + r.solar_mw).sum::<f64>();
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

/// Historical scenario with features derived from `rows` and flat storage
/// trajectories pinned at each configured storage's initial level.
pub fn history_scenario(rows: &[ScenarioRow], variant: usize) -> HistoryScenario {
    let features = std::array::from_fn(|q| {
        rows.iter()
            .map(|r| r.feature(q) * (1.0 + 0.01 * variant as f64))
            .collect()
    });
    HistoryScenario {
        features,
        soc: BTreeMap::new(),
    }
}

/// Minimal history library: perturbed feature copies of `rows` with flat
/// SoC references at initial levels.
pub fn flat_history_library(
    cfg: &PlantConfig,
    rows: &[ScenarioRow],
    variants: usize,
) -> HistoryLibrary {
    let scenarios = (0..variants)
        .map(|v| {
            let mut s = history_scenario(rows, v);
            s.soc = cfg
                .storages
                .iter()
                .map(|p| (p.storage_id, vec![p.e_initial; rows.len()]))
                .collect();
            s
        })
        .collect();
    HistoryLibrary {
        scenarios,
        bandwidths: [60.0, 60.0, 30.0, 30.0, 1.0, 10.0],
    }
}
