//! Dual-side evaluation metrics: delivered DR capacity, recovery ramping,
//! load-RES matching, regulation intensity, and process-deviation statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CoreUnit, PenaltyConfig, PlantConfig};
use crate::rolling_engine::RunRecord;
use crate::scheduler::{CoreStates, OfferSeries};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no psi_max entry for unit {0:?}")]
    MissingUnit(CoreUnit),
}

/// Per-period delivered capacity, its mean over offered periods, and a
/// degenerate flag when no period carries an offer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveCapacity {
    pub per_period: Vec<f64>,
    pub mean: f64,
    pub no_offers: bool,
}

pub fn effective_capacity(
    offers: &OfferSeries,
    netload_bi: &[f64],
    netload_di: &[f64],
) -> Result<EffectiveCapacity, MetricsError> {
    let n = offers.mag.len();
    if netload_bi.len() != n {
        return Err(MetricsError::LengthMismatch(netload_bi.len(), n));
    }
    if netload_di.len() != n {
        return Err(MetricsError::LengthMismatch(netload_di.len(), n));
    }
    let mut per_period = vec![0.0; n];
    let mut sum = 0.0;
    let mut offered = 0usize;
    for t in 0..n {
        if offers.is_offered(t) {
            let delivered = offers.dir[t] * (netload_bi[t] - netload_di[t]);
            per_period[t] = delivered.max(0.0).min(offers.mag[t]);
            sum += per_period[t];
            offered += 1;
        }
    }
    let no_offers = offered == 0;
    let mean = if no_offers { 0.0 } else { sum / offered as f64 };
    Ok(EffectiveCapacity {
        per_period,
        mean,
        no_offers,
    })
}

/// Maximum one-step increment of the series; the optional mask restricts
/// which increments (indexed by their starting period) are considered.
pub fn recovery_ramp(netload: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for t in 0..netload.len().saturating_sub(1) {
        if mask.map_or(true, |m| m.get(t).copied().unwrap_or(false)) {
            best = best.max(netload[t + 1] - netload[t]);
        }
    }
    if best == f64::NEG_INFINITY {
        0.0
    } else {
        best
    }
}

/// Increment-matching degree between a load series and an RES series.
/// Returns (eta, degenerate); both series constant defines eta = 1.
pub fn matching_degree(load: &[f64], res: &[f64]) -> Result<(f64, bool), MetricsError> {
    if load.len() != res.len() {
        return Err(MetricsError::LengthMismatch(load.len(), res.len()));
    }
    let mut mismatch = 0.0;
    let mut magnitude = 0.0;
    for t in 0..load.len().saturating_sub(1) {
        let dl = load[t + 1] - load[t];
        let dr = res[t + 1] - res[t];
        mismatch += (dl - dr).abs();
        magnitude += dl.abs() + dr.abs();
    }
    if magnitude == 0.0 {
        return Ok((1.0, true));
    }
    // |dl - dr| <= |dl| + |dr| keeps eta in [0, 1]
    Ok((1.0 - mismatch / magnitude, false))
}

/// Capacity-normalized total variation of a unit trajectory.
pub fn nri(series: &[f64], capacity: f64) -> f64 {
    let tv: f64 = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    tv / capacity
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationStats {
    /// Summed normalized absolute deviation over periods and core units.
    pub rate: f64,
    pub max_abs: f64,
    pub distribution: BTreeMap<CoreUnit, Vec<f64>>,
}

pub fn deviation_stats(
    trajectory: &[CoreStates],
    baseline: &[CoreStates],
    penalty: &PenaltyConfig,
) -> Result<DeviationStats, MetricsError> {
    if trajectory.len() != baseline.len() {
        return Err(MetricsError::LengthMismatch(trajectory.len(), baseline.len()));
    }
    let mut rate = 0.0;
    let mut max_abs = 0.0f64;
    let mut distribution: BTreeMap<CoreUnit, Vec<f64>> = BTreeMap::new();
    for unit in CoreUnit::ALL {
        let table = penalty
            .units
            .get(&unit)
            .ok_or(MetricsError::MissingUnit(unit))?;
        let series: Vec<f64> = trajectory
            .iter()
            .zip(baseline)
            .map(|(a, b)| (a.get(unit) - b.get(unit)) / table.psi_max)
            .collect();
        for &d in &series {
            rate += d.abs();
            max_abs = max_abs.max(d.abs());
        }
        distribution.insert(unit, series);
    }
    Ok(DeviationStats {
        rate,
        max_abs,
        distribution,
    })
}

/// Full dual-side evaluation of a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_effective_capacity: f64,
    pub effective_capacity: Vec<f64>,
    pub no_offers: bool,
    pub recovery_ramp: f64,
    pub matching_degree_bi: f64,
    pub matching_degree_di: f64,
    pub nri: BTreeMap<CoreUnit, f64>,
    pub deviation_rate: f64,
    pub max_abs_deviation: f64,
    pub deviation_distribution: BTreeMap<CoreUnit, Vec<f64>>,
    pub bi_global_cost: f64,
    pub di_global_cost: f64,
    pub shortfall_penalty: f64,
    pub deviation_penalty: f64,
    pub backfill_cost: f64,
    pub bi_curtailed_mwh: f64,
    pub di_curtailed_mwh: f64,
}

/// Aggregate electrical load of the internal flexible units, the load side
/// of the matching-degree metric.
pub fn internal_load(d: &crate::scheduler::PeriodDispatch) -> f64 {
    let bess_ch = d
        .storage
        .get(&crate::process_units::StorageId::Bess)
        .map_or(0.0, |f| f.p_ch);
    d.p_eaf + bess_ch + d.p_ae + d.p_comp + d.p_heh + d.p_leh + d.p_ccs
}

impl MetricsReport {
    pub fn from_run(cfg: &PlantConfig, res_truth: &[f64], rec: &RunRecord) -> Result<Self, MetricsError> {
        let bi_netloads = rec.bi.netloads();
        let di_netloads = rec.di.netloads();
        let cap = effective_capacity(&rec.offers, &bi_netloads, &di_netloads)?;
        let bi_load: Vec<f64> = rec.bi.periods.iter().map(internal_load).collect();
        let di_load: Vec<f64> = rec.di.periods.iter().map(internal_load).collect();
        let (eta_bi, _) = matching_degree(&bi_load, res_truth)?;
        let (eta_di, _) = matching_degree(&di_load, res_truth)?;
        let di_core = rec.di.core_states();
        let bi_core = rec.bi.core_states();
        let mut nri_map = BTreeMap::new();
        for unit in CoreUnit::ALL {
            let table = cfg
                .penalty
                .units
                .get(&unit)
                .ok_or(MetricsError::MissingUnit(unit))?;
            let series: Vec<f64> = di_core.iter().map(|c| c.get(unit)).collect();
            nri_map.insert(unit, nri(&series, table.psi_max));
        }
        let dev = deviation_stats(&di_core, &bi_core, &cfg.penalty)?;
        let dt = cfg.horizon.dt_hours;
        Ok(MetricsReport {
            avg_effective_capacity: cap.mean,
            effective_capacity: cap.per_period,
            no_offers: cap.no_offers,
            recovery_ramp: recovery_ramp(&di_netloads, None),
            matching_degree_bi: eta_bi,
            matching_degree_di: eta_di,
            nri: nri_map,
            deviation_rate: dev.rate,
            max_abs_deviation: dev.max_abs,
            deviation_distribution: dev.distribution,
            bi_global_cost: rec.bi_global_cost,
            di_global_cost: rec.di_global_cost,
            shortfall_penalty: rec.shortfall_penalty,
            deviation_penalty: rec.deviation_penalty,
            backfill_cost: rec.backfill_cost,
            bi_curtailed_mwh: rec.bi.periods.iter().map(|d| d.p_curt * dt).sum(),
            di_curtailed_mwh: rec.di.periods.iter().map(|d| d.p_curt * dt).sum(),
        })
    }
}
