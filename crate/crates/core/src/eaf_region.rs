//! Convex feasible operating region of the electric arc furnace.
//!
//! The region is a polytope in H-representation over the state
//! `z = [x1, x2, x3, p_eaf]`: sensible heats of hot DRI, cold DRI and scrap
//! plus the electric energy per heat. Two equality rows (energy balance and
//! metallic mass balance) and box bounds define the set. Auxiliary carbon
//! balances account for carbon powder, lime and the resulting CO2.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Equality-residual tolerance after row normalization.
pub const MEMBERSHIP_TOL: f64 = 1e-6;
/// Slack allowed on box bounds.
pub const BOUND_TOL: f64 = 1e-9;

/// Charge material, in state-vector column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MaterialId {
    Hdri,
    Cdri,
    Scrap,
}

impl MaterialId {
    pub fn index(self) -> usize {
        match self {
            MaterialId::Hdri => 0,
            MaterialId::Cdri => 1,
            MaterialId::Scrap => 2,
        }
    }
}

/// Sensible-heat specification of a charge material.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EafMaterialSpec {
    pub material_id: MaterialId,
    /// c_p, energy per mass per kelvin.
    pub specific_heat: f64,
    /// Charging minus reference temperature, kelvin.
    pub delta_temperature: f64,
}

impl EafMaterialSpec {
    /// Sensible heat carried by mass `m`: c_p * m * dT.
    pub fn sensible_heat(&self, mass: f64) -> f64 {
        self.specific_heat * mass * self.delta_temperature
    }
}

/// EAF operating state: three sensible heats plus electric energy per heat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EafState {
    pub x: [f64; 3],
    pub p_eaf: f64,
}

impl EafState {
    pub fn as_vec(&self) -> [f64; 4] {
        [self.x[0], self.x[1], self.x[2], self.p_eaf]
    }
}

/// H-representation of the feasible region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EafPolytope {
    /// Row 0: energy balance (psi_MT coefficients, -1 on p_eaf).
    /// Row 1: metallic mass balance (psi_MI coefficients, 0 on p_eaf).
    pub a_eq: [[f64; 4]; 2],
    /// [0, target steel output per heat].
    pub b_eq: [f64; 2],
    pub z_min: [f64; 4],
    pub z_max: [f64; 4],
}

#[derive(Debug, Error, PartialEq)]
pub enum EafRegionError {
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("metallic coefficient for material column {0} is zero")]
    SingularCoefficient(usize),
    #[error("single-material solution violates box bounds on component {component}: {value} not in [{lo}, {hi}]")]
    InfeasibleBounds {
        component: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("feasible region is empty for steel target {0}")]
    EmptyRegion(f64),
}

/// Membership verdict with the raw residuals behind it.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub is_member: bool,
    /// Normalized equality residuals, one per balance row.
    pub equality_residuals: [f64; 2],
    /// Worst signed box slack (negative means violated).
    pub min_bound_slack: f64,
}

impl EafPolytope {
    /// Validate structural invariants.
    pub fn validate(&self) -> Result<(), EafRegionError> {
        if self.a_eq[0][3] != -1.0 {
            return Err(EafRegionError::InvalidPolytope(
                "energy-balance row must carry -1 on the p_eaf column".into(),
            ));
        }
        if self.a_eq[1][3] != 0.0 {
            return Err(EafRegionError::InvalidPolytope(
                "mass-balance row must carry 0 on the p_eaf column".into(),
            ));
        }
        for i in 0..3 {
            if self.a_eq[0][i] <= 0.0 || self.a_eq[1][i] <= 0.0 {
                return Err(EafRegionError::InvalidPolytope(format!(
                    "material coefficients must be positive (column {i})"
                )));
            }
        }
        for i in 0..4 {
            if self.z_min[i] > self.z_max[i] {
                return Err(EafRegionError::InvalidPolytope(format!(
                    "z_min exceeds z_max on component {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EafRegionError> {
        let p: EafPolytope = serde_json::from_str(text)
            .map_err(|e| EafRegionError::InvalidPolytope(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Polytope with the same matrix but right-hand side scaled to
    /// `steel_target` tonnes (bounds scale along, by homogeneity).
    fn scaled(&self, steel_target: f64) -> EafPolytope {
        let lambda = steel_target / self.b_eq[1];
        EafPolytope {
            a_eq: self.a_eq,
            b_eq: [0.0, steel_target],
            z_min: self.z_min.map(|v| v * lambda),
            z_max: self.z_max.map(|v| v * lambda),
        }
    }

    /// Unique state charging only `material`, producing `steel_target` tonnes.
    pub fn solve_single_material(
        &self,
        material: MaterialId,
        steel_target: f64,
    ) -> Result<EafState, EafRegionError> {
        let col = material.index();
        let psi_mi = self.a_eq[1][col];
        if psi_mi == 0.0 {
            return Err(EafRegionError::SingularCoefficient(col));
        }
        let x_m = steel_target / psi_mi;
        let p_eaf = self.a_eq[0][col] * x_m;
        let mut x = [0.0; 3];
        x[col] = x_m;
        let state = EafState { x, p_eaf };
        let scaled = self.scaled(steel_target);
        let z = state.as_vec();
        for i in 0..4 {
            if z[i] < scaled.z_min[i] - BOUND_TOL || z[i] > scaled.z_max[i] + BOUND_TOL {
                return Err(EafRegionError::InfeasibleBounds {
                    component: i,
                    value: z[i],
                    lo: scaled.z_min[i],
                    hi: scaled.z_max[i],
                });
            }
        }
        Ok(state)
    }

    /// Check membership of `z` against the equalities (normalized residuals)
    /// and box bounds. Total function: always returns the residuals.
    pub fn membership(&self, state: &EafState) -> MembershipReport {
        let z = state.as_vec();
        let mut residuals = [0.0f64; 2];
        for r in 0..2 {
            let lhs: f64 = (0..4).map(|c| self.a_eq[r][c] * z[c]).sum();
            let scale = self.a_eq[r]
                .iter()
                .fold(0.0f64, |m, &c| m.max(c.abs()))
                .max(1e-30);
            residuals[r] = (lhs - self.b_eq[r]).abs() / scale;
        }
        let mut min_slack = f64::INFINITY;
        for i in 0..4 {
            min_slack = min_slack.min(z[i] - self.z_min[i]);
            min_slack = min_slack.min(self.z_max[i] - z[i]);
        }
        MembershipReport {
            is_member: residuals[0] <= MEMBERSHIP_TOL
                && residuals[1] <= MEMBERSHIP_TOL
                && min_slack >= -BOUND_TOL,
            equality_residuals: residuals,
            min_bound_slack: min_slack,
        }
    }

    /// Extreme electric energies over the region for `steel_target`, with
    /// witness states. Brute-force vertex enumeration of the 2-dof affine
    /// slice: fix two components at a bound, solve the remaining 2x2 system.
    pub fn min_max_power(
        &self,
        steel_target: f64,
    ) -> Result<(f64, f64, EafState, EafState), EafRegionError> {
        if steel_target == 0.0 {
            let z = EafState {
                x: [0.0; 3],
                p_eaf: 0.0,
            };
            return Ok((0.0, 0.0, z, z));
        }
        let region = self.scaled(steel_target);
        let mut best_min: Option<(f64, EafState)> = None;
        let mut best_max: Option<(f64, EafState)> = None;
        let mut consider = |state: EafState| {
            if !region.membership(&state).is_member {
                return;
            }
            let p = state.p_eaf;
            if best_min.as_ref().map_or(true, |(v, _)| p < *v) {
                best_min = Some((p, state));
            }
            if best_max.as_ref().map_or(true, |(v, _)| p > *v) {
                best_max = Some((p, state));
            }
        };
        // All pairs of fixed components, each at lower or upper bound.
        for i in 0..4 {
            for j in (i + 1)..4 {
                let free: Vec<usize> = (0..4).filter(|&k| k != i && k != j).collect();
                for bits in 0..4u8 {
                    let zi = if bits & 1 == 0 {
                        region.z_min[i]
                    } else {
                        region.z_max[i]
                    };
                    let zj = if bits & 2 == 0 {
                        region.z_min[j]
                    } else {
                        region.z_max[j]
                    };
                    // Solve 2x2 for the free components.
                    let a = [
                        [region.a_eq[0][free[0]], region.a_eq[0][free[1]]],
                        [region.a_eq[1][free[0]], region.a_eq[1][free[1]]],
                    ];
                    let rhs = [
                        region.b_eq[0] - region.a_eq[0][i] * zi - region.a_eq[0][j] * zj,
                        region.b_eq[1] - region.a_eq[1][i] * zi - region.a_eq[1][j] * zj,
                    ];
                    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                    if det.abs() < 1e-14 {
                        continue;
                    }
                    let f0 = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det;
                    let f1 = (a[0][0] * rhs[1] - rhs[0] * a[1][0]) / det;
                    let mut z = [0.0f64; 4];
                    z[i] = zi;
                    z[j] = zj;
                    z[free[0]] = f0;
                    z[free[1]] = f1;
                    consider(EafState {
                        x: [z[0], z[1], z[2]],
                        p_eaf: z[3],
                    });
                }
            }
        }
        match (best_min, best_max) {
            (Some((pmin, zmin)), Some((pmax, zmax))) => Ok((pmin, pmax, zmin, zmax)),
            _ => Err(EafRegionError::EmptyRegion(steel_target)),
        }
    }
}

/// CO2-accounting coefficients at the material-flow level.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CarbonBalanceCoefficients {
    /// CO2 mass per carbon-powder mass.
    pub psi_c_carbon: f64,
    /// CO2 mass per lime mass.
    pub psi_c_lime: f64,
    /// CO2 mass per scrap mass.
    pub psi_c_scrap: f64,
    /// Carbon-powder mass per steel mass.
    pub psi_carbon_per_steel: f64,
    /// Lime mass per steel mass.
    pub psi_lime_per_steel: f64,
}

/// Carbon powder, lime and CO2 masses for a given steel output and scrap
/// charge. Linear in both inputs.
pub fn carbon_flows(
    coeffs: &CarbonBalanceCoefficients,
    steel_out: f64,
    scrap_in: f64,
) -> (f64, f64, f64) {
    let carbon_powder = coeffs.psi_carbon_per_steel * steel_out;
    let lime = coeffs.psi_lime_per_steel * steel_out;
    let co2 = coeffs.psi_c_carbon * carbon_powder
        + coeffs.psi_c_lime * lime
        + coeffs.psi_c_scrap * scrap_in;
    (carbon_powder, lime, co2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Calibrated matrix with bounds wide enough for single-material charges.
    pub(crate) fn calibrated() -> EafPolytope {
        EafPolytope {
            a_eq: [
                [3.24e-4, 3.11e-3, 2.35e-3, -1.0],
                [9.79e-4, 5.50e-3, 5.26e-3, 0.0],
            ],
            b_eq: [0.0, 1.0],
            z_min: [0.0, 0.0, 0.0, 0.0],
            z_max: [1100.0, 200.0, 200.0, 0.7],
        }
    }

    #[test]
    fn cdri_only_reproduces_calibration_point() {
        let p = calibrated();
        let s = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap();
        // 3.11e-3 / 5.50e-3 MWh/t = 565.45 kWh/t, reported as 566
        assert!((s.p_eaf * 1000.0 - 565.45).abs() < 0.01);
        assert!(p.membership(&s).is_member);
    }

    #[test]
    fn scrap_only_hand_solved() {
        let p = calibrated();
        let s = p.solve_single_material(MaterialId::Scrap, 1.0).unwrap();
        assert!((s.p_eaf - 2.35e-3 / 5.26e-3).abs() < 1e-9);
    }

    #[test]
    fn boundary_point_is_accepted() {
        // z_max on the CDRI component exactly at the single-material solution
        let mut p = calibrated();
        p.z_max[1] = 1.0 / 5.50e-3;
        let s = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap();
        assert!(p.membership(&s).is_member);
    }

    #[test]
    fn bound_violation_is_an_error() {
        let mut p = calibrated();
        p.z_max[1] = 100.0; // below the CDRI-only requirement of ~181.8
        let err = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap_err();
        assert!(matches!(err, EafRegionError::InfeasibleBounds { component: 1, .. }));
    }

    #[test]
    fn perturbed_power_fails_membership() {
        let p = calibrated();
        let mut s = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap();
        s.p_eaf += 0.01;
        let rep = p.membership(&s);
        assert!(!rep.is_member);
        assert!((rep.equality_residuals[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn convex_combinations_stay_inside() {
        let p = calibrated();
        let a = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap();
        let b = p.solve_single_material(MaterialId::Scrap, 1.0).unwrap();
        for k in 0..=100 {
            let theta = k as f64 / 100.0;
            let mix = EafState {
                x: [
                    theta * a.x[0] + (1.0 - theta) * b.x[0],
                    theta * a.x[1] + (1.0 - theta) * b.x[1],
                    theta * a.x[2] + (1.0 - theta) * b.x[2],
                ],
                p_eaf: theta * a.p_eaf + (1.0 - theta) * b.p_eaf,
            };
            assert!(p.membership(&mix).is_member, "theta={theta}");
        }
    }

    #[test]
    fn degenerate_bounds_pin_min_max() {
        let mut p = calibrated();
        // only CDRI admissible
        p.z_max[0] = 0.0;
        p.z_max[2] = 0.0;
        let (pmin, pmax, wmin, wmax) = p.min_max_power(1.0).unwrap();
        assert!((pmin - 0.56545).abs() < 1e-4);
        assert!((pmax - pmin).abs() < 1e-9);
        assert!(p.scaled_membership_check(&wmin, 1.0));
        assert!(p.scaled_membership_check(&wmax, 1.0));
    }

    impl EafPolytope {
        fn scaled_membership_check(&self, s: &EafState, target: f64) -> bool {
            self.scaled(target).membership(s).is_member
        }
    }

    #[test]
    fn generous_bounds_extremes_at_expected_vertices() {
        let p = calibrated();
        let (pmin, pmax, wmin, wmax) = p.min_max_power(1.0).unwrap();
        // brute-force cross-check: sample the two free dofs on a fine grid
        let mut grid_min = f64::INFINITY;
        let mut grid_max = f64::NEG_INFINITY;
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let x1 = p.z_max[0] * i as f64 / n as f64;
                let x2 = p.z_max[1] * j as f64 / n as f64;
                // mass balance fixes x3
                let x3 = (1.0 - 9.79e-4 * x1 - 5.50e-3 * x2) / 5.26e-3;
                if !(0.0..=p.z_max[2]).contains(&x3) {
                    continue;
                }
                let pe = 3.24e-4 * x1 + 3.11e-3 * x2 + 2.35e-3 * x3;
                if !(p.z_min[3]..=p.z_max[3]).contains(&pe) {
                    continue;
                }
                grid_min = grid_min.min(pe);
                grid_max = grid_max.max(pe);
            }
        }
        assert!((pmin - grid_min).abs() < 2e-3, "pmin={pmin} grid={grid_min}");
        assert!((pmax - grid_max).abs() < 2e-3, "pmax={pmax} grid={grid_max}");
        assert!(pmin <= pmax);
        // HDRI-rich charges minimize electricity; CDRI-rich maximize it.
        assert!(wmin.x[0] > wmax.x[0]);
        assert!(wmax.x[1] > wmin.x[1]);
    }

    #[test]
    fn zero_target_is_the_origin() {
        let p = calibrated();
        let (pmin, pmax, w, _) = p.min_max_power(0.0).unwrap();
        assert_eq!((pmin, pmax), (0.0, 0.0));
        assert_eq!(w.as_vec(), [0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn homogeneity_of_single_material_solutions() {
        let p = calibrated();
        for lambda in [0.5, 2.0] {
            let base = p.solve_single_material(MaterialId::Cdri, 1.0).unwrap();
            let scaled = p.solve_single_material(MaterialId::Cdri, lambda).unwrap();
            assert!((scaled.x[1] - lambda * base.x[1]).abs() < 1e-9);
            assert!((scaled.p_eaf - lambda * base.p_eaf).abs() < 1e-9);
        }
    }

    #[test]
    fn carbon_flows_hand_arithmetic() {
        let c = CarbonBalanceCoefficients {
            psi_c_carbon: 3.67,
            psi_c_lime: 0.44,
            psi_c_scrap: 0.005,
            psi_carbon_per_steel: 0.01,
            psi_lime_per_steel: 0.05,
        };
        let (carbon, lime, co2) = carbon_flows(&c, 100.0, 20.0);
        assert!((carbon - 1.0).abs() < 1e-12);
        assert!((lime - 5.0).abs() < 1e-12);
        assert!((co2 - 5.97).abs() < 1e-12);

        // linearity: doubling inputs doubles every output
        let (c2, l2, e2) = carbon_flows(&c, 200.0, 40.0);
        assert!((c2 - 2.0 * carbon).abs() < 1e-12);
        assert!((l2 - 2.0 * lime).abs() < 1e-12);
        assert!((e2 - 2.0 * co2).abs() < 1e-12);

        let zero = CarbonBalanceCoefficients {
            psi_c_carbon: 0.0,
            psi_c_lime: 0.0,
            psi_c_scrap: 0.0,
            psi_carbon_per_steel: 0.0,
            psi_lime_per_steel: 0.0,
        };
        assert_eq!(carbon_flows(&zero, 10.0, 5.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sensible_heat_is_linear_in_mass() {
        let spec = EafMaterialSpec {
            material_id: MaterialId::Hdri,
            specific_heat: 0.8,
            delta_temperature: 600.0,
        };
        assert!((spec.sensible_heat(2.0) - 2.0 * spec.sensible_heat(1.0)).abs() < 1e-12);
        assert!(spec.sensible_heat(3.5) >= 0.0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = calibrated();
        let text = serde_json::to_string(&p).unwrap();
        let back = EafPolytope::from_json(&text).unwrap();
        assert_eq!(back.a_eq, p.a_eq);

        let bad = r#"{"a_eq":[[1.0,1.0,1.0,0.5],[1.0,1.0,1.0,0.0]],
                      "b_eq":[0.0,1.0],"z_min":[0,0,0,0],"z_max":[1,1,1,1]}"#;
        assert!(EafPolytope::from_json(bad).is_err());
    }
}
