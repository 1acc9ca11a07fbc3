//! Solver-agnostic mixed-integer linear program representation.
//!
//! Models are assembled as plain coefficient lists and handed to the HiGHS
//! backend for solving. The representation is also serializable to the
//! standard LP text format for external cross-checking.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::num::NonZeroU32;

use thiserror::Error;

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone)]
pub struct VarDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

/// Linear expression: sum of (variable, coefficient) terms plus a constant.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: VarId, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) {
        self.terms.push((var, coef));
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) {
        for &(v, c) in &other.terms {
            self.terms.push((v, c * scale));
        }
        self.constant += other.constant * scale;
    }

    pub fn from_var(var: VarId) -> Self {
        LinExpr::new().term(var, 1.0)
    }

    /// Evaluate against a solution vector.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(v, c)| c * values[v.0])
            .sum::<f64>()
            + self.constant
    }

    /// Collapse duplicate variable entries.
    fn compacted(&self) -> Vec<(VarId, f64)> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for &(v, c) in &self.terms {
            *acc.entry(v.0).or_insert(0.0) += c;
        }
        let mut out: Vec<(VarId, f64)> = acc
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .map(|(v, c)| (VarId(v), c))
            .collect();
        out.sort_by_key(|&(v, _)| v.0);
        out
    }
}

#[derive(Debug, Clone)]
pub struct RowDef {
    pub name: String,
    pub expr: LinExpr,
    /// Bounds on the expression value, inclusive. Equality rows have
    /// `lower == upper`.
    pub lower: f64,
    pub upper: f64,
}

/// A minimization MILP.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub vars: Vec<VarDef>,
    pub rows: Vec<RowDef>,
    pub objective: LinExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    FeasibleGap,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub mip_gap: f64,
}

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("model is infeasible")]
    Infeasible,
    #[error("model is unbounded")]
    Unbounded,
    #[error("solver failed with status {0}")]
    Backend(String),
    #[error(
        "decoded objective {recomputed} disagrees with solver objective {reported} \
         beyond 1e-6 relative"
    )]
    DecodeMismatch { recomputed: f64, reported: f64 },
    #[error("constraint {0} references undeclared variable {1}")]
    UndeclaredVariable(String, usize),
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            lower,
            upper,
            binary: false,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            binary: true,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        lower: f64,
        upper: f64,
    ) {
        self.rows.push(RowDef {
            name: name.into(),
            expr,
            lower,
            upper,
        });
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_row(name, expr, rhs, rhs);
    }

    pub fn add_le(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_row(name, expr, f64::NEG_INFINITY, rhs);
    }

    pub fn add_ge(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.add_row(name, expr, rhs, f64::INFINITY);
    }

    pub fn set_objective(&mut self, obj: LinExpr) {
        self.objective = obj;
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.binary).count()
    }

    fn validate(&self) -> Result<(), MilpError> {
        let n = self.vars.len();
        for row in &self.rows {
            for &(v, _) in &row.expr.terms {
                if v.0 >= n {
                    return Err(MilpError::UndeclaredVariable(row.name.clone(), v.0));
                }
            }
        }
        for &(v, _) in &self.objective.terms {
            if v.0 >= n {
                return Err(MilpError::UndeclaredVariable("objective".into(), v.0));
            }
        }
        Ok(())
    }

    /// Solve with HiGHS. Single-threaded and seeded for reproducibility.
    pub fn solve(&self, rel_gap: f64) -> Result<SolveResult, MilpError> {
        self.validate()?;
        let mut pb = highs::RowProblem::default();
        let mut obj_coefs = vec![0.0f64; self.vars.len()];
        for &(v, c) in &self.objective.terms {
            obj_coefs[v.0] += c;
        }
        let mut cols = Vec::with_capacity(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            cols.push(pb.add_column_with_integrality(
                obj_coefs[i],
                v.lower..=v.upper,
                v.binary,
            ));
        }
        for row in &self.rows {
            let coefs: Vec<(highs::Col, f64)> = row
                .expr
                .compacted()
                .into_iter()
                .map(|(v, c)| (cols[v.0], c))
                .collect();
            // Constant folded into the row bounds.
            let lo = row.lower - row.expr.constant;
            let hi = row.upper - row.expr.constant;
            pb.add_row(lo..=hi, coefs);
        }
        let mut model = pb.optimise(highs::Sense::Minimise);
        model.make_quiet();
        model.set_threads(NonZeroU32::new(1).unwrap());
        model.set_option("mip_rel_gap", rel_gap);
        model.set_option("random_seed", 0);
        let solved = model.try_solve().map_err(|s| MilpError::Backend(format!("{s:?}")))?;
        use highs::HighsModelStatus as S;
        let status = match solved.status() {
            S::Optimal => SolveStatus::Optimal,
            S::Infeasible => return Err(MilpError::Infeasible),
            S::Unbounded | S::UnboundedOrInfeasible => return Err(MilpError::Unbounded),
            other => return Err(MilpError::Backend(format!("{other:?}"))),
        };
        let values = solved.get_solution().columns().to_vec();
        let reported = solved.objective_value() + self.objective.constant;
        let recomputed = self.objective.eval(&values);
        let scale = reported.abs().max(recomputed.abs()).max(1.0);
        if (recomputed - reported).abs() > 1e-6 * scale {
            return Err(MilpError::DecodeMismatch {
                recomputed,
                reported,
            });
        }
        let mip_gap = if self.num_binaries() > 0 {
            solved.mip_gap()
        } else {
            0.0
        };
        Ok(SolveResult {
            status: if mip_gap.abs() > rel_gap {
                SolveStatus::FeasibleGap
            } else {
                status
            },
            objective: recomputed,
            values,
            mip_gap,
        })
    }

    /// Render in CPLEX LP text format. Range rows are split into `_lo`/`_hi`
    /// inequality pairs since the format has no native range syntax.
    pub fn dump_lp(&self) -> String {
        let mut out = String::new();
        let name = |v: &VarId| sanitize(&self.vars[v.0].name, v.0);
        out.push_str("Minimize\n obj:");
        for (v, c) in self.objective.compacted() {
            let _ = write!(out, " {} {}", signed(c), name(&v));
        }
        if self.objective.constant != 0.0 {
            let _ = write!(out, " {}", signed_const(self.objective.constant));
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let rname = sanitize(&row.name, i);
            let terms = row.expr.compacted();
            let body = |out: &mut String| {
                for &(v, c) in &terms {
                    let _ = write!(out, " {} {}", signed(c), name(&v));
                }
            };
            let lo = row.lower - row.expr.constant;
            let hi = row.upper - row.expr.constant;
            if (lo - hi).abs() < f64::EPSILON || lo == hi {
                let _ = write!(out, " c{i}_{rname}:");
                body(&mut out);
                let _ = writeln!(out, " = {lo}");
            } else {
                if lo.is_finite() {
                    let _ = write!(out, " c{i}_{rname}_lo:");
                    body(&mut out);
                    let _ = writeln!(out, " >= {lo}");
                }
                if hi.is_finite() {
                    let _ = write!(out, " c{i}_{rname}_hi:");
                    body(&mut out);
                    let _ = writeln!(out, " <= {hi}");
                }
            }
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.binary {
                continue;
            }
            let n = sanitize(&v.name, i);
            let lo = if v.lower.is_finite() {
                format!("{}", v.lower)
            } else {
                "-inf".into()
            };
            if v.upper.is_finite() {
                let _ = writeln!(out, " {} <= {} <= {}", lo, n, v.upper);
            } else {
                let _ = writeln!(out, " {} <= {}", lo, n);
            }
        }
        let binaries: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary)
            .map(|(i, v)| sanitize(&v.name, i))
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for b in binaries {
                let _ = writeln!(out, " {b}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(name: &str, idx: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        format!("v{idx}")
    } else {
        cleaned
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", -c)
    } else {
        format!("+ {c}")
    }
}

fn signed_const(c: f64) -> String {
    signed(c)
}
