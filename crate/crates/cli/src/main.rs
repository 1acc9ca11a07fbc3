//! Command-line runner: loads plant/scenario/history inputs, executes the
//! requested scheduling stages, and emits deterministic report artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use drsteel_core::config::{ConfigError, ExogenousScenario, HistoryLibrary, PlantConfig};
use drsteel_core::config::{OrderUnit, PenaltyMechanism};
use drsteel_core::metrics::MetricsReport;
use drsteel_core::rolling_engine::{
    self, ForecastModel, PacingMode, RealizedRun, RollingError, RunRecord,
};
use drsteel_core::scheduler::{CostBreakdown, DispatchSolution, OfferSeries, PeriodDispatch};

#[derive(Parser)]
#[command(name = "drsteel", version, about = "Plant scheduling and DR simulation runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute scheduling stages and write report artifacts.
    Run(RunArgs),
    /// Check config, scenario, and history consistency without solving.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunMode {
    Bd,
    Bi,
    Dd,
    Di,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    M1,
    M2,
    M3,
}

#[derive(Clone, Copy, ValueEnum)]
enum PacingArg {
    Arm,
    Fcfb,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// History library directory; required for modes bi, di, and full.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    mode: RunMode,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    #[arg(long, value_enum, default_value = "arm")]
    pacing: PacingArg,
    #[arg(long = "lambda-p")]
    lambda_p: Option<f64>,
    #[arg(long = "lambda-s")]
    lambda_s: Option<f64>,
    #[arg(long = "lambda-rf")]
    lambda_rf: Option<f64>,
    #[arg(long)]
    cuts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "da-error", default_value_t = 0.10)]
    da_error: f64,
    #[arg(long = "id-error", default_value_t = 0.05)]
    id_error: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
}

// Exit codes: 2 invalid inputs, 3 io/missing files, 4 solver failures,
// 5 internal errors.
enum AppError {
    Input(String),
    Io(String),
    Solver(String),
    Internal(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Input(_) => 2,
            AppError::Io(_) => 3,
            AppError::Solver(_) => 4,
            AppError::Internal(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AppError::Input(_) => "invalid_input",
            AppError::Io(_) => "io",
            AppError::Solver(_) => "solver",
            AppError::Internal(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Input(m) | AppError::Io(m) | AppError::Solver(m) | AppError::Internal(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => AppError::Io(e.to_string()),
            _ => AppError::Input(e.to_string()),
        }
    }
}

impl From<RollingError> for AppError {
    fn from(e: RollingError) -> Self {
        match e {
            RollingError::BadInput(_) | RollingError::CapacityViolation { .. } => {
                AppError::Input(e.to_string())
            }
            RollingError::Window { .. } | RollingError::Scheduler(_) => {
                AppError::Solver(e.to_string())
            }
            RollingError::OrderShortfall { .. } => AppError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Run(args) => cmd_run(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            let doc = serde_json::json!({
                "error": e.kind(),
                "message": e.message(),
            });
            eprintln!("{doc}");
            std::process::exit(e.code());
        }
    }
}

fn load_inputs(
    config: &Path,
    scenario: &Path,
    history: Option<&Path>,
) -> Result<(PlantConfig, ExogenousScenario, Option<HistoryLibrary>), AppError> {
    let cfg = PlantConfig::load(config)?;
    let truth = ExogenousScenario::load(scenario)?;
    let library = history.map(HistoryLibrary::load).transpose()?;
    Ok((cfg, truth, library))
}

fn cmd_run(args: &RunArgs) -> Result<(), AppError> {
    let (mut cfg, truth, library) = load_inputs(
        &args.config,
        &args.scenario,
        args.history.as_deref(),
    )?;
    if let Some(p) = args.penalty {
        cfg.penalty.mechanism = match p {
            PenaltyArg::M1 => PenaltyMechanism::M1,
            PenaltyArg::M2 => PenaltyMechanism::M2,
            PenaltyArg::M3 => PenaltyMechanism::M3,
        };
    }
    if let Some(l) = args.lambda_p {
        cfg.penalty.lambda_p = l;
    }
    if let Some(l) = args.lambda_s {
        cfg.penalty.lambda_s = l;
    }
    if let Some(l) = args.lambda_rf {
        cfg.penalty.lambda_rf = l;
    }
    if let Some(c) = args.cuts {
        cfg.penalty.tangent_cut_count = c;
    }
    let findings = cfg.validate();
    if !findings.is_empty() {
        return Err(AppError::Input(findings.join("; ")));
    }
    let needs_history = matches!(args.mode, RunMode::Bi | RunMode::Di | RunMode::Full);
    let library = match (needs_history, library) {
        (true, None) => {
            return Err(AppError::Input(
                "--history is required for modes bi, di, and full".into(),
            ))
        }
        (_, lib) => lib,
    };
    let pacing = match args.pacing {
        PacingArg::Arm => PacingMode::Arm,
        PacingArg::Fcfb => PacingMode::Fcfb,
    };
    let forecast = ForecastModel {
        da_error_frac: args.da_error,
        id_error_frac: args.id_error,
        lookahead: cfg.horizon.lookahead,
        seed: args.seed,
    };
    rolling_engine::check_run_inputs(&cfg, &truth)?;

    let mut emit = Emitter::new(&args.out, &cfg)?;
    match args.mode {
        RunMode::Bd => {
            let da = rolling_engine::day_ahead_rows(&truth, &forecast);
            let bd = rolling_engine::solve_bd(&cfg, &da)?;
            emit.solution("bd", &bd);
        }
        RunMode::Dd => {
            let da = rolling_engine::day_ahead_rows(&truth, &forecast);
            let bd = rolling_engine::solve_bd(&cfg, &da)?;
            let (dd, offers) = rolling_engine::solve_dd(&cfg, &da, &bd)?;
            emit.solution("bd", &bd);
            emit.solution("dd", &dd);
            emit.offers(&offers, None);
        }
        RunMode::Bi => {
            let library = library.expect("checked above");
            let mut degenerate = Vec::new();
            let bi = rolling_engine::run_bi(&cfg, &truth, &library, &forecast, &mut degenerate)?;
            emit.realized("bi", &bi);
            emit.degenerate_rolls = degenerate;
        }
        RunMode::Di | RunMode::Full => {
            let library = library.expect("checked above");
            let rec = rolling_engine::run_pipeline(&cfg, &truth, &library, &forecast, pacing)?;
            let res_truth: Vec<f64> = truth
                .rows
                .iter()
                .map(|r| r.wind_mw + r.solar_mw)
                .collect();
            let metrics = MetricsReport::from_run(&cfg, &res_truth, &rec)
                .map_err(|e| AppError::Internal(e.to_string()))?;
            emit.record(&rec, &metrics);
        }
    }
    emit.finish(args)?;
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), AppError> {
    let mut findings = Vec::new();
    let cfg = match PlantConfig::load(&args.config) {
        Ok(cfg) => {
            findings.extend(cfg.validate());
            Some(cfg)
        }
        Err(ConfigError::Io { path, source }) => {
            return Err(AppError::Io(format!("io error on {path}: {source}")))
        }
        Err(e) => {
            findings.push(e.to_string());
            None
        }
    };
    let truth = match ExogenousScenario::load(&args.scenario) {
        Ok(s) => Some(s),
        Err(ConfigError::Io { path, source }) => {
            return Err(AppError::Io(format!("io error on {path}: {source}")))
        }
        Err(e) => {
            findings.push(e.to_string());
            None
        }
    };
    if let (Some(cfg), Some(truth)) = (&cfg, &truth) {
        if truth.len() != cfg.horizon.t_periods {
            findings.push(format!(
                "scenario has {} periods but the config horizon is {}",
                truth.len(),
                cfg.horizon.t_periods
            ));
        }
        for unit in OrderUnit::ALL {
            let capacity = cfg.horizon.t_periods as f64 * cfg.max_step_output(unit);
            if cfg.order(unit) > capacity + 1e-9 {
                findings.push(format!(
                    "order {} for {unit:?} exceeds horizon capacity {capacity}",
                    cfg.order(unit)
                ));
            }
        }
    }
    if let Some(dir) = &args.history {
        match HistoryLibrary::load(dir) {
            Ok(lib) => {
                if let (Some(cfg), Some(first)) = (&cfg, lib.scenarios.first()) {
                    if first.features[0].len() != cfg.horizon.t_periods {
                        findings.push(format!(
                            "history scenarios cover {} periods but the config horizon is {}",
                            first.features[0].len(),
                            cfg.horizon.t_periods
                        ));
                    }
                }
            }
            Err(ConfigError::Io { path, source }) => {
                return Err(AppError::Io(format!("io error on {path}: {source}")))
            }
            Err(e) => findings.push(e.to_string()),
        }
    }
    let report = serde_json::json!({ "findings": findings });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

#[derive(Serialize)]
struct PhaseLedger {
    peak: f64,
    cost: CostBreakdown,
    total_cost: f64,
    objective: Option<f64>,
    windows: Vec<serde_json::Value>,
}

#[derive(Serialize)]
struct Ledger {
    phases: BTreeMap<String, PhaseLedger>,
    orders: BTreeMap<String, f64>,
    realized_production: BTreeMap<String, BTreeMap<String, f64>>,
    shortfall_penalty: Option<f64>,
    deviation_penalty: Option<f64>,
    backfill_cost: Option<f64>,
    bi_global_cost: Option<f64>,
    di_global_cost: Option<f64>,
    kernel_degenerate_rolls: Vec<usize>,
}

struct Emitter<'a> {
    out: PathBuf,
    cfg: &'a PlantConfig,
    trajectories: Vec<(String, Vec<PeriodDispatch>)>,
    ledger: Ledger,
    offers_doc: Option<(OfferSeries, Option<(Vec<f64>, Vec<f64>)>)>,
    metrics: Option<MetricsReport>,
    degenerate_rolls: Vec<usize>,
}

impl<'a> Emitter<'a> {
    fn new(out: &Path, cfg: &'a PlantConfig) -> Result<Self, AppError> {
        fs::create_dir_all(out)?;
        Ok(Emitter {
            out: out.to_path_buf(),
            cfg,
            trajectories: Vec::new(),
            ledger: Ledger {
                phases: BTreeMap::new(),
                orders: OrderUnit::ALL
                    .iter()
                    .map(|&u| (format!("{u:?}").to_lowercase(), cfg.order(u)))
                    .collect(),
                realized_production: BTreeMap::new(),
                shortfall_penalty: None,
                deviation_penalty: None,
                backfill_cost: None,
                bi_global_cost: None,
                di_global_cost: None,
                kernel_degenerate_rolls: Vec::new(),
            },
            offers_doc: None,
            metrics: None,
            degenerate_rolls: Vec::new(),
        })
    }

    fn production(&mut self, phase: &str, periods: &[PeriodDispatch]) {
        let mut m = BTreeMap::new();
        m.insert("sf".into(), periods.iter().map(|d| d.m_dri_p).sum());
        m.insert("eaf".into(), periods.iter().map(|d| d.m_eaf).sum());
        self.ledger.realized_production.insert(phase.into(), m);
    }

    fn solution(&mut self, phase: &str, sol: &DispatchSolution) {
        self.production(phase, &sol.periods);
        self.ledger.phases.insert(
            phase.into(),
            PhaseLedger {
                peak: sol.peak,
                cost: sol.cost,
                total_cost: sol.cost.total(),
                objective: Some(sol.objective),
                windows: vec![serde_json::json!({
                    "k": 0, "optimal": sol.status_optimal, "mip_gap": sol.mip_gap,
                })],
            },
        );
        self.trajectories.push((phase.into(), sol.periods.clone()));
    }

    fn realized(&mut self, phase: &str, run: &RealizedRun) {
        self.production(phase, &run.periods);
        self.ledger.phases.insert(
            phase.into(),
            PhaseLedger {
                peak: run.peak,
                cost: run.economics,
                total_cost: run.economics.total(),
                objective: None,
                windows: run
                    .windows
                    .iter()
                    .map(|w| {
                        serde_json::json!({
                            "k": w.k, "optimal": w.optimal, "mip_gap": w.mip_gap,
                            "objective": w.objective,
                        })
                    })
                    .collect(),
            },
        );
        self.trajectories.push((phase.into(), run.periods.clone()));
    }

    fn offers(&mut self, offers: &OfferSeries, delivered: Option<(Vec<f64>, Vec<f64>)>) {
        self.offers_doc = Some((offers.clone(), delivered));
    }

    fn record(&mut self, rec: &RunRecord, metrics: &MetricsReport) {
        self.solution("bd", &rec.bd);
        self.realized("bi", &rec.bi);
        self.solution("dd", &rec.dd);
        self.realized("di", &rec.di);
        let delivered: Vec<f64> = rec
            .bi
            .netloads()
            .iter()
            .zip(rec.di.netloads())
            .enumerate()
            .map(|(t, (bi, di))| rec.offers.dir[t] * (bi - di))
            .collect();
        self.offers(&rec.offers, Some((delivered, metrics.effective_capacity.clone())));
        self.ledger.shortfall_penalty = Some(rec.shortfall_penalty);
        self.ledger.deviation_penalty = Some(rec.deviation_penalty);
        self.ledger.backfill_cost = Some(rec.backfill_cost);
        self.ledger.bi_global_cost = Some(rec.bi_global_cost);
        self.ledger.di_global_cost = Some(rec.di_global_cost);
        self.degenerate_rolls = rec.kernel_degenerate_rolls.clone();
        self.metrics = Some(metrics.clone());
    }

    fn finish(mut self, args: &RunArgs) -> Result<(), AppError> {
        self.ledger.kernel_degenerate_rolls = self.degenerate_rolls.clone();
        self.write_trajectories()?;
        if let Some((offers, delivered)) = &self.offers_doc {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "p_mag_mw", "dir", "delivered_mw", "b_eff_mw"])
                .unwrap();
            for t in 0..offers.mag.len() {
                let (d, b) = match delivered {
                    Some((dv, bv)) => (fmt(dv[t]), fmt(bv[t])),
                    None => (String::new(), String::new()),
                };
                w.write_record([
                    t.to_string(),
                    format!("{}", offers.mag[t]),
                    format!("{}", offers.dir[t]),
                    d,
                    b,
                ])
                .unwrap();
            }
            fs::write(
                self.out.join("offers.csv"),
                w.into_inner().map_err(|e| AppError::Internal(e.to_string()))?,
            )?;
        }
        fs::write(
            self.out.join("ledger.json"),
            serde_json::to_string_pretty(&self.ledger).unwrap(),
        )?;
        if let Some(metrics) = &self.metrics {
            fs::write(
                self.out.join("metrics.json"),
                serde_json::to_string_pretty(metrics).unwrap(),
            )?;
        }
        let manifest = serde_json::json!({
            "tool": "drsteel",
            "version": env!("CARGO_PKG_VERSION"),
            "solver": "highs",
            "inputs": {
                "config": args.config.display().to_string(),
                "scenario": args.scenario.display().to_string(),
                "history": args.history.as_ref().map(|p| p.display().to_string()),
            },
            "mode": mode_label(args.mode),
            "penalty": penalty_label(self.cfg.penalty.mechanism),
            "pacing": match args.pacing { PacingArg::Arm => "arm", PacingArg::Fcfb => "fcfb" },
            "lambda_p": self.cfg.penalty.lambda_p,
            "lambda_s": self.cfg.penalty.lambda_s,
            "lambda_rf": self.cfg.penalty.lambda_rf,
            "tangent_cuts": self.cfg.penalty.tangent_cut_count,
            "seed": args.seed,
            "da_error_frac": args.da_error,
            "id_error_frac": args.id_error,
            "solver_gap": self.cfg.solver_gap,
        });
        fs::write(
            self.out.join("run_manifest.json"),
            serde_json::to_string_pretty(&manifest).unwrap(),
        )?;
        Ok(())
    }

    fn write_trajectories(&self) -> Result<(), AppError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "phase",
            "t",
            "p_buy",
            "p_sell",
            "p_curt",
            "netload",
            "p_ae",
            "p_eaf",
            "p_heh",
            "p_leh",
            "p_ccs",
            "p_comp",
            "p_exp",
            "m_qss",
            "m_dri_p",
            "m_hot_out",
            "m_hdri_charge",
            "m_eaf",
            "m_scrap",
            "m_metha_qss",
            "m_metha_p",
            "m_carbon",
            "m_lime",
            "co2_out",
            "hl_sell",
            "thl_sell",
            "x1",
            "x2",
            "x3",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for s in &self.cfg.storages {
            let l = s.storage_id.label().to_lowercase();
            header.push(format!("{l}_ch"));
            header.push(format!("{l}_dis"));
            header.push(format!("{l}_soc"));
        }
        w.write_record(&header).unwrap();
        for (phase, periods) in &self.trajectories {
            for d in periods {
                let mut rec: Vec<String> = vec![
                    phase.clone(),
                    d.t.to_string(),
                    fmt(d.p_buy),
                    fmt(d.p_sell),
                    fmt(d.p_curt),
                    fmt(d.netload),
                    fmt(d.p_ae),
                    fmt(d.p_eaf),
                    fmt(d.p_heh),
                    fmt(d.p_leh),
                    fmt(d.p_ccs),
                    fmt(d.p_comp),
                    fmt(d.p_exp),
                    fmt(d.m_qss),
                    fmt(d.m_dri_p),
                    fmt(d.m_hot_out),
                    fmt(d.m_hdri_charge),
                    fmt(d.m_eaf),
                    fmt(d.m_scrap),
                    fmt(d.m_metha_qss),
                    fmt(d.m_metha_p),
                    fmt(d.m_carbon),
                    fmt(d.m_lime),
                    fmt(d.co2_out),
                    fmt(d.hl_sell),
                    fmt(d.thl_sell),
                    fmt(d.x[0]),
                    fmt(d.x[1]),
                    fmt(d.x[2]),
                ];
                for s in &self.cfg.storages {
                    let f = &d.storage[&s.storage_id];
                    rec.push(fmt(f.p_ch));
                    rec.push(fmt(f.p_dis));
                    rec.push(fmt(f.level));
                }
                w.write_record(&rec).unwrap();
            }
        }
        fs::write(
            self.out.join("trajectories.csv"),
            w.into_inner().map_err(|e| AppError::Internal(e.to_string()))?,
        )?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    // canonical shortest roundtrip keeps artifacts byte-stable
    format!("{v}")
}

fn mode_label(m: RunMode) -> &'static str {
    match m {
        RunMode::Bd => "bd",
        RunMode::Bi => "bi",
        RunMode::Dd => "dd",
        RunMode::Di => "di",
        RunMode::Full => "full",
    }
}

fn penalty_label(p: PenaltyMechanism) -> &'static str {
    match p {
        PenaltyMechanism::M1 => "m1",
        PenaltyMechanism::M2 => "m2",
        PenaltyMechanism::M3 => "m3",
    }
}
