//! Regenerates the bundled synthetic data set under data/:
//! plant.json, scenario.csv, and history/*.csv with perfect-information
//! storage trajectories from full-horizon baseline solves.
//!
//! Usage: cargo run --release -p drsteel-core --example gen_data [OUT_DIR]

use std::fs;
use std::path::PathBuf;

use drsteel_core::config::FEATURE_NAMES;
use drsteel_core::fixtures;
use drsteel_core::scheduler;

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".into())
        .into();
    fs::create_dir_all(out.join("history")).expect("create data dirs");

    let cfg = fixtures::synthetic_config();
    let findings = cfg.validate();
    assert!(findings.is_empty(), "config findings: {findings:?}");
    fs::write(
        out.join("plant.json"),
        serde_json::to_string_pretty(&cfg).unwrap(),
    )
    .unwrap();

    let truth = fixtures::synthetic_scenario();
    fs::write(out.join("scenario.csv"), truth.to_csv_string()).unwrap();

    // History scenarios: perturbed variants of the truth, each paired with
    // the storage trajectory of its own perfect-information flexible solve
    // (core units free, as in the DR day-ahead problem).
    for variant in 1..=4usize {
        let scenario = fixtures::synthetic_history_features(variant);
        let bd = scheduler::solve_spec(&fixtures::bd_spec(&cfg, scenario.rows.clone()))
            .expect("history baseline solve");
        let (sol, _) = drsteel_core::rolling_engine::solve_dd(&cfg, &scenario.rows, &bd)
            .expect("history flexible solve");
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = vec!["t".into()];
        header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        for s in &cfg.storages {
            header.push(format!("soc_{}", s.storage_id.label().to_lowercase()));
        }
        w.write_record(&header).unwrap();
        for (i, row) in scenario.rows.iter().enumerate() {
            let mut rec = vec![
                row.t.to_string(),
                format!("{}", row.wind_mw),
                format!("{}", row.solar_mw),
                format!("{}", row.price_buy),
                format!("{}", row.price_sell),
                format!("{}", row.h2_demand_t),
                format!("{}", row.heat_demand_mwh),
            ];
            for s in &cfg.storages {
                rec.push(format!("{}", sol.periods[i].storage[&s.storage_id].level));
            }
            w.write_record(&rec).unwrap();
        }
        fs::write(
            out.join("history").join(format!("scenario_{variant:02}.csv")),
            w.into_inner().unwrap(),
        )
        .unwrap();
    }

    // Bandwidths sized to the synthetic feature ranges.
    let bw = serde_json::json!({
        "bandwidths": {
            "wind_mw": 60.0,
            "solar_mw": 60.0,
            "price_buy": 30.0,
            "price_sell": 30.0,
            "h2_demand_t": 1.0,
            "heat_demand_mwh": 10.0,
        }
    });
    fs::write(
        out.join("history").join("bandwidths.json"),
        serde_json::to_string_pretty(&bw).unwrap(),
    )
    .unwrap();
    println!("wrote bundled data to {}", out.display());
}
