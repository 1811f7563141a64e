//! Browser bindings. Every export takes and returns JSON text so the page
//! needs no generated type definitions.

use iotchan::cli::{self, CliError, Report, ScenarioOverrides};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn render(result: Result<Report, CliError>) -> String {
    match result {
        Ok(report) => report.to_json(),
        Err(CliError::CheckFailed { message, report }) => {
            let mut v = serde_json::to_value(*report).expect("report serializes");
            v["error"] = json!(message);
            serde_json::to_string_pretty(&v).expect("json serializes")
        }
        Err(e) => serde_json::to_string_pretty(&json!({ "error": e.to_string() })).expect("json serializes"),
    }
}

/// Shipped fixture text by name, or an empty string.
#[wasm_bindgen]
pub fn fixture(name: &str) -> String {
    cli::fixture(name).unwrap_or_default()
}

/// Game report for a game config.
#[wasm_bindgen]
pub fn analyze_game(config_json: &str) -> String {
    render(cli::cmd_analyze_game(config_json))
}

/// Scenario report, with the event trace as JSON lines under `trace`.
#[wasm_bindgen]
pub fn run_scenario(config_json: &str) -> String {
    match cli::cmd_run_scenario(config_json, ScenarioOverrides::default()) {
        Ok((report, trace)) => {
            let mut v = serde_json::to_value(report).expect("report serializes");
            v["trace"] = json!(trace.to_json_lines());
            serde_json::to_string_pretty(&v).expect("json serializes")
        }
        Err(e) => render(Err(e)),
    }
}

/// Size range of a transaction with the given input and output counts.
#[wasm_bindgen]
pub fn estimate_size(inputs: u32, outputs: u32) -> String {
    render(cli::cmd_estimate_size(inputs as u64, outputs as u64))
}
