//! Config-driven experiment runner: dataset loading or synthesis, split
//! construction, supervised / investigation / recurrent transfer runs and
//! artifact emission.

pub mod config;
pub mod run;

pub use config::{config_hash, load_config, parse_config, FieldError, LoadedConfig, RunConfig, RunMode};
pub use run::{run, RunError, RunSummary};

/// Removes every `wall_clock_s` key, recursively.
pub fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("wall_clock_s");
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
