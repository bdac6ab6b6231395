//! Prints the built-in scenario as a JSON config file.

use coexist_core::harness::ScenarioConfig;

fn main() -> coexist_core::error::Result<()> {
    println!("{}", ScenarioConfig::default().to_json()?);
    Ok(())
}
