//! Regenerate the reasoner fixtures under `fixtures/` by recording the
//! replies a faithful endpoint would give, using the oracle as reference.
//!
//! ```text
//! cargo run -p recovery-core --example record_fixtures
//! ```

use std::path::Path;

use recovery_core::pipeline::{run_task, Mode, RunConfig};
use recovery_core::reasoner::vlm::Recorder;
use recovery_core::reasoner::OracleReasoner;
use recovery_core::simulator::Scenario;

const RECORDED: &[&str] = &["peg_hole_blocked", "peg_hole_refilled"];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for name in RECORDED {
        let scenario = Scenario::load(&root.join("scenarios/failures").join(format!("{name}.toml")))?;
        let mode = Mode::Combined;
        let mut rec = Recorder::new(OracleReasoner::default(), name, mode.name());
        let report = run_task(&scenario, &RunConfig::new(mode), &mut rec);
        let out = root.join("fixtures").join(format!("{name}.json"));
        std::fs::write(&out, serde_json::to_string_pretty(&rec.fixture)? + "\n")?;
        println!(
            "{}: {} exchanges, task {}",
            out.display(),
            rec.fixture.exchanges.len(),
            if report.task_success { "achieved" } else { "failed" }
        );
    }
    Ok(())
}
