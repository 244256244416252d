//! Artifact digests of every shipped scenario. Set `UPDATE_GOLDEN=1` to
//! rewrite them after an intended behavior change.

use std::path::PathBuf;

use mcsim_core::experiment::{all_scenarios, run_scenario, Artifacts, Overrides};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
}

#[test]
fn scenario_digests_match() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut mismatches = Vec::new();
    for sc in all_scenarios() {
        let runs = run_scenario(sc.id, Overrides::default()).unwrap();
        let text: String = runs
            .iter()
            .map(|r| {
                format!(
                    "{}\t{}\n",
                    r.variant.as_deref().unwrap_or("-"),
                    Artifacts::from_run(r).digest()
                )
            })
            .collect();
        let path = golden_dir().join(format!("{}.digest", sc.id));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_default();
        if want != text {
            mismatches.push(format!("{}: expected\n{want}got\n{text}", sc.id));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}
