use std::path::PathBuf;

use atomlens::config::{Scenario, ScenarioKind};

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Scenario {
    Scenario::load(&configs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_shipped_config_validates() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 10);
}

#[test]
fn sweep_configs_have_the_expected_points() {
    for (name, n) in [("sweep_lens_and_interaction.json", 15), ("sweep_bec_scattering.json", 20), ("sweep_kick.json", 30), ("desk_sweep_lens_and_interaction.json", 15)] {
        let s = load(name);
        assert_eq!(s.sweep.unwrap().points().len(), n, "{name}");
    }
}

#[test]
fn full_scale_configs_resolve() {
    let s = load("focus_attractive.json");
    assert_eq!(s.kind, ScenarioKind::Focus);
    assert!((s.bragg.rabi - 524.2).abs() < 0.5, "{}", s.bragg.rabi);
    let c = load("calibrate_xi.json");
    assert_eq!(c.kind, ScenarioKind::CalibrateXi);
}
