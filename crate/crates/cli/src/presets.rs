//! Built-in scenarios. Each preset is a config document kept in `presets/`.

use crate::config::{parse_config, ConfigErrors, ExperimentConfig};

pub const PRESETS: [(&str, &str); 5] = [
    ("ode-crowd-out", include_str!("../presets/ode-crowd-out.toml")),
    ("lattice-crowd-out", include_str!("../presets/lattice-crowd-out.toml")),
    ("tree-coexistence", include_str!("../presets/tree-coexistence.toml")),
    ("tree-regimes", include_str!("../presets/tree-regimes.toml")),
    ("oracle-check", include_str!("../presets/oracle-check.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let text = preset_text(name).ok_or_else(|| {
        let names: Vec<_> = PRESETS.iter().map(|p| p.0).collect();
        ConfigErrors::single("preset", format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
    })?;
    parse_config(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitSpec, KindSpec};

    #[test]
    fn all_presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let c = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(parse_config(&c.to_toml()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn pinned_values() {
        let ode = preset("ode-crowd-out").unwrap();
        assert_eq!((ode.params.lambda1, ode.params.lambda2), (2.0, 3.0));
        assert_eq!(ode.init, Some(InitSpec::Density { u1: 0.01, u2: 0.6667 }));
        let oracle = preset("oracle-check").unwrap();
        assert_eq!(oracle.replicates, 100_000);
        assert_eq!(oracle.topology.unwrap().extent, 3);
        let tree = preset("tree-coexistence").unwrap();
        assert_eq!((tree.params.lambda1, tree.params.lambda2), (0.155, 0.165));
        assert_eq!(tree.init, Some(InitSpec::Split));
        let regimes = preset("tree-regimes").unwrap();
        assert!(matches!(regimes.detail, KindSpec::Regime(ref r) if r.lambdas == [0.05, 0.16, 0.5]));
    }

    #[test]
    fn unknown_preset() {
        assert!(preset("nope").unwrap_err().mentions("preset"));
    }
}
