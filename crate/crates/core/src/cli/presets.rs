//! Bundled scenarios reproducing the reference experiments.

use super::scenario::Scenario;
use crate::error::{Error, Result};

pub struct Preset {
    pub name: &'static str,
    pub source: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig4-sync-conventional",
        source: include_str!("../../data/presets/fig4-sync-conventional.toml"),
    },
    Preset {
        name: "fig5-sync-dpmsr",
        source: include_str!("../../data/presets/fig5-sync-dpmsr.toml"),
    },
    Preset {
        name: "fig6-sync-nonrobust",
        source: include_str!("../../data/presets/fig6-sync-nonrobust.toml"),
    },
    Preset {
        name: "fig7-async-robust-fail",
        source: include_str!("../../data/presets/fig7-async-robust-fail.toml"),
    },
    Preset {
        name: "fig7-async-complete",
        source: include_str!("../../data/presets/fig7-async-complete.toml"),
    },
    Preset {
        name: "proposition1",
        source: include_str!("../../data/presets/proposition1.toml"),
    },
];

/// Alternative names accepted by [`find`].
pub const ALIASES: &[(&str, &str)] = &[("fig6-async-robust-fail", "fig7-async-robust-fail")];

pub fn find(name: &str) -> Option<&'static Preset> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, target)| target);
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load(name: &str) -> Result<Scenario> {
    let preset = find(name).ok_or_else(|| Error::input(format!("unknown preset {name:?}")))?;
    Scenario::from_toml(preset.source)
}
