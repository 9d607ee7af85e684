//! Per-stage seed derivation from one master seed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Split,
    Forest,
    Bootstrap,
    Importance,
    Ablation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Split => "split",
            Stage::Forest => "forest",
            Stage::Bootstrap => "bootstrap",
            Stage::Importance => "importance",
            Stage::Ablation => "ablation",
        }
    }

    fn id(self) -> u64 {
        match self {
            Stage::Synth => 1,
            Stage::Split => 2,
            Stage::Forest => 3,
            Stage::Bootstrap => 4,
            Stage::Importance => 5,
            Stage::Ablation => 6,
        }
    }
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for job `index` of `stage`; independent of every other stage.
pub fn derive_seed(master: u64, stage: Stage, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(stage.id())).wrapping_add(index))
}

/// Seed for a sub-job of an already derived seed.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    mix64(parent.wrapping_add(mix64(index)))
}
