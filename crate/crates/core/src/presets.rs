//! Bundled hardware, layers, refresh placements and mapping templates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dse::{explore, order_with_prefix, Geometry, Objective, SearchResult, SearchSpace, Strategy};
use crate::error::{Error, Result};
use crate::loopnest::{LoopNest, Mapping, RefreshLocations};
use crate::model::{DataKind, Dim, HardwareConfig, LayerShape, MemLevel, ModelOptions, PerLevel};

const EYERISS_NORMALIZED: &str = include_str!("../presets/eyeriss_normalized.json");
const ALEXNET_CONV: &str = include_str!("../presets/alexnet_conv.json");

pub const HARDWARE_PRESETS: [&str; 1] = ["eyeriss_normalized"];
pub const MAPPING_PRESETS: [&str; 1] = ["row_stationary_like"];
pub const NETWORK_PRESETS: [&str; 1] = ["alexnet_conv"];

pub fn eyeriss_normalized() -> HardwareConfig {
    serde_json::from_str(EYERISS_NORMALIZED).expect("bundled hardware preset parses")
}

/// AlexNet CONV1 to CONV5 (CONV2, CONV4 and CONV5 with the two-group channel split).
pub fn alexnet_conv() -> Vec<LayerShape> {
    serde_json::from_str(ALEXNET_CONV).expect("bundled layer preset parses")
}

pub fn hardware_preset(name: &str) -> Result<HardwareConfig> {
    match name {
        "eyeriss_normalized" => Ok(eyeriss_normalized()),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

/// A bundled network, or a single layer of it by name (`alexnet_conv3`).
pub fn layer_preset(name: &str) -> Result<Vec<LayerShape>> {
    if name == "alexnet_conv" {
        return Ok(alexnet_conv());
    }
    alexnet_conv()
        .into_iter()
        .find(|l| l.name == name)
        .map(|l| vec![l])
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Where each buffer is refilled, relative to a nest's level groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshPreset {
    /// Every buffer refilled at the top of its level group.
    Outermost,
    /// Weights stay in the RF for the whole RF group; inputs and outputs stream.
    WeightStationary,
    /// Partial sums stay in the RF; inputs and weights stream.
    OutputStationary,
    /// Weights held for the RF group, inputs and outputs refreshed one loop deeper.
    RowStationaryLike,
    /// RF refills this many loops below the top of the RF group, per kind.
    RfOffsets {
        input: usize,
        output: usize,
        weight: usize,
    },
}

impl RefreshPreset {
    pub const NAMED: [RefreshPreset; 4] = [
        RefreshPreset::Outermost,
        RefreshPreset::WeightStationary,
        RefreshPreset::OutputStationary,
        RefreshPreset::RowStationaryLike,
    ];

    fn rf_offsets(self) -> Option<[usize; 3]> {
        const DEEPEST: usize = usize::MAX;
        match self {
            RefreshPreset::Outermost => None,
            RefreshPreset::WeightStationary => Some([DEEPEST, DEEPEST, 0]),
            RefreshPreset::OutputStationary => Some([DEEPEST, 0, DEEPEST]),
            RefreshPreset::RowStationaryLike => Some([1, 1, 0]),
            RefreshPreset::RfOffsets {
                input,
                output,
                weight,
            } => Some([input, output, weight]),
        }
    }

    /// Refresh locations for `nest`. Apart from `Outermost`, each location
    /// is also lifted above enclosing loops that cannot change the kind's
    /// tile (bound 1 or an irrelevant dim), which saves refills for free.
    pub fn apply(self, nest: &LoopNest) -> RefreshLocations {
        let mut loc = RefreshLocations::outermost(nest);
        let Some(offsets) = self.rf_offsets() else {
            return loc;
        };
        let levels = nest.levels();
        let n = levels.len();
        let gb_start = nest.group(MemLevel::Gb).start;
        let rf_start = nest.group(MemLevel::Rf).start;
        let spatial_end = nest.spatial_end();
        let inert = |kind: DataKind, i: usize| {
            let l = &levels[i];
            !l.spatial && (l.bound == 1 || !kind.depends_on(l.dim))
        };
        for (k, kind) in DataKind::ALL.into_iter().enumerate() {
            let mut gb = gb_start;
            while gb > 0 && levels[gb - 1].mem == MemLevel::Dram && inert(kind, gb - 1) {
                gb -= 1;
            }
            let mut rf = rf_start.saturating_add(offsets[k]).min(n);
            let floor = spatial_end.max(gb);
            while rf > floor && inert(kind, rf - 1) {
                rf -= 1;
            }
            loc.set(kind, crate::loopnest::Buffer::Gb, gb);
            loc.set(kind, crate::loopnest::Buffer::Rf, rf);
        }
        loc
    }
}

impl fmt::Display for RefreshPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefreshPreset::Outermost => f.write_str("outermost"),
            RefreshPreset::WeightStationary => f.write_str("weight_stationary"),
            RefreshPreset::OutputStationary => f.write_str("output_stationary"),
            RefreshPreset::RowStationaryLike => f.write_str("row_stationary_like"),
            RefreshPreset::RfOffsets {
                input,
                output,
                weight,
            } => write!(f, "rf_offsets({input},{output},{weight})"),
        }
    }
}

impl FromStr for RefreshPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        RefreshPreset::NAMED
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| {
                format!(
                    "unknown refresh preset `{s}` (expected outermost, weight_stationary, \
                     output_stationary or row_stationary_like)"
                )
            })
    }
}

/// Row-stationary template: filter rows and output rows spread over the
/// array (rows carry r and part of m, columns carry e), one filter row per
/// PE kept in its RF, and the remaining factors searched for the lowest
/// energy-delay product.
pub fn row_stationary_space() -> SearchSpace {
    use Dim::*;
    use MemLevel::*;
    let mut space = SearchSpace::new(&[Dram, Gb, Noc, Rf]);
    space.orderings = PerLevel {
        dram: vec![order_with_prefix(&[M, E, C, R])],
        gb: vec![order_with_prefix(&[M, C, F])],
        noc: vec![order_with_prefix(&[R, E, M])],
        rf: vec![order_with_prefix(&[F, C, M, S])],
    };
    let mut allowed: [Vec<MemLevel>; 6] = Default::default();
    allowed[M.index()] = vec![Dram, Gb, Noc, Rf];
    allowed[C.index()] = vec![Dram, Gb, Rf];
    allowed[R.index()] = vec![Noc];
    allowed[S.index()] = vec![Rf];
    allowed[E.index()] = vec![Dram, Noc];
    allowed[F.index()] = vec![Gb, Rf];
    space.allowed = allowed;
    space.geometry = Some(Geometry {
        rows: vec![R, M],
        cols: vec![E],
    });
    space.refresh = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(|(input, output)| RefreshPreset::RfOffsets {
            input,
            output,
            weight: 0,
        })
        .collect();
    space.exhaustive_cap = 10_000_000;
    space.top_k = 1;
    space
}

pub fn row_stationary_like(
    layer: &LayerShape,
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<SearchResult> {
    explore(
        layer,
        hw,
        &row_stationary_space(),
        Objective::Edp,
        Strategy::Exhaustive,
        options,
    )
}

/// Mapping of a named template for `layer`.
pub fn mapping_preset(
    name: &str,
    layer: &LayerShape,
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<Mapping> {
    match name {
        "row_stationary_like" => Ok(row_stationary_like(layer, hw, options)?.best().mapping.clone()),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}
