//! Tiled, level-tagged loop nests, refresh locations, and the refresh-count
//! derivation that turns a dataflow into per-buffer traffic.
//!
//! Positions are gaps between loops: position `p` sits just above
//! `levels[p]`, so loops `0..p` enclose it and loops `p..` run inside every
//! refresh made there. Position `levels.len()` is below the innermost loop.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation, Violations};
use crate::model::{
    checked_product, halo, mac_count, Capacity, DataKind, Dim, HardwareConfig, LayerShape,
    MemLevel, ModelOptions, PerKind, PerLevel,
};

/// One loop of the nest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopLevel {
    pub dim: Dim,
    pub bound: u64,
    pub mem: MemLevel,
    #[serde(default)]
    pub spatial: bool,
}

impl LoopLevel {
    pub fn temporal(dim: Dim, bound: u64, mem: MemLevel) -> Self {
        Self {
            dim,
            bound,
            mem,
            spatial: false,
        }
    }

    pub fn spatial(dim: Dim, bound: u64) -> Self {
        Self {
            dim,
            bound,
            mem: MemLevel::Noc,
            spatial: true,
        }
    }
}

/// A structurally legal loop nest for one layer, outermost loop first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LoopNest {
    layer: LayerShape,
    levels: Vec<LoopLevel>,
}

impl LoopNest {
    /// Checks bounds, grouping, spatial placement and dimension coverage.
    pub fn new(layer: LayerShape, levels: Vec<LoopLevel>) -> Result<Self> {
        layer.validate()?;
        let v = structural_violations(&layer, &levels);
        if !v.is_empty() {
            return Err(Error::Illegal(Violations(v)));
        }
        checked_product(levels.iter().map(|l| l.bound), "padded iteration count")?;
        Ok(Self { layer, levels })
    }

    pub fn layer(&self) -> &LayerShape {
        &self.layer
    }

    pub fn levels(&self) -> &[LoopLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index range occupied by the loops of one memory level. Empty groups
    /// still have a well-defined start position.
    pub fn group(&self, mem: MemLevel) -> Range<usize> {
        let start = self.levels.iter().filter(|l| l.mem > mem).count();
        let len = self.levels.iter().filter(|l| l.mem == mem).count();
        start..start + len
    }

    /// Position just below the innermost spatial loop (0 without any).
    pub fn spatial_end(&self) -> usize {
        self.levels
            .iter()
            .rposition(|l| l.spatial)
            .map_or(0, |i| i + 1)
    }

    /// Per-dimension product of loop bounds (the padded layer).
    pub fn padded_dims(&self) -> [u64; 6] {
        let mut dims = [1u64; 6];
        for l in &self.levels {
            dims[l.dim.index()] *= l.bound;
        }
        dims
    }

    pub fn padded_layer(&self) -> LayerShape {
        self.layer.with_dims(self.padded_dims())
    }

    /// Product of all bounds, i.e. innermost-body executions.
    pub fn iterations(&self) -> u64 {
        self.levels.iter().map(|l| l.bound).product()
    }

    pub fn active_pes(&self) -> u64 {
        self.levels
            .iter()
            .filter(|l| l.spatial)
            .map(|l| l.bound)
            .product()
    }

    /// Same nest with a different loop list, re-validated.
    pub fn with_levels(&self, levels: Vec<LoopLevel>) -> Result<Self> {
        Self::new(self.layer.clone(), levels)
    }
}

fn structural_violations(layer: &LayerShape, levels: &[LoopLevel]) -> Vec<Violation> {
    let mut v = Vec::new();
    for (i, l) in levels.iter().enumerate() {
        if l.bound < 1 {
            v.push(Violation::new(format!("levels[{i}].bound"), "must be ≥ 1"));
        }
        if l.spatial && l.mem != MemLevel::Noc {
            v.push(Violation::new(
                format!("levels[{i}].spatial"),
                format!("spatial loops are only allowed at NoC, found {}", l.mem),
            ));
        }
    }
    for (i, pair) in levels.windows(2).enumerate() {
        if pair[1].mem > pair[0].mem {
            v.push(Violation::new(
                format!("levels[{}].mem", i + 1),
                format!(
                    "{} loop below a {} loop breaks the DRAM→GB→NoC→RF grouping",
                    pair[1].mem, pair[0].mem
                ),
            ));
        }
    }
    let spatial: Vec<usize> = (0..levels.len()).filter(|&i| levels[i].spatial).collect();
    if let (Some(&first), Some(&last)) = (spatial.first(), spatial.last()) {
        if last - first + 1 != spatial.len() {
            v.push(Violation::new(
                "levels",
                "spatial loops must be contiguous within the NoC group",
            ));
        }
    }
    if !v.is_empty() {
        return v;
    }
    for d in Dim::ALL {
        let bounds: Vec<u64> = levels.iter().filter(|l| l.dim == d).map(|l| l.bound).collect();
        let Some(product) = bounds.iter().try_fold(1u64, |a, b| a.checked_mul(*b)) else {
            v.push(Violation::new(d.as_str(), "bound product overflows"));
            continue;
        };
        let need = layer.dim(d);
        if product < need {
            v.push(Violation::new(
                d.as_str(),
                format!("loop bounds cover {product} but the layer needs {need}"),
            ));
            continue;
        }
        // Minimal padding: shrinking any single loop by one must lose coverage.
        for &b in bounds.iter().filter(|&&b| b > 1) {
            if product / b * (b - 1) >= need {
                v.push(Violation::new(
                    d.as_str(),
                    format!("padding is not minimal: product {product} for size {need}"),
                ));
                break;
            }
        }
    }
    v
}

/// Per-level tiling factors, indexed by `Dim::index()`.
pub type Tiling = PerLevel<[u64; 6]>;

/// Per-level loop order, outermost first. Each entry must be a permutation
/// of all six dimensions.
pub type Ordering = PerLevel<Vec<Dim>>;

pub fn canonical_ordering() -> Ordering {
    PerLevel::from_fn(|_| Dim::ALL.to_vec())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Round the outermost factor up so partial tiles are modeled as full tiles.
    pub pad: bool,
    /// Emit bound-1 loops too (24 loops for a full four-level tiling).
    pub keep_unit_loops: bool,
}

/// Assembles a nest from per-level factors and orderings. NoC loops are spatial.
pub fn build_nest(
    layer: &LayerShape,
    tiling: &Tiling,
    ordering: &Ordering,
    options: BuildOptions,
) -> Result<LoopNest> {
    layer.validate()?;
    let mut v = Vec::new();
    for (mem, order) in ordering.iter() {
        let mut seen = [false; 6];
        for d in order {
            seen[d.index()] = true;
        }
        if order.len() != 6 || seen.iter().any(|s| !s) {
            v.push(Violation::new(
                format!("ordering.{mem}"),
                "must be a permutation of m, c, r, s, e, f",
            ));
        }
        for d in Dim::ALL {
            if tiling[mem][d.index()] < 1 {
                v.push(Violation::new(format!("tiling.{mem}.{d}"), "must be ≥ 1"));
            }
        }
    }
    if !v.is_empty() {
        return Err(Error::Illegal(Violations(v)));
    }

    let mut tiling = *tiling;
    for d in Dim::ALL {
        let inner = checked_product(
            [MemLevel::Gb, MemLevel::Noc, MemLevel::Rf].map(|m| tiling[m][d.index()]),
            "tiling product",
        )?;
        let total = inner
            .checked_mul(tiling.dram[d.index()])
            .ok_or_else(|| Error::overflow("tiling product"))?;
        let need = layer.dim(d);
        if total < need {
            if options.pad {
                tiling.dram[d.index()] = need.div_ceil(inner);
            } else {
                v.push(Violation::new(
                    d.as_str(),
                    format!("tiling factors cover {total} but the layer needs {need}"),
                ));
            }
        }
    }
    if !v.is_empty() {
        return Err(Error::Illegal(Violations(v)));
    }

    let mut levels = Vec::new();
    for mem in MemLevel::ALL {
        for &d in &ordering[mem] {
            let bound = tiling[mem][d.index()];
            if bound == 1 && !options.keep_unit_loops {
                continue;
            }
            levels.push(LoopLevel {
                dim: d,
                bound,
                mem,
                spatial: mem == MemLevel::Noc,
            });
        }
    }
    LoopNest::new(layer.clone(), levels)
}

/// The two buffers that get refilled: the global buffer and the per-PE RF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Buffer {
    #[serde(rename = "GB")]
    Gb,
    #[serde(rename = "RF")]
    Rf,
}

impl Buffer {
    pub const ALL: [Buffer; 2] = [Buffer::Gb, Buffer::Rf];

    pub fn mem(self) -> MemLevel {
        match self {
            Buffer::Gb => MemLevel::Gb,
            Buffer::Rf => MemLevel::Rf,
        }
    }

    pub fn from_mem(mem: MemLevel) -> Option<Self> {
        match mem {
            MemLevel::Gb => Some(Buffer::Gb),
            MemLevel::Rf => Some(Buffer::Rf),
            _ => None,
        }
    }
}

impl fmt::Display for Buffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.mem().fmt(f)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferPair<T> {
    #[serde(rename = "GB")]
    pub gb: T,
    #[serde(rename = "RF")]
    pub rf: T,
}

impl<T> BufferPair<T> {
    pub fn get(&self, b: Buffer) -> &T {
        match b {
            Buffer::Gb => &self.gb,
            Buffer::Rf => &self.rf,
        }
    }

    pub fn get_mut(&mut self, b: Buffer) -> &mut T {
        match b {
            Buffer::Gb => &mut self.gb,
            Buffer::Rf => &mut self.rf,
        }
    }
}

/// Refill position of every (kind, buffer) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefreshLocations {
    #[serde(rename = "I")]
    pub input: BufferPair<usize>,
    #[serde(rename = "O")]
    pub output: BufferPair<usize>,
    #[serde(rename = "W")]
    pub weight: BufferPair<usize>,
}

impl RefreshLocations {
    pub fn uniform(gb: usize, rf: usize) -> Self {
        let p = BufferPair { gb, rf };
        Self {
            input: p,
            output: p,
            weight: p,
        }
    }

    /// Every buffer refilled at the top of its own level group.
    pub fn outermost(nest: &LoopNest) -> Self {
        Self::uniform(nest.group(MemLevel::Gb).start, nest.group(MemLevel::Rf).start)
    }

    fn pair(&self, kind: DataKind) -> &BufferPair<usize> {
        match kind {
            DataKind::Input => &self.input,
            DataKind::Output => &self.output,
            DataKind::Weight => &self.weight,
        }
    }

    pub fn get(&self, kind: DataKind, buffer: Buffer) -> usize {
        *self.pair(kind).get(buffer)
    }

    pub fn set(&mut self, kind: DataKind, buffer: Buffer, position: usize) {
        let pair = match kind {
            DataKind::Input => &mut self.input,
            DataKind::Output => &mut self.output,
            DataKind::Weight => &mut self.weight,
        };
        *pair.get_mut(buffer) = position;
    }

    pub fn violations(&self, nest: &LoopNest) -> Vec<Violation> {
        let mut v = Vec::new();
        let n = nest.len();
        let gb_end = nest.group(MemLevel::Gb).end;
        let spatial_end = nest.spatial_end();
        for kind in DataKind::ALL {
            let gb = self.get(kind, Buffer::Gb);
            let rf = self.get(kind, Buffer::Rf);
            let path = |b: &str| format!("refresh.{}.{b}", kind.letter());
            if gb > gb_end {
                v.push(Violation::new(
                    path("GB"),
                    format!("position {gb} lies below the GB loop group (ends at {gb_end})"),
                ));
            }
            if rf > n {
                v.push(Violation::new(
                    path("RF"),
                    format!("position {rf} is past the innermost loop ({n})"),
                ));
            }
            if rf < spatial_end {
                v.push(Violation::new(
                    path("RF"),
                    format!("position {rf} lies above spatial loops (they end at {spatial_end})"),
                ));
            }
            if rf < gb {
                v.push(Violation::new(
                    path("RF"),
                    format!("position {rf} lies above the GB refresh at {gb}"),
                ));
            }
        }
        v
    }
}

/// Same as [`RefreshLocations`] with any entry left unspecified.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialRefresh {
    #[serde(rename = "I", default)]
    pub input: BufferPair<Option<usize>>,
    #[serde(rename = "O", default)]
    pub output: BufferPair<Option<usize>>,
    #[serde(rename = "W", default)]
    pub weight: BufferPair<Option<usize>>,
}

impl PartialRefresh {
    pub fn get(&self, kind: DataKind, buffer: Buffer) -> Option<usize> {
        let pair = match kind {
            DataKind::Input => &self.input,
            DataKind::Output => &self.output,
            DataKind::Weight => &self.weight,
        };
        *pair.get(buffer)
    }

    pub fn set(&mut self, kind: DataKind, buffer: Buffer, position: usize) {
        let pair = match kind {
            DataKind::Input => &mut self.input,
            DataKind::Output => &mut self.output,
            DataKind::Weight => &mut self.weight,
        };
        *pair.get_mut(buffer) = Some(position);
    }

    /// Missing entries default to the top of the buffer's level group.
    pub fn resolve(&self, nest: &LoopNest) -> RefreshLocations {
        let mut loc = RefreshLocations::outermost(nest);
        for kind in DataKind::ALL {
            for b in Buffer::ALL {
                if let Some(p) = self.get(kind, b) {
                    loc.set(kind, b, p);
                }
            }
        }
        loc
    }
}

/// A loop nest with its refresh locations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mapping {
    pub nest: LoopNest,
    pub refresh: RefreshLocations,
}

/// JSON form of a mapping; the layer travels separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingDoc {
    pub levels: Vec<LoopLevel>,
    #[serde(default)]
    pub refresh: PartialRefresh,
}

impl Mapping {
    pub fn new(nest: LoopNest, refresh: RefreshLocations) -> Result<Self> {
        let v = refresh.violations(&nest);
        if !v.is_empty() {
            return Err(Error::Illegal(Violations(v)));
        }
        Ok(Self { nest, refresh })
    }

    pub fn from_doc(doc: &MappingDoc, layer: &LayerShape) -> Result<Self> {
        let nest = LoopNest::new(layer.clone(), doc.levels.clone())?;
        let refresh = doc.refresh.resolve(&nest);
        Self::new(nest, refresh)
    }

    pub fn from_json(text: &str, layer: &LayerShape) -> Result<Self> {
        let doc: MappingDoc = serde_json::from_str(text)?;
        Self::from_doc(&doc, layer)
    }

    pub fn to_doc(&self) -> MappingDoc {
        let mut refresh = PartialRefresh::default();
        for kind in DataKind::ALL {
            for b in Buffer::ALL {
                refresh.set(kind, b, self.refresh.get(kind, b));
            }
        }
        MappingDoc {
            levels: self.nest.levels().to_vec(),
            refresh,
        }
    }
}

/// Refresh count and per-refresh volume of one buffer for one kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshEntry {
    pub n_ref: u64,
    pub v_ref: u64,
}

impl RefreshEntry {
    pub fn traffic(&self) -> Option<u64> {
        self.n_ref.checked_mul(self.v_ref)
    }
}

/// Refresh counts, volumes and sharing derived from a mapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshPlan {
    #[serde(rename = "GB")]
    pub gb: PerKind<RefreshEntry>,
    #[serde(rename = "RF")]
    pub rf: PerKind<RefreshEntry>,
    /// PEs sharing each fetched datum of a kind.
    pub multicast: PerKind<u64>,
    pub n_pe_active: u64,
    /// Innermost-body executions of the padded nest.
    pub padded_macs: u64,
}

impl RefreshPlan {
    pub fn entry(&self, buffer: Buffer, kind: DataKind) -> RefreshEntry {
        match buffer {
            Buffer::Gb => self.gb[kind],
            Buffer::Rf => self.rf[kind],
        }
    }

    pub fn entry_mut(&mut self, buffer: Buffer, kind: DataKind) -> &mut RefreshEntry {
        match buffer {
            Buffer::Gb => &mut self.gb[kind],
            Buffer::Rf => &mut self.rf[kind],
        }
    }
}

/// Tile volume of `kind` for per-dimension tile extents `t`.
pub fn tile_volume(kind: DataKind, t: [u64; 6], stride: u64) -> Option<u64> {
    let [m, c, r, s, e, f] = t;
    match kind {
        DataKind::Weight => m.checked_mul(c)?.checked_mul(r)?.checked_mul(s),
        DataKind::Output => m.checked_mul(e)?.checked_mul(f),
        DataKind::Input => c
            .checked_mul(halo(e, r, stride)?)?
            .checked_mul(halo(f, s, stride)?),
    }
}

/// Derives refresh counts and volumes.
///
/// `n_ref` is the product of the temporal bounds enclosing the location;
/// spatial loops are accounted for by `n_pe_active` rather than by the
/// per-PE refresh count. `v_ref` is the relevant tile below the location,
/// with input rows and columns composed through the halo.
pub fn refresh_plan(
    nest: &LoopNest,
    refresh: &RefreshLocations,
    options: &ModelOptions,
) -> Result<RefreshPlan> {
    let stride = if options.assume_stride_one {
        1
    } else {
        nest.layer().stride
    };
    let levels = nest.levels();
    let entry = |pos: usize, kind: DataKind| -> Result<RefreshEntry> {
        let n_ref = checked_product(
            levels[..pos].iter().filter(|l| !l.spatial).map(|l| l.bound),
            "n_ref",
        )?;
        let mut tile = [1u64; 6];
        for l in &levels[pos..] {
            let t = &mut tile[l.dim.index()];
            *t = t.checked_mul(l.bound).ok_or_else(|| Error::overflow("v_ref"))?;
        }
        let v_ref = tile_volume(kind, tile, stride).ok_or_else(|| Error::overflow("v_ref"))?;
        Ok(RefreshEntry { n_ref, v_ref })
    };
    let mut gb = PerKind::<RefreshEntry>::default();
    let mut rf = PerKind::<RefreshEntry>::default();
    for kind in DataKind::ALL {
        gb[kind] = entry(refresh.get(kind, Buffer::Gb), kind)?;
        rf[kind] = entry(refresh.get(kind, Buffer::Rf), kind)?;
    }
    let multicast = PerKind::from_fn(|kind| {
        levels
            .iter()
            .filter(|l| l.spatial && !kind.depends_on(l.dim))
            .map(|l| l.bound)
            .product()
    });
    Ok(RefreshPlan {
        gb,
        rf,
        multicast,
        n_pe_active: nest.active_pes(),
        padded_macs: mac_count(&nest.padded_layer())?,
    })
}

fn capacity_violations(
    level: &str,
    cap: Capacity,
    demand: PerKind<u64>,
    out: &mut Vec<Violation>,
) {
    match cap {
        Capacity::Shared { shared_bits } => {
            let total: u64 = DataKind::ALL
                .iter()
                .fold(0u64, |a, k| a.saturating_add(demand[*k]));
            if total > shared_bits {
                out.push(Violation::new(
                    format!("capacity.{level}.shared_bits"),
                    format!("tiles need {total} bits but only {shared_bits} are available"),
                ));
            }
        }
        Capacity::Partitioned(bits) => {
            for kind in DataKind::ALL {
                let have = bits.get(kind);
                if demand[kind] > have {
                    out.push(Violation::new(
                        format!("capacity.{level}.{kind}_bits"),
                        format!(
                            "{kind} tile needs {} bits but only {have} are available",
                            demand[kind]
                        ),
                    ));
                }
            }
        }
    }
}

/// Checks a mapping against the hardware: PE count, GB and per-PE RF
/// capacity (scaled by the buffering factor), and refresh placement.
pub fn validate_nest(
    nest: &LoopNest,
    hw: &HardwareConfig,
    refresh: &RefreshLocations,
    options: &ModelOptions,
) -> Result<(), Violations> {
    let mut v = refresh.violations(nest);
    let pes = nest.active_pes();
    if pes > hw.pe_count() {
        v.push(Violation::new(
            "spatial",
            format!(
                "mapping needs {pes} PEs but the array has {}×{} = {}",
                hw.pe_rows,
                hw.pe_cols,
                hw.pe_count()
            ),
        ));
    }
    if !v.is_empty() {
        return Err(Violations(v));
    }
    match refresh_plan(nest, refresh, options) {
        Ok(plan) => {
            let demand = |b: Buffer| {
                PerKind::from_fn(|kind| {
                    plan.entry(b, kind)
                        .v_ref
                        .saturating_mul(u64::from(hw.precision.bits(kind)))
                        .saturating_mul(hw.buffering_factor)
                })
            };
            capacity_violations("GB", hw.capacity.gb, demand(Buffer::Gb), &mut v);
            capacity_violations("RF", hw.capacity.rf, demand(Buffer::Rf), &mut v);
        }
        Err(e) => v.push(Violation::new("plan", e.to_string())),
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Violations(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_hw, tensor_footprint, KindBits};

    fn lp(dim: Dim, bound: u64, mem: MemLevel) -> LoopLevel {
        LoopLevel::temporal(dim, bound, mem)
    }

    fn m4c2() -> LoopNest {
        let layer = LayerShape::conv("m4c2", 4, 2, 1, 1, 1, 1, 1);
        LoopNest::new(
            layer,
            vec![
                lp(Dim::M, 2, MemLevel::Dram),
                lp(Dim::C, 2, MemLevel::Gb),
                lp(Dim::M, 2, MemLevel::Rf),
            ],
        )
        .unwrap()
    }

    fn tiling_with(level: MemLevel, factors: [u64; 6]) -> Tiling {
        let mut t = PerLevel::from_fn(|_| [1u64; 6]);
        t[level] = factors;
        t
    }

    #[test]
    fn build_all_in_rf() {
        let layer = LayerShape::conv("l", 2, 3, 1, 1, 4, 5, 1);
        let t = tiling_with(MemLevel::Rf, layer.dims());
        let nest = build_nest(&layer, &t, &canonical_ordering(), BuildOptions::default()).unwrap();
        assert!(nest.levels().iter().all(|l| l.mem == MemLevel::Rf));
        assert_eq!(nest.len(), 4);
        assert_eq!(nest.group(MemLevel::Rf), 0..4);
    }

    #[test]
    fn build_two_per_dim_at_dram() {
        let layer = LayerShape::conv("l", 2, 2, 2, 2, 2, 2, 1);
        let t = tiling_with(MemLevel::Dram, [2; 6]);
        let nest = build_nest(&layer, &t, &canonical_ordering(), BuildOptions::default()).unwrap();
        assert_eq!(nest.len(), 6);
        assert!(nest
            .levels()
            .iter()
            .all(|l| l.mem == MemLevel::Dram && l.bound == 2));
        let kept = build_nest(
            &layer,
            &t,
            &canonical_ordering(),
            BuildOptions {
                keep_unit_loops: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(kept.len(), 24);
    }

    #[test]
    fn build_split_m_without_padding() {
        let layer = LayerShape::conv("l", 6, 1, 1, 1, 1, 1, 1);
        let mut t = PerLevel::from_fn(|_| [1u64; 6]);
        t.dram[0] = 2;
        t.gb[0] = 3;
        let nest = build_nest(&layer, &t, &canonical_ordering(), BuildOptions::default()).unwrap();
        assert_eq!(nest.padded_dims()[0], 6);
        assert_eq!(nest.iterations(), 6);
    }

    #[test]
    fn build_rejects_short_tiling_unless_padding() {
        let layer = LayerShape::conv("l", 5, 1, 1, 1, 1, 1, 1);
        let mut t = PerLevel::from_fn(|_| [1u64; 6]);
        t.gb[0] = 2;
        let err = build_nest(&layer, &t, &canonical_ordering(), BuildOptions::default());
        assert!(matches!(err, Err(Error::Illegal(_))));
        let padded = build_nest(
            &layer,
            &t,
            &canonical_ordering(),
            BuildOptions {
                pad: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(padded.padded_dims()[0], 6);
        assert_eq!(padded.levels()[0].bound, 3);
    }

    #[test]
    fn build_rejects_bad_ordering() {
        let layer = LayerShape::conv("l", 1, 1, 1, 1, 1, 1, 1);
        let mut ord = canonical_ordering();
        ord.gb = vec![Dim::M, Dim::M, Dim::R, Dim::S, Dim::E, Dim::F];
        let t = PerLevel::from_fn(|_| [1u64; 6]);
        match build_nest(&layer, &t, &ord, BuildOptions::default()) {
            Err(Error::Illegal(v)) => assert!(v.mentions("ordering.GB")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nest_rejects_non_minimal_padding() {
        let layer = LayerShape::conv("l", 5, 1, 1, 1, 1, 1, 1);
        let err = LoopNest::new(
            layer.clone(),
            vec![lp(Dim::M, 2, MemLevel::Gb), lp(Dim::M, 4, MemLevel::Rf)],
        );
        assert!(matches!(err, Err(Error::Illegal(_))));
        LoopNest::new(
            layer,
            vec![lp(Dim::M, 3, MemLevel::Gb), lp(Dim::M, 2, MemLevel::Rf)],
        )
        .unwrap();
    }

    #[test]
    fn nest_rejects_bad_grouping_and_spatial() {
        let layer = LayerShape::conv("l", 2, 2, 1, 1, 1, 1, 1);
        let err = LoopNest::new(
            layer.clone(),
            vec![lp(Dim::M, 2, MemLevel::Rf), lp(Dim::C, 2, MemLevel::Dram)],
        );
        assert!(matches!(err, Err(Error::Illegal(_))));
        let err = LoopNest::new(
            layer.clone(),
            vec![LoopLevel {
                dim: Dim::M,
                bound: 2,
                mem: MemLevel::Gb,
                spatial: true,
            }, lp(Dim::C, 2, MemLevel::Rf)],
        );
        assert!(matches!(err, Err(Error::Illegal(_))));
        let err = LoopNest::new(
            layer,
            vec![
                LoopLevel::spatial(Dim::M, 2),
                lp(Dim::C, 1, MemLevel::Noc),
                LoopLevel::spatial(Dim::C, 2),
            ],
        );
        assert!(matches!(err, Err(Error::Illegal(_))));
    }

    #[test]
    fn groups_of_m4c2() {
        let nest = m4c2();
        assert_eq!(nest.group(MemLevel::Dram), 0..1);
        assert_eq!(nest.group(MemLevel::Gb), 1..2);
        assert_eq!(nest.group(MemLevel::Noc), 2..2);
        assert_eq!(nest.group(MemLevel::Rf), 2..3);
        assert_eq!(RefreshLocations::outermost(&nest), RefreshLocations::uniform(1, 2));
    }

    #[test]
    fn plan_weight_refresh_below_dram_loop() {
        // Iterations (m_outer, c, m_inner): the weight block (c, m_inner)
        // is reloaded once per m_outer value, i.e. twice, 4 elements each.
        let nest = m4c2();
        let mut loc = RefreshLocations::outermost(&nest);
        loc.set(DataKind::Weight, Buffer::Gb, 1);
        let plan = refresh_plan(&nest, &loc, &ModelOptions::default()).unwrap();
        assert_eq!(plan.gb.weight, RefreshEntry { n_ref: 2, v_ref: 4 });
        assert_eq!(plan.padded_macs, 8);
    }

    #[test]
    fn plan_outermost_and_innermost_extremes() {
        let nest = m4c2();
        let layer = nest.layer().clone();
        let top = RefreshLocations::uniform(0, 0);
        let plan = refresh_plan(&nest, &top, &ModelOptions::default()).unwrap();
        for kind in DataKind::ALL {
            assert_eq!(plan.gb[kind].n_ref, 1);
            assert_eq!(plan.gb[kind].v_ref, tensor_footprint(&layer, kind).unwrap());
        }
        let n = nest.len();
        let bottom = RefreshLocations::uniform(n, n);
        let plan = refresh_plan(&nest, &bottom, &ModelOptions::default()).unwrap();
        for kind in DataKind::ALL {
            assert_eq!(plan.rf[kind], RefreshEntry { n_ref: 8, v_ref: 1 });
        }
    }

    #[test]
    fn plan_multicast_and_pe_count() {
        let layer = LayerShape::conv("l", 4, 2, 1, 1, 3, 1, 1);
        let nest = LoopNest::new(
            layer,
            vec![
                lp(Dim::C, 2, MemLevel::Gb),
                LoopLevel::spatial(Dim::M, 4),
                LoopLevel::spatial(Dim::E, 3),
            ],
        )
        .unwrap();
        let loc = RefreshLocations::outermost(&nest);
        let plan = refresh_plan(&nest, &loc, &ModelOptions::default()).unwrap();
        assert_eq!(plan.n_pe_active, 12);
        assert_eq!(plan.multicast.weight, 3);
        assert_eq!(plan.multicast.output, 1);
        assert_eq!(plan.multicast.input, 4);
        // RF refresh sits below the spatial loops: only the temporal c loop counts.
        assert_eq!(plan.rf.weight.n_ref, 2);
    }

    #[test]
    fn halo_in_input_tiles() {
        let layer = LayerShape::conv("l", 1, 1, 3, 1, 4, 1, 2);
        let nest = LoopNest::new(
            layer,
            vec![lp(Dim::E, 4, MemLevel::Gb), lp(Dim::R, 3, MemLevel::Rf)],
        )
        .unwrap();
        let loc = RefreshLocations::uniform(0, 1);
        let exact = refresh_plan(&nest, &loc, &ModelOptions::default()).unwrap();
        assert_eq!(exact.gb.input.v_ref, 3 * 2 + 3);
        assert_eq!(exact.rf.input, RefreshEntry { n_ref: 4, v_ref: 3 });
        let one = ModelOptions {
            assume_stride_one: true,
            ..Default::default()
        };
        let approx = refresh_plan(&nest, &loc, &one).unwrap();
        assert_eq!(approx.gb.input.v_ref, 3 + 3);
    }

    #[test]
    fn refresh_violations_named() {
        let nest = m4c2();
        let mut loc = RefreshLocations::outermost(&nest);
        loc.set(DataKind::Input, Buffer::Gb, 3);
        loc.set(DataKind::Output, Buffer::Rf, 0);
        let v = loc.violations(&nest);
        assert!(v.iter().any(|x| x.path == "refresh.I.GB"));
        assert!(v.iter().any(|x| x.path == "refresh.O.RF"));
    }

    #[test]
    fn validate_spatial_capacity() {
        let layer = LayerShape::conv("l", 17, 1, 1, 1, 1, 1, 1);
        let nest = LoopNest::new(layer, vec![LoopLevel::spatial(Dim::M, 17)]).unwrap();
        let loc = RefreshLocations::outermost(&nest);
        let hw = sample_hw();
        let err = validate_nest(&nest, &hw, &loc, &ModelOptions::default()).unwrap_err();
        assert!(err.mentions("spatial"));
    }

    #[test]
    fn validate_rf_capacity_boundary() {
        // 512 weights * 16 bits * double buffering = 16384 bits; 256 weights = 8192 bits.
        let mut hw = sample_hw();
        hw.buffering_factor = 2;
        hw.capacity.rf = Capacity::Partitioned(KindBits {
            input_bits: 8192,
            output_bits: 8192,
            weight_bits: 8192,
        });
        let build = |m: u64| {
            let layer = LayerShape::conv("l", m, 1, 1, 1, 1, 1, 1);
            LoopNest::new(layer, vec![lp(Dim::M, m, MemLevel::Rf)]).unwrap()
        };
        let loc_for = |nest: &LoopNest| {
            let mut loc = RefreshLocations::outermost(nest);
            // stream inputs and outputs, keep weights resident
            loc.set(DataKind::Input, Buffer::Rf, 1);
            loc.set(DataKind::Output, Buffer::Rf, 1);
            loc
        };
        let big = build(512);
        let err = validate_nest(&big, &hw, &loc_for(&big), &ModelOptions::default()).unwrap_err();
        assert!(err.mentions("capacity.RF.weight_bits"));
        let fits = build(256);
        validate_nest(&fits, &hw, &loc_for(&fits), &ModelOptions::default()).unwrap();
    }

    #[test]
    fn validate_trivial_nest_on_any_hardware() {
        let layer = LayerShape::conv("l", 1, 1, 1, 1, 1, 1, 1);
        let nest = LoopNest::new(layer, vec![]).unwrap();
        let loc = RefreshLocations::outermost(&nest);
        let mut hw = sample_hw();
        hw.pe_rows = 1;
        hw.pe_cols = 1;
        hw.capacity.rf = Capacity::Shared { shared_bits: 48 };
        hw.capacity.gb = Capacity::Shared { shared_bits: 48 };
        validate_nest(&nest, &hw, &loc, &ModelOptions::default()).unwrap();
    }

    #[test]
    fn mapping_json_round_trip() {
        let nest = m4c2();
        let mapping = Mapping::new(nest.clone(), RefreshLocations::outermost(&nest)).unwrap();
        let text = serde_json::to_string(&mapping.to_doc()).unwrap();
        let back = Mapping::from_json(&text, nest.layer()).unwrap();
        assert_eq!(back, mapping);
        let sparse = r#"{"levels":[{"dim":"m","bound":4,"mem":"RF"},{"dim":"c","bound":2,"mem":"RF"}],
                        "refresh":{"W":{"RF":1}}}"#;
        let m = Mapping::from_json(sparse, nest.layer()).unwrap();
        assert_eq!(m.refresh.get(DataKind::Weight, Buffer::Rf), 1);
        assert_eq!(m.refresh.get(DataKind::Input, Buffer::Rf), 0);
    }
}
