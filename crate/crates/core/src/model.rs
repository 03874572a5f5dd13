//! Domain types shared by every stage: layer shapes, data kinds, memory
//! levels and the hardware description with its unit costs.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result, Violation, Violations};

/// One of the six CONV loop dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    M,
    C,
    R,
    S,
    E,
    F,
}

impl Dim {
    pub const ALL: [Dim; 6] = [Dim::M, Dim::C, Dim::R, Dim::S, Dim::E, Dim::F];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dim::M => "m",
            Dim::C => "c",
            Dim::R => "r",
            Dim::S => "s",
            Dim::E => "e",
            Dim::F => "f",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "m" => Ok(Dim::M),
            "c" => Ok(Dim::C),
            "r" => Ok(Dim::R),
            "s" => Ok(Dim::S),
            "e" => Ok(Dim::E),
            "f" => Ok(Dim::F),
            _ => Err(format!("unknown dimension `{s}`")),
        }
    }
}

/// Tensor class moved through the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Input,
    Output,
    Weight,
}

impl DataKind {
    pub const ALL: [DataKind; 3] = [DataKind::Input, DataKind::Output, DataKind::Weight];

    /// Whether the tile of this kind grows with the given loop dimension.
    pub fn depends_on(self, dim: Dim) -> bool {
        match self {
            DataKind::Weight => matches!(dim, Dim::M | Dim::C | Dim::R | Dim::S),
            DataKind::Output => matches!(dim, Dim::M | Dim::E | Dim::F),
            DataKind::Input => !matches!(dim, Dim::M),
        }
    }

    /// Single-letter tag used by the DSL and the mapping JSON.
    pub fn letter(self) -> &'static str {
        match self {
            DataKind::Input => "I",
            DataKind::Output => "O",
            DataKind::Weight => "W",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" => Some(DataKind::Input),
            "O" => Some(DataKind::Output),
            "W" => Some(DataKind::Weight),
            _ => None,
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataKind::Input => "input",
            DataKind::Output => "output",
            DataKind::Weight => "weight",
        })
    }
}

/// Memory hierarchy level. Ordering follows the numeric index, so
/// `Dram > Gb > Noc > Rf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemLevel {
    #[serde(rename = "RF")]
    Rf = 0,
    #[serde(rename = "NoC")]
    Noc = 1,
    #[serde(rename = "GB")]
    Gb = 2,
    #[serde(rename = "DRAM")]
    Dram = 3,
}

impl MemLevel {
    /// Outermost first.
    pub const ALL: [MemLevel; 4] = [MemLevel::Dram, MemLevel::Gb, MemLevel::Noc, MemLevel::Rf];

    pub fn as_str(self) -> &'static str {
        match self {
            MemLevel::Dram => "DRAM",
            MemLevel::Gb => "GB",
            MemLevel::Noc => "NoC",
            MemLevel::Rf => "RF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DRAM" => Some(MemLevel::Dram),
            "GB" => Some(MemLevel::Gb),
            "NOC" => Some(MemLevel::Noc),
            "RF" => Some(MemLevel::Rf),
            _ => None,
        }
    }
}

impl fmt::Display for MemLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per data kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerKind<T> {
    pub input: T,
    pub output: T,
    pub weight: T,
}

impl<T> PerKind<T> {
    pub fn from_fn(mut f: impl FnMut(DataKind) -> T) -> Self {
        Self {
            input: f(DataKind::Input),
            output: f(DataKind::Output),
            weight: f(DataKind::Weight),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerKind<U> {
        PerKind {
            input: f(&self.input),
            output: f(&self.output),
            weight: f(&self.weight),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DataKind, &T)> {
        [
            (DataKind::Input, &self.input),
            (DataKind::Output, &self.output),
            (DataKind::Weight, &self.weight),
        ]
        .into_iter()
    }
}

impl<T: Clone> PerKind<T> {
    pub fn splat(v: T) -> Self {
        Self {
            input: v.clone(),
            output: v.clone(),
            weight: v,
        }
    }
}

impl<T> Index<DataKind> for PerKind<T> {
    type Output = T;

    fn index(&self, kind: DataKind) -> &T {
        match kind {
            DataKind::Input => &self.input,
            DataKind::Output => &self.output,
            DataKind::Weight => &self.weight,
        }
    }
}

impl<T> IndexMut<DataKind> for PerKind<T> {
    fn index_mut(&mut self, kind: DataKind) -> &mut T {
        match kind {
            DataKind::Input => &mut self.input,
            DataKind::Output => &mut self.output,
            DataKind::Weight => &mut self.weight,
        }
    }
}

/// One value per memory level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerLevel<T> {
    #[serde(rename = "DRAM")]
    pub dram: T,
    #[serde(rename = "GB")]
    pub gb: T,
    #[serde(rename = "NoC")]
    pub noc: T,
    #[serde(rename = "RF")]
    pub rf: T,
}

impl<T> PerLevel<T> {
    pub fn from_fn(mut f: impl FnMut(MemLevel) -> T) -> Self {
        Self {
            dram: f(MemLevel::Dram),
            gb: f(MemLevel::Gb),
            noc: f(MemLevel::Noc),
            rf: f(MemLevel::Rf),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (MemLevel, &T)> {
        [
            (MemLevel::Dram, &self.dram),
            (MemLevel::Gb, &self.gb),
            (MemLevel::Noc, &self.noc),
            (MemLevel::Rf, &self.rf),
        ]
        .into_iter()
    }
}

impl<T> Index<MemLevel> for PerLevel<T> {
    type Output = T;

    fn index(&self, level: MemLevel) -> &T {
        match level {
            MemLevel::Dram => &self.dram,
            MemLevel::Gb => &self.gb,
            MemLevel::Noc => &self.noc,
            MemLevel::Rf => &self.rf,
        }
    }
}

impl<T> IndexMut<MemLevel> for PerLevel<T> {
    fn index_mut(&mut self, level: MemLevel) -> &mut T {
        match level {
            MemLevel::Dram => &mut self.dram,
            MemLevel::Gb => &mut self.gb,
            MemLevel::Noc => &mut self.noc,
            MemLevel::Rf => &mut self.rf,
        }
    }
}

fn default_stride() -> u64 {
    1
}

/// A CONV (or fully-connected, with `r = s = e = f = 1`) layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    #[serde(default)]
    pub name: String,
    pub m: u64,
    pub c: u64,
    pub r: u64,
    pub s: u64,
    pub e: u64,
    pub f: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
}

impl LayerShape {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(name: &str, m: u64, c: u64, r: u64, s: u64, e: u64, f: u64, stride: u64) -> Self {
        Self {
            name: name.to_string(),
            m,
            c,
            r,
            s,
            e,
            f,
            stride,
        }
    }

    pub fn fully_connected(name: &str, outputs: u64, inputs: u64) -> Self {
        Self::conv(name, outputs, inputs, 1, 1, 1, 1, 1)
    }

    pub fn dim(&self, d: Dim) -> u64 {
        match d {
            Dim::M => self.m,
            Dim::C => self.c,
            Dim::R => self.r,
            Dim::S => self.s,
            Dim::E => self.e,
            Dim::F => self.f,
        }
    }

    pub fn dims(&self) -> [u64; 6] {
        Dim::ALL.map(|d| self.dim(d))
    }

    pub fn with_dims(&self, dims: [u64; 6]) -> Self {
        let [m, c, r, s, e, f] = dims;
        Self {
            name: self.name.clone(),
            m,
            c,
            r,
            s,
            e,
            f,
            stride: self.stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        for d in Dim::ALL {
            if self.dim(d) < 1 {
                v.push(Violation::new(d.as_str(), "must be ≥ 1"));
            }
        }
        if self.stride < 1 {
            v.push(Violation::new("stride", "must be ≥ 1"));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidLayer(Violations(v)))
        }
    }
}

pub(crate) fn checked_product(values: impl IntoIterator<Item = u64>, what: &str) -> Result<u64> {
    values
        .into_iter()
        .try_fold(1u64, |acc, v| acc.checked_mul(v))
        .filter(|p| *p <= i64::MAX as u64)
        .ok_or_else(|| Error::overflow(what))
}

/// `M·C·R·S·E·F`, overflow-checked against `2^63 − 1`.
pub fn mac_count(layer: &LayerShape) -> Result<u64> {
    checked_product(layer.dims(), "mac_count")
}

/// Input extent along one spatial axis for an output extent `out` and
/// kernel extent `kernel`.
pub fn halo(out: u64, kernel: u64, stride: u64) -> Option<u64> {
    out.checked_sub(1)?
        .checked_mul(stride)?
        .checked_add(kernel)
}

/// Element count of a whole tensor of the given kind.
pub fn tensor_footprint(layer: &LayerShape, kind: DataKind) -> Result<u64> {
    let what = "tensor_footprint";
    match kind {
        DataKind::Weight => checked_product([layer.m, layer.c, layer.r, layer.s], what),
        DataKind::Output => checked_product([layer.m, layer.e, layer.f], what),
        DataKind::Input => {
            let h = halo(layer.e, layer.r, layer.stride).ok_or_else(|| Error::overflow(what))?;
            let w = halo(layer.f, layer.s, layer.stride).ok_or_else(|| Error::overflow(what))?;
            checked_product([layer.c, h, w], what)
        }
    }
}

/// Bits per element for each tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub bits_input: u32,
    pub bits_output: u32,
    pub bits_weight: u32,
}

impl Precision {
    pub fn uniform(bits: u32) -> Self {
        Self {
            bits_input: bits,
            bits_output: bits,
            bits_weight: bits,
        }
    }

    pub fn bits(&self, kind: DataKind) -> u32 {
        match kind {
            DataKind::Input => self.bits_input,
            DataKind::Output => self.bits_output,
            DataKind::Weight => self.bits_weight,
        }
    }
}

/// Technology-dependent unit costs. Energies share one arbitrary unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub e_mac: f64,
    /// Energy per element access, by memory level and data kind.
    pub e_access: PerLevel<PerKind<f64>>,
    /// Seconds per MAC on one PE; defaults to `1 / clock_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_comp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_hz: Option<f64>,
}

impl UnitCosts {
    /// Resolved time per MAC, if one can be derived.
    pub fn t_comp(&self) -> Option<f64> {
        self.t_comp
            .or_else(|| self.clock_hz.filter(|hz| *hz > 0.0).map(|hz| 1.0 / hz))
    }

    /// Every energy multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            e_mac: self.e_mac * alpha,
            e_access: PerLevel::from_fn(|l| self.e_access[l].map(|e| e * alpha)),
            ..self.clone()
        }
    }
}

/// Link bandwidth in bits per second, or no limit at all.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    BitsPerSecond(f64),
    Unbounded,
}

impl Bandwidth {
    /// Seconds needed to move `bits`.
    pub fn transfer_time(self, bits: f64) -> f64 {
        match self {
            Bandwidth::BitsPerSecond(bw) => bits / bw,
            Bandwidth::Unbounded => 0.0,
        }
    }

    pub fn min(self, other: Bandwidth) -> Bandwidth {
        match (self, other) {
            (Bandwidth::Unbounded, b) | (b, Bandwidth::Unbounded) => b,
            (Bandwidth::BitsPerSecond(a), Bandwidth::BitsPerSecond(b)) => {
                Bandwidth::BitsPerSecond(a.min(b))
            }
        }
    }

    pub fn scaled(self, factor: f64) -> Bandwidth {
        match self {
            Bandwidth::BitsPerSecond(bw) => Bandwidth::BitsPerSecond(bw * factor),
            Bandwidth::Unbounded => Bandwidth::Unbounded,
        }
    }

    fn is_positive(self) -> bool {
        match self {
            Bandwidth::BitsPerSecond(bw) => bw > 0.0 && !bw.is_nan(),
            Bandwidth::Unbounded => true,
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::BitsPerSecond(bw) => s.serialize_f64(*bw),
            Bandwidth::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(n) => Ok(Bandwidth::BitsPerSecond(n)),
            Raw::Text(t) if t == "unbounded" => Ok(Bandwidth::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number of bits per second or \"unbounded\", found \"{t}\""
            ))),
        }
    }
}

/// Bandwidths of the links used by the latency model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    #[serde(rename = "DRAM")]
    pub dram: Bandwidth,
    #[serde(rename = "GB")]
    pub gb: PerKind<Bandwidth>,
    #[serde(rename = "RF")]
    pub rf: PerKind<Bandwidth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindBits {
    pub input_bits: u64,
    pub output_bits: u64,
    pub weight_bits: u64,
}

impl KindBits {
    pub fn get(&self, kind: DataKind) -> u64 {
        match kind {
            DataKind::Input => self.input_bits,
            DataKind::Output => self.output_bits,
            DataKind::Weight => self.weight_bits,
        }
    }
}

/// Storage of one level, either pooled or partitioned per data kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Capacity {
    Shared { shared_bits: u64 },
    Partitioned(KindBits),
}

/// GB capacity is the whole buffer; RF capacity is per PE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacities {
    #[serde(rename = "GB")]
    pub gb: Capacity,
    #[serde(rename = "RF")]
    pub rf: Capacity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub capacity: Capacities,
    pub bw: Bandwidths,
    pub buffering_factor: u64,
    pub unit_costs: UnitCosts,
    pub precision: Precision,
}

impl HardwareConfig {
    pub fn pe_count(&self) -> u64 {
        self.pe_rows.saturating_mul(self.pe_cols)
    }

    pub fn validate(&self) -> Result<()> {
        validate_hardware(self).map_err(Error::InvalidHardware)
    }
}

/// Every violated hardware invariant, each with its field path.
pub fn validate_hardware(hw: &HardwareConfig) -> Result<(), Violations> {
    let mut v = Vec::new();
    if hw.pe_rows < 1 {
        v.push(Violation::new("pe_rows", "must be ≥ 1"));
    }
    if hw.pe_cols < 1 {
        v.push(Violation::new("pe_cols", "must be ≥ 1"));
    }
    for (name, cap) in [("GB", hw.capacity.gb), ("RF", hw.capacity.rf)] {
        match cap {
            Capacity::Shared { shared_bits } => {
                if shared_bits == 0 {
                    v.push(Violation::new(format!("capacity.{name}.shared_bits"), "must be > 0"));
                }
            }
            Capacity::Partitioned(bits) => {
                for kind in DataKind::ALL {
                    if bits.get(kind) == 0 {
                        v.push(Violation::new(
                            format!("capacity.{name}.{kind}_bits"),
                            "must be > 0",
                        ));
                    }
                }
            }
        }
    }
    if !hw.bw.dram.is_positive() {
        v.push(Violation::new("bw.DRAM", "must be > 0"));
    }
    for (name, per) in [("GB", hw.bw.gb), ("RF", hw.bw.rf)] {
        for (kind, bw) in per.iter() {
            if !bw.is_positive() {
                v.push(Violation::new(format!("bw.{name}.{kind}"), "must be > 0"));
            }
        }
    }
    if !matches!(hw.buffering_factor, 1 | 2) {
        v.push(Violation::new("buffering_factor", "must be 1 or 2"));
    }
    let uc = &hw.unit_costs;
    if !(uc.e_mac >= 0.0 && uc.e_mac.is_finite()) {
        v.push(Violation::new("unit_costs.e_mac", "must be finite and ≥ 0"));
    }
    for (level, per) in uc.e_access.iter() {
        for (kind, e) in per.iter() {
            if !(*e >= 0.0 && e.is_finite()) {
                v.push(Violation::new(
                    format!("unit_costs.e_access.{level}.{kind}"),
                    "must be finite and ≥ 0",
                ));
            }
        }
    }
    if let Some(hz) = uc.clock_hz {
        if !(hz > 0.0 && hz.is_finite()) {
            v.push(Violation::new("unit_costs.clock_hz", "must be finite and > 0"));
        }
    }
    match uc.t_comp {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            v.push(Violation::new("unit_costs.t_comp", "must be finite and > 0"));
        }
        None if uc.clock_hz.is_none() => {
            v.push(Violation::new(
                "unit_costs.t_comp",
                "must be given when clock_hz is absent",
            ));
        }
        _ => {}
    }
    for kind in DataKind::ALL {
        let bits = hw.precision.bits(kind);
        if !(1..=64).contains(&bits) {
            v.push(Violation::new(format!("precision.bits_{kind}"), "must lie in [1, 64]"));
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Violations(v))
    }
}

/// Switches between the literal published model and the corrected forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Compose input tiles with stride 1 regardless of the layer stride.
    #[serde(default)]
    pub assume_stride_one: bool,
    /// Compute latency as `N_MAC · t_comp`, ignoring the PE array.
    #[serde(default)]
    pub literal_eq8: bool,
    /// Divide GB-side latency traffic by the multicast factor.
    #[serde(default)]
    pub gb_latency_multicast_aware: bool,
    /// Multiplier applied to output traffic at a level whose refresh count exceeds one.
    #[serde(default = "default_psum_factor")]
    pub psum_rw_factor: u64,
}

fn default_psum_factor() -> u64 {
    2
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            assume_stride_one: false,
            literal_eq8: false,
            gb_latency_multicast_aware: false,
            psum_rw_factor: default_psum_factor(),
        }
    }
}

#[cfg(test)]
pub(crate) use tests::sample_hw;

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_layer() -> LayerShape {
        LayerShape::conv("unit", 1, 1, 1, 1, 1, 1, 1)
    }

    pub(crate) fn sample_hw() -> HardwareConfig {
        HardwareConfig {
            name: "sample".into(),
            notes: None,
            pe_rows: 4,
            pe_cols: 4,
            capacity: Capacities {
                gb: Capacity::Shared { shared_bits: 1 << 20 },
                rf: Capacity::Shared { shared_bits: 8192 },
            },
            bw: Bandwidths {
                dram: Bandwidth::BitsPerSecond(1e9),
                gb: PerKind::splat(Bandwidth::BitsPerSecond(1e10)),
                rf: PerKind::splat(Bandwidth::BitsPerSecond(1e10)),
            },
            buffering_factor: 1,
            unit_costs: UnitCosts {
                e_mac: 1.0,
                e_access: PerLevel::from_fn(|_| PerKind::splat(1.0)),
                t_comp: None,
                clock_hz: Some(1e9),
            },
            precision: Precision::uniform(16),
        }
    }

    #[test]
    fn mac_count_examples() {
        assert_eq!(mac_count(&unit_layer()).unwrap(), 1);
        let l = LayerShape::conv("two", 2, 2, 2, 2, 2, 2, 1);
        assert_eq!(mac_count(&l).unwrap(), 64);
        let conv1 = LayerShape::conv("conv1", 96, 3, 11, 11, 55, 55, 4);
        // 96 * 3 = 288; 11 * 11 = 121; 55 * 55 = 3025; 288 * 121 = 34848; 34848 * 3025
        assert_eq!(mac_count(&conv1).unwrap(), 34_848 * 3_025);
        assert_eq!(mac_count(&conv1).unwrap(), 105_415_200);
    }

    #[test]
    fn mac_count_overflow() {
        let big = LayerShape::conv("big", 1 << 21, 1 << 21, 1 << 21, 2, 1, 1, 1);
        assert!(matches!(mac_count(&big), Err(Error::Overflow(_))));
        // 2^63 exactly is one past the limit.
        let edge = LayerShape::conv("edge", 1 << 21, 1 << 21, 1 << 21, 1, 1, 1, 1);
        assert!(mac_count(&edge).is_err());
    }

    #[test]
    fn footprint_examples() {
        assert_eq!(tensor_footprint(&unit_layer(), DataKind::Weight).unwrap(), 1);
        let conv1 = LayerShape::conv("conv1", 96, 3, 11, 11, 55, 55, 4);
        assert_eq!(tensor_footprint(&conv1, DataKind::Input).unwrap(), 3 * 227 * 227);
        assert_eq!(tensor_footprint(&conv1, DataKind::Input).unwrap(), 154_587);
        let l = LayerShape::conv("o", 2, 1, 1, 1, 3, 4, 1);
        assert_eq!(tensor_footprint(&l, DataKind::Output).unwrap(), 24);
    }

    #[test]
    fn stride_one_halo_is_e_plus_r_minus_one() {
        for e in 1..10 {
            for r in 1..6 {
                assert_eq!(halo(e, r, 1).unwrap(), e + r - 1);
            }
        }
    }

    #[test]
    fn relevance_sets() {
        let w: Vec<_> = Dim::ALL.into_iter().filter(|d| DataKind::Weight.depends_on(*d)).collect();
        assert_eq!(w, vec![Dim::M, Dim::C, Dim::R, Dim::S]);
        let o: Vec<_> = Dim::ALL.into_iter().filter(|d| DataKind::Output.depends_on(*d)).collect();
        assert_eq!(o, vec![Dim::M, Dim::E, Dim::F]);
        let i: Vec<_> = Dim::ALL.into_iter().filter(|d| DataKind::Input.depends_on(*d)).collect();
        assert_eq!(i, vec![Dim::C, Dim::R, Dim::S, Dim::E, Dim::F]);
    }

    #[test]
    fn mem_level_order() {
        assert!(MemLevel::Dram > MemLevel::Gb);
        assert!(MemLevel::Gb > MemLevel::Noc);
        assert!(MemLevel::Noc > MemLevel::Rf);
        assert_eq!(MemLevel::Dram as u8, 3);
        assert_eq!(MemLevel::Rf as u8, 0);
    }

    #[test]
    fn validate_ok() {
        assert!(validate_hardware(&sample_hw()).is_ok());
    }

    #[test]
    fn validate_reports_each_violation() {
        let mut hw = sample_hw();
        hw.pe_rows = 0;
        let err = validate_hardware(&hw).unwrap_err();
        assert_eq!(err.0[0].to_string(), "pe_rows must be ≥ 1");

        hw.bw.dram = Bandwidth::BitsPerSecond(0.0);
        hw.buffering_factor = 3;
        let err = validate_hardware(&hw).unwrap_err();
        assert_eq!(err.len(), 3);
        assert!(err.mentions("bw.DRAM"));
        assert!(err.mentions("buffering_factor"));
    }

    #[test]
    fn t_comp_defaults_from_clock() {
        let hw = sample_hw();
        assert_eq!(hw.unit_costs.t_comp(), Some(1e-9));
        let mut uc = hw.unit_costs.clone();
        uc.t_comp = Some(2e-9);
        assert_eq!(uc.t_comp(), Some(2e-9));
        let mut bad = hw;
        bad.unit_costs.clock_hz = None;
        assert!(validate_hardware(&bad).unwrap_err().mentions("unit_costs.t_comp"));
    }

    #[test]
    fn bandwidth_json_accepts_unbounded() {
        let b: Bandwidth = serde_json::from_str("\"unbounded\"").unwrap();
        assert_eq!(b, Bandwidth::Unbounded);
        let b: Bandwidth = serde_json::from_str("12.5").unwrap();
        assert_eq!(b, Bandwidth::BitsPerSecond(12.5));
        assert!(serde_json::from_str::<Bandwidth>("\"fast\"").is_err());
    }

    #[test]
    fn hardware_json_round_trip() {
        let hw = sample_hw();
        let text = serde_json::to_string(&hw).unwrap();
        let back: HardwareConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(hw, back);
    }

    #[test]
    fn layer_json_defaults_stride() {
        let l: LayerShape =
            serde_json::from_str(r#"{"m":1,"c":2,"r":3,"s":3,"e":4,"f":4}"#).unwrap();
        assert_eq!(l.stride, 1);
        let bad = LayerShape::conv("z", 0, 1, 1, 1, 1, 1, 0);
        match bad.validate() {
            Err(Error::InvalidLayer(v)) => {
                assert!(v.mentions("m"));
                assert!(v.mentions("stride"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

