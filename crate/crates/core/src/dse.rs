//! Design-space exploration over tilings, loop orders and refresh presets.

use std::cmp::Ordering as CmpOrdering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::print_mapping;
use crate::error::{Error, Result};
use crate::loopnest::{
    build_nest, canonical_ordering, refresh_plan, validate_nest, BuildOptions, Mapping, Ordering,
    Tiling,
};
use crate::model::{Dim, HardwareConfig, LayerShape, MemLevel, ModelOptions, PerLevel};
use crate::predictor::{access_counts, energy, latency, predict_layer, EnergyReport, LatencyReport, PredictionReport};
use crate::presets::RefreshPreset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Energy,
    Latency,
    /// Energy × latency.
    Edp,
}

impl Objective {
    pub fn value(self, energy: &EnergyReport, latency: &LatencyReport) -> f64 {
        match self {
            Objective::Energy => energy.total_eu,
            Objective::Latency => latency.l_total_s,
            Objective::Edp => energy.total_eu * latency.l_total_s,
        }
    }

    pub fn of(self, report: &PredictionReport) -> f64 {
        self.value(&report.energy, &report.latency)
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(Objective::Energy),
            "latency" => Ok(Objective::Latency),
            "edp" => Ok(Objective::Edp),
            _ => Err(format!("unknown objective `{s}` (expected energy, latency or edp)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    Exhaustive,
    Random { seed: u64, samples: usize },
    Beam { width: usize },
}

/// Spatial dims laid out along array rows and columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: Vec<Dim>,
    pub cols: Vec<Dim>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    /// Levels that may hold loops.
    pub levels: Vec<MemLevel>,
    /// Candidate loop orders per level; each must list all six dims.
    pub orderings: PerLevel<Vec<Vec<Dim>>>,
    /// Levels each dim may be tiled at, indexed by `Dim::index()`.
    pub allowed: [Vec<MemLevel>; 6],
    pub geometry: Option<Geometry>,
    pub refresh: Vec<RefreshPreset>,
    /// Also consider factors that over-cover a dim (minimal padding only).
    pub allow_nondivisor: bool,
    pub exhaustive_cap: u64,
    pub top_k: usize,
}

impl SearchSpace {
    /// Canonical loop order, every dim free at every given level, outermost refresh.
    pub fn new(levels: &[MemLevel]) -> Self {
        Self {
            levels: levels.to_vec(),
            orderings: PerLevel::from_fn(|_| vec![Dim::ALL.to_vec()]),
            allowed: std::array::from_fn(|_| levels.to_vec()),
            geometry: None,
            refresh: vec![RefreshPreset::Outermost],
            allow_nondivisor: false,
            exhaustive_cap: 1_000_000,
            top_k: 10,
        }
    }

    fn participates(&self, dim: Dim, mem: MemLevel) -> bool {
        self.levels.contains(&mem) && self.allowed[dim.index()].contains(&mem)
    }
}

/// `prefix` followed by the remaining dims in canonical order.
pub fn order_with_prefix(prefix: &[Dim]) -> Vec<Dim> {
    let mut v = prefix.to_vec();
    v.extend(Dim::ALL.iter().filter(|d| !prefix.contains(d)));
    v
}

fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

/// Ordered factorizations of `n` over `slots` places.
fn factorizations(n: u64, slots: usize) -> Vec<Vec<u64>> {
    if slots == 0 {
        return if n == 1 { vec![vec![]] } else { vec![] };
    }
    if slots == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for d in divisors(n) {
        for mut rest in factorizations(n / d, slots - 1) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out
}

/// Factor lists over `slots` places whose product covers `n` with minimal padding.
fn covering_factorizations(n: u64, slots: usize) -> Vec<Vec<u64>> {
    fn go(n: u64, slots: usize, acc: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        let product: u64 = acc.iter().product();
        if acc.len() + 1 == slots {
            acc.push(n.div_ceil(product));
            if minimal(acc, n) {
                out.push(acc.clone());
            }
            acc.pop();
            return;
        }
        for f in 1..=n.div_ceil(product) {
            acc.push(f);
            go(n, slots, acc, out);
            acc.pop();
        }
    }
    fn minimal(f: &[u64], n: u64) -> bool {
        let p: u64 = f.iter().product();
        p >= n && f.iter().filter(|&&b| b > 1).all(|&b| p / b * (b - 1) < n)
    }
    if slots == 0 {
        return if n == 1 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    go(n, slots, &mut Vec::new(), &mut out);
    out.sort();
    out.dedup();
    out
}

/// Random-access view of every candidate in a search space.
pub struct Enumeration<'a> {
    layer: &'a LayerShape,
    space: &'a SearchSpace,
    /// Per dim: factor per level in `MemLevel::ALL` order.
    tilings: [Vec<[u64; 4]>; 6],
    ordering_levels: Vec<MemLevel>,
    radices: Vec<u64>,
    len: u64,
}

/// Mixed-radix choice of one candidate: six tiling indices, one ordering
/// index per participating level, one refresh preset.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Choice(Vec<u64>);

fn level_slot(mem: MemLevel) -> usize {
    MemLevel::ALL.iter().position(|m| *m == mem).unwrap_or(0)
}

impl<'a> Enumeration<'a> {
    pub fn new(layer: &'a LayerShape, space: &'a SearchSpace) -> Result<Self> {
        layer.validate()?;
        let tilings = std::array::from_fn(|i| {
            let d = Dim::ALL[i];
            let slots: Vec<MemLevel> = MemLevel::ALL
                .into_iter()
                .filter(|m| space.participates(d, *m))
                .collect();
            let n = layer.dim(d);
            let lists = if space.allow_nondivisor {
                covering_factorizations(n, slots.len())
            } else {
                factorizations(n, slots.len())
            };
            lists
                .into_iter()
                .map(|f| {
                    let mut t = [1u64; 4];
                    for (mem, v) in slots.iter().zip(f) {
                        t[level_slot(*mem)] = v;
                    }
                    t
                })
                .collect::<Vec<_>>()
        });
        let ordering_levels: Vec<MemLevel> = MemLevel::ALL
            .into_iter()
            .filter(|m| space.levels.contains(m))
            .collect();
        let mut radices: Vec<u64> = tilings.iter().map(|t: &Vec<[u64; 4]>| t.len() as u64).collect();
        for &m in &ordering_levels {
            radices.push(space.orderings[m].len().max(1) as u64);
        }
        radices.push(space.refresh.len() as u64);
        let len = radices
            .iter()
            .try_fold(1u64, |a, r| a.checked_mul(*r))
            .ok_or_else(|| Error::overflow("search space size"))?;
        Ok(Self {
            layer,
            space,
            tilings,
            ordering_levels,
            radices,
            len,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn decode(&self, mut index: u64) -> Choice {
        let mut digits = vec![0; self.radices.len()];
        for (slot, r) in digits.iter_mut().zip(&self.radices).rev() {
            *slot = index % r;
            index /= r;
        }
        Choice(digits)
    }

    fn encode(&self, choice: &Choice) -> u64 {
        choice
            .0
            .iter()
            .zip(&self.radices)
            .fold(0, |acc, (d, r)| acc * r + d)
    }

    fn tiling(&self, choice: &Choice) -> Tiling {
        let mut t: Tiling = PerLevel::from_fn(|_| [1u64; 6]);
        for (i, list) in self.tilings.iter().enumerate() {
            let f = list[choice.0[i] as usize];
            for (slot, mem) in MemLevel::ALL.into_iter().enumerate() {
                t[mem][i] = f[slot];
            }
        }
        t
    }

    fn ordering(&self, choice: &Choice) -> Ordering {
        let mut o = canonical_ordering();
        for (k, &m) in self.ordering_levels.iter().enumerate() {
            if let Some(order) = self.space.orderings[m].get(choice.0[6 + k] as usize) {
                o[m] = order.clone();
            }
        }
        o
    }

    fn preset(&self, choice: &Choice) -> RefreshPreset {
        self.space.refresh[*choice.0.last().unwrap_or(&0) as usize]
    }

    fn mapping_of(&self, choice: &Choice) -> Result<Mapping> {
        let nest = build_nest(
            self.layer,
            &self.tiling(choice),
            &self.ordering(choice),
            BuildOptions {
                pad: false,
                keep_unit_loops: true,
            },
        )?;
        let refresh = self.preset(choice).apply(&nest);
        Mapping::new(nest, refresh)
    }

    /// The candidate at `index` (mixed radix over tilings, orderings, presets).
    pub fn get(&self, index: u64) -> Result<Mapping> {
        self.mapping_of(&self.decode(index))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Mapping>> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Geometry and PE-count check straight from the NoC factors.
    fn fits_array(&self, choice: &Choice, hw: &HardwareConfig) -> bool {
        let noc = |d: Dim| self.tilings[d.index()][choice.0[d.index()] as usize][level_slot(MemLevel::Noc)];
        let total: u64 = Dim::ALL.iter().map(|&d| noc(d)).product();
        if total > hw.pe_count() {
            return false;
        }
        match &self.space.geometry {
            Some(g) => {
                g.rows.iter().map(|&d| noc(d)).product::<u64>() <= hw.pe_rows
                    && g.cols.iter().map(|&d| noc(d)).product::<u64>() <= hw.pe_cols
            }
            None => true,
        }
    }
}

/// Candidate count of a space, plus each candidate in index order.
pub fn enumerate<'a>(layer: &'a LayerShape, space: &'a SearchSpace) -> Result<Enumeration<'a>> {
    Enumeration::new(layer, space)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub enumerated: u64,
    pub pruned_by_capacity: u64,
    pub evaluated: u64,
}

impl SearchStats {
    fn merge(self, o: SearchStats) -> SearchStats {
        SearchStats {
            enumerated: self.enumerated + o.enumerated,
            pruned_by_capacity: self.pruned_by_capacity + o.pruned_by_capacity,
            evaluated: self.evaluated + o.evaluated,
        }
    }
}

impl fmt::Display for SearchStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} candidates enumerated, {} pruned by capacity, {} evaluated",
            self.enumerated, self.pruned_by_capacity, self.evaluated
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ranked {
    pub objective: f64,
    pub dsl: String,
    #[serde(skip)]
    pub mapping: Mapping,
    pub report: PredictionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    pub objective: Objective,
    pub strategy: Strategy,
    pub stats: SearchStats,
    pub space_size: u64,
    pub ranked: Vec<Ranked>,
}

impl SearchResult {
    pub fn best(&self) -> &Ranked {
        &self.ranked[0]
    }
}

/// Objective of a mapping, or `None` when the hardware cannot hold it.
fn score(
    enumeration: &Enumeration,
    choice: &Choice,
    hw: &HardwareConfig,
    options: &ModelOptions,
    objective: Objective,
) -> Result<Option<(f64, Mapping)>> {
    if !enumeration.fits_array(choice, hw) {
        return Ok(None);
    }
    let mapping = enumeration.mapping_of(choice)?;
    if validate_nest(&mapping.nest, hw, &mapping.refresh, options).is_err() {
        return Ok(None);
    }
    let plan = refresh_plan(&mapping.nest, &mapping.refresh, options)?;
    let counts = access_counts(&plan, options)?;
    let e = energy(&plan, &counts, hw);
    let l = latency(&plan, &counts, hw, options)?;
    Ok(Some((objective.value(&e, &l), mapping)))
}

struct Entry {
    objective: f64,
    dsl: String,
    mapping: Mapping,
}

fn entry_cmp(a: (f64, &str), b: (f64, &str)) -> CmpOrdering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// The `k` best distinct mappings under (objective, canonical text).
struct TopK {
    k: usize,
    entries: Vec<Entry>,
    stats: SearchStats,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            entries: Vec::new(),
            stats: SearchStats::default(),
        }
    }

    fn offer(&mut self, objective: f64, mapping: Mapping) {
        if self.entries.len() >= self.k {
            match self.entries.last() {
                Some(worst) if objective.total_cmp(&worst.objective) == CmpOrdering::Greater => return,
                None => return,
                _ => {}
            }
        }
        self.insert(Entry {
            objective,
            dsl: print_mapping(&mapping),
            mapping,
        });
    }

    fn insert(&mut self, e: Entry) {
        let pos = self
            .entries
            .binary_search_by(|x| entry_cmp((x.objective, &x.dsl), (e.objective, &e.dsl)));
        if let Err(pos) = pos {
            self.entries.insert(pos, e);
            self.entries.truncate(self.k);
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        self.stats = self.stats.merge(other.stats);
        for e in other.entries {
            self.insert(e);
        }
        self
    }
}

fn scan(
    enumeration: &Enumeration,
    indices: &[u64],
    hw: &HardwareConfig,
    options: &ModelOptions,
    objective: Objective,
    k: usize,
) -> Result<TopK> {
    indices
        .par_iter()
        .try_fold(
            || TopK::new(k),
            |mut top, &i| {
                top.stats.enumerated += 1;
                match score(enumeration, &enumeration.decode(i), hw, options, objective)? {
                    Some((v, m)) => {
                        top.stats.evaluated += 1;
                        top.offer(v, m);
                    }
                    None => top.stats.pruned_by_capacity += 1,
                }
                Ok::<_, Error>(top)
            },
        )
        .try_reduce(|| TopK::new(k), |a, b| Ok(a.merge(b)))
}

fn beam(
    enumeration: &Enumeration,
    width: usize,
    hw: &HardwareConfig,
    options: &ModelOptions,
    objective: Objective,
) -> Result<Vec<u64>> {
    let n_digits = enumeration.radices.len();
    // Orderings and refresh presets are fixed first, then one dim's tiling per step.
    let steps: Vec<Vec<usize>> = std::iter::once((6..n_digits).collect())
        .chain((0..6).map(|d| vec![d]))
        .collect();
    // Undecided dims sit whole at their outermost allowed level.
    let default: Vec<u64> = (0..n_digits)
        .map(|i| {
            if i < 6 {
                // Lexicographically largest factor list = whole dim at the outermost slot.
                let list = &enumeration.tilings[i];
                (0..list.len()).max_by_key(|&j| list[j]).unwrap_or(0) as u64
            } else {
                0
            }
        })
        .collect();
    let mut states: Vec<Vec<u64>> = vec![default];
    for step in steps {
        let mut expanded = Vec::new();
        for s in &states {
            let mut combos: Vec<Vec<u64>> = vec![s.clone()];
            for &digit in &step {
                let mut next = Vec::new();
                for c in &combos {
                    for v in 0..enumeration.radices[digit] {
                        let mut c = c.clone();
                        c[digit] = v;
                        next.push(c);
                    }
                }
                combos = next;
            }
            expanded.extend(combos);
        }
        let scored = expanded
            .into_par_iter()
            .map(|c| {
                let choice = Choice(c);
                let v = score(enumeration, &choice, hw, options, objective)?
                    .map_or(f64::INFINITY, |(v, _)| v);
                Ok((v, enumeration.encode(&choice), choice.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut scored = scored;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(width.max(1));
        states = scored.into_iter().map(|(_, _, c)| c).collect();
    }
    Ok(states.iter().map(|c| enumeration.encode(&Choice(c.clone()))).collect())
}

/// Searches `space` for the mappings of `layer` that minimize `objective`.
pub fn explore(
    layer: &LayerShape,
    hw: &HardwareConfig,
    space: &SearchSpace,
    objective: Objective,
    strategy: Strategy,
    options: &ModelOptions,
) -> Result<SearchResult> {
    hw.validate()?;
    let enumeration = enumerate(layer, space)?;
    let len = enumeration.len();
    let indices: Vec<u64> = match strategy {
        Strategy::Exhaustive => {
            if len > space.exhaustive_cap {
                return Err(Error::SpaceTooLarge {
                    size: len,
                    cap: space.exhaustive_cap,
                });
            }
            (0..len).collect()
        }
        Strategy::Random { seed, samples } => {
            if samples as u64 >= len {
                (0..len).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = BTreeSet::new();
                for _ in 0..samples {
                    picked.insert(rng.gen_range(0..len));
                }
                picked.into_iter().collect()
            }
        }
        Strategy::Beam { width } => {
            if len == 0 {
                Vec::new()
            } else {
                beam(&enumeration, width, hw, options, objective)?
            }
        }
    };
    let top = scan(&enumeration, &indices, hw, options, objective, space.top_k.max(1))?;
    if top.entries.is_empty() {
        return Err(Error::NoFeasibleMapping(top.stats));
    }
    let ranked = top
        .entries
        .into_iter()
        .map(|e| {
            let report = predict_layer(&e.mapping, hw, options)?;
            Ok(Ranked {
                objective: e.objective,
                dsl: e.dsl,
                mapping: e.mapping,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchResult {
        objective,
        strategy,
        stats: top.stats,
        space_size: len,
        ranked,
    })
}
