//! Brute-force reference: runs every iteration of a nest and watches the
//! refresh windows directly, with no use of the closed-form counts.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loopnest::{refresh_plan, Buffer, BufferPair, Mapping, RefreshPlan};
use crate::model::{DataKind, Dim, MemLevel, ModelOptions, PerKind};
use crate::predictor::{access_counts, AccessCounts};

pub const DEFAULT_ITERATION_CAP: u64 = 100_000_000;

/// Observed refresh behaviour.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounters {
    /// GB: refills of the global buffer. RF: refills seen by one PE.
    pub refreshes: BufferPair<PerKind<u64>>,
    /// Elements moved into the buffer, summed over all refills (and all PEs for RF).
    pub elements_moved: BufferPair<PerKind<u64>>,
    /// Largest tile seen at each location.
    pub tile_volume: BufferPair<PerKind<u64>>,
    /// Distinct RF tiles fetched from the GB, summed as element counts.
    pub gb_reads: PerKind<u64>,
    pub body_iterations: u64,
    /// MACs executed by each PE, row-major over the spatial loops.
    pub pe_macs: Vec<u64>,
    /// Traffic in the same layout as the analytic access counts.
    pub accesses: AccessCounts,
}

// Coordinates tracked per iteration: the six loop dims then input row/col.
const H: usize = 6;
const W: usize = 7;

#[derive(Clone, Copy)]
struct BoundingBox {
    lo: [u64; 8],
    hi: [u64; 8],
}

impl BoundingBox {
    fn point(p: [u64; 8]) -> Self {
        Self { lo: p, hi: p }
    }

    fn merge(&mut self, o: &BoundingBox) {
        for i in 0..8 {
            self.lo[i] = self.lo[i].min(o.lo[i]);
            self.hi[i] = self.hi[i].max(o.hi[i]);
        }
    }

    fn extent(&self, i: usize) -> u64 {
        self.hi[i] - self.lo[i] + 1
    }

    fn volume(&self, kind: DataKind) -> u64 {
        let e = |d: Dim| self.extent(d.index());
        match kind {
            DataKind::Weight => e(Dim::M) * e(Dim::C) * e(Dim::R) * e(Dim::S),
            DataKind::Output => e(Dim::M) * e(Dim::E) * e(Dim::F),
            DataKind::Input => e(Dim::C) * self.extent(H) * self.extent(W),
        }
    }
}

struct Watch {
    kind: DataKind,
    buffer: Buffer,
    position: usize,
}

/// Executes the nest, counting refreshes at every refresh location.
pub fn simulate(mapping: &Mapping, iteration_cap: u64) -> Result<AccessCounters> {
    simulate_with(mapping, iteration_cap, &ModelOptions::default())
}

/// Like [`simulate`]; only `psum_rw_factor` is taken from `options`, the
/// oracle always composes inputs with the layer's true stride.
pub fn simulate_with(
    mapping: &Mapping,
    iteration_cap: u64,
    options: &ModelOptions,
) -> Result<AccessCounters> {
    let nest = &mapping.nest;
    let levels = nest.levels();
    let n = levels.len();
    let iterations = levels
        .iter()
        .try_fold(1u64, |a, l| a.checked_mul(l.bound))
        .unwrap_or(u64::MAX);
    if iterations > iteration_cap {
        return Err(Error::InstanceTooLarge {
            iterations,
            cap: iteration_cap,
        });
    }
    let stride = nest.layer().stride;

    // A loop index moves its dim's coordinate by the product of the bounds
    // of the same dim's loops nested inside it.
    let mut step = vec![1u64; n];
    for i in 0..n {
        step[i] = levels[i + 1..]
            .iter()
            .filter(|l| l.dim == levels[i].dim)
            .map(|l| l.bound)
            .product();
    }
    let spatial: Vec<usize> = (0..n).filter(|&i| levels[i].spatial).collect();

    let mut watches = Vec::new();
    for kind in DataKind::ALL {
        for buffer in Buffer::ALL {
            watches.push(Watch {
                kind,
                buffer,
                position: mapping.refresh.get(kind, buffer),
            });
        }
    }

    let mut c = AccessCounters {
        refreshes: BufferPair::default(),
        elements_moved: BufferPair::default(),
        tile_volume: BufferPair::default(),
        gb_reads: PerKind::default(),
        body_iterations: 0,
        pe_macs: vec![0; levels.iter().filter(|l| l.spatial).map(|l| l.bound as usize).product()],
        accesses: AccessCounts::default(),
    };
    let mut seen: PerKind<HashSet<(Vec<u64>, [u64; 6])>> = PerKind::default();

    let mut idx = vec![0u64; n];
    let mut boxes: Vec<Option<BoundingBox>> = vec![None; n + 1];

    let mut close = |p: usize, b: &BoundingBox, idx: &[u64], c: &mut AccessCounters| {
        for w in watches.iter().filter(|w| w.position == p) {
            let vol = b.volume(w.kind);
            let moved = c.elements_moved.get_mut(w.buffer);
            moved[w.kind] += vol;
            let tv = &mut c.tile_volume.get_mut(w.buffer)[w.kind];
            *tv = (*tv).max(vol);
            match w.buffer {
                Buffer::Gb => c.refreshes.gb[w.kind] += 1,
                Buffer::Rf => {
                    let pe_zero = spatial.iter().all(|&i| i >= p || idx[i] == 0);
                    if pe_zero {
                        c.refreshes.rf[w.kind] += 1;
                    }
                    // PEs holding the same tile at the same time share one GB read.
                    let when: Vec<u64> = (0..p).filter(|&i| !levels[i].spatial).map(|i| idx[i]).collect();
                    let mut which = [u64::MAX; 6];
                    for d in Dim::ALL {
                        if w.kind.depends_on(d) {
                            which[d.index()] = b.lo[d.index()];
                        }
                    }
                    if seen[w.kind].insert((when, which)) {
                        c.gb_reads[w.kind] += vol;
                    }
                }
            }
        }
    };

    loop {
        let mut point = [0u64; 8];
        for i in 0..n {
            point[levels[i].dim.index()] += idx[i] * step[i];
        }
        point[H] = point[Dim::E.index()] * stride + point[Dim::R.index()];
        point[W] = point[Dim::F.index()] * stride + point[Dim::S.index()];
        boxes[n] = Some(BoundingBox::point(point));
        c.body_iterations += 1;
        let mut pe = 0usize;
        for &i in &spatial {
            pe = pe * levels[i].bound as usize + idx[i] as usize;
        }
        c.pe_macs[pe] += 1;

        // Advance the odometer; `j` is the outermost index that changes.
        let mut j = n;
        while j > 0 && idx[j - 1] + 1 == levels[j - 1].bound {
            j -= 1;
        }
        // Windows whose enclosing loops include loop j-1 close now.
        for p in (j..=n).rev() {
            let b = boxes[p].take().expect("open window");
            close(p, &b, &idx, &mut c);
            if p > 0 {
                match &mut boxes[p - 1] {
                    Some(parent) => parent.merge(&b),
                    slot => *slot = Some(b),
                }
            }
        }
        if j == 0 {
            break;
        }
        idx[j - 1] += 1;
        idx[j..].fill(0);
    }

    let factor = |kind: DataKind, refreshes: u64| {
        if kind == DataKind::Output && refreshes > 1 {
            options.psum_rw_factor
        } else {
            1
        }
    };
    for kind in DataKind::ALL {
        c.accesses.dram[kind] = c.elements_moved.gb[kind] * factor(kind, c.refreshes.gb.output);
        let rf = factor(kind, c.refreshes.rf.output);
        c.accesses.gb[kind] = c.gb_reads[kind] * rf;
        c.accesses.noc[kind] = c.elements_moved.rf[kind] * rf;
        c.accesses.rf[kind] = c.body_iterations * factor(kind, c.body_iterations);
    }
    Ok(c)
}

/// Which quantity disagrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    NRef,
    VRef,
    Accesses,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub quantity: Quantity,
    pub level: MemLevel,
    pub kind: DataKind,
    pub analytic: u64,
    pub oracle: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub diffs: Vec<DiffEntry>,
    pub analytic: AccessCounts,
    pub oracle: AccessCounters,
}

impl CheckReport {
    pub fn is_match(&self) -> bool {
        self.diffs.is_empty()
    }
}

/// Compares the closed form with the oracle.
pub fn check(mapping: &Mapping, options: &ModelOptions, iteration_cap: u64) -> Result<CheckReport> {
    let plan = refresh_plan(&mapping.nest, &mapping.refresh, options)?;
    check_plan(mapping, &plan, options, iteration_cap)
}

/// Compares a given (possibly altered) plan with the oracle.
pub fn check_plan(
    mapping: &Mapping,
    plan: &RefreshPlan,
    options: &ModelOptions,
    iteration_cap: u64,
) -> Result<CheckReport> {
    let oracle = simulate_with(mapping, iteration_cap, options)?;
    let analytic = access_counts(plan, options)?;
    let mut diffs = Vec::new();
    let mut push = |quantity, level, kind, a: u64, o: u64| {
        if a != o {
            diffs.push(DiffEntry {
                quantity,
                level,
                kind,
                analytic: a,
                oracle: o,
            });
        }
    };
    for buffer in Buffer::ALL {
        for kind in DataKind::ALL {
            let e = plan.entry(buffer, kind);
            push(Quantity::NRef, buffer.mem(), kind, e.n_ref, oracle.refreshes.get(buffer)[kind]);
            push(Quantity::VRef, buffer.mem(), kind, e.v_ref, oracle.tile_volume.get(buffer)[kind]);
        }
    }
    for level in MemLevel::ALL {
        for kind in DataKind::ALL {
            push(Quantity::Accesses, level, kind, analytic[level][kind], oracle.accesses[level][kind]);
        }
    }
    Ok(CheckReport {
        diffs,
        analytic,
        oracle,
    })
}
