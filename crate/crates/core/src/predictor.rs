//! Closed-form access counts, energy and latency for one mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loopnest::{refresh_plan, Buffer, Mapping, RefreshPlan};
use crate::model::{
    mac_count, Bandwidth, DataKind, HardwareConfig, MemLevel, ModelOptions, PerKind, PerLevel,
};

/// Element transfers per memory level and data kind. The DRAM entry is
/// DRAM↔GB traffic, GB is GB↔NoC, NoC is NoC↔RF and RF is RF↔MAC.
pub type AccessCounts = PerLevel<PerKind<u64>>;

fn psum(kind: DataKind, refreshes: u64, options: &ModelOptions) -> u64 {
    if kind == DataKind::Output && refreshes > 1 {
        options.psum_rw_factor
    } else {
        1
    }
}

fn mul(a: u64, b: u64, what: &str) -> Result<u64> {
    a.checked_mul(b).ok_or_else(|| Error::overflow(what))
}

/// Traffic implied by a refresh plan.
pub fn access_counts(plan: &RefreshPlan, options: &ModelOptions) -> Result<AccessCounts> {
    let mut counts = AccessCounts::default();
    let gb_out = plan.gb.output.n_ref;
    let rf_out = plan.rf.output.n_ref;
    for kind in DataKind::ALL {
        let gb = plan.gb[kind];
        counts.dram[kind] = mul(
            mul(gb.n_ref, gb.v_ref, "DRAM traffic")?,
            psum(kind, gb_out, options),
            "DRAM traffic",
        )?;

        let rf = plan.rf[kind];
        let per_pe = mul(
            mul(rf.n_ref, rf.v_ref, "RF refill traffic")?,
            psum(kind, rf_out, options),
            "RF refill traffic",
        )?;
        let fanout = plan.n_pe_active / plan.multicast[kind];
        counts.gb[kind] = mul(per_pe, fanout, "GB traffic")?;
        counts.noc[kind] = mul(per_pe, plan.n_pe_active, "NoC traffic")?;

        counts.rf[kind] = mul(
            plan.padded_macs,
            psum(kind, plan.padded_macs, options),
            "RF traffic",
        )?;
    }
    Ok(counts)
}

/// Per-component shares in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub comp_pct: f64,
    pub rf_pct: f64,
    pub noc_pct: f64,
    pub gb_pct: f64,
    pub dram_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub comp_eu: f64,
    pub rf_eu: f64,
    pub noc_eu: f64,
    pub gb_eu: f64,
    pub dram_eu: f64,
    pub total_eu: f64,
    /// Access energy split by data kind.
    pub by_kind_eu: PerLevel<PerKind<f64>>,
    /// Shares of the full total.
    pub breakdown: Breakdown,
    /// Shares of the on-chip part (compute, RF, NoC, GB), DRAM excluded.
    pub on_chip_breakdown: Breakdown,
}

impl EnergyReport {
    fn from_parts(comp: f64, by_kind: PerLevel<PerKind<f64>>) -> Self {
        let level = |l: MemLevel| by_kind[l].input + by_kind[l].output + by_kind[l].weight;
        let (rf, noc, gb, dram) = (
            level(MemLevel::Rf),
            level(MemLevel::Noc),
            level(MemLevel::Gb),
            level(MemLevel::Dram),
        );
        let on_chip = comp + rf + noc + gb;
        let total = on_chip + dram;
        let share = |x: f64, of: f64| if of > 0.0 { 100.0 * x / of } else { 0.0 };
        Self {
            comp_eu: comp,
            rf_eu: rf,
            noc_eu: noc,
            gb_eu: gb,
            dram_eu: dram,
            total_eu: total,
            by_kind_eu: by_kind,
            breakdown: Breakdown {
                comp_pct: share(comp, total),
                rf_pct: share(rf, total),
                noc_pct: share(noc, total),
                gb_pct: share(gb, total),
                dram_pct: share(dram, total),
            },
            on_chip_breakdown: Breakdown {
                comp_pct: share(comp, on_chip),
                rf_pct: share(rf, on_chip),
                noc_pct: share(noc, on_chip),
                gb_pct: share(gb, on_chip),
                dram_pct: 0.0,
            },
        }
    }

    fn sum<'a>(reports: impl IntoIterator<Item = &'a EnergyReport>) -> Self {
        let mut comp = 0.0;
        let mut by_kind = PerLevel::<PerKind<f64>>::default();
        for r in reports {
            comp += r.comp_eu;
            for level in MemLevel::ALL {
                for kind in DataKind::ALL {
                    by_kind[level][kind] += r.by_kind_eu[level][kind];
                }
            }
        }
        Self::from_parts(comp, by_kind)
    }
}

/// Energy from access counts: each access costs its per-level, per-kind unit energy.
pub fn energy(plan: &RefreshPlan, counts: &AccessCounts, hw: &HardwareConfig) -> EnergyReport {
    let uc = &hw.unit_costs;
    let comp = plan.padded_macs as f64 * uc.e_mac;
    let by_kind =
        PerLevel::from_fn(|l| PerKind::from_fn(|k| counts[l][k] as f64 * uc.e_access[l][k]));
    EnergyReport::from_parts(comp, by_kind)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub l_comp_s: f64,
    pub l_dram_s: f64,
    pub l_gb_s: f64,
    pub l_setup_dram_s: f64,
    pub l_setup_gb_s: f64,
    pub l_setup_s: f64,
    pub l_total_s: f64,
    /// Kind attaining each maximum; absent when no kind costs any time.
    pub dram_bottleneck: Option<DataKind>,
    pub gb_bottleneck: Option<DataKind>,
    pub setup_bottleneck: Option<DataKind>,
    pub bound_by: Bound,
}

/// Which steady-state term dominates the latency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Comp,
    Dram,
    Gb,
    /// Aggregate over several layers.
    Sum,
}

fn link(bw: Bandwidth, field: impl FnOnce() -> String) -> Result<Bandwidth> {
    match bw {
        Bandwidth::BitsPerSecond(b) if b <= 0.0 || b.is_nan() => {
            Err(Error::ZeroBandwidth { field: field() })
        }
        other => Ok(other),
    }
}

/// Largest transfer time over `kinds`, with the kind that attains it.
fn max_over(
    kinds: &[DataKind],
    mut time: impl FnMut(DataKind) -> Result<f64>,
) -> Result<(f64, Option<DataKind>)> {
    let mut best = (0.0, None);
    for &k in kinds {
        let t = time(k)?;
        if t > best.0 {
            best = (t, Some(k));
        }
    }
    Ok(best)
}

pub fn latency(
    plan: &RefreshPlan,
    counts: &AccessCounts,
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<LatencyReport> {
    let t_comp = hw
        .unit_costs
        .t_comp()
        .ok_or_else(|| Error::ZeroBandwidth {
            field: "unit_costs.t_comp".into(),
        })?;
    let macs = plan.padded_macs as f64;
    let l_comp = if options.literal_eq8 {
        macs * t_comp
    } else {
        macs / plan.n_pe_active as f64 * t_comp
    };

    let bits = |k: DataKind| f64::from(hw.precision.bits(k));
    let dram = link(hw.bw.dram, || "bw.DRAM".into())?;
    let gb = |k: DataKind| link(hw.bw.gb[k], || format!("bw.GB.{k}"));
    let rf = |k: DataKind| link(hw.bw.rf[k], || format!("bw.RF.{k}"));

    let (l_dram, dram_k) = max_over(&DataKind::ALL, |k| {
        Ok(gb(k)?.min(dram).transfer_time(counts.dram[k] as f64 * bits(k)))
    })?;
    let (l_gb, gb_k) = max_over(&DataKind::ALL, |k| {
        let traffic = if options.gb_latency_multicast_aware {
            counts.gb[k]
        } else {
            counts.noc[k]
        };
        Ok(gb(k)?.transfer_time(traffic as f64 * bits(k)))
    })?;

    // First tiles of inputs and weights must arrive before any MAC can run.
    let first = [DataKind::Input, DataKind::Weight];
    let (l_setup_dram, sd_k) = max_over(&first, |k| {
        let v = plan.entry(Buffer::Gb, k).v_ref as f64;
        Ok(gb(k)?.min(dram).transfer_time(v * bits(k)))
    })?;
    let (l_setup_gb, sg_k) = max_over(&first, |k| {
        let v = plan.entry(Buffer::Rf, k).v_ref as f64;
        Ok(rf(k)?.min(gb(k)?).transfer_time(v * bits(k)))
    })?;
    let (l_setup, setup_k) = if l_setup_gb > l_setup_dram {
        (l_setup_gb, sg_k)
    } else {
        (l_setup_dram, sd_k)
    };

    let mut steady = (l_comp, Bound::Comp);
    if l_dram > steady.0 {
        steady = (l_dram, Bound::Dram);
    }
    if l_gb > steady.0 {
        steady = (l_gb, Bound::Gb);
    }
    Ok(LatencyReport {
        l_comp_s: l_comp,
        l_dram_s: l_dram,
        l_gb_s: l_gb,
        l_setup_dram_s: l_setup_dram,
        l_setup_gb_s: l_setup_gb,
        l_setup_s: l_setup,
        l_total_s: l_setup + steady.0,
        dram_bottleneck: dram_k,
        gb_bottleneck: gb_k,
        setup_bottleneck: setup_k,
        bound_by: steady.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub layer: String,
    /// MACs of the unpadded layer; throughput counts these.
    pub macs: u64,
    /// MACs executed by the padded nest; energy and latency use these.
    pub padded_macs: u64,
    pub n_pe_active: u64,
    pub energy: EnergyReport,
    pub latency: LatencyReport,
    pub throughput_gops: f64,
    pub access_counts_elements: AccessCounts,
    pub notes: Vec<String>,
}

/// Two operations (multiply and add) per MAC.
pub fn throughput_gops(macs: u64, l_total_s: f64) -> f64 {
    if l_total_s > 0.0 {
        2.0 * macs as f64 / l_total_s / 1e9
    } else {
        f64::INFINITY
    }
}

fn notes(options: &ModelOptions) -> Vec<String> {
    let mut n = vec![
        "l_gb traffic is refresh count × refresh volume per kind".to_string(),
        format!(
            "output traffic is scaled by {} at levels refreshed more than once",
            options.psum_rw_factor
        ),
    ];
    if options.assume_stride_one {
        n.push("input tiles composed with stride 1".into());
    }
    if options.literal_eq8 {
        n.push("l_comp ignores the PE array (N_MAC · t_comp)".into());
    }
    if options.gb_latency_multicast_aware {
        n.push("l_gb divides GB traffic by the multicast factor".into());
    }
    n
}

pub fn predict_layer(
    mapping: &Mapping,
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<PredictionReport> {
    let plan = refresh_plan(&mapping.nest, &mapping.refresh, options)?;
    predict_plan(mapping, &plan, hw, options)
}

/// Prediction from an already derived plan.
pub fn predict_plan(
    mapping: &Mapping,
    plan: &RefreshPlan,
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<PredictionReport> {
    let counts = access_counts(plan, options)?;
    let energy = energy(plan, &counts, hw);
    let latency = latency(plan, &counts, hw, options)?;
    let layer = mapping.nest.layer();
    let macs = mac_count(layer)?;
    Ok(PredictionReport {
        layer: layer.name.clone(),
        macs,
        padded_macs: plan.padded_macs,
        n_pe_active: plan.n_pe_active,
        throughput_gops: throughput_gops(macs, latency.l_total_s),
        energy,
        latency,
        access_counts_elements: counts,
        notes: notes(options),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub layers: Vec<PredictionReport>,
    /// Sums over layers; each layer pays its own setup, nothing overlaps.
    pub total: PredictionReport,
}

pub fn predict_network(
    mappings: &[Mapping],
    hw: &HardwareConfig,
    options: &ModelOptions,
) -> Result<NetworkReport> {
    let layers = mappings
        .iter()
        .map(|m| predict_layer(m, hw, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkReport {
        total: aggregate(&layers, options)?,
        layers,
    })
}

/// Sums a list of layer reports in order.
pub fn aggregate(layers: &[PredictionReport], options: &ModelOptions) -> Result<PredictionReport> {
    let mut counts = AccessCounts::default();
    let (mut macs, mut padded) = (0u64, 0u64);
    let mut lat = [0.0f64; 7];
    for r in layers {
        macs = macs
            .checked_add(r.macs)
            .ok_or_else(|| Error::overflow("network MACs"))?;
        padded = padded
            .checked_add(r.padded_macs)
            .ok_or_else(|| Error::overflow("network MACs"))?;
        for level in MemLevel::ALL {
            for kind in DataKind::ALL {
                counts[level][kind] = counts[level][kind]
                    .checked_add(r.access_counts_elements[level][kind])
                    .ok_or_else(|| Error::overflow("network traffic"))?;
            }
        }
        let l = &r.latency;
        for (acc, v) in lat.iter_mut().zip([
            l.l_comp_s,
            l.l_dram_s,
            l.l_gb_s,
            l.l_setup_dram_s,
            l.l_setup_gb_s,
            l.l_setup_s,
            l.l_total_s,
        ]) {
            *acc += v;
        }
    }
    let latency = LatencyReport {
        l_comp_s: lat[0],
        l_dram_s: lat[1],
        l_gb_s: lat[2],
        l_setup_dram_s: lat[3],
        l_setup_gb_s: lat[4],
        l_setup_s: lat[5],
        l_total_s: lat[6],
        dram_bottleneck: None,
        gb_bottleneck: None,
        setup_bottleneck: None,
        bound_by: Bound::Sum,
    };
    Ok(PredictionReport {
        layer: "network".into(),
        macs,
        padded_macs: padded,
        n_pe_active: layers.iter().map(|r| r.n_pe_active).max().unwrap_or(0),
        energy: EnergyReport::sum(layers.iter().map(|r| &r.energy)),
        throughput_gops: throughput_gops(macs, latency.l_total_s),
        latency,
        access_counts_elements: counts,
        notes: notes(options),
    })
}
