#![allow(dead_code)]

use accel_predict::loopnest::{build_nest, BuildOptions, LoopNest, Mapping, RefreshLocations, Tiling};
use accel_predict::model::{
    Bandwidth, Bandwidths, Capacities, Capacity, Dim, HardwareConfig, LayerShape, MemLevel,
    PerKind, PerLevel, Precision, UnitCosts,
};
use accel_predict::{Buffer, DataKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random legal mapping: per-loop bounds ≤ `max_bound`, at most
/// `max_iterations` body executions, dims padded minimally, random loop
/// orders, optional unit loops and temporal NoC loops, random refresh
/// positions anywhere the placement rules allow.
pub fn random_mapping(rng: &mut ChaCha8Rng, max_bound: u64, max_iterations: u64) -> Mapping {
    loop {
        let mut tiling: Tiling = PerLevel::from_fn(|_| [1u64; 6]);
        for mem in MemLevel::ALL {
            for d in 0..6 {
                if rng.gen_bool(0.35) {
                    tiling[mem][d] = rng.gen_range(2..=max_bound);
                }
            }
        }
        let iterations: u64 = MemLevel::ALL
            .iter()
            .flat_map(|m| tiling[*m].iter().copied())
            .product();
        if iterations > max_iterations {
            continue;
        }
        let mut dims = [1u64; 6];
        for (d, dim) in dims.iter_mut().enumerate() {
            let bounds: Vec<u64> = MemLevel::ALL.iter().map(|m| tiling[*m][d]).collect();
            let p: u64 = bounds.iter().product();
            let lo = bounds
                .iter()
                .filter(|&&b| b > 1)
                .map(|&b| p / b * (b - 1) + 1)
                .max()
                .unwrap_or(1);
            *dim = rng.gen_range(lo..=p);
        }
        let stride = rng.gen_range(1..=4);
        let layer = LayerShape::conv("rand", dims[0], dims[1], dims[2], dims[3], dims[4], dims[5], stride);
        let ordering = PerLevel::from_fn(|_| {
            let mut o = Dim::ALL.to_vec();
            o.shuffle(rng);
            o
        });
        let options = BuildOptions {
            pad: false,
            keep_unit_loops: rng.gen_bool(0.2),
        };
        let mut nest = build_nest(&layer, &tiling, &ordering, options).expect("generated tiling is legal");
        let noc = nest.group(MemLevel::Noc);
        if !noc.is_empty() && rng.gen_bool(0.25) {
            let mut levels = nest.levels().to_vec();
            levels[noc.end - 1].spatial = false;
            nest = LoopNest::new(layer.clone(), levels).expect("demoted NoC loop stays legal");
        }
        let refresh = random_refresh(rng, &nest);
        return Mapping::new(nest, refresh).expect("generated refresh is legal");
    }
}

pub fn random_refresh(rng: &mut ChaCha8Rng, nest: &LoopNest) -> RefreshLocations {
    let n = nest.len();
    let gb_end = nest.group(MemLevel::Gb).end;
    let spatial_end = nest.spatial_end();
    let mut loc = RefreshLocations::outermost(nest);
    for kind in DataKind::ALL {
        let gb = rng.gen_range(0..=gb_end);
        let rf = rng.gen_range(spatial_end.max(gb)..=n);
        loc.set(kind, Buffer::Gb, gb);
        loc.set(kind, Buffer::Rf, rf);
    }
    loc
}

fn bw(rng: &mut ChaCha8Rng) -> Bandwidth {
    Bandwidth::BitsPerSecond(10f64.powf(rng.gen_range(8.0..12.0)))
}

/// Roomy hardware with random link speeds and energies.
pub fn random_hardware(rng: &mut ChaCha8Rng) -> HardwareConfig {
    HardwareConfig {
        name: "random".into(),
        notes: None,
        pe_rows: 64,
        pe_cols: 64,
        capacity: Capacities {
            gb: Capacity::Shared { shared_bits: 1 << 40 },
            rf: Capacity::Shared { shared_bits: 1 << 40 },
        },
        bw: Bandwidths {
            dram: bw(rng),
            gb: PerKind::from_fn(|_| bw(rng)),
            rf: PerKind::from_fn(|_| bw(rng)),
        },
        buffering_factor: 1,
        unit_costs: UnitCosts {
            e_mac: rng.gen_range(0.1..2.0),
            e_access: PerLevel::from_fn(|_| PerKind::from_fn(|_| rng.gen_range(0.0..100.0))),
            t_comp: Some(rng.gen_range(1e-10..1e-8)),
            clock_hz: None,
        },
        precision: Precision {
            bits_input: rng.gen_range(4..=32),
            bits_output: rng.gen_range(4..=32),
            bits_weight: rng.gen_range(4..=32),
        },
    }
}

/// Every bandwidth field of a hardware config, by path.
pub fn bandwidth_fields() -> Vec<&'static str> {
    vec!["DRAM", "GB.input", "GB.output", "GB.weight", "RF.input", "RF.output", "RF.weight"]
}

pub fn bandwidth_mut<'a>(hw: &'a mut HardwareConfig, field: &str) -> &'a mut Bandwidth {
    match field {
        "DRAM" => &mut hw.bw.dram,
        "GB.input" => &mut hw.bw.gb.input,
        "GB.output" => &mut hw.bw.gb.output,
        "GB.weight" => &mut hw.bw.gb.weight,
        "RF.input" => &mut hw.bw.rf.input,
        "RF.output" => &mut hw.bw.rf.output,
        "RF.weight" => &mut hw.bw.rf.weight,
        _ => panic!("unknown field {field}"),
    }
}
