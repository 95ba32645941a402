//! Property tests for the pure layers: hashing, analytics monotonicity,
//! sampling statistics.

mod common;

use std::path::Path;
use std::sync::Arc;

use hyline::threshold::{
    compute_band, expected_wait, load_fraction_below, SizeDistribution, ThresholdInputs,
};
use hyline::topology::Topology;
use hyline::workload::{
    generate_trace, load_size_distribution, per_host_arrival_rate, SizeModel, WorkloadSpec,
};
use proptest::prelude::*;

const GBIT: u64 = 1_000_000_000;

fn websearch() -> SizeDistribution {
    load_size_distribution(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../data/websearch.txt"
    )))
    .unwrap()
}

fn k4() -> Arc<Topology> {
    Topology::fat_tree(4, 2, GBIT, 25_000).unwrap()
}

/// Strategy over valid piecewise-linear CDFs: 2..8 strictly increasing sizes
/// with nondecreasing probabilities ending at one.
fn arb_distribution() -> impl Strategy<Value = SizeDistribution> {
    (2usize..8)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(1.0f64..1e8, n),
                proptest::collection::vec(0.01f64..1.0, n - 1),
            )
        })
        .prop_map(|(mut sizes, weights)| {
            sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sizes.dedup_by(|a, b| (*a - *b).abs() < 1.0);
            let total: f64 = weights.iter().take(sizes.len() - 1).sum();
            let mut knots = Vec::with_capacity(sizes.len());
            let mut acc = 0.0;
            for (i, s) in sizes.iter().enumerate() {
                if i > 0 {
                    acc += weights[(i - 1) % weights.len()] / total;
                }
                knots.push((*s, acc.min(1.0)));
            }
            knots.last_mut().unwrap().1 = 1.0;
            SizeDistribution::from_knots(knots).expect("constructed valid")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ecmp_is_pure_and_stable(src in 0u32..1000, dst in 0u32..1000, sp in 0u16..u16::MAX, dp in 0u16..u16::MAX) {
        let topo = k4();
        let paths = topo.enumerate_paths(0, 4).unwrap();
        let a = topo.ecmp_select((src, dst, sp, dp), &paths).clone();
        for _ in 0..3 {
            prop_assert_eq!(&a, topo.ecmp_select((src, dst, sp, dp), &paths));
        }
    }

    #[test]
    fn expected_wait_and_load_are_monotone(dist in arb_distribution(), rho in 0.05f64..0.9) {
        let inputs = ThresholdInputs::new(&dist, GBIT, rho, 100e-6).unwrap();
        let max = dist.max_size() as u64;
        let xs: Vec<u64> = (1..=12).map(|i| max * i / 12).collect();
        let mut prev_w = 0.0;
        let mut prev_f = 0.0;
        for x in xs {
            let w = expected_wait(&inputs, x).unwrap();
            let f = load_fraction_below(&inputs, x);
            prop_assert!(w + 1e-15 >= prev_w, "wait decreased at {}: {} < {}", x, w, prev_w);
            prop_assert!(f + 1e-12 >= prev_f);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&f));
            prop_assert!(inputs.rho_at(inputs.service_time(x)) < rho + 1e-9);
            prev_w = w;
            prev_f = f;
        }
    }

    #[test]
    fn band_is_stable_under_knot_refinement(rho in 0.3f64..0.8) {
        let dist = websearch();
        let inputs = ThresholdInputs::new(&dist, GBIT, rho, 100e-6).unwrap();
        let refined = ThresholdInputs::new(&dist.refined(9), GBIT, rho, 100e-6).unwrap();
        match (compute_band(&inputs, 1_000_000), compute_band(&refined, 1_000_000)) {
            (Ok(a), Ok(b)) => {
                let low_shift = (a.h_low as f64 - b.h_low as f64).abs() / a.h_low as f64;
                let high_shift = (a.h_high as f64 - b.h_high as f64).abs() / a.h_high as f64;
                prop_assert!(low_shift < 0.02, "h_low moved {low_shift}");
                prop_assert!(high_shift < 0.02, "h_high moved {high_shift}");
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "refinement flipped band existence: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn sampled_cdf_matches_spec_cdf() {
    // Kolmogorov-Smirnov distance of a million draws against the source CDF.
    let dist = websearch();
    let mut samples = common::sample_quantiles(|u| dist.quantile(u), 1_000_000, 4);
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let emp_hi = (i + 1) as f64 / n;
        let emp_lo = i as f64 / n;
        let f = dist.cdf(*s);
        ks = ks.max((emp_hi - f).abs()).max((f - emp_lo).abs());
    }
    assert!(ks < 0.01, "KS distance {ks}");
}

#[test]
fn inter_arrivals_are_exponential() {
    let topo = k4();
    let spec = WorkloadSpec {
        model: SizeModel::Empirical(websearch()),
        target_load: 0.6,
        flows: 100_000,
        rng_seed: 12,
    };
    let trace = generate_trace(&spec, &topo).unwrap();
    let rate = per_host_arrival_rate(&spec, GBIT) * topo.host_count() as f64;

    let mut gaps: Vec<f64> = trace
        .flows
        .windows(2)
        .map(|w| (w[1].arrival_ns - w[0].arrival_ns) as f64 / 1e9)
        .collect();
    gaps.push(trace.flows[0].arrival_ns as f64 / 1e9);
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = gaps.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, g) in gaps.iter().enumerate() {
        let f = 1.0 - (-rate * g).exp();
        ks = ks.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    assert!(ks < 0.01, "KS distance {ks} for rate {rate}");
}

#[test]
fn realized_load_tracks_target() {
    let topo = k4();
    for (seed, load) in [(5u64, 0.3f64), (6, 0.6), (7, 0.8)] {
        let spec = WorkloadSpec {
            model: SizeModel::Empirical(websearch()),
            target_load: load,
            flows: 60_000,
            rng_seed: seed,
        };
        let trace = generate_trace(&spec, &topo).unwrap();
        let duration_s = trace.duration_ns() as f64 / 1e9;
        let realized =
            trace.total_bytes() as f64 * 8.0 / (duration_s * topo.host_count() as f64 * GBIT as f64);
        let rel = (realized - load).abs() / load;
        assert!(rel < 0.03, "load {load}: realized {realized} ({rel:.3} off)");
    }
}

#[test]
fn ecmp_spreads_keys_near_uniformly() {
    let topo = k4();
    let paths = topo.enumerate_paths(0, 4).unwrap();
    assert_eq!(paths.len(), 4);
    let mut counts = [0usize; 4];
    let mut state = 0xfeed_beefu64;
    for _ in 0..100_000 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let src = (state >> 11) as u32 % 10_000;
        let dst = (state >> 31) as u32 % 10_000;
        let sp = (state >> 7) as u16;
        let dp = (state >> 23) as u16;
        let chosen = topo.ecmp_select((src, dst, sp, dp), &paths);
        let idx = paths.iter().position(|p| p == chosen).unwrap();
        counts[idx] += 1;
    }
    for c in counts {
        let frac = c as f64 / 100_000.0;
        assert!((frac - 0.25).abs() <= 0.02, "path fraction {frac}");
    }
}
