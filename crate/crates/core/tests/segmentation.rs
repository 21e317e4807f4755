//! Breakpoint and burst localization on small randomized batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ethoradar_core::pipeline::process_scenario;
use ethoradar_core::scenarios::{burst_case, walk_stop_case, DEFAULT_NOISE_SIGMA};
use ethoradar_core::PipelineConfig;

#[test]
fn walk_stop_breakpoints_within_half_a_second() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..6 {
        let (sc, truth) = walk_stop_case(&mut rng, DEFAULT_NOISE_SIGMA).unwrap();
        let (_, out) = process_scenario(&sc, 300 + i, &cfg).unwrap();
        let err = out
            .timeline
            .breakpoints
            .iter()
            .map(|b| (b.t - truth).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(err <= 0.5, "case {i}: truth {truth:.2}, error {err:.2}");
    }
}

#[test]
fn bursts_within_half_a_second() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for i in 0..6 {
        let (sc, truth) = burst_case(&mut rng, DEFAULT_NOISE_SIGMA).unwrap();
        let (_, out) = process_scenario(&sc, 400 + i, &cfg).unwrap();
        for &(a, b) in &truth {
            let err = out
                .pbc_segments
                .iter()
                .map(|s| (s.onset - a).abs().max((s.offset - b).abs()))
                .fold(f64::INFINITY, f64::min);
            assert!(err <= 0.5, "case {i}: burst {a:.2}-{b:.2}, error {err:.2}");
        }
    }
}
