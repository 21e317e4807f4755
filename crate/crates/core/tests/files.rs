//! Simulated recordings and pipeline artifacts survive their file formats.

use ethoradar_core::io::{
    read_iqf, read_segments_csv, read_snippet_set, write_iqf, write_segments_csv, write_snippet_set,
};
use ethoradar_core::pipeline::process_scenario;
use ethoradar_core::scenarios::{Example, DEFAULT_NOISE_SIGMA};
use ethoradar_core::sim::Kinematics;
use ethoradar_core::{run_pipeline, PipelineConfig};

#[test]
fn recording_round_trip_gives_the_same_segments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let sc = Example::Three
        .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
        .unwrap();
    let (bb, out) = process_scenario(&sc, 11, &cfg).unwrap();

    let path = dir.path().join("rec.iqf");
    write_iqf(&path, &bb).unwrap();
    let back = read_iqf(&path).unwrap();
    assert_eq!(back.data, bb.data);
    let again = run_pipeline(&back, &cfg).unwrap();
    assert_eq!(again.segments, out.segments);

    let mut buf = Vec::new();
    write_segments_csv(&mut buf, &out.segments).unwrap();
    assert_eq!(read_segments_csv(buf.as_slice()).unwrap(), out.segments);
}

#[test]
fn snippet_sets_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let sc = Example::One
        .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
        .unwrap();
    let (_, out) = process_scenario(&sc, 3, &cfg).unwrap();
    let (ids, snippets): (Vec<usize>, Vec<_>) = out
        .segment_snippets(cfg.snippet_size)
        .unwrap()
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .unzip();
    assert_eq!(ids, out.event_indices());
    write_snippet_set(dir.path(), &ids, &snippets).unwrap();
    let back = read_snippet_set(dir.path()).unwrap();
    assert_eq!(back.len(), snippets.len());
    for ((id, s), (want_id, want)) in back.iter().zip(ids.iter().zip(&snippets)) {
        assert_eq!(id, want_id);
        // pixels are stored as f32
        for (a, b) in
            s.md.iter()
                .chain(s.rm.iter())
                .zip(want.md.iter().chain(want.rm.iter()))
        {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
