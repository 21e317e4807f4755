//! The three scripted recordings run through the whole chain and decode
//! with a classifier that always answers the ground truth.

use ethoradar_core::ethogram::StubClassifier;
use ethoradar_core::pipeline::process_scenario;
use ethoradar_core::radon::MotionKind;
use ethoradar_core::scenarios::{Example, DEFAULT_NOISE_SIGMA};
use ethoradar_core::sim::Kinematics;
use ethoradar_core::{decode_backward, decode_forward, PipelineConfig, StateDiagram};

fn kinds(ex: Example) -> Vec<MotionKind> {
    let sc = ex
        .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
        .unwrap();
    let (_, out) = process_scenario(&sc, 7, &PipelineConfig::default()).unwrap();
    out.timeline.intervals.iter().map(|iv| iv.kind).collect()
}

#[test]
fn timelines_are_walk_stay_walk() {
    use MotionKind::{InPlace, Translation};
    for ex in Example::ALL {
        assert_eq!(
            kinds(ex),
            [Translation, InPlace, Translation],
            "example {}",
            ex.number()
        );
    }
}

#[test]
fn example_one_breakpoints_match_truth() {
    let sc = Example::One
        .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
        .unwrap();
    let (_, out) = process_scenario(&sc, 7, &PipelineConfig::default()).unwrap();
    let bps: Vec<f64> = out.timeline.breakpoints.iter().map(|b| b.t).collect();
    assert_eq!(bps.len(), 2, "{bps:?}");
    // the walk ends inside the fall and the exit starts with the last class
    assert!((bps[0] - 5.5).abs() < 1.0, "{bps:?}");
    assert!((bps[1] - 20.5).abs() < 0.5, "{bps:?}");
}

#[test]
fn perfect_stub_decodes_exact_traces() {
    let cfg = PipelineConfig::default();
    let opts = cfg.decoder_options().unwrap();
    let diagram = StateDiagram::standard();
    for ex in Example::ALL {
        let sc = ex
            .scenario(&Kinematics::default(), DEFAULT_NOISE_SIGMA)
            .unwrap();
        let (_, out) = process_scenario(&sc, 7, &cfg).unwrap();
        let stub = StubClassifier {
            labels: out.segment_truth(&sc.truth),
        };
        let fwd = decode_forward(&out.segments, &stub, &diagram, &opts).unwrap();
        let bwd = decode_backward(&out.segments, &stub, &diagram, &opts).unwrap();
        assert_eq!(
            fwd.state_trace(),
            ex.expected_trace(),
            "example {} forward",
            ex.number()
        );
        assert_eq!(
            bwd.state_trace(),
            ex.expected_trace(),
            "example {} backward",
            ex.number()
        );
        assert_eq!(fwd.labels(), ex.expected_labels());
        assert!(!fwd.has_repeated_in_place() && !bwd.has_repeated_in_place());
    }
}
