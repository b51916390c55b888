#![allow(dead_code)]

use facesynth::datasets::PipelineConfig;

/// A pipeline small enough to run end to end in a few seconds.
pub fn tiny_config() -> PipelineConfig {
    PipelineConfig::from_json(
        r#"{
            "schedule": {"T": 40},
            "blend": {"mode": "blending", "t0": 20, "w": 0.5},
            "world": {"n_subjects": 10, "images_per_subject": 4},
            "training": {"steps": 30, "batch": 16, "log_every": 10},
            "volumes": {"n_subjects": 2, "images_per_subject": 3},
            "filter": {"tau": 0.3, "q_min": 0.0, "max_candidate_ratio": 50}
        }"#,
    )
    .unwrap()
}
