mod common;

use std::path::{Path, PathBuf};
use std::time::Duration;

use eipart_core::completion::{Completer, CompletionError, CompletionRequest, ExternalCommand, Method};
use eipart_core::explode::{optimize_explosion, ExplodeConfig};
use eipart_core::mesh::{sample_surface, write_glb, write_obj, GlbNode};
use eipart_core::metrics::{
    chamfer_distance, evaluate, sample_object, CdConvention, EvalConfig, EvalGeometry, EvalPart, Normalization,
};
use eipart_core::pipeline::{
    hash_file, MethodName, PipelineConfig, PipelineManifest, StageStatus, COMPLETED_VOXELS, EXPLODED_VOXELS,
    FINAL_VOXELS, IMPLODED_VOXELS, MANIFEST_FILE, PARTS_VOXELS, RECORD_JSON, REPORT_JSON,
};
use eipart_core::{run_pipeline, PipelineError, Stage, TriMesh};

use common::*;

fn echo_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/echo_completer.sh").canonicalize().unwrap()
}

fn sh(script: &str) -> Method {
    Method::External(ExternalCommand {
        program: "sh".into(),
        args: vec!["-c".into(), script.into(), "sh".into()],
        timeout: Duration::from_secs(20),
    })
}

fn request() -> CompletionRequest {
    let mut r = rng(5);
    let parts = random_blocks(&mut r, 32, 3);
    let state = optimize_explosion(&parts, &ExplodeConfig::default()).unwrap();
    CompletionRequest::new(state.parts, state.record).unwrap()
}

#[test]
fn echo_completer_round_trips() {
    let req = request();
    let m = Method::External(ExternalCommand { program: echo_script(), args: vec![], timeout: Duration::from_secs(20) });
    let out = m.complete(&req).unwrap();
    assert_eq!(out.parts(), &req.parts[..]);
}

#[test]
fn external_failure_carries_stderr() {
    match sh("echo 'model weights missing' >&2; exit 1").complete(&request()) {
        Err(CompletionError::ExternalFailure(msg)) => assert!(msg.contains("model weights missing"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn external_dropping_a_part_violates_contract() {
    let req = request();
    let script = format!(
        "grep -v ' {}$' \"$1/request/exploded.voxels\" > \"$1/completed.voxels\"",
        req.parts[1].part_id()
    );
    match sh(&script).complete(&req) {
        Err(CompletionError::ContractViolation { part, .. }) => assert_eq!(part, req.parts[1].part_id()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn external_missing_output_and_timeout() {
    assert!(matches!(sh("true").complete(&request()), Err(CompletionError::ExternalFailure(_))));
    let slow = Method::External(ExternalCommand {
        program: "sh".into(),
        args: vec!["-c".into(), "sleep 5".into()],
        timeout: Duration::from_millis(200),
    });
    let start = std::time::Instant::now();
    assert!(matches!(slow.complete(&request()), Err(CompletionError::ExternalFailure(_))));
    assert!(start.elapsed() < Duration::from_secs(4));
}

#[test]
fn exchange_directory_layout() {
    let req = request();
    let script = "test -f \"$1/request/exploded.voxels\" && test -f \"$1/request/record.json\" \
                  && cp \"$1/request/exploded.voxels\" \"$1/completed.voxels\"";
    assert!(sh(script).complete(&req).is_ok());
}

fn fixture(dir: &Path) -> PathBuf {
    let p = dir.join("two_cubes.obj");
    std::fs::write(&p, write_obj(&two_cubes(0.06))).unwrap();
    p
}

fn fast_config() -> PipelineConfig {
    let mut cfg = PipelineConfig { resolution: 32, ..Default::default() };
    cfg.metrics.points = 5000;
    cfg.render.size = 32;
    cfg
}

#[test]
fn deleting_any_intermediate_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let run = tmp.path().join("run");
    let cfg = fast_config();
    run_pipeline(&input, &run, &cfg).unwrap();
    for (rel, first) in [
        (PARTS_VOXELS, Stage::Voxelize),
        (EXPLODED_VOXELS, Stage::Explode),
        (RECORD_JSON, Stage::Explode),
        (COMPLETED_VOXELS, Stage::Complete),
        (IMPLODED_VOXELS, Stage::Implode),
        (FINAL_VOXELS, Stage::Implode),
        (REPORT_JSON, Stage::Evaluate),
    ] {
        let before: Vec<_> = [PARTS_VOXELS, RECORD_JSON, FINAL_VOXELS, REPORT_JSON]
            .iter()
            .map(|f| hash_file(&run.join(f)))
            .collect();
        let want = hash_file(&run.join(rel)).unwrap();
        std::fs::remove_file(run.join(rel)).unwrap();
        let out = run_pipeline(&input, &run, &cfg).unwrap();
        assert_eq!(out.executed.first(), Some(&first), "{rel}");
        assert_eq!(hash_file(&run.join(rel)).unwrap(), want, "{rel}");
        let after: Vec<_> = [PARTS_VOXELS, RECORD_JSON, FINAL_VOXELS, REPORT_JSON]
            .iter()
            .map(|f| hash_file(&run.join(f)))
            .collect();
        assert_eq!(before, after);
    }
}

#[test]
fn config_change_reruns_from_affected_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let run = tmp.path().join("run");
    let mut cfg = fast_config();
    run_pipeline(&input, &run, &cfg).unwrap();
    cfg.metrics.points = 4000;
    let out = run_pipeline(&input, &run, &cfg).unwrap();
    assert_eq!(out.executed, [Stage::Evaluate]);
    cfg.explode.margin = 3;
    let out = run_pipeline(&input, &run, &cfg).unwrap();
    assert_eq!(out.executed, [Stage::Explode, Stage::Complete, Stage::Implode, Stage::Evaluate]);
}

#[test]
fn failed_stage_is_recorded_and_earlier_outputs_survive() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let run = tmp.path().join("run");
    let mut cfg = fast_config();
    cfg.completer.method = MethodName::External;
    cfg.completer.command = vec!["sh".into(), "-c".into(), "echo no gpu >&2; exit 1".into(), "sh".into()];
    let err = run_pipeline(&input, &run, &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: Stage::Complete, external: true, .. }), "{err:?}");
    assert_eq!(err.exit_code(), 3);
    let m = PipelineManifest::load(&run.join(MANIFEST_FILE)).unwrap();
    let last = m.entries.last().unwrap();
    assert_eq!((last.stage, last.status), (Stage::Complete, StageStatus::Failed));
    assert!(last.error.as_deref().unwrap().contains("no gpu"));
    assert!(run.join(EXPLODED_VOXELS).exists() && run.join(RECORD_JSON).exists());

    cfg.completer.command = vec![echo_script().to_string_lossy().into_owned()];
    let out = run_pipeline(&input, &run, &cfg).unwrap();
    assert_eq!(out.executed[0], Stage::Complete);
    assert_eq!(out.reused.len(), 4);
}

#[test]
fn single_part_budget_merges() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let mut cfg = fast_config();
    cfg.curation.max_parts = 1;
    // both slabs belong to one authored object, so curation merges instead of rejecting
    let run = tmp.path().join("run");
    run_pipeline(&input, &run, &cfg).unwrap();
    let parts = std::fs::read_to_string(run.join(PARTS_VOXELS)).unwrap();
    let ids: std::collections::BTreeSet<&str> =
        parts.lines().skip(1).filter_map(|l| l.split_whitespace().nth(3)).collect();
    assert_eq!(ids.len(), 1);
}

#[test]
fn too_many_authored_objects_fails_curation() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (TriMesh::cuboid([-1.0; 3], [-0.2; 3]), TriMesh::cuboid([0.2; 3], [1.0; 3]));
    let input = tmp.path().join("pair.glb");
    std::fs::write(
        &input,
        write_glb(&[GlbNode { mesh: &a, translation: [0.0; 3] }, GlbNode { mesh: &b, translation: [0.0; 3] }]),
    )
    .unwrap();
    let mut cfg = fast_config();
    cfg.curation.max_parts = 1;
    let run = tmp.path().join("run");
    let err = run_pipeline(&input, &run, &cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: Stage::Curate, external: false, .. }), "{err:?}");
    assert_eq!(err.exit_code(), 2);
    assert!(std::fs::read_to_string(run.join("curate/rejected.jsonl")).unwrap().contains("too_many_parts"));
}

#[test]
fn evaluate_mixed_inputs_against_oracle() {
    let mesh_a = TriMesh::cuboid([-0.5, -0.5, -0.5], [-0.05, 0.5, 0.5]);
    let mesh_b = TriMesh::cuboid([0.05, -0.5, -0.5], [0.5, 0.5, 0.5]);
    let vox = eipart_core::voxel::voxelize(&mesh_b, 1, 64).unwrap();
    let pred = vec![
        EvalPart { id: 0, geometry: EvalGeometry::Mesh(mesh_a.clone()) },
        EvalPart { id: 1, geometry: EvalGeometry::Voxels(vox) },
    ];
    let gt = vec![
        EvalPart { id: 0, geometry: EvalGeometry::Mesh(mesh_a) },
        EvalPart { id: 1, geometry: EvalGeometry::Mesh(mesh_b) },
    ];
    let cfg = EvalConfig { points: 2000, resolution: 64, normalization: Normalization::None, ..Default::default() };
    let report = evaluate(&pred, &gt, &cfg).unwrap();
    let a = sample_object(&pred, &cfg).unwrap();
    let b = sample_object(&gt, &cfg).unwrap();
    let want = brute_chamfer_mean(&a, &b);
    assert!((report.overall.cd.unwrap() - want).abs() <= 1e-9);
    assert!((chamfer_distance(&a, &b, CdConvention::Mean).unwrap() - want).abs() <= 1e-9);
    assert!(report.overall.fscore_01 > 0.9);
    assert_eq!(report.part.pairs.len(), 2);
}

#[test]
fn sampling_frequencies_follow_area() {
    // triangles with areas in ratio 1 : 2 : 5
    let m = TriMesh::new(
        vec![
            eipart_core::Vec3::new(0.0, 0.0, 0.0),
            eipart_core::Vec3::new(1.0, 0.0, 0.0),
            eipart_core::Vec3::new(0.0, 1.0, 0.0),
            eipart_core::Vec3::new(2.0, 0.0, 1.0),
            eipart_core::Vec3::new(0.0, 2.0, 1.0),
            eipart_core::Vec3::new(5.0, 0.0, 2.0),
            eipart_core::Vec3::new(0.0, 2.0, 2.0),
        ],
        vec![[0, 1, 2], [0, 3, 2], [0, 5, 6]],
    )
    .unwrap();
    let areas: Vec<f64> = (0..3).map(|t| m.triangle_area(t)).collect();
    let total: f64 = areas.iter().sum();
    let n = 100_000;
    for seed in [1u64, 2, 3] {
        let samples = sample_surface(&m, n, seed).unwrap();
        let mut counts = [0f64; 3];
        for s in &samples {
            counts[s.triangle as usize] += 1.0;
        }
        let chi2: f64 = (0..3)
            .map(|t| {
                let e = n as f64 * areas[t] / total;
                (counts[t] - e).powi(2) / e
            })
            .sum();
        // 99.9th percentile of chi-square with two degrees of freedom
        assert!(chi2 < 13.82, "seed {seed}: chi2 {chi2}");
    }
}
