//! Acceptance suite: one test per shipped guarantee, each checked against an
//! independent oracle or an explicit property. Every test prints a single
//! `ACCEPTANCE <n> <name>: PASS|FAIL` line, so running
//! `cargo test --test acceptance -- --nocapture` doubles as a checklist.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synids_core::capture::parse_capture;
use synids_core::classifier::{
    adaboost_train, predict_with_ensemble, train_nb, ModelMetadata,
};
use synids_core::descriptors::{
    detect_keypoints, extract_descriptors, extract_from_frame, SiftParams,
};
use synids_core::evaluation::{complex_rate, report_from_counts};
use synids_core::imaging::{convex_hull, FrameLabel};
use synids_core::model_io::load_model;
use synids_core::pipeline::{render_packets, RenderOptions};
use synids_core::projection::{make_basis, project_point};
use synids_core::traffic::{generate, write_capture, CaptureFormat, ScenarioSpec};
use synids_core::vocabulary::{kmeans, tfidf_weight, FrequencyMatrix};
use synids_core::PlanePoint;

/// Runs one acceptance check and prints its verdict line.
fn criterion(n: u32, name: &str, f: impl FnOnce()) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(()) => println!("ACCEPTANCE {n} {name}: PASS"),
        Err(payload) => {
            println!("ACCEPTANCE {n} {name}: FAIL");
            resume_unwind(payload);
        }
    }
}

fn metadata_fixture() -> ModelMetadata {
    ModelMetadata {
        seed: 0,
        k: 4,
        rounds: 1,
        legitimate_images: 1,
        ddos_images: 1,
        window_us: 5_000_000,
        canvas_size: 256,
        max_descriptors: 400,
    }
}

/// Runs the pipeline binary and asserts it exits 0.
fn synids_ok(args: &[&str]) {
    let bin = env!("CARGO_BIN_EXE_synids");
    let out = Command::new(bin)
        .args(args)
        .output()
        .expect("pipeline binary should spawn");
    assert!(
        out.status.success(),
        "synids {:?} exited {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

// ---------------------------------------------------------------------------
// 1. Complex-rate arithmetic on fixed confusion counts.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_cr_arithmetic() {
    criterion(1, "cr_arithmetic", || {
        let started = Instant::now();
        let meta = metadata_fixture();

        // Counts implying DR = 0.984 and FPR = 0.043 must yield CR = 0.9705.
        let high = report_from_counts(984, 43, 957, 16, "high", meta.clone()).unwrap();
        assert!((high.dr - 0.984).abs() <= 1e-12, "dr {}", high.dr);
        assert!((high.fpr - 0.043).abs() <= 1e-12, "fpr {}", high.fpr);
        assert!((high.cr - 0.9705).abs() <= 1e-12, "cr {}", high.cr);

        // Counts implying DR = 0.095 and FPR = 0.032 must yield CR = 0.5315.
        let low = report_from_counts(95, 32, 968, 905, "low", meta).unwrap();
        assert!((low.dr - 0.095).abs() <= 1e-12, "dr {}", low.dr);
        assert!((low.fpr - 0.032).abs() <= 1e-12, "fpr {}", low.fpr);
        assert!((low.cr - 0.5315).abs() <= 1e-12, "cr {}", low.cr);

        // Same arithmetic straight through the rate helper.
        assert!((complex_rate(0.984, 0.043) - 0.9705).abs() <= 1e-12);
        assert!((complex_rate(0.095, 0.032) - 0.5315).abs() <= 1e-12);

        assert!(
            started.elapsed() < Duration::from_secs(1),
            "took {:?}",
            started.elapsed()
        );
    });
}

// ---------------------------------------------------------------------------
// 2. Plane projection against a dense least-squares solve.
// ---------------------------------------------------------------------------

/// Independent oracle: minimize |x - u*a - v*b| by solving the 2x2 normal
/// equations with Gaussian elimination and partial pivoting.
fn least_squares_plane(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let dot = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(s, t)| s * t).sum() };
    let mut m = [
        [dot(a, a), dot(a, b), dot(a, x)],
        [dot(b, a), dot(b, b), dot(b, x)],
    ];
    if m[1][0].abs() > m[0][0].abs() {
        m.swap(0, 1);
    }
    let factor = m[1][0] / m[0][0];
    for j in 0..3 {
        m[1][j] -= factor * m[0][j];
    }
    let v = m[1][2] / m[1][1];
    let u = (m[0][2] - m[0][1] * v) / m[0][0];
    (u, v)
}

#[test]
fn criterion_2_projection_oracle() {
    criterion(2, "projection_oracle", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0x70_72_6f_6a);
        let mut tested = 0usize;
        while tested < 1000 {
            let n = rng.gen_range(2..=16usize);
            let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let a = sample(&mut rng);
            let b = sample(&mut rng);
            let x = sample(&mut rng);
            // Degenerate (parallel or zero) spans are rejected by
            // construction; draw a fresh triple instead.
            let Ok(basis) = make_basis(&a, &b) else { continue };
            let p = project_point(&x, &basis).unwrap();
            let (u, v) = least_squares_plane(&x, &basis.a, &basis.b);
            assert!(
                (p.u - u).abs() <= 1e-9 && (p.v - v).abs() <= 1e-9,
                "case {tested} (n={n}): got ({}, {}), oracle ({u}, {v})",
                p.u,
                p.v,
            );
            tested += 1;
        }
        assert!(
            started.elapsed() < Duration::from_secs(5),
            "took {:?}",
            started.elapsed()
        );
    });
}

// ---------------------------------------------------------------------------
// 3. Convex hull against an O(n^3) convex-combination oracle.
// ---------------------------------------------------------------------------

/// Exact for integer-valued coordinates in this range.
fn cross(o: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u)
}

fn same_point(p: PlanePoint, q: PlanePoint) -> bool {
    p.u == q.u && p.v == q.v
}

/// Whether p lies on the closed segment [q, r].
fn on_segment(p: PlanePoint, q: PlanePoint, r: PlanePoint) -> bool {
    cross(q, r, p) == 0.0
        && (p.u - q.u) * (p.u - r.u) + (p.v - q.v) * (p.v - r.v) <= 0.0
}

/// Whether p lies in the closed triangle (q, r, s); degenerate triangles are
/// rejected (their points are covered by the segment test).
fn in_triangle(p: PlanePoint, q: PlanePoint, r: PlanePoint, s: PlanePoint) -> bool {
    if cross(q, r, s) == 0.0 {
        return false;
    }
    let d1 = cross(q, r, p);
    let d2 = cross(r, s, p);
    let d3 = cross(s, q, p);
    (d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0) || (d1 <= 0.0 && d2 <= 0.0 && d3 <= 0.0)
}

/// Caratheodory in the plane: p is in conv(S) iff it coincides with a point
/// of S, lies on a segment of S, or lies in a triangle of S.
fn in_convex_hull_of(p: PlanePoint, others: &[PlanePoint]) -> bool {
    let n = others.len();
    if others.iter().any(|&q| same_point(p, q)) {
        return true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if on_segment(p, others[i], others[j]) {
                return true;
            }
            for k in j + 1..n {
                if in_triangle(p, others[i], others[j], others[k]) {
                    return true;
                }
            }
        }
    }
    false
}

#[test]
fn criterion_3_convex_hull_oracle() {
    criterion(3, "convex_hull_oracle", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0x68_75_6c_6c);
        for case in 0..200 {
            // Small integer coordinates keep every determinant exact and
            // make duplicates and collinear runs common.
            let count = rng.gen_range(1..=30usize);
            let points: Vec<PlanePoint> = (0..count)
                .map(|_| PlanePoint {
                    u: f64::from(rng.gen_range(-8i32..=8)),
                    v: f64::from(rng.gen_range(-8i32..=8)),
                })
                .collect();
            let mut unique: Vec<PlanePoint> = Vec::new();
            for &p in &points {
                if !unique.iter().any(|&q| same_point(p, q)) {
                    unique.push(p);
                }
            }

            let hull = convex_hull(&points).unwrap();

            // Oracle vertex set: the points not expressible as a convex
            // combination of the remaining distinct points.
            let mut expected: Vec<PlanePoint> = unique
                .iter()
                .copied()
                .filter(|&p| {
                    let others: Vec<PlanePoint> =
                        unique.iter().copied().filter(|&q| !same_point(p, q)).collect();
                    !in_convex_hull_of(p, &others)
                })
                .collect();
            let mut got = hull.clone();
            let key = |p: &PlanePoint| (p.u, p.v);
            expected.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
            got.sort_by(|p, q| key(p).partial_cmp(&key(q)).unwrap());
            assert_eq!(
                got.len(),
                expected.len(),
                "case {case}: hull {got:?} vs oracle {expected:?} for {points:?}"
            );
            assert!(
                got.iter().zip(&expected).all(|(p, q)| same_point(*p, *q)),
                "case {case}: hull {got:?} vs oracle {expected:?} for {points:?}"
            );

            // Counter-clockwise orientation, so the edge test below is signed
            // consistently.
            if hull.len() >= 3 {
                let area: f64 = (0..hull.len())
                    .map(|i| {
                        let p = hull[i];
                        let q = hull[(i + 1) % hull.len()];
                        p.u * q.v - q.u * p.v
                    })
                    .sum();
                assert!(area > 0.0, "case {case}: hull not counter-clockwise");
            }

            // Containment invariant: every input point is inside or on the hull.
            for &p in &points {
                let inside = match hull.len() {
                    1 => same_point(p, hull[0]),
                    2 => on_segment(p, hull[0], hull[1]),
                    m => (0..m).all(|i| cross(hull[i], hull[(i + 1) % m], p) >= 0.0),
                };
                assert!(inside, "case {case}: {p:?} escapes hull {hull:?}");
            }
        }
        assert!(
            started.elapsed() < Duration::from_secs(10),
            "took {:?}",
            started.elapsed()
        );
    });
}

// ---------------------------------------------------------------------------
// 4. tf-idf weighting against a scalar recomputation.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_tfidf_oracle() {
    criterion(4, "tfidf_oracle", || {
        // Five images, four clusters; cluster 2 occurs in every image, so its
        // idf must vanish and its weighted column must be exactly zero.
        let counts: Vec<Vec<u32>> = vec![
            vec![4, 0, 1, 3],
            vec![2, 5, 1, 0],
            vec![0, 2, 1, 7],
            vec![9, 1, 1, 2],
            vec![3, 3, 1, 1],
        ];
        let labels = vec![
            FrameLabel::Legitimate,
            FrameLabel::Legitimate,
            FrameLabel::Ddos,
            FrameLabel::Legitimate,
            FrameLabel::Ddos,
        ];
        let matrix = FrequencyMatrix {
            counts: counts.clone(),
            labels,
        };
        let (weighted, idf) = tfidf_weight(&matrix);

        let images = counts.len();
        let clusters = counts[0].len();
        assert_eq!(weighted.len(), images);
        assert_eq!(idf.len(), clusters);
        for (i, row) in counts.iter().enumerate() {
            assert_eq!(weighted[i].len(), clusters);
            let row_total: u32 = row.iter().sum();
            for j in 0..clusters {
                let df = counts.iter().filter(|r| r[j] > 0).count();
                let idf_j = if df == 0 {
                    0.0
                } else {
                    (images as f64 / df as f64).ln()
                };
                let tf_ij = if row_total == 0 {
                    0.0
                } else {
                    f64::from(row[j]) / f64::from(row_total)
                };
                assert!(
                    (weighted[i][j] - tf_ij * idf_j).abs() <= 1e-12,
                    "image {i} cluster {j}: got {}, oracle {}",
                    weighted[i][j],
                    tf_ij * idf_j,
                );
            }
        }

        // The ubiquitous cluster is suppressed exactly, not approximately.
        assert_eq!(idf[2], 0.0);
        for row in &weighted {
            assert_eq!(row[2], 0.0);
        }
    });
}

// ---------------------------------------------------------------------------
// 5. k-means convergence properties.
// ---------------------------------------------------------------------------

fn sq_dist_f64(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[test]
fn criterion_5_kmeans_properties() {
    criterion(5, "kmeans_properties", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6b_6d_65_61);
        for instance in 0..20u64 {
            let dim = rng.gen_range(2..=8usize);
            let n = rng.gen_range(40..=160usize);
            let k = rng.gen_range(1..=8usize);
            // Clumpy data: points scattered around a few blob centers.
            let blob_count = rng.gen_range(2..=5usize);
            let blobs: Vec<Vec<f32>> = (0..blob_count)
                .map(|_| (0..dim).map(|_| rng.gen_range(-4.0f32..4.0)).collect())
                .collect();
            let points: Vec<Vec<f32>> = (0..n)
                .map(|_| {
                    let blob = &blobs[rng.gen_range(0..blob_count)];
                    blob.iter().map(|c| c + rng.gen_range(-0.8f32..0.8)).collect()
                })
                .collect();
            let refs: Vec<&[f32]> = points.iter().map(Vec::as_slice).collect();

            let result = kmeans(&refs, k, 9000 + instance).unwrap();
            assert_eq!(result.centroids.len(), k);
            assert_eq!(result.assignments.len(), n);
            assert_eq!(result.objective_history.len(), result.iterations + 1);

            // (a) The within-cluster objective never increases.
            for (step, pair) in result.objective_history.windows(2).enumerate() {
                assert!(
                    pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0),
                    "instance {instance} step {step}: objective rose {} -> {}",
                    pair[0],
                    pair[1],
                );
            }

            // (b) Termination is a local optimum under single-point
            // reassignment: with centroids fixed, no point can lower its own
            // cost by switching clusters.
            let widened: Vec<Vec<f64>> = points
                .iter()
                .map(|p| p.iter().map(|&v| f64::from(v)).collect())
                .collect();
            for (i, p) in widened.iter().enumerate() {
                let assigned = sq_dist_f64(p, &result.centroids[result.assignments[i]]);
                for (j, c) in result.centroids.iter().enumerate() {
                    assert!(
                        assigned <= sq_dist_f64(p, c) + 1e-9,
                        "instance {instance}: point {i} prefers cluster {j}",
                    );
                }
            }
        }

        // (c) k = 1 reduces to the mean.
        let points: Vec<Vec<f32>> = (0..57)
            .map(|_| (0..6).map(|_| rng.gen_range(-3.0f32..3.0)).collect())
            .collect();
        let refs: Vec<&[f32]> = points.iter().map(Vec::as_slice).collect();
        let result = kmeans(&refs, 1, 7).unwrap();
        for j in 0..6 {
            let mean: f64 = points.iter().map(|p| f64::from(p[j])).sum::<f64>() / 57.0;
            assert!(
                (result.centroids[0][j] - mean).abs() <= 1e-12,
                "component {j}: centroid {} vs mean {mean}",
                result.centroids[0][j],
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 6. Determinism: identical seeds give identical models and predictions.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_determinism() {
    criterion(6, "determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let path = |name: &str| dir.path().join(name);
        let s = |p: &Path| p.to_str().unwrap().to_string();

        std::fs::write(
            path("train-scenario.cfg"),
            "duration_s = 160\nseed = 11\nattack.enabled = true\nattack.start_s = 20\n\
             attack.end_s = 140\nattack.pps = 25\nattack.clients = 8\n",
        )
        .unwrap();
        std::fs::write(
            path("predict-scenario.cfg"),
            "duration_s = 1005\nseed = 12\nattack.enabled = true\nattack.start_s = 100\n\
             attack.end_s = 900\nattack.pps = 25\nattack.clients = 8\n",
        )
        .unwrap();

        synids_ok(&[
            "gen",
            "--spec",
            &s(&path("train-scenario.cfg")),
            "--out",
            &s(&path("train.capture")),
            "--truth",
            &s(&path("train.truth.json")),
        ]);
        synids_ok(&[
            "gen",
            "--spec",
            &s(&path("predict-scenario.cfg")),
            "--out",
            &s(&path("predict.capture")),
        ]);
        synids_ok(&[
            "render",
            "--input",
            &s(&path("predict.capture")),
            "--out",
            &s(&path("predict-frames")),
            "--window",
            "1",
            "--size",
            "256",
        ]);

        // Two full training runs with the same seed; the second also changes
        // the worker count, which must not leak into the artifact.
        for (model, jobs) in [("model-a.bin", "1"), ("model-b.bin", "4")] {
            synids_ok(&[
                "train",
                "--capture",
                &s(&path("train.capture")),
                "--truth",
                &s(&path("train.truth.json")),
                "--model",
                &s(&path(model)),
                "--seed",
                "123",
                "--clusters",
                "64",
                "--rounds",
                "10",
                "--window",
                "1",
                "--size",
                "256",
                "--jobs",
                jobs,
            ]);
        }
        let model_a = std::fs::read(path("model-a.bin")).unwrap();
        let model_b = std::fs::read(path("model-b.bin")).unwrap();
        assert_eq!(model_a, model_b, "training runs produced different model files");

        // Predictions over >= 1000 frames, across repeat runs and worker counts.
        for (out, jobs) in [
            ("pred-jobs1.jsonl", "1"),
            ("pred-jobs8.jsonl", "8"),
            ("pred-jobs8-again.jsonl", "8"),
        ] {
            synids_ok(&[
                "predict",
                "--model",
                &s(&path("model-a.bin")),
                "--frames",
                &s(&path("predict-frames")),
                "--out",
                &s(&path(out)),
                "--jobs",
                jobs,
            ]);
        }
        let p1 = std::fs::read(path("pred-jobs1.jsonl")).unwrap();
        let p8 = std::fs::read(path("pred-jobs8.jsonl")).unwrap();
        let p8_again = std::fs::read(path("pred-jobs8-again.jsonl")).unwrap();
        assert_eq!(p1, p8, "--jobs 1 and --jobs 8 predictions differ");
        assert_eq!(p8, p8_again, "repeat prediction runs differ");
        let lines = p1.iter().filter(|&&b| b == b'\n').count();
        assert!(lines >= 1000, "only {lines} prediction lines");

        // In-process spot check: scoring the same 1000 vectors twice is
        // bit-identical.
        let model = load_model(&path("model-a.bin")).unwrap();
        let k = model.vocabulary.k;
        let mut rng = ChaCha8Rng::seed_from_u64(0xde7e);
        let vectors: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..k).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect();
        let pass = |vs: &[Vec<f64>]| -> Vec<(FrameLabel, u64, u64)> {
            vs.iter()
                .map(|v| {
                    let p = predict_with_ensemble(&model.ensemble, v);
                    (p.label, p.score.to_bits(), p.confidence.to_bits())
                })
                .collect()
        };
        assert_eq!(pass(&vectors), pass(&vectors));
    });
}

// ---------------------------------------------------------------------------
// 7. End-to-end comparative experiment at scale 0.1.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_experiment_end_to_end() {
    criterion(7, "experiment_end_to_end", || {
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("exp");
        synids_ok(&[
            "experiment",
            "--out",
            out.to_str().unwrap(),
            "--scale",
            "0.1",
            "--seed",
            "1",
            "--clusters",
            "128",
            "--rounds",
            "10",
            "--jobs",
            "4",
        ]);
        assert!(
            started.elapsed() < Duration::from_secs(600),
            "took {:?}",
            started.elapsed()
        );

        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap())
                .unwrap();
        let count = |path: &str, class: &str| -> u64 {
            report["counts"][path][class].as_u64().unwrap()
        };
        assert_eq!(count("train_small", "legitimate"), 150);
        assert_eq!(count("train_small", "ddos"), 50);
        assert_eq!(count("train_large", "legitimate"), 300);
        assert_eq!(count("train_large", "ddos"), 150);
        assert_eq!(count("test", "legitimate"), 100);
        assert_eq!(count("test", "ddos"), 100);

        // Each evaluation's stored rates must satisfy the definitions
        // exactly when recomputed from its own confusion counts.
        let rates = |which: &str| -> (f64, f64, f64) {
            let section = &report[which];
            let tp = section["true_positives"].as_u64().unwrap() as f64;
            let fp = section["false_positives"].as_u64().unwrap() as f64;
            let tn = section["true_negatives"].as_u64().unwrap() as f64;
            let fn_ = section["false_negatives"].as_u64().unwrap() as f64;
            let dr = tp / (tp + fn_);
            let fpr = fp / (fp + tn);
            let cr = (dr + (1.0 - fpr)) / 2.0;
            assert_eq!(section["dr"].as_f64().unwrap(), dr, "{which} dr mismatch");
            assert_eq!(section["fpr"].as_f64().unwrap(), fpr, "{which} fpr mismatch");
            assert_eq!(section["cr"].as_f64().unwrap(), cr, "{which} cr mismatch");
            (dr, fpr, cr)
        };
        let (dr_small, _, cr_small) = rates("small");
        let (dr_large, _, cr_large) = rates("large");

        // More training data must not hurt detection, and the larger model
        // must clear the quality bar on the held-out set.
        assert!(
            dr_large >= dr_small,
            "dr went backwards: small {dr_small}, large {dr_large}"
        );
        assert!(
            cr_large >= 0.85,
            "cr {cr_large} below bar (small model scored {cr_small})"
        );

        // The companion artifacts all landed.
        for name in [
            "report.txt",
            "model-small.bin",
            "model-large.bin",
            "model-small.log.json",
            "model-large.log.json",
        ] {
            assert!(out.join(name).exists(), "missing {name}");
        }
    });
}

// ---------------------------------------------------------------------------
// 8. Capture round trip and truncation detection.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_capture_round_trip() {
    criterion(8, "capture_round_trip", || {
        let dir = tempfile::tempdir().unwrap();
        let mut last_bytes = Vec::new();
        for i in 0..10u64 {
            let spec = if i % 2 == 0 {
                ScenarioSpec::background_only(4.0 + i as f64, 7_100 + i)
            } else {
                ScenarioSpec::with_attack(6.0 + i as f64, 1.0, 4.0 + i as f64, 18.0, 7_100 + i)
            };
            let (packets, _truth) = generate(&spec).unwrap();
            assert!(!packets.is_empty(), "scenario {i} generated nothing");

            let path = dir.path().join(format!("scenario-{i}.capture"));
            write_capture(&packets, &path, CaptureFormat::Capture).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            let read = parse_capture(&bytes);
            assert!(read.error.is_none(), "scenario {i}: {:?}", read.error);
            assert_eq!(read.skipped.total(), 0, "scenario {i} skipped records");
            assert_eq!(read.packets, packets, "scenario {i} round trip drifted");
            last_bytes = bytes;
        }

        // Cutting a record short must surface as a truncation error, both
        // inside a record body and inside a record header.
        assert!(last_bytes.len() > 24 + 16 + 8);
        for cut in [last_bytes.len() - 7, 24 + 16 + 5, 24 + 9] {
            let read = parse_capture(&last_bytes[..cut]);
            assert!(
                matches!(
                    read.error,
                    Some(synids_core::CaptureError::TruncatedRecord { .. })
                ),
                "cut at {cut}: expected truncation, got {:?}",
                read.error
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 9. Descriptor contracts: shape, normalization, stability.
// ---------------------------------------------------------------------------

/// Separable Gaussian blur on u8 pixels with reflect-101 borders, used to
/// band-limit the stability fixture.
fn blur_u8(gray: &[u8], size: usize, sigma: f64) -> Vec<u8> {
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let reflect = |i: isize| -> usize {
        let n = size as isize;
        let mut i = i;
        while i < 0 || i >= n {
            i = if i < 0 { -i } else { 2 * n - 2 - i };
        }
        i as usize
    };
    let mut tmp = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + k as isize - radius);
                acc += kv * f64::from(gray[y * size + xi]);
            }
            tmp[y * size + x] = acc / total;
        }
    }
    let mut out = vec![0u8; size * size];
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + k as isize - radius);
                acc += kv * tmp[yi * size + x];
            }
            out[y * size + x] = (acc / total).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn upscale2(gray: &[u8], size: usize) -> Vec<u8> {
    let big = size * 2;
    let mut out = vec![0u8; big * big];
    for y in 0..big {
        for x in 0..big {
            out[y * big + x] = gray[(y / 2) * size + x / 2];
        }
    }
    out
}

fn assert_descriptor_contracts(values: &[f32], context: &str) {
    assert_eq!(values.len(), 128, "{context}: wrong length");
    let norm: f64 = values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    assert!((norm - 1.0).abs() <= 1e-6, "{context}: norm {norm}");
    for (i, &v) in values.iter().enumerate() {
        assert!(v >= 0.0, "{context}: component {i} negative ({v})");
        assert!(
            f64::from(v) <= 0.2 + 1e-6,
            "{context}: component {i} above cap ({v})"
        );
    }
}

#[test]
fn criterion_9_descriptor_contracts() {
    criterion(9, "descriptor_contracts", || {
        // (a) Contracts over descriptors from rendered traffic frames.
        let spec = ScenarioSpec::with_attack(40.0, 5.0, 30.0, 25.0, 31);
        let (packets, _) = generate(&spec).unwrap();
        let opts = RenderOptions {
            window_us: 5_000_000,
            size: 256,
            ..RenderOptions::default()
        };
        let (frames, _) = render_packets(&packets, &opts).unwrap();
        assert!(!frames.is_empty());
        let params = SiftParams::for_rendered_frames();
        let mut total = 0usize;
        for (i, frame) in frames.iter().enumerate() {
            let set = extract_from_frame(frame, &params);
            assert_eq!(set.keypoints.len(), set.descriptors.len());
            for d in &set.descriptors {
                assert_descriptor_contracts(&d.values, &format!("frame {i}"));
            }
            total += set.descriptors.len();
        }
        assert!(total > 0, "rendered corpus produced no descriptors");

        // ...and from a synthetic high-contrast scene.
        let canvas = 256usize;
        let squares = [(30usize, 30usize, 18usize), (150, 40, 26), (60, 150, 30), (170, 160, 38)];
        let mut sharp = vec![0u8; canvas * canvas];
        for &(left, top, side) in &squares {
            for y in top..top + side {
                for x in left..left + side {
                    sharp[y * canvas + x] = 255;
                }
            }
        }
        let base_img = blur_u8(&sharp, canvas, 1.5);
        let default_params = SiftParams::default();
        let set = extract_descriptors(&base_img, canvas as u32, canvas as u32, &default_params);
        assert!(!set.descriptors.is_empty());
        for d in &set.descriptors {
            assert_descriptor_contracts(&d.values, "squares fixture");
        }

        // (b) A featureless image yields no keypoints.
        for level in [0u8, 128, 255] {
            let uniform = vec![level; canvas * canvas];
            let kps = detect_keypoints(&uniform, canvas as u32, canvas as u32, &default_params);
            assert!(kps.is_empty(), "uniform level {level} produced {} keypoints", kps.len());
        }

        // (c) Scale stability: consistently dilating the square scene 2x
        // re-detects most keypoints at doubled coordinates and roughly
        // doubled scale.
        let base = detect_keypoints(&base_img, canvas as u32, canvas as u32, &default_params);
        assert!(base.len() >= 4, "base fixture too sparse: {} keypoints", base.len());
        let big = blur_u8(&upscale2(&sharp, canvas), canvas * 2, 3.0);
        let scaled = detect_keypoints(&big, (canvas * 2) as u32, (canvas * 2) as u32, &default_params);
        let recurred = base
            .iter()
            .filter(|k| {
                scaled.iter().any(|s| {
                    (s.x - 2.0 * k.x).hypot(s.y - 2.0 * k.y) <= 4.0
                        && s.scale / k.scale > 1.4
                        && s.scale / k.scale < 2.9
                })
            })
            .count();
        let rate = recurred as f64 / base.len() as f64;
        assert!(
            rate >= 0.6,
            "recurrence {recurred}/{} = {rate:.2}",
            base.len()
        );
    });
}

// ---------------------------------------------------------------------------
// 10. Boosting trace against a scalar re-derivation.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_boosting_trace() {
    criterion(10, "boosting_trace", || {
        // Two overlapping 2-D classes, 20 points each, fixed by seed.
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0_05_71);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<FrameLabel> = Vec::new();
        for i in 0..40 {
            let ddos = i % 2 == 1;
            let center = if ddos { (0.7, 0.4) } else { (-0.7, -0.4) };
            rows.push(vec![
                center.0 + rng.gen_range(-1.2..1.2),
                center.1 + rng.gen_range(-1.2..1.2),
            ]);
            labels.push(if ddos { FrameLabel::Ddos } else { FrameLabel::Legitimate });
        }
        let sign = |l: FrameLabel| -> i8 {
            if l == FrameLabel::Ddos {
                1
            } else {
                -1
            }
        };

        let rounds = 10;
        let ensemble = adaboost_train(&rows, &labels, rounds, 0).unwrap();

        // Scalar trace: same weak learner, boosting arithmetic recomputed
        // step by step with plain loops.
        let n = rows.len();
        let mut weights = vec![1.0 / n as f64; n];
        let mut expected_eps: Vec<f64> = Vec::new();
        let mut expected_alpha: Vec<f64> = Vec::new();
        for _ in 0..rounds {
            let nb = train_nb(&rows, &labels, &weights).unwrap();
            let preds: Vec<i8> = rows.iter().map(|r| nb.decide(r)).collect();
            let mut eps = 0.0;
            for i in 0..n {
                if preds[i] != sign(labels[i]) {
                    eps += weights[i];
                }
            }
            if eps >= 0.5 {
                break;
            }
            let eps_clamped = eps.clamp(1e-10, 1.0 - 1e-10);
            let alpha = 0.5 * ((1.0 - eps_clamped) / eps_clamped).ln();
            expected_eps.push(eps);
            expected_alpha.push(alpha);
            if eps <= 1e-10 {
                break;
            }
            let scale = alpha.exp();
            for i in 0..n {
                if preds[i] != sign(labels[i]) {
                    weights[i] *= scale;
                }
            }
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
        }

        assert!(
            expected_eps.len() >= 2,
            "fixture stopped after {} rounds; too trivial to trace",
            expected_eps.len()
        );
        assert_eq!(ensemble.round_errors.len(), expected_eps.len());
        assert_eq!(ensemble.alphas.len(), expected_alpha.len());
        for t in 0..expected_eps.len() {
            assert!(
                (ensemble.round_errors[t] - expected_eps[t]).abs() <= 1e-9,
                "round {t}: eps {} vs oracle {}",
                ensemble.round_errors[t],
                expected_eps[t],
            );
            assert!(
                (ensemble.alphas[t] - expected_alpha[t]).abs() <= 1e-9,
                "round {t}: alpha {} vs oracle {}",
                ensemble.alphas[t],
                expected_alpha[t],
            );
        }

        // Adding rounds never hurts on the training set: the 0-1 error of
        // each ensemble prefix is non-increasing.
        let mut previous = f64::INFINITY;
        for t in 1..=ensemble.learners.len() {
            let mistakes = rows
                .iter()
                .zip(&labels)
                .filter(|(row, &label)| {
                    let score: f64 = ensemble.learners[..t]
                        .iter()
                        .zip(&ensemble.alphas[..t])
                        .map(|(nb, alpha)| alpha * f64::from(nb.decide(row)))
                        .sum();
                    let predicted = if score > 0.0 {
                        FrameLabel::Ddos
                    } else {
                        FrameLabel::Legitimate
                    };
                    predicted != label
                })
                .count();
            let error = mistakes as f64 / rows.len() as f64;
            assert!(
                error <= previous + 1e-12,
                "training error rose to {error} with {t} rounds"
            );
            previous = error;
        }
    });
}
