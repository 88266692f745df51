//! Acceptance suite. Prints one line per criterion and fails if any
//! criterion that ran did not pass.
//!
//! Criterion 5 needs the real Cornell Grasping Dataset: point
//! `GRASP_CGD_RAW` at the unpacked directory to run it.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::time::{Duration, Instant};

use grasp::dataset::synth::{synth_scenes, SynthConfig};
use grasp::dataset::{convert, prepare_sample, CacheSource, InputMode, MemorySource, SceneSource};
use grasp::ginnet::{GiNet, GinnetSpec};
use grasp::learn::{
    build_model, evaluate, fit_batch, train, ArchConfig, TrainConfig, GRCONVNET_PARAMS, REFERENCE_PARAMS,
};
use grasp::model::{from_map_sets, ModelKind};
use grasp::nn::{count_params, Tensor};
use grasp::vqvae::{stack, Quantizer, VqvaeSpec};
use grasp_core::augment::AugmentRanges;
use grasp_core::frames::{
    camera_to_robot, deproject, deproject_with_depth, image_grasp_to_robot_grasp, CameraIntrinsics, Extrinsic,
};
use grasp_core::loss::{grasp_huber_loss, grasp_huber_loss_grad, huber};
use grasp_core::maps::DEFAULT_MAX_WIDTH;
use grasp_core::quantize::quantize;
use grasp_core::{
    decode_grasps, encode_target_maps, iou, rectangle_metric, GraspMapSet, Grid, ImageGrasp, MetricThresholds, Point2,
};
use nalgebra::{Point3, Rotation3, Vector3};
use oracle::{angle_dist, brute_nearest, central_diff, exact_iou, grasp, random_pair, rel_err};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(started: Instant, limit: Duration) -> (bool, String) {
    let t = started.elapsed();
    (t < limit, format!("{:.2}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let pairs = 1000;
    for _ in 0..pairs {
        let (a, b) = random_pair(&mut rng);
        worst = worst.max((iou(&a, &b).unwrap() - exact_iou(&a, &b)).abs());
    }

    let th = MetricThresholds::default();
    let gt = grasp(100.0, 100.0, 0.0, 40.0);
    let pos = [gt.to_default_rect().unwrap()];
    let square = [gt.to_rect(40.0).unwrap()];
    let near = |deg: f64| grasp(100.0, 119.5, f64::to_radians(deg), 40.0);
    let overlap = iou(&near(10.0).to_default_rect().unwrap(), &pos[0]).unwrap();
    let table = [
        rectangle_metric(&gt, &pos, &th).unwrap(),
        !rectangle_metric(&grasp(100.0, 100.0, 35f64.to_radians(), 40.0), &square, &th).unwrap(),
        (0.27..0.33).contains(&overlap) && rectangle_metric(&near(10.0), &pos, &th).unwrap(),
    ];
    let (fast, time) = within(started, Duration::from_secs(60));
    check(
        worst <= 0.02 && table.iter().all(|&t| t) && fast,
        format!("{pairs} pairs, max |raster - exact| {worst:.4} (<= 0.02); truth table {table:?}; {time}"),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dc, mut da, mut dw, mut rt): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..200 {
        let g = grasp(
            rng.random_range(40.0..60.0),
            rng.random_range(40.0..60.0),
            oracle::random_angle(&mut rng),
            rng.random_range(30.0..60.0),
        );
        let rect = g.to_rect(rng.random_range(12.0..24.0)).unwrap();
        let maps = encode_target_maps(&[rect], 100, 100, DEFAULT_MAX_WIDTH).unwrap();
        let d = decode_grasps(&maps, 1)[0];
        dc = dc.max((d.center - g.center).norm());
        da = da.max(angle_dist(d.angle, g.angle).to_degrees());
        dw = dw.max((d.width - g.width).abs() / g.width);

        let back = rect.to_image_grasp().unwrap();
        rt = rt
            .max((back.center - g.center).norm())
            .max(angle_dist(back.angle, g.angle))
            .max((back.width - g.width).abs());
    }
    let (fast, time) = within(started, Duration::from_secs(60));
    check(
        dc <= 2.0 && da <= 2.0 && dw <= 0.05 && rt <= 1e-6 && fast,
        format!(
            "200 rects: center {dc:.2}px, angle {da:.2}deg, width {:.1}%, rect<->grasp {rt:.1e}; {time}",
            dw * 100.0
        ),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let values = [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5)];
    let exact = values.iter().all(|&(d, v)| huber(d) == v);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut grid = || Grid::from_fn(8, 8, |_, _| rng.random_range(-1.5..1.5));
    let target = GraspMapSet::new(grid(), grid(), grid(), grid()).unwrap();
    let pred = GraspMapSet::new(grid(), grid(), grid(), grid()).unwrap();
    let flat = |m: &GraspMapSet| m.heads().iter().flat_map(|h| h.as_slice().to_vec()).collect::<Vec<_>>();
    let rebuild = |v: &[f64]| {
        let h = |i: usize| Grid::from_vec(8, 8, v[i * 64..(i + 1) * 64].to_vec()).unwrap();
        GraspMapSet::new(h(0), h(1), h(2), h(3)).unwrap()
    };
    let (_, grad) = grasp_huber_loss_grad(&target, &pred).unwrap();
    let (x, g, t) = (flat(&pred), flat(&grad), flat(&target));
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        if ((x[i] - t[i]).abs() - 1.0).abs() < 1e-4 {
            continue;
        }
        let fd = central_diff(|v| grasp_huber_loss(&target, &rebuild(v)).unwrap(), &x, i, 1e-6);
        worst = worst.max(rel_err(fd, g[i]));
    }
    let (fast, time) = within(started, Duration::from_secs(60));
    check(
        exact && worst < 1e-3 && fast,
        format!("huber(0, 0.5, 2) = (0, 0.125, 1.5): {exact}; 4x8x8 gradient max rel err {worst:.1e}; {time}"),
    )
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sites, mut bitwise, mut idempotent, mut straight) = (0usize, true, true, true);
    for &n in &[1usize, 2, 7, 64, 256, 512] {
        let dim = rng.random_range(1..9);
        let q = Quantizer::new(n, dim, 0.25, &mut rng);
        let rows: Vec<Vec<f64>> = q.table().unwrap().as_slice().chunks(dim).map(<[f64]>::to_vec).collect();
        let z = Tensor::from_shape_simple_fn((2, dim, 3, 4), || rng.random_range(-0.1..0.1));
        let (zq, idx) = q.quantize(&z).unwrap();
        for b in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    let site: Vec<f64> = (0..dim).map(|d| z[[b, d, y, x]]).collect();
                    let k = brute_nearest(&rows, &site);
                    let s = (b * 3 + y) * 4 + x;
                    bitwise &= idx[s] == k && (0..dim).all(|d| zq[[b, d, y, x]].to_bits() == rows[k][d].to_bits());
                    sites += 1;
                }
            }
        }
        let (zq2, idx2) = q.quantize(&zq).unwrap();
        idempotent &= zq2 == zq && idx2 == idx;
        let flat: Vec<f64> = zq.iter().copied().collect();
        idempotent &= quantize(&flat, &q.table().unwrap()).is_ok();

        let mut qt = q.clone();
        qt.forward_train(&z).unwrap();
        let g = Tensor::from_shape_simple_fn(z.dim(), || rng.random_range(-1.0..1.0));
        straight &= qt.backward(&g, false) == g;
    }
    let (fast, time) = within(started, Duration::from_secs(60));
    check(
        bitwise && idempotent && straight && fast,
        format!("{sites} sites, N up to 512: argmin bitwise {bitwise}, idempotent {idempotent}, straight-through {straight}; {time}"),
    )
}

fn criterion_5() -> Outcome {
    let Some(raw) = std::env::var_os("GRASP_CGD_RAW") else {
        return Outcome::NotRun("Cornell Grasping Dataset not available (set GRASP_CGD_RAW to run)".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let summary = match convert(Path::new(&raw), dir.path()) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("ingestion failed: {e}")),
    };
    let source = CacheSource::open(dir.path()).unwrap();
    let (scenes, pos, neg) = source.totals();
    let multiplicity = TrainConfig::default().multiplicity;
    let ranges = AugmentRanges::default();
    let mut augmented = 0usize;
    for id in source.ids() {
        let scene = source.load(&id).unwrap();
        for k in 0..multiplicity {
            let s = prepare_sample(&scene, InputMode::Rgbd, 224, Some((&ranges, k as u64))).unwrap();
            augmented += s.positives.len();
        }
    }
    let ratio = augmented as f64 / 51_000.0;
    check(
        (scenes, pos, neg) == (885, 5110, 2909) && (0.9..=1.1).contains(&ratio),
        format!(
            "{summary}; augmented positives {augmented} ({:.1}% of 51000)",
            ratio * 100.0
        ),
    )
}

fn criterion_6() -> Outcome {
    let n = count_params(&GiNet::build(&GinnetSpec::default(), 0).unwrap());
    let dev = (n as f64 - REFERENCE_PARAMS as f64) / REFERENCE_PARAMS as f64;
    let report = evaluate_small().to_text();
    let embedded = report.contains(&format!("grconvnet={GRCONVNET_PARAMS}")) && GRCONVNET_PARAMS == 1_900_900;
    check(
        dev.abs() <= 0.10 && embedded,
        format!("GI-NNet {n} trainable parameters ({:+.2}% of {REFERENCE_PARAMS}); report embeds grconvnet={GRCONVNET_PARAMS}: {embedded}", dev * 100.0),
    )
}

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        ginnet: GinnetSpec::tiny(4),
        vqvae: VqvaeSpec::tiny(),
    }
}

fn small_source(n: usize) -> MemorySource {
    MemorySource::new(synth_scenes(n, &SynthConfig::small(48, 64), 17).unwrap())
}

fn evaluate_small() -> grasp::learn::EvalReport {
    let src = small_source(3);
    let model = build_model(ModelKind::Ginnet, &tiny_arch(), 0, None, true).unwrap();
    evaluate(
        &model,
        &src,
        &src.ids(),
        32,
        &MetricThresholds::default(),
        "ginnet",
        "none",
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    let src = small_source(2);
    let samples: Vec<_> = src
        .ids()
        .iter()
        .map(|id| prepare_sample(&src.load(id).unwrap(), InputMode::Rgbd, 32, None).unwrap())
        .collect();
    let x = stack(&samples.iter().map(|s| &s.input.data).collect::<Vec<_>>());
    let t = from_map_sets(&samples.iter().map(|s| s.targets.clone()).collect::<Vec<_>>()).unwrap();
    let mut model = build_model(ModelKind::Ginnet, &tiny_arch(), 0, None, true).unwrap();
    let losses = fit_batch(&mut model, &x, &t, 200, 1e-2, 0).unwrap();
    let first = losses[0];
    let hit = losses.iter().position(|&l| l < 0.1 * first);
    let overfit = match hit {
        Some(step) => format!("overfit: loss {first:.4} fell below 10% at step {step}"),
        None => format!("overfit: loss {first:.4} -> {:.4} after 200 steps", losses[199]),
    };
    if hit.is_none() {
        return Outcome::Fail(overfit);
    }
    Outcome::NotRun(format!(
        "{overfit} (PASS); desk-scale run needs the Cornell Grasping Dataset"
    ))
}

fn criterion_8() -> Outcome {
    Outcome::NotRun("full-scale reproduction needs the Cornell Grasping Dataset and overnight compute".into())
}

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0).unwrap();
    let depth = Grid::filled(480, 640, 0.9);
    let mut trivial = deproject(320.0, 240.0, &depth, &k).unwrap() == Point3::new(0.0, 0.0, 0.9);
    trivial &= (deproject_with_depth(620.0, 240.0, 1.2, &k) - Point3::new(0.6, 0.0, 1.2)).norm() <= 1e-12;
    let g = ImageGrasp::new(Point2::new(240.0, 320.0), 0.0, 100.0, 1.0).unwrap();
    let r = image_grasp_to_robot_grasp(&g, &depth, &k, &Extrinsic::identity()).unwrap();
    trivial &= (r.position - Point3::new(0.0, 0.0, 0.9)).norm() <= 1e-12 && (r.width - 0.15).abs() <= 1e-12;
    let turn = Extrinsic::from_parts(
        *Rotation3::from_euler_angles(0.0, 0.0, FRAC_PI_2).matrix(),
        Vector3::zeros(),
    )
    .unwrap();
    let yaw = image_grasp_to_robot_grasp(&g, &depth, &k, &turn).unwrap().yaw;
    trivial &= (yaw.abs() - FRAC_PI_2).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut iso, mut inv): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let mut v = || rng.random_range(-2.0..2.0);
        let t = Extrinsic::from_parts(
            *Rotation3::from_euler_angles(v(), v(), v()).matrix(),
            Vector3::new(v(), v(), v()),
        )
        .unwrap();
        let (a, b) = (Point3::new(v(), v(), v()), Point3::new(v(), v(), v()));
        iso = iso.max(((a - b).norm() - (camera_to_robot(&a, &t) - camera_to_robot(&b, &t)).norm()).abs());
        let (x, y, d) = (
            rng.random_range(0.0..640.0),
            rng.random_range(0.0..480.0),
            rng.random_range(0.3..3.0),
        );
        let (u, w) = k.project(&deproject_with_depth(x, y, d, &k));
        inv = inv.max((u - x).abs()).max((w - y).abs());
    }
    let (fast, time) = within(started, Duration::from_secs(1));
    check(
        trivial && iso <= 1e-9 && inv <= 1e-9 && fast,
        format!("trivial cases exact: {trivial}; isometry {iso:.1e}; reprojection {inv:.1e}; {time}"),
    )
}

fn criterion_10() -> Outcome {
    let src = small_source(8);
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 1,
        crop: 32,
        multiplicity: 1,
        test_fraction: 0.25,
        ..TrainConfig::default()
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&src, &cfg, &tiny_arch(), Some(dir.path())).unwrap();
        let splits = std::fs::read(dir.path().join("splits.txt")).unwrap();
        let ids = out.splits.test.clone();
        let report = evaluate(
            &out.model,
            &src,
            &ids,
            32,
            &MetricThresholds::default(),
            "ginnet",
            "run",
        )
        .unwrap();
        (splits, out.history[0].train_loss.to_bits(), report.to_text())
    };
    let (a, b) = (run(), run());
    check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2,
        format!(
            "splits identical {}, epoch-0 loss bitwise {}, report bytes identical {}",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("geometry oracle", criterion_1),
        ("map round trip", criterion_2),
        ("loss", criterion_3),
        ("quantizer", criterion_4),
        ("dataset checksums", criterion_5),
        ("architecture budget", criterion_6),
        ("training sanity", criterion_7),
        ("full-scale reproduction", criterion_8),
        ("frames", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
            Outcome::NotRun(d) => ("NOT-RUN", d),
        };
        println!("acceptance {:>2} {tag:<7} {name}: {detail}", i + 1);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
