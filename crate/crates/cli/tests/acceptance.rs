//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one `PASS`/`FAIL` line per criterion; the process fails if any does.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vmflow::audit::{audit_loss, LossKind};
use vmflow::correlation::{kl_softmax, SENTINEL};
use vmflow::data::io::{decode_flow, encode_flow};
use vmflow::data::{rgb_to_yuv, voxelize_events, FlowField2D, ProjectedPoint, ProjectedPoints};
use vmflow::luminance::accumulate_intensity;
use vmflow::pipeline::{generate_synthetic, run_pipeline, run_structure, Ablation, PipelineConfig, PipelineInputs};
use vmflow::structure::{cluster_neighbors, ClusterParams, DistanceParams, Event2DPoints, EventPoint};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(overrides: &[&str]) -> PipelineConfig {
    PipelineConfig::default()
        .with_overrides(overrides)
        .expect("valid overrides")
}

fn inputs(cfg: &PipelineConfig) -> PipelineInputs {
    PipelineInputs::from(&generate_synthetic(&cfg.scene, cfg.seed, cfg.threshold).expect("scene"))
}

// ------------------------------------------------------------- criterion 1

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in LossKind::ALL {
        let r = audit_loss(kind, 0..20).expect("audit runs");
        pass &= r.passed() && r.seeds == 20;
        parts.push(format!("{kind} {:.1e}", r.check.max_rel_err));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    outcome(pass, format!("max rel err: {}; {secs:.1} s", parts.join(", ")))
}

// ------------------------------------------------------------- criterion 2

fn accumulation() -> Outcome {
    let base = PipelineConfig::default();
    let c = base.threshold;
    let (mut exact, mut worst) = (true, 0.0f64);
    for seed in 0..10u64 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.scene.translation = [0.05 + 0.02 * seed as f64, 0.01 * (seed % 4) as f64, 0.0];
        let scene = generate_synthetic(&cfg.scene, seed, c).expect("scene");
        let full = accumulate_intensity(&scene.events, c, None).expect("accumulate");
        for slices in [1, 3, cfg.motion.slices, 7] {
            let sum = voxelize_events(&scene.events, slices, c).expect("voxelize").sum_image();
            exact &= sum.data.iter().zip(&full.data).all(|(a, b)| a.to_bits() == b.to_bits());
        }
        let (y1, _, _) = rgb_to_yuv(&scene.frame_t).expect("luma");
        let (y2, _, _) = rgb_to_yuv(&scene.frame_t2).expect("luma");
        let ix = accumulate_intensity(&scene.events, c, Some((scene.t, scene.t2))).expect("accumulate");
        for (i, v) in ix.data.iter().enumerate() {
            worst = worst.max((v - (y2.data[i] - y1.data[i])).abs());
        }
    }
    outcome(
        exact && worst <= c,
        format!("slice sums bit-exact: {exact}; max |I - dI| = {worst:.4} (C = {c})"),
    )
}

// ------------------------------------------------------------- criterion 3

#[derive(Clone, Copy)]
struct Pt {
    u: f64,
    v: f64,
    attr: f64,
    lidar: bool,
}

fn split(points: &[Pt]) -> (Event2DPoints, ProjectedPoints) {
    let mut ev = Event2DPoints::default();
    let mut li = ProjectedPoints::default();
    for p in points {
        if p.lidar {
            let source = li.entries.len();
            li.entries.push(ProjectedPoint {
                u: p.u,
                v: p.v,
                d: p.attr,
                source,
            });
        } else {
            ev.entries.push(EventPoint {
                u: p.u,
                v: p.v,
                p: p.attr,
            });
        }
    }
    (ev, li)
}

fn sse(members: &[Pt], n_s: f64, d_max: f64) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let n = members.len() as f64;
    let mu = members.iter().map(|p| p.u).sum::<f64>() / n;
    let mv = members.iter().map(|p| p.v).sum::<f64>() / n;
    let attr = |p: &Pt| if p.lidar { p.attr / d_max } else { p.attr };
    let mean = |lidar: bool| {
        let a: Vec<f64> = members.iter().filter(|p| p.lidar == lidar).map(attr).collect();
        if a.is_empty() {
            0.0
        } else {
            a.iter().sum::<f64>() / a.len() as f64
        }
    };
    let (me, ml) = (mean(false), mean(true));
    members
        .iter()
        .map(|p| {
            let da = attr(p) - if p.lidar { ml } else { me };
            da * da + ((p.u - mu).powi(2) + (p.v - mv).powi(2)) / (n_s * n_s)
        })
        .sum()
}

fn clustering() -> Outcome {
    let (w, h) = (64usize, 32usize);
    let mut monotone = 0;
    for instance in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(instance);
        let n = rng.random_range(50..200);
        let points: Vec<Pt> = (0..n)
            .map(|_| {
                let lidar = rng.random_bool(0.3);
                Pt {
                    u: rng.random_range(0.0..w as f64),
                    v: rng.random_range(0.0..h as f64),
                    attr: if lidar {
                        rng.random_range(2.0..40.0)
                    } else {
                        f64::from(rng.random_range(-1i8..=1))
                    },
                    lidar,
                }
            })
            .collect();
        let (ev, li) = split(&points);
        let params = ClusterParams {
            clusters: rng.random_range(2..16),
            iters: 10,
            distance: DistanceParams::new(rng.random_range(2.0..16.0)).unwrap(),
            seed: instance,
        };
        let map = cluster_neighbors(&ev, &li, w, h, &params).expect("clusters");
        let ok = map.history.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12))
            && map.objective <= map.history.last().unwrap() * (1.0 + 1e-12);
        monotone += usize::from(ok);
    }

    let n_s = 8.0;
    let mut exact = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let points: Vec<Pt> = (0..12)
            .map(|i| {
                let (cu, cv) = [(14.0, 16.0), (50.0, 16.0)][i % 2];
                let lidar = rng.random_bool(0.4);
                Pt {
                    u: cu + rng.random_range(-4.0..4.0),
                    v: cv + rng.random_range(-4.0..4.0),
                    attr: if lidar {
                        rng.random_range(5.0..20.0)
                    } else if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    },
                    lidar,
                }
            })
            .collect();
        let (ev, li) = split(&points);
        let params = ClusterParams {
            clusters: 2,
            iters: 50,
            distance: DistanceParams::new(n_s).unwrap(),
            seed,
        };
        let map = cluster_neighbors(&ev, &li, w, h, &params).expect("clusters");
        let d_max = li.entries.iter().map(|p| p.d).fold(0.0, f64::max);
        let mut best = (0u32, f64::INFINITY);
        for bits in 0u32..(1 << 11) {
            let mask = bits << 1;
            let a: Vec<Pt> = (0..12).filter(|i| mask >> i & 1 == 0).map(|i| points[i]).collect();
            let b: Vec<Pt> = (0..12).filter(|i| mask >> i & 1 == 1).map(|i| points[i]).collect();
            let cost = sse(&a, n_s, d_max) + sse(&b, n_s, d_max);
            if cost < best.1 {
                best = (mask, cost);
            }
        }
        let (mut e_at, mut l_at) = (0, 0);
        let labels: Vec<usize> = points
            .iter()
            .map(|p| {
                if p.lidar {
                    l_at += 1;
                    map.lidar_assignment[l_at - 1]
                } else {
                    e_at += 1;
                    map.event_assignment[e_at - 1]
                }
            })
            .collect();
        let ours: u32 = (0..12).map(|i| u32::from(labels[i] != labels[0]) << i).sum();
        if ours == best.0 && (map.objective - best.1).abs() <= 1e-9 * best.1.max(1.0) {
            exact += 1;
        }
    }
    outcome(
        monotone == 50 && exact == 10,
        format!("monotone on {monotone}/50 instances; exhaustive 2-means matched on {exact}/10"),
    )
}

// ------------------------------------------------------------- criterion 4

fn brute_kl(a: &[f64], b: &[f64]) -> f64 {
    let keep: Vec<usize> = (0..a.len()).filter(|&i| a[i] != SENTINEL && b[i] != SENTINEL).collect();
    if keep.is_empty() {
        return 0.0;
    }
    let za: f64 = keep.iter().map(|&i| a[i].exp()).sum();
    let zb: f64 = keep.iter().map(|&i| b[i].exp()).sum();
    keep.iter()
        .map(|&i| {
            let p = a[i].exp() / za;
            p * (p / (b[i].exp() / zb)).ln()
        })
        .sum()
}

fn kl() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut negative, mut zero_mismatch, mut nonzero_same) = (0.0f64, 0, 0, 0);
    let cases = 20_000;
    for _ in 0..cases {
        let len = rng.random_range(1..=9);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..len)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        SENTINEL
                    } else {
                        rng.random_range(-6.0..6.0)
                    }
                })
                .collect()
        };
        let a = draw(&mut rng);
        let b = if rng.random_bool(0.2) {
            a.clone()
        } else {
            draw(&mut rng)
        };
        let (value, _, _) = kl_softmax(&a, &b);
        let oracle = brute_kl(&a, &b);
        worst = worst.max((value - oracle).abs());
        negative += usize::from(value < 0.0);
        if a == b {
            nonzero_same += usize::from(value != 0.0);
        } else if oracle > 1e-9 {
            zero_mismatch += usize::from(value == 0.0);
        }
    }
    outcome(
        worst <= 1e-10 && negative == 0 && zero_mismatch == 0 && nonzero_same == 0,
        format!(
            "{cases} profiles of length <= 9: max |KL - brute force| = {worst:.1e}; negative {negative}; \
             zero on differing {zero_mismatch}; nonzero on identical {nonzero_same}"
        ),
    )
}

// ------------------------------------------------------------- criterion 5

fn densification() -> Outcome {
    let cfg = config(&["scene.occluder=false", "scene.plane_tilt=0.3", "scene.beam_stride=8"]);
    let scene = generate_synthetic(&cfg.scene, cfg.seed, cfg.threshold).expect("scene");
    let out = run_structure(&PipelineInputs::from(&scene), &cfg).expect("structure");
    let ratio = out.coverage_fused / out.coverage_raw;
    let w = scene.camera.width;
    let (mut far, mut outside, mut worst) = (0, 0, 0.0f64);
    for f in &out.depth_fills {
        let gt = scene.gt_depth_t.data[f.y * w + f.x];
        let rel = (f.depth - gt).abs() / gt;
        worst = worst.max(rel);
        far += usize::from(rel > 0.05);
        outside += usize::from(f.depth < f.source_min || f.depth > f.source_max);
    }
    let n = out.depth_fills.len();
    outcome(
        ratio >= 2.0 && n > 0 && far == 0 && outside == 0,
        format!(
            "coverage {:.3} -> {:.3} ({ratio:.2}x); {n} fills, worst rel err {:.2}%, {far} beyond 5%, {outside} outside source range",
            out.coverage_raw,
            out.coverage_fused,
            100.0 * worst
        ),
    )
}

// ------------------------------------------------------------- criterion 6

fn rigid_translation() -> Outcome {
    let cfg = config(&["scene.occluder=false"]);
    let inp = inputs(&cfg);
    let start = Instant::now();
    let out = run_pipeline(&inp, &cfg).expect("pipeline");
    let secs = start.elapsed().as_secs_f64();
    let m = out.report.metrics.expect("ground truth present");
    outcome(
        m.epe_2d < 0.5 && m.acc_2d > 90.0 && secs < 60.0,
        format!(
            "{}x{} scene: EPE {:.4} px, ACC {:.1}%, {secs:.1} s single-threaded",
            cfg.scene.width, cfg.scene.height, m.epe_2d, m.acc_2d
        ),
    )
}

// ------------------------------------------------------------- criterion 7

fn ablation() -> Outcome {
    let arms = [Ablation::NoFusion, Ablation::MotionOnly, Ablation::Full];
    let mut sums = [0.0; 3];
    let mut ordered = 0;
    for seed in 0..10u64 {
        let mut cfg = config(&["scene.low_light=true"]);
        cfg.seed = seed;
        let inp = inputs(&cfg);
        let epe: Vec<f64> = arms
            .iter()
            .map(|&arm| {
                run_pipeline(&inp, &cfg.ablated(arm))
                    .expect("pipeline")
                    .report
                    .metrics
                    .expect("ground truth present")
                    .epe_2d
            })
            .collect();
        for (s, e) in sums.iter_mut().zip(&epe) {
            *s += e;
        }
        ordered += usize::from(epe[2] <= epe[1] && epe[1] <= epe[0]);
    }
    let mean = sums.map(|s| s / 10.0);
    let strict = mean[2] < mean[1] && mean[2] < mean[0];
    outcome(
        ordered == 10 && strict,
        format!(
            "ordering held on {ordered}/10 low-light occluded scenes; mean EPE none {:.3}, motion {:.3}, full {:.3}",
            mean[0], mean[1], mean[2]
        ),
    )
}

// ------------------------------------------------------------- criterion 8

fn vmflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmflow"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 6] = [
    "--set",
    "scene.width=48",
    "--set",
    "scene.height=40",
    "--set",
    "scene.occluder_rect=[12,10,30,26]",
];

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

/// Damage one input file so that it no longer parses or no longer agrees
/// with the rest of the scene.
fn corrupt(dir: &Path, rng: &mut ChaCha8Rng) -> String {
    let text_files = ["events.txt", "cloud_t.txt", "cloud_t2.txt", "scene.toml"];
    let binary_files = ["frame_t.ppm", "frame_t2.ppm", "gt_flow.flo", "gt_occlusion.pgm"];
    let junk = ["@@", "nan", "1e999", "--", "0x1F", "\u{fffd}", "1 2", "[[", "inf"];
    if rng.random_bool(0.5) {
        let name = text_files[rng.random_range(0..text_files.len())];
        let path = dir.join(name);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let token = junk[rng.random_range(0..junk.len())];
        let at = rng.random_range(0..=lines.len());
        let what = match rng.random_range(0..3) {
            0 if name != "scene.toml" => {
                let data: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].starts_with('#')).collect();
                let i = data[rng.random_range(0..data.len())];
                let mut fields: Vec<String> = lines[i].split_whitespace().map(str::to_string).collect();
                let f = rng.random_range(0..fields.len());
                fields[f] = token.to_string();
                lines[i] = fields.join(" ");
                format!("field {f} of line {} set to {token:?}", i + 1)
            }
            1 => {
                lines.insert(at, format!("{token} {token} {token} {token}"));
                format!("junk line {token:?} at {}", at + 1)
            }
            _ => {
                lines.insert(at, format!("unknown_key_{at} = {token}"));
                format!("stray assignment at line {}", at + 1)
            }
        };
        fs::write(&path, lines.join("\n")).unwrap();
        format!("{name}: {what}")
    } else {
        let name = binary_files[rng.random_range(0..binary_files.len())];
        let path = dir.join(name);
        let mut bytes = fs::read(&path).unwrap();
        let what = match rng.random_range(0..3) {
            0 => {
                let keep = rng.random_range(0..bytes.len());
                bytes.truncate(keep);
                format!("truncated to {keep} bytes")
            }
            1 => {
                let i = rng.random_range(0..3);
                bytes[i] ^= 0x40;
                format!("magic byte {i} flipped")
            }
            _ => {
                let extra = rng.random_range(1..64);
                bytes.extend((0..extra).map(|_| rng.random::<u8>()));
                format!("{extra} trailing bytes")
            }
        };
        fs::write(&path, bytes).unwrap();
        format!("{name}: {what}")
    }
}

fn robustness() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    let mut run = vec!["run", "--seed", "9", "--json"];
    run.extend(SMALL);
    let a = vmflow(&run);
    let b = vmflow(&run);
    let reproducible = a.status.code() == Some(0) && a.stdout == b.stdout && !a.stdout.is_empty();

    let scene = root.join("scene");
    let mut gen = vec!["generate", "--seed", "9", "--out", scene.to_str().unwrap()];
    gen.extend(SMALL);
    let generated = vmflow(&gen).status.code() == Some(0);
    let out_a = root.join("a");
    let out_b = root.join("b");
    for out in [&out_a, &out_b] {
        vmflow(&[
            "run",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let same_files = ["report.json", "report.txt", "flow.flo"]
        .iter()
        .all(|f| matches!((fs::read(out_a.join(f)), fs::read(out_b.join(f))), (Ok(x), Ok(y)) if x == y));

    let flow_bytes = fs::read(out_a.join("flow.flo")).unwrap_or_default();
    let mut round_trip = decode_flow(&flow_bytes).is_ok_and(|f| encode_flow(&f) == flow_bytes);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        let mut data = Vec::with_capacity(2 * w * h);
        let mut valid = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            let ok = rng.random_bool(0.8);
            let (u, v) = if ok {
                (
                    rng.random::<f32>() * 40.0 - 20.0,
                    f32::from_bits(rng.random::<u32>() & 0x3fff_ffff),
                )
            } else {
                (0.0, 0.0)
            };
            data.extend([u as f64, v as f64]);
            valid.push(u8::from(ok));
        }
        let flow = FlowField2D::new(w, h, data, valid).unwrap();
        let bytes = encode_flow(&flow);
        round_trip &= decode_flow(&bytes).is_ok_and(|f| f == flow && encode_flow(&f) == bytes);
    }

    let cases = 60;
    let mut failures = Vec::new();
    for case in 0..cases {
        let dir = root.join(format!("fuzz{case}"));
        copy_dir(&scene, &dir);
        let what = corrupt(&dir, &mut rng);
        let out = vmflow(&["run", "--scene", dir.to_str().unwrap()]);
        if out.status.code() != Some(1) {
            failures.push(format!("{what} -> {:?}", out.status.code()));
        }
    }
    for case in 0..20 {
        let path = root.join(format!("noise{case}.flo"));
        let mut bytes: Vec<u8> = (0..rng.random_range(0..400)).map(|_| rng.random()).collect();
        if case % 2 == 0 && bytes.len() >= 4 {
            bytes[..4].copy_from_slice(b"VMFL");
        }
        fs::write(&path, &bytes).unwrap();
        let gt = scene.join("gt_flow.flo");
        let out = vmflow(&[
            "metrics",
            "--pred",
            path.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ]);
        if out.status.code() != Some(1) {
            failures.push(format!("random flow file {case} -> {:?}", out.status.code()));
        }
    }
    let detail = format!(
        "identical reports: {}; flow round trip bit-exact: {round_trip}; {}/{} malformed inputs exited with 1{}",
        reproducible && generated && same_files,
        cases + 20 - failures.len(),
        cases + 20,
        if failures.is_empty() {
            String::new()
        } else {
            format!(" (first miss: {})", failures[0])
        }
    );
    outcome(
        reproducible && generated && same_files && round_trip && failures.is_empty(),
        detail,
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("loss gradients match finite differences", gradients),
        ("event slices sum to the full accumulation", accumulation),
        ("clustering is monotone and optimal on two blobs", clustering),
        ("KL alignment matches brute force", kl),
        ("depth densification on a beam-sparse scene", densification),
        ("rigid translation accuracy and runtime", rigid_translation),
        ("fusion ablation ordering", ablation),
        ("reproducibility, flow round trip, malformed input", robustness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {id} {}: {name} | {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
