//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! runtime and budget, then exits non-zero if any criterion failed.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use o3dsim::embedding::semantic_similarity;
use o3dsim::frame::FrameRecord;
use o3dsim::geometry::{dbscan, nnratio, symmetric_overlap, PointCloud};
use o3dsim::map::{build_map, InstanceMap, MergeConfig};
use o3dsim::nav::CellState;
use o3dsim::synth::{
    camera_path, evaluate_instance_recovery, generate_scene, map_scene, render_frames, RecoveryCounts, RenderOptions,
    SceneParams,
};
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn overlap_suite() -> Outcome {
    let mut r = rng(11);
    let deltas = [0.0, 0.01, 0.02, 0.05, 0.1];
    let taus = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut checked = 0;
    for pair in 0..200 {
        let a = PointCloud::new(random_cloud(&mut r, 200));
        let b = PointCloud::new(random_cloud(&mut r, 200));
        let extra: f64 = r.random_range(0.0..0.15);
        let mut previous = -1.0;
        let mut ds: Vec<f64> = deltas.to_vec();
        ds.push(extra);
        ds.sort_by(f64::total_cmp);
        for &d in &ds {
            let got = nnratio(&a, &b, d).map_err(|e| e.to_string())?;
            let want = brute_nnratio(&a.points, &b.points, d);
            check((0.0..=1.0).contains(&got), || format!("pair {pair}: ratio {got} out of range"))?;
            check((got - want).abs() <= 1e-12, || format!("pair {pair} delta {d}: {got} vs oracle {want}"))?;
            for tau in taus.iter().copied().chain([want]) {
                check((got >= tau) == (want >= tau), || format!("pair {pair}: decision at tau {tau} differs"))?;
            }
            check(got >= previous, || format!("pair {pair}: not monotone at delta {d}"))?;
            previous = got;
            let sym = symmetric_overlap(&a, &b, d).map_err(|e| e.to_string())?;
            let sym_want = want.max(brute_nnratio(&b.points, &a.points, d));
            check((sym - sym_want).abs() <= 1e-12, || format!("pair {pair}: symmetric {sym} vs {sym_want}"))?;
            checked += 1;
        }
        check(nnratio(&a, &a, 0.0).unwrap() == 1.0, || format!("pair {pair}: self ratio below 1"))?;
    }
    Ok(format!("{checked} ratios over 200 pairs agree with the brute-force oracle"))
}

fn similarity_suite() -> Outcome {
    let mut r = rng(12);
    let anchors = [
        (vec![0.6, 0.8, 0.0], vec![0.6, 0.8, 0.0], 1.0),
        (vec![0.6, 0.8, 0.0], vec![-0.6, -0.8, 0.0], 0.0),
        (vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 2.5], 0.5),
    ];
    for (a, b, want) in &anchors {
        let got = semantic_similarity(a, b).map_err(|e| e.to_string())?;
        check((got - want).abs() <= 1e-12, || format!("anchor {want}: got {got}"))?;
    }
    for i in 0..2000 {
        let dim = r.random_range(1..96);
        let a: Vec<f64> = random_unit(&mut r, dim);
        let b: Vec<f64> = random_unit(&mut r, dim);
        let s = semantic_similarity(&a, &b).map_err(|e| e.to_string())?;
        check((0.0..=1.0).contains(&s), || format!("case {i}: {s} out of range"))?;
        check(s == semantic_similarity(&b, &a).unwrap(), || format!("case {i}: not symmetric"))?;
        check((s - brute_similarity(&a, &b)).abs() <= 1e-12, || format!("case {i}: differs from oracle"))?;
        let (ka, kb) = (r.random_range(1e-3..1e3), r.random_range(1e-3..1e3));
        let sa: Vec<f64> = a.iter().map(|x| x * ka).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * kb).collect();
        let scaled = semantic_similarity(&sa, &sb).unwrap();
        check((scaled - s).abs() <= 1e-12, || format!("case {i}: scale changed {s} to {scaled}"))?;
    }
    Ok("anchors 1/0/0.5 exact; 2000 random pairs in range, symmetric, scale invariant".into())
}

fn dbscan_suite() -> Outcome {
    let mut r = rng(13);
    let mut clusters = 0;
    let mut noise = 0;
    for case in 0..100 {
        let pts = random_cloud(&mut r, 500);
        let eps = [0.02, 0.03, 0.05, 0.075][r.random_range(0..4)];
        let min_pts = r.random_range(1..12);
        let got = dbscan(&PointCloud::new(pts.clone()), eps, min_pts).map_err(|e| e.to_string())?;
        let want = sequential_dbscan(&pts, eps, min_pts);
        check(canonical(&got.labels) == canonical(&want), || {
            format!("case {case} ({} pts, eps {eps}, min_pts {min_pts}): partitions differ", pts.len())
        })?;
        clusters += got.num_clusters;
        noise += got.labels.iter().filter(|&&l| l < 0).count();
    }
    Ok(format!("100 clouds match the sequential oracle ({clusters} clusters, {noise} noise points)"))
}

/// Two frames that both see the only object in a one-object scene.
fn triad_frames() -> Result<(FrameRecord, FrameRecord, String), String> {
    let params = SceneParams { num_objects: 1, ..SceneParams::default() };
    let mut scene = generate_scene(&params, 3).map_err(|e| e.to_string())?;
    scene.objects[0].center[0] = 1.8;
    scene.objects[0].center[1] = 0.0;
    let label = scene.objects[0].class_name.clone();
    let path = camera_path(&scene);
    let frames = render_frames(&scene, &path, &scene.camera.intrinsics(), &RenderOptions::default());
    let seen: Vec<FrameRecord> = frames
        .into_iter()
        .filter_map(|mut f| {
            f.detections.retain(|d| d.label == label);
            (!f.detections.is_empty()).then_some(f)
        })
        .collect();
    check(seen.len() >= 2, || format!("object seen in {} frames", seen.len()))?;
    let a = seen[0].clone();
    let b = seen.iter().find(|f| f.pose != a.pose).cloned().ok_or("no second pose")?;
    Ok((a, b, label))
}

fn nodes_after(frames: &[FrameRecord]) -> Result<InstanceMap, String> {
    build_map(frames, MergeConfig::default()).map(|(m, _)| m).map_err(|e| e.to_string())
}

fn triad_suite() -> Outcome {
    let (a, b, _) = triad_frames()?;

    let same = nodes_after(&[a.clone(), b.clone()])?;
    check(same.len() == 1, || format!("(a) same object from two poses gave {} nodes", same.len()))?;
    let fused = same.nodes().next().unwrap().num_detections();
    check(fused == 2, || format!("(a) node fused {fused} detections"))?;

    let mut other = b.clone();
    let dino = &other.detections[0].dino_embedding;
    let mut r = rng(14);
    let mut v = random_unit(&mut r, dino.len());
    let d: f64 = v.iter().zip(dino).map(|(x, y)| x * y).sum();
    v.iter_mut().zip(dino).for_each(|(x, y)| *x -= d * y);
    let v = unit(v);
    let sem = semantic_similarity(&v, dino).unwrap();
    other.detections[0].dino_embedding = v;
    let split = nodes_after(&[a.clone(), other])?;
    check(split.len() == 2, || format!("(b) co-located, sem {sem:.3}: {} nodes", split.len()))?;

    let mut moved = b.clone();
    moved.pose.translation.x += 5.0;
    let apart = nodes_after(&[a, moved])?;
    check(apart.len() == 2, || format!("(c) disjoint clouds: {} nodes", apart.len()))?;
    Ok(format!("(a) 1 node, (b) sem {sem:.3} -> 2 nodes, (c) zero overlap -> 2 nodes"))
}

fn random_map(r: &mut rand_chacha::ChaCha8Rng) -> InstanceMap {
    let protos: Vec<Vec<f64>> = (0..3).map(|_| random_unit(r, 16)).collect();
    let n = r.random_range(4..20);
    let mut nodes: Vec<o3dsim::map::SceneNode> = Vec::with_capacity(n);
    for id in 0..n as u32 {
        let min = if id > 0 && r.random_bool(0.4) {
            // Near copy of an earlier node so that chains of merges occur.
            let c = nodes[r.random_range(0..nodes.len())].bbox.min;
            [c.x + r.random_range(-0.1..0.1), c.y + r.random_range(-0.1..0.1), c.z]
        } else {
            [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), 0.0]
        };
        let size = [r.random_range(0.1..0.3), r.random_range(0.1..0.3), r.random_range(0.1..0.3)];
        let proto = &protos[r.random_range(0..protos.len())];
        let noise: Vec<f64> = random_unit(r, 16).iter().map(|x| x * 0.15).collect();
        let dino = unit(proto.iter().zip(&noise).map(|(p, e)| p + e).collect());
        nodes.push(node(id, block(min, size, 0.05), dino, r.random_range(1..4), "thing"));
    }
    InstanceMap::from_parts(MergeConfig::default(), nodes, n as u32, 1).unwrap()
}

fn refine_suite() -> Outcome {
    let mut r = rng(15);
    let mut absorbed_total = 0;
    for case in 0..50 {
        let mut map = random_map(&mut r);
        let before_ids: Vec<u32> = map.nodes().map(|n| n.node_id).collect();
        let detections = map.total_detections();
        absorbed_total += map.refine().map_err(|e| e.to_string())?;
        let once = map.clone();
        let again = map.refine().map_err(|e| e.to_string())?;
        check(again == 0 && map == once, || format!("map {case}: second refine changed the map"))?;
        check(map.total_detections() == detections, || format!("map {case}: detections not conserved"))?;
        check(map.nodes().all(|n| before_ids.contains(&n.node_id)), || format!("map {case}: new node id"))?;
        let cfg = map.config().clone();
        let nodes: Vec<_> = map.nodes().collect();
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let (a, b) = (nodes[i], nodes[j]);
                let sem = brute_similarity(&a.dino_embedding, &b.dino_embedding);
                let geo = brute_nnratio(&a.cloud.points, &b.cloud.points, cfg.delta_nn)
                    .max(brute_nnratio(&b.cloud.points, &a.cloud.points, cfg.delta_nn));
                check(!(sem >= cfg.tau_sem && geo >= cfg.tau_refine), || {
                    format!("map {case}: nodes {} and {} still mergeable", a.node_id, b.node_id)
                })?;
            }
        }
    }
    Ok(format!("50 maps idempotent with no mergeable pair left ({absorbed_total} nodes absorbed)"))
}

fn recovery_suite() -> Outcome {
    let mut exact = 0;
    let mut worst = 0usize;
    let mut lines = Vec::new();
    let mut counts = RecoveryCounts::default();
    for i in 0..10u64 {
        let n = 5 + (i as usize * 7) % 8;
        let side = if n <= 7 { 7.0 } else if n <= 10 { 8.0 } else { 9.0 };
        let params = SceneParams { num_objects: n, room_size: [side, side], ..SceneParams::default() };
        let scene = generate_scene(&params, 9000 + i).map_err(|e| e.to_string())?;
        let (map, _) = map_scene(&scene, &RenderOptions::default(), &MergeConfig::default()).map_err(|e| e.to_string())?;
        let c = evaluate_instance_recovery(&scene, &map);
        counts += c;
        let off = map.len().abs_diff(n);
        if off == 0 {
            exact += 1;
        }
        worst = worst.max(off);
        lines.push(format!("{}/{}", map.len(), n));
    }
    let summary = format!(
        "{exact}/10 exact, worst off by {worst}; tp {} fp {} miss {}; nodes/objects {}",
        counts.true_positives,
        counts.false_positives,
        counts.misses,
        lines.join(" ")
    );
    check(exact >= 9 && worst <= 1, || summary.clone())?;
    Ok(summary)
}

fn goal_suite() -> Outcome {
    let mut r = rng(16);
    let mut queries = 0;
    for case in 0..100 {
        let raw = random_grid(&mut r);
        let radius = r.random_range(0.0..3.0) * raw.cell_size;
        let inflated = raw.inflate(radius).map_err(|e| e.to_string())?;
        check(inflated.cells == brute_inflate(&raw, radius), || format!("grid {case}: inflation differs"))?;
        let free: Vec<(usize, usize)> = (0..inflated.height)
            .flat_map(|row| (0..inflated.width).map(move |col| (row, col)))
            .filter(|&(row, col)| inflated.state(row, col) == CellState::Free)
            .collect();
        if free.is_empty() {
            check(inflated.mark_reachable(inflated.center(0, 0)).is_err(), || format!("grid {case}: start accepted"))?;
            continue;
        }
        let start = free[r.random_range(0..free.len())];
        let [sx, sy] = inflated.center(start.0, start.1);
        let jitter = 0.45 * inflated.cell_size;
        let p = [sx + r.random_range(-jitter..jitter), sy + r.random_range(-jitter..jitter)];
        let reach = inflated.mark_reachable(p).map_err(|e| e.to_string())?;
        let oracle = flood_fill(&inflated, start);
        for (i, c) in reach.cells.iter().enumerate() {
            check((*c == CellState::Reachable) == oracle[i], || format!("grid {case}: reachability differs at {i}"))?;
        }
        let (w, h) = (reach.width as f64 * reach.cell_size, reach.height as f64 * reach.cell_size);
        for _ in 0..20 {
            let q = [
                reach.origin[0] + r.random_range(-0.3 * w..1.3 * w),
                reach.origin[1] + r.random_range(-0.3 * h..1.3 * h),
            ];
            let got = reach.closest_reachable(q).map_err(|e| e.to_string())?;
            let want = brute_goal(&reach, q).unwrap();
            check(reach.state(got.0, got.1) == CellState::Reachable, || format!("grid {case}: goal not reachable"))?;
            check(squared_distance(&reach, got, q) == squared_distance(&reach, want, q), || {
                format!("grid {case}: goal {got:?} farther than {want:?}")
            })?;
            check(got == want, || format!("grid {case}: tie broken to {got:?}, expected {want:?}"))?;
            queries += 1;
        }
    }
    Ok(format!("100 grids: inflation, reachability and {queries} goals match brute force"))
}

fn cli(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_o3dsim")).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("o3dsim {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out)
}

fn success_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli(&["eval", "--out", a.to_str().unwrap()])?;
    cli(&["eval", "--out", b.to_str().unwrap()])?;
    let ra = std::fs::read(a.join("report.json")).map_err(|e| e.to_string())?;
    let rb = std::fs::read(b.join("report.json")).map_err(|e| e.to_string())?;
    check(ra == rb, || "reports differ between runs".into())?;
    let v: serde_json::Value = serde_json::from_slice(&ra).map_err(|e| e.to_string())?;
    let report = &v["report"];
    let (episodes, rate) = (report["episodes"].as_u64().unwrap_or(0), report["success_rate"].as_f64().unwrap_or(0.0));
    let summary = format!("{}/{episodes} episodes, rate {rate:.3}, reruns byte-identical", report["successes"]);
    check(episodes == 50 && rate >= 0.90, || summary.clone())?;
    Ok(summary)
}

fn determinism_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |p: &str| dir.path().join(p);
    let frames = d("frames.jsonl");
    cli(&["render", "--scene", "kitchen", "--out", frames.to_str().unwrap()])?;
    cli(&["build", "--frames", frames.to_str().unwrap(), "--out", d("m1").to_str().unwrap()])?;
    cli(&["build", "--frames", frames.to_str().unwrap(), "--out", d("m2").to_str().unwrap()])?;
    let same = |f: &str| -> Result<bool, String> {
        let read = |m: &Path| std::fs::read(m.join(f)).map_err(|e| e.to_string());
        Ok(read(&d("m1"))? == read(&d("m2"))?)
    };
    check(same("manifest.json")?, || "manifests differ".into())?;
    check(same("scene.ply")?, || "point clouds differ".into())?;
    Ok("two builds of the same frames give identical manifest.json and scene.ply".into())
}

fn main() {
    let criteria = [
        Criterion { name: "overlap ratio vs oracle", budget: Some(Duration::from_secs(5)), run: overlap_suite },
        Criterion { name: "semantic similarity", budget: Some(Duration::from_secs(1)), run: similarity_suite },
        Criterion { name: "dbscan vs oracle", budget: Some(Duration::from_secs(30)), run: dbscan_suite },
        Criterion { name: "merge triad", budget: None, run: triad_suite },
        Criterion { name: "refinement invariants", budget: Some(Duration::from_secs(30)), run: refine_suite },
        Criterion { name: "instance recovery", budget: Some(Duration::from_secs(120)), run: recovery_suite },
        Criterion { name: "goal synthesis", budget: Some(Duration::from_secs(30)), run: goal_suite },
        Criterion { name: "synthetic success rate", budget: Some(Duration::from_secs(180)), run: success_suite },
        Criterion { name: "build determinism", budget: None, run: determinism_suite },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t = Instant::now();
        let outcome = (c.run)();
        let took = t.elapsed();
        let over = c.budget.is_some_and(|b| took > b);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("over budget; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        let budget = c.budget.map_or(String::new(), |b| format!(" / {}s", b.as_secs()));
        println!("{status} {:<24} {:>7.2}s{budget}  {detail}", c.name, took.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
