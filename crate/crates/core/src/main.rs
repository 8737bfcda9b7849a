use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use o3dsim::config::RunConfig;
use o3dsim::frame::{read_frame_file, sequence_sha256, write_frame_file, SequenceHeader};
use o3dsim::map::{build_map, export_map, load_map, ExportOptions};
use o3dsim::nav::{answer, write_grid, Query};
use o3dsim::synth::{
    camera_path, generate_scene, render_frames, run_benchmark, EpisodeSuite, SceneSuite,
};

const BUNDLED_SCENES: &str = include_str!("../benchmarks/scenes.json");
const BUNDLED_EPISODES: &str = include_str!("../benchmarks/episodes.json");

/// Writes a line to stdout. A closed pipe (e.g. `| head`) ends the process
/// quietly instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

fn emit(args: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(args).and_then(|()| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

#[derive(Parser)]
#[command(name = "o3dsim", version, about = "Open-set 3D semantic instance maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a map from a frame-record file.
    Build {
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Answer a query against a map and print the goal.
    Query {
        #[arg(long)]
        map: Option<PathBuf>,
        /// Query JSON file, or `-` for stdin.
        #[arg(long)]
        query: Option<PathBuf>,
        /// Robot position `X,Y` in meters.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        start: [f64; 2],
        /// Also write the answer to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the occupancy and reachability PGMs into this directory.
        #[arg(long)]
        emit_grid: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate, render, map and score synthetic scenes.
    Eval {
        /// Scene suite JSON; the bundled benchmark when omitted.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Episode suite JSON; the bundled benchmark when omitted.
        #[arg(long)]
        episodes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include instance-recovery counts.
        #[arg(long)]
        recovery: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Re-export a map directory, optionally with its navigation grid.
    Export {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Robot position `X,Y`; writes grid PGMs flooded from it.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        start: Option<[f64; 2]>,
        #[command(flatten)]
        common: Common,
    },
    /// Print a summary of a map's manifest.
    Inspect {
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Render one synthetic scene to a frame-record file.
    Render {
        /// Scene suite JSON; the bundled benchmark when omitted.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Scene name within the suite; the first scene when omitted.
        #[arg(long)]
        scene: Option<String>,
        /// Output frame-record file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the scene's ground truth as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    delta_nn: Option<f64>,
    #[arg(long)]
    tau_geo: Option<f64>,
    #[arg(long)]
    tau_sem: Option<f64>,
    #[arg(long)]
    tau_refine: Option<f64>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    dbscan_eps: Option<f64>,
    #[arg(long)]
    dbscan_min_pts: Option<usize>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    min_detections: Option<usize>,
    /// Comma-separated labels dropped before mapping.
    #[arg(long)]
    background_labels: Option<String>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    floor_z: Option<f64>,
    #[arg(long)]
    robot_radius: Option<f64>,
    #[arg(long)]
    grid_padding: Option<f64>,
    #[arg(long)]
    success_threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(usage)?;
        }
        let flags: [(&str, Option<String>); 18] = [
            ("delta_nn", self.delta_nn.map(|v| v.to_string())),
            ("tau_geo", self.tau_geo.map(|v| v.to_string())),
            ("tau_sem", self.tau_sem.map(|v| v.to_string())),
            ("tau_refine", self.tau_refine.map(|v| v.to_string())),
            ("voxel_size", self.voxel_size.map(|v| v.to_string())),
            ("dbscan_eps", self.dbscan_eps.map(|v| v.to_string())),
            ("dbscan_min_pts", self.dbscan_min_pts.map(|v| v.to_string())),
            ("min_points", self.min_points.map(|v| v.to_string())),
            ("min_detections", self.min_detections.map(|v| v.to_string())),
            ("background_labels", self.background_labels.clone()),
            ("cell_size", self.cell_size.map(|v| v.to_string())),
            ("z_min", self.z_min.map(|v| v.to_string())),
            ("z_max", self.z_max.map(|v| v.to_string())),
            ("floor_z", self.floor_z.map(|v| v.to_string())),
            ("robot_radius", self.robot_radius.map(|v| v.to_string())),
            ("grid_padding", self.grid_padding.map(|v| v.to_string())),
            ("success_threshold", self.success_threshold.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(usage)?;
        }
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v).map_err(usage)?;
            }
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x `{x}`"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y `{y}`"))?;
    if !(x.is_finite() && y.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    Ok([x, y])
}

enum Failure {
    Usage(String),
    Data(o3dsim::Error),
}

/// Bad configuration is the caller's mistake, not a data error.
fn usage(e: o3dsim::Error) -> Failure {
    Failure::Usage(e.to_string())
}

impl From<o3dsim::Error> for Failure {
    fn from(e: o3dsim::Error) -> Self {
        Failure::Data(e)
    }
}

/// A flag, or the matching path key from the config file.
fn path_arg(flag: &Option<PathBuf>, cfg: &RunConfig, key: &str) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| cfg.paths.get(key).cloned())
        .ok_or_else(|| Failure::Usage(format!("missing --{key}")))
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| o3dsim::Error::Io { path: parent.into(), source: e })?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| o3dsim::Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Data(o3dsim::Error::Io { path: path.into(), source: e }))
}

fn read_suite_files(
    scenes: &Option<PathBuf>,
    episodes: &Option<PathBuf>,
) -> Result<(Vec<u8>, Vec<u8>), Failure> {
    let s = match scenes {
        Some(p) => read_bytes(p)?,
        None => BUNDLED_SCENES.as_bytes().to_vec(),
    };
    let e = match episodes {
        Some(p) => read_bytes(p)?,
        None => BUNDLED_EPISODES.as_bytes().to_vec(),
    };
    Ok((s, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T, Failure> {
    serde_json::from_slice(bytes).map_err(|e| {
        Failure::Data(o3dsim::Error::Format { path: PathBuf::from(what), message: e.to_string() })
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build { frames, out, common } => {
            let cfg = common.resolve()?;
            let frames_path = path_arg(&frames, &cfg, "frames")?;
            let out = path_arg(&out, &cfg, "out")?;
            let seq = read_frame_file(&frames_path)?;
            let hash = sequence_sha256(&seq.header, &seq.frames);
            let (map, log) = build_map(&seq.frames, cfg.merge.clone())?;
            if map.is_empty() {
                eprintln!("warning: the finished map has no instances");
            }
            let options = ExportOptions { input_sha256: Some(hash.clone()), config: cfg.echo() };
            export_map(&map, &out, &options)?;
            write_json(
                &out.join("build_log.json"),
                &json!({ "input_sha256": hash, "config": cfg.echo(), "log": log }),
            )?;
            say!("{} frames, {} instances -> {}", log.frames.len(), map.len(), out.display());
        }
        Command::Query { map, query, start, out, emit_grid, common } => {
            let cfg = common.resolve()?;
            let map_dir = path_arg(&map, &cfg, "map")?;
            let query_path = path_arg(&query, &cfg, "query")?;
            let bytes = if query_path.as_os_str() == "-" {
                let mut buf = Vec::new();
                std::io::stdin()
                    .read_to_end(&mut buf)
                    .map_err(|e| o3dsim::Error::Io { path: "<stdin>".into(), source: e })?;
                buf
            } else {
                read_bytes(&query_path)?
            };
            let (map, manifest) = load_map(&map_dir)?;
            let q = Query::from_json(&bytes)?;
            let a = answer(&map, &q, start, &cfg.nav)?;
            let hash = manifest.input_sha256.clone().unwrap_or_default();
            let query_hash = sha256_hex(&[&bytes]);
            if let Some(dir) = &emit_grid {
                write_grid(&a.grid, dir, "grid", Some(&query_hash))?;
            }
            let response = json!({
                "map_input_sha256": hash,
                "query_sha256": query_hash,
                "config": cfg.echo(),
                "start": start,
                "text": a.query,
                "instance_rank": a.instance_rank,
                "goal": a.goal,
                "ranked": a.ranked,
            });
            if let Some(path) = &out {
                write_json(path, &response)?;
            }
            say!("{}", serde_json::to_string_pretty(&response).expect("serializable"));
        }
        Command::Eval { scenes, episodes, out, recovery, common } => {
            let cfg = common.resolve()?;
            let out = path_arg(&out, &cfg, "out")?;
            let scenes = scenes.or_else(|| cfg.paths.get("scenes").cloned());
            let episodes = episodes.or_else(|| cfg.paths.get("episodes").cloned());
            let (scene_bytes, episode_bytes) = read_suite_files(&scenes, &episodes)?;
            let suite: SceneSuite = parse_json(&scene_bytes, "scenes")?;
            let mut episode_suite: EpisodeSuite = parse_json(&episode_bytes, "episodes")?;
            if let Some(t) = cfg.success_threshold {
                episode_suite.threshold_m = t;
            }
            let report = run_benchmark(&suite, &episode_suite, &cfg.merge, &cfg.nav, cfg.seed, recovery)?;
            let table = report.summary_table();
            write_json(
                &out.join("report.json"),
                &json!({
                    "input_sha256": {
                        "scenes": sha256_hex(&[&scene_bytes]),
                        "episodes": sha256_hex(&[&episode_bytes]),
                    },
                    "config": cfg.echo(),
                    "report": report,
                }),
            )?;
            fs::write(out.join("summary.txt"), &table)
                .map_err(|e| o3dsim::Error::Io { path: out.join("summary.txt"), source: e })?;
            say!("{}", table.trim_end());
        }
        Command::Export { map, out, start, common } => {
            let cfg = common.resolve()?;
            let map_dir = path_arg(&map, &cfg, "map")?;
            let out = path_arg(&out, &cfg, "out")?;
            let (map, manifest) = load_map(&map_dir)?;
            let options = ExportOptions { input_sha256: manifest.input_sha256.clone(), config: manifest.config };
            export_map(&map, &out, &options)?;
            if let Some(start) = start {
                let grid = cfg.nav.navigable_grid(&map, start)?;
                write_grid(&grid, &out, "grid", manifest.input_sha256.as_deref())?;
            }
            say!("{} instances -> {}", map.len(), out.display());
        }
        Command::Inspect { map } => {
            let map_dir = map.ok_or_else(|| Failure::Usage("missing --map".into()))?;
            let (_, m) = load_map(&map_dir)?;
            say!("format:      {} v{}", m.format, m.schema_version);
            say!("input:       {}", m.input_sha256.as_deref().unwrap_or("-"));
            say!("frames:      {}", m.frames_processed);
            say!("instances:   {}", m.nodes.len());
            say!("{:>5}  {:<16} {:>7} {:>5}  center", "id", "label", "points", "dets");
            for n in &m.nodes {
                let c: Vec<String> =
                    (0..3).map(|i| format!("{:.2}", (n.bbox.min[i] + n.bbox.max[i]) / 2.0)).collect();
                say!(
                    "{:>5}  {:<16} {:>7} {:>5}  ({})",
                    n.id,
                    n.label,
                    n.point_count,
                    n.num_detections,
                    c.join(", ")
                );
            }
        }
        Command::Render { scenes, scene, out, truth, common } => {
            let cfg = common.resolve()?;
            let out = path_arg(&out, &cfg, "out")?;
            let (scene_bytes, _) = read_suite_files(&scenes, &None)?;
            let suite: SceneSuite = parse_json(&scene_bytes, "scenes")?;
            let params = match &scene {
                Some(name) => suite.scenes.iter().find(|s| &s.name == name),
                None => suite.scenes.first(),
            }
            .ok_or_else(|| Failure::Usage("no matching scene in the suite".into()))?;
            let s = generate_scene(params, cfg.seed.wrapping_add(params.seed_offset))?;
            let frames = render_frames(&s, &camera_path(&s), &s.camera.intrinsics(), &suite.render);
            write_frame_file(&out, &SequenceHeader::new(params.clip_dim, params.dino_dim), &frames)?;
            if let Some(path) = &truth {
                write_json(path, &s)?;
            }
            say!("{} frames, {} objects -> {}", frames.len(), s.objects.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Data(e))) => {
            eprintln!("error: {e}");
            let internal = matches!(e, o3dsim::Error::State(_));
            ExitCode::from(if internal { 3 } else { 2 })
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
