use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use md5::{Digest, Md5};
use serde::Serialize;
use serde_json::{json, Value};

use puppet_core::corpus::{self, CorpusSpec, Perturbation};
use puppet_core::similarity::{
    cluster_homogeneity, corpus_files, dbscan, find_similar_app_by_hash, parse_clusters, phash, read_pgm, sweep,
    PerceptualHash, SimilarityIndex,
};
use puppet_core::view::Screen;
use puppet_core::{
    dispatch_touch, find_target_view, parse_event_log, parse_hierarchy_dump, parse_trace, record_trace, replay_raw,
    replay_trace, serialize_trace, DumpTimeline, ReplayOptions,
};

#[derive(Parser)]
#[command(name = "puppet", version, about = "Record, replay and compare Android UI stimulation traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlate an event log with hierarchy dumps into a stimulation trace.
    Record {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        dumps: PathBuf,
        #[arg(long)]
        app_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute a trace against the hierarchy dumps of a target app.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        dumps: PathBuf,
        /// Re-inject recorded coordinates verbatim.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        out_events: PathBuf,
    },
    /// Perceptual hash of PGM screenshots.
    Hash {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Hash a `<root>/<app_id>/<screenshot_id>.pgm` corpus into an index file.
    IndexBuild {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Look up screenshots: exact file match first, then nearest hashes.
    IndexQuery {
        #[arg(long)]
        index: PathBuf,
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Corpus directory to scan for byte-identical screenshots.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// App whose own entries are left out of the similar-app answer.
        #[arg(long)]
        exclude_app: Option<String>,
    },
    /// DBSCAN over the hashes of an index.
    Cluster {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        eps: u32,
        #[arg(long, default_value_t = 2)]
        min_pts: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster metrics over a range of eps values.
    Sweep {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 0)]
        eps_min: u32,
        #[arg(long, default_value_t = 32)]
        eps_max: u32,
        #[arg(long, default_value_t = 2)]
        min_pts: usize,
    },
    /// Per-cluster homogeneity against app labels.
    Homogeneity {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        /// CSV with an `app_id,family` header.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Generate a synthetic corpus of app families.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        /// JSON spec file; overrides the individual flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        params: CorpusParams,
    },
    /// Generate a tap session for one app of a generated corpus.
    Session {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        family: usize,
        #[arg(long, default_value_t = 0)]
        variant: usize,
        #[arg(long, default_value_t = 10)]
        taps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Show target view and consumer of a touch on a hierarchy dump.
    Dispatch {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        x: i64,
        #[arg(long)]
        y: i64,
    },
}

#[derive(Args)]
struct CorpusParams {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    families: usize,
    #[arg(long, default_value_t = 3)]
    variants: usize,
    #[arg(long, default_value_t = 3)]
    max_shift: u32,
    #[arg(long, default_value_t = 0.03)]
    max_resize: f64,
    #[arg(long, default_value_t = 8)]
    noise: u8,
    #[arg(long, default_value_t = 4)]
    depth_min: usize,
    #[arg(long, default_value_t = 6)]
    depth_max: usize,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
}

impl CorpusParams {
    fn spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.seed,
            n_families: self.families,
            variants_per_family: self.variants,
            perturbation: Perturbation {
                max_shift_px: self.max_shift,
                max_resize_frac: self.max_resize,
                noise_amplitude: self.noise,
            },
            hierarchy_depth: (self.depth_min, self.depth_max),
            screen: Screen { width: self.width, height: self.height },
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_timeline(dir: &Path) -> Result<DumpTimeline> {
    if !dir.is_dir() {
        bail!("dump directory {} does not exist", dir.display());
    }
    let timeline = DumpTimeline::load_dir(dir)?;
    if timeline.is_empty() {
        bail!("no .hier dumps in {}", dir.display());
    }
    Ok(timeline)
}

fn hash_file(path: &Path) -> Result<PerceptualHash> {
    let img = read_pgm(path).with_context(|| format!("reading {}", path.display()))?;
    phash(&img).with_context(|| format!("hashing {}", path.display()))
}

fn md5_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Md5::digest(&bytes)))
}

fn run(command: Command) -> Result<Value> {
    Ok(match command {
        Command::Record { events, dumps, app_id, out } => {
            let events = parse_event_log(&read_text(&events)?).with_context(|| format!("parsing {}", events.display()))?;
            let timeline = load_timeline(&dumps)?;
            let trace = record_trace(&events, &timeline, &app_id)?;
            write_text(&out, &serialize_trace(&trace))?;
            json!({
                "app_id": trace.app_id,
                "steps": trace.steps.len(),
                "flagged_steps": trace.flagged_steps(),
                "out": out,
            })
        }
        Command::Replay { trace, dumps, raw, speed, out_report, out_events } => {
            if !(speed.is_finite() && speed > 0.0) {
                bail!("--speed must be a positive number");
            }
            let trace = parse_trace(&read_text(&trace)?).with_context(|| format!("parsing {}", trace.display()))?;
            let timeline = load_timeline(&dumps)?;
            let opts = ReplayOptions { speed };
            let report = if raw {
                replay_raw(&trace, &timeline, &opts)
            } else {
                replay_trace(&trace, &timeline, &opts)
            };
            write_text(&out_report, &report.to_json())?;
            report
                .emitted
                .write_dir(&out_events)
                .with_context(|| format!("writing {}", out_events.display()))?;
            serde_json::to_value(&report)?
        }
        Command::Hash { images } => {
            let rows = images
                .iter()
                .map(|p| Ok(json!({ "path": p, "hash": hash_file(p)?.to_string() })))
                .collect::<Result<Vec<_>>>()?;
            Value::Array(rows)
        }
        Command::IndexBuild { corpus, out } => {
            let index = SimilarityIndex::from_corpus_dir(&corpus)?;
            index.save(&out)?;
            let apps: std::collections::BTreeSet<&str> = index.entries().iter().map(|e| e.app_id.as_str()).collect();
            json!({ "entries": index.len(), "apps": apps.len(), "out": out })
        }
        Command::IndexQuery { index, images, k, corpus, exclude_app } => {
            let index = SimilarityIndex::load(&index)?;
            let mut exact = Vec::new();
            if let Some(root) = corpus {
                let files = corpus_files(&root)?;
                let mut by_digest: HashMap<String, Vec<(String, String)>> = HashMap::new();
                for (app, shot, path) in files {
                    by_digest.entry(md5_hex(&path)?).or_default().push((app, shot));
                }
                for (q, img) in images.iter().enumerate() {
                    for (app, shot) in by_digest.get(&md5_hex(img)?).into_iter().flatten() {
                        exact.push(json!({ "query": q, "app_id": app, "screenshot_id": shot }));
                    }
                }
            }
            let hashes = images.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>()?;
            let mut queries = Vec::with_capacity(images.len());
            for (path, &h) in images.iter().zip(&hashes) {
                let neighbors: Vec<Value> = index
                    .knn(h, k)?
                    .into_iter()
                    .map(|n| {
                        let e = &index.entries()[n.index];
                        json!({ "app_id": e.app_id, "screenshot_id": e.screenshot_id, "distance": n.distance, "index": n.index })
                    })
                    .collect();
                queries.push(json!({ "path": path, "hash": h.to_string(), "neighbors": neighbors }));
            }
            let similar = find_similar_app_by_hash(&index, &hashes, exclude_app.as_deref()).ok();
            json!({ "md5_matches": exact, "queries": queries, "similar_app": similar })
        }
        Command::Cluster { index, eps, min_pts, out } => {
            if min_pts == 0 {
                bail!("--min-pts must be at least 1");
            }
            let index = SimilarityIndex::load(&index)?;
            let set = dbscan(index.hashes(), eps, min_pts);
            if let Some(out) = &out {
                write_text(out, &set.to_text())?;
            }
            json!({
                "eps": eps,
                "min_pts": min_pts,
                "num_clusters": set.clusters.len(),
                "noise": set.noise.len(),
                "clusters": set.clusters,
            })
        }
        Command::Sweep { index, eps_min, eps_max, min_pts } => {
            if eps_min > eps_max || min_pts == 0 {
                bail!("need eps-min <= eps-max and min-pts >= 1");
            }
            let index = SimilarityIndex::load(&index)?;
            let eps: Vec<u32> = (eps_min..=eps_max).collect();
            serde_json::to_value(sweep(index.hashes(), &eps, min_pts))?
        }
        Command::Homogeneity { index, clusters, labels } => {
            let index = SimilarityIndex::load(&index)?;
            let set = parse_clusters(&read_text(&clusters)?).map_err(anyhow::Error::msg)?;
            let families: HashMap<String, String> = corpus::parse_labels(&read_text(&labels)?).into_iter().collect();
            let per_entry = index
                .entries()
                .iter()
                .map(|e| {
                    families
                        .get(&e.app_id)
                        .cloned()
                        .with_context(|| format!("no label for app {}", e.app_id))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(&bad) = set.clusters.iter().flatten().chain(&set.noise).find(|&&i| i >= per_entry.len()) {
                bail!("cluster file refers to entry {bad} but the index has {}", per_entry.len());
            }
            serde_json::to_value(cluster_homogeneity(&set, &per_entry)?)?
        }
        Command::Corpus { out, spec, params } => {
            let spec = match spec {
                Some(path) => serde_json::from_str(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?,
                None => params.spec(),
            };
            let manifest = corpus::generate_corpus(&spec, &out)?;
            json!({ "apps": manifest.apps.len(), "separation": manifest.separation, "out": out })
        }
        Command::Session { corpus: dir, family, variant, taps, out } => {
            let spec = corpus::load_spec(&dir)?;
            let session = corpus::generate_session(&spec, family, variant, taps)?;
            session.write(&out)?;
            json!({ "app_id": session.app_id, "events": session.events.len(), "out": out })
        }
        Command::Dispatch { dump, x, y } => {
            let h = parse_hierarchy_dump(&read_text(&dump)?).with_context(|| format!("parsing {}", dump.display()))?;
            let target = find_target_view(&h, x, y).ok().map(|p| p.to_string());
            json!({ "x": x, "y": y, "target": target, "consumer": dispatch_touch(&h, x, y) })
        }
    })
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("PUPPET_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PUPPET_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(value) => {
            let text = serde_json::to_string_pretty(&value).expect("json values serialize");
            // a closed pipe (e.g. `| head`) is not a failure of the command
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let failure = Failure { error: format!("{err:#}") };
            eprintln!("{}", serde_json::to_string(&failure).expect("json values serialize"));
            ExitCode::from(1)
        }
    }
}
