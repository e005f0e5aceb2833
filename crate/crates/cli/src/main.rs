use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use teletwin_core::dataset::coco::mask_to_rle;
use teletwin_core::dataset::{generate, CocoDataset, Segmentation, SynthConfig};
use teletwin_core::eval::{build_eval_set, evaluate, format_csv, format_table, CocoResult};
use teletwin_core::metrics::{aggregate, load_log, report};
use teletwin_core::pose::EstimateMode;
use teletwin_core::protocol::ServerMsg;
use teletwin_core::server::{replay, replay_states, Session, SessionConfig};

#[derive(Parser)]
#[command(name = "teletwin", version, about = "Teleoperation digital twin with depth-based object localization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a live session: 50 Hz twin, pose estimation, TCP and WebSocket clients.
    Serve {
        #[arg(long, env = "TELETWIN_PORT", default_value_t = 7070)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scene TOML; the bundled tube scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        scale: i64,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value = "mask")]
        mode: EstimateMode,
        /// Session log file.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory for a timestamped log when --log is not given.
        #[arg(long, env = "TELETWIN_LOG_DIR")]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        tick_ms: u64,
        #[arg(long, default_value_t = 10.0)]
        estimation_hz: f64,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Print the states of a recorded session as protocol messages, one per line.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Playback speed; 0 prints without pacing.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Generate a synthetic COCO dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.75)]
        split: f64,
        #[arg(long)]
        backgrounds: Option<PathBuf>,
        #[arg(long)]
        cutouts: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        canvas: u32,
    },
    /// Score COCO results against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// COCO results JSON (list of image_id, category_id, segmentation, score).
        #[arg(long, required_unless_present = "oracle")]
        results: Option<PathBuf>,
        /// Score the ground truth against itself.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Trajectory, time and grasp-error statistics from session logs.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Serve {
            port,
            host,
            scene,
            scale,
            alpha,
            mode,
            log,
            log_dir,
            tick_ms,
            estimation_hz,
            duration,
        } => {
            let bind: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad address {host}:{port}"))?;
            let log = log.or_else(|| {
                let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                log_dir.map(|d| d.join(format!("session-{stamp}.jsonl")))
            });
            let cfg = SessionConfig {
                scene,
                bind,
                tick_period: Duration::from_millis(tick_ms),
                estimation_rate: estimation_hz,
                mode,
                alpha,
                scale,
                log: log.clone(),
                max_duration: duration.map(Duration::from_secs_f64),
                ..Default::default()
            };
            let session = Session::start(cfg)?;
            eprintln!("listening on {}", session.local_addr());
            let summary = session.join()?;
            eprintln!(
                "{} ticks in {:.2} s, mean period {:.2} ms, {} grasp(s)",
                summary.ticks,
                summary.elapsed,
                summary.mean_period * 1e3,
                summary.grasps
            );
            if let Some(p) = log {
                eprintln!("log written to {}", p.display());
            }
        }
        Cmd::Replay { log, speed } => {
            let states = replay_states(&log)?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            let mut err = None;
            replay(&states, speed, |s| {
                if err.is_none() {
                    if let Err(e) = writeln!(out, "{}", ServerMsg::state(s.clone()).encode()) {
                        err = Some(e);
                    }
                }
            });
            if let Some(e) = err {
                if e.kind() != io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
        Cmd::Synth {
            out,
            images,
            seed,
            split,
            backgrounds,
            cutouts,
            canvas,
        } => {
            let mut cfg = SynthConfig::new(images, seed, out);
            cfg.split_ratio = split;
            cfg.backgrounds_dir = backgrounds;
            cfg.cutouts_dir = cutouts;
            cfg.canvas = canvas;
            let t = std::time::Instant::now();
            let o = generate(&cfg)?;
            println!(
                "{} train / {} test images, {} annotations, {:.2} s -> {}",
                o.train.images.len(),
                o.test.images.len(),
                o.train.annotations.len() + o.test.annotations.len(),
                t.elapsed().as_secs_f64(),
                cfg.out_dir.display()
            );
        }
        Cmd::Eval {
            gt,
            results,
            oracle,
            format,
        } => {
            let gt_set: CocoDataset = read_json(&gt)?;
            let res: Vec<CocoResult> = match results {
                Some(p) if !oracle => read_json(&p)?,
                _ => oracle_results(&gt_set)?,
            };
            let images = build_eval_set(&gt_set, &res)?;
            let r = evaluate(&images);
            print!(
                "{}",
                match format {
                    Format::Table => format_table(&r),
                    Format::Csv => format_csv(&r),
                }
            );
        }
        Cmd::Metrics { logs, format } => {
            let mut reports = Vec::new();
            for path in &logs {
                for attempt in load_log(path).with_context(|| path.display().to_string())? {
                    match report(&attempt) {
                        Ok(r) => reports.push(r),
                        Err(e) => log::warn!("{}: skipped attempt {}: {e}", path.display(), attempt.attempt),
                    }
                }
            }
            if reports.is_empty() {
                bail!("no completed attempts in the given logs");
            }
            let agg = aggregate(&reports)?;
            print!(
                "{}",
                match format {
                    Format::Table => agg.format_table(),
                    Format::Csv => agg.format_csv(),
                }
            );
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Ground-truth annotations recast as perfect-score results.
fn oracle_results(gt: &CocoDataset) -> Result<Vec<CocoResult>> {
    gt.annotations
        .iter()
        .map(|a| {
            let img = gt.image(a.image_id).context("annotation without image")?;
            let mask = a
                .segmentation
                .to_mask(img.width, img.height)
                .map_err(anyhow::Error::msg)?;
            Ok(CocoResult {
                image_id: a.image_id,
                category_id: a.category_id,
                segmentation: Segmentation::Rle(mask_to_rle(&mask, true)),
                score: 1.0,
            })
        })
        .collect()
}
