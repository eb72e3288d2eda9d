use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use screenlens::{cmd_evaluate, cmd_extract, cmd_index, cmd_query, exit, render_hits, PipelineConfig, PipelineError, Settings};
use screenlens_core::metrics::Normalization;
use screenlens_core::{Bm25Params, IndexHandle, InvertedIndex};
use screenlens_service::AppState;

#[derive(Parser)]
#[command(name = "screenlens", version, about = "Screenshot text extraction, evaluation and search")]
struct Cli {
    /// Flat `key = value` file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct RankFlags {
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Weight of the category field.
    #[arg(long)]
    boost: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and OCR every image in a directory.
    Extract {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Engine command with {input} and {output} placeholders.
        #[arg(long)]
        engine_cmd: Option<String>,
        #[arg(long)]
        no_banner_strip: bool,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Compare hypothesis texts with reference transcriptions.
    Evaluate {
        /// Directory of recognized `<stem>.txt` files.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory of reference `<stem>.txt` files.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        lowercase: bool,
        #[arg(long)]
        strip_punctuation: bool,
        #[arg(long, default_value = "screenlens")]
        label: String,
    },
    /// Build a search index from an XML batch.
    Index {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        rank: RankFlags,
    },
    /// Print the top hits for a query.
    Query {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        category: Option<String>,
        #[command(flatten)]
        rank: RankFlags,
        #[arg(trailing_var_arg = true)]
        query: Vec<String>,
    },
    /// Serve the JSON search API.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        addr: Option<SocketAddr>,
        #[arg(long)]
        images: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::FATAL)
        }
    }
}

fn apply_rank(s: &mut Settings, rank: RankFlags) {
    s.set_opt("k1", rank.k1);
    s.set_opt("b", rank.b);
    s.set_opt("boost", rank.boost);
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> Result<u8, PipelineError> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Extract { input, output, engine_cmd, no_banner_strip, parallelism } => {
            s.apply_env();
            s.set_opt("input", path_str(input));
            s.set_opt("output", path_str(output));
            s.set_opt("engine-cmd", engine_cmd);
            s.set_opt("parallelism", parallelism);
            if no_banner_strip {
                s.set("no-banner-strip", "true");
            }
            let cfg = PipelineConfig::from_settings(&s)?;
            let summary = cmd_extract(&cfg)?;
            println!(
                "{} images, {} documents, {} segments, {} segment failures, {} banners removed, {} failed images",
                summary.images,
                summary.documents,
                summary.segments,
                summary.segment_failures,
                summary.banners_removed,
                summary.failures.len()
            );
            for f in &summary.failures {
                println!("  failed {}: {}", f.file, f.error);
            }
            Ok(summary.exit_code())
        }
        Command::Evaluate { input, reference, output, lowercase, strip_punctuation, label } => {
            s.set_opt("input", path_str(input));
            s.set_opt("reference", path_str(reference));
            s.set_opt("output", path_str(output));
            let norm = Normalization { lowercase, strip_punctuation };
            let run = cmd_evaluate(&s.path("input")?, &s.path("reference")?, &norm, &label)?;
            print!("{}", run.table);
            if let Some(out) = s.get("output") {
                let json = serde_json::to_vec_pretty(&run).expect("report serializes");
                screenlens::write_atomic(std::path::Path::new(out), &json)?;
            }
            Ok(run.exit_code())
        }
        Command::Index { input, output, rank } => {
            s.set_opt("input", path_str(input));
            s.set_opt("output", path_str(output));
            apply_rank(&mut s, rank);
            let stats = cmd_index(&s.path("input")?, &s.path("output")?, s.bm25(Bm25Params::default())?)?;
            println!("N={} distinct_terms={} avdl={:.4}", stats.documents, stats.distinct_terms, stats.avdl);
            Ok(exit::SUCCESS)
        }
        Command::Query { index, top_k, category, rank, query } => {
            s.set_opt("index", path_str(index));
            s.set_opt("top-k", top_k);
            apply_rank(&mut s, rank);
            let overrides = if s.has_bm25_override() { Some(s.bm25(Bm25Params::default())?) } else { None };
            let k = s.parsed("top-k", 10usize)?;
            let (idx, hits) = cmd_query(&s.path("index")?, &query.join(" "), category.as_deref(), k, overrides)?;
            print!("{}", render_hits(&idx, &hits));
            Ok(exit::SUCCESS)
        }
        Command::Serve { index, addr, images } => {
            s.set_opt("index", path_str(index));
            s.set_opt("addr", addr);
            s.set_opt("images", path_str(images));
            let addr: SocketAddr = s.parsed("addr", SocketAddr::from(([127, 0, 0, 1], 8080)))?;
            let idx = InvertedIndex::load(&s.path("index")?)?;
            log::info!("serving {} documents on http://{addr}", idx.len());
            let state = AppState::new(IndexHandle::new(idx), s.get("images").map(PathBuf::from));
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Config(format!("runtime: {e}")))?;
            rt.block_on(screenlens_service::serve(addr, state))
                .map_err(|e| PipelineError::Config(format!("serving on {addr}: {e}")))?;
            Ok(exit::SUCCESS)
        }
    }
}
