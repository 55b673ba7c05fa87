//! Terrain-analog retrieval from the command line.
//!
//! One binary, one configuration, twelve subcommands: the full funnel in
//! one shot (`pipeline`) or stage by stage (`ssc`, `twc`, `mtm`, `graph`,
//! `retrieve`), model work (`train`, `eval`, `ablate`), and utilities for
//! rasters and reports (`synth`, `ingest`, `hist`). Every stage records
//! the run seed in its manifest, so reruns are comparable file by file.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including
//! command line misuse), 3 when a funnel stage leaves no candidates, and
//! 1 for everything else.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use trough::{Error, Result};

const CONFIG_HELP: &str = "\
Configuration keys (TOML; every key optional, defaults shown):

  twc_keep = 5000         candidates kept by the waveform stage
  mtm_keep = 1000         candidates kept by the texture stage
  workers = 0             worker threads, 0 = one per core
  seed = 0                run seed, recorded in every manifest
  out_dir = \"run\"         directory for manifests and artifacts
  checkpoint = \"m.msgn\"   score with this stored model (unset: train a
                          fallback scorer on the finalists)

  [ssc]                   scan stage
  block = 33              local-mean window side, pixels (odd)
  depth_threshold_m = 50.0  minimum local elevation deficit, meters
  mse_max = 2.0           maximum line-fit error, square pixels
  min_length_m = 5000.0   accepted fitted-length range, meters
  max_length_m = 40000.0
  margin = 15             clip padding around a skeleton, pixels

  [twc]                   waveform stage
  width = 38              points per cross-section slice
  spacing_m = 250.0       along-axis slice spacing (unset: one cell)

  [mtm]                   texture stage
  deviation_bound = 0.015 resampling deviation bound, fraction of span
  variance_keep = 0.8     retained singular value mass fraction
  target_n_override = 181 pin the common profile resolution (optional)
  k_pc_override = 19      pin the retained component count (optional)

  [graph]                 contour graph construction
  contour_interval_m = 100.0
  node_spacing_m = 250.0
  search_radius_m = 500.0
  direction_bins = 36
  vrm_window = 3
  acr_patch = 5

  [dims]                  scorer layer widths
  input = 5
  hidden = 128
  fuse1 = 256
  fuse2 = 64

  [train]                 scorer training
  learning_rate = 0.0001
  weight_decay = 0.001
  batch_size = 32
  clip_norm = 2.0
  patience = 20
  max_epochs = 500
  seed = 0
  folds = 5

Any key can be overridden per run with --set, e.g.
  trough --set twc.width=44 --set mtm_keep=500 pipeline ...
";

#[derive(Parser)]
#[command(
    name = "trough",
    version,
    about = "Find valleys structurally similar to a reference trench in elevation rasters",
    after_long_help = CONFIG_HELP
)]
struct Cli {
    /// TOML configuration file (defaults apply when omitted)
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. --set twc.width=44
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Run seed, recorded in every stage manifest
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for candidate-level parallelism (0 = one per core)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for manifests and artifacts
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print the resolved configuration as TOML and exit
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic elevation raster with planted valleys
    Synth(SynthArgs),
    /// Load, mosaic, crop, convert, and describe elevation rasters
    Ingest(IngestArgs),
    /// Scan tiles for straight-valley candidates and store them
    Ssc(SscArgs),
    /// Rank stored candidates by cross-section warp cost
    Twc(TwcArgs),
    /// Rank waveform survivors by eigenshape similarity
    Mtm(MtmArgs),
    /// Build contour graphs, for one raster or for texture survivors
    Graph(GraphArgs),
    /// Train the siamese scorer on labeled graph pairs
    Train(TrainArgs),
    /// Evaluate a scorer: stored model, or cross-validation from scratch
    Eval(EvalArgs),
    /// Retrain with named feature channels zeroed and compare
    Ablate(AblateArgs),
    /// Score stored graphs against a reference graph and rank them
    Retrieve(RetrieveArgs),
    /// Run the complete funnel over tiles against a reference raster
    Pipeline(PipelineArgs),
    /// Bin similarity scores from a manifest column into a histogram
    Hist(HistArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Grid rows
    #[arg(long, default_value_t = 512)]
    rows: usize,
    /// Grid columns
    #[arg(long, default_value_t = 512)]
    cols: usize,
    /// Cell size, meters
    #[arg(long, default_value_t = 30.0)]
    cell: f64,
    /// Mean elevation of the base surface, meters
    #[arg(long, default_value_t = 4500.0)]
    base: f64,
    /// Half peak-to-peak fractal relief amplitude, meters
    #[arg(long, default_value_t = 8.0)]
    roughness: f64,
    /// Planted valley as row0,col0,row1,col1,depth_m,width_m,jitter_m
    /// (pixel endpoints; repeatable)
    #[arg(long, value_name = "SPEC")]
    valley: Vec<String>,
    /// Where to write the raster; .tgrd selects the binary format,
    /// anything else the ascii grid
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Input raster; up to four, in northwest, northeast, southwest,
    /// southeast order, are mosaicked into one grid
    #[arg(long, value_name = "FILE", required = true, num_args = 1..=4)]
    input: Vec<PathBuf>,
    /// Crop to row0,col0,rows,cols before writing
    #[arg(long, value_name = "SPEC")]
    crop: Option<String>,
    /// Write the result here (.tgrd binary, otherwise ascii grid)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SscArgs {
    /// Tile rasters to scan; each tile is named by its file stem
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
}

#[derive(Args)]
struct TwcArgs {
    /// Reference raster holding the trough to match
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Stored candidate directory (default: <out_dir>/candidates)
    #[arg(long, value_name = "DIR")]
    candidates: Option<PathBuf>,
}

#[derive(Args)]
struct MtmArgs {
    /// Reference raster holding the trough to match
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Stored candidate directory (default: <out_dir>/candidates)
    #[arg(long, value_name = "DIR")]
    candidates: Option<PathBuf>,
    /// Waveform-stage manifest naming the survivors
    /// (default: <out_dir>/twc.csv)
    #[arg(long, value_name = "FILE")]
    survivors: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    /// Build one graph from this raster instead of batch mode
    #[arg(long, value_name = "FILE", conflicts_with_all = ["candidates", "survivors"])]
    input: Option<PathBuf>,
    /// Clip the input to its longest straight-valley detection first,
    /// as a full pipeline run does to the reference tile
    #[arg(long, requires = "input")]
    clip: bool,
    /// Where to write the single graph (default: input with .txt)
    #[arg(long, value_name = "FILE", requires = "input")]
    output: Option<PathBuf>,
    /// Stored candidate directory (default: <out_dir>/candidates)
    #[arg(long, value_name = "DIR")]
    candidates: Option<PathBuf>,
    /// Texture-stage manifest naming the survivors
    /// (default: <out_dir>/mtm.csv)
    #[arg(long, value_name = "FILE")]
    survivors: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of graph text files, ordered by file name
    #[arg(long, value_name = "DIR")]
    graphs: PathBuf,
    /// Labeled pairs CSV (graph_a,graph_b,label)
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Where to write the trained checkpoint
    #[arg(long, value_name = "FILE")]
    save: PathBuf,
    /// Also write per-epoch losses as CSV
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of graph text files, ordered by file name
    #[arg(long, value_name = "DIR")]
    graphs: PathBuf,
    /// Labeled pairs CSV (graph_a,graph_b,label)
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Score with this checkpoint; omitted, run k-fold cross-validation
    /// (training per fold) with the configured protocol
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Write per-pair scores as CSV (checkpoint mode)
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    /// Write a score histogram as CSV (checkpoint mode)
    #[arg(long, value_name = "FILE")]
    hist: Option<PathBuf>,
    /// Write the histogram as a static vector graphic (checkpoint mode)
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    /// Histogram bin width
    #[arg(long, default_value_t = 0.05)]
    bin_width: f64,
}

#[derive(Args)]
struct AblateArgs {
    /// Directory of graph text files, ordered by file name
    #[arg(long, value_name = "DIR")]
    graphs: PathBuf,
    /// Labeled pairs CSV (graph_a,graph_b,label)
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Feature channel to drop, by name (repeatable; default all five)
    #[arg(long, value_name = "NAME")]
    drop: Vec<String>,
    /// Where to write the comparison table
    /// (default: <out_dir>/ablation.csv)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Reference graph text file
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Directory of candidate graph text files; graph_00042.txt keeps
    /// candidate id 42
    #[arg(long, value_name = "DIR")]
    graphs: PathBuf,
    /// Score with this checkpoint instead of the configured one
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Ranking rows to print
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct PipelineArgs {
    /// Reference raster holding the trough to match
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Tile rasters to scan; each tile is named by its file stem
    #[arg(long, value_name = "FILE", required = true, num_args = 1..)]
    tiles: Vec<PathBuf>,
    /// Score with this checkpoint instead of the configured one
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    /// CSV to read; a header row names its columns
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Column holding the scores
    #[arg(long, default_value = "score")]
    column: String,
    /// Bin width over [0, 1]
    #[arg(long, default_value_t = 0.05)]
    bin_width: f64,
    /// Write the histogram CSV here instead of printing it
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Also write a static vector graphic
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Config(_) => 2,
            Error::EmptyStage { .. } => 3,
            _ => 1,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::resolve(&config::ConfigArgs {
        config: cli.config,
        overrides: cli.overrides,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    })?;
    if cli.print_config {
        print!("{}", toml::to_string_pretty(&cfg).map_err(|e| Error::Config(e.to_string()))?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::Ssc(a) => commands::ssc(&cfg, &a),
        Command::Twc(a) => commands::twc(&cfg, &a),
        Command::Mtm(a) => commands::mtm(&cfg, &a),
        Command::Graph(a) => commands::graph(&cfg, &a),
        Command::Train(a) => commands::train(&cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Ablate(a) => commands::ablate(&cfg, &a),
        Command::Retrieve(a) => commands::retrieve(&cfg, &a),
        Command::Pipeline(a) => commands::pipeline(&cfg, &a),
        Command::Hist(a) => commands::hist(&a),
    }
}
