//! End-to-end funnel orchestration.
//!
//! [`run_pipeline`] wires the four stages together: scan every tile for
//! straight-valley candidates, rank them against the reference by warping
//! cost, re-rank the survivors by eigenshape similarity, then score the
//! finalists' contour graphs with the Siamese network and return the full
//! ranking. Each stage writes a CSV manifest (id, score, rank) into the
//! configured output directory and the run ends with a structured-text
//! summary of stage sizes, timings, and the configuration hash.
//!
//! The `score` column means something different per stage: the line-fit
//! error for the scan stage (discovery order), ascending warp cost for the
//! waveform stage, descending cosine similarity for the texture stage, and
//! descending network score for the final stage.
//!
//! Everything random funnels through the single `seed` field: it is stamped
//! into every manifest, seeds the fallback training run, and makes repeat
//! runs byte-identical manifest for manifest.

mod ablation;
mod dataset;
mod metrics;

pub use ablation::{ablation_run, feature_channel, zero_feature_channels, AblationRow, FEATURE_NAMES};
pub use dataset::{load_pair_dataset, parse_pair_dataset, PairDataset};
pub use metrics::{
    f1_from_precision_recall, metrics, similarity_histogram, ConfusionCounts, Histogram,
};

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{build_graph, GraphConfig, TerrainGraph};
use crate::mtm::{build_reference, mtm_filter, MtmConfig};
use crate::net::{
    siamese_score, train, LabeledPair, ModelParams, NetDims, TensorStore, TrainConfig,
};
use crate::raster::DemGrid;
use crate::ssc::{detect_candidates, SscConfig, ValleyCandidate};
use crate::twc::{slice_decompose, twc_filter, SliceSequence, TwcConfig};
use crate::{Error, Result};

/// Everything one retrieval run needs: per-stage parameters, funnel keep
/// counts, output locations, and the run seed.
///
/// Keep counts are hard counts, not score thresholds: the waveform stage
/// keeps its `twc_keep` cheapest survivors and the texture stage keeps its
/// `mtm_keep` most similar, fewer when fewer survive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Survivor count after the waveform stage.
    pub twc_keep: usize,
    /// Survivor count after the texture stage.
    pub mtm_keep: usize,
    /// Worker threads for candidate-level parallelism; 0 picks the
    /// library default.
    pub workers: usize,
    /// Seed for every random draw in the run.
    pub seed: u64,
    /// Directory receiving stage manifests and the run summary.
    pub out_dir: PathBuf,
    /// Trained scorer parameters. When absent, the run trains a fallback
    /// scorer on self pairs and cross pairs of the finalist graphs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub ssc: SscConfig,
    pub twc: TwcConfig,
    pub mtm: MtmConfig,
    pub graph: GraphConfig,
    pub dims: NetDims,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            twc_keep: 5000,
            mtm_keep: 1000,
            workers: 0,
            seed: 0,
            out_dir: PathBuf::from("run"),
            checkpoint: None,
            ssc: SscConfig::default(),
            twc: TwcConfig::default(),
            mtm: MtmConfig::default(),
            graph: GraphConfig::default(),
            dims: NetDims::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reject keep counts that break the funnel shape and stage parameters
    /// the stages themselves would refuse.
    pub fn validate(&self) -> Result<()> {
        if self.mtm_keep < 1 {
            return Err(Error::Config("mtm_keep must be at least 1".into()));
        }
        if self.twc_keep < self.mtm_keep {
            return Err(Error::Config(format!(
                "twc_keep {} must be at least mtm_keep {}",
                self.twc_keep, self.mtm_keep
            )));
        }
        self.dims.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// One corpus tile: a name for manifests plus its elevation grid.
#[derive(Debug, Clone)]
pub struct SourceTile {
    pub name: String,
    pub grid: DemGrid,
}

/// A candidate's position in the final ranking. Ranks are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedCandidate {
    pub id: usize,
    pub score: f64,
    pub rank: usize,
}

/// Size and wall-clock cost of one stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub name: &'static str,
    pub input: usize,
    pub output: usize,
    pub seconds: f64,
}

/// What a completed run hands back, apart from the files on disk.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Best-scoring candidate overall.
    pub best: RankedCandidate,
    /// Every scored finalist, descending by score, ties by id.
    pub final_ranking: Vec<RankedCandidate>,
    /// Candidate id to source tile name, for every pooled candidate.
    pub sources: Vec<(usize, String)>,
    pub stages: Vec<StageReport>,
    /// Manifest files, one per stage in funnel order.
    pub manifest_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

/// FNV-1a over the serialized configuration, for stamping runs.
pub fn config_hash(cfg: &PipelineConfig) -> Result<u64> {
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in text.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(h)
}

/// Order scored candidates descending by score, ties to the lower id, and
/// assign 1-based ranks.
pub fn rank_candidates(scored: &[(usize, f64)]) -> Vec<RankedCandidate> {
    let mut sorted: Vec<(usize, f64)> = scored.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, (id, score))| RankedCandidate { id, score, rank: i + 1 })
        .collect()
}

/// Score every candidate graph against the reference and return the best,
/// ties broken toward the lower id.
pub fn retrieve(
    candidates: &[(usize, TerrainGraph)],
    reference: &TerrainGraph,
    params: &ModelParams,
) -> Result<RankedCandidate> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "retrieve needs at least one candidate".into(),
        ));
    }
    let scored: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|(id, g)| siamese_score(g, reference, params).map(|s| (*id, s)))
        .collect::<Result<_>>()?;
    Ok(rank_candidates(&scored)[0])
}

/// Run the full funnel over `tiles` against `reference`.
///
/// The reference valley is extracted from the reference grid with the same
/// detector the corpus goes through; the longest detection wins, ties to
/// the lower fit error. Stage manifests land in `cfg.out_dir` as they
/// complete, followed by a run summary. A stage with no survivors aborts
/// the run with a stage-named error.
pub fn run_pipeline(
    tiles: &[SourceTile],
    reference: &DemGrid,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::InvalidParameter("no tiles to scan".into()));
    }
    if cfg.workers == 0 {
        run_stages(tiles, reference, cfg)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| run_stages(tiles, reference, cfg))
    }
}

/// Extract the reference valley from the reference grid: run the same
/// detector the corpus goes through and keep the longest detection, ties
/// to the lower fit error.
pub fn select_reference(reference: &DemGrid, cfg: &SscConfig) -> Result<ValleyCandidate> {
    let cands = detect_candidates(reference, "reference", cfg)?;
    cands
        .into_iter()
        .max_by(|a, b| {
            a.fit
                .length_px
                .total_cmp(&b.fit.length_px)
                .then(b.fit.mse.total_cmp(&a.fit.mse))
        })
        .ok_or(Error::EmptyStage { stage: "reference" })
}

fn run_stages(
    tiles: &[SourceTile],
    reference: &DemGrid,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let hash = config_hash(cfg)?;
    let mut stages = Vec::new();
    let mut manifest_paths = Vec::new();

    let ref_cand = select_reference(reference, &cfg.ssc)?;
    let ref_seq =
        slice_decompose(&ref_cand, cfg.twc.width, cfg.twc.spacing_for(&ref_cand.raster))?;

    // Scan stage: pool candidates across tiles under run-wide ids.
    let t0 = Instant::now();
    let per_tile: Vec<Vec<ValleyCandidate>> = tiles
        .par_iter()
        .map(|tile| detect_candidates(&tile.grid, &tile.name, &cfg.ssc))
        .collect::<Result<_>>()?;
    let mut pool: Vec<ValleyCandidate> = Vec::new();
    for mut cands in per_tile {
        for mut c in cands.drain(..) {
            c.id = pool.len();
            pool.push(c);
        }
    }
    if pool.is_empty() {
        return Err(Error::EmptyStage { stage: "ssc" });
    }
    let sources: Vec<(usize, String)> = pool.iter().map(|c| (c.id, c.source_tile.clone())).collect();
    stages.push(StageReport {
        name: "ssc",
        input: tiles.len(),
        output: pool.len(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    let ssc_rows: Vec<(usize, f64)> = pool.iter().map(|c| (c.id, c.fit.mse)).collect();
    manifest_paths.push(write_manifest(&cfg.out_dir, "ssc", cfg.seed, &ssc_rows)?);

    // Waveform stage.
    let t1 = Instant::now();
    let twc = twc_filter(&pool, &ref_seq, &cfg.twc, cfg.twc_keep)?;
    if twc.scores.is_empty() {
        return Err(Error::EmptyStage { stage: "twc" });
    }
    stages.push(StageReport {
        name: "twc",
        input: pool.len(),
        output: twc.scores.len(),
        seconds: t1.elapsed().as_secs_f64(),
    });
    let twc_rows: Vec<(usize, f64)> = twc.scores.iter().map(|s| (s.id, s.cost())).collect();
    manifest_paths.push(write_manifest(&cfg.out_dir, "twc", cfg.seed, &twc_rows)?);

    // Texture stage.
    let t2 = Instant::now();
    let by_id: HashMap<usize, &ValleyCandidate> = pool.iter().map(|c| (c.id, c)).collect();
    let mtm_ref = build_reference(&ref_seq, &cfg.mtm)?;
    let seqs: Vec<(usize, SliceSequence)> = twc
        .scores
        .par_iter()
        .map(|s| {
            let cand = by_id[&s.id];
            let spacing = cfg.twc.spacing_for(&cand.raster);
            slice_decompose(cand, cfg.twc.width, spacing).map(|seq| (s.id, seq))
        })
        .collect::<Result<_>>()?;
    let mtm = mtm_filter(&seqs, &mtm_ref, cfg.mtm_keep)?;
    if mtm.scores.is_empty() {
        return Err(Error::EmptyStage { stage: "mtm" });
    }
    stages.push(StageReport {
        name: "mtm",
        input: seqs.len(),
        output: mtm.scores.len(),
        seconds: t2.elapsed().as_secs_f64(),
    });
    let mtm_rows: Vec<(usize, f64)> = mtm.scores.iter().map(|s| (s.id, s.similarity)).collect();
    manifest_paths.push(write_manifest(&cfg.out_dir, "mtm", cfg.seed, &mtm_rows)?);

    // Scoring stage: contour graphs, a scorer, the final ranking.
    let t3 = Instant::now();
    let built: Vec<(usize, Result<TerrainGraph>)> = mtm
        .scores
        .par_iter()
        .map(|s| (s.id, build_graph(&by_id[&s.id].raster, &cfg.graph)))
        .collect();
    let mut graphs: Vec<(usize, TerrainGraph)> = Vec::new();
    let mut graph_skipped = 0usize;
    for (id, outcome) in built {
        match outcome {
            Ok(g) => graphs.push((id, g)),
            Err(_) => graph_skipped += 1,
        }
    }
    if graphs.is_empty() {
        return Err(Error::EmptyStage { stage: "score" });
    }
    let ref_graph = build_graph(&ref_cand.raster, &cfg.graph)?;
    let (params, trained) = scorer_params(cfg, &graphs)?;
    let scored: Vec<(usize, f64)> = graphs
        .par_iter()
        .map(|(id, g)| siamese_score(g, &ref_graph, &params).map(|s| (*id, s)))
        .collect::<Result<_>>()?;
    let final_ranking = rank_candidates(&scored);
    let best = final_ranking[0];
    stages.push(StageReport {
        name: "score",
        input: mtm.scores.len(),
        output: final_ranking.len(),
        seconds: t3.elapsed().as_secs_f64(),
    });
    let score_rows: Vec<(usize, f64)> = final_ranking.iter().map(|r| (r.id, r.score)).collect();
    manifest_paths.push(write_manifest(&cfg.out_dir, "score", cfg.seed, &score_rows)?);

    let best_tile = sources
        .iter()
        .find(|(id, _)| *id == best.id)
        .map(|(_, t)| t.as_str())
        .unwrap_or("?");
    let summary_path = write_summary(
        cfg, hash, &stages, graph_skipped, twc.skipped.len(), mtm.skipped.len(), trained, best,
        best_tile,
    )?;

    Ok(PipelineOutcome {
        best,
        final_ranking,
        sources,
        stages,
        manifest_paths,
        summary_path,
    })
}

/// Load the configured checkpoint, or train a fallback scorer on self
/// pairs (positive) and cross pairs (negative) of the finalist graphs.
/// Returns the parameters and a label naming which route was taken
/// (`"checkpoint"`, `"fallback"`, or `"untrained"` when fewer than two
/// finalists leave nothing to contrast).
pub fn scorer_params(
    cfg: &PipelineConfig,
    graphs: &[(usize, TerrainGraph)],
) -> Result<(ModelParams, &'static str)> {
    if let Some(path) = &cfg.checkpoint {
        let params = ModelParams::from_store(&TensorStore::load(path)?)?;
        return Ok((params, "checkpoint"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = graphs.len().min(24);
    if m < 2 {
        // One finalist leaves nothing to contrast; score it with seeded
        // initial parameters instead of pretending to train.
        return Ok((ModelParams::init(&cfg.dims, &mut rng)?, "untrained"));
    }
    let subset: Vec<TerrainGraph> = graphs.iter().take(m).map(|(_, g)| g.clone()).collect();
    let mut partners: Vec<usize> = (0..m).collect();
    partners.shuffle(&mut rng);
    let mut pairs = Vec::with_capacity(2 * m);
    for i in 0..m {
        pairs.push(LabeledPair::new(i, i, true));
        let j = if partners[i] != i { partners[i] } else { partners[(i + 1) % m] };
        pairs.push(LabeledPair::new(i, j, false));
    }
    let mut tcfg = cfg.train.clone();
    tcfg.seed = cfg.seed;
    let out = train(&pairs, &subset, &cfg.dims, &tcfg)?;
    Ok((out.params, "fallback"))
}

/// One stage manifest: a seed comment, a header, then `id,score,rank`
/// rows in the stage's own order. Floats print shortest round-trip, so
/// identical runs produce identical bytes. Callers write manifests from
/// one thread only.
pub fn write_manifest(
    dir: &Path,
    stage: &str,
    seed: u64,
    rows: &[(usize, f64)],
) -> Result<PathBuf> {
    let path = dir.join(format!("{stage}.csv"));
    let mut text = format!("# seed {seed}\nid,score,rank\n");
    for (rank0, (id, score)) in rows.iter().enumerate() {
        text.push_str(&format!("{id},{score},{}\n", rank0 + 1));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

/// A parsed stage manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Seed recorded in the leading comment, if one was present.
    pub seed: Option<u64>,
    /// Rows in file order.
    pub rows: Vec<RankedCandidate>,
}

/// Read a manifest produced by [`write_manifest`] back from disk.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

/// The parsing behind [`load_manifest`], separated for tests and fuzzing.
///
/// Comment lines (`#`) may precede the header; the first `# seed N` one
/// sets the recorded seed. The `id,score,rank` header is required, and
/// errors name the offending row.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    const FORMAT: &str = "stage manifest";
    let mut seed = None;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) if line.starts_with('#') => {
                if seed.is_none() {
                    if let Some(rest) = line.trim_start_matches('#').trim().strip_prefix("seed ") {
                        seed = rest.trim().parse::<u64>().ok();
                    }
                }
            }
            Some((_, line)) => break line,
            None => return Err(Error::parse(FORMAT, "file has no header line")),
        }
    };
    let normalized: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if normalized != "id,score,rank" {
        return Err(Error::parse(
            FORMAT,
            format!("header must be \"id,score,rank\", got \"{header}\""),
        ));
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                FORMAT,
                format!("row {row}: expected 3 fields, got {}", fields.len()),
            ));
        }
        let id: usize = fields[0].parse().map_err(|_| {
            Error::parse(FORMAT, format!("row {row}: id has non-numeric value \"{}\"", fields[0]))
        })?;
        let score: f64 = fields[1].parse().map_err(|_| {
            Error::parse(
                FORMAT,
                format!("row {row}: score has non-numeric value \"{}\"", fields[1]),
            )
        })?;
        let rank: usize = fields[2].parse().map_err(|_| {
            Error::parse(
                FORMAT,
                format!("row {row}: rank has non-numeric value \"{}\"", fields[2]),
            )
        })?;
        rows.push(RankedCandidate { id, score, rank });
    }
    Ok(Manifest { seed, rows })
}

#[allow(clippy::too_many_arguments)]
fn write_summary(
    cfg: &PipelineConfig,
    hash: u64,
    stages: &[StageReport],
    graph_skipped: usize,
    twc_skipped: usize,
    mtm_skipped: usize,
    trained: &'static str,
    best: RankedCandidate,
    best_tile: &str,
) -> Result<PathBuf> {
    let path = cfg.out_dir.join("summary.txt");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "run summary")?;
    writeln!(f, "config_hash: {hash:016x}")?;
    writeln!(f, "seed: {}", cfg.seed)?;
    writeln!(f, "workers: {}", cfg.workers)?;
    writeln!(f, "scorer: {trained}")?;
    for s in stages {
        writeln!(
            f,
            "stage {}: in {}, out {}, {:.3} s",
            s.name, s.input, s.output, s.seconds
        )?;
    }
    writeln!(
        f,
        "skipped: twc {twc_skipped}, mtm {mtm_skipped}, graph {graph_skipped}"
    )?;
    writeln!(f, "best: id {} score {} tile {}", best.id, best.score, best_tile)?;
    Ok(path)
}
