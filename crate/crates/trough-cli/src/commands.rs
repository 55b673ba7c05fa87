//! Subcommand implementations.
//!
//! Each handler is a thin front end over the library: resolve paths,
//! load inputs, call the stage, write the stage's files, print a short
//! report. Stage manifests always land in the configured output
//! directory under the stage's name, matching what a full pipeline run
//! would have written, so single-stage reruns slot into an existing run
//! directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use trough::graph::{build_graph, graph_from_text, graph_to_text, TerrainGraph};
use trough::mtm::{build_reference, mtm_filter};
use trough::net::{kfold_evaluate, siamese_score, train as train_scorer, ModelParams, TensorStore};
use trough::pipeline::{
    ablation_run, load_manifest, load_pair_dataset, metrics, rank_candidates, run_pipeline,
    scorer_params, select_reference, similarity_histogram, write_manifest, ConfusionCounts,
    PipelineConfig, SourceTile, FEATURE_NAMES,
};
use trough::raster::ascii::{load_ascii_grid, save_ascii_grid};
use trough::raster::synth::{synth_terrain, SynthSpec, ValleySpec};
use trough::raster::tgrd::{load_tgrd, save_tgrd};
use trough::raster::{mosaic_tiles, BoundingBox, DemGrid};
use trough::ssc::{detect_candidates, load_candidates, save_candidates, ValleyCandidate};
use trough::twc::{slice_decompose, SliceSequence, twc_filter};
use trough::{Error, Result};

use crate::{
    AblateArgs, EvalArgs, GraphArgs, HistArgs, IngestArgs, MtmArgs, PipelineArgs, RetrieveArgs,
    SscArgs, SynthArgs, TrainArgs, TwcArgs,
};

pub fn synth(cfg: &PipelineConfig, args: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec {
        rows: args.rows,
        cols: args.cols,
        cell_size: args.cell,
        base_elevation: args.base,
        roughness_m: args.roughness,
        valleys: Vec::new(),
        origin: (0.0, 0.0),
    };
    for v in &args.valley {
        spec.valleys.push(parse_valley(v)?);
    }
    let grid = synth_terrain(&spec, cfg.seed);
    save_grid(&grid, &args.output)?;
    let (lo, hi) = grid.value_range().unwrap_or((f64::NAN, f64::NAN));
    println!(
        "synth: {} ({}x{} cells, {} m cells, {} valleys, seed {})",
        args.output.display(),
        grid.rows(),
        grid.cols(),
        grid.cell_size(),
        spec.valleys.len(),
        cfg.seed
    );
    println!("elevation range: {lo:.1} .. {hi:.1} m");
    Ok(())
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let grids: Vec<DemGrid> = args.input.iter().map(|p| load_grid(p)).collect::<Result<_>>()?;
    let mut grid = if grids.len() == 1 {
        grids.into_iter().next().expect("length checked")
    } else {
        let slot = |i: usize| grids.get(i);
        mosaic_tiles([[slot(0), slot(1)], [slot(2), slot(3)]])?
    };
    if let Some(spec) = &args.crop {
        let v = parse_numbers(spec, 4, "crop (row0,col0,rows,cols)")?;
        let [r0, c0, rows, cols] = [v[0], v[1], v[2], v[3]];
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("crop extent must be nonzero".into()));
        }
        grid = grid.crop(&BoundingBox::new(r0, r0 + rows - 1, c0, c0 + cols - 1))?;
    }
    let nodata = grid.data().iter().filter(|&&v| v == grid.nodata()).count();
    println!(
        "grid: {}x{} cells, {} m cells, origin ({}, {}), {} nodata",
        grid.rows(),
        grid.cols(),
        grid.cell_size(),
        grid.origin().0,
        grid.origin().1,
        nodata
    );
    match grid.value_range() {
        Some((lo, hi)) => println!("elevation range: {lo:.1} .. {hi:.1} m"),
        None => println!("elevation range: all nodata"),
    }
    if let Some(out) = &args.output {
        save_grid(&grid, out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn ssc(cfg: &PipelineConfig, args: &SscArgs) -> Result<()> {
    let mut pool: Vec<ValleyCandidate> = Vec::new();
    for path in &args.input {
        let grid = load_grid(path)?;
        let name = tile_name(path);
        let found = detect_candidates(&grid, &name, &cfg.ssc)?;
        let n = found.len();
        for mut c in found {
            c.id = pool.len();
            pool.push(c);
        }
        println!("ssc: {name}: {n} candidates");
    }
    if pool.is_empty() {
        return Err(Error::EmptyStage { stage: "ssc" });
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let store = save_candidates(&cfg.out_dir.join("candidates"), &pool)?;
    let rows: Vec<(usize, f64)> = pool.iter().map(|c| (c.id, c.fit.mse)).collect();
    let manifest = write_manifest(&cfg.out_dir, "ssc", cfg.seed, &rows)?;
    println!("ssc: {} candidates from {} tiles", pool.len(), args.input.len());
    println!("stored {}", store.display());
    println!("manifest {}", manifest.display());
    Ok(())
}

pub fn twc(cfg: &PipelineConfig, args: &TwcArgs) -> Result<()> {
    with_workers(cfg, || {
        let dir = candidates_dir(cfg, &args.candidates);
        let pool = load_candidates(&dir)?;
        let ref_seq = reference_slices(cfg, &args.reference)?;
        let ranking = twc_filter(&pool, &ref_seq, &cfg.twc, cfg.twc_keep)?;
        if ranking.scores.is_empty() {
            return Err(Error::EmptyStage { stage: "twc" });
        }
        std::fs::create_dir_all(&cfg.out_dir)?;
        let rows: Vec<(usize, f64)> = ranking.scores.iter().map(|s| (s.id, s.cost())).collect();
        let manifest = write_manifest(&cfg.out_dir, "twc", cfg.seed, &rows)?;
        println!(
            "twc: {} in, {} kept, {} skipped; best cost {:.3}",
            pool.len(),
            ranking.scores.len(),
            ranking.skipped.len(),
            ranking.scores[0].cost()
        );
        println!("manifest {}", manifest.display());
        Ok(())
    })
}

pub fn mtm(cfg: &PipelineConfig, args: &MtmArgs) -> Result<()> {
    with_workers(cfg, || {
        let dir = candidates_dir(cfg, &args.candidates);
        let pool = load_candidates(&dir)?;
        let by_id: HashMap<usize, &ValleyCandidate> = pool.iter().map(|c| (c.id, c)).collect();
        let survivors_path = args
            .survivors
            .clone()
            .unwrap_or_else(|| cfg.out_dir.join("twc.csv"));
        let survivors = load_manifest(&survivors_path)?;
        let ref_seq = reference_slices(cfg, &args.reference)?;
        let mtm_ref = build_reference(&ref_seq, &cfg.mtm)?;
        let seqs: Vec<(usize, SliceSequence)> = survivors
            .rows
            .iter()
            .map(|r| {
                let cand = by_id.get(&r.id).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "survivor id {} is not in the candidate set at {}",
                        r.id,
                        dir.display()
                    ))
                })?;
                let spacing = cfg.twc.spacing_for(&cand.raster);
                slice_decompose(cand, cfg.twc.width, spacing).map(|seq| (r.id, seq))
            })
            .collect::<Result<_>>()?;
        let ranking = mtm_filter(&seqs, &mtm_ref, cfg.mtm_keep)?;
        if ranking.scores.is_empty() {
            return Err(Error::EmptyStage { stage: "mtm" });
        }
        std::fs::create_dir_all(&cfg.out_dir)?;
        let rows: Vec<(usize, f64)> =
            ranking.scores.iter().map(|s| (s.id, s.similarity)).collect();
        let manifest = write_manifest(&cfg.out_dir, "mtm", cfg.seed, &rows)?;
        println!(
            "mtm: {} in, {} kept, {} skipped; best similarity {:.4}",
            seqs.len(),
            ranking.scores.len(),
            ranking.skipped.len(),
            ranking.scores[0].similarity
        );
        println!("manifest {}", manifest.display());
        Ok(())
    })
}

pub fn graph(cfg: &PipelineConfig, args: &GraphArgs) -> Result<()> {
    if let Some(input) = &args.input {
        let grid = load_grid(input)?;
        let grid = if args.clip {
            select_reference(&grid, &cfg.ssc)?.raster
        } else {
            grid
        };
        let g = build_graph(&grid, &cfg.graph)?;
        let out = args
            .output
            .clone()
            .unwrap_or_else(|| input.with_extension("txt"));
        std::fs::write(&out, graph_to_text(&g))?;
        println!(
            "graph: {} nodes, {} edges -> {}",
            g.nodes().len(),
            g.edges().len(),
            out.display()
        );
        return Ok(());
    }

    let dir = candidates_dir(cfg, &args.candidates);
    let pool = load_candidates(&dir)?;
    let by_id: HashMap<usize, &ValleyCandidate> = pool.iter().map(|c| (c.id, c)).collect();
    let survivors_path = args
        .survivors
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("mtm.csv"));
    let survivors = load_manifest(&survivors_path)?;
    let out_dir = cfg.out_dir.join("graphs");
    std::fs::create_dir_all(&out_dir)?;
    let mut written = 0usize;
    let mut failed = 0usize;
    for r in &survivors.rows {
        let cand = by_id.get(&r.id).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "survivor id {} is not in the candidate set at {}",
                r.id,
                dir.display()
            ))
        })?;
        match build_graph(&cand.raster, &cfg.graph) {
            Ok(g) => {
                std::fs::write(out_dir.join(graph_file(r.id)), graph_to_text(&g))?;
                written += 1;
            }
            Err(_) => failed += 1,
        }
    }
    if written == 0 {
        return Err(Error::EmptyStage { stage: "graph" });
    }
    println!("graph: {written} written, {failed} failed -> {}", out_dir.display());
    Ok(())
}

pub fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<()> {
    let graphs = load_graph_list(&args.graphs)?;
    let ds = load_pair_dataset(&args.pairs, graphs.len())?;
    println!("train: {} pairs ({}), {} graphs", ds.pairs.len(), ds.balance(), graphs.len());
    let outcome = train_scorer(&ds.pairs, &graphs, &cfg.dims, &cfg.train)?;
    outcome.params.to_store().save(&args.save)?;
    println!(
        "best epoch {} of {}, validation loss {:.4}",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.best_val_loss
    );
    println!("checkpoint {}", args.save.display());
    if let Some(history) = &args.history {
        let mut text = String::from("epoch,train_loss,val_loss,val_f1\n");
        for e in &outcome.history {
            text.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_f1
            ));
        }
        std::fs::write(history, text)?;
        println!("history {}", history.display());
    }
    Ok(())
}

pub fn eval(cfg: &PipelineConfig, args: &EvalArgs) -> Result<()> {
    let graphs = load_graph_list(&args.graphs)?;
    let ds = load_pair_dataset(&args.pairs, graphs.len())?;
    let checkpoint = args.checkpoint.clone().or_else(|| cfg.checkpoint.clone());

    let Some(path) = checkpoint else {
        let report = kfold_evaluate(&ds.pairs, &graphs, &cfg.dims, &cfg.train)?;
        println!(
            "eval: {}-fold cross-validation on {} pairs ({})",
            cfg.train.folds,
            ds.pairs.len(),
            ds.balance()
        );
        for f in &report.folds {
            println!(
                "fold {}: val F1 {:.4} acc {:.4} (train F1 {:.4}), best epoch {}",
                f.fold, f.metrics.f1, f.metrics.accuracy, f.train_metrics.f1, f.best_epoch
            );
        }
        println!(
            "mean: acc {:.4}±{:.4} prec {:.4}±{:.4} rec {:.4}±{:.4} F1 {:.4}±{:.4}",
            report.mean.accuracy,
            report.std.accuracy,
            report.mean.precision,
            report.std.precision,
            report.mean.recall,
            report.std.recall,
            report.mean.f1,
            report.std.f1
        );
        return Ok(());
    };

    let params = ModelParams::from_store(&TensorStore::load(&path)?)?;
    let mut scores = Vec::with_capacity(ds.pairs.len());
    let mut counts = ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for p in &ds.pairs {
        let s = siamese_score(&graphs[p.a], &graphs[p.b], &params)?;
        match (s >= 0.5, p.label) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
        scores.push(s);
    }
    let m = metrics(&counts)?;
    println!("eval: {} pairs ({})", ds.pairs.len(), ds.balance());
    println!(
        "confusion: tp {} fp {} fn {} tn {}",
        counts.tp, counts.fp, counts.fn_, counts.tn
    );
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} F1 {:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    );
    if let Some(out) = &args.scores {
        let mut text = String::from("graph_a,graph_b,label,score\n");
        for (p, s) in ds.pairs.iter().zip(&scores) {
            text.push_str(&format!("{},{},{},{}\n", p.a, p.b, u8::from(p.label), s));
        }
        std::fs::write(out, text)?;
        println!("scores {}", out.display());
    }
    if args.hist.is_some() || args.svg.is_some() {
        let h = similarity_histogram(&scores, args.bin_width)?;
        if let Some(out) = &args.hist {
            std::fs::write(out, h.to_csv())?;
            println!("histogram {}", out.display());
        }
        if let Some(out) = &args.svg {
            std::fs::write(out, h.to_svg())?;
            println!("figure {}", out.display());
        }
    }
    Ok(())
}

pub fn ablate(cfg: &PipelineConfig, args: &AblateArgs) -> Result<()> {
    let graphs = load_graph_list(&args.graphs)?;
    let ds = load_pair_dataset(&args.pairs, graphs.len())?;
    let drops: Vec<String> = if args.drop.is_empty() {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.drop.iter().map(|d| canonical_feature(d)).collect()
    };
    println!(
        "ablate: {} pairs ({}), dropping {} in turn",
        ds.pairs.len(),
        ds.balance(),
        drops.join(", ")
    );
    let rows = ablation_run(&ds.pairs, &graphs, &cfg.dims, &cfg.train, &drops)?;
    let baseline = rows[0].report.mean.f1;
    let mut csv = String::from("dropped,accuracy,precision,recall,f1,f1_std\n");
    for row in &rows {
        let label = row.dropped.as_deref().unwrap_or("none");
        let m = &row.report.mean;
        println!(
            "{label:>8}: F1 {:.4} ± {:.4} ({:+.4})",
            m.f1,
            row.report.std.f1,
            m.f1 - baseline
        );
        csv.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            m.accuracy, m.precision, m.recall, m.f1, row.report.std.f1
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("ablation.csv"));
    std::fs::write(&out, csv)?;
    println!("table {}", out.display());
    Ok(())
}

pub fn retrieve(cfg: &PipelineConfig, args: &RetrieveArgs) -> Result<()> {
    with_workers(cfg, || {
        let ref_graph = graph_from_text(&std::fs::read_to_string(&args.reference)?)?;
        let graphs = load_graph_ids(&args.graphs)?;
        if graphs.is_empty() {
            return Err(Error::EmptyStage { stage: "score" });
        }
        let mut cfg = cfg.clone();
        if args.checkpoint.is_some() {
            cfg.checkpoint = args.checkpoint.clone();
        }
        let (params, scorer) = scorer_params(&cfg, &graphs)?;
        let scored: Vec<(usize, f64)> = graphs
            .iter()
            .map(|(id, g)| siamese_score(g, &ref_graph, &params).map(|s| (*id, s)))
            .collect::<Result<_>>()?;
        let ranking = rank_candidates(&scored);
        std::fs::create_dir_all(&cfg.out_dir)?;
        let rows: Vec<(usize, f64)> = ranking.iter().map(|r| (r.id, r.score)).collect();
        let manifest = write_manifest(&cfg.out_dir, "score", cfg.seed, &rows)?;
        println!("retrieve: {} graphs, {scorer} scorer", graphs.len());
        for r in ranking.iter().take(args.top) {
            println!("rank {:>3}: id {:>5} score {:.4}", r.rank, r.id, r.score);
        }
        println!("best: id {} score {:.4}", ranking[0].id, ranking[0].score);
        println!("manifest {}", manifest.display());
        Ok(())
    })
}

pub fn pipeline(cfg: &PipelineConfig, args: &PipelineArgs) -> Result<()> {
    let reference = load_grid(&args.reference)?;
    let tiles: Vec<SourceTile> = args
        .tiles
        .iter()
        .map(|p| load_grid(p).map(|grid| SourceTile { name: tile_name(p), grid }))
        .collect::<Result<_>>()?;
    let mut cfg = cfg.clone();
    if args.checkpoint.is_some() {
        cfg.checkpoint = args.checkpoint.clone();
    }
    let outcome = run_pipeline(&tiles, &reference, &cfg)?;
    for s in &outcome.stages {
        println!("stage {}: in {}, out {}, {:.3} s", s.name, s.input, s.output, s.seconds);
    }
    let tile = outcome
        .sources
        .iter()
        .find(|(id, _)| *id == outcome.best.id)
        .map(|(_, t)| t.as_str())
        .unwrap_or("?");
    println!(
        "best: id {} score {:.4} from {}",
        outcome.best.id, outcome.best.score, tile
    );
    println!("summary {}", outcome.summary_path.display());
    Ok(())
}

pub fn hist(args: &HistArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let scores = extract_scores(&text, &args.column)?;
    let h = similarity_histogram(&scores, args.bin_width)?;
    let stat = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "hist: {} scores, mean {}, median {}",
        h.total(),
        stat(h.mean),
        stat(h.median)
    );
    match &args.output {
        Some(out) => {
            std::fs::write(out, h.to_csv())?;
            println!("histogram {}", out.display());
        }
        None => print!("{}", h.to_csv()),
    }
    if let Some(out) = &args.svg {
        std::fs::write(out, h.to_svg())?;
        println!("figure {}", out.display());
    }
    Ok(())
}

/// Run `f` on the configured worker pool; zero workers means the
/// process-wide default of one thread per core.
fn with_workers<T>(cfg: &PipelineConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    if cfg.workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(f)
    }
}

/// Load a raster, picking the format by extension: `.tgrd` is the flat
/// binary layout, anything else the ascii grid.
fn load_grid(path: &Path) -> Result<DemGrid> {
    if path.extension().is_some_and(|e| e == "tgrd") {
        load_tgrd(path)
    } else {
        load_ascii_grid(path)
    }
}

fn save_grid(grid: &DemGrid, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "tgrd") {
        save_tgrd(grid, path)
    } else {
        save_ascii_grid(grid, path)
    }
}

/// A tile is named by its file stem.
fn tile_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn candidates_dir(cfg: &PipelineConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| cfg.out_dir.join("candidates"))
}

/// Extract the reference slice sequence the waveform and texture stages
/// compare against, exactly as a full pipeline run would.
fn reference_slices(cfg: &PipelineConfig, path: &Path) -> Result<SliceSequence> {
    let grid = load_grid(path)?;
    let cand = select_reference(&grid, &cfg.ssc)?;
    slice_decompose(&cand, cfg.twc.width, cfg.twc.spacing_for(&cand.raster))
}

fn graph_file(id: usize) -> String {
    format!("graph_{id:05}.txt")
}

/// Match a feature name ignoring case; unknown names pass through so the
/// ablation itself reports them against the canonical list.
fn canonical_feature(name: &str) -> String {
    FEATURE_NAMES
        .iter()
        .find(|f| f.eq_ignore_ascii_case(name))
        .map_or_else(|| name.to_string(), |f| f.to_string())
}

/// Candidate id recorded in a graph file name, when the name carries one.
fn graph_file_id(name: &str) -> Option<usize> {
    name.strip_prefix("graph_")?.strip_suffix(".txt")?.parse().ok()
}

fn graph_dir_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no graph text files in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

/// Graphs in file-name order; pair datasets index this order.
fn load_graph_list(dir: &Path) -> Result<Vec<TerrainGraph>> {
    graph_dir_entries(dir)?
        .iter()
        .map(|p| graph_from_text(&std::fs::read_to_string(p)?))
        .collect()
}

/// Graphs with their candidate ids, taken from `graph_00042.txt` style
/// names where present and from file order otherwise.
fn load_graph_ids(dir: &Path) -> Result<Vec<(usize, TerrainGraph)>> {
    graph_dir_entries(dir)?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let id = p
                .file_name()
                .and_then(|n| graph_file_id(&n.to_string_lossy()))
                .unwrap_or(i);
            graph_from_text(&std::fs::read_to_string(p)?).map(|g| (id, g))
        })
        .collect()
}

fn parse_valley(spec: &str) -> Result<ValleySpec> {
    let v = parse_floats(spec, 7, "valley (row0,col0,row1,col1,depth_m,width_m,jitter_m)")?;
    Ok(ValleySpec {
        start: (v[0], v[1]),
        end: (v[2], v[3]),
        depth_m: v[4],
        width_m: v[5],
        jitter_m: v[6],
    })
}

fn parse_floats(spec: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let fields: Vec<&str> = spec.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(Error::Config(format!(
            "{what} needs {n} comma-separated values, got {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: \"{f}\" is not a number")))
        })
        .collect()
}

fn parse_numbers(spec: &str, n: usize, what: &str) -> Result<Vec<usize>> {
    let fields: Vec<&str> = spec.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(Error::Config(format!(
            "{what} needs {n} comma-separated values, got {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| Error::Config(format!("{what}: \"{f}\" is not a whole number")))
        })
        .collect()
}

/// Pull one numeric column out of a small CSV. A header row names the
/// column; a headerless single-column file is taken as a bare score
/// list. Comment lines (`#`) and blank lines are skipped.
fn extract_scores(text: &str, column: &str) -> Result<Vec<f64>> {
    const FORMAT: &str = "score csv";
    let mut col: Option<usize> = None;
    let mut scores = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        let i = match col {
            Some(i) => i,
            None => {
                if let Some(i) = fields.iter().position(|f| *f == column) {
                    col = Some(i);
                    continue;
                }
                if fields.len() == 1 && fields[0].parse::<f64>().is_ok() {
                    col = Some(0);
                    0
                } else {
                    return Err(Error::Parse {
                        format: FORMAT,
                        detail: format!("no \"{column}\" column in header \"{t}\""),
                    });
                }
            }
        };
        let field = fields.get(i).ok_or_else(|| Error::Parse {
            format: FORMAT,
            detail: format!("row {row}: only {} fields", fields.len()),
        })?;
        let value = field.parse::<f64>().map_err(|_| Error::Parse {
            format: FORMAT,
            detail: format!("row {row}: \"{field}\" is not a number"),
        })?;
        scores.push(value);
    }
    if col.is_none() {
        return Err(Error::Parse { format: FORMAT, detail: "file has no data".into() });
    }
    Ok(scores)
}
