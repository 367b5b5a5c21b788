use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wireframe::assembly::assemble_wireframe_with_stats;
use wireframe::fitter::{edge_nms, filter_by_confidence, fit};
use wireframe::io::{parse_obj_wireframe, parse_xyz, write_obj_wireframe, write_xyz, RunConfig};
use wireframe::losses::PredictionSet;
use wireframe::matching::{match_edges_with_matrix, LabelMode, MatchPair};
use wireframe::metrics::evaluate;
use wireframe::synthetic::{generate_roof, RoofKind};
use wireframe::Wireframe;

#[derive(Parser)]
#[command(
    name = "wirefit",
    version,
    about = "Fit, filter, assemble and score roof wireframes"
)]
struct Cli {
    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic roof point cloud and its ground-truth wireframe.
    Gen(GenArgs),
    /// Fit query edges to a ground-truth wireframe.
    Fit(FitArgs),
    /// Confidence filter, edge NMS and corner merging.
    Nms(NmsArgs),
    /// Similarity matrix and optimal assignment between two wireframes.
    Match(MatchArgs),
    /// Corner and edge metrics of a predicted wireframe.
    Eval(EvalArgs),
}

#[derive(Args, Default)]
struct SimilarityArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    samples_per_edge: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: Option<RoofKind>,
    /// Point cloud output (XYZ).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth wireframe output (OBJ).
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    eave_height: Option<f64>,
    #[arg(long)]
    ridge_height: Option<f64>,
    #[arg(long)]
    point_count: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    dropout_fraction: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Raw predictions output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Loss trace output (JSON array).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    num_queries: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    rematch_every: Option<usize>,
    #[arg(long)]
    init_length: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_label_mode)]
    label_mode: Option<LabelMode>,
    #[arg(long)]
    lambda_mid: Option<f64>,
    #[arg(long)]
    lambda_comp: Option<f64>,
    #[arg(long)]
    lambda_con: Option<f64>,
    #[arg(long)]
    lambda_quad: Option<f64>,
    #[arg(long)]
    lambda_sim: Option<f64>,
    #[command(flatten)]
    similarity: SimilarityArgs,
}

#[derive(Args)]
struct NmsArgs {
    /// Raw predictions (JSON, as written by `fit`).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    conf_threshold: Option<f64>,
    #[arg(long)]
    nms_threshold: Option<f64>,
    #[arg(long)]
    dbscan_eps: Option<f64>,
    #[arg(long)]
    dbscan_min_points: Option<usize>,
    /// Assembled wireframe output (OBJ).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    similarity: SimilarityArgs,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// JSON output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    similarity: SimilarityArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    corner_threshold: Option<f64>,
    /// JSON output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_label_mode(s: &str) -> std::result::Result<LabelMode, String> {
    match s {
        "soft" => Ok(LabelMode::Soft),
        "hard" => Ok(LabelMode::Hard),
        other => Err(format!(
            "unknown label mode {other:?} (expected soft or hard)"
        )),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_similarity(cfg: &mut RunConfig, a: SimilarityArgs) {
    set(&mut cfg.similarity.alpha, a.alpha);
    set(&mut cfg.similarity.beta, a.beta);
    set(&mut cfg.similarity.gamma, a.gamma);
    set(&mut cfg.similarity.samples_per_edge, a.samples_per_edge);
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| anyhow!("missing --{name} (not set on the command line or in the config)"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_wireframe(path: &Path) -> Result<Wireframe> {
    parse_obj_wireframe(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            RunConfig::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn run_gen(mut cfg: RunConfig, a: GenArgs) -> Result<()> {
    let roof = &mut cfg.roof;
    set(&mut roof.kind, a.kind);
    set(&mut roof.seed, a.seed);
    set(&mut roof.width, a.width);
    set(&mut roof.depth, a.depth);
    set(&mut roof.eave_height, a.eave_height);
    set(&mut roof.ridge_height, a.ridge_height);
    set(&mut roof.point_count, a.point_count);
    set(&mut roof.noise_sigma, a.noise_sigma);
    set(&mut roof.dropout_fraction, a.dropout_fraction);
    cfg.validate()?;
    let out = required(a.out, &cfg.paths.cloud, "out")?;
    let gt_path = required(a.gt, &cfg.paths.gt, "gt")?;

    let (cloud, gt) = generate_roof(&cfg.roof)?;
    write(&out, &write_xyz(&cloud))?;
    write(&gt_path, &write_obj_wireframe(&gt))?;
    eprintln!(
        "generated {:?} roof: {} points, {} vertices, {} edges",
        cfg.roof.kind,
        cloud.len(),
        gt.vertices.len(),
        gt.edges.len()
    );
    Ok(())
}

fn run_fit(mut cfg: RunConfig, a: FitArgs) -> Result<()> {
    let f = &mut cfg.fit;
    set(&mut f.num_queries, a.num_queries);
    set(&mut f.iterations, a.iterations);
    set(&mut f.step_size, a.step_size);
    set(&mut f.rematch_every, a.rematch_every);
    set(&mut f.init_length, a.init_length);
    set(&mut f.seed, a.seed);
    set(&mut f.label_mode, a.label_mode);
    let l = &mut cfg.loss;
    set(&mut l.lambda_mid, a.lambda_mid);
    set(&mut l.lambda_comp, a.lambda_comp);
    set(&mut l.lambda_con, a.lambda_con);
    set(&mut l.lambda_quad, a.lambda_quad);
    set(&mut l.lambda_sim, a.lambda_sim);
    apply_similarity(&mut cfg, a.similarity);
    cfg.validate()?;
    let cloud_path = required(a.cloud, &cfg.paths.cloud, "cloud")?;
    let gt_path = required(a.gt, &cfg.paths.gt, "gt")?;
    let out = required(a.out, &cfg.paths.pred_raw, "out")?;
    let trace_path = a.trace.or(cfg.paths.trace.clone());

    let cloud = parse_xyz(&read(&cloud_path)?)
        .with_context(|| format!("parsing {}", cloud_path.display()))?;
    let gt = read_wireframe(&gt_path)?;
    let result = fit(&cloud, &gt, &cfg.fit, &cfg.similarity, &cfg.loss)?;
    write(&out, &to_json(&result.predictions)?)?;
    if let Some(p) = trace_path {
        write(&p, &to_json(&result.trace)?)?;
    }
    let first = result.trace.first().copied().unwrap_or(f64::NAN);
    let last = result.trace.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "fitted {} queries over {} iterations, loss {first:.6} -> {last:.6}",
        cfg.fit.num_queries, cfg.fit.iterations
    );
    Ok(())
}

fn run_nms(mut cfg: RunConfig, a: NmsArgs) -> Result<()> {
    set(&mut cfg.fit.conf_threshold, a.conf_threshold);
    set(&mut cfg.fit.nms_threshold, a.nms_threshold);
    set(&mut cfg.dbscan.eps, a.dbscan_eps);
    set(&mut cfg.dbscan.min_points, a.dbscan_min_points);
    apply_similarity(&mut cfg, a.similarity);
    cfg.validate()?;
    let input = required(a.input, &cfg.paths.pred_raw, "in")?;
    let out = required(a.out, &cfg.paths.pred, "out")?;

    let preds: PredictionSet = serde_json::from_str(&read(&input)?)
        .with_context(|| format!("parsing {}", input.display()))?;
    preds.validate()?;
    let confident = filter_by_confidence(&preds, cfg.fit.conf_threshold);
    let kept = edge_nms(&confident, &cfg.similarity, cfg.fit.nms_threshold)?;
    let (wf, stats) = assemble_wireframe_with_stats(&kept.segments()?, &cfg.dbscan)?;
    write(&out, &write_obj_wireframe(&wf))?;
    eprintln!(
        "{} predictions, {} above confidence, {} after NMS; wireframe has {} vertices, {} edges ({} collapsed, {} duplicates dropped)",
        preds.len(),
        confident.len(),
        kept.len(),
        wf.vertices.len(),
        wf.edges.len(),
        stats.collapsed_edges,
        stats.duplicate_edges
    );
    Ok(())
}

#[derive(Serialize)]
struct MatchOutput {
    similarity: Vec<Vec<f64>>,
    pairs: Vec<MatchPair>,
    unmatched_preds: Vec<usize>,
    unmatched_gts: Vec<usize>,
    total_cost: f64,
}

fn run_match(mut cfg: RunConfig, a: MatchArgs) -> Result<()> {
    apply_similarity(&mut cfg, a.similarity);
    cfg.validate()?;
    let pred_path = required(a.pred, &cfg.paths.pred, "pred")?;
    let gt_path = required(a.gt, &cfg.paths.gt, "gt")?;

    let pred = read_wireframe(&pred_path)?.segments()?;
    let gt = read_wireframe(&gt_path)?.segments()?;
    let (m, sims) = match_edges_with_matrix(&pred, &gt, &cfg.similarity)?;
    let output = MatchOutput {
        similarity: sims.to_rows(),
        total_cost: m.total_cost(),
        pairs: m.pairs,
        unmatched_preds: m.unmatched_preds,
        unmatched_gts: m.unmatched_gts,
    };
    emit(a.out.as_deref(), &to_json(&output)?)?;
    eprintln!(
        "matched {} edge pairs, total cost {:.6}",
        output.pairs.len(),
        output.total_cost
    );
    Ok(())
}

fn run_eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    set(&mut cfg.eval.corner_match_threshold, a.corner_threshold);
    cfg.validate()?;
    let pred_path = required(a.pred, &cfg.paths.pred, "pred")?;
    let gt_path = required(a.gt, &cfg.paths.gt, "gt")?;
    let out = a.out.or(cfg.paths.report.clone());

    let report = evaluate(
        &read_wireframe(&pred_path)?,
        &read_wireframe(&gt_path)?,
        &cfg.eval,
    )?;
    emit(out.as_deref(), &to_json(&report)?)?;
    eprintln!(
        "ACO {:.4}  CP {:.3} CR {:.3} CF1 {:.3}  EP {:.3} ER {:.3} EF1 {:.3}",
        report.aco, report.cp, report.cr, report.cf1, report.ep, report.er, report.ef1
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => run_gen(cfg, a),
        Command::Fit(a) => run_fit(cfg, a),
        Command::Nms(a) => run_nms(cfg, a),
        Command::Match(a) => run_match(cfg, a),
        Command::Eval(a) => run_eval(cfg, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
