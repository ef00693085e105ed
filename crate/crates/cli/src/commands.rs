//! Subcommand definitions and their implementations.
//!
//! Every command writes its machine-readable result to the given writer and
//! reports failure as a [`CliError`]; the binary turns that into one JSON
//! line on stderr and a nonzero exit status.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use snipsearch::eval::human::{read_count_table, round2};
use snipsearch::eval::{
    baseline_detections, evaluate, human_split_metrics, human_study_aggregate, BaselineMethod, BaselineParams,
    Detection, HumanMetrics, PredictionLine, TemplateError,
};
use snipsearch::fusion::check::run_fusion_check;
use snipsearch::fusion::FusionConfig;
use snipsearch::ingest::resolve_alphabet;
use snipsearch::miner::{
    match_query_on_page, read_pair_lines, split_seen_unseen, write_pairs, DatasetStats, ExtractParams, PairLine,
    SeenLabel,
};
use snipsearch::{
    load_index, mine_pairs, parse_layout, save_index, search_snippet, BBox, Corpus, LayoutFormat, MineParams,
    PageRef, QueryInput, SearchRequest, Targets, DEFAULT_TH_SIM,
};

use crate::error::CliError;

pub const INDEX_ENV: &str = "SNIPSEARCH_INDEX";

#[derive(Debug, Parser)]
#[command(name = "snipsearch", version, about = "Layout-string snippet search and dataset tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse layout annotations into an index file.
    Ingest(IngestArgs),
    /// Mine (query, target) pairs from an index.
    Mine(MineArgs),
    /// Score a predictions file against mined pairs.
    Eval(EvalArgs),
    /// Dataset statistics of a pairs file or an index.
    Stats(StatsArgs),
    /// Label test queries as seen or unseen among training queries.
    Split(SplitArgs),
    /// Search a snippet across the pages of an index.
    Search(SearchArgs),
    /// Layout-string matcher detections for every pair of a pairs file.
    Predict(PredictArgs),
    /// Template-matching baseline detections for every pair of a pairs file.
    Baseline(BaselineArgs),
    /// Forward pass of the attention-fusion reference with invariant checks.
    FusionCheck(FusionCheckArgs),
    /// Aggregate human-study count tables.
    Human(HumanArgs),
    /// Serve the read-only HTTP search API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IndexArg {
    /// Index file.
    #[arg(long, env = INDEX_ENV)]
    pub index: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_parser = clap::value_parser!(LayoutFormat))]
    pub format: LayoutFormat,
    /// Builtin profile (publaynet, flamingo) or alphabet JSON file.
    #[arg(long)]
    pub alphabet: String,
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub index: IndexArg,
    #[arg(long, default_value_t = DEFAULT_TH_SIM)]
    pub th_sim: f64,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 4)]
    pub samples_per_page: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Mine on one thread. Output is identical either way.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub conf: f64,
    #[arg(long, default_value_t = 0.45)]
    pub nms: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, conflicts_with = "index", required_unless_present = "index")]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub index: IndexArg,
    #[arg(long, requires_all = ["page", "bbox"], conflicts_with = "lstr")]
    pub doc: Option<String>,
    #[arg(long)]
    pub page: Option<usize>,
    /// Selection rectangle `x0,y0,x1,y1`.
    #[arg(long, value_parser = parse_bbox)]
    pub bbox: Option<BBox>,
    /// Raw layout string instead of a page region.
    #[arg(long, required_unless_present = "doc")]
    pub lstr: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TH_SIM)]
    pub th: f64,
    #[arg(long, default_value_t = 100)]
    pub max_results: usize,
    /// Comma-separated document ids; all documents when absent.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<String>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub index: IndexArg,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TH_SIM)]
    pub th_sim: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_parser = clap::value_parser!(BaselineMethod))]
    pub method: BaselineMethod,
    #[command(flatten)]
    pub index: IndexArg,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Raster cell size in page units.
    #[arg(long, default_value_t = 4.0)]
    pub cell: f64,
    /// Acceptance threshold: minimum correlation (ncc) or maximum mean
    /// squared difference per cell (ssd).
    #[arg(long)]
    pub accept: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FusionCheckArgs {
    /// `full` or `tiny`.
    #[arg(long, default_value = "tiny")]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct HumanArgs {
    /// CSV count table.
    #[arg(long)]
    pub counts: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub index: IndexArg,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Allow cross-origin requests.
    #[arg(long)]
    pub cors: bool,
}

fn parse_bbox(s: &str) -> Result<BBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [x0, y0, x1, y1] = v[..] else {
        return Err("expected x0,y0,x1,y1".into());
    };
    BBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())
}

fn read_pairs(path: &Path) -> Result<Vec<PairLine>, CliError> {
    let f = File::open(path).map_err(|e| CliError::from(e).with_detail(json!({ "path": path })))?;
    Ok(read_pair_lines(BufReader::new(f))?)
}

fn load(path: &Path) -> Result<Corpus, CliError> {
    load_index(path).map_err(|e| CliError::from(e).with_detail(json!({ "path": path })))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, lines: &[T]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Locate the query and target pages of a pair in the corpus.
fn pair_pages(corpus: &Corpus, pair: &PairLine, pair_id: usize) -> Result<(usize, usize), CliError> {
    let find = |r: &PageRef| {
        corpus.page_index(r).ok_or_else(|| {
            CliError::new("unknown_page", format!("pair {pair_id} refers to a page missing from the index"))
                .with_detail(json!({ "pair_id": pair_id, "doc_id": r.doc, "page_no": r.page }))
        })
    };
    let q = find(&PageRef::new(pair.query.doc.clone(), pair.query.page))?;
    Ok((q, find(&pair.target)?))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Mine(a) => mine(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Stats(a) => stats(a, out),
        Command::Split(a) => split(a, out),
        Command::Search(a) => search(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Baseline(a) => baseline(a, out),
        Command::FusionCheck(a) => fusion_check(a, out),
        Command::Human(a) => human(a, out),
        Command::Serve(a) => crate::server::serve_blocking(a),
    }
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let alphabet = resolve_alphabet(&a.alphabet)?;
    let bytes = fs::read(&a.input).map_err(|e| CliError::from(e).with_detail(json!({ "path": a.input })))?;
    let corpus = parse_layout(a.format, &bytes, &alphabet)?;
    save_index(&corpus, &a.out)?;
    emit(
        out,
        &json!({
            "corpus_id": corpus.corpus_id,
            "n_pages": corpus.pages.len(),
            "n_elements": corpus.pages.iter().map(|p| p.elements.len()).sum::<usize>(),
            "dropped_elements": corpus.dropped_elements,
        }),
    )
}

fn mine(a: MineArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.th_sim > 0.0 && a.th_sim <= 1.0) {
        return Err(CliError::invalid_argument("--th-sim must lie in (0, 1]"));
    }
    if a.min_len == 0 || a.min_len > a.max_len {
        return Err(CliError::invalid_argument("need 1 <= --min-len <= --max-len"));
    }
    let corpus = load(&a.index.index)?;
    let params = MineParams {
        th_sim: a.th_sim,
        extract: ExtractParams {
            min_len: a.min_len,
            max_len: a.max_len,
            samples_per_page: a.samples_per_page,
        },
        seed: a.seed,
        parallel: !a.serial,
        ..MineParams::default()
    };
    let pairs = mine_pairs(&corpus, &params);
    let mut w = BufWriter::new(File::create(&a.out)?);
    write_pairs(&mut w, &pairs)?;
    let stats = snipsearch::miner::dataset_stats(&pairs);
    emit(out, &stats)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let gts: Vec<Vec<BBox>> = read_pairs(&a.gt)?
        .into_iter()
        .map(|p| p.gt.into_iter().map(|g| g.bbox).collect())
        .collect();
    let text = fs::read_to_string(&a.pred).map_err(|e| CliError::from(e).with_detail(json!({ "path": a.pred })))?;
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: PredictionLine = serde_json::from_str(line)
            .map_err(|e| CliError::new("invalid_data", format!("predictions line {}: {e}", i + 1)))?;
        preds.push(p);
    }
    let report = evaluate(&preds, &gts, a.conf, a.nms)?.rounded();
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_vec_pretty(&report)?)?;
    }
    emit(out, &report)
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let stats = match (&a.pairs, &a.index) {
        (Some(p), _) => {
            let pairs = read_pairs(p)?;
            DatasetStats::from_lstrs(pairs.iter().map(|p| p.query.lstr.as_str()))
        }
        (None, Some(i)) => {
            let corpus = load(i)?;
            DatasetStats::from_lstrs(corpus.lstrs.iter().map(|l| l.as_str()))
        }
        (None, None) => return Err(CliError::invalid_argument("need --pairs or --index")),
    };
    emit(out, &stats)
}

#[derive(Serialize)]
struct LabelLine<'a> {
    pair_id: usize,
    lstr: &'a str,
    label: SeenLabel,
}

fn split(a: SplitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let train = read_pairs(&a.train)?;
    let test = read_pairs(&a.test)?;
    let labels = split_seen_unseen(
        train.iter().map(|p| p.query.lstr.as_str()),
        test.iter().map(|p| p.query.lstr.as_str()),
    );
    let lines: Vec<LabelLine> = test
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (p, &label))| LabelLine {
            pair_id: i,
            lstr: &p.query.lstr,
            label,
        })
        .collect();
    write_jsonl(&a.out, &lines)?;
    let seen = labels.iter().filter(|&&l| l == SeenLabel::Seen).count();
    emit(out, &json!({ "seen": seen, "unseen": labels.len() - seen }))
}

fn search(a: SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load(&a.index.index)?;
    let query = match (a.doc, a.lstr) {
        (Some(doc), None) => QueryInput {
            doc_id: Some(doc),
            page_no: a.page,
            bbox: a.bbox,
            lstr: None,
        },
        (None, Some(l)) => QueryInput {
            lstr: Some(l),
            ..QueryInput::default()
        },
        _ => return Err(CliError::invalid_argument("give either --doc/--page/--bbox or --lstr")),
    };
    let mut req = SearchRequest::new(query);
    req.th_sim = a.th;
    req.max_results = a.max_results;
    if let Some(t) = a.targets {
        req.targets = Targets::Docs(t);
    }
    let resp = search_snippet(&corpus, &req)?;
    if a.json {
        return emit(out, &resp);
    }
    writeln!(out, "query {} ({} matches)", resp.query_lstr, resp.matches.len())?;
    for m in &resp.matches {
        let b = m.bbox;
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{},{},{},{}\t{}..{}",
            m.doc_id, m.page_no, m.score, b.x0, b.y0, b.x1, b.y1, m.elem_range[0], m.elem_range[1]
        )?;
    }
    Ok(())
}

fn predict(a: PredictArgs, _out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load(&a.index.index)?;
    let pairs = read_pairs(&a.pairs)?;
    let mut lines = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let (q, t) = pair_pages(&corpus, p, i)?;
        let snippet = corpus.run_snippet(q, p.query_range())?;
        let regions = match_query_on_page(&corpus, &snippet, t, a.th_sim, snipsearch::similarity::DEFAULT_REGION_NMS_IOU);
        let detections = regions.iter().map(|r| Detection::new(r.bbox, r.score)).collect::<Result<_, _>>()?;
        lines.push(PredictionLine { pair_id: i, detections });
    }
    write_jsonl(&a.out, &lines)
}

fn baseline(a: BaselineArgs, _out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load(&a.index.index)?;
    let pairs = read_pairs(&a.pairs)?;
    let mut params = BaselineParams::default_for(a.method);
    params.cell = a.cell;
    if let Some(acc) = a.accept {
        params.accept = acc;
    }
    let mut lines = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.iter().enumerate() {
        let (q, t) = pair_pages(&corpus, p, i)?;
        let snippet = corpus.run_snippet(q, p.query_range())?;
        let detections = match baseline_detections(&snippet, &corpus.pages[t], &corpus.alphabet, a.method, &params) {
            Ok(d) => d,
            // A query wider than the page or a featureless mask yields no boxes.
            Err(TemplateError::NoValidPosition | TemplateError::AllWindowsDegenerate) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        lines.push(PredictionLine { pair_id: i, detections });
    }
    write_jsonl(&a.out, &lines)
}

fn fusion_check(a: FusionCheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = FusionConfig::profile(&a.profile)
        .ok_or_else(|| CliError::invalid_argument(format!("unknown profile `{}` (expected full or tiny)", a.profile)))?;
    let report = run_fusion_check(&cfg, a.seed)?;
    let passed = report.passed(&cfg);
    emit(out, &json!({ "profile": a.profile, "report": report, "passed": passed }))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::new("fusion_check_failed", "fusion invariants violated").with_detail(json!(report)))
    }
}

fn rounded(m: &HumanMetrics) -> HumanMetrics {
    let r = |v: Option<f64>| v.map(round2);
    HumanMetrics {
        recall: r(m.recall),
        precision: r(m.precision),
        f1: r(m.f1),
        pct_complex: r(m.pct_complex),
        pct_nonexact: r(m.pct_nonexact),
    }
}

fn human(a: HumanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let f = File::open(&a.counts).map_err(|e| CliError::from(e).with_detail(json!({ "path": a.counts })))?;
    let table = read_count_table(f)?;
    let rows: Vec<HumanMetrics> = table.iter().map(|(_, c)| human_split_metrics(c)).collect();
    let avg = human_study_aggregate(&rows)?;
    let splits: Vec<_> = table
        .iter()
        .zip(&rows)
        .map(|((name, _), m)| json!({ "split": name, "metrics": rounded(m) }))
        .collect();
    emit(out, &json!({ "splits": splits, "average": rounded(&avg) }))
}
