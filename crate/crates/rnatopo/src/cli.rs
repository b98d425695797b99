//! The `rnatopo` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rnatopo_core::diagram::count_secondary;
use rnatopo_core::grammar::{parse_loops, parse_loops_structural, parse_simple, Grammar, ParseTree};
use rnatopo_core::lambda::{backbone_permutation, lambda_from_pk, lambda_from_pk_with_sequence, MAX_LEVELS};
use rnatopo_core::scfg::{self, build_inside, Counting, Model, StatsReport, DEFAULT_PSEUDOCOUNT};
use rnatopo_core::unicellular::{Blueprint, UnicellularMap};
use serde_json::{json, Value};

use crate::corpus::{parse_corpus, CorpusRecord, CorpusSummary};
use crate::lambda_text::write_lambda;
use crate::model_json::{model_from_json, model_to_json};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrammarChoice {
    Simple,
    Loops,
}

/// Topological analysis, training and sampling of RNA pseudoknot structures.
#[derive(Debug, Parser)]
#[command(name = "rnatopo", version)]
pub struct Cli {
    /// Minimum number of unpaired bases inside a hairpin.
    #[arg(long, global = true, default_value_t = 1)]
    pub min_hairpin: usize,
    /// Largest genus accepted or sampled.
    #[arg(long, global = true, default_value_t = 3)]
    pub genus_cap: usize,
    /// Random seed (required by `sample`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Write the main output here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Genus, boundary components and crossings per record.
    Genus { input: PathBuf },
    /// Blueprints with their slicing traces.
    Blueprints { input: PathBuf },
    /// λ-structures of every blueprint.
    Lambda { input: PathBuf },
    /// Parse trees of every blueprint's λ-structure.
    Parse {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = GrammarChoice::Loops)]
        grammar: GrammarChoice,
    },
    /// Trains a model from a corpus with sequences.
    Train {
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PSEUDOCOUNT)]
        pseudocount: f64,
    },
    /// Draws structures of length `n` from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long, default_value_t = 76)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Probability of each record under a model.
    Score {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
    },
    /// Structure statistics table.
    Stats { input: PathBuf },
    /// Numbers of secondary structures and of λ-structures up to length `n`.
    Count { n: usize },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) => m,
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: String,
    err: &'a mut dyn Write,
    /// Set when some record failed.
    failed: bool,
}

impl Ctx<'_> {
    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "rnatopo: {msg}");
    }

    fn record_error(&mut self, id: &str, msg: impl std::fmt::Display) {
        self.warn(format_args!("{id}: {msg}"));
        self.failed = true;
    }

    fn json(&mut self, v: &Value) {
        self.out.push_str(&serde_json::to_string_pretty(v).expect("json value serializes"));
        self.out.push('\n');
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Data(format!("stdin: {e}")))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Valid records of a corpus file; bad lines are reported and flag failure.
fn load_records(ctx: &mut Ctx, path: &Path) -> Result<Vec<CorpusRecord>, Failure> {
    let text = read_input(path)?;
    let mut out = Vec::new();
    for r in parse_corpus(&text) {
        match r {
            Ok(rec) => out.push(rec),
            Err(e) => {
                ctx.warn(format_args!("{}: {e}", path.display()));
                ctx.failed = true;
            }
        }
    }
    Ok(out)
}

/// Dual map and blueprints of a record within the genus cap.
fn record_blueprints(cap: usize, rec: &CorpusRecord) -> Result<(usize, Vec<Blueprint>), String> {
    let (m, _) = rec.diagram.to_matching();
    let u = UnicellularMap::dual_of_matching(&m).map_err(|e| e.to_string())?;
    let g = u.genus();
    if g > cap {
        return Err(format!("genus {g} exceeds the cap {cap}"));
    }
    Ok((g, u.blueprints()))
}

fn join<T: std::fmt::Display>(xs: &[T], sep: &str) -> String {
    let mut s = String::new();
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            s.push_str(sep);
        }
        let _ = write!(s, "{x}");
    }
    s
}

fn cmd_genus(ctx: &mut Ctx, input: &Path) -> Result<(), Failure> {
    let recs = load_records(ctx, input)?;
    let mut rows = Vec::new();
    for rec in &recs {
        match rec.topology() {
            Ok(t) => rows.push((rec, t)),
            Err(e) => ctx.record_error(&rec.id, e),
        }
    }
    if ctx.cli.format == Format::Json {
        let v: Vec<Value> = rows
            .iter()
            .map(|(rec, t)| {
                json!({
                    "id": rec.id,
                    "n": rec.diagram.len(),
                    "arcs": rec.diagram.arc_count(),
                    "crossings": rec.diagram.crossing_pairs().len(),
                    "r": t.r,
                    "genus": t.g,
                })
            })
            .collect();
        ctx.json(&Value::Array(v));
        return Ok(());
    }
    ctx.out.push_str("id\tn\tarcs\tcrossings\tr\tgenus\n");
    for (rec, t) in rows {
        let _ = writeln!(
            ctx.out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            rec.id,
            rec.diagram.len(),
            rec.diagram.arc_count(),
            rec.diagram.crossing_pairs().len(),
            t.r,
            t.g
        );
    }
    Ok(())
}

fn cmd_blueprints(ctx: &mut Ctx, input: &Path) -> Result<(), Failure> {
    let recs = load_records(ctx, input)?;
    let mut js = Vec::new();
    for rec in &recs {
        let (g, bps) = match record_blueprints(ctx.cli.genus_cap, rec) {
            Ok(x) => x,
            Err(e) => {
                ctx.record_error(&rec.id, e);
                continue;
            }
        };
        if ctx.cli.format == Format::Json {
            let list: Vec<Value> = bps
                .iter()
                .map(|bp| json!({"r": bp.r(), "taus": bp.trisection_sequence(), "trace": bp.debug_lines()}))
                .collect();
            js.push(json!({"id": rec.id, "genus": g, "m": bps.len(), "blueprints": list}));
            continue;
        }
        let _ = writeln!(ctx.out, ">{} n={} genus={} m={}", rec.id, rec.diagram.len(), g, bps.len());
        for (k, bp) in bps.iter().enumerate() {
            let _ = writeln!(ctx.out, "blueprint {} r={} taus=[{}]", k + 1, bp.r(), join(&bp.trisection_sequence(), ","));
            for line in bp.debug_lines() {
                let _ = writeln!(ctx.out, "  {line}");
            }
        }
    }
    if ctx.cli.format == Format::Json {
        ctx.json(&Value::Array(js));
    }
    Ok(())
}

fn cmd_lambda(ctx: &mut Ctx, input: &Path) -> Result<(), Failure> {
    let recs = load_records(ctx, input)?;
    let mut js = Vec::new();
    for rec in &recs {
        let (g, bps) = match record_blueprints(ctx.cli.genus_cap, rec) {
            Ok(x) => x,
            Err(e) => {
                ctx.record_error(&rec.id, e);
                continue;
            }
        };
        if ctx.cli.format == Format::Tsv {
            let _ = writeln!(ctx.out, "# {} genus={} m={}", rec.id, g, bps.len());
        }
        for (k, bp) in bps.iter().enumerate() {
            let made = match &rec.sequence {
                Some(q) => lambda_from_pk_with_sequence(&rec.diagram, bp, q).map(|(s, q)| (s, Some(q))),
                None => lambda_from_pk(&rec.diagram, bp).map(|s| (s, None)),
            };
            let (s, q) = match made {
                Ok(x) => x,
                Err(e) => {
                    ctx.record_error(&rec.id, e);
                    continue;
                }
            };
            let rho = backbone_permutation(bp);
            let id = format!("{}/{}", rec.id, k + 1);
            if ctx.cli.format == Format::Json {
                let r = s.r();
                let arcs: Vec<Value> = s
                    .labeled_arcs()
                    .iter()
                    .map(|&(i, j, l)| json!({"i": i, "j": j, "label": l.bits(r)}))
                    .collect();
                js.push(json!({
                    "id": id,
                    "r": r,
                    "rho": rho.images(),
                    "trace": bp.debug_lines(),
                    "structure": s.diagram().to_dot_bracket().unwrap_or_default(),
                    "rainbow": s.rainbow().bits(r),
                    "arcs": arcs,
                    "sequence": q.as_ref().map(|q| q.to_string()),
                }));
                continue;
            }
            let _ = writeln!(ctx.out, "# rho={}", join(rho.images(), ","));
            for line in bp.debug_lines() {
                let _ = writeln!(ctx.out, "# {line}");
            }
            ctx.out.push_str(&write_lambda(&id, &s, q.as_ref()));
        }
    }
    if ctx.cli.format == Format::Json {
        ctx.json(&Value::Array(js));
    }
    Ok(())
}

fn parse_record(gr: &Grammar, choice: GrammarChoice, rec: &CorpusRecord, bp: &Blueprint) -> Result<ParseTree, String> {
    let tree = match (choice, &rec.sequence) {
        (GrammarChoice::Simple, _) => parse_simple(gr, &lambda_from_pk(&rec.diagram, bp).map_err(|e| e.to_string())?),
        (GrammarChoice::Loops, None) => {
            parse_loops_structural(gr, &lambda_from_pk(&rec.diagram, bp).map_err(|e| e.to_string())?)
        }
        (GrammarChoice::Loops, Some(q)) => {
            let (s, q) = lambda_from_pk_with_sequence(&rec.diagram, bp, q).map_err(|e| e.to_string())?;
            parse_loops(gr, &s, &q)
        }
    };
    tree.map_err(|e| e.to_string())
}

fn cmd_parse(ctx: &mut Ctx, input: &Path, choice: GrammarChoice) -> Result<(), Failure> {
    let cap = ctx.cli.genus_cap;
    let gr = match choice {
        GrammarChoice::Simple => Grammar::simple(ctx.cli.min_hairpin, cap),
        GrammarChoice::Loops => Grammar::loops(ctx.cli.min_hairpin, cap),
    };
    let recs = load_records(ctx, input)?;
    let mut js = Vec::new();
    for rec in &recs {
        let bps = match record_blueprints(cap, rec) {
            Ok((_, b)) => b,
            Err(e) => {
                ctx.record_error(&rec.id, e);
                continue;
            }
        };
        for (k, bp) in bps.iter().enumerate() {
            let id = format!("{}/{}", rec.id, k + 1);
            match parse_record(&gr, choice, rec, bp) {
                Ok(t) if ctx.cli.format == Format::Json => js.push(json!({"id": id, "tree": t.to_sexpr()})),
                Ok(t) => {
                    let _ = writeln!(ctx.out, ">{id}\n{}", t.to_sexpr());
                }
                Err(e) => ctx.record_error(&id, e),
            }
        }
    }
    if ctx.cli.format == Format::Json {
        ctx.json(&Value::Array(js));
    }
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, corpus: &Path, pseudocount: f64) -> Result<(), Failure> {
    if !(pseudocount.is_finite() && pseudocount >= 0.0) {
        return Err(Failure::Usage(format!("pseudocount {pseudocount} must be a finite number >= 0")));
    }
    let recs = load_records(ctx, corpus)?;
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    for rec in &recs {
        match &rec.sequence {
            Some(q) => {
                pairs.push((rec.diagram.clone(), q.clone()));
                ids.push(rec.id.as_str());
            }
            None => ctx.warn(format_args!("{}: no sequence, skipped", rec.id)),
        }
    }
    let gr = Grammar::loops(ctx.cli.min_hairpin, ctx.cli.genus_cap);
    let tr = scfg::train(&gr, &pairs, pseudocount).map_err(data)?;
    for (id, r) in ids.iter().zip(&tr.records) {
        if let Err(e) = r {
            ctx.warn(format_args!("{id}: {e}, skipped"));
        }
    }
    let used = tr.used();
    if used == 0 {
        return Err(Failure::Data("no trainable record".into()));
    }
    ctx.warn(format_args!(
        "trained on {used} of {} records ({})",
        recs.len(),
        CorpusSummary::of(&recs)
    ));
    ctx.out.push_str(&model_to_json(&tr.model));
    // skipped records do not fail training
    ctx.failed = false;
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    let text = read_input(path)?;
    model_from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn stats_rows(rep: &StatsReport, prefix: &str, out: &mut String) {
    let _ = writeln!(out, "{prefix}variable\tmean\tvariance");
    for (name, m) in rep.rows() {
        let _ = writeln!(out, "{prefix}{name}\t{:.6}\t{:.6}", m.mean, m.variance);
    }
}

fn genus_rows(rep: &StatsReport, out: &mut String) {
    out.push_str("# genus\tcount\n");
    for (g, c) in &rep.genus_counts {
        let _ = writeln!(out, "# {g}\t{c}");
    }
}

fn stats_json(rep: &StatsReport) -> Value {
    let rows: Vec<Value> = rep
        .rows()
        .iter()
        .map(|(name, m)| json!({"variable": name, "mean": m.mean, "variance": m.variance}))
        .collect();
    let genus: serde_json::Map<String, Value> =
        rep.genus_counts.iter().map(|(g, c)| (g.to_string(), json!(c))).collect();
    json!({"count": rep.count, "rows": rows, "genus_counts": genus})
}

fn cmd_sample(ctx: &mut Ctx, model: &Path, n: usize, count: usize) -> Result<(), Failure> {
    let seed = ctx
        .cli
        .seed
        .ok_or_else(|| Failure::Usage("sample needs --seed".into()))?;
    if n == 0 {
        return Err(Failure::Usage("n must be at least 1".into()));
    }
    let model = load_model(model)?;
    let g_max = ctx.cli.genus_cap.min(model.r_max());
    let table = build_inside(&model, n, g_max).map_err(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diagrams = Vec::with_capacity(count);
    let mut lines = Vec::with_capacity(count);
    for k in 1..=count {
        let (d, _, s) = table.sample(&mut rng, n).map_err(data)?;
        lines.push((format!("sample_{k}"), d.to_dot_bracket().map_err(data)?, s.genus()));
        diagrams.push(d);
    }
    let rep = scfg::stats(&diagrams);
    if ctx.cli.format == Format::Json {
        let v: Vec<Value> = lines
            .iter()
            .map(|(id, db, g)| json!({"id": id, "structure": db, "genus": g}))
            .collect();
        ctx.json(&json!({"n": n, "count": count, "seed": seed, "g_max": g_max, "structures": v, "stats": stats_json(&rep)}));
        return Ok(());
    }
    let _ = writeln!(ctx.out, "# n={n} count={count} seed={seed} g_max={g_max}");
    ctx.out.push_str("# id\tsequence\tstructure\tgenus\n");
    for (id, db, g) in &lines {
        let _ = writeln!(ctx.out, "{id}\t-\t{db}\t{g}");
    }
    stats_rows(&rep, "# ", &mut ctx.out);
    genus_rows(&rep, &mut ctx.out);
    Ok(())
}

fn cmd_score(ctx: &mut Ctx, model: &Path, input: &Path) -> Result<(), Failure> {
    let model = load_model(model)?;
    let recs = load_records(ctx, input)?;
    let mut rows = Vec::new();
    for rec in &recs {
        let (kind, res) = match &rec.sequence {
            Some(q) => ("joint", scfg::score(&model, &rec.diagram, q)),
            None => ("marginal", scfg::marginal_score(&model, &rec.diagram)),
        };
        match res {
            Ok(s) => {
                for z in &s.zero_rules {
                    ctx.warn(format_args!("{}: zero-probability rule {z}", rec.id));
                }
                rows.push((rec.id.as_str(), kind, s.per_blueprint.len(), s.total));
            }
            Err(e) => ctx.record_error(&rec.id, e),
        }
    }
    if ctx.cli.format == Format::Json {
        let v: Vec<Value> = rows
            .iter()
            .map(|&(id, kind, m, p)| json!({"id": id, "kind": kind, "blueprints": m, "probability": p, "log10": p.log10()}))
            .collect();
        ctx.json(&Value::Array(v));
        return Ok(());
    }
    ctx.out.push_str("id\tkind\tblueprints\tprobability\tlog10\n");
    for (id, kind, m, p) in rows {
        let _ = writeln!(ctx.out, "{id}\t{kind}\t{m}\t{p:e}\t{:.6}", p.log10());
    }
    Ok(())
}

fn cmd_stats(ctx: &mut Ctx, input: &Path) -> Result<(), Failure> {
    let recs = load_records(ctx, input)?;
    let ds: Vec<_> = recs.into_iter().map(|r| r.diagram).collect();
    let rep = scfg::stats(&ds);
    if ctx.cli.format == Format::Json {
        ctx.json(&stats_json(&rep));
        return Ok(());
    }
    stats_rows(&rep, "", &mut ctx.out);
    genus_rows(&rep, &mut ctx.out);
    Ok(())
}

/// Exact below 2^53, otherwise in scientific notation.
fn count_text(x: f64) -> String {
    if x < 9.007_199_254_740_992e15 {
        format!("{}", x.round())
    } else {
        format!("{x:e}")
    }
}

fn cmd_count(ctx: &mut Ctx, n: usize) -> Result<(), Failure> {
    let cap = ctx.cli.genus_cap;
    let mh = ctx.cli.min_hairpin;
    let table = build_inside(&Counting(Grammar::loops(mh, cap)), n.max(1), cap).map_err(data)?;
    let rows: Vec<(usize, String, String)> = (0..=n)
        .map(|k| (k, count_secondary(k, mh).to_string(), count_text(table.partition(k))))
        .collect();
    if ctx.cli.format == Format::Json {
        let v: Vec<Value> = rows
            .iter()
            .map(|(k, s, l)| json!({"n": k, "secondary": s, "lambda_structures": l}))
            .collect();
        ctx.json(&Value::Array(v));
        return Ok(());
    }
    ctx.out.push_str("n\tsecondary\tlambda_structures\n");
    for (k, s, l) in rows {
        let _ = writeln!(ctx.out, "{k}\t{s}\t{l}");
    }
    Ok(())
}

fn dispatch(ctx: &mut Ctx) -> Result<(), Failure> {
    if ctx.cli.genus_cap > MAX_LEVELS {
        return Err(Failure::Usage(format!("--genus-cap must be at most {MAX_LEVELS}")));
    }
    match &ctx.cli.command {
        Command::Genus { input } => cmd_genus(ctx, input),
        Command::Blueprints { input } => cmd_blueprints(ctx, input),
        Command::Lambda { input } => cmd_lambda(ctx, input),
        Command::Parse { input, grammar } => cmd_parse(ctx, input, *grammar),
        Command::Train { corpus, pseudocount } => cmd_train(ctx, corpus, *pseudocount),
        Command::Sample { model, n, count } => cmd_sample(ctx, model, *n, *count),
        Command::Score { model, input } => cmd_score(ctx, model, input),
        Command::Stats { input } => cmd_stats(ctx, input),
        Command::Count { n } => cmd_count(ctx, *n),
    }
}

/// Runs one invocation and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut ctx = Ctx {
        cli: &cli,
        out: String::new(),
        err,
        failed: false,
    };
    if let Err(f) = dispatch(&mut ctx) {
        ctx.warn(f.message());
        return f.code();
    }
    let written = match &cli.output {
        Some(p) => std::fs::write(p, &ctx.out).map_err(|e| format!("{}: {e}", p.display())),
        None => out.write_all(ctx.out.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        ctx.warn(e);
        return EXIT_DATA;
    }
    if ctx.failed {
        EXIT_DATA
    } else {
        EXIT_OK
    }
}
