use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hintgraph::config::RunConfig;
use hintgraph::corpus::{load_corpus, validate_corpus, FindingSeverity};
use hintgraph::gateway::Mode;
use hintgraph::generation::PipelineVariant;
use hintgraph::pipeline::{report_from_run_dir, run_stage, OwnedBackends, PipelineError, Stage};
use hintgraph::reference::{
    render_array_diagram, render_fraction_pair_with, ArraySpec, FractionPairSpec, Group, GroupAxis, ObjectKind,
};
use hintgraph::svg::{parse_svg, validate_svg, Severity};
use hintgraph::vqa::{emit_report, ReportFormat};

const USER_ERROR: u8 = 1;
const DATA_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "hintgraph", version, about = "Generate and evaluate SVG hint diagrams for math hints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate diagrams, evaluate them and write a report.
    Run(RunArgs),
    /// Generate diagrams only.
    Gen(RunArgs),
    /// Evaluate the diagrams of an earlier `gen` run (needs --run-id).
    Eval(RunArgs),
    /// Re-emit the report of a finished run from its stored verdicts.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
    },
    /// Check a corpus and/or standalone SVG files.
    Validate {
        corpus: Option<PathBuf>,
        /// Additional SVG files to validate.
        #[arg(long = "svg")]
        svgs: Vec<PathBuf>,
    },
    /// Print a reference diagram as SVG.
    #[command(name = "gen-ref", subcommand)]
    GenRef(RefCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<PipelineVariant>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "run-id")]
    run_id: Option<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long = "cache-dir")]
    cache_dir: Option<PathBuf>,
    #[arg(long = "runs-dir")]
    runs_dir: Option<PathBuf>,
    #[arg(long = "target-px")]
    target_px: Option<u32>,
    #[arg(long = "max-repairs")]
    max_repairs: Option<u32>,
    /// Evaluate at most N problems per topic, chosen with --seed.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long = "prompts-dir")]
    prompts_dir: Option<PathBuf>,
    /// Leave problem-statement diagrams out of generation prompts.
    #[arg(long = "no-statement-diagram")]
    no_statement_diagram: bool,
}

fn parse_variant(s: &str) -> Result<PipelineVariant, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Subcommand)]
enum RefCommand {
    /// Rows x cols array of circles or squares.
    Array {
        #[arg(long)]
        rows: u32,
        #[arg(long)]
        cols: u32,
        #[arg(long, value_enum, default_value_t = ObjectArg::Circle)]
        object: ObjectArg,
        /// Label objects 1..n in row-major order.
        #[arg(long)]
        numbered: bool,
        #[arg(long)]
        caption: Option<String>,
        /// Group as SPAN[:FILL[:LABEL]]; repeat to partition the axis.
        #[arg(long = "group")]
        groups: Vec<String>,
        #[arg(long = "group-axis", value_enum, default_value_t = AxisArg::Rows)]
        group_axis: AxisArg,
    },
    /// Two circles split into equal sectors.
    Fraction {
        #[arg(long)]
        denominator: u32,
        #[arg(long)]
        left: u32,
        #[arg(long)]
        right: u32,
        #[arg(long = "no-part-labels")]
        no_part_labels: bool,
        #[arg(long = "no-captions")]
        no_captions: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectArg {
    Circle,
    Rect,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Rows,
    Cols,
}

fn build_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident = $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { cfg.$field = v; })*
        };
    }
    set!(
        corpus = args.corpus.clone(),
        variant = args.variant,
        mode = args.mode,
        model_id = args.model.clone(),
        temperature = args.temperature,
        seed = args.seed,
        jobs = args.jobs,
        cache_dir = args.cache_dir.clone(),
        runs_dir = args.runs_dir.clone(),
        target_px = args.target_px,
        max_repairs = args.max_repairs,
    );
    if args.run_id.is_some() {
        cfg.run_id = args.run_id.clone();
    }
    if args.sample.is_some() {
        cfg.sample = args.sample;
    }
    if args.prompts_dir.is_some() {
        cfg.prompts_dir = args.prompts_dir.clone();
    }
    if args.no_statement_diagram {
        cfg.include_statement_diagram = false;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn fail(code: i32, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code as u8)
}

fn cmd_run(args: &RunArgs, stage: Stage) -> ExitCode {
    let cfg = match build_config(args) {
        Ok(c) => c,
        Err(e) => return fail(USER_ERROR as i32, e),
    };
    let backends = match OwnedBackends::from_config(&cfg) {
        Ok(b) => b,
        Err(e) => return fail(PipelineError::from(e).exit_code(), "cannot set up model backends: credential missing or invalid"),
    };
    match run_stage(&cfg, &backends.borrow(), stage) {
        Ok(outcome) => {
            eprintln!("run directory: {}", outcome.run_dir.display());
            match &outcome.report {
                Some(r) => print!("{}", emit_report(r, args.format.into())),
                None => {
                    let failed = outcome.manifest.items.iter().filter(|i| i.error_code.is_some()).count();
                    println!(
                        "generated {} of {} diagram(s)",
                        outcome.manifest.items.len() - failed,
                        outcome.manifest.items.len()
                    );
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.exit_code(), e),
    }
}

fn cmd_report(run_dir: &Path, format: FormatArg) -> ExitCode {
    match report_from_run_dir(run_dir) {
        Ok(r) => {
            print!("{}", emit_report(&r, format.into()));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.exit_code(), e),
    }
}

fn cmd_validate(corpus: Option<&Path>, svgs: &[PathBuf]) -> ExitCode {
    if corpus.is_none() && svgs.is_empty() {
        return fail(USER_ERROR as i32, "nothing to validate: give a corpus path and/or --svg files");
    }
    let mut errors = 0;
    if let Some(path) = corpus {
        let c = match load_corpus(path) {
            Ok(c) => c,
            Err(e) => {
                let code = if matches!(e, hintgraph::corpus::CorpusError::Io { .. }) { USER_ERROR } else { DATA_ERROR };
                return fail(code as i32, e);
            }
        };
        let findings = validate_corpus(&c);
        for f in &findings {
            println!("{f}");
        }
        errors += findings.iter().filter(|f| f.severity == FindingSeverity::Error).count();
        let problems: usize = c.topics.iter().map(|t| t.problems.len()).sum();
        println!(
            "{}: {} topic(s), {problems} problem(s), {} finding(s)",
            path.display(),
            c.topics.len(),
            findings.len()
        );
    }
    for path in svgs {
        let src = match std::fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => return fail(USER_ERROR as i32, format!("{}: {e}", path.display())),
        };
        match parse_svg(&src) {
            Err(e) => {
                println!("error: {}: {e}", path.display());
                errors += 1;
            }
            Ok(doc) => {
                let report = validate_svg(&doc);
                for f in &report.findings {
                    let sev = if f.severity == Severity::Error { "error" } else { "warning" };
                    println!("{sev}: {}: {} at {}: {}", path.display(), f.code, f.element, f.message);
                }
                errors += report.errors().count();
            }
        }
    }
    if errors > 0 {
        ExitCode::from(DATA_ERROR)
    } else {
        ExitCode::SUCCESS
    }
}

fn parse_group(s: &str) -> Result<Group, String> {
    let mut parts = s.splitn(3, ':');
    let span = parts
        .next()
        .unwrap_or_default()
        .parse::<u32>()
        .map_err(|e| format!("group {s:?}: span: {e}"))?;
    let non_empty = |p: Option<&str>| p.filter(|x| !x.is_empty()).map(str::to_string);
    Ok(Group {
        span,
        fill: non_empty(parts.next()),
        label: non_empty(parts.next()),
    })
}

fn cmd_gen_ref(cmd: &RefCommand) -> ExitCode {
    let svg = match cmd {
        RefCommand::Array {
            rows,
            cols,
            object,
            numbered,
            caption,
            groups,
            group_axis,
        } => {
            let kind = match object {
                ObjectArg::Circle => ObjectKind::Circle,
                ObjectArg::Rect => ObjectKind::Rect,
            };
            let mut spec = ArraySpec::new(*rows, *cols, kind);
            if *numbered {
                spec = spec.numbered();
            }
            if let Some(c) = caption {
                spec = spec.with_caption(c.clone());
            }
            if !groups.is_empty() {
                let parsed: Result<Vec<Group>, String> = groups.iter().map(|g| parse_group(g)).collect();
                let axis = match group_axis {
                    AxisArg::Rows => GroupAxis::Rows,
                    AxisArg::Cols => GroupAxis::Cols,
                };
                match parsed {
                    Ok(g) => spec = spec.with_groups(axis, g),
                    Err(e) => return fail(USER_ERROR as i32, e),
                }
            }
            render_array_diagram(&spec)
        }
        RefCommand::Fraction {
            denominator,
            left,
            right,
            no_part_labels,
            no_captions,
        } => {
            let mut spec = FractionPairSpec::new(*denominator, *left, *right);
            spec.per_part_labels = !no_part_labels;
            spec.captions = !no_captions;
            render_fraction_pair_with(&spec)
        }
    };
    match svg {
        Ok(s) => {
            println!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(USER_ERROR as i32, e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USER_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match &cli.command {
        Command::Run(a) => cmd_run(a, Stage::Full),
        Command::Gen(a) => cmd_run(a, Stage::Generate),
        Command::Eval(a) => cmd_run(a, Stage::Evaluate),
        Command::Report { run_dir, format } => cmd_report(run_dir, *format),
        Command::Validate { corpus, svgs } => cmd_validate(corpus.as_deref(), svgs),
        Command::GenRef(cmd) => cmd_gen_ref(cmd),
    }
}
