//! `probpol`: check, compile and route probabilistic policy files.
//!
//! Exit status: 0 clean, 1 error diagnostics or failed tests (warnings too
//! under `--strict`), 2 usage or IO errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use probpol_core::config;
use probpol_core::conflicts::{self, ConflictKind, SoftShadowingOptions};
use probpol_core::diagnostic::{apply_fixes, Severity};
use probpol_core::engine::{Attributes, EngineConfig, Mode, Router};
use probpol_core::geometry::{Embedder, PseudoEmbedder, VectorTable, DEFAULT_DIM, DEFAULT_WARN_COSINE};
use probpol_core::validator::{validate_with, ValidateOptions};
use probpol_core::{parse_file, print, Diagnostic, Program};

mod explain;

#[derive(Parser)]
#[command(
    name = "probpol",
    version,
    about = "Policy compiler for probabilistic routing signals"
)]
struct Cli {
    /// JSON object mapping exact texts to embedding vectors.
    #[arg(long, global = true, value_name = "FILE")]
    vectors: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Independent,
    Voronoi,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Independent => Mode::Independent,
            ModeArg::Voronoi => Mode::Voronoi,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate files and print diagnostics.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Exit 1 on warnings as well as errors.
        #[arg(long)]
        strict: bool,
        /// Apply suggested fixes in place, then re-validate.
        #[arg(long)]
        fix: bool,
    },
    /// Emit the JSON config document.
    Compile {
        file: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Turn a JSON config document back into DSL source.
    Decompile {
        file: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run TEST blocks and print TAP.
    Test {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_name = "JSON|FILE")]
        attrs: Option<String>,
    },
    /// Report conflicts grouped by kind.
    Conflicts {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Trace file, one query per line; enables soft-shadowing analysis.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, value_name = "JSON|FILE")]
        attrs: Option<String>,
    },
    /// Route every query of a trace and summarize as JSON.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "voronoi")]
        mode: ModeArg,
        #[arg(long, value_name = "JSON|FILE")]
        attrs: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Show signal scores and the routing trace for one query.
    Explain {
        file: PathBuf,
        query: String,
        #[arg(long, value_name = "JSON|FILE")]
        attrs: Option<String>,
        #[arg(long, value_enum, default_value = "voronoi")]
        mode: ModeArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("probpol: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn embedder(vectors: Option<&Path>) -> Result<Arc<dyn Embedder<f64>>> {
    let dim = match std::env::var("PROBPOL_DIM") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow!("PROBPOL_DIM must be a positive integer, got {v:?}"))?,
        Err(_) => DEFAULT_DIM,
    };
    match vectors {
        None => Ok(Arc::new(PseudoEmbedder::new(dim)?)),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(Arc::new(VectorTable::<f64>::from_json(&text, dim)?))
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn attributes(arg: Option<&str>) -> Result<Attributes> {
    let Some(arg) = arg else {
        return Ok(Attributes::new());
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    serde_json::from_str(&text).context("attributes must be a JSON object")
}

fn trace_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Parse or print syntax diagnostics and give up with exit 1.
fn load(path: &Path) -> Result<std::result::Result<(String, Program), Vec<Diagnostic>>> {
    let src = read(path)?;
    Ok(parse_file(&src, &path.display().to_string()).map(|p| (src, p)))
}

fn print_diags(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}", d.render());
    }
}

fn run(cli: Cli) -> Result<u8> {
    let emb = embedder(cli.vectors.as_deref())?;
    match cli.command {
        Command::Check {
            files,
            format,
            strict,
            fix,
        } => check(&files, format, strict, fix, emb.as_ref()),
        Command::Compile { file, out } => {
            let (_, program) = match load(&file)? {
                Ok(p) => p,
                Err(d) => return Ok(fail(&d)),
            };
            match config::compile_with(&program, emb.as_ref()) {
                Ok(doc) => {
                    write_out(out.as_deref(), &config::to_json_string(&doc))?;
                    Ok(0)
                }
                Err(d) => Ok(fail(&d)),
            }
        }
        Command::Decompile { file, out } => {
            let text = read(&file)?;
            match config::decompile(&text) {
                Ok(p) => {
                    write_out(out.as_deref(), &print(&p))?;
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    Ok(1)
                }
            }
        }
        Command::Test { files, attrs } => {
            let attrs = attributes(attrs.as_deref())?;
            test(&files, &attrs, emb)
        }
        Command::Conflicts {
            files,
            corpus,
            format,
            attrs,
        } => {
            let attrs = attributes(attrs.as_deref())?;
            let corpus = corpus.as_deref().map(trace_lines).transpose()?;
            conflicts_cmd(&files, corpus.as_deref(), format, &attrs, emb)
        }
        Command::Simulate {
            file,
            trace,
            mode,
            attrs,
            out,
        } => {
            let attrs = attributes(attrs.as_deref())?;
            let trace = trace_lines(&trace)?;
            if trace.is_empty() {
                bail!("trace is empty");
            }
            let (_, program) = match load(&file)? {
                Ok(p) => p,
                Err(d) => return Ok(fail(&d)),
            };
            let router = match router(&program, mode.into(), emb) {
                Ok(r) => r,
                Err(code) => return Ok(code),
            };
            let sim = router.simulate(&trace, &attrs)?;
            let mut text = serde_json::to_string_pretty(&sim)?;
            text.push('\n');
            write_out(out.as_deref(), &text)?;
            Ok(0)
        }
        Command::Explain {
            file,
            query,
            attrs,
            mode,
        } => {
            let attrs = attributes(attrs.as_deref())?;
            let (_, program) = match load(&file)? {
                Ok(p) => p,
                Err(d) => return Ok(fail(&d)),
            };
            let router = match router(&program, mode.into(), emb) {
                Ok(r) => r,
                Err(code) => return Ok(code),
            };
            let decision = router.route(&query, &attrs)?;
            print!("{}", explain::render(router.program(), &decision));
            Ok(0)
        }
    }
}

fn fail(diags: &[Diagnostic]) -> u8 {
    print_diags(diags);
    1
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Router over a program that must validate without errors.
fn router(program: &Program, mode: Mode, emb: Arc<dyn Embedder<f64>>) -> std::result::Result<Router, u8> {
    let diags = validate(program, emb.as_ref());
    if diags.iter().any(Diagnostic::is_error) {
        return Err(fail(&diags));
    }
    let cfg = EngineConfig {
        mode,
        embedder: emb,
        provider: None,
    };
    Router::new(program, cfg).map_err(|e| {
        eprintln!("probpol: {e}");
        1
    })
}

fn validate(program: &Program, emb: &dyn Embedder<f64>) -> Vec<Diagnostic> {
    validate_with(
        program,
        &ValidateOptions {
            embedder: emb,
            warn_cosine: DEFAULT_WARN_COSINE,
        },
    )
}

/// Diagnostics for one file after optional fixing.
fn check_one(path: &Path, fix: bool, emb: &dyn Embedder<f64>) -> Result<Vec<Diagnostic>> {
    let file = path.display().to_string();
    let mut src = read(path)?;
    let mut changed = false;
    let diags = loop {
        let diags = match parse_file(&src, &file) {
            Ok(p) => validate(&p, emb),
            Err(d) => break d,
        };
        if !fix {
            break diags;
        }
        let (next, applied) = apply_fixes(&src, &diags);
        if applied == 0 || next == src {
            break diags;
        }
        src = next;
        changed = true;
    };
    if changed {
        fs::write(path, &src).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(diags)
}

fn check(files: &[PathBuf], format: Format, strict: bool, fix: bool, emb: &dyn Embedder<f64>) -> Result<u8> {
    // Files are independent; results are reported in input order.
    let results: Vec<Result<Vec<Diagnostic>>> = std::thread::scope(|s| {
        let handles: Vec<_> = files.iter().map(|f| s.spawn(move || check_one(f, fix, emb))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("checker panicked"))))
            .collect()
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    match format {
        Format::Text => {
            for d in &all {
                println!("{}", d.render());
            }
        }
        Format::Json => {
            let arr: Vec<_> = all.iter().map(Diagnostic::to_json).collect();
            println!("{}", serde_json::to_string_pretty(&arr)?);
        }
    }
    let failing = all
        .iter()
        .any(|d| d.severity == Severity::Error || (strict && d.severity == Severity::Warning));
    Ok(u8::from(failing))
}

fn test(files: &[PathBuf], attrs: &Attributes, emb: Arc<dyn Embedder<f64>>) -> Result<u8> {
    let mut outcomes = Vec::new();
    let mut code = 0;
    for f in files {
        let (_, program) = match load(f)? {
            Ok(p) => p,
            Err(d) => {
                code = fail(&d);
                continue;
            }
        };
        if program.tests.is_empty() {
            bail!("{} has no TEST blocks", f.display());
        }
        let router = match router(&program, Mode::Voronoi, emb.clone()) {
            Ok(r) => r,
            Err(c) => {
                code = c;
                continue;
            }
        };
        for t in &program.tests {
            for case in &t.cases {
                let decision = router.route(&case.query, attrs)?;
                outcomes.push((
                    t.name.clone(),
                    case.query.clone(),
                    case.expected_route.clone(),
                    decision.route,
                ));
            }
        }
    }
    println!("TAP version 13");
    println!("1..{}", outcomes.len());
    for (i, (test, query, expected, actual)) in outcomes.iter().enumerate() {
        let got = actual.as_deref().unwrap_or("<none>");
        if actual.as_deref() == Some(expected.as_str()) {
            println!("ok {} - {query:?} -> {got}", i + 1);
        } else {
            code = 1;
            println!("not ok {} - {query:?} -> {got}", i + 1);
            println!("  # {test}: expected {expected}, got {got}");
        }
    }
    Ok(code)
}

fn conflicts_cmd(
    files: &[PathBuf],
    corpus: Option<&[String]>,
    format: Format,
    attrs: &Attributes,
    emb: Arc<dyn Embedder<f64>>,
) -> Result<u8> {
    let mut code = 0;
    let mut json_files = Vec::new();
    for f in files {
        let (_, program) = match load(f)? {
            Ok(p) => p,
            Err(d) => {
                code = fail(&d);
                continue;
            }
        };
        let router = match router(&program, Mode::Independent, emb.clone()) {
            Ok(r) => r,
            Err(c) => {
                code = c;
                continue;
            }
        };
        let analysis = conflicts::analyze(
            router.program(),
            &router,
            corpus,
            attrs,
            SoftShadowingOptions::default(),
            emb.as_ref(),
        )
        .map_err(|e| anyhow!("{e}"))?;
        if analysis.has_errors() {
            code = 1;
        }
        match format {
            Format::Json => json_files.push(serde_json::json!({
                "file": f.display().to_string(),
                "reports": analysis.reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
                "diagnostics": analysis.diagnostics.iter().map(Diagnostic::to_json).collect::<Vec<_>>(),
            })),
            Format::Text => {
                for d in &analysis.diagnostics {
                    eprintln!("{}", d.render());
                }
                for kind in ConflictKind::ALL {
                    let of_kind: Vec<_> = analysis.reports.iter().filter(|r| r.kind == kind).collect();
                    if of_kind.is_empty() {
                        continue;
                    }
                    println!("{}: {} [{}] ({})", f.display(), kind, kind.severity(), of_kind.len());
                    for r in of_kind {
                        println!("  {}", r.summary());
                        if let Some(n) = &r.note {
                            println!("    note: {n}");
                        }
                    }
                }
            }
        }
    }
    if format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&json_files)?);
    }
    Ok(code)
}
