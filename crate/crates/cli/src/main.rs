use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use citecheck::mcp;
use citecheck::pipeline::{self, RunOptions};
use citecheck::sources::parse_source_list;
use citecheck::{Error, PolicyPreset, PresetName, RenderFormat, RewriteMode, TransportMode, WriteMode};

const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "citecheck", version, about = "Verify bibliography entries against metadata sources and plan safe repairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank candidate artifacts under a path
    Scan {
        #[arg(long, default_value = ".")]
        path: String,
        #[arg(long, default_value_t = citecheck::scanner::DEFAULT_MAX_DEPTH)]
        max_depth: usize,
    },
    /// Extract and verify references, then evaluate the policy
    Analyze(Common),
    /// Produce a rewrite plan without writing anything
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rewrite: Rewrite,
    },
    /// Apply a plan produced by `plan` or `repair`
    Apply {
        #[arg(long, default_value = ".")]
        path: String,
        /// Plan JSON, or a report that contains one
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_enum, default_value_t = Write::Preview)]
        write: Write,
    },
    /// Full pipeline, writing only when asked and allowed
    Repair {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        rewrite: Rewrite,
        #[arg(long, value_enum, default_value_t = Write::Preview)]
        write: Write,
    },
    /// Run the MCP server on stdin/stdout
    Serve,
    /// Print the version
    Version,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = ".")]
    path: String,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// JSON object overriding preset thresholds
    #[arg(long)]
    preset_file: Option<PathBuf>,
    /// Comma-separated: crossref,pubmed,arxiv,semantic_scholar
    #[arg(long)]
    sources: Option<String>,
    #[arg(long, value_enum)]
    transport: Option<Transport>,
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long, default_value_t = citecheck::scanner::DEFAULT_MAX_DEPTH)]
    max_depth: usize,
}

#[derive(Args)]
struct Rewrite {
    #[arg(long, value_enum, default_value_t = Mode::Review)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Regenerate citation keys (off by default)
    #[arg(long)]
    rename_keys: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Strict,
    Lenient,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Review,
    Replacement,
}

#[derive(Clone, Copy, ValueEnum)]
enum Write {
    Preview,
    Sidecar,
    Replace,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Bibtex,
    Text,
    Markdown,
    Endnote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Live,
    Replay,
    Record,
}

impl From<Write> for WriteMode {
    fn from(w: Write) -> Self {
        match w {
            Write::Preview => WriteMode::Preview,
            Write::Sidecar => WriteMode::Sidecar,
            Write::Replace => WriteMode::Replace,
        }
    }
}

fn options(common: Common, rewrite: Option<Rewrite>, write: Option<Write>) -> Result<RunOptions, Error> {
    let mut o = RunOptions::new(common.path);
    o.preset = PolicyPreset::builtin(match common.preset {
        Preset::Default => PresetName::Default,
        Preset::Strict => PresetName::Strict,
        Preset::Lenient => PresetName::Lenient,
    });
    if let Some(f) = &common.preset_file {
        o.preset = mcp::load_preset_file(o.preset, f)?;
    }
    if let Some(s) = &common.sources {
        o.sources = Some(parse_source_list(s)?);
    }
    o.transport = common.transport.map(|t| match t {
        Transport::Live => TransportMode::Live,
        Transport::Replay => TransportMode::Replay,
        Transport::Record => TransportMode::Record,
    });
    o.fixtures_dir = common.fixtures_dir;
    o.max_depth = common.max_depth.max(1);
    if let Some(r) = rewrite {
        o.mode = match r.mode {
            Mode::Review => RewriteMode::Review,
            Mode::Replacement => RewriteMode::Replacement,
        };
        o.format = match r.format {
            Format::Json => RenderFormat::Json,
            Format::Bibtex => RenderFormat::Bibtex,
            Format::Text => RenderFormat::NumberedText,
            Format::Markdown => RenderFormat::Markdown,
            Format::Endnote => RenderFormat::Endnote,
        };
        o.rename_keys = r.rename_keys;
    }
    if let Some(w) = write {
        o.write = w.into();
    }
    Ok(o)
}

fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

fn fail(e: &Error) -> u8 {
    eprintln!("citecheck: {e}");
    emit(&mcp::error_text(e));
    match e {
        Error::InvalidArgument(_) | Error::UnsupportedFormat(_) => EXIT_USAGE,
        Error::BlockedByPolicy(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> u8 {
    let report = |name: &str, o: Result<RunOptions, Error>| -> u8 {
        let result = o.and_then(|o| {
            let c = o.connectors()?;
            match name {
                "analyze" => pipeline::analyze(&o, &c),
                "plan" => pipeline::plan(&o, &c),
                _ => pipeline::repair(&o, &c),
            }
        });
        match result {
            Ok(r) => {
                emit(&r.output());
                if let Some(e) = &r.error {
                    eprintln!("citecheck: {}", e.message);
                }
                r.exit_code().clamp(0, 255) as u8
            }
            Err(e) => fail(&e),
        }
    };
    match cli.command {
        Command::Scan { path, max_depth } => {
            let mut o = RunOptions::new(path);
            o.max_depth = max_depth.max(1);
            match pipeline::scan(&o) {
                Ok(r) => {
                    emit(&format!("{}\n", serde_json::to_string_pretty(&r).expect("scan report serializes")));
                    0
                }
                Err(e) => fail(&e),
            }
        }
        Command::Analyze(common) => report("analyze", options(common, None, None)),
        Command::Plan { common, rewrite } => report("plan", options(common, Some(rewrite), None)),
        Command::Repair { common, rewrite, write } => report("repair", options(common, Some(rewrite), Some(write))),
        Command::Apply { path, plan, write } => {
            let result = std::fs::read_to_string(&plan)
                .map_err(|source| Error::UnreadableFile { path: plan.clone(), source })
                .and_then(|text| pipeline::parse_plan(&text))
                .and_then(|p| pipeline::apply_plan(std::path::Path::new(&path), &p, write.into()));
            match result {
                Ok(r) => {
                    emit(&format!("{}\n", serde_json::to_string_pretty(&r).expect("apply result serializes")));
                    0
                }
                Err(e) => fail(&e),
            }
        }
        Command::Serve => {
            let stdin = std::io::stdin();
            match mcp::serve(stdin.lock(), std::io::stdout().lock()) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("citecheck: {e}");
                    2
                }
            }
        }
        Command::Version => {
            emit(&format!("citecheck {}\n", citecheck::VERSION));
            0
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    // usage text goes to stderr
                    eprint!("{}", e.render());
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };
    ExitCode::from(run(cli))
}
