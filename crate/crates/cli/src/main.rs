use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pbkc::compile::{compile_with, CompileError, CompileOptions, CompileStats, Heuristic};
use pbkc::ddnnf::{read_d4, write_d4};
use pbkc::ddnnf::Dnnf;
use pbkc::encode::encode_feature_model;
use pbkc::fm::parse_uvl;
use pbkc::opb::{parse_dimacs, parse_opb, write_opb};
use pbkc::oracle::{brute_count_fm, brute_count_pb, gen_random_fm, GenConfig, Profile};
use pbkc::pb::{FormulaStats, PbFormula};

#[derive(Parser)]
#[command(name = "pbkc", version, about = "Compile feature models and pseudo-Boolean formulas into d-DNNF")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Compilation time limit in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    #[arg(long, global = true)]
    no_cache: bool,
    #[arg(long, global = true)]
    no_learning: bool,
    #[arg(long, global = true, value_enum, default_value_t = HeuristicArg::Cut)]
    heuristic: HeuristicArg,
    /// Write run statistics as JSON.
    #[arg(long, global = true, value_name = "FILE")]
    stats: Option<PathBuf>,
    /// Input format; inferred from the extension by default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a feature model as an OPB formula.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile to a d-DNNF in d4 format.
    Compile {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the exact model count.
    Count {
        input: PathBuf,
        /// Count over this many variables (d-DNNF input only).
        #[arg(long)]
        vars: Option<u32>,
    },
    /// Validate decomposability and determinism of a d-DNNF.
    Check { input: PathBuf },
    /// Brute-force count.
    Oracle { input: PathBuf },
    /// Generate a random feature model.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "all")]
        profile: Profile,
        /// Largest feature count before expansion.
        #[arg(long, default_value_t = 8)]
        features: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Cut,
    Score,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Opb,
    Uvl,
    Cnf,
    #[value(alias = "d4", alias = "nnf")]
    Ddnnf,
}

enum Failure {
    Usage(String),
    Input(String),
    Timeout,
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Timeout => 3,
            Failure::Internal(_) => 4,
        }
    }
}

type Run<T> = Result<T, Failure>;

fn input_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

#[derive(Default, Serialize)]
struct Timings {
    parse: f64,
    encode: f64,
    compile: f64,
    count: f64,
}

#[derive(Serialize)]
struct DnnfSize {
    nodes: usize,
    edges: usize,
}

#[derive(Default, Serialize)]
struct RunStats {
    timings_ms: Timings,
    encoding: Option<FormulaStats>,
    ddnnf: Option<DnnfSize>,
    count: Option<String>,
    compiler: Option<CompileStats>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

enum Loaded {
    Formula(PbFormula),
    Model(pbkc::fm::FeatureModel),
    Circuit(Dnnf),
}

struct Session {
    opts: CompileOptions,
    format: Option<Format>,
    stats: RunStats,
}

impl Session {
    fn format_of(&self, path: &Path) -> Run<Format> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        Ok(match ext.as_str() {
            "opb" | "pb" => Format::Opb,
            "uvl" => Format::Uvl,
            "cnf" | "dimacs" => Format::Cnf,
            "ddnnf" | "nnf" | "d4" => Format::Ddnnf,
            _ => return Err(Failure::Usage(format!("{}: cannot infer the input format, use --format", path.display()))),
        })
    }

    fn load(&mut self, path: &Path) -> Run<Loaded> {
        let format = self.format_of(path)?;
        let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
        let t = Instant::now();
        let loaded = match format {
            Format::Opb => Loaded::Formula(parse_opb(&text).map_err(|e| input_err(path, e))?),
            Format::Cnf => Loaded::Formula(parse_dimacs(&text).map_err(|e| input_err(path, e))?),
            Format::Uvl => Loaded::Model(parse_uvl(&text).map_err(|e| input_err(path, e))?),
            Format::Ddnnf => Loaded::Circuit(read_d4(&text).map_err(|e| input_err(path, e))?),
        };
        self.stats.timings_ms.parse = ms(t);
        Ok(loaded)
    }

    fn formula(&mut self, path: &Path) -> Run<PbFormula> {
        let f = match self.load(path)? {
            Loaded::Formula(f) => f,
            Loaded::Model(m) => {
                let t = Instant::now();
                let enc = encode_feature_model(&m).map_err(|e| input_err(path, e))?;
                self.stats.timings_ms.encode = ms(t);
                enc.formula
            }
            Loaded::Circuit(_) => return Err(Failure::Usage(format!("{}: expected a formula or model", path.display()))),
        };
        self.stats.encoding = Some(f.stats());
        Ok(f)
    }

    fn compile(&mut self, f: &PbFormula) -> Run<Dnnf> {
        let t = Instant::now();
        let (d, cs) = compile_with(f, &self.opts).map_err(|e| match e {
            CompileError::Timeout => Failure::Timeout,
            other => Failure::Internal(other.to_string()),
        })?;
        self.stats.timings_ms.compile = ms(t);
        self.stats.compiler = Some(cs);
        let report = d.validate();
        if !report.is_valid() {
            return Err(Failure::Internal(format!("compiled circuit is not a d-DNNF: {:?}", report.violations)));
        }
        self.record(&d);
        Ok(d)
    }

    fn circuit(&mut self, path: &Path) -> Run<Dnnf> {
        match self.load(path)? {
            Loaded::Circuit(d) => {
                self.record(&d);
                Ok(d)
            }
            Loaded::Formula(f) => {
                self.stats.encoding = Some(f.stats());
                self.compile(&f)
            }
            Loaded::Model(m) => {
                let t = Instant::now();
                let enc = encode_feature_model(&m).map_err(|e| input_err(path, e))?;
                self.stats.timings_ms.encode = ms(t);
                self.stats.encoding = Some(enc.formula.stats());
                self.compile(&enc.formula)
            }
        }
    }

    fn record(&mut self, d: &Dnnf) {
        self.stats.ddnnf = Some(DnnfSize { nodes: d.node_count(), edges: d.edge_count() });
    }

    fn count(&mut self, d: &Dnnf, vars: Option<u32>) -> Run<String> {
        let t = Instant::now();
        let n = vars.unwrap_or(d.num_vars());
        let c = d.model_count(n).map_err(|e| Failure::Usage(e.to_string()))?;
        self.stats.timings_ms.count = ms(t);
        let s = c.to_string();
        self.stats.count = Some(s.clone());
        Ok(s)
    }
}

fn emit(output: Option<&Path>, text: &str) -> Run<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Run<()> {
    let timeout = match cli.timeout {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(Failure::Usage(format!("invalid timeout {s}"))),
        None => None,
    };
    let opts = CompileOptions {
        cache: !cli.no_cache,
        learning: !cli.no_learning,
        heuristic: match cli.heuristic {
            HeuristicArg::Cut => Heuristic::Cut,
            HeuristicArg::Score => Heuristic::Score,
        },
        timeout,
        ..CompileOptions::default()
    };
    let mut s = Session { opts, format: cli.format, stats: RunStats::default() };
    match &cli.cmd {
        Cmd::Encode { input, output } => {
            let m = match s.load(input)? {
                Loaded::Model(m) => m,
                _ => return Err(Failure::Usage(format!("{}: encode expects a feature model", input.display()))),
            };
            let t = Instant::now();
            let enc = encode_feature_model(&m).map_err(|e| input_err(input, e))?;
            s.stats.timings_ms.encode = ms(t);
            s.stats.encoding = Some(enc.formula.stats());
            emit(output.as_deref(), &write_opb(&enc.formula))?;
        }
        Cmd::Compile { input, output } => {
            let f = s.formula(input)?;
            let d = s.compile(&f)?;
            s.count(&d, None)?;
            emit(output.as_deref(), &write_d4(&d.padded()))?;
        }
        Cmd::Count { input, vars } => {
            if vars.is_some() && s.format_of(input)? != Format::Ddnnf {
                return Err(Failure::Usage("--vars applies to d-DNNF input only".into()));
            }
            let d = s.circuit(input)?;
            let c = s.count(&d, *vars)?;
            println!("{c}");
        }
        Cmd::Check { input } => {
            let d = match s.load(input)? {
                Loaded::Circuit(d) => d,
                _ => return Err(Failure::Usage(format!("{}: check expects a d-DNNF", input.display()))),
            };
            s.record(&d);
            let report = d.validate();
            if report.is_valid() {
                println!("valid");
            } else {
                for v in &report.violations {
                    eprintln!("{v}");
                }
                return Err(Failure::Input(format!("{}: {} violations", input.display(), report.violations.len())));
            }
        }
        Cmd::Oracle { input } => {
            let c = match s.load(input)? {
                Loaded::Formula(f) => brute_count_pb(&f),
                Loaded::Model(m) => brute_count_fm(&m),
                Loaded::Circuit(_) => return Err(Failure::Usage("oracle expects a formula or model".into())),
            }
            .map_err(|e| input_err(input, e))?;
            s.stats.count = Some(c.to_string());
            println!("{c}");
        }
        Cmd::Gen { seed, profile, features, output } => {
            let mut cfg = GenConfig { seed: *seed, profile: *profile, ..GenConfig::default() };
            cfg.features = *cfg.features.start().min(features)..=*features;
            cfg.max_expanded = cfg.max_expanded.max(*features);
            cfg.check().map_err(Failure::Usage)?;
            emit(output.as_deref(), &gen_random_fm(&cfg).to_string())?;
        }
    }
    if let Some(p) = &cli.stats {
        let json = serde_json::to_string_pretty(&s.stats).map_err(|e| Failure::Internal(e.to_string()))?;
        fs::write(p, json + "\n").map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Input(m) | Failure::Internal(m) => eprintln!("pbkc: {m}"),
                Failure::Timeout => eprintln!("pbkc: timeout"),
            }
            ExitCode::from(f.code())
        }
    }
}
