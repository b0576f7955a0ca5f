//! `qnorm`: generate channels, estimate p→q norms, run multiplicativity
//! searches, hypercontractivity scans and proof traces.
//!
//! Exit codes: 0 success, 1 property failure, 2 input error, 3 resource error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qnorm::channels::{make_depolarizing, random_cp_kraus, random_eb, EbClass, SuperOp};
use qnorm::multiplicativity::{
    candidate_threshold, product_norm_test_escalating, violation_search, Family, MultiplicativityReport, CSV_HEADER,
};
use qnorm::norms::{norm_p_to_q, triple_norm_p_to_q, NormQuery, OptimizerConfig};
use qnorm::prooftrace::{summarize, trace_suite, Branch};
use qnorm::semigroup::{contraction_time, norm_table, q_of_t, DepolarizingSemigroup};
use qnorm::Error;

#[derive(Parser)]
#[command(name = "qnorm", version, about = "Schatten p->q norms of completely positive maps")]
struct Cli {
    /// Omit the timestamp field from JSON output.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random or standard channel as JSON.
    Gen(GenArgs),
    /// Estimate ||Phi||_{p->q} for a channel file.
    Norm(NormArgs),
    /// Compare ||Phi (x) Omega|| with ||Phi|| ||Omega||.
    Mult(MultArgs),
    /// Hypercontractivity of the depolarizing semigroup.
    Hyper(HyperArgs),
    /// Numerically trace the multiplicativity argument on random instances.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct OptArgs {
    /// Random starts per norm estimate.
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol_value: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_grad: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptArgs {
    fn config(&self) -> Result<OptimizerConfig, Error> {
        let cfg = OptimizerConfig {
            n_starts: self.starts,
            max_iter: self.max_iter,
            tol_value: self.tol_value,
            tol_grad: self.tol_grad,
            seed: self.seed,
            ..OptimizerConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    /// general, cond1, cond2, cq, qc, cp, identity or depolarizing.
    #[arg(long)]
    class: String,
    #[arg(long, default_value_t = 2)]
    d_in: usize,
    #[arg(long, default_value_t = 2)]
    d_out: usize,
    /// Number of EB pairs or Kraus operators.
    #[arg(long = "N", default_value_t = 2)]
    n: usize,
    /// Depolarizing parameter.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Make cp channels trace preserving.
    #[arg(long)]
    trace_preserving: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormArgs {
    channel: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    /// Report |||Phi||| = ||Phi|| d_in^{1/p} / d_out^{1/q} as well.
    #[arg(long)]
    triple: bool,
    #[command(flatten)]
    opt: OptArgs,
}

#[derive(Args)]
struct MultArgs {
    /// Channel file for Phi.
    #[arg(long, conflicts_with = "family")]
    phi: Option<PathBuf>,
    /// Channel file for Omega; defaults to Phi.
    #[arg(long, requires = "phi")]
    omega: Option<PathBuf>,
    /// Random family: eb-general, eb-cond1, eb-cond2, cq, qc or cp-general.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    /// JSON-lines destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV summary destination.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Exit with status 1 if any report is a candidate violation.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    opt: OptArgs,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    q: f64,
    /// Comma-separated times for a (t, triple norm) table.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// CSV destination for the table; standard output if absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report the largest q with |||Phi_t|||_{2->q} <= 1 at this time instead.
    #[arg(long)]
    q_of_t: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol_t: f64,
    #[command(flatten)]
    opt: OptArgs,
}

#[derive(Args)]
struct TraceArgs {
    /// cond1 or cond2.
    #[arg(long)]
    branch: String,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    q_list: Vec<f64>,
    /// JSON-lines destination; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opt: OptArgs,
}

enum Failure {
    Lib(Error),
    Io(String),
    Property(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Lib(Error::Input(_) | Error::Domain(_) | Error::Parse(_)) | Failure::Io(_) => 2,
        Failure::Lib(Error::Resource(_)) => 3,
        Failure::Lib(_) | Failure::Property(_) => 1,
    }
}

struct Output {
    timestamp: bool,
}

impl Output {
    fn stamp(&self, mut v: Value) -> Value {
        if self.timestamp {
            if let Value::Object(map) = &mut v {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
                map.insert("timestamp".into(), json!(secs));
            }
        }
        v
    }

    fn line(&self, v: Value) -> String {
        let mut s = serde_json::to_string(&self.stamp(v)).expect("json value serializes");
        s.push('\n');
        s
    }
}

fn write_text(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_channel(path: &Path) -> Result<SuperOp, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    SuperOp::from_json_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Failure::Lib(Error::Parse(format!("{}: {msg}", path.display()))),
        other => Failure::Lib(other),
    })
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let m: SuperOp = match a.class.as_str() {
        "identity" => SuperOp::identity(a.d_in),
        "depolarizing" => make_depolarizing(a.d_in, a.lambda)?,
        "cp" => random_cp_kraus(a.d_in, a.d_out, a.n, a.seed, a.trace_preserving)?.into(),
        other => random_eb(a.d_in, a.d_out, a.n, other.parse::<EbClass>()?, a.seed)?.into(),
    };
    let mut text = serde_json::to_string_pretty(&m.to_json()).expect("channel serializes");
    text.push('\n');
    write_text(a.out.as_deref(), &text)
}

fn cmd_norm(a: &NormArgs, out: &Output) -> CmdResult {
    let m = read_channel(&a.channel)?;
    let query = NormQuery::new(a.p, a.q)?;
    let cfg = a.opt.config()?;
    let est = norm_p_to_q(&m, query, &cfg)?;
    let mut v = to_value(&est);
    v["p"] = json!(a.p);
    v["q"] = json!(a.q);
    v["config"] = to_value(&cfg);
    if a.triple {
        v["triple_norm"] = json!(triple_norm_p_to_q(&m, query, &cfg)?);
    }
    write_text(None, &out.line(v))
}

fn write_csv(path: &Path, reports: &[MultiplicativityReport]) -> CmdResult {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_mult(a: &MultArgs, out: &Output) -> CmdResult {
    let query = NormQuery::new(a.p, a.q)?;
    let cfg = a.opt.config()?;
    let reports = match (&a.phi, &a.family) {
        (Some(phi_path), _) => {
            let phi = read_channel(phi_path)?;
            let omega = match &a.omega {
                Some(p) => read_channel(p)?,
                None => phi.clone(),
            };
            vec![product_norm_test_escalating(&phi, &omega, query, &cfg)?]
        }
        (None, Some(f)) => violation_search(f.parse::<Family>()?, query, a.trials, &cfg, cfg.seed)?,
        (None, None) => return Err(Error::Input("give --phi or --family".into()).into()),
    };
    let text: String = reports.iter().map(|r| out.line(to_value(r))).collect();
    write_text(a.out.as_deref(), &text)?;
    if let Some(path) = &a.csv {
        write_csv(path, &reports)?;
    }
    let candidates = reports.iter().filter(|r| r.candidate).count();
    if candidates > 0 {
        eprintln!("{candidates} candidate violation(s) above ratio {}", candidate_threshold(&cfg));
        if a.strict {
            return Err(Failure::Property(format!("{candidates} candidate violation(s)")));
        }
    }
    Ok(())
}

fn cmd_hyper(a: &HyperArgs, out: &Output) -> CmdResult {
    let sg = DepolarizingSemigroup::new(a.d)?;
    let cfg = a.opt.config()?;
    if let Some(t) = a.q_of_t {
        let r = q_of_t(&sg, t, &cfg)?;
        let mut v = to_value(&r);
        v["d"] = json!(a.d);
        return write_text(None, &out.line(v));
    }
    let query = NormQuery::new(a.p, a.q)?;
    if let Some(grid) = &a.t_grid {
        let rows = norm_table(&sg, query, &cfg, grid)?;
        let mut w = match &a.csv {
            Some(p) => csv::Writer::from_writer(Box::new(fs::File::create(p)?) as Box<dyn Write>),
            None => csv::Writer::from_writer(Box::new(std::io::stdout()) as Box<dyn Write>),
        };
        w.write_record(["t", "triple_norm"])?;
        for (t, v) in rows {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        if a.csv.is_none() {
            return Ok(());
        }
    }
    let t = contraction_time(&sg, query, &cfg, a.t_max, a.tol_t)?;
    write_text(None, &out.line(json!({ "d": a.d, "p": a.p, "q": a.q, "t_contraction": t })))
}

fn cmd_trace(a: &TraceArgs, out: &Output) -> CmdResult {
    let branch: Branch = a.branch.parse()?;
    let cfg = a.opt.config()?;
    let reports = trace_suite(branch, a.instances, &a.q_list, cfg.seed, &cfg)?;
    let text: String = reports.iter().map(|r| out.line(to_value(r))).collect();
    write_text(a.out.as_deref(), &text)?;
    let s = summarize(&reports);
    eprintln!("{}", serde_json::to_string(&s).expect("summary serializes"));
    if s.all_pass() {
        Ok(())
    } else {
        Err(Failure::Property(format!("{} failed, {} unresolved", s.failed, s.unresolved)))
    }
}

fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var("QNORM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Input(format!("QNORM_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    configure_threads()?;
    let out = Output { timestamp: !cli.no_timestamp };
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Norm(a) => cmd_norm(a, &out),
        Command::Mult(a) => cmd_mult(a, &out),
        Command::Hyper(a) => cmd_hyper(a, &out),
        Command::Trace(a) => cmd_trace(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("qnorm: {e}"),
                Failure::Io(e) => eprintln!("qnorm: {e}"),
                Failure::Property(e) => eprintln!("qnorm: property failure: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
