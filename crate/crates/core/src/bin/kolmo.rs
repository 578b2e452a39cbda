//! kolmo: command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 negative verdict, 3 numerical
//! failure, 4 missing determinism flag (`--seed`).

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use kolmo::control::reach::{attainable_grid, attainable_sample, ControlClass, DEFAULT_RESOLUTION};
use kolmo::control::{
    endpoint, integrate_admissible, optimal_cost, reach_min_energy, steer_admissible, CostConvention,
};
use kolmo::group::{cylinder_contains, distance, CylinderParams, CylinderShape};
use kolmo::harnack::{build_chain, harnack_bound, strong_max_report, HarnackParams};
use kolmo::kernel::checks::{chapman_check, comparison_bounds_check};
use kolmo::kernel::gamma;
use kolmo::kernel::quadrature::DEFAULT_HERMITE_NODES;
use kolmo::kernel::superlevel::{mean_value_verify, TestSolution};
use kolmo::sde::{euler_maruyama, sample_exact, LinearSde};
use kolmo::structure::check_all;
use kolmo::{validate_operator, BoxDomain, GroupPoint, KolmoError, OperatorSpec, RawOperator};

const EXIT_INPUT: u8 = 1;
const EXIT_VERDICT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_SEED: u8 = 4;

/// An error carrying its exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    Exit(EXIT_INPUT, msg.into()).into()
}

fn exit_code_of(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<KolmoError>() {
        Some(
            KolmoError::NotControllable { .. }
            | KolmoError::TargetNotAttainable(_)
            | KolmoError::EnergyWindowUnsatisfiable
            | KolmoError::CurveExitsDomain(_)
            | KolmoError::PoleInsideDomain,
        ) => EXIT_VERDICT,
        Some(
            KolmoError::GramianSingular(_)
            | KolmoError::QuadratureMismatch(_)
            | KolmoError::NonFinite
            | KolmoError::DegenerateSample(_),
        ) => EXIT_NUMERICAL,
        Some(_) => EXIT_INPUT,
        None if err.downcast_ref::<io::Error>().is_some() => EXIT_INPUT,
        None => EXIT_NUMERICAL,
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "kolmo",
    version,
    about = "Degenerate Kolmogorov operators: classification, kernels, control, Harnack chains"
)]
struct Cli {
    /// Omit the metadata header (timestamp, version) from outputs.
    #[arg(long, global = true)]
    no_meta: bool,
    /// Write the primary output here instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hypoellipticity conditions as JSON.
    Classify { operator: PathBuf },
    /// Pairwise quasi-distances and cylinder membership.
    Geom(GeomArgs),
    /// Fundamental solution and its checks
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Sample the associated SDE.
    Simulate(SimulateArgs),
    /// Minimum-energy controls and attainable sets
    #[command(subcommand)]
    Control(ControlCmd),
    /// Harnack chains and bounds along admissible curves
    #[command(subcommand)]
    Harnack(HarnackCmd),
}

#[derive(Args, Debug)]
struct GeomArgs {
    /// CSV of points x1..xN,t (stdin if omitted).
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    operator: PathBuf,
}

#[derive(Subcommand, Debug)]
enum KernelCmd {
    /// Γ(z; pole) at each input point.
    Eval {
        #[arg(long)]
        points: Option<PathBuf>,
        /// Pole as x1,..,xN,t (default origin).
        #[arg(long, allow_hyphen_values = true)]
        pole: Option<String>,
        operator: PathBuf,
    },
    /// Monte Carlo check of the mean-value formula.
    Meanvalue {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, allow_hyphen_values = true)]
        z0: Option<String>,
        /// Test solution: a constant, or Γ(·; pole) when --pole is given.
        #[arg(long, default_value_t = 1.0)]
        constant: f64,
        #[arg(long, allow_hyphen_values = true)]
        pole: Option<String>,
        operator: PathBuf,
    },
    /// Chapman–Kolmogorov reproduction error.
    Chapman {
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        zeta: Option<String>,
        /// Intermediate time (default: midpoint).
        #[arg(long, allow_hyphen_values = true)]
        split: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_HERMITE_NODES)]
        resolution: usize,
        operator: PathBuf,
    },
    /// Comparison of Γ against the principal part and isotropic kernels.
    Bounds {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0, 1000.0])]
        levels: Vec<f64>,
        operator: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SimMethod {
    Exact,
    Em,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimMethod::Exact)]
    method: SimMethod,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Write a binary columnar file instead of CSV.
    #[arg(long)]
    binary: bool,
    operator: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    /// W = 2C, the energy of the optimal control.
    Controllability,
    /// ⟨C⁻¹d, d⟩.
    Gramian,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ClassArgs {
    /// bounded | l2 | unbounded
    #[arg(long, default_value = "bounded")]
    class: String,
    /// M for bounded, h for l2.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
}

impl ClassArgs {
    fn parse(&self) -> anyhow::Result<ControlClass> {
        match self.class.as_str() {
            "bounded" => Ok(ControlClass::Bounded(self.bound)),
            "l2" => Ok(ControlClass::L2Budget(self.bound)),
            "unbounded" => Ok(ControlClass::Unbounded),
            other => Err(input_error(format!("unknown control class {other:?}"))),
        }
    }
}

#[derive(Subcommand, Debug)]
enum ControlCmd {
    /// Minimal-energy control of ẋ = −Bx + σω between two states.
    Reach {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, allow_hyphen_values = true)]
        x1: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t1: f64,
        #[arg(long, default_value_t = kolmo::control::DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        operator: PathBuf,
    },
    /// Minimal cost ⟨W⁻¹d, d⟩ with d = x1 − E(τ)x0.
    Cost {
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x1: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = Convention::Controllability)]
        convention: Convention,
        operator: PathBuf,
    },
    /// Attainable set: grid cells as CSV, or a sampled point cloud.
    Attainable {
        #[arg(long, allow_hyphen_values = true)]
        z0: Option<String>,
        /// JSON box union {"boxes":[{"lo":[..],"hi":[..]}]}; unit box if omitted.
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        class: ClassArgs,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// Occupancy grid JSON goes here.
        #[arg(long)]
        grid_out: Option<PathBuf>,
        /// Sample this many random admissible curves instead (needs --seed).
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        operator: PathBuf,
    },
}

#[derive(Args, Debug)]
struct HarnackOpts {
    #[arg(long, default_value_t = std::f64::consts::E)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 1.0)]
    r_cap: f64,
    /// Use δ₀ ≤ β·r₀ instead of β·r₀².
    #[arg(long)]
    literal_delta: bool,
    #[arg(long, default_value_t = 128)]
    steps: usize,
}

impl HarnackOpts {
    fn params(&self) -> HarnackParams {
        HarnackParams {
            c: self.c,
            h: self.h,
            r_cap: self.r_cap,
            literal_delta: self.literal_delta,
            ..Default::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum HarnackCmd {
    /// Chain along the minimal-energy curve from z0 to a target.
    Chain {
        #[arg(long, allow_hyphen_values = true)]
        z0: String,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        opts: HarnackOpts,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        operator: PathBuf,
    },
    /// c^k for each target point in a CSV file.
    Bound {
        #[arg(long, allow_hyphen_values = true)]
        z0: String,
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        opts: HarnackOpts,
        operator: PathBuf,
    },
    /// Certified zero-propagation region of z0.
    Maxprinciple {
        #[arg(long, allow_hyphen_values = true)]
        z0: String,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[command(flatten)]
        class: ClassArgs,
        #[arg(long, default_value_t = 8)]
        resolution: usize,
        #[command(flatten)]
        opts: HarnackOpts,
        operator: PathBuf,
    },
}

struct Output {
    meta: Option<Value>,
    path: Option<PathBuf>,
}

impl Output {
    fn new(cli: &Cli, command: &str) -> Self {
        let meta = (!cli.no_meta).then(|| {
            let stamp =
                std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            json!({ "tool": "kolmo", "version": env!("CARGO_PKG_VERSION"), "command": command, "unix_time": stamp })
        });
        Self { meta, path: cli.out.clone() }
    }

    fn write_bytes(&self, bytes: &[u8]) -> anyhow::Result<()> {
        match &self.path {
            Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
            None => {
                io::stdout().write_all(bytes)?;
                Ok(())
            }
        }
    }

    fn json<T: Serialize>(&self, value: &T) -> anyhow::Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let (Some(meta), Value::Object(map)) = (&self.meta, &mut v) {
            map.insert("meta".into(), meta.clone());
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_bytes(text.as_bytes())
    }

    fn csv(&self, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        if let Some(meta) = &self.meta {
            writeln!(buf, "# {meta}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_bytes(&buf)
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn coord_header(n: usize, prefix: &str) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|i| format!("{prefix}x{i}")).collect();
    h.push(format!("{prefix}t"));
    h
}

fn read_operator(path: &Path) -> anyhow::Result<RawOperator> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    RawOperator::from_json(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> anyhow::Result<OperatorSpec> {
    let raw = read_operator(path)?;
    validate_operator(&raw).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_domain(path: Option<&PathBuf>, n: usize) -> anyhow::Result<BoxDomain> {
    let domain = match path {
        None => BoxDomain::unit_box(n),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
            let d: BoxDomain = serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", p.display())))?;
            BoxDomain::new(d.boxes).map_err(|e| input_error(e.to_string()))?
        }
    };
    domain.check_dim(n).map_err(|e| input_error(e.to_string()))?;
    Ok(domain)
}

fn parse_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| input_error(format!("not a number: {s:?}")))).collect()
}

fn parse_vector(text: Option<&str>, n: usize) -> anyhow::Result<DVector<f64>> {
    match text {
        None => Ok(DVector::zeros(n)),
        Some(t) => {
            let v = parse_list(t)?;
            if v.len() != n {
                return Err(input_error(format!("expected {n} coordinates, got {}", v.len())));
            }
            Ok(DVector::from_vec(v))
        }
    }
}

fn parse_point(text: Option<&str>, n: usize) -> anyhow::Result<GroupPoint> {
    match text {
        None => Ok(GroupPoint::origin(n)),
        Some(t) => {
            let v = parse_list(t)?;
            if v.len() != n + 1 {
                return Err(input_error(format!("expected {} coordinates (x..., t), got {}", n + 1, v.len())));
            }
            Ok(GroupPoint::from_coords(&v))
        }
    }
}

/// Rows of numbers from a CSV file or stdin; comment lines and a
/// non-numeric header are skipped.
fn read_points(path: Option<&PathBuf>, n: usize) -> anyhow::Result<Vec<GroupPoint>> {
    let mut text = String::new();
    match path {
        Some(p) => text = fs::read_to_string(p).map_err(|e| input_error(format!("{}: {e}", p.display())))?,
        None => {
            io::stdin().read_to_string(&mut text)?;
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| input_error(e.to_string()))?;
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == n + 1 => out.push(GroupPoint::from_coords(&v)),
            Ok(v) => return Err(input_error(format!("row {}: expected {} values, got {}", i + 1, n + 1, v.len()))),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(input_error(format!("row {}: not numeric", i + 1))),
        }
    }
    Ok(out)
}

fn require_seed(seed: Option<u64>) -> anyhow::Result<u64> {
    seed.ok_or_else(|| Exit(EXIT_SEED, "this command is stochastic; pass --seed for a reproducible run".into()).into())
}

fn point_row(z: &GroupPoint) -> Vec<String> {
    z.coords().into_iter().map(f).collect()
}

fn cmd_classify(cli: &Cli, operator: &Path) -> anyhow::Result<()> {
    let raw = read_operator(operator)?;
    let report = check_all(&raw);
    Output::new(cli, "classify").json(&report)?;
    if !report.consistent {
        return Err(Exit(EXIT_NUMERICAL, "conditions disagree; the operator is numerically borderline".into()).into());
    }
    if !report.hypoelliptic() {
        return Err(Exit(EXIT_VERDICT, "operator is not hypoelliptic".into()).into());
    }
    Ok(())
}

fn cmd_geom(cli: &Cli, args: &GeomArgs) -> anyhow::Result<()> {
    let spec = load_spec(&args.operator)?;
    let group = spec.dilations();
    let n = spec.dim();
    let points = read_points(args.points.as_ref(), n)?;
    let params = CylinderParams::default();
    let mut header = vec!["z".to_string(), "w".into(), "d".into()];
    header.extend(CylinderShape::ALL.iter().map(|s| s.name().to_string()));
    let mut rows = Vec::new();
    for (i, z) in points.iter().enumerate() {
        for (j, w) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut row = vec![i.to_string(), j.to_string(), f(distance(z, w, &spec, &group))];
            for shape in CylinderShape::ALL {
                let inside = cylinder_contains(w, z, args.radius, shape, &params, &spec, &group)?;
                row.push(u8::from(inside).to_string());
            }
            rows.push(row);
        }
    }
    Output::new(cli, "geom").csv(&header, &rows)
}

fn cmd_kernel(cli: &Cli, cmd: &KernelCmd) -> anyhow::Result<()> {
    match cmd {
        KernelCmd::Eval { points, pole, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let pole = parse_point(pole.as_deref(), n)?;
            let pts = read_points(points.as_ref(), n)?;
            let mut header = coord_header(n, "");
            header.extend(["gamma".to_string(), "log_gamma".into()]);
            let mut rows = Vec::new();
            for z in &pts {
                let g = gamma(&spec, z, &pole)?;
                let mut row = point_row(z);
                row.extend([f(g.value), f(g.log_value)]);
                rows.push(row);
            }
            Output::new(cli, "kernel eval").csv(&header, &rows)
        }
        KernelCmd::Meanvalue { seed, samples, radius, z0, constant, pole, operator } => {
            let seed = require_seed(*seed)?;
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z0 = parse_point(z0.as_deref(), n)?;
            let u = match pole {
                Some(p) => TestSolution::Kernel(parse_point(Some(p), n)?),
                None => TestSolution::Constant(*constant),
            };
            let rep = mean_value_verify(&spec, &z0, *radius, &u, *samples, seed)?;
            let header: Vec<String> =
                ["estimate", "exact", "rel_error", "std_error", "samples", "accepted"].map(String::from).to_vec();
            let row = vec![
                f(rep.estimate),
                f(rep.exact),
                f(rep.rel_error),
                f(rep.std_error),
                rep.samples.to_string(),
                rep.accepted.to_string(),
            ];
            Output::new(cli, "kernel meanvalue").csv(&header, &[row])
        }
        KernelCmd::Chapman { z, zeta, split, resolution, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z = match z {
                Some(t) => parse_point(Some(t), n)?,
                None => GroupPoint::new(DVector::zeros(n), 1.0),
            };
            let zeta = parse_point(zeta.as_deref(), n)?;
            let s = split.unwrap_or(0.5 * (z.t + zeta.t));
            let err = chapman_check(&spec, &z, &zeta, s, *resolution)?;
            let header: Vec<String> = ["t", "tau", "s", "nodes", "error"].map(String::from).to_vec();
            Output::new(cli, "kernel chapman")
                .csv(&header, &[vec![f(z.t), f(zeta.t), f(s), resolution.to_string(), f(err)]])
        }
        KernelCmd::Bounds { seed, samples, levels, operator } => {
            let seed = require_seed(*seed)?;
            let spec = load_spec(operator)?;
            let rep = comparison_bounds_check(&spec, levels, *samples, seed)?;
            let header: Vec<String> =
                ["level", "eps", "count", "non_increasing", "c_plus", "c_minus"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = rep
                .levels
                .iter()
                .map(|l| {
                    vec![
                        f(l.level),
                        f(l.eps),
                        l.count.to_string(),
                        rep.non_increasing.to_string(),
                        f(rep.c_plus),
                        f(rep.c_minus),
                    ]
                })
                .collect();
            Output::new(cli, "kernel bounds").csv(&header, &rows)
        }
    }
}

/// Binary columnar layout: b"KOLMOCOL", u64 rows, u64 columns, then each
/// column as little-endian f64.
fn columnar_bytes(points: &nalgebra::DMatrix<f64>) -> Vec<u8> {
    let mut out = b"KOLMOCOL".to_vec();
    out.extend((points.nrows() as u64).to_le_bytes());
    out.extend((points.ncols() as u64).to_le_bytes());
    for v in points.iter() {
        out.extend(v.to_le_bytes());
    }
    out
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> anyhow::Result<()> {
    let seed = require_seed(args.seed)?;
    let spec = load_spec(&args.operator)?;
    let sde = LinearSde::from(&spec);
    let x0 = parse_vector(args.x0.as_deref(), spec.dim())?;
    let batch = match args.method {
        SimMethod::Exact => sample_exact(&sde, &x0, args.t, args.n, seed)?,
        SimMethod::Em => {
            let dt = args.dt.ok_or_else(|| input_error("--method em needs --dt"))?;
            euler_maruyama(&sde, &x0, args.t, dt, args.n, seed)?
        }
    };
    let out = Output::new(cli, "simulate");
    if args.binary {
        return out.write_bytes(&columnar_bytes(&batch.points));
    }
    let header: Vec<String> = (1..=spec.dim()).map(|i| format!("x{i}")).collect();
    let rows: Vec<Vec<String>> = batch.points.row_iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect();
    out.csv(&header, &rows)
}

fn cmd_control(cli: &Cli, cmd: &ControlCmd) -> anyhow::Result<()> {
    match cmd {
        ControlCmd::Reach { x0, t0, x1, t1, steps, format, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let x0 = parse_vector(x0.as_deref(), n)?;
            let x1 = parse_vector(Some(x1), n)?;
            let grid = reach_min_energy(&spec, &x0, *t0, &x1, *t1, *steps)?;
            let hit = endpoint(&(-spec.b()), spec.sigma(), &x0, &grid)?;
            let out = Output::new(cli, "control reach");
            if *format == Format::Csv {
                let mut header = vec!["s".to_string()];
                header.extend((1..=grid.omega.ncols()).map(|k| format!("omega{k}")));
                let rows: Vec<Vec<String>> = grid
                    .omega
                    .row_iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut row = vec![f(t0 + i as f64 * grid.step())];
                        row.extend(r.iter().map(|v| f(*v)));
                        row
                    })
                    .collect();
                return out.csv(&header, &rows);
            }
            out.json(&json!({
                "duration": grid.duration,
                "steps": grid.steps(),
                "energy": grid.energy,
                "endpoint": hit.as_slice(),
                "endpoint_error": (&hit - &x1).amax(),
                "omega": grid.omega.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            }))
        }
        ControlCmd::Cost { x0, x1, tau, convention, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let x0 = parse_vector(x0.as_deref(), n)?;
            let x1 = parse_vector(Some(x1), n)?;
            let conv = match convention {
                Convention::Controllability => CostConvention::Controllability,
                Convention::Gramian => CostConvention::Gramian,
            };
            let cost = optimal_cost(&spec, &x0, &x1, *tau, conv)?;
            let header: Vec<String> = ["tau", "convention", "cost"].map(String::from).to_vec();
            Output::new(cli, "control cost")
                .csv(&header, &[vec![f(*tau), format!("{convention:?}").to_lowercase(), f(cost)]])
        }
        ControlCmd::Attainable { z0, domain, class, resolution, grid_out, samples, seed, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z0 = parse_point(z0.as_deref(), n)?;
            let domain = load_domain(domain.as_ref(), n)?;
            let class = class.parse()?;
            let out = Output::new(cli, "control attainable");
            let header = coord_header(n, "");
            if let Some(count) = samples {
                let seed = require_seed(*seed)?;
                let pts = attainable_sample(&spec, &z0, &domain, class, *count, seed)?;
                let rows: Vec<Vec<String>> = pts.iter().map(point_row).collect();
                return out.csv(&header, &rows);
            }
            let grid = attainable_grid(&spec, &z0, &domain, class, *resolution)?;
            if let Some(p) = grid_out {
                let text = serde_json::to_string(&grid.occupancy())?;
                fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            let rows: Vec<Vec<String>> = grid
                .cells()
                .iter()
                .map(|c| {
                    let mut row: Vec<String> = c.state.iter().map(|v| f(*v)).collect();
                    row.push(f(c.t));
                    row
                })
                .collect();
            out.csv(&header, &rows)
        }
    }
}

fn cmd_harnack(cli: &Cli, cmd: &HarnackCmd) -> anyhow::Result<()> {
    match cmd {
        HarnackCmd::Chain { z0, target, domain, opts, format, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z0 = parse_point(Some(z0), n)?;
            let target = parse_point(Some(target), n)?;
            let domain = load_domain(domain.as_ref(), n)?;
            let control = steer_admissible(&spec, &z0, &target, opts.steps)?;
            let curve = integrate_admissible(&spec, &z0, &control)?;
            let chain = build_chain(&spec, &curve, &domain, &opts.params()).map_err(|e| match e {
                KolmoError::CurveExitsDomain(s) => {
                    anyhow::Error::from(KolmoError::TargetNotAttainable(format!("curve leaves the domain at s = {s}")))
                }
                other => other.into(),
            })?;
            let out = Output::new(cli, "harnack chain");
            if *format == Format::Csv {
                let mut header = vec!["j".to_string(), "s".into()];
                header.extend(coord_header(n, ""));
                header.push("radius".into());
                let rows: Vec<Vec<String>> = chain
                    .points
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let mut row = vec![j.to_string(), f(chain.params[j])];
                        row.extend(point_row(p));
                        row.push(chain.radii.get(j).map_or(String::new(), |r| f(*r)));
                        row
                    })
                    .collect();
                return out.csv(&header, &rows);
            }
            out.json(&chain)
        }
        HarnackCmd::Bound { z0, targets, domain, opts, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z0 = parse_point(Some(z0), n)?;
            let domain = load_domain(domain.as_ref(), n)?;
            let targets = read_points(targets.as_ref(), n)?;
            let rep = harnack_bound(&spec, &z0, &targets, &domain, &opts.params(), opts.steps)?;
            let mut header = coord_header(n, "");
            header.extend(["k".to_string(), "bound".into()]);
            let rows: Vec<Vec<String>> = rep
                .targets
                .iter()
                .map(|t| {
                    let mut row = point_row(&t.target);
                    row.extend([t.k.to_string(), f(t.bound)]);
                    row
                })
                .collect();
            Output::new(cli, "harnack bound").csv(&header, &rows)
        }
        HarnackCmd::Maxprinciple { z0, domain, class, resolution, opts, operator } => {
            let spec = load_spec(operator)?;
            let n = spec.dim();
            let z0 = parse_point(Some(z0), n)?;
            let domain = load_domain(domain.as_ref(), n)?;
            let rep = strong_max_report(&spec, &z0, &domain, &opts.params(), class.parse()?, *resolution, opts.steps)?;
            Output::new(cli, "harnack maxprinciple").json(&rep)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("KOLMO_THREADS") {
        let n: usize = v.parse().map_err(|_| input_error(format!("KOLMO_THREADS={v:?} is not a count")))?;
        if n == 0 {
            bail!(input_error("KOLMO_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!(e))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Classify { operator } => cmd_classify(cli, operator),
        Command::Geom(args) => cmd_geom(cli, args),
        Command::Kernel(cmd) => cmd_kernel(cli, cmd),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Control(cmd) => cmd_control(cli, cmd),
        Command::Harnack(cmd) => cmd_harnack(cli, cmd),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("kolmo: {err:#}");
            ExitCode::from(exit_code_of(&err))
        }
    }
}
