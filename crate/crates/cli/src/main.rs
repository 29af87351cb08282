//! Command-line front end: build closure tables, evaluate closures in
//! batch, validate against direct quadrature oracles, benchmark table
//! evaluation, run the moment-dynamics demo and emit figure data.
//!
//! Exit codes: 0 success, 2 usage, 3 numeric failure, 4 I/O.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use bingham_closure::biaxial::{
    self, b_diag_of, close_3d, oracle_moments_sphere, BiaxialBuildConfig, BiaxialClosureTable,
    BiaxialParams,
};
use bingham_closure::circle::{
    self, close_2d, oracle_moments_2d, CircleBuildConfig, CircleClosureTable, TableVariant,
};
use bingham_closure::dynamics::{integrate, FlowParams, FlowVariant, IntegrateOptions};
use bingham_closure::quadrature::tail_residual_1d;
use bingham_closure::tables::{load_table, save_table, Domain, TableFile};
use bingham_closure::tensor::{rotate4_2, FourthMoment2, Rotation2, SecondMoment2, SecondMoment3};
use bingham_closure::uniaxial::{self, close_3d_uniaxial, UniaxialBuildConfig};
use bingham_closure::{Error, Result};

#[derive(Parser)]
#[command(name = "bingham", about = "Bingham moment closure tables and evaluation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a closure table and write it to disk.
    GenTable(GenTableArgs),
    /// Close a batch of second moments from a file.
    Eval(EvalArgs),
    /// Compare closure output against the direct quadrature oracle.
    Validate(ValidateArgs),
    /// Benchmark table evaluation throughput.
    Bench(BenchArgs),
    /// Integrate the closed second-moment dynamics.
    Simulate(SimulateArgs),
    /// Emit coefficient-decay and moment-curve data as CSV.
    FigureData(FigureDataArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Circle,
    SphereUni,
    SphereBi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Global,
    Piecewise,
}

#[derive(Args)]
struct GenTableArgs {
    #[arg(long, value_enum)]
    domain: DomainArg,
    #[arg(long, value_enum, default_value = "global")]
    variant: VariantArg,
    /// Expansion order override (1D domains; applies to every piece).
    #[arg(long)]
    nl: Option<usize>,
    /// Expansion order overrides (biaxial).
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    /// Fit quadrature order override.
    #[arg(long)]
    quad_n: Option<usize>,
    /// Moment-integral quadrature order (biaxial only).
    #[arg(long, default_value_t = biaxial::DEFAULT_MOMENT_QUAD_N)]
    moment_quad_n: usize,
    /// Newton tolerance on the moment mismatch.
    #[arg(long, default_value_t = 1e-15)]
    tol: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Moment dimension of the input rows (2: m11,m12; 3: six components).
    #[arg(long)]
    dim: usize,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// One or two table files (two of the same domain report a speedup).
    #[arg(long, required = true)]
    table: Vec<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    batch: usize,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1.0)]
    de: f64,
    #[arg(long, default_value_t = 0.0)]
    u0: f64,
    /// Velocity gradient, nine comma-separated row-major entries.
    #[arg(long, value_delimiter = ',', num_args = 9, default_values_t = vec![0.0; 9])]
    kappa: Vec<f64>,
    /// Initial moment: `iso` or six comma-separated components
    /// m11,m22,m33,m12,m13,m23.
    #[arg(long, default_value = "iso")]
    m0: String,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, value_enum, default_value = "trace-preserving")]
    flow_variant: FlowVariantArg,
    #[arg(long)]
    table: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlowVariantArg {
    Paper,
    TracePreserving,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureKind {
    #[value(name = "eta-mu-2d")]
    EtaMu2d,
    #[value(name = "coeff-decay-2d")]
    CoeffDecay2d,
    #[value(name = "coeff-decay-uni")]
    CoeffDecayUni,
    #[value(name = "coeff-decay-bi")]
    CoeffDecayBi,
}

#[derive(Args)]
struct FigureDataArgs {
    #[arg(long, value_enum)]
    figure: FigureKind,
    /// Reuse a prebuilt table instead of building the default one.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Io(_) | Error::Table(_) | Error::Parse(_) => 4,
            _ => 3,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTable(a) => gen_table(a),
        Command::Eval(a) => eval(a),
        Command::Validate(a) => validate(a),
        Command::Bench(a) => bench(a),
        Command::Simulate(a) => simulate(a),
        Command::FigureData(a) => figure_data(a),
    }
}

/// Relative table paths not found in the working directory fall back to
/// `$BINGHAM_TABLE_DIR`.
fn resolve_table_path(p: &Path) -> PathBuf {
    if !p.exists() && p.is_relative() {
        if let Ok(dir) = std::env::var("BINGHAM_TABLE_DIR") {
            let cand = Path::new(&dir).join(p);
            if cand.exists() {
                return cand;
            }
        }
    }
    p.to_path_buf()
}

fn load(path: &Path) -> Result<TableFile> {
    load_table(&resolve_table_path(path))
}

fn gen_table(a: GenTableArgs) -> Result<()> {
    let variant = match a.variant {
        VariantArg::Global => TableVariant::Global,
        VariantArg::Piecewise => TableVariant::Piecewise,
    };
    let file = match a.domain {
        DomainArg::Circle => {
            let cfg = CircleBuildConfig {
                variant,
                n_l: a.nl,
                quad_n: a.quad_n,
                breakpoints: None,
            };
            let t = circle::build_table(&cfg)?;
            report_1d("circle", &t.pieces, t.build.max_newton_iters);
            TableFile::from_circle(&t)
        }
        DomainArg::SphereUni => {
            let cfg = UniaxialBuildConfig {
                variant,
                n_l: a.nl,
                quad_n: a.quad_n,
                breakpoints: None,
            };
            let t = uniaxial::build_table_uni(&cfg)?;
            report_1d("sphere-uni", &t.pieces, t.build.max_newton_iters);
            TableFile::from_uniaxial(&t)
        }
        DomainArg::SphereBi => {
            let orders = match (a.n1, a.n2) {
                (Some(n1), Some(n2)) => Some((n1, n2)),
                (None, None) => None,
                _ => {
                    return Err(Error::Domain(
                        "--n1 and --n2 must be given together".into(),
                    ))
                }
            };
            let cfg = BiaxialBuildConfig {
                variant,
                orders,
                fit_quad_n: a.quad_n,
                moment_quad_n: a.moment_quad_n,
                newton_tol: a.tol,
            };
            let t = biaxial::build_table_biaxial(&cfg)?;
            for (i, b) in t.blocks.iter().enumerate() {
                println!(
                    "block {} x=[{:+.4},{:+.4}] y=[{:+.4},{:+.4}] residuals {:.3e} {:.3e} {:.3e}",
                    i + 1,
                    b.x_lo,
                    b.x_hi,
                    b.y_lo,
                    b.y_hi,
                    b.residuals[0],
                    b.residuals[1],
                    b.residuals[2]
                );
            }
            println!("max newton iterations: {}", t.build.max_newton_iters);
            TableFile::from_biaxial(&t)
        }
    };
    save_table(&file, &a.output)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn report_1d(domain: &str, pieces: &[bingham_closure::quadrature::TablePiece], iters: usize) {
    for p in pieces {
        println!(
            "{domain} piece [{:.4}, {:.4}] n_l={} residual {:.3e}",
            p.series.lo,
            p.series.hi,
            p.series.degree(),
            p.residual
        );
    }
    println!("max newton iterations: {iters}");
}

/// Parses one comma-separated float row; errors carry the 1-based line
/// number.
fn parse_row(line: &str, want: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = line
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect();
    match vals {
        Ok(v) if v.len() == want => Ok(v),
        Ok(v) => Err(Error::Parse(format!(
            "line {lineno}: expected {want} fields, found {}",
            v.len()
        ))),
        Err(e) => Err(Error::Parse(format!("line {lineno}: {e}"))),
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let file = load(&a.table)?;
    let text = std::fs::read_to_string(&a.input)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse("empty input file (header row required)".into()));
    };
    if header.split(',').next().unwrap_or("").trim().parse::<f64>().is_ok() {
        return Err(Error::Parse(
            "first row parses as numbers; a header row is required".into(),
        ));
    }
    let rows: Vec<(usize, &str)> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.output)?);
    match (a.dim, file.domain) {
        (2, Domain::Circle) => {
            let table = file.to_circle()?;
            let results: Vec<FourthMoment2> = rows
                .par_iter()
                .map(|&(lineno, line)| {
                    let v = parse_row(line, 2, lineno)?;
                    let m = SecondMoment2::sanitize(v[0], v[1], 1.0 - v[0]);
                    close_2d(&m, &table)
                        .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            writeln!(out, "q1111,q1112,q1122,q1222,q2222")?;
            for q in results {
                let s: Vec<String> = q.q.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", s.join(","))?;
            }
        }
        (3, Domain::SphereBiaxial) | (3, Domain::SphereUniaxial) => {
            let results: Vec<bingham_closure::tensor::FourthMoment3> = match file.domain {
                Domain::SphereBiaxial => {
                    let table = file.to_biaxial()?;
                    rows.par_iter()
                        .map(|&(lineno, line)| {
                            let v = parse_row(line, 6, lineno)?;
                            let m = SecondMoment3::sanitize(v.try_into().unwrap());
                            close_3d(&m, &table)
                                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                _ => {
                    let table = file.to_uniaxial()?;
                    rows.par_iter()
                        .map(|&(lineno, line)| {
                            let v = parse_row(line, 6, lineno)?;
                            let m = SecondMoment3::sanitize(v.try_into().unwrap());
                            close_3d_uniaxial(&m, &table)
                                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            writeln!(
                out,
                "q1111,q1112,q1113,q1122,q1123,q1133,q1222,q1223,q1233,q1333,q2222,q2223,q2233,q2333,q3333"
            )?;
            for q in results {
                let s: Vec<String> = q.q.iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", s.join(","))?;
            }
        }
        (d, dom) => {
            return Err(Error::Domain(format!(
                "dimension {d} incompatible with table domain {dom:?}"
            )))
        }
    }
    out.flush()?;
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let file = load(&a.table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    match file.domain {
        Domain::Circle => {
            let table = file.to_circle()?;
            for _ in 0..a.samples {
                let lambda = rng.gen_range(0.0..200.0);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let o = oracle_moments_2d(lambda)?;
                let (c, s) = (angle.cos(), angle.sin());
                let m11d = 0.5 * (1.0 + o.mu);
                let m22d = 0.5 * (1.0 - o.mu);
                let m = SecondMoment2 {
                    m11: c * c * m11d + s * s * m22d,
                    m12: c * s * (m11d - m22d),
                };
                let q = close_2d(&m, &table)?;
                let rot = Rotation2 { m: [[c, -s], [s, c]] };
                let q_oracle = rotate4_2(
                    &FourthMoment2 {
                        q: [o.q[4], 0.0, o.q[2], 0.0, o.q[0]],
                    },
                    &rot,
                );
                for i in 0..5 {
                    let e = (q.q[i] - q_oracle.q[i]).abs();
                    max_err = max_err.max(e);
                    sum_err += e;
                }
            }
            println!(
                "domain=circle samples={} max_abs_q_error={:.3e} mean_abs_q_error={:.3e}",
                a.samples,
                max_err,
                sum_err / (5 * a.samples) as f64
            );
        }
        Domain::SphereBiaxial | Domain::SphereUniaxial => {
            let closer: Box<dyn Fn(&SecondMoment3) -> Result<bingham_closure::tensor::FourthMoment3> + Sync> =
                match file.domain {
                    Domain::SphereBiaxial => {
                        let t = file.to_biaxial()?;
                        Box::new(move |m| close_3d(m, &t))
                    }
                    _ => {
                        let t = file.to_uniaxial()?;
                        Box::new(move |m| close_3d_uniaxial(m, &t))
                    }
                };
            let uniaxial_only = file.domain == Domain::SphereUniaxial;
            let mut accepted = 0usize;
            while accepted < a.samples {
                let (b, gap_ok) = if uniaxial_only {
                    let l = rng.gen_range(-60.0..60.0);
                    ([0.0, 0.0, 2.0 * l], true)
                } else {
                    let l1: f64 = rng.gen_range(0.0..60.0);
                    let l2: f64 = rng.gen_range(0.0..=l1);
                    let p = BiaxialParams {
                        lambda1: l1,
                        lambda2: l2,
                    };
                    (b_diag_of(&p), true)
                };
                if !gap_ok {
                    continue;
                }
                let (m_o, q_o) = oracle_moments_sphere(b)?;
                // interior sampling: skip nearly-degenerate spectra
                let (vals, _) = bingham_closure::tensor::eig_sym3(&m_o);
                if !uniaxial_only && (vals[1] - vals[0] < 1e-3 || vals[2] - vals[1] < 1e-3) {
                    continue;
                }
                accepted += 1;
                let q = closer(&m_o)?;
                for i in 0..15 {
                    let e = (q.q[i] - q_o.q[i]).abs();
                    max_err = max_err.max(e);
                    sum_err += e;
                }
            }
            println!(
                "domain={} samples={} max_abs_q_error={:.3e} mean_abs_q_error={:.3e}",
                if uniaxial_only { "sphere-uni" } else { "sphere-bi" },
                a.samples,
                max_err,
                sum_err / (15 * a.samples) as f64
            );
        }
    }
    Ok(())
}

enum BenchTable {
    Circle(CircleClosureTable),
    Uniaxial(bingham_closure::uniaxial::UniaxialClosureTable),
    Biaxial(BiaxialClosureTable),
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.table.is_empty() || a.table.len() > 2 {
        return Err(Error::Domain("bench takes one or two --table paths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut loaded = Vec::new();
    for p in &a.table {
        let t0 = Instant::now();
        let file = load(p)?;
        let cold_ms = t0.elapsed().as_secs_f64() * 1e3;
        let t0 = Instant::now();
        let _ = load(p)?;
        let warm_ms = t0.elapsed().as_secs_f64() * 1e3;
        let table = match file.domain {
            Domain::Circle => BenchTable::Circle(file.to_circle()?),
            Domain::SphereUniaxial => BenchTable::Uniaxial(file.to_uniaxial()?),
            Domain::SphereBiaxial => BenchTable::Biaxial(file.to_biaxial()?),
        };
        println!(
            "{}: load cold {cold_ms:.1} ms, warm {warm_ms:.1} ms",
            p.display()
        );
        loaded.push((file.variant, table));
    }
    // common batch of evaluation points in the table's moment domain
    let batch2d: Vec<f64> = (0..a.batch).map(|_| rng.gen_range(0.0..0.9999)).collect();
    let batch_uni: Vec<f64> = (0..a.batch).map(|_| rng.gen_range(0.0..2.0)).collect();
    let batch_bi: Vec<(f64, f64)> = (0..a.batch)
        .map(|_| {
            // barycentric sample of the admissible triangle
            let (mut r1, mut r2): (f64, f64) = (rng.gen(), rng.gen());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            let (a1, a2) = (0.5 * r1, -0.5 * r1); // vertex B
            let (c1, _c2) = (2.0 / 3.0 * r2, 0.0); // vertex C
            (a1 + c1, a2)
        })
        .collect();
    let mut rates = Vec::new();
    for (variant, table) in &loaded {
        let mut best = f64::INFINITY;
        for _ in 0..a.repeat.max(1) {
            let t0 = Instant::now();
            let mut acc = 0.0f64;
            match table {
                BenchTable::Circle(t) => {
                    for &mu in &batch2d {
                        acc += t.eval_eta(mu)?;
                    }
                }
                BenchTable::Uniaxial(t) => {
                    for &mu in &batch_uni {
                        acc += t.eval_eta(mu)?;
                    }
                }
                BenchTable::Biaxial(t) => {
                    for &(m1, m2) in &batch_bi {
                        let (e1, e2, e3) = t.eval_etas(m1, m2)?;
                        acc += e1 + e2 + e3;
                    }
                }
            }
            std::hint::black_box(acc);
            best = best.min(t0.elapsed().as_secs_f64());
        }
        let rate = a.batch as f64 / best;
        println!(
            "variant={variant:?} batch={} best {:.3} s -> {:.3e} evals/s",
            a.batch, best, rate
        );
        rates.push((*variant, rate));
    }
    if rates.len() == 2 {
        let global = rates
            .iter()
            .find(|r| r.0 == bingham_closure::tables::Variant::Global);
        let piecewise = rates
            .iter()
            .find(|r| r.0 == bingham_closure::tables::Variant::Piecewise);
        if let (Some(g), Some(p)) = (global, piecewise) {
            println!("piecewise/global speedup: {:.2}x", p.1 / g.1);
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let file = load(&a.table)?;
    let table = file.to_biaxial()?;
    let kappa = [
        [a.kappa[0], a.kappa[1], a.kappa[2]],
        [a.kappa[3], a.kappa[4], a.kappa[5]],
        [a.kappa[6], a.kappa[7], a.kappa[8]],
    ];
    let m0 = if a.m0 == "iso" {
        SecondMoment3::isotropic()
    } else {
        let vals: std::result::Result<Vec<f64>, _> =
            a.m0.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("--m0: {e}")))?;
        if vals.len() != 6 {
            return Err(Error::Parse("--m0 needs `iso` or six components".into()));
        }
        SecondMoment3::sanitize(vals.try_into().unwrap())
    };
    let p = FlowParams {
        de: a.de,
        u0: a.u0,
        kappa,
    };
    let opts = IntegrateOptions {
        dt: a.dt,
        t_end: a.t_end,
        variant: match a.flow_variant {
            FlowVariantArg::Paper => FlowVariant::Paper,
            FlowVariantArg::TracePreserving => FlowVariant::TracePreserving,
        },
        renormalize: false,
    };
    let traj = integrate(&m0, &p, &table, &opts)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.output)?);
    writeln!(out, "t,m11,m22,m33,m12,m13,m23,S,trace_drift")?;
    for i in 0..traj.times.len() {
        let m = &traj.states[i].m;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            traj.times[i],
            m[0],
            m[1],
            m[2],
            m[3],
            m[4],
            m[5],
            traj.order_param[i],
            traj.trace_drift[i]
        )?;
    }
    out.flush()?;
    println!(
        "wrote {} steps to {} (final S = {:.6})",
        traj.times.len() - 1,
        a.output.display(),
        traj.order_param.last().unwrap()
    );
    Ok(())
}

fn figure_data(a: FigureDataArgs) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.output)?);
    match a.figure {
        FigureKind::EtaMu2d => {
            writeln!(out, "mu,eta,mu_prime")?;
            for i in 0..=400 {
                let mu = 0.999 * i as f64 / 400.0;
                let inv = circle::invert_mu(mu)?;
                let s = circle::forward_moments(inv.lambda)?;
                writeln!(out, "{},{},{}", mu, s.eta, s.eta - s.mu * s.mu)?;
            }
        }
        FigureKind::CoeffDecay2d | FigureKind::CoeffDecayUni => {
            let pieces = match (&a.table, a.figure) {
                (Some(p), FigureKind::CoeffDecay2d) => load(p)?.to_circle()?.pieces,
                (Some(p), _) => load(p)?.to_uniaxial()?.pieces,
                (None, FigureKind::CoeffDecay2d) => {
                    circle::build_table(&CircleBuildConfig::global())?.pieces
                }
                (None, _) => {
                    uniaxial::build_table_uni(&UniaxialBuildConfig::global())?.pieces
                }
            };
            let coeffs = &pieces[0].series.coeffs;
            writeln!(out, "k,abs_coeff,tail_l2_error")?;
            for (k, b) in coeffs.iter().enumerate() {
                writeln!(out, "{},{:e},{:e}", k, b.abs(), tail_residual_1d(coeffs, k))?;
            }
        }
        FigureKind::CoeffDecayBi => {
            let table = match &a.table {
                Some(p) => load(p)?.to_biaxial()?,
                None => biaxial::build_table_biaxial(&BiaxialBuildConfig::global())?,
            };
            let b = &table.blocks[0];
            writeln!(out, "m,shell_max_eta1,tail_eta1,shell_max_eta2,tail_eta2,shell_max_eta3,tail_eta3")?;
            let mmax = b.etas.iter().map(|s| s.n1.max(s.n2)).max().unwrap();
            for m in 0..=mmax {
                let mut cols = Vec::new();
                for s in &b.etas {
                    let mut shell = 0.0f64;
                    let mut tail2 = 0.0f64;
                    for i in 0..=s.n1 {
                        for j in 0..=s.n2 {
                            let c = s.coeffs[i * (s.n2 + 1) + j];
                            if i.max(j) == m {
                                shell = shell.max(c.abs());
                            }
                            if i.max(j) > m {
                                let g = 4.0 / ((2.0 * i as f64 + 1.0) * (2.0 * j as f64 + 1.0));
                                tail2 += c * c * g;
                            }
                        }
                    }
                    cols.push(format!("{:e},{:e}", shell, tail2.sqrt()));
                }
                writeln!(out, "{},{}", m, cols.join(","))?;
            }
        }
    }
    out.flush()?;
    println!("wrote {}", a.output.display());
    Ok(())
}
