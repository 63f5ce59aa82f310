//! Command-line driver: model loading, coefficient sweeps, direct
//! Bergman evaluation, expansion comparison, Riemann–Roch tables, the
//! local reproducing check, and a reduced self-test suite.
//!
//! Every numeric output comes from one library call; the CLI only
//! parses, schedules, and serializes. Identical configuration and seed
//! produce byte-identical files.
//!
//! Exit codes: 0 ok, 1 self-test failure, 2 configuration error,
//! 3 numerical domain error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use num_complex::Complex64;

use bergsym::bergman::{
    self, BergmanEngine, QuadratureRule, TestSection,
};
use bergsym::diastatic;
use bergsym::expansion;
use bergsym::geometry::{chart_from_model, curvature_pack, BundleKind, BundleModel};
use bergsym::numerics;
use bergsym::sympow;
use bergsym::{tol, CMatrix};

/// The sign and ordering conventions every output depends on; hashed
/// into file headers so tables from incompatible builds are detectable.
const CONVENTION_LEDGER: &str = "\
omega = sqrt(-1) g~ dy dz; h = e^{-phi}; H(y,z) = e^{-phi(y,z)}; \
eta = d1(H) H^{-1}; F~ = -d2(eta); sqrt(-1)LF = g~^{-1} F~; \
pairing <u,v> = u^T h conj(v); frame change h -> g^T h conj(g); \
D11 = -h^{-1/2} F~ h^{1/2}; kernel normalization 1/(2 pi); \
weak compositions ordered (k,0,..) .. (..,0,k)";

fn ledger_hash() -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in CONVENTION_LEDGER.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Parser)]
#[command(name = "bergsym", version, about = "Bergman kernels of symmetric powers on P^1 models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Model file path, or an inline JSON model specification.
    #[arg(long)]
    model: String,
    /// Single symmetric power k.
    #[arg(long, conflicts_with = "k_range")]
    k: Option<usize>,
    /// Inclusive range "a..b" of symmetric powers.
    #[arg(long)]
    k_range: Option<String>,
    /// Expansion depth N (coefficients b_0 .. b_N).
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Evaluation points "re,im;re,im;...".
    #[arg(long, default_value = "0.2,-0.1")]
    points: String,
    /// Radial Gauss-Legendre node count.
    #[arg(long, default_value_t = 96)]
    quad_radial: usize,
    /// Uniform angular node count.
    #[arg(long, default_value_t = 128)]
    quad_angular: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for every random draw; recorded in output headers.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Format echoed to stdout (files are always written as CSV plus a
    /// JSON mirror).
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Expansion coefficients b_{k,m}: closed form vs recursion.
    Coeffs(CommonArgs),
    /// Recursion coefficients only, to higher depth.
    Recursion(CommonArgs),
    /// Direct Bergman function samples.
    Bergman(CommonArgs),
    /// Direct Bergman function vs truncated expansion.
    Compare(CommonArgs),
    /// Riemann-Roch dimension table.
    Rr(CommonArgs),
    /// Local reproducing-kernel residuals.
    Reproduce(CommonArgs),
    /// Reduced invariant suite over all modules.
    Selftest {
        /// Only run invariants whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
        /// Negative control: flip the curvature sign in the diastatic
        /// link invariant; the suite must then fail.
        #[arg(long, hide = true)]
        flip_lambda_f: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

impl From<bergman::BergmanError> for CliError {
    fn from(e: bergman::BergmanError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
impl From<expansion::ExpansionError> for CliError {
    fn from(e: expansion::ExpansionError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
impl From<bergsym::geometry::GeometryError> for CliError {
    fn from(e: bergsym::geometry::GeometryError) -> Self {
        match e {
            bergsym::geometry::GeometryError::BadModel(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------
// Parsing helpers

fn load_model(spec: &str) -> Result<BundleModel, CliError> {
    let text = if Path::new(spec).is_file() {
        std::fs::read_to_string(spec).map_err(config_err)?
    } else if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        return Err(CliError::Config(format!(
            "--model {spec:?}: not a readable file and not inline JSON"
        )));
    };
    BundleModel::from_json(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn model_id(model: &BundleModel) -> String {
    match &model.kind {
        BundleKind::FsLine { d, epsilon } => format!("fs_line(d={d},eps={epsilon})"),
        BundleKind::DirectSum { summands } => {
            let parts: Vec<String> = summands
                .iter()
                .map(|s| format!("O({})e{}", s.d, s.epsilon))
                .collect();
            format!("direct_sum[{}]", parts.join("+"))
        }
        BundleKind::TwistedTrivial { a, r, epsilon } => {
            format!("twisted(a={a},r={r},eps={epsilon})")
        }
    }
}

fn parse_ks(args: &CommonArgs) -> Result<Vec<usize>, CliError> {
    if let Some(k) = args.k {
        return Ok(vec![k]);
    }
    let spec = args
        .k_range
        .as_deref()
        .ok_or_else(|| CliError::Config("need --k or --k-range".into()))?;
    let (a, b) = spec
        .split_once("..")
        .ok_or_else(|| CliError::Config(format!("--k-range {spec:?}: expected \"a..b\"")))?;
    let a: usize = a.trim().parse().map_err(config_err)?;
    let b: usize = b.trim().parse().map_err(config_err)?;
    if a == 0 || b < a {
        return Err(CliError::Config(format!("--k-range {spec:?} is empty")));
    }
    Ok((a..=b).collect())
}

fn parse_points(spec: &str) -> Result<Vec<Complex64>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(';') {
        let (re, im) = part
            .split_once(',')
            .ok_or_else(|| CliError::Config(format!("--points entry {part:?}: expected re,im")))?;
        out.push(Complex64::new(
            re.trim().parse().map_err(config_err)?,
            im.trim().parse().map_err(config_err)?,
        ));
    }
    if out.is_empty() {
        return Err(CliError::Config("--points is empty".into()));
    }
    Ok(out)
}

fn check_caps(model: &BundleModel, ks: &[usize], order: usize) -> Result<(), CliError> {
    if order > 4 {
        return Err(CliError::Config(format!("--order {order} exceeds the cap 4")));
    }
    let cap = if model.rank() >= 2 { 10 } else { 30 };
    for &k in ks {
        if k > cap {
            return Err(CliError::Config(format!(
                "k = {k} exceeds the cap {cap} for rank {}",
                model.rank()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Table output

struct Table {
    name: String,
    columns: Vec<&'static str>,
    rows: Vec<Vec<serde_json::Value>>,
}

fn num(v: f64) -> serde_json::Value {
    serde_json::json!(v)
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else {
                format!("{:.12e}", n.as_f64().unwrap())
            }
        }
        other => other.to_string(),
    }
}

fn write_table(
    table: &Table,
    args: &CommonArgs,
    command: &str,
    extra: Option<&serde_json::Value>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out).map_err(config_err)?;
    let mut csv = String::new();
    writeln!(csv, "# bergsym {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(csv, "# command {command}").unwrap();
    writeln!(csv, "# seed {}", args.seed).unwrap();
    writeln!(csv, "# ledger {:016x}", ledger_hash()).unwrap();
    writeln!(csv, "{}", table.columns.join(",")).unwrap();
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(csv_cell).collect();
        writeln!(csv, "{}", cells.join(",")).unwrap();
    }
    let csv_path = args.out.join(format!("{}.csv", table.name));
    std::fs::write(&csv_path, &csv).map_err(config_err)?;

    let mut json = serde_json::json!({
        "meta": {
            "tool": "bergsym",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": args.seed,
            "ledger": format!("{:016x}", ledger_hash()),
        },
        "columns": table.columns,
        "rows": table.rows,
    });
    if let Some(extra) = extra {
        json["extra"] = extra.clone();
    }
    let json_path = args.out.join(format!("{}.json", table.name));
    std::fs::write(&json_path, serde_json::to_string_pretty(&json).unwrap() + "\n")
        .map_err(config_err)?;

    if args.format == "json" {
        println!("{}", serde_json::to_string_pretty(&json).unwrap());
    } else {
        print!("{csv}");
    }
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn matrix_json(m: &CMatrix) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect();
    serde_json::json!(rows)
}

// ---------------------------------------------------------------------
// Commands

fn cmd_coeffs(args: &CommonArgs, recursion_only: bool) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let ks = parse_ks(args)?;
    let points = parse_points(&args.points)?;
    check_caps(&model, &ks, args.order)?;
    let id = model_id(&model);
    let order = (2 * args.order + 4).max(6);
    let mut rows = Vec::new();
    let mut matrices = Vec::new();
    for &x in &points {
        let chart = chart_from_model(&model, x, order)?;
        for &k in &ks {
            let table = expansion::coeff_recursion(&chart, k, args.order)?;
            let closed = if recursion_only {
                None
            } else {
                Some(expansion::closed_form_b0_b1(&chart, k)?)
            };
            for (m, bm) in table.b.iter().enumerate() {
                let rec_norm = numerics::op_norm(bm).map_err(|e| CliError::Numeric(e.to_string()))?;
                let mut row = vec![
                    serde_json::json!(id),
                    serde_json::json!(k),
                    num(x.re),
                    num(x.im),
                    serde_json::json!(m),
                    num(rec_norm),
                ];
                if !recursion_only {
                    let closed_m = closed.as_ref().and_then(|(b0, b1)| match m {
                        0 => Some(b0),
                        1 => Some(b1),
                        _ => None,
                    });
                    match closed_m {
                        Some(cm) => {
                            let cn = numerics::op_norm(cm)
                                .map_err(|e| CliError::Numeric(e.to_string()))?;
                            let agree = numerics::op_norm(&(bm - cm))
                                .map_err(|e| CliError::Numeric(e.to_string()))?
                                / cn.max(1.0);
                            row.push(num(cn));
                            row.push(num(agree));
                        }
                        None => {
                            row.push(serde_json::json!(""));
                            row.push(serde_json::json!(""));
                        }
                    }
                }
                rows.push(row);
                matrices.push(serde_json::json!({
                    "k": k, "m": m, "x": [x.re, x.im], "b": matrix_json(bm),
                }));
            }
        }
    }
    let (name, columns): (&str, Vec<&'static str>) = if recursion_only {
        ("recursion", vec!["model", "k", "x_re", "x_im", "m", "b_recursion_norm"])
    } else {
        (
            "coeffs",
            vec![
                "model",
                "k",
                "x_re",
                "x_im",
                "m",
                "b_recursion_norm",
                "b_closed_norm",
                "agreement",
            ],
        )
    };
    let table = Table {
        name: name.into(),
        columns,
        rows,
    };
    write_table(&table, args, name, Some(&serde_json::json!({ "matrices": matrices })))
}

fn cmd_bergman(args: &CommonArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let ks = parse_ks(args)?;
    let points = parse_points(&args.points)?;
    check_caps(&model, &ks, args.order)?;
    let quad = QuadratureRule::build(&model, args.quad_radial, args.quad_angular)?;
    let id = model_id(&model);
    let mut rows = Vec::new();
    for &k in &ks {
        let engine = BergmanEngine::new(&model, k, &quad)?;
        for &x in &points {
            let s = engine.sample(x)?;
            rows.push(vec![
                serde_json::json!(id),
                serde_json::json!(k),
                num(x.re),
                num(x.im),
                num(s.op_norm),
                num(s.trace),
                serde_json::json!(s.d_k),
            ]);
        }
    }
    let table = Table {
        name: "bergman".into(),
        columns: vec!["model", "k", "x_re", "x_im", "op_norm", "trace", "d_k"],
        rows,
    };
    write_table(&table, args, "bergman", None)
}

fn cmd_compare(args: &CommonArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let ks = parse_ks(args)?;
    let points = parse_points(&args.points)?;
    check_caps(&model, &ks, args.order)?;
    let quad = QuadratureRule::build(&model, args.quad_radial, args.quad_angular)?;
    let id = model_id(&model);
    let rows = bergman::compare_expansion(&model, &ks, &points, args.order, &quad)?;
    let table = Table {
        name: "compare".into(),
        columns: vec![
            "model",
            "k",
            "x_re",
            "x_im",
            "residual_op_norm",
            "b0k_norm",
            "fitted_exponent",
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    serde_json::json!(id),
                    serde_json::json!(r.k),
                    num(r.x.re),
                    num(r.x.im),
                    num(r.residual_op_norm),
                    num(r.b0k_norm),
                    num(r.fitted_exponent),
                ]
            })
            .collect(),
    };
    write_table(&table, args, "compare", None)?;

    // Plot data: one (point, k, log-residual) series per point.
    let plot = Table {
        name: "compare_plot".into(),
        columns: vec!["point", "k", "log10_residual"],
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    serde_json::json!(i % points.len()),
                    serde_json::json!(r.k),
                    num(r.residual_op_norm.max(1e-300).log10()),
                ]
            })
            .collect(),
    };
    write_table(&plot, args, "compare", None)
}

fn cmd_rr(args: &CommonArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let ks = parse_ks(args)?;
    let quad = QuadratureRule::build(&model, args.quad_radial, args.quad_angular)?;
    let id = model_id(&model);
    let recs = bergman::riemann_roch_sweep(&model, &ks, &quad)?;
    let table = Table {
        name: "rr".into(),
        columns: vec!["model", "k", "d_k", "predicted", "error", "error_times_k_over_rk"],
        rows: recs
            .iter()
            .map(|r| {
                vec![
                    serde_json::json!(id),
                    serde_json::json!(r.k),
                    serde_json::json!(r.d_k),
                    num(r.predicted),
                    num(r.error),
                    num(r.error * r.k as f64 / r.r_k as f64),
                ]
            })
            .collect(),
    };
    write_table(
        &table,
        args,
        "rr",
        Some(&serde_json::json!({
            "c1": recs.first().map(|r| r.c1),
            "c2": recs.first().map(|r| r.c2),
        })),
    )
}

fn default_test_sections(r_k: usize, count: usize, rng: &mut impl rand::Rng) -> Vec<TestSection> {
    (0..count)
        .map(|_| {
            (0..r_k)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn cmd_reproduce(args: &CommonArgs) -> Result<(), CliError> {
    use rand::SeedableRng;
    let model = load_model(&args.model)?;
    let ks = parse_ks(args)?;
    let points = parse_points(&args.points)?;
    check_caps(&model, &ks, args.order)?;
    let id = model_id(&model);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let r_k0 = sympow::weak_compositions(ks[0], model.rank()).r_k();
    let sections = default_test_sections(r_k0, 3, &mut rng);
    let mut rows = Vec::new();
    for &k in &ks {
        if sympow::weak_compositions(k, model.rank()).r_k() != r_k0 {
            return Err(CliError::Config(
                "reproduce needs a rank-1 model for a k sweep (section shapes change with k otherwise)"
                    .into(),
            ));
        }
        for &x in &points {
            let res = bergman::reproducing_check(&model, k, args.order, x, &sections)?;
            for (j, r) in res.iter().enumerate() {
                rows.push(vec![
                    serde_json::json!(id),
                    serde_json::json!(k),
                    num(x.re),
                    num(x.im),
                    serde_json::json!(j),
                    num(*r),
                ]);
            }
        }
    }
    let table = Table {
        name: "reproduce".into(),
        columns: vec!["model", "k", "x_re", "x_im", "section", "residual"],
        rows,
    };
    write_table(&table, args, "reproduce", None)
}

// ---------------------------------------------------------------------
// Self-test

struct Invariant {
    name: &'static str,
    run: Box<dyn Fn() -> Result<(), String>>,
}

fn selftest_suite(seed: u64, flip_lambda_f: bool) -> Vec<Invariant> {
    use rand::SeedableRng;
    let mut suite: Vec<Invariant> = Vec::new();
    let mut push = |name: &'static str, run: Box<dyn Fn() -> Result<(), String>>| {
        suite.push(Invariant { name, run });
    };

    push(
        "numerics.expm_logm_roundtrip",
        Box::new(move || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..5 {
                let a = CMatrix::from_fn(3, 3, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let h = (&a + a.adjoint()).scale(0.5);
                let e = numerics::expm_hermitian(&h).map_err(|e| e.to_string())?;
                let l = numerics::logm_hermitian_pd(&e).map_err(|e| e.to_string())?;
                let defect = numerics::max_abs(&(&l - &h));
                if defect > 1e-9 {
                    return Err(format!("roundtrip defect {defect:.3e}"));
                }
            }
            Ok(())
        }),
    );

    push(
        "sympow.lift_exponential_functoriality",
        Box::new(move || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 1);
            let a = CMatrix::from_fn(2, 2, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let k = 3;
            let lhs = numerics::expm(&sympow::s_k_lift(&a, k)).map_err(|e| e.to_string())?;
            let rhs = sympow::sym_pow_matrix(
                &numerics::expm(&a).map_err(|e| e.to_string())?,
                k,
            );
            let defect = numerics::max_abs(&(&lhs - &rhs));
            if defect > 1e-9 {
                return Err(format!("functoriality defect {defect:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "geometry.fs_curvature_is_degree",
        Box::new(|| {
            let chart = chart_from_model(&BundleModel::fs_line(2, 0.0), Complex64::new(0.3, -0.1), 4)
                .map_err(|e| e.to_string())?;
            let pack = curvature_pack(&chart).map_err(|e| e.to_string())?;
            let v = pack.lambda_f.constant_term()[(0, 0)];
            if (v - Complex64::new(2.0, 0.0)).norm() > 1e-9 {
                return Err(format!("sqrt(-1)LF = {v} for O(2), want 2"));
            }
            Ok(())
        }),
    );

    push(
        "geometry.griffiths_positivity",
        Box::new(|| {
            let min = bergsym::geometry::griffiths_min(&BundleModel::twisted_trivial(1, 2, 0.1), 16)
                .map_err(|e| e.to_string())?;
            if min <= tol::GRIFFITHS_MIN {
                return Err(format!("min eigenvalue {min:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "diastatic.pure_parts_vanish",
        Box::new(|| {
            let chart = chart_from_model(
                &BundleModel::twisted_trivial(1, 2, 0.2),
                Complex64::new(0.1, 0.2),
                6,
            )
            .map_err(|e| e.to_string())?;
            let d = diastatic::diastasis_jet(&chart).map_err(|e| e.to_string())?;
            let norm = d.pure_part_norm();
            if norm > 1e-9 {
                return Err(format!("pure-part norm {norm:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "diastatic.curvature_link",
        Box::new(move || {
            // D_{1,1} = -h^{-1/2} F~ h^{1/2} at the center.
            let model = BundleModel::twisted_trivial(2, 2, 0.2);
            let center = Complex64::new(0.1, 0.4);
            let chart = chart_from_model(&model, center, 6).map_err(|e| e.to_string())?;
            let d = diastatic::diastasis_jet(&chart).map_err(|e| e.to_string())?;
            let d11 = d.d_jet.coeff(&[1, 1]);
            let pack = curvature_pack(&chart).map_err(|e| e.to_string())?;
            let f0 = pack.f_tilde.constant_term();
            let h0 = model.metric_at(center);
            let h_half = numerics::hermitian_map(&h0, f64::sqrt).map_err(|e| e.to_string())?;
            let h_half_inv =
                numerics::hermitian_map(&h0, |x| 1.0 / x.sqrt()).map_err(|e| e.to_string())?;
            let sign = if flip_lambda_f { 1.0 } else { -1.0 };
            let want = (&h_half_inv * f0 * &h_half).scale(sign);
            let defect = numerics::max_abs(&(d11 - want));
            if defect > 1e-9 {
                return Err(format!("link defect {defect:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "expansion.recursion_vs_closed_form",
        Box::new(|| {
            let chart = chart_from_model(
                &BundleModel::twisted_trivial(1, 2, 0.2),
                Complex64::new(0.1, 0.1),
                8,
            )
            .map_err(|e| e.to_string())?;
            let k = 2;
            let table = expansion::coeff_recursion(&chart, k, 1).map_err(|e| e.to_string())?;
            let (b0, b1) = expansion::closed_form_b0_b1(&chart, k).map_err(|e| e.to_string())?;
            let d0 = numerics::max_abs(&(&table.b[0] - &b0));
            let d1 = numerics::max_abs(&(&table.b[1] - &b1));
            if d0.max(d1) > tol::RECURSION_VS_CLOSED {
                return Err(format!("defects {d0:.3e}, {d1:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "expansion.hermitian_einstein_scalar",
        Box::new(|| {
            let chart = chart_from_model(
                &BundleModel::twisted_trivial(2, 2, 0.0),
                Complex64::new(0.2, -0.3),
                8,
            )
            .map_err(|e| e.to_string())?;
            let table = expansion::coeff_recursion(&chart, 3, 1).map_err(|e| e.to_string())?;
            let rk = table.b[0].nrows();
            let want0 = numerics::identity(rk).scale(2.0);
            let want1 = numerics::identity(rk);
            let d0 = numerics::max_abs(&(&table.b[0] - want0));
            let d1 = numerics::max_abs(&(&table.b[1] - want1));
            if d0.max(d1) > 1e-8 {
                return Err(format!("HE defects {d0:.3e}, {d1:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "bergman.quadrature_volume",
        Box::new(|| {
            let model = BundleModel::fs_line(1, 0.0);
            let quad = QuadratureRule::build(&model, 48, 32).map_err(|e| e.to_string())?;
            let got = quad.total_volume();
            let want = 2.0 * std::f64::consts::PI;
            if (got - want).abs() > 1e-10 {
                return Err(format!("volume {got} vs {want}"));
            }
            Ok(())
        }),
    );

    push(
        "bergman.fs_constancy",
        Box::new(|| {
            let model = BundleModel::fs_line(1, 0.0);
            let quad = QuadratureRule::build(&model, 48, 32).map_err(|e| e.to_string())?;
            let engine = BergmanEngine::new(&model, 3, &quad).map_err(|e| e.to_string())?;
            let want = 4.0 / (2.0 * std::f64::consts::PI);
            for x in [Complex64::new(0.0, 0.0), Complex64::new(0.8, -0.4)] {
                let s = engine.sample(x).map_err(|e| e.to_string())?;
                if (s.op_norm - want).abs() > 1e-8 {
                    return Err(format!("B({x}) = {} vs {want}", s.op_norm));
                }
            }
            Ok(())
        }),
    );

    push(
        "bergman.trace_identity",
        Box::new(|| {
            let model = BundleModel::twisted_trivial(1, 2, 0.2);
            let quad = QuadratureRule::build(&model, 48, 32).map_err(|e| e.to_string())?;
            let refined = QuadratureRule::build(&model, 72, 48).map_err(|e| e.to_string())?;
            let engine = BergmanEngine::new(&model, 2, &quad).map_err(|e| e.to_string())?;
            let defect =
                bergman::trace_identity_defect(&engine, &refined).map_err(|e| e.to_string())?;
            if defect.abs() > 1e-5 {
                return Err(format!("trace defect {defect:.3e}"));
            }
            Ok(())
        }),
    );

    push(
        "bergman.compare_decay",
        Box::new(|| {
            let model = BundleModel::fs_line(1, 0.3);
            let quad = QuadratureRule::build(&model, 64, 64).map_err(|e| e.to_string())?;
            let rows = bergman::compare_expansion(
                &model,
                &[6, 12],
                &[Complex64::new(0.25, 0.0)],
                1,
                &quad,
            )
            .map_err(|e| e.to_string())?;
            if rows[1].residual_op_norm >= rows[0].residual_op_norm {
                return Err(format!(
                    "no decay: {:.3e} -> {:.3e}",
                    rows[0].residual_op_norm, rows[1].residual_op_norm
                ));
            }
            Ok(())
        }),
    );

    suite
}

fn cmd_selftest(filter: Option<&str>, seed: u64, flip_lambda_f: bool) -> Result<(), CliError> {
    let suite = selftest_suite(seed, flip_lambda_f);
    let mut failures = 0usize;
    let mut ran = 0usize;
    for inv in &suite {
        if let Some(f) = filter {
            if !inv.name.contains(f) {
                continue;
            }
        }
        ran += 1;
        let start = Instant::now();
        match (inv.run)() {
            Ok(()) => println!("ok   {:40} {:>8.1} ms", inv.name, start.elapsed().as_secs_f64() * 1e3),
            Err(msg) => {
                failures += 1;
                println!(
                    "FAIL {:40} {:>8.1} ms  {msg}",
                    inv.name,
                    start.elapsed().as_secs_f64() * 1e3
                );
            }
        }
    }
    if ran == 0 {
        return Err(CliError::Config(format!(
            "--filter {:?} matched no invariant",
            filter.unwrap_or("")
        )));
    }
    println!("selftest: {} run, {} failed", ran, failures);
    if failures > 0 {
        // Distinct from config/numeric errors: exit code 1.
        std::process::exit(1);
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Coeffs(args) => cmd_coeffs(args, false),
        Command::Recursion(args) => cmd_coeffs(args, true),
        Command::Bergman(args) => cmd_bergman(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Rr(args) => cmd_rr(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::Selftest {
            filter,
            flip_lambda_f,
            seed,
        } => cmd_selftest(filter.as_deref(), *seed, *flip_lambda_f),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
