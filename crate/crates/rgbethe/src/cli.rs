//! Command-line front end.
//!
//! Structured results are emitted as JSON with a fixed field order and
//! 17-significant-digit floats, so identical requests produce byte-identical
//! output; trajectories are emitted as CSV. Exit codes: 0 success, 1 input
//! error, 2 numerical failure.

use std::fmt::Write as _;
use std::io::Write as _;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::detforms::{
    ff_boson_pip, ff_number_pip, ff_raise_pip, norm_dicke, norm_pip, overlap_dicke, overlap_pip,
};
use crate::models::{charge_eigenvalues, sector_dimension, ModelFile, ModelSpec, ModelVariant};
use crate::oracle::{
    build_operator, build_raising, build_sector_basis, charge_eigenpairs, compare_solution,
    OperatorId, RaisingId,
};
use crate::solver::{
    continuation_xi, enumerate_states, lambda_kappa_derivative, solve_from_partition,
    solve_pattern, xi_rg_residual, BetheSolution, ContinuationOptions, SolveConfig, SolverError,
};

#[derive(Parser)]
#[command(
    name = "rgbethe",
    version,
    about = "Richardson-Gaudin solvers for spin models coupled to a bosonic mode",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model description file (JSON).
    #[arg(long)]
    model: String,
    /// Override the excitation number from the model file.
    #[arg(long)]
    n: Option<usize>,
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<String>,
    /// Newton tolerance on max-norm residuals.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single eigenstate labeled by its weak-coupling pattern.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Occupied spin levels at weak coupling, e.g. "0,2" (empty for the
        /// bosonic/vacuum pattern).
        #[arg(long, default_value = "")]
        pattern: String,
    },
    /// Solve the complete excitation sector.
    Enumerate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the pseudo-deformation parameter from the Dicke limit (ξ=0) to
    /// the XXZ limit (ξ=1); emits a CSV trajectory.
    Continuation {
        #[command(flatten)]
        common: Common,
        /// Secular-root indices (ascending order, repetition = multiplicity).
        #[arg(long, value_name = "SPEC")]
        seed_partition: String,
        /// Nominal number of ξ steps (sets the initial step to 1/steps).
        #[arg(long, default_value_t = 50)]
        xi_steps: usize,
        /// Pseudo-spin of the deformed level.
        #[arg(long, default_value_t = 0.5)]
        s0: f64,
        /// Sweep direction: reverse runs ξ from 1 to 0 (seeded at ξ=1 by a
        /// forward pass).
        #[arg(long, default_value_t = false)]
        reverse: bool,
    },
    /// Basis overlaps of one enumerated eigenstate (Dicke and p+ip).
    Overlap {
        #[command(flatten)]
        common: Common,
        /// Index into the enumerated (deterministically ordered) states.
        #[arg(long)]
        state: usize,
    },
    /// Norms of all enumerated eigenstates (Dicke and p+ip).
    Norm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        state: Option<usize>,
    },
    /// Determinant form factors between enumerated (p+ip) eigenstates.
    Formfactor {
        #[command(flatten)]
        common: Common,
        /// One of raise | boson | number.
        #[arg(long)]
        op: String,
        /// Level index for the raise operator.
        #[arg(long)]
        k: Option<usize>,
        /// Bra state index (N sector).
        #[arg(long)]
        bra: usize,
        /// Ket state index (N−1 sector for raise/boson, N for number).
        #[arg(long)]
        ket: usize,
    },
    /// Cross-check the solver against the exact-diagonalization oracle.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Optional JSON state file (enumerate output) to validate instead
        /// of solving in-process.
        #[arg(long)]
        states: Option<String>,
    },
    /// Time determinant-route norms against the ED route for growing m.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of level counts.
        #[arg(long, default_value = "4,6,8,10,12")]
        m_list: String,
    },
}

/// 17 significant digits; round-trips exactly through parsing. Non-finite
/// values map to JSON null.
fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        "null".into()
    }
}

struct Output {
    path: Option<String>,
}

impl Output {
    fn write(&self, text: &str) -> Result<(), CliError> {
        match &self.path {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| CliError::Input(format!("cannot write {p}: {e}"))),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::Input(format!("stdout: {e}")))
            }
        }
    }
}

enum CliError {
    /// Malformed input: exit code 1.
    Input(String),
    /// Numerical failure: exit code 2.
    Numerical(String),
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

pub fn run() -> i32 {
    if let Ok(threads) = std::env::var("RGBETHE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve { common, pattern } => cmd_solve(&common, &pattern),
        Command::Enumerate { common } => cmd_enumerate(&common),
        Command::Continuation {
            common,
            seed_partition,
            xi_steps,
            s0,
            reverse,
        } => cmd_continuation(&common, &seed_partition, xi_steps, s0, reverse),
        Command::Overlap { common, state } => cmd_overlap(&common, state),
        Command::Norm { common, state } => cmd_norm(&common, state),
        Command::Formfactor {
            common,
            op,
            k,
            bra,
            ket,
        } => cmd_formfactor(&common, &op, k, bra, ket),
        Command::Validate { common, states } => cmd_validate(&common, states.as_deref()),
        Command::Bench { common, m_list } => cmd_bench(&common, &m_list),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

struct Request {
    model: ModelSpec,
    n: usize,
    config: SolveConfig,
    out: Output,
}

fn load(common: &Common) -> Result<Request, CliError> {
    let text = std::fs::read_to_string(&common.model)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", common.model)))?;
    let file = ModelFile::parse(&text).map_err(CliError::Input)?;
    let model = file.build().map_err(CliError::Input)?;
    let mut config = SolveConfig::default();
    if let Some(tol) = common.tol {
        if tol <= 0.0 || !tol.is_finite() {
            return Err(CliError::Input("tolerance must be positive".into()));
        }
        config.newton_tol = tol;
    }
    Ok(Request {
        model,
        n: common.n.unwrap_or(file.n),
        config,
        out: Output {
            path: common.out.clone(),
        },
    })
}

fn state_record(out: &mut String, state_id: usize, sol: &BetheSolution) {
    write!(out, "{{\"state_id\":{state_id},\"lambdas\":[").unwrap();
    for (i, l) in sol.lambdas.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f(*l));
    }
    out.push(']');
    if let Some(l0) = sol.lambda0 {
        write!(out, ",\"lambda0\":{}", fmt_f(l0)).unwrap();
    }
    out.push_str(",\"charges\":[");
    for (i, r) in sol.charges.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f(*r));
    }
    out.push(']');
    write!(
        out,
        ",\"residual_lambda\":{}",
        fmt_f(sol.residual_lambda.unwrap_or(f64::NAN))
    )
    .unwrap();
    out.push('}');
}

fn cmd_solve(common: &Common, pattern: &str) -> Result<(), CliError> {
    let req = load(common)?;
    let pattern = parse_index_list(pattern)?;
    let sol = solve_pattern(&req.model, req.n, &pattern, &req.config)?;
    let mut out = String::new();
    state_record(&mut out, 0, &sol);
    out.push('\n');
    req.out.write(&out)
}

fn cmd_enumerate(common: &Common) -> Result<(), CliError> {
    let req = load(common)?;
    match enumerate_states(&req.model, req.n, &req.config) {
        Ok(states) => {
            let mut out = String::from("[");
            for (i, s) in states.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                state_record(&mut out, i, s);
            }
            out.push_str("\n]\n");
            req.out.write(&out)
        }
        Err(SolverError::IncompleteEnumeration {
            found,
            expected,
            failures,
        }) => {
            let mut out = String::new();
            write!(
                out,
                "{{\"error\":\"incomplete enumeration\",\"found\":{found},\"expected\":{expected},\"failures\":["
            )
            .unwrap();
            for (i, (pattern, reason)) in failures.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{{\"pattern\":{pattern:?},\"reason\":{reason:?}}}").unwrap();
            }
            out.push_str("]}\n");
            req.out.write(&out)?;
            Err(CliError::Numerical(format!(
                "enumeration found {found} of {expected} states"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_index_list(text: &str) -> Result<Vec<usize>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("bad index {tok:?} in list")))
        })
        .collect()
}

fn cmd_continuation(
    common: &Common,
    seed_partition: &str,
    xi_steps: usize,
    s0: f64,
    reverse: bool,
) -> Result<(), CliError> {
    let req = load(common)?;
    if req.model.variant != ModelVariant::Dicke {
        return Err(CliError::Input(
            "continuation is defined for the Dicke family".into(),
        ));
    }
    if xi_steps == 0 {
        return Err(CliError::Input("xi-steps must be positive".into()));
    }
    let partition = parse_index_list(seed_partition)?;
    let mut config = req.config.clone();
    config.newton_tol = config.newton_tol.max(1e-10);
    config.step.initial = 1.0 / xi_steps as f64;
    let start = solve_from_partition(&req.model, req.n, &partition, &config)?;
    let start_raps = start.rapidities.as_ref().expect("rapidity solve");
    let forward = ContinuationOptions {
        s0,
        xi_start: 0.0,
        xi_end: 1.0,
        max_bridges: 8,
    };
    let path = match continuation_xi(&req.model, req.n, start_raps, &forward, &config) {
        Ok(p) => p,
        Err(SolverError::PathStalled { xi }) => {
            return Err(CliError::Numerical(format!(
                "continuation stalled; last good xi = {}",
                fmt_f(xi)
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let path = if reverse {
        let (end, _) = path.endpoint();
        let backward = ContinuationOptions {
            s0,
            xi_start: 1.0,
            xi_end: 0.0,
            max_bridges: 8,
        };
        match continuation_xi(&req.model, req.n, end, &backward, &config) {
            Ok(p) => p,
            Err(SolverError::PathStalled { xi }) => {
                return Err(CliError::Numerical(format!(
                    "continuation stalled; last good xi = {}",
                    fmt_f(xi)
                )))
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        path
    };
    let mut out = String::from("xi");
    for a in 0..req.n {
        write!(out, ",re_x{},im_x{}", a + 1, a + 1).unwrap();
    }
    out.push_str(",flag\n");
    for (i, xi) in path.xi_samples.iter().enumerate() {
        out.push_str(&fmt_f(*xi));
        for x in &path.rapidity_snapshots[i] {
            write!(out, ",{},{}", fmt_f(x.re), fmt_f(x.im)).unwrap();
        }
        writeln!(out, ",{}", if path.converged[i] { 0 } else { 1 }).unwrap();
    }
    req.out.write(&out)
}

fn enumerate_sorted(req: &Request) -> Result<Vec<BetheSolution>, CliError> {
    enumerate_states(&req.model, req.n, &req.config).map_err(|e| e.into())
}

fn cmd_overlap(common: &Common, state: usize) -> Result<(), CliError> {
    let req = load(common)?;
    let states = enumerate_sorted(&req)?;
    let sol = states
        .get(state)
        .ok_or_else(|| CliError::Input(format!("state {state} of {}", states.len())))?;
    let basis =
        build_sector_basis(&req.model, req.n).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut out = String::from("[");
    for (i, b) in basis.states.iter().enumerate() {
        let value = match req.model.variant {
            ModelVariant::Dicke => overlap_dicke(&req.model, sol, b),
            ModelVariant::PipBoson => overlap_pip(&req.model, sol, b),
            ModelVariant::XxzSpin => {
                return Err(CliError::Input(
                    "overlap command covers the bosonic models; xxz overlaps need rapidities"
                        .into(),
                ))
            }
        }
        .map_err(|e| CliError::Numerical(e.to_string()))?;
        if i > 0 {
            out.push(',');
        }
        write!(
            out,
            "\n{{\"boson\":{},\"occupations\":{:?},\"value\":{}}}",
            b.boson,
            b.occupations,
            fmt_f(value.real())
        )
        .unwrap();
    }
    out.push_str("\n]\n");
    req.out.write(&out)
}

fn cmd_norm(common: &Common, state: Option<usize>) -> Result<(), CliError> {
    let req = load(common)?;
    let states = enumerate_sorted(&req)?;
    let pick: Vec<usize> = match state {
        Some(s) if s < states.len() => vec![s],
        Some(s) => return Err(CliError::Input(format!("state {s} of {}", states.len()))),
        None => (0..states.len()).collect(),
    };
    let mut out = String::from("[");
    for (j, &i) in pick.iter().enumerate() {
        let norm = match req.model.variant {
            ModelVariant::Dicke => norm_dicke(&req.model, &states[i]),
            ModelVariant::PipBoson => norm_pip(&req.model, &states[i]),
            ModelVariant::XxzSpin => {
                return Err(CliError::Input(
                    "norm command covers the bosonic models".into(),
                ))
            }
        }
        .map_err(|e| CliError::Numerical(e.to_string()))?;
        if j > 0 {
            out.push(',');
        }
        write!(
            out,
            "\n{{\"state_id\":{i},\"norm\":{}}}",
            fmt_f(norm.real())
        )
        .unwrap();
    }
    out.push_str("\n]\n");
    req.out.write(&out)
}

fn cmd_formfactor(
    common: &Common,
    op: &str,
    k: Option<usize>,
    bra: usize,
    ket: usize,
) -> Result<(), CliError> {
    let req = load(common)?;
    if req.model.variant != ModelVariant::PipBoson {
        return Err(CliError::Input(
            "form factors are implemented for the (p+ip) model".into(),
        ));
    }
    let states_n = enumerate_sorted(&req)?;
    let sol_bra = states_n
        .get(bra)
        .ok_or_else(|| CliError::Input(format!("bra {bra} of {}", states_n.len())))?;
    let mut out = String::new();
    match op {
        "raise" | "boson" => {
            if req.n == 0 {
                return Err(CliError::Input(
                    "raise/boson form factors need N >= 1".into(),
                ));
            }
            let lower = Request {
                model: req.model.clone(),
                n: req.n - 1,
                config: req.config.clone(),
                out: Output { path: None },
            };
            let states_m = enumerate_sorted(&lower)?;
            let sol_ket = states_m
                .get(ket)
                .ok_or_else(|| CliError::Input(format!("ket {ket} of {}", states_m.len())))?;
            let report = if op == "raise" {
                let k = k.ok_or_else(|| CliError::Input("raise needs --k <level>".into()))?;
                ff_raise_pip(&req.model, sol_bra, sol_ket, k)
            } else {
                ff_boson_pip(&req.model, sol_bra, sol_ket)
            }
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            writeln!(
                out,
                "{{\"op\":{op:?},\"k\":{},\"bra\":{bra},\"ket\":{ket},\"value\":{}}}",
                k.map(|v| v.to_string()).unwrap_or_else(|| "null".into()),
                fmt_f(report.real())
            )
            .unwrap();
        }
        "number" => {
            let sol_ket = states_n
                .get(ket)
                .ok_or_else(|| CliError::Input(format!("ket {ket} of {}", states_n.len())))?;
            let ff = ff_number_pip(&req.model, sol_ket, sol_bra)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            write!(
                out,
                "{{\"op\":\"number\",\"bra\":{bra},\"ket\":{ket},\"spin_z\":["
            )
            .unwrap();
            for (i, v) in ff.spin_z.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_f(*v));
            }
            writeln!(out, "],\"boson\":{}}}", fmt_f(ff.boson)).unwrap();
        }
        other => return Err(CliError::Input(format!("unknown operator {other:?}"))),
    }
    req.out.write(&out)
}

struct Check {
    name: &'static str,
    max_dev: f64,
    tol: f64,
}

impl Check {
    fn pass(&self) -> bool {
        self.max_dev <= self.tol
    }
}

fn cmd_validate(common: &Common, states_path: Option<&str>) -> Result<(), CliError> {
    let req = load(common)?;
    let model = &req.model;
    let n = req.n;
    if sector_dimension(model, n) > crate::oracle::SECTOR_CAP {
        return Err(CliError::Input(
            "sector dimension exceeds the oracle cap".into(),
        ));
    }
    let states: Vec<BetheSolution> = match states_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {path}: {e}")))?;
            parse_states(model, n, &text)?
        }
        None => enumerate_sorted(&req)?,
    };
    let mut checks: Vec<Check> = Vec::new();

    let basis = build_sector_basis(model, n).map_err(|e| CliError::Numerical(e.to_string()))?;
    let pairs = charge_eigenpairs(&basis).map_err(|e| CliError::Numerical(e.to_string()))?;

    // spectrum: bijective charge-tuple match
    let mut spectrum_dev: f64 = 0.0;
    let mut used = vec![false; pairs.len()];
    let mut matched_index = Vec::with_capacity(states.len());
    for s in &states {
        match compare_solution(&pairs, &s.charges, None, 1e-4) {
            Ok(rep) if !used[rep.index] => {
                used[rep.index] = true;
                matched_index.push(Some(rep.index));
                spectrum_dev = spectrum_dev.max(rep.max_charge_dev);
            }
            _ => {
                matched_index.push(None);
                spectrum_dev = f64::INFINITY;
            }
        }
    }
    if states.len() != pairs.len() {
        spectrum_dev = f64::INFINITY;
    }
    checks.push(Check {
        name: "spectrum_match",
        max_dev: spectrum_dev,
        tol: 1e-8,
    });

    if model.variant != ModelVariant::XxzSpin {
        // norms against Parseval resummation of determinant overlaps, and
        // overlap vectors against ED eigenvectors
        let mut norm_dev: f64 = 0.0;
        let mut angle_dev: f64 = 0.0;
        for (s, matched) in states.iter().zip(&matched_index) {
            let norm = match model.variant {
                ModelVariant::Dicke => norm_dicke(model, s),
                ModelVariant::PipBoson => norm_pip(model, s),
                ModelVariant::XxzSpin => unreachable!(),
            }
            .map_err(|e| CliError::Numerical(e.to_string()))?
            .real();
            let mut amps = nalgebra::DVector::zeros(basis.dim());
            for (i, b) in basis.states.iter().enumerate() {
                let v = match model.variant {
                    ModelVariant::Dicke => overlap_dicke(model, s, b),
                    ModelVariant::PipBoson => overlap_pip(model, s, b),
                    ModelVariant::XxzSpin => unreachable!(),
                }
                .map_err(|e| CliError::Numerical(e.to_string()))?
                .real();
                amps[i] = v;
            }
            let parseval: f64 = amps.iter().map(|a| a * a).sum();
            norm_dev = norm_dev.max((norm - parseval).abs() / parseval.abs().max(1.0));
            if let Some(idx) = matched {
                let overlap = (pairs[*idx].vector.transpose() * &amps)[(0, 0)].abs() / amps.norm();
                angle_dev = angle_dev.max(1.0 - overlap);
            } else {
                angle_dev = f64::INFINITY;
            }
        }
        checks.push(Check {
            name: "norm_parseval",
            max_dev: norm_dev,
            tol: 1e-8,
        });
        checks.push(Check {
            name: "eigenvector_alignment",
            max_dev: angle_dev,
            tol: 1e-8,
        });
    }

    if model.variant == ModelVariant::PipBoson {
        // sum rule and Hellmann-Feynman derivative consistency
        let spin_sum: f64 = model.spins.iter().sum();
        let mut sum_dev: f64 = 0.0;
        let mut hf_dev: f64 = 0.0;
        for s in &states {
            let ff = ff_number_pip(model, s, s).map_err(|e| CliError::Numerical(e.to_string()))?;
            let total = ff.boson + ff.spin_z.iter().sum::<f64>();
            sum_dev = sum_dev.max((total - (n as f64 - spin_sum)).abs());

            let dlam = lambda_kappa_derivative(model, n, &s.lambdas)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let fd = kappa_fd_derivative(model, n, &s.lambdas, &req.config)?;
            for (a, b) in dlam.iter().zip(&fd) {
                hf_dev = hf_dev.max((a - b).abs() / (1.0 + a.abs()));
            }
        }
        checks.push(Check {
            name: "number_sum_rule",
            max_dev: sum_dev,
            tol: 1e-8,
        });
        checks.push(Check {
            name: "hellmann_feynman",
            max_dev: hf_dev,
            tol: 1e-5,
        });

        // raising/lowering and boson form factors against the ED route
        if n >= 1 {
            let lower_states = enumerate_states(model, n - 1, &req.config)?;
            let basis_m =
                build_sector_basis(model, n - 1).map_err(|e| CliError::Numerical(e.to_string()))?;
            let mut ff_dev: f64 = 0.0;
            for s in states.iter().take(4) {
                let ns = norm_pip(model, s).map_err(|e| CliError::Numerical(e.to_string()))?;
                for t in lower_states.iter().take(4) {
                    let nt = norm_pip(model, t).map_err(|e| CliError::Numerical(e.to_string()))?;
                    let scale = (ns.real() * nt.real()).sqrt();
                    let va = overlap_vector(model, s, &basis)?;
                    let vb = overlap_vector(model, t, &basis_m)?;
                    for kk in 0..model.num_levels() {
                        let op = build_raising(&basis, &basis_m, RaisingId::SpinRaise(kk))
                            .map_err(|e| CliError::Numerical(e.to_string()))?;
                        let direct = (va.transpose() * &op * &vb)[(0, 0)];
                        let det = ff_raise_pip(model, s, t, kk)
                            .map_err(|e| CliError::Numerical(e.to_string()))?;
                        ff_dev = ff_dev.max((direct - det.real()).abs() / scale);
                    }
                    let op = build_raising(&basis, &basis_m, RaisingId::BosonCreate)
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    let direct = (va.transpose() * &op * &vb)[(0, 0)];
                    let det = ff_boson_pip(model, s, t)
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    ff_dev = ff_dev.max((direct - det.real()).abs() / scale);
                }
            }
            checks.push(Check {
                name: "ladder_form_factors",
                max_dev: ff_dev,
                tol: 1e-7,
            });
        }
    }

    let all_pass = checks.iter().all(Check::pass);
    let mut out = String::from("{\"checks\":[");
    for (i, c) in checks.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(
            out,
            "\n{{\"name\":{:?},\"pass\":{},\"max_dev\":{},\"tol\":{}}}",
            c.name,
            c.pass(),
            fmt_f(c.max_dev),
            fmt_f(c.tol)
        )
        .unwrap();
    }
    writeln!(out, "\n],\"pass\":{all_pass}}}").unwrap();
    req.out.write(&out)?;
    if all_pass {
        Ok(())
    } else {
        let failing: Vec<&str> = checks
            .iter()
            .filter(|c| !c.pass())
            .map(|c| c.name)
            .collect();
        Err(CliError::Numerical(format!(
            "validation failed: {}",
            failing.join(", ")
        )))
    }
}

fn overlap_vector(
    model: &ModelSpec,
    sol: &BetheSolution,
    basis: &crate::oracle::SectorBasis,
) -> Result<nalgebra::DVector<f64>, CliError> {
    let mut v = nalgebra::DVector::zeros(basis.dim());
    for (i, b) in basis.states.iter().enumerate() {
        let value = match model.variant {
            ModelVariant::Dicke => overlap_dicke(model, sol, b),
            ModelVariant::PipBoson => overlap_pip(model, sol, b),
            ModelVariant::XxzSpin => return Err(CliError::Input("xxz overlap vector".into())),
        }
        .map_err(|e| CliError::Numerical(e.to_string()))?;
        v[i] = value.real();
    }
    Ok(v)
}

fn kappa_fd_derivative(
    model: &ModelSpec,
    n: usize,
    lambdas: &[f64],
    config: &SolveConfig,
) -> Result<Vec<f64>, CliError> {
    use crate::models::BosonParams;
    let Some((eta0_sq, kappa)) = model.pip_params() else {
        return Err(CliError::Input(
            "kappa derivative needs the (p+ip) model".into(),
        ));
    };
    let delta = 1e-5;
    let mut shifted = Vec::new();
    for sign in [1.0, -1.0] {
        let mut m2 = model.clone();
        m2.boson = Some(BosonParams::Pip {
            eta0_sq,
            kappa: kappa + sign * delta,
        });
        let sol = crate::solver::solve_lambdas(&m2, n, lambdas, config)?;
        shifted.push(sol.lambdas);
    }
    Ok(shifted[0]
        .iter()
        .zip(&shifted[1])
        .map(|(p, m)| (p - m) / (2.0 * delta))
        .collect())
}

fn parse_states(model: &ModelSpec, n: usize, text: &str) -> Result<Vec<BetheSolution>, CliError> {
    #[derive(serde::Deserialize)]
    struct Record {
        lambdas: Vec<f64>,
        #[serde(default)]
        #[allow(dead_code)]
        lambda0: Option<f64>,
        #[serde(default)]
        charges: Option<Vec<f64>>,
        #[serde(default)]
        #[allow(dead_code)]
        residual_lambda: Option<f64>,
        #[serde(default)]
        #[allow(dead_code)]
        state_id: Option<usize>,
    }
    let records: Vec<Record> =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("state file: {e}")))?;
    records
        .into_iter()
        .map(|r| {
            if r.lambdas.len() != model.num_levels() {
                return Err(CliError::Input("state file: wrong lambda dimension".into()));
            }
            // charges are recomputed from the lambdas unless supplied
            let charges = match r.charges {
                Some(c) => c,
                None => match model.variant {
                    ModelVariant::XxzSpin => {
                        crate::models::xxz_charge_eigenvalues(model, &r.lambdas)
                            .map_err(|e| CliError::Input(e.to_string()))?
                    }
                    _ => charge_eigenvalues(model, &r.lambdas, n)
                        .map_err(|e| CliError::Input(e.to_string()))?,
                },
            };
            let lambda0 = match model.variant {
                ModelVariant::PipBoson => Some(
                    crate::models::pip_lambda0(model, &r.lambdas, n)
                        .map_err(|e| CliError::Input(e.to_string()))?,
                ),
                _ => None,
            };
            Ok(BetheSolution {
                model: model.clone(),
                n_excitations: n,
                rapidities: None,
                lambdas: r.lambdas,
                lambda0,
                residual_rapidity: None,
                residual_lambda: r.residual_lambda,
                charges,
            })
        })
        .collect()
}

fn cmd_bench(common: &Common, m_list: &str) -> Result<(), CliError> {
    let req = load(common)?;
    let sizes = parse_index_list(m_list)?;
    if sizes.is_empty() {
        return Err(CliError::Input("empty m list".into()));
    }
    let mut out = String::from("m,dim,det_route_us,ed_route_us\n");
    for &m in &sizes {
        if m == 0 {
            return Err(CliError::Input("m must be positive".into()));
        }
        // geometric spacing keeps the Cauchy-like determinant matrices
        // well conditioned as m grows
        let levels: Vec<f64> = (1..=m).map(|i| 1.5 * 1.25f64.powi(i as i32 - 1)).collect();
        let model = match req.model.variant {
            ModelVariant::Dicke => ModelSpec::dicke(0.25, &levels, req.model.coupling),
            ModelVariant::PipBoson => {
                let (eta0_sq, kappa) = req.model.pip_params().unwrap();
                ModelSpec::pip(eta0_sq, kappa, &levels)
            }
            ModelVariant::XxzSpin => {
                return Err(CliError::Input("bench covers the bosonic models".into()))
            }
        }
        .map_err(|e| CliError::Input(e.to_string()))?;
        let n = req.n.min(m);
        let pattern: Vec<usize> = (0..n).collect();
        let sol = solve_pattern(&model, n, &pattern, &req.config)?;

        // determinant route: norm + all basis overlaps from Λ variables
        let t0 = std::time::Instant::now();
        let basis =
            build_sector_basis(&model, n).map_err(|e| CliError::Numerical(e.to_string()))?;
        let _norm = match model.variant {
            ModelVariant::Dicke => norm_dicke(&model, &sol),
            _ => norm_pip(&model, &sol),
        }
        .map_err(|e| CliError::Numerical(e.to_string()))?;
        let _amps = overlap_vector(&model, &sol, &basis)?;
        let det_us = t0.elapsed().as_micros();

        // ED route: diagonalize the sector and project
        let t0 = std::time::Instant::now();
        let ham = build_operator(&basis, OperatorId::Hamiltonian)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let sym = (ham.clone() + ham.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let _ = eig.eigenvalues.iter().sum::<f64>();
        let ed_us = t0.elapsed().as_micros();

        writeln!(out, "{m},{},{det_us},{ed_us}", basis.dim()).unwrap();
    }
    req.out.write(&out)
}

/// Scalar product helpers for complex snapshots (reused by tests).
pub fn max_residual(res: &nalgebra::DVector<Complex64>) -> f64 {
    res.iter().map(|r| r.norm()).fold(0.0f64, f64::max)
}

/// Residual of the ξ-RG equations at a trajectory endpoint (CLI-level
/// convenience for validation scripts).
pub fn xi_endpoint_residual(model: &ModelSpec, s0: f64, xi: f64, raps: &[Complex64]) -> f64 {
    max_residual(&xi_rg_residual(model, s0, xi, raps))
}
