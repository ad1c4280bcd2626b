mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use config::{parse_distribution, parse_meshes, ConfigError, RunConfig};
use spfem::fem::{bary_to_point, h1_error, l2_error, ElementField, QuadratureRule};
use spfem::lab::{emit_csv, format_table, manufactured_model, run_study};
use spfem::linsolve::EigenOptions;
use spfem::oracle::{cube_eigensequence, Example, ManufacturedProblem};
use spfem::scf::fixed_point_solve;
use spfem::spectrum::{AppliedPotential, Discretization, SpectrumSolver};
use spfem::Error;

/// Finite element Schrödinger–Poisson solver on the unit cube.
#[derive(Parser, Debug)]
#[command(name = "spfem", version)]
struct Cli {
    /// Configuration file with `key = value` lines; flags take precedence.
    /// Keys: example, distribution, f0, mu, N0, m, meshes, tol, max_iter,
    /// damping, l_max, seed, deterministic, out, threads.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Manufactured example: 1 (sine potential) or 2 (exponential bump)
    #[arg(long, global = true)]
    example: Option<u32>,
    /// boltzmann or fermi-dirac
    #[arg(long, global = true)]
    distribution: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    f0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Total electron number
    #[arg(long = "n0", global = true, allow_hyphen_values = true)]
    n0: Option<f64>,
    /// Cells per axis for `solve` and `eigs`
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Comma-separated cells per axis for `study`
    #[arg(long, global = true)]
    meshes: Option<String>,
    /// Relative H1 increment tolerance of the SCF iteration
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<usize>,
    /// Mixing parameter in (0, 1]
    #[arg(long, global = true, allow_hyphen_values = true)]
    damping: Option<f64>,
    /// Cap on the number of computed eigenpairs
    #[arg(long = "l-max", global = true)]
    l_max: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Zero the timing column so repeated runs give identical output
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output file (`study`) or directory (`solve`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for assembly
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-consistent solve on one mesh, with optional field dumps
    Solve,
    /// Convergence study over a mesh sequence
    Study,
    /// Residual self-checks of the manufactured problems
    OracleCheck {
        /// Number of random interior sample points
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Lowest eigenvalues of the Hamiltonian with a fixed potential
    Eigs {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Include the applied potential of the example (otherwise −Δ alone)
        #[arg(long)]
        with_v0: bool,
    },
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Parse(_) | Error::Io(_) => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))?;
        cfg.apply_file(&text)?;
    }
    let f = &cli.flags;
    if let Some(v) = f.example {
        cfg.example = v;
    }
    if let Some(v) = &f.distribution {
        cfg.distribution = parse_distribution("distribution", v)?;
    }
    if let Some(v) = f.f0 {
        cfg.f0 = v;
    }
    if let Some(v) = f.mu {
        cfg.mu = v;
    }
    if let Some(v) = f.n0 {
        cfg.n0 = v;
    }
    if let Some(v) = f.m {
        cfg.m = v;
    }
    if let Some(v) = &f.meshes {
        cfg.meshes = parse_meshes("meshes", v)?;
    }
    if let Some(v) = f.tol {
        cfg.tol = v;
    }
    if let Some(v) = f.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = f.damping {
        cfg.damping = v;
    }
    if let Some(v) = f.l_max {
        cfg.l_max = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if f.deterministic {
        cfg.deterministic = true;
    }
    if let Some(v) = &f.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = f.threads {
        cfg.threads = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve(cfg: &RunConfig) -> Result<(), Failure> {
    let problem = ManufacturedProblem::new(cfg.example(), cfg.params(), 1e-8)?;
    let model = manufactured_model(&problem);
    let disc = Discretization::new(cfg.m)?;
    let report = fixed_point_solve(&disc, &model, &cfg.scf(), None)?;
    let mesh = disc.mesh();
    let quad = QuadratureRule::degree5();

    println!("iter  increment_H1    fermi        L_h  occupation_sum");
    for r in &report.iterations {
        println!(
            "{:>4}  {:<14.6e}  {:<11.6}  {:>3}  {:.12}",
            r.iter, r.increment_h1, r.fermi_level, r.l_h, r.occupation_sum
        );
    }
    let e_v0 = l2_error(mesh, &report.potential, &|x| problem.v_exact(x), &quad);
    let e_v1 = h1_error(
        mesh,
        &report.potential,
        &|x| problem.v_exact(x),
        &|x| problem.grad_v_exact(x),
        &quad,
    );
    let e_n0 = l2_error(mesh, &report.density, &|x| problem.n_exact(x), &quad);
    println!("m = {}  Ne = {}  h = {}", cfg.m, mesh.num_tets(), disc.h());
    println!(
        "converged = {}  L_h = {}  fermi_h = {}  fermi_exact = {}",
        report.converged,
        report.occupation.l_h,
        report.occupation.fermi_level,
        problem.fermi_level()
    );
    println!("eV0 = {e_v0:e}  eV1 = {e_v1:e}  en0 = {e_n0:e}");
    println!(
        "self-consistency residual = {:e}",
        report.self_consistency_residual
    );

    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        let mut pot = BufWriter::new(fs::File::create(dir.join("potential.txt"))?);
        for (x, v) in mesh.vertices().iter().zip(report.potential.values()) {
            writeln!(pot, "{} {} {} {}", x[0], x[1], x[2], v)?;
        }
        pot.flush()?;
        let mut dens = BufWriter::new(fs::File::create(dir.join("density.txt"))?);
        for t in 0..mesh.num_tets() {
            let pts = mesh.tet_points(t);
            for (bary, _) in quad.iter() {
                let x = bary_to_point(&pts, bary);
                let n = report.density.value(mesh, t, bary, &x);
                writeln!(dens, "{} {} {} {}", x[0], x[1], x[2], n)?;
            }
        }
        dens.flush()?;
        println!("wrote {}", dir.display());
    }
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "SCF did not converge in {} iterations",
            cfg.max_iter
        )))
    }
}

fn study(cfg: &RunConfig) -> Result<(), Failure> {
    let report = run_study(
        cfg.example(),
        cfg.params(),
        &cfg.meshes,
        &cfg.scf(),
        cfg.deterministic,
    )?;
    print!("{}", format_table(&report.rows));
    if let Some(path) = &cfg.out {
        emit_csv(&report.rows, Path::new(path))?;
        println!("wrote {}", path.display());
    }
    let failed: Vec<usize> = report
        .rows
        .iter()
        .zip(&report.converged)
        .filter(|(_, &c)| !c)
        .map(|(r, _)| r.m)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "SCF did not converge for m = {failed:?}"
        )))
    }
}

fn oracle_check(cfg: &RunConfig, points: usize) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<[f64; 3]> = (0..points)
        .map(|_| {
            [
                rng.gen_range(0.01..0.99),
                rng.gen_range(0.01..0.99),
                rng.gen_range(0.01..0.99),
            ]
        })
        .collect();
    let mut worst: f64 = 0.0;
    for example in [Example::Sine, Example::Exponential] {
        let problem = ManufacturedProblem::new(example, cfg.params(), 1e-8)?;
        let r = problem.residual_check(&samples, 1e-10)?;
        println!(
            "example {}: fermi = {}  max |-dV - n + nD| / (1 + |n|) = {r:e}",
            example.id(),
            problem.fermi_level()
        );
        worst = worst.max(r);
    }
    if worst <= 1e-6 {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "residual {worst:e} exceeds 1e-6"
        )))
    }
}

fn eigs(cfg: &RunConfig, count: usize, with_v0: bool) -> Result<(), Failure> {
    let disc = Discretization::new(cfg.m)?;
    let v0 = if with_v0 {
        let problem = ManufacturedProblem::new(cfg.example(), cfg.params(), 1e-8)?;
        AppliedPotential::new(format!("example{}", cfg.example), problem.v0())
    } else {
        AppliedPotential::zero()
    };
    let opts = EigenOptions {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut solver = SpectrumSolver::new(&disc, None, &v0).with_options(opts);
    let set = solver.solve(count)?;
    let exact = cube_eigensequence(count);
    println!("{:>4}  {:>20}  {:>20}", "l", "eps_h", "lambda (-Laplace)");
    for (l, (e, mode)) in set.eigenvalues.iter().zip(&exact).enumerate() {
        println!("{:>4}  {:>20.12}  {:>20.12}", l + 1, e, mode.lambda());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = build_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(format!("threads: {e}")))?;
    }
    match &cli.command {
        Command::Solve => solve(&cfg),
        Command::Study => study(&cfg),
        Command::OracleCheck { points } => oracle_check(&cfg, *points),
        Command::Eigs { count, with_v0 } => eigs(&cfg, *count, *with_v0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
