mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mblab::config::RunConfig;
use mblab::io::{field_csv, read_field, write_field, write_json, Checkpoint};
use mblab::solvers::{
    approximate_infinite, multi_start_agreement, scan_geometry, solve_multitransition_from, window_l2, HeteroPair,
    ResumePoint,
};
use mblab::verify::{battery_passed, run_battery, BatteryInput};
use mblab::{compute_c0, EnergyLedger, Error, Field, GridSpec, Problem, SolveReport};

#[derive(Parser)]
#[command(name = "mblab", version, about = "Multi-transition solutions of periodic Allen-Cahn equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the cell problem and report c0.
    Cell(Common),
    /// Heteroclinics v0 -> w0 and w0 -> v0.
    Hetero(Common),
    /// Constrained 2K-transition solve.
    Multi(Common),
    /// Replicated blocks for each K and their window differences.
    Infinite(Common),
    /// Run the check battery against the stored dumps.
    Verify(Common),
    /// Energy ledgers and profile plots for every stored dump.
    Report(Common),
    /// Continue an interrupted run.
    Resume {
        run_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// key=value, applied after the config file
    #[arg(long = "set")]
    sets: Vec<String>,
    /// Run directory, overrides output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: MBLAB_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed key
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Lib(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Config(_) | Error::Shape(_) | Error::Range(_) | Error::Io(_) | Error::Json(_)) => 1,
            Failure::Lib(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Lib(e) => match e {
                Error::Range(_) => "range",
                Error::Shape(_) => "shape",
                Error::Config(_) => "config",
                Error::Convergence { .. } => "convergence",
                Error::Numerical(_) => "numerical",
                Error::Infeasible { .. } => "infeasible",
                Error::Interrupted { .. } => "interrupted",
                Error::Io(_) => "io",
                Error::Json(_) => "json",
            },
            Failure::Verification(_) => "verification",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Verification(n) => format!("{n} check(s) failed"),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| std::env::var("MBLAB_THREADS").ok()?.parse().ok());
    if let Some(n) = n {
        // a second init in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(c: &Common) -> mblab::Result<RunConfig> {
    let mut sets = c.sets.clone();
    if let Some(s) = c.seed {
        sets.push(format!("seed={s}"));
    }
    if let Some(o) = &c.out {
        sets.push(format!("output.dir={}", o.display()));
    }
    match &c.config {
        Some(p) => RunConfig::load(p, &sets),
        None => RunConfig::parse("", &sets),
    }
}

struct Run {
    cfg: RunConfig,
    hash: String,
    dir: PathBuf,
}

impl Run {
    fn new(cfg: RunConfig) -> mblab::Result<Self> {
        let dir = cfg.out_dir.clone();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.txt"), cfg.to_text())?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            dir,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn problem(&self) -> mblab::Result<Problem> {
        Problem::new(
            self.cfg.potential,
            self.cfg.dim,
            self.cfg.points_per_unit,
            &self.cfg.solver.minimize,
        )
    }

    fn dump(&self, name: &str, u: &Field) -> mblab::Result<()> {
        write_field(&self.path(name), u, &self.hash)?;
        if u.grid().dim() == 1 {
            fs::write(self.path(&format!("{name}.csv")), field_csv(u, &self.hash)?)?;
        }
        Ok(())
    }

    fn status(&self, command: &str, state: &str) -> mblab::Result<()> {
        write_json(
            &self.path("status.json"),
            &json!({"command": command, "state": state, "config_hash": self.hash}),
        )
    }
}

fn cmd_cell(run: &Run) -> Outcome {
    let torus = GridSpec::torus(run.cfg.dim, run.cfg.points_per_unit)?;
    let cell = compute_c0(&run.cfg.potential, torus, &run.cfg.solver.minimize, run.cfg.seed)?;
    run.dump("cell_u", &cell.minimizer)?;
    write_json(
        &run.path("cell.json"),
        &json!({"c0": cell.c0, "iterations": cell.iterations, "config_hash": run.hash}),
    )?;
    println!("c0 = {:?}", cell.c0);
    Ok(())
}

fn hetero_pair(run: &Run, problem: &Problem, resume: Option<&ResumePoint>) -> mblab::Result<HeteroPair> {
    let pair = HeteroPair::solve_from(problem, &run.cfg.solver, resume)?;
    run.dump("hetero_vw", &pair.vw.minimizer)?;
    run.dump("hetero_wv", &pair.wv.minimizer)?;
    write_json(
        &run.path("hetero.json"),
        &json!({
            "c1": pair.c1(),
            "c1_prime": pair.c1_prime(),
            "sum": pair.c1() + pair.c1_prime(),
            "c0": problem.c0,
            "vw": pair.vw.to_json(&run.hash),
            "wv": pair.wv.to_json(&run.hash),
            "config_hash": run.hash,
        }),
    )?;
    Ok(pair)
}

fn cmd_hetero(run: &Run, resume: Option<&ResumePoint>) -> Outcome {
    let problem = run.problem()?;
    let pair = hetero_pair(run, &problem, resume)?;
    println!("c1 = {:?}\nc1' = {:?}", pair.c1(), pair.c1_prime());
    Ok(())
}

fn cmd_multi(run: &Run, resume: Option<&ResumePoint>) -> Outcome {
    let problem = run.problem()?;
    let pair = hetero_pair(run, &problem, resume)?;
    let r = solve_multitransition_from(&problem, &run.cfg.spec, &pair, &run.cfg.solver, resume, "multi")?;
    run.dump("multi_u", &r.minimizer)?;
    let cfg = &run.cfg;
    let starts = multi_start_agreement(&problem, &cfg.spec, &pair, &cfg.solver, &r, &cfg.start_shifts, "multi_start")?;
    let scan = scan_geometry(&problem, &cfg.spec, &pair, &cfg.solver, &cfg.geometry_scales, "geometry")?;
    let mut j = r.to_json(&run.hash);
    j["c1_sum"] = json!(pair.c1() + pair.c1_prime());
    j["multi_start"] = json!(starts);
    j["geometry_scan"] = json!(scan);
    write_json(&run.path("multi.json"), &j)?;
    println!(
        "b = {:?}\nmin margin = {:?}\npde residual = {:?}",
        r.objective,
        r.min_margin(),
        r.pde_residual
    );
    if !starts.shifts.is_empty() {
        println!(
            "restarts {:?}: energy spread {:e}, transitions moved by {:?}",
            starts.shifts, starts.objective_spread, starts.kink_offsets
        );
    }
    if let Some(t) = scan.smallest_passing.map(|i| &scan.trials[i]) {
        println!("smallest strictly inactive geometry: m = {:?}, l = {:?} (scale {})", t.m, t.l, t.scale);
    } else if !scan.trials.is_empty() {
        println!("no scanned geometry is strictly inactive");
    }
    Ok(())
}

fn cmd_infinite(run: &Run, resume: Option<&ResumePoint>) -> Outcome {
    let problem = run.problem()?;
    let pair = hetero_pair(run, &problem, resume)?;
    let cfg = &run.cfg;
    let res = approximate_infinite(
        &problem,
        &pair,
        &cfg.spec,
        cfg.infinite_mode,
        &cfg.k_list,
        cfg.window,
        &cfg.solver,
        resume,
    )?;
    let mut per_k = Vec::new();
    for (k, r) in res.k_list.iter().zip(&res.reports) {
        run.dump(&format!("infinite_K{k}"), &r.minimizer)?;
        let v0 = problem.v0(*r.minimizer.grid())?;
        let mut j = r.to_json(&run.hash);
        j["K"] = json!(k);
        j["window_distance_v0"] = json!(window_l2(&r.minimizer, &v0, res.window.0, res.window.1)?);
        per_k.push(j);
    }
    fs::write(run.path("cauchy.csv"), res.cauchy_csv(&run.hash))?;
    write_json(
        &run.path("infinite.json"),
        &json!({
            "mode": res.mode,
            "window": [res.window.0, res.window.1],
            "k_list": res.k_list,
            "cauchy": res.cauchy.iter().map(|(k, d)| json!({"K": k, "diff": d})).collect::<Vec<_>>(),
            "runs": per_k,
            "config_hash": run.hash,
        }),
    )?;
    for (k, d) in &res.cauchy {
        println!("K = {k}: window difference {d:e}");
    }
    Ok(())
}

fn stored_report(problem: &Problem, u: Field) -> mblab::Result<SolveReport> {
    Ok(SolveReport {
        objective: problem.energy(&u),
        pde_residual: problem.pde_residual(&u)?,
        minimizer: u,
        margins: vec![],
        iterations: 0,
        converged: true,
        strictly_inactive: true,
        trace: vec![],
        round_energies: vec![],
    })
}

fn load_dump(run: &Run, name: &str) -> mblab::Result<Field> {
    let stem = run.path(name);
    if !run.path(&format!("{name}.bin")).exists() {
        return Err(Error::Config(format!("{} not found; run the producing command first", stem.display())));
    }
    let (u, header) = read_field(&stem)?;
    if header.config_hash != run.hash {
        return Err(Error::Config(format!("{name} was produced by config {}", header.config_hash)));
    }
    Ok(u)
}

fn cmd_verify(run: &Run) -> Outcome {
    let problem = run.problem()?;
    let pair = HeteroPair {
        vw: stored_report(&problem, load_dump(run, "hetero_vw")?)?,
        wv: stored_report(&problem, load_dump(run, "hetero_wv")?)?,
    };
    let multi = if run.path("multi_u.bin").exists() {
        Some(stored_report(&problem, load_dump(run, "multi_u")?)?)
    } else {
        None
    };
    let input = BatteryInput {
        problem: &problem,
        pair: &pair,
        multi: multi.as_ref().map(|m| (m, &run.cfg.spec)),
        solver: &run.cfg.solver,
        opts: &run.cfg.verify,
    };
    let results = run_battery(&input)?;
    write_json(&run.path("verify.json"), &results)?;
    for r in &results {
        let tag = if r.heuristic { " (heuristic)" } else { "" };
        println!("{:<28} {:?}{tag}", r.id, r.status);
    }
    if battery_passed(&results) {
        Ok(())
    } else {
        Err(Failure::Verification(results.iter().filter(|r| r.failed() && !r.heuristic).count()))
    }
}

fn cmd_report(run: &Run) -> Outcome {
    let problem = run.problem()?;
    let mut stems: Vec<String> = fs::read_dir(&run.dir)?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".bin").map(str::to_string))
        .collect();
    stems.sort();
    for name in stems {
        let (u, header) = read_field(&run.path(&name))?;
        if header.config_hash != run.hash {
            eprintln!("skipping {name}: produced by config {}", header.config_hash);
            continue;
        }
        let g = *u.grid();
        if !g.is_periodic_x1() {
            let ledger = EnergyLedger::build(&u, &problem.potential, problem.c0)?;
            fs::write(run.path(&format!("{name}_ledger.csv")), ledger.to_csv(&run.hash))?;
            write_json(&run.path(&format!("{name}_ledger.json")), &ledger.header_json(&run.hash))?;
        }
        let tl = g.transverse_len();
        let values = u.values();
        let xs: Vec<f64> = (0..g.nx1()).map(|k| g.x1(k)).collect();
        let ys: Vec<f64> = (0..g.nx1())
            .map(|k| values[k * tl..(k + 1) * tl].iter().sum::<f64>() / tl as f64)
            .collect();
        let png = run.path(&format!("{name}_profile_{}.png", run.cfg.short_hash()));
        plot::profile_png(&xs, &ys, &png).map_err(|e| Error::Numerical(format!("plot {}: {e}", png.display())))?;
        println!("{name}: {}", png.display());
    }
    Ok(())
}

fn dispatch(command: &str, run: &Run, resume: Option<&ResumePoint>) -> Outcome {
    match command {
        "cell" => cmd_cell(run),
        "hetero" => cmd_hetero(run, resume),
        "multi" => cmd_multi(run, resume),
        "infinite" => cmd_infinite(run, resume),
        "verify" => cmd_verify(run),
        "report" => cmd_report(run),
        other => Err(Error::Config(format!("unknown command '{other}'")).into()),
    }
}

/// Run a command, saving a checkpoint if the solver was interrupted.
fn execute(command: &str, run: &Run, resume: Option<&ResumePoint>) -> Outcome {
    let ckpt = run.path("checkpoint.json");
    match dispatch(command, run, resume) {
        Err(Failure::Lib(Error::Interrupted {
            stage,
            iterations,
            state,
            iterate,
        })) => {
            Checkpoint {
                config_hash: run.hash.clone(),
                command: command.to_string(),
                stage: stage.clone(),
                iterations,
                state: *state.clone(),
                iterate: *iterate.clone(),
            }
            .write(&ckpt)?;
            run.status(command, "interrupted")?;
            Err(Failure::Lib(Error::Interrupted {
                stage,
                iterations,
                state,
                iterate,
            }))
        }
        Ok(()) => {
            if ckpt.exists() {
                fs::remove_file(&ckpt)?;
            }
            run.status(command, "complete")?;
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn resume(dir: &Path) -> Outcome {
    let config_path = dir.join("config.txt");
    if !config_path.exists() {
        return Err(Error::Config(format!("{} has no config.txt", dir.display())).into());
    }
    let mut cfg = RunConfig::load(&config_path, &[format!("output.dir={}", dir.display())])?;
    cfg.solver.minimize.stop_after = None;
    let ckpt_path = dir.join("checkpoint.json");
    if !ckpt_path.exists() {
        let status = fs::read_to_string(dir.join("status.json")).unwrap_or_default();
        if status.contains("\"complete\"") {
            println!("run already complete");
            return Ok(());
        }
        return Err(Error::Config(format!("{} has no checkpoint", dir.display())).into());
    }
    let ckpt = Checkpoint::read(&ckpt_path)?;
    if ckpt.config_hash != cfg.hash() {
        return Err(Error::Config(format!(
            "checkpoint config hash {} does not match config.txt ({})",
            ckpt.config_hash,
            cfg.hash()
        ))
        .into());
    }
    let run = Run {
        hash: cfg.hash(),
        dir: dir.to_path_buf(),
        cfg,
    };
    execute(&ckpt.command, &run, Some(&ckpt.resume_point()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::Lib(Error::Config(e.to_string().trim().to_string()));
            return report_failure(&f);
        }
    };
    let outcome = match &cli.cmd {
        Cmd::Resume { run_dir, threads } => {
            init_threads(*threads);
            resume(run_dir)
        }
        cmd => {
            let (name, common) = match cmd {
                Cmd::Cell(c) => ("cell", c),
                Cmd::Hetero(c) => ("hetero", c),
                Cmd::Multi(c) => ("multi", c),
                Cmd::Infinite(c) => ("infinite", c),
                Cmd::Verify(c) => ("verify", c),
                Cmd::Report(c) => ("report", c),
                Cmd::Resume { .. } => unreachable!(),
            };
            init_threads(common.threads);
            load_config(common)
                .and_then(Run::new)
                .map_err(Failure::from)
                .and_then(|run| execute(name, &run, None))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(&f),
    }
}

fn report_failure(f: &Failure) -> ExitCode {
    let code = f.exit_code();
    let body = json!({"error": f.kind(), "message": f.message(), "exit_code": code});
    eprintln!("{body}");
    ExitCode::from(code)
}
