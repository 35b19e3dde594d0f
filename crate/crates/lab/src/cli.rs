//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{CommandFactory, FromArgMatches, Parser};
use loopsoup::excursions::{tail_check_z, EndpointProcess, ExcursionKernels};
use loopsoup::explore::explore_run;
use loopsoup::lattice::{Ball, Point};
use loopsoup::loops::MassTable;
use loopsoup::potential::{
    equilibrium_measure, green, green_field, hitting_kernel, hitting_prob, KernelRoute, KilledDomain, SolverOptions,
};
use loopsoup::renorm::{embeddings_count_and_separation, induction_ledger_run, write_ledger_json, EmbeddingMode, LedgerParams};
use loopsoup::soup::{DirectSampler, LocalTimeField, SoupConfig, Strategy, Window};
use loopsoup::{Error, Result};
use serde_json::json;

use crate::decouple::{decoupling_sweep, write_defects_csv, DecouplingExperiment};
use crate::functions::{Direction, FunctionKind};
use crate::lu::{local_uniqueness_sweep, write_lu_csv, LuConfig};
use crate::parallel::map_replicates;
use crate::spec::*;
use crate::vacancy::{vacancy_curve, write_vacancy_csv, VacancyConfig};

#[derive(Parser, Debug)]
#[command(name = "loopsoup", version, about = "Random walk loop soup experiments", arg_required_else_help = true)]
struct Cli {
    /// Spec file (JSON or key = value) holding the experiment and its parameters.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output path; defaults to the spec's `out` or `loopsoup-<kind>.<ext>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Experiment>,
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let flags_given = matches.subcommand().is_some_and(|(_, sub)| {
        sub.ids()
            .any(|id| !matches!(id.as_str(), "spec" | "out") && sub.value_source(id.as_str()) == Some(ValueSource::CommandLine))
    });
    match execute(cli, flags_given) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, flags_given: bool) -> Result<String> {
    let (experiment, spec_out) = match (&cli.spec, cli.command) {
        (None, Some(exp)) => (exp, None),
        (None, None) => return Err(Error::Config("no subcommand or spec file given".into())),
        (Some(path), cmd) => {
            let spec = ExperimentSpec::load(path)?;
            if let Some(cmd) = cmd {
                if cmd.kind() != spec.experiment.kind() {
                    return Err(Error::Config(format!(
                        "subcommand {} does not match the spec kind {}",
                        cmd.kind(),
                        spec.experiment.kind()
                    )));
                }
                if flags_given {
                    return Err(Error::Config("give parameters either in the spec file or as flags, not both".into()));
                }
            }
            (spec.experiment, spec.out)
        }
    };
    let out = cli
        .out
        .or(spec_out.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("loopsoup-{}.{}", experiment.kind(), experiment.extension())));
    let mut buf = Vec::new();
    let summary = run_experiment(&experiment, &mut buf)?;
    write_atomic(&out, &buf)?;
    Ok(format!("{summary} -> {}", out.display()))
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("note: no --seed given, using seed 0");
        0
    })
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "conditioned" => Ok(Strategy::Conditioned),
        "thinning" => Ok(Strategy::Thinning),
        other => Err(Error::Config(format!("unknown strategy '{other}'"))),
    }
}

pub fn parse_function(s: &str) -> Result<FunctionKind> {
    match s.split_once(':') {
        None => match s {
            "site_occupied" => Ok(FunctionKind::SiteOccupied),
            "site_vacant" => Ok(FunctionKind::SiteVacant),
            "vacant_crossing" => Ok(FunctionKind::VacantCrossing),
            other => Err(Error::Config(format!("unknown function '{other}'"))),
        },
        Some(("occupied_fraction_ge", q)) => {
            let fraction: f64 = q.parse().map_err(|_| Error::Config(format!("bad fraction '{q}'")))?;
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
            }
            Ok(FunctionKind::OccupiedFractionGe { fraction })
        }
        Some(_) => Err(Error::Config(format!("unknown function '{s}'"))),
    }
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "increasing" => Ok(Direction::Increasing),
        "decreasing" => Ok(Direction::Decreasing),
        other => Err(Error::Config(format!("unknown variant '{other}'"))),
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Numerical(e.to_string())
}

/// Executes one experiment, writing its main output to `w`; returns the summary line.
pub fn run_experiment(exp: &Experiment, w: &mut Vec<u8>) -> Result<String> {
    match exp {
        Experiment::Potential(a) => run_potential(a, w),
        Experiment::Loops(a) => {
            let window = Ball::new(Point::origin(a.d), a.window).points();
            let table = MassTable::new(&window, a.nmax)?;
            table.write_csv(&mut *w)?;
            Ok(format!("loops: window mass {:.12e} for lengths <= {}", table.window_mass_f64(), a.nmax))
        }
        Experiment::Soup(a) => run_soup(a, w),
        Experiment::Excursions(a) => run_excursions(a, w),
        Experiment::Renorm(a) => {
            let mode = match a.mode.as_str() {
                "exhaustive" => EmbeddingMode::Exhaustive { guard: a.guard },
                "sampled" => EmbeddingMode::Sampled { samples: a.samples, seed: seed_or_default(a.seed) },
                other => return Err(Error::Config(format!("unknown mode '{other}'"))),
            };
            let report = embeddings_count_and_separation(a.n, a.l, a.d, a.big_l0, mode)?;
            report.write_csv(&mut *w)?;
            Ok(format!(
                "renorm: count {} (bound {}), separation failures {}",
                report.count, report.bound_tight, report.separation_failures
            ))
        }
        Experiment::Explore(a) => run_explore(a, w),
        Experiment::Decouple(a) => {
            let base = DecouplingExperiment {
                alpha: a.alpha,
                delta: a.delta.first().copied().unwrap_or(0.0),
                l: a.l,
                s: a.s.first().copied().unwrap_or(1),
                d: a.d,
                f1: parse_function(&a.f1)?,
                f2: parse_function(&a.f2)?,
                variant: a.variant.as_deref().map(parse_direction).transpose()?,
                n_max: a.nmax,
                replicates: a.reps,
                seed: seed_or_default(a.seed),
                level: a.level,
            };
            if a.s.is_empty() || a.delta.is_empty() {
                return Err(Error::Config("need at least one separation and one delta".into()));
            }
            let rows = decoupling_sweep(&base, &a.s, &a.delta)?;
            write_defects_csv(&rows, &mut *w)?;
            let worst = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
            Ok(format!("decouple: {} rows, largest defect {worst:.6}", rows.len()))
        }
        Experiment::Lu(a) => {
            let cfg = LuConfig {
                alphas: a.alphas.clone(),
                n: a.n,
                proxy_factor: a.proxy_factor,
                d: a.d,
                n_max: a.nmax,
                replicates: a.reps,
                seed: seed_or_default(a.seed),
                level: a.level,
                target: a.target,
            };
            let report = local_uniqueness_sweep(&cfg)?;
            write_lu_csv(&report, &mut *w)?;
            let best = report.largest_alpha_meeting_target.map_or("none".to_string(), |x| x.to_string());
            Ok(format!("lu: {} grid points, largest alpha with lu2 >= {}: {best} (surrogate)", report.rows.len(), cfg.target))
        }
        Experiment::Vacancy(a) => {
            let cfg = VacancyConfig {
                alphas: a.alphas.clone(),
                n: a.n,
                n_max: a.nmax,
                d: a.d,
                replicates: a.reps,
                seed: seed_or_default(a.seed),
                strategy: parse_strategy(&a.strategy)?,
                level: a.level,
            };
            let rows = vacancy_curve(&cfg)?;
            write_vacancy_csv(&rows, cfg.level, &mut *w)?;
            Ok(format!("vacancy: {} grid points", rows.len()))
        }
        Experiment::Ledger(a) => {
            let params = LedgerParams {
                u: a.u,
                u_prime: a.uprime,
                beta: a.beta,
                gamma: a.gamma,
                zeta: a.zeta,
                theta: a.theta,
                r0: a.r0,
                l0: a.l0,
                big_l0: a.big_l0,
                d: a.d,
                horizon: a.horizon,
            };
            let ledger = induction_ledger_run(&params)?;
            write_ledger_json(&ledger, &mut *w)?;
            let verdict = serde_json::to_value(ledger.verdict).map_err(json_err)?;
            Ok(format!("ledger: {}", verdict.as_str().unwrap_or("?")))
        }
    }
}

fn run_potential(a: &PotentialArgs, w: &mut Vec<u8>) -> Result<String> {
    let opts = SolverOptions { tol: a.tol, ..SolverOptions::default() };
    let dom = KilledDomain::centered(a.d, a.carrier);
    let origin = Point::origin(a.d);
    let x = Point::axis(a.d, 0, a.x_dist);
    let set = Ball::new(origin.clone(), a.a_radius).sphere();
    let g00 = green(&dom, &origin, &origin, opts)?;
    let g_x0 = green(&dom, &x, &origin, opts)?;
    let g_0x = green(&dom, &origin, &x, opts)?;
    let hit = hitting_prob(&dom, &x, &set, opts)?;
    let eq = equilibrium_measure(&dom, &set, opts)?;
    // z -> g(z, x), read at y in the set.
    let gx = green_field(&dom, &x, opts)?;
    let last_exit: f64 = eq.weights.iter().map(|(y, e)| gx.get(y) * e).sum();
    let rec = json!({
        "d": a.d,
        "carrier": a.carrier,
        "a_radius": a.a_radius,
        "x": x.coords(),
        "green_origin": g00,
        "green_x_origin": g_x0,
        "green_origin_x": g_0x,
        "symmetry_defect": (g_x0 - g_0x).abs(),
        "hitting": hit,
        "capacity": eq.capacity,
        "last_exit_sum": last_exit,
        "last_exit_defect": (hit - last_exit).abs(),
    });
    serde_json::to_writer_pretty(&mut *w, &rec).map_err(json_err)?;
    writeln!(w)?;
    Ok(format!("potential: g(0,0) = {g00:.10}, last-exit defect {:.3e}", (hit - last_exit).abs()))
}

fn run_soup(a: &SoupArgs, w: &mut Vec<u8>) -> Result<String> {
    let cfg = SoupConfig {
        alpha: a.alpha,
        window: Window::Ball(Ball::new(Point::origin(a.d), a.window)),
        n_max: a.nmax,
        seed: seed_or_default(a.seed),
        d: a.d,
    };
    let sampler = DirectSampler::new(&cfg, parse_strategy(&a.strategy)?)?;
    let origin = Point::origin(a.d);
    let rows = map_replicates(0, a.reps, |rep| {
        let mut field = LocalTimeField::new(&cfg.window);
        let loops = sampler.sample_into(rep, 0, &mut |flat| field.add_loop(flat));
        let total: u64 = field.counts().iter().map(|&c| u64::from(c)).sum();
        Ok((loops, total, field.get(&origin) == 0))
    })?;
    writeln!(w, "replicate,loops,local_time_total,origin_vacant")?;
    let mut vacant = 0u64;
    for (rep, (loops, total, v)) in rows.iter().enumerate() {
        writeln!(w, "{rep},{loops},{total},{}", u8::from(*v))?;
        vacant += u64::from(*v);
    }
    Ok(format!("soup: {} replicates, origin vacant in {vacant}", a.reps))
}

fn run_excursions(a: &ExcursionsArgs, w: &mut Vec<u8>) -> Result<String> {
    if a.a_radius >= a.b_radius {
        return Err(Error::Config("the inner sphere A must have the smaller radius".into()));
    }
    let opts = SolverOptions::default();
    let dom = KilledDomain::centered(a.d, a.carrier);
    let origin = Point::origin(a.d);
    let set_a = Ball::new(origin.clone(), a.a_radius).sphere();
    let set_b = Ball::new(origin, a.b_radius).sphere();
    let ab = hitting_kernel(&dom, &set_a, &set_b, KernelRoute::Auto, opts)?;
    let ba = hitting_kernel(&dom, &set_b, &set_a, KernelRoute::Auto, opts)?;
    let kernels = ExcursionKernels::from_kernels(&ab, &ba)?;
    let process = EndpointProcess::new(a.alpha, kernels)?;
    let report = tail_check_z(&process, a.reps, seed_or_default(a.seed), &a.ks);
    let rec = json!({
        "levels": process.levels,
        "spectral_radius": process.spectral_radius,
        "tail_certificate": process.tail_certificate,
        "tail": report,
    });
    serde_json::to_writer_pretty(&mut *w, &rec).map_err(json_err)?;
    writeln!(w)?;
    let passes = report.rows.iter().filter(|r| r.pass).count();
    Ok(format!(
        "excursions: hypothesis sup {:.6} ({}), tail rows passing {passes}/{}",
        report.hypothesis_sup,
        if report.hypothesis_holds { "holds" } else { "fails" },
        report.rows.len()
    ))
}

fn run_explore(a: &ExploreArgs, w: &mut Vec<u8>) -> Result<String> {
    if a.radius < 1 || a.n < 1 {
        return Err(Error::Config("exploration needs R >= 1 and N >= 1".into()));
    }
    let spacing = 2 * a.radius + 1;
    let reach = spacing * (a.n / 30 + 1) + a.radius;
    let cfg = SoupConfig {
        alpha: a.alpha,
        window: Window::Ball(Ball::new(Point::origin(a.d), reach)),
        n_max: a.nmax,
        seed: seed_or_default(a.seed),
        d: a.d,
    };
    let sampler = DirectSampler::new(&cfg, Strategy::Thinning)?;
    let mut field = LocalTimeField::new(&cfg.window);
    sampler.sample_into(a.replicate, 0, &mut |flat| field.add_loop(flat));
    let vacant = |p: &Point| cfg.window.contains(p).then(|| field.get(p) == 0);
    let state = explore_run(&vacant, &Point::origin(a.d), a.n, a.radius)?;
    state.write_jsonl(&mut *w)?;
    let stop = serde_json::to_value(state.stop).map_err(json_err)?;
    Ok(format!("explore: tau = {}, stop {}, cluster size {}", state.tau, stop, state.cluster_size))
}
