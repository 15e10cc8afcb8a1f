//! `lifshitz-lab`: command-line driver for the Lifshitz-tail laboratory.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 finished with
//! flagged (uncertified) cells.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lifshitz_core::alloy::{compute_d0, LatticeLaw, SingleSite};
use lifshitz_core::bernstein::BernsteinSpec;
use lifshitz_core::error::{Error, Result};
use lifshitz_core::lab::{
    choose_m_of_t, format_g17, run_ensemble, scaling_study, verify_tauberian_numeric, write_ensemble,
    write_study, write_tauber, ExperimentConfig, SyntheticMeasure, STABLE_FACTOR,
};
use lifshitz_core::rates::RateBundle;
use lifshitz_core::special::log_spaced;

#[derive(Debug, Parser)]
#[command(name = "lifshitz-lab", version, about = "Lifshitz-tail numerical laboratory")]
struct Cli {
    /// Experiment TOML, or a `rates(...)` bundle for `rates`/`tauber`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LIFSHITZ_THREADS")]
    threads: Option<usize>,
    /// Output directory for tables and metadata.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate functions x_t, h(t), the rate denominator and M(t) over a t grid.
    Rates(RatesArgs),
    /// Lowest eigenvalues of one sample operator.
    Spectrum(SpectrumArgs),
    /// Ensemble estimate of the Laplace transform over (M, t).
    Laplace(ExperimentArgs),
    /// Ensemble estimate of the integrated density of states over (M, lambda).
    Ids(ExperimentArgs),
    /// Numeric Tauberian check on a synthetic measure.
    Tauber(TauberArgs),
    /// Scaling study with M chosen from t.
    Study(ExperimentArgs),
    /// Quick self-checks of the library.
    Verify,
}

/// Overrides for [`ExperimentConfig`] fields.
#[derive(Debug, Args, Default)]
struct ExperimentArgs {
    /// Kinetic term, e.g. `drift(b=1)` or `stable(alpha=1.5)`.
    #[arg(long)]
    phi: Option<String>,
    /// Single-site profile, e.g. `box(h=0.5)`.
    #[arg(long)]
    site: Option<String>,
    /// Lattice law, e.g. `atom(p0=0.3,slope=0.7)`.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// Torus sides, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    oversampling: Option<usize>,
    /// Initial eigencount.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_cap: Option<usize>,
    /// `a,b,c` or `lo:hi:n` (log spaced).
    #[arg(long)]
    t_grid: Option<String>,
    /// `a,b,c` or `lo:hi:n` (log spaced).
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    eig_tol: Option<f64>,
    #[arg(long)]
    trace_tol: Option<f64>,
    /// Run with V = 0 (control runs only).
    #[arg(long)]
    free_control: bool,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// `rates(d=..,alpha=..,D0=..,law=..)`; otherwise derived from the experiment.
    #[arg(long)]
    bundle: Option<String>,
    #[arg(long, default_value = "10:1000:9")]
    t: String,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Sample index within the ensemble.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct TauberArgs {
    /// The t grid comes from `--t-grid` (default `1e4:1e6:5`).
    #[arg(long)]
    bundle: Option<String>,
    /// `log rho(x) = -scale x^(-d/alpha) g(1/x)`.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value = "1e-4:1e-2:5")]
    x_grid: String,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("cannot read grid `{text}`: expected `a,b,c` or `lo:hi:n`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            return Err(bad());
        }
        return Ok(log_spaced(lo, hi, n));
    }
    text.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn build_config(cli: &Cli, args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_toml_str(&read(path)?)?,
        None => {
            let law: LatticeLaw = args
                .law
                .as_deref()
                .ok_or_else(|| Error::Usage("give --config or at least --law".into()))?
                .parse()?;
            let phi = BernsteinSpec::drift(1.0)?;
            let site = SingleSite::box_indicator(args.d.unwrap_or(1), 0.5)?;
            let mut c = ExperimentConfig::new(phi, site, law, 100, 0);
            c.m_list = vec![8];
            c
        }
    };
    if let Some(phi) = &args.phi {
        config.phi = phi.parse()?;
    }
    if let Some(d) = args.d {
        config.d = d;
    }
    let site_text = args.site.clone().unwrap_or_else(|| config.site.to_string());
    config.site = SingleSite::parse(&site_text, config.d, config.phi.alpha())?;
    if let Some(law) = &args.law {
        config.law = law.parse()?;
    }
    if let Some(m) = &args.m {
        config.m_list = m.clone();
    }
    if let Some(n) = args.oversampling {
        config.oversampling = n;
    }
    if args.k.is_some() {
        config.k = args.k;
    }
    if let Some(cap) = args.k_cap {
        config.k_cap = cap;
    }
    if let Some(g) = &args.t_grid {
        config.t_grid = parse_grid(g)?;
    }
    if let Some(g) = &args.lambda_grid {
        config.lambda_grid = parse_grid(g)?;
    }
    if let Some(s) = args.samples {
        config.samples = s;
    }
    if let Some(tol) = args.eig_tol {
        config.eig_tol = tol;
    }
    if let Some(tol) = args.trace_tol {
        config.trace_tol = tol;
    }
    config.free_control |= args.free_control;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    config.threads = cli.threads;
    config.validate()?;
    Ok(config)
}

fn bundle_of(config: &ExperimentConfig) -> Result<RateBundle> {
    let d0 = compute_d0(&config.site, &config.phi)?;
    RateBundle::new(config.d, config.phi.alpha(), d0, config.law)
}

/// A `rates(...)` bundle from `--bundle`, a bundle file, or the experiment.
fn resolve_bundle(cli: &Cli, bundle: &Option<String>, args: &ExperimentArgs) -> Result<RateBundle> {
    if let Some(text) = bundle {
        return text.parse();
    }
    if let Some(path) = &cli.config {
        let text = read(path)?;
        if text.trim_start().starts_with("rates(") {
            return text.trim().parse();
        }
    }
    bundle_of(&build_config(cli, args)?)
}

fn out_dir(config: &ExperimentConfig, command: &str) -> PathBuf {
    config.output.clone().unwrap_or_else(|| PathBuf::from(format!("lab-out/{command}")))
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Clean,
    Flagged(usize),
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Rates(a) => {
            let bundle = resolve_bundle(cli, &a.bundle, &a.experiment)?;
            println!("# {bundle}  (gamma = {}, t0 = {})", format_g17(bundle.gamma()), format_g17(bundle.t0()));
            let mut text = String::from("t,x_t,h,rate_denominator,M_upper,M_lower\n");
            for t in parse_grid(&a.t)? {
                let choice = choose_m_of_t(&bundle, t)?;
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    format_g17(t),
                    format_g17(choice.x_t),
                    format_g17(bundle.h_eval(t)?),
                    format_g17(bundle.rate_denominator(t)?),
                    choice.upper,
                    choice.lower
                ));
            }
            print!("{text}");
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("rates.csv"), text)?;
            }
            Ok(Outcome::Clean)
        }
        Command::Spectrum(a) => {
            let mut config = build_config(cli, &a.experiment)?;
            let m = *config.m_list.first().ok_or_else(|| Error::Usage("give a torus side with --m".into()))?;
            config.m_list = vec![m];
            config.samples = a.sample + 1;
            config.t_grid.clear();
            config.lambda_grid.clear();
            let result = run_ensemble(&config)?;
            let s = &result.spectra[a.sample];
            println!("# M = {m}, sample {} (seed {}), {} of {} eigenvalues", s.sample, s.seed, s.values.len(), s.dim);
            println!("k,lambda,residual");
            for (k, (l, r)) in s.values.iter().zip(&s.residuals).enumerate() {
                println!("{},{},{}", k + 1, format_g17(*l), format_g17(*r));
            }
            Ok(Outcome::Clean)
        }
        Command::Laplace(a) | Command::Ids(a) => {
            let laplace = matches!(cli.command, Command::Laplace(_));
            let mut config = build_config(cli, a)?;
            let name = if laplace { "laplace" } else { "ids" };
            if laplace {
                config.lambda_grid.clear();
            } else {
                config.t_grid.clear();
            }
            let needed = if laplace { &config.t_grid } else { &config.lambda_grid };
            if needed.is_empty() {
                return Err(Error::Usage(format!("{name} needs a {} grid", if laplace { "t" } else { "lambda" })));
            }
            let full = run_ensemble(&config)?;
            let files = write_ensemble(&full, &config, name, &out_dir(&config, name))?;
            report_files(&files);
            let flagged = full.flagged_cells();
            println!("{} cells, {flagged} flagged (torus-proxy estimates)", full.laplace.len() + full.ids.len());
            Ok(if flagged > 0 { Outcome::Flagged(flagged) } else { Outcome::Clean })
        }
        Command::Study(a) => {
            let config = build_config(cli, a)?;
            let bundle = bundle_of(&config)?;
            let report = scaling_study(&config, &bundle)?;
            let files = write_study(&report, &config, &out_dir(&config, "study"))?;
            report_files(&files);
            println!(
                "ratio band over upper half: [{}, {}], factor {} ({})",
                format_g17(report.band.min),
                format_g17(report.band.max),
                format_g17(report.band.factor),
                if report.band.stable(STABLE_FACTOR) { "stable" } else { "not stable" }
            );
            if let Some((slope, err)) = report.exponent_fit {
                println!("loglog slope {} +- {}", format_g17(slope), format_g17(err));
            }
            let flagged = report.flagged_cells();
            Ok(if flagged > 0 { Outcome::Flagged(flagged) } else { Outcome::Clean })
        }
        Command::Tauber(a) => {
            let bundle = resolve_bundle(cli, &a.bundle, &a.experiment)?;
            let report = verify_tauberian_numeric(
                &bundle,
                SyntheticMeasure { scale: a.scale },
                &parse_grid(a.experiment.t_grid.as_deref().unwrap_or("1e4:1e6:5"))?,
                &parse_grid(&a.x_grid)?,
            )?;
            println!("t,log_L,rate_denominator,ratio");
            for r in &report.rows {
                println!("{},{},{},{}", format_g17(r.t), format_g17(r.log_l), format_g17(r.rate), format_g17(r.ratio));
            }
            println!("A1 = {}, A2 = {}", format_g17(report.a1), format_g17(report.a2));
            let failed = report.checks.iter().filter(|c| !c.holds).count();
            println!("{} of {} sandwich checks hold", report.checks.len() - failed, report.checks.len());
            if let Some(dir) = &cli.out {
                report_files(&write_tauber(&report, dir)?);
            }
            Ok(if failed > 0 { Outcome::Flagged(failed) } else { Outcome::Clean })
        }
        Command::Verify => verify(),
    }
}

/// Cheap cross-checks of the library against closed forms.
fn verify() -> Result<Outcome> {
    use lifshitz_core::bounds::binomial_tail_bound;
    use lifshitz_core::special::binomial_upper_tail;
    use lifshitz_core::torus::{kinetic_eigenvalues, laplacian_eigenvalues, lowest_eigenvalues};
    use lifshitz_core::torus::{SchrodingerOperator, SpectralOperator, TorusGrid};
    use std::f64::consts::PI;

    let mut checks: Vec<(&str, bool)> = vec![];

    let base = laplacian_eigenvalues(1, 50, 2);
    let scaled = laplacian_eigenvalues(4, 50, 2);
    checks.push(("torus eigenvalue scaling", base.iter().zip(&scaled).all(|(a, b)| (b * 16.0 - a).abs() <= 1e-12 * a.max(1.0))));

    let drift = BernsteinSpec::drift(1.0)?;
    let p = drift.heat_kernel_at_zero(1.0, 1)?;
    checks.push(("free heat kernel at zero", (p - (4.0 * PI).powf(-0.5)).abs() < 1e-6));

    let grid = TorusGrid::new(2, 1, 8)?;
    let op = SchrodingerOperator::free(SpectralOperator::new(grid, drift.clone()));
    let got = lowest_eigenvalues(&op, 5, 1e-10, 1)?.values;
    let want = kinetic_eigenvalues(2, &drift, 5, 1)?;
    checks.push(("Lanczos against Fourier modes", got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-8 * b.max(1.0))));

    let mut dominated = true;
    for n in [5u64, 20, 50] {
        for g in [0.3, 0.6, 0.9] {
            let k = (g * n as f64).ceil() as u64;
            dominated &= binomial_tail_bound(n, 0.2, g)? >= binomial_upper_tail(n, 0.2, k);
        }
    }
    checks.push(("binomial bound dominance", dominated));

    let bundle = RateBundle::new(1, 2.0, 1.0, LatticeLaw::exponential(1.0)?)?;
    let t = 1e6;
    let x = bundle.x_t(t)?;
    checks.push(("j(x_t) = t", ((bundle.j(x)? - t) / t).abs() < 1e-10));

    let unit: RateBundle = "rates(d=1,alpha=1,D0=1,law=atom(p0=0.36787944117144233,slope=1,gap=1))".parse()?;
    let l = SyntheticMeasure { scale: 1.0 }.log_laplace(&unit, 1e6)?;
    checks.push(("Laplace-method constant", (l.abs() / 1e3 - 2.0).abs() <= 0.1));

    for (name, ok) in &checks {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    if checks.iter().all(|c| c.1) {
        Ok(Outcome::Clean)
    } else {
        Err(Error::Numeric("self-check failed".into()))
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Parse(_) | Error::Config(_) | Error::Domain(_) | Error::Precondition(_) => 1,
        Error::Numeric(_) | Error::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged(n)) => {
            eprintln!("warning: {n} cells flagged as uncertified");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
