use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mrr_core::domain::{Dataset, InitialMode};
use mrr_core::inference::{delta_aic, fit, survival_curve, Convergence, FitResult};
use mrr_core::io::{
    opt_sig17, opt_sig4, parse_encounter_strings, read_config, read_dataset, read_result, save_dataset, sig17, sig4,
    write_result, Config, ResultFile,
};
use mrr_core::kernels::InitialDistribution;
use mrr_core::simulation::{covariate_quantiles, simulate_dataset};
use mrr_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mrr", version, about = "Mark-recapture-recovery models with a continuous time-varying covariate")]
struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write a result file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Number of grid intervals, overriding the config.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Simulate a dataset from the `simulation` section of a config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent covariate paths as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Refit over several grid sizes and report log-likelihood differences to the largest.
    GridStudy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,80,100,150")]
        m_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every config to one dataset and print the AIC table.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Fitted survival curve with pointwise 95% bands.
    Curves {
        fitfile: PathBuf,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated covariate quantiles among survivors by age.
    Quantiles {
        fitfile: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9,10,11,12")]
        ages: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Initial covariate mean, required when the fit conditioned on it.
        #[arg(long)]
        init_mean: Option<f64>,
        #[arg(long)]
        init_sd: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert `id history [covariates]` encounter strings to a dataset file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Io(_) => 2,
        Error::Validation(_)
        | Error::ImpossibleHistory { .. }
        | Error::OutsideGrid { .. }
        | Error::IndexOutOfRange { .. }
        | Error::InstanceTooLarge { .. }
        | Error::MixedDatasets(..) => 3,
        Error::NonFiniteInit | Error::Optimization(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(5);
        }
    }
    let outcome = std::panic::catch_unwind(|| run(cli.command));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(5),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { data, config, m, out, label } => cmd_fit(&data, &config, m, out.as_deref(), label),
        Command::Simulate { config, seed, out, truth } => cmd_simulate(&config, seed, &out, truth.as_deref()),
        Command::GridStudy { data, config, m_list, out } => cmd_grid_study(&data, &config, &m_list, out.as_deref()),
        Command::Select { data, configs, m } => cmd_select(&data, &configs, m),
        Command::Curves { fitfile, group, from, to, points, out } => {
            cmd_curves(&fitfile, group.as_deref(), from, to, points, out.as_deref())
        }
        Command::Quantiles { fitfile, ages, paths, seed, init_mean, init_sd, out } => {
            cmd_quantiles(&fitfile, &ages, paths, seed, init_mean.zip(init_sd), out.as_deref())
        }
        Command::Convert { input, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", input.display()))))?;
            let data = parse_encounter_strings(&text)?;
            save_dataset(&data, &out)?;
            print_summary(&data);
            Ok(())
        }
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    let data = read_dataset(path)?;
    print_summary(&data);
    Ok(data)
}

fn print_summary(data: &Dataset) {
    let s = data.summary();
    println!(
        "individuals {}  occasions {}  live captures per individual {}  recovered dead {}  missing covariates {}%",
        s.individuals,
        s.occasions,
        sig4(s.mean_observations),
        s.recovered_dead,
        sig4(100.0 * s.missing_covariate_fraction)
    );
}

fn fit_config(data: &Dataset, config: &Config, m: Option<usize>, hessian: bool) -> Result<FitResult> {
    let spec = config.model()?.spec(data.occasions());
    let grid = config.grid.grid(data, m)?;
    let init = config.initial_values(&spec, data)?;
    let mut opts = config.optimizer;
    opts.compute_hessian &= hessian;
    fit(data, &spec, &grid, &init, &opts)
}

fn label_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

fn check_converged(fit: &FitResult) -> Result<()> {
    match fit.convergence {
        Convergence::Converged => Ok(()),
        other => Err(Error::Optimization(format!("`{}` stopped with {other:?}", fit.label))),
    }
}

fn cmd_fit(data: &Path, config_path: &Path, m: Option<usize>, out: Option<&Path>, label: Option<String>) -> Result<()> {
    let data = load_data(data)?;
    let mut config = read_config(config_path)?;
    if let Some(m) = m {
        config.grid.m = m;
    }
    let mut result = fit_config(&data, &config, None, true)?;
    result.label = label.unwrap_or_else(|| label_of(config_path));
    print_fit(&result);
    if let Some(out) = out {
        write_result(&ResultFile::new(config, result.clone()), out)?;
    }
    check_converged(&result)
}

fn print_fit(fit: &FitResult) {
    println!(
        "{}: log-likelihood {}  AIC {}  q {}  m {}  {:?} after {} iterations  {} s",
        fit.label,
        sig4(fit.max_loglik),
        sig4(fit.aic),
        fit.q,
        fit.grid.m(),
        fit.convergence,
        fit.iterations,
        sig4(fit.runtime_seconds)
    );
    println!("{:<16} {:>11} {:>11} {:>11} {:>11}", "parameter", "estimate", "se", "lower", "upper");
    for p in &fit.parameters {
        println!(
            "{:<16} {:>11} {:>11} {:>11} {:>11}{}",
            p.name,
            sig4(p.estimate),
            opt_sig4(p.se),
            opt_sig4(p.lower),
            opt_sig4(p.upper),
            if p.at_boundary { "  boundary" } else { "" }
        );
    }
    if let Some(d) = &fit.hessian_diagnostic {
        println!("note: {d}");
    }
}

fn cmd_simulate(config: &Path, seed: Option<u64>, out: &Path, truth: Option<&Path>) -> Result<()> {
    let config = read_config(config)?;
    let mut sim = config.simulation()?.clone();
    if let Some(seed) = seed {
        sim.seed = seed;
    }
    let simulated = simulate_dataset(&sim)?;
    save_dataset(&simulated.dataset, out)?;
    if let Some(path) = truth {
        let text = serde_json::to_string(&simulated.truth).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(path, text)?;
    }
    print_summary(&simulated.dataset);
    Ok(())
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_grid_study(data: &Path, config: &Path, m_list: &[usize], out: Option<&Path>) -> Result<()> {
    if m_list.is_empty() {
        return Err(Error::validation("--m-list is empty"));
    }
    let data = read_dataset(data)?;
    let config = read_config(config)?;
    let mut rows = Vec::new();
    for &m in m_list {
        let started = Instant::now();
        let mut result = fit_config(&data, &config, Some(m), false)?;
        result.label = format!("m={m}");
        check_converged(&result)?;
        rows.push((m, result, started.elapsed().as_secs_f64()));
    }
    let reference = rows.iter().max_by_key(|r| r.0).expect("non-empty").1.max_loglik;
    let names: Vec<String> =
        rows[0].1.parameters.iter().filter(|p| p.name.starts_with("beta")).map(|p| p.name.clone()).collect();
    let mut w = writer(out)?;
    writeln!(w, "m,loglik,difference,{},runtime_seconds", names.join(","))?;
    for (m, result, secs) in &rows {
        let estimates: Vec<String> = names.iter().map(|n| opt_sig17(result.parameter(n).map(|p| p.estimate))).collect();
        writeln!(
            w,
            "{m},{},{},{},{}",
            sig17(result.max_loglik),
            sig17(result.max_loglik - reference),
            estimates.join(","),
            sig17(*secs)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_select(data: &Path, configs: &[PathBuf], m: Option<usize>) -> Result<()> {
    let data = load_data(data)?;
    let mut fits = Vec::new();
    for path in configs {
        let config = read_config(path)?;
        let mut result = fit_config(&data, &config, m, false)?;
        result.label = label_of(path);
        check_converged(&result)?;
        fits.push(result);
    }
    let refs: Vec<&FitResult> = fits.iter().collect();
    println!("{:<24} {:>4} {:>12} {:>12} {:>8}", "model", "q", "loglik", "AIC", "dAIC");
    for row in delta_aic(&refs)? {
        println!(
            "{:<24} {:>4} {:>12} {:>12} {:>8}",
            row.label,
            row.q,
            sig4(row.max_loglik),
            sig4(row.aic),
            format!("{:.2}", row.delta_aic)
        );
    }
    Ok(())
}

fn cmd_curves(
    fitfile: &Path,
    group: Option<&str>,
    from: Option<f64>,
    to: Option<f64>,
    points: usize,
    out: Option<&Path>,
) -> Result<()> {
    let result = read_result(fitfile)?;
    let fit = &result.fit;
    let group = group.unwrap_or_else(|| fit.spec.age_groups.labels()[0].as_str());
    let (lo, hi) = (from.unwrap_or(fit.grid.lower()), to.unwrap_or(fit.grid.upper()));
    if points < 2 || !(lo < hi) {
        return Err(Error::validation("curves need at least 2 points over a non-empty range"));
    }
    let ys: Vec<f64> = (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect();
    let curve = survival_curve(fit, group, &ys)?;
    let mut w = writer(out)?;
    writeln!(w, "y,phi,lower,upper")?;
    for p in curve {
        writeln!(w, "{},{},{},{}", sig17(p.y), sig17(p.phi), opt_sig17(p.lower), opt_sig17(p.upper))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_quantiles(
    fitfile: &Path,
    ages: &[usize],
    paths: usize,
    seed: u64,
    initial: Option<(f64, f64)>,
    out: Option<&Path>,
) -> Result<()> {
    let result = read_result(fitfile)?;
    let fit = &result.fit;
    let mut params = fit.estimates.decode(&fit.spec)?;
    match (initial, fit.spec.initial) {
        (Some((mean, sd)), _) => params.initial = InitialDistribution::Normal { mean, sd },
        (None, InitialMode::EstimatedNormal) => {}
        (None, InitialMode::ConditionOnObserved) => {
            return Err(Error::validation(
                "the fit conditioned on the initial covariate; pass --init-mean and --init-sd",
            ))
        }
    }
    let rows = covariate_quantiles(&fit.spec, &params, ages, paths, seed)?;
    let mut w = writer(out)?;
    writeln!(w, "age,alive,q05,q50,q95")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.age, r.alive, opt_sig17(r.q05), opt_sig17(r.q50), opt_sig17(r.q95))?;
    }
    w.flush()?;
    Ok(())
}
