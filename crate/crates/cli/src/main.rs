//! Command-line driver: single traces, grid-point ensembles, sweeps,
//! collapses, and a built-in verification battery.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure (a manifest and
//! failure log are written when an output directory is known).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nhkrylov::bilanczos::{tridiagonalize, verify, BiLanczosOptions};
use nhkrylov::ensemble::{self, ExperimentConfig, Metric, TimeGridSpec};
use nhkrylov::krylov_dynamics::{
    default_time_grid, diagnostic_trace, evolve_krylov_chain, DirectEvolver, EvolutionMethod,
    EvolveOptions,
};
use nhkrylov::model::{build_hamiltonian, initial_plus_state, sample_disorder, SpinChainParams};
use nhkrylov::scaling::{collapse, CollapseGuess};
use nhkrylov::spectral::{sample_reference_ensemble, ensemble_csr_means, EnsembleKind};

#[derive(Parser)]
#[command(name = "nhkrylov", version, about = "Krylov-space diagnostics for disordered non-Hermitian spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the realization pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format for tabular data.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Chain length.
    #[arg(long)]
    l: usize,
    /// Gain/loss disorder half-width.
    #[arg(long)]
    w_gamma: f64,
    /// Detuning disorder half-width.
    #[arg(long, default_value_t = 1.0)]
    w_delta: f64,
    /// Transverse field.
    #[arg(long, default_value_t = 0.5)]
    h_field: f64,
    /// XY coupling (energy scale).
    #[arg(long, default_value_t = 1.0)]
    coupling: f64,
}

impl ModelArgs {
    fn params(&self) -> SpinChainParams {
        SpinChainParams {
            l: self.l,
            j: self.coupling,
            h: self.h_field,
            w_delta: self.w_delta,
            w_gamma: self.w_gamma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Rk,
    Eigen,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Goe,
    AiDagger,
    Poisson2d,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one disorder realization and write its diagnostic trace.
    Trace {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Eigen)]
        method: Method,
    },
    /// Disorder-averaged Lanczos-coefficient statistics at one grid point.
    Lanczos {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        realizations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Truncate the iteration at this many Krylov vectors.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Complex spacing-ratio statistics of the model or a reference ensemble.
    Csr {
        /// Reference ensemble instead of the spin chain.
        #[arg(long, value_enum)]
        reference: Option<Reference>,
        /// Matrix dimension for reference ensembles.
        #[arg(long, default_value_t = 1000)]
        dim: usize,
        /// Matrix count for reference ensembles.
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        l: usize,
        #[arg(long, default_value_t = 0.8)]
        w_gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        w_delta: f64,
        #[arg(long, default_value_t = 50)]
        realizations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Eigenstate entanglement statistics at one grid point.
    Entropy {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a multi-point sweep described by a JSON config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reuse completed points from an existing store in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Finite-size collapse of sweep output.
    Collapse {
        /// Observable column: sigma_K2, R_K_4, R_K_5, R_K_6, sigma_S, S_mean.
        #[arg(long)]
        observable: String,
        /// Directory holding a store.json written by `sweep`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Free the amplitude exponent (default: on for sigma_K2/sigma_S/S_mean).
        #[arg(long)]
        rescale_y: Option<bool>,
        #[arg(long)]
        w_c: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Built-in correctness battery at small sizes.
    Verify {
        #[arg(long, default_value_t = 4)]
        max_l: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders usage + valid flags; route everything through
            // stderr and the usage exit code
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(threads) = cli.threads {
        // a pre-existing global pool only happens in tests; ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out_dir = out_dir_of(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(dir) = out_dir {
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("failure.log"), format!("{e:#}\n"));
                }
            }
            ExitCode::from(2)
        }
    }
}

fn out_dir_of(cmd: &Command) -> Option<PathBuf> {
    match cmd {
        Command::Trace { out, .. }
        | Command::Lanczos { out, .. }
        | Command::Csr { out, .. }
        | Command::Entropy { out, .. }
        | Command::Sweep { out, .. } => Some(out.clone()),
        Command::Collapse { out, .. } => out.clone(),
        Command::Verify { .. } => None,
    }
}

fn write_manifest(dir: &Path, command: &str, payload: serde_json::Value) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = serde_json::json!({
        "command": command,
        "package_version": env!("CARGO_PKG_VERSION"),
        "resolved": payload,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// FNV-1a over the serialized dataset: a stable provenance fingerprint.
fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn single_point_config(
    params: &SpinChainParams,
    realizations: usize,
    seed: u64,
    metrics: BTreeSet<Metric>,
    cap: Option<usize>,
) -> ExperimentConfig {
    ExperimentConfig {
        l_list: vec![params.l],
        w_gamma_grid: vec![params.w_gamma],
        realizations_per_point: realizations,
        realizations_by_l: BTreeMap::new(),
        j: params.j,
        h: params.h,
        w_delta: params.w_delta,
        time_grid: TimeGridSpec::default(),
        metrics,
        base_seed: seed,
        krylov_dim_cap: cap,
        reciprocity_depths: vec![4, 5, 6],
        evolution: EvolutionMethod::Eigen,
        store_raw: false,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Trace { model, seed, out, method } => {
            let params = model.params();
            params.validate().context("model parameters")?;
            let disorder = sample_disorder(&params, seed);
            let h = build_hamiltonian(&params, &disorder)?;
            let psi0 = initial_plus_state(params.l);
            let opts = BiLanczosOptions { store_basis: false, ..Default::default() };
            let tri = tridiagonalize(&h, &psi0, &opts)?;
            let evolve = EvolveOptions {
                method: match method {
                    Method::Rk => EvolutionMethod::AdaptiveRk,
                    Method::Eigen => EvolutionMethod::Eigen,
                },
                ..Default::default()
            };
            let grid = default_time_grid();
            let trace = diagnostic_trace(&tri.form, &grid, &evolve)?;
            fs::create_dir_all(&out)?;
            match cli.format {
                Format::Csv => {
                    let mut buf = Vec::new();
                    trace.write_csv(&mut buf)?;
                    fs::write(out.join("trace.csv"), buf)?;
                }
                Format::Json => {
                    fs::write(out.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
                }
            }
            fs::write(
                out.join("disorder.json"),
                serde_json::to_string_pretty(&disorder)?,
            )?;
            write_manifest(
                &out,
                "trace",
                serde_json::json!({
                    "params": params, "seed": seed, "k_dim": tri.k(),
                    "evolution": evolve.method, "breakdown": tri.breakdown.is_some(),
                }),
            )?;
            println!("trace written to {}", out.display());
            Ok(())
        }
        Command::Lanczos { model, realizations, seed, out, cap } => {
            let params = model.params();
            let config = single_point_config(
                &params,
                realizations,
                seed,
                [Metric::Lanczos].into_iter().collect(),
                cap,
            );
            let store = ensemble::run_sweep(&config)?;
            ensemble::persist(&store, &out)?;
            write_manifest(&out, "lanczos", serde_json::to_value(&config)?)?;
            let p = &store.points[0];
            println!(
                "L = {}, W_gamma = {}: {} realizations, sigma_K2 = {:?}, R_K_4 = {:?}",
                p.l,
                p.w_gamma,
                p.n_success,
                p.scalars.get("sigma_K2").map(|a| a.mean),
                p.scalars.get("R_K_4").map(|a| a.mean),
            );
            Ok(())
        }
        Command::Csr { reference: Some(kind), dim, count, seed, out, .. } => {
            let kind = match kind {
                Reference::Goe => EnsembleKind::Goe,
                Reference::AiDagger => EnsembleKind::AiDagger,
                Reference::Poisson2d => EnsembleKind::Poisson2d,
            };
            let spectra = sample_reference_ensemble(kind, dim, count, seed)?;
            let (r_mean, cos_mean) = ensemble_csr_means(&spectra)?;
            fs::create_dir_all(&out)?;
            let mut rows = String::from("index,re,im\n");
            for (i, s) in spectra.iter().enumerate() {
                for z in &s.eigenvalues {
                    rows.push_str(&format!("{i},{},{}\n", z.re, z.im));
                }
            }
            fs::write(out.join("spectra.csv"), rows)?;
            fs::write(
                out.join("reference_csr.csv"),
                format!(
                    "kind,dim,count,r_mean,cos_theta_mean\n{kind:?},{dim},{count},{r_mean},{cos_mean}\n"
                ),
            )?;
            write_manifest(
                &out,
                "csr",
                serde_json::json!({"reference": kind, "dim": dim, "count": count, "seed": seed}),
            )?;
            println!("{kind:?}: ⟨r⟩ = {r_mean:.4}, ⟨cos θ⟩ = {cos_mean:.4}");
            Ok(())
        }
        Command::Csr { reference: None, l, w_gamma, w_delta, realizations, seed, out, .. } => {
            let params = SpinChainParams { l, j: 1.0, h: 0.5, w_delta, w_gamma };
            let config = single_point_config(
                &params,
                realizations,
                seed,
                [Metric::Csr].into_iter().collect(),
                None,
            );
            let store = ensemble::run_sweep(&config)?;
            ensemble::persist(&store, &out)?;
            write_manifest(&out, "csr", serde_json::to_value(&config)?)?;
            let p = &store.points[0];
            println!(
                "L = {l}, W_gamma = {w_gamma}: ⟨r⟩ = {:.4}, ⟨cos θ⟩ = {:.4} ({} realizations)",
                p.scalars["r_mean"].mean, p.scalars["cos_theta_mean"].mean, p.n_success
            );
            Ok(())
        }
        Command::Entropy { model, realizations, seed, out } => {
            let params = model.params();
            let config = single_point_config(
                &params,
                realizations,
                seed,
                [Metric::Entropy].into_iter().collect(),
                None,
            );
            let store = ensemble::run_sweep(&config)?;
            ensemble::persist(&store, &out)?;
            write_manifest(&out, "entropy", serde_json::to_value(&config)?)?;
            let p = &store.points[0];
            println!(
                "L = {}, W_gamma = {}: S_mean = {:.4}, sigma_S = {:.4}",
                p.l, p.w_gamma, p.scalars["S_mean"].mean, p.scalars["S_mean"].std
            );
            Ok(())
        }
        Command::Sweep { config, out, resume } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            let config: ExperimentConfig = serde_json::from_str(&text).context("parsing config")?;
            let prior = if resume { ensemble::load(&out).ok() } else { None };
            let store = ensemble::resume_sweep(&config, prior.as_ref())?;
            ensemble::persist(&store, &out)?;
            write_manifest(&out, "sweep", serde_json::to_value(&config)?)?;
            let flagged = store.points.iter().filter(|p| p.flagged).count();
            println!(
                "sweep complete: {} points, {} flagged, store at {}",
                store.points.len(),
                flagged,
                out.display()
            );
            Ok(())
        }
        Command::Collapse { observable, input, out, rescale_y, w_c, alpha, beta } => {
            let store = ensemble::load(&input)?;
            let data = store.scaling_dataset(&observable)?;
            let rescale = rescale_y.unwrap_or(!observable.starts_with("R_K"));
            let guess = match (w_c, alpha) {
                (Some(w_c), Some(alpha)) => {
                    Some(CollapseGuess { w_c, alpha, beta: beta.unwrap_or(0.0) })
                }
                _ => None,
            };
            let result = collapse(&data, rescale, guess)?;
            println!(
                "{observable}: W_c = {:.4}, alpha = {:.4}, beta = {:.4} (objective {:.3e}, {} iterations)",
                result.w_c, result.alpha, result.beta, result.objective, result.iterations
            );
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let payload = serde_json::json!({
                    "observable": observable,
                    "dataset_fingerprint": fingerprint(serde_json::to_string(&data)?.as_bytes()),
                    "rescale_y": rescale,
                    "init": guess,
                    "result": result,
                });
                fs::write(
                    dir.join(format!("collapse_{observable}.json")),
                    serde_json::to_string_pretty(&payload)?,
                )?;
                write_manifest(
                    &dir,
                    "collapse",
                    serde_json::json!({"observable": observable, "input": input}),
                )?;
            }
            Ok(())
        }
        Command::Verify { max_l, seed } => run_verify(max_l, seed),
    }
}

fn run_verify(max_l: usize, seed: u64) -> anyhow::Result<()> {
    let mut failures = 0usize;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
    };

    // hand-solvable non-Hermitian 2×2
    {
        use nhkrylov::model::{DenseOperator, StateVector};
        let h = DenseOperator::from_entries(ndarray::array![
            [nhkrylov::C64::new(0., 0.), nhkrylov::C64::new(1., 0.)],
            [nhkrylov::C64::new(2., 0.), nhkrylov::C64::new(0., 0.)]
        ])?;
        let psi = StateVector::from_amplitudes(ndarray::array![
            nhkrylov::C64::new(1., 0.),
            nhkrylov::C64::new(0., 0.)
        ]);
        let tri = tridiagonalize(&h, &psi, &BiLanczosOptions::default())?;
        let ok = (tri.form.b[0] - 2.0).abs() < 1e-14
            && (tri.form.c[0] - nhkrylov::C64::new(1.0, 0.0)).norm() < 1e-14;
        check("bilanczos/hand-2x2", ok, format!("b1 = {}, c1 = {}", tri.form.b[0], tri.form.c[0]));
    }

    // residuals over random realizations
    for l in 2..=max_l {
        for &w in &[0.0, 0.1, 1.0, 3.0] {
            let params = SpinChainParams::new(l, w);
            let disorder = sample_disorder(&params, seed ^ (l as u64) << 8);
            let h = build_hamiltonian(&params, &disorder)?;
            let psi = initial_plus_state(l);
            let tri = tridiagonalize(&h, &psi, &BiLanczosOptions::default())?;
            let basis = tri.basis.as_ref().unwrap();
            let rep = verify(&tri.form, basis, &h);
            let scale = h.frobenius_norm();
            let mut ok = rep.max_biorthogonality < 1e-8
                && rep.max_tridiagonal_residual < 1e-8 * scale;
            let mut detail = format!(
                "|QP-I| = {:.1e}, |QHP-T|/‖H‖ = {:.1e}",
                rep.max_biorthogonality,
                rep.max_tridiagonal_residual / scale
            );
            if w == 0.0 {
                let bc = tri
                    .form
                    .b
                    .iter()
                    .zip(tri.form.c.iter())
                    .map(|(&b, c)| (nhkrylov::C64::new(b, 0.0) - c).norm())
                    .fold(0.0, f64::max);
                ok &= bc < 1e-9;
                detail.push_str(&format!(", max|b-c| = {bc:.1e}"));
            }
            check(&format!("bilanczos/L{l}-w{w}"), ok, detail);
        }
    }

    // chain evolution against the direct-evolution oracle
    for l in [3usize, 4] {
        for &w in &[0.0, 1.0] {
            let params = SpinChainParams::new(l, w);
            let disorder = sample_disorder(&params, seed.wrapping_add(l as u64));
            let h = build_hamiltonian(&params, &disorder)?;
            let psi = initial_plus_state(l);
            let tri = tridiagonalize(&h, &psi, &BiLanczosOptions::default())?;
            let evolver = DirectEvolver::new(&h, &psi, tri.basis.as_ref().unwrap())?;
            let times = [1.0, 10.0];
            let chain = evolve_krylov_chain(&tri.form, &times, &EvolveOptions::eigen())?;
            let mut dev = 0.0f64;
            for wf in &chain {
                let oracle = evolver.at(wf.t);
                let a = wf.normalized()?;
                let b = oracle.normalized()?;
                dev = dev.max(
                    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max),
                );
            }
            check(
                &format!("oracle/L{l}-w{w}"),
                dev < 1e-6,
                format!("max normalized deviation = {dev:.1e}"),
            );
        }
    }

    // the two evolution routes agree
    {
        let params = SpinChainParams::new(4, 0.5);
        let disorder = sample_disorder(&params, seed);
        let h = build_hamiltonian(&params, &disorder)?;
        let psi = initial_plus_state(4);
        let tri = tridiagonalize(&h, &psi, &BiLanczosOptions::default())?;
        let times = [0.5, 5.0, 20.0];
        let rk = evolve_krylov_chain(&tri.form, &times, &EvolveOptions::default())?;
        let eig = evolve_krylov_chain(&tri.form, &times, &EvolveOptions::eigen())?;
        let mut dev = 0.0f64;
        for (a, b) in rk.iter().zip(eig.iter()) {
            let (na, nb) = (a.normalized()?, b.normalized()?);
            dev = dev
                .max(na.iter().zip(nb.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max));
        }
        check("evolution/rk-vs-eigen", dev < 1e-6, format!("max deviation = {dev:.1e}"));
    }

    if failures > 0 {
        bail!("{failures} verification checks failed");
    }
    println!("all checks passed");
    Ok(())
}
