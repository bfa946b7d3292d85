//! One function per subcommand. Each resolves its inputs, runs the library,
//! renders a [`Rendered`] payload, and returns the process exit code:
//! `0` success, `3` soft numerical non-convergence under `--strict`.
//! Hard failures (no result at all) surface as errors and are classified in
//! `main`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::json;

use permlab::models::{
    cc_test_21, curie_weiss_root, mallows_el_residual, mallows_grid, phase_scan_row,
    support_diagnostics_21, xi_conditional_optimizers, xi_gibbs_optimizers, PhaseScanConfig,
    PhaseScanRow,
};
use permlab::patterns::{t_sigma_measure_exact, t_sigma_measure_mc, t_sigma_perm};
use permlab::sampling::{
    exact_gibbs_pmf, gibbs_mcmc_observe, sample_mu_random_perm, ChainConfig, GibbsParams,
    Proposal,
};
use permlab::variational::{
    canonical_inits, conditional_optimizer, multi_start_optimize, solve_el, FieldBase, Init,
    SolveConfig,
};
use permlab::{CcVerdict, Error as LibError, Permuton, PermutonSpec};

use crate::input::{parse_f64_list, parse_pattern, MuOpt};
use crate::output::{num, OutOpt, Rendered, Table};

/// RNG seed shared by the sampling subcommands.
#[derive(Debug, Args)]
pub struct SeedOpt {
    /// RNG seed; the PERMLAB_SEED environment variable supplies the default.
    #[arg(long, env = "PERMLAB_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Fixed-point solver settings shared by the variational subcommands.
#[derive(Debug, Args)]
pub struct SolverOpt {
    /// Field resolution for grid bases.
    #[arg(long, default_value_t = 64)]
    pub m: usize,

    /// Parameter bins per segment for segment bases.
    #[arg(long, default_value_t = 64)]
    pub bins: usize,

    /// L1 residual tolerance of the fixed-point iteration.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Iteration cap.
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: u64,

    /// Mixing weight of the damped iteration, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
}

impl SolverOpt {
    fn config(&self, init: Init) -> SolveConfig {
        SolveConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            init,
            grid_m: self.m,
            bins: self.bins,
            cluster_radius: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// Start from the base density.
    Uniform,
    /// Start from a seeded random positive field.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProposalArg {
    /// Resample one point of the configuration (any base measure).
    PointResample,
    /// Swap adjacent values (uniform base measure only).
    AdjacentTransposition,
}

impl From<ProposalArg> for Proposal {
    fn from(p: ProposalArg) -> Proposal {
        match p {
            ProposalArg::PointResample => Proposal::PointResample,
            ProposalArg::AdjacentTransposition => Proposal::AdjacentTransposition,
        }
    }
}

/// Run `body` on a dedicated rayon pool of `jobs` threads when given.
fn with_pool<T: Send>(jobs: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(j).build()?;
            Ok(pool.install(body))
        }
        None => Ok(body()),
    }
}

fn write_density(path: &Option<PathBuf>, measure: &Permuton) -> Result<()> {
    if let Some(p) = path {
        crate::output::write_spec(p, &PermutonSpec::from_permuton(measure))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

/// Draw mu-random permutations.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: index,values (values space-separated).")]
pub struct SampleArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Permutation size.
    #[arg(long)]
    pub n: usize,

    /// Number of permutations to draw.
    #[arg(long, default_value_t = 1)]
    pub count: u64,

    #[command(flatten)]
    pub seed: SeedOpt,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn sample(args: &SampleArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed.seed);
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(args.count as usize);
    for _ in 0..args.count {
        perms.push(sample_mu_random_perm(&mu, args.n, &mut rng)?.values().to_vec());
    }
    let rows = perms
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            ]
        })
        .collect();
    let payload = Rendered {
        json: json!({
            "n": args.n,
            "count": args.count,
            "seed": args.seed.seed,
            "perms": perms,
        }),
        csv: Table::Records {
            header: vec!["index", "values"],
            rows,
        },
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// tsigma
// ---------------------------------------------------------------------------

/// Pattern density of a measure, exact or Monte Carlo.
#[derive(Debug, Args)]
#[command(after_help = "CSV: with --exact a bare value; otherwise columns \
value,stderr,n_samples,seed.")]
pub struct TsigmaArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Pattern in compact digit form, e.g. 21 or 132.
    #[arg(long)]
    pub sigma: String,

    /// Exact evaluation (sizes 1-3; size 3 needs a grid of resolution <= 16).
    #[arg(long, conflicts_with = "samples")]
    pub exact: bool,

    /// Monte Carlo sample count (used when --exact is absent).
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,

    #[command(flatten)]
    pub seed: SeedOpt,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn tsigma(args: &TsigmaArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let sigma = parse_pattern(&args.sigma)?;
    let payload = if args.exact {
        let value = t_sigma_measure_exact(&sigma, &mu)?;
        Rendered {
            json: json!({ "sigma": args.sigma, "exact": true, "value": value }),
            csv: Table::Scalar(num(value)),
        }
    } else {
        let est = t_sigma_measure_mc(&sigma, &mu, args.samples, args.seed.seed)?;
        Rendered {
            json: json!({
                "sigma": args.sigma,
                "exact": false,
                "value": est.value,
                "stderr": est.stderr,
                "n_samples": est.n_samples,
                "seed": est.seed,
            }),
            csv: Table::Records {
                header: vec!["value", "stderr", "n_samples", "seed"],
                rows: vec![vec![
                    num(est.value),
                    num(est.stderr),
                    est.n_samples.to_string(),
                    est.seed.to_string(),
                ]],
            },
        }
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// gibbs
// ---------------------------------------------------------------------------

/// MCMC sampling of the Gibbs permutation model with summary statistics.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: chain,seed,samples,acceptance_rate,\
mean_t,stderr_t. Chain seeds derive deterministically from --seed; results \
do not depend on --jobs.")]
pub struct GibbsArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Pattern defining the energy, e.g. 21.
    #[arg(long)]
    pub sigma: String,

    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    /// Permutation size.
    #[arg(long)]
    pub n: usize,

    /// Samples to emit per chain (after burn-in, thinned).
    #[arg(long, default_value_t = 1000)]
    pub samples: u64,

    /// Number of independent chains.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,

    /// Proposal kernel.
    #[arg(long, value_enum, default_value_t = ProposalArg::PointResample)]
    pub proposal: ProposalArg,

    /// Burn-in steps (default 100 * n).
    #[arg(long)]
    pub burn_in: Option<u64>,

    /// Thinning interval (default n).
    #[arg(long)]
    pub thinning: Option<u64>,

    /// Worker threads for parallel chains.
    #[arg(long)]
    pub jobs: Option<usize>,

    #[command(flatten)]
    pub seed: SeedOpt,

    #[command(flatten)]
    pub out: OutOpt,
}

struct ChainSummary {
    seed: u64,
    samples: u64,
    acceptance: f64,
    mean_t: f64,
    stderr_t: f64,
}

pub fn gibbs(args: &GibbsArgs) -> Result<i32> {
    if args.chains == 0 {
        bail!("--chains must be positive");
    }
    let (spec, mu) = args.mu.resolve()?;
    let sigma = parse_pattern(&args.sigma)?;
    let params = GibbsParams {
        sigma: sigma.clone(),
        mu,
        theta: args.theta,
        n: args.n,
    };
    let burn_in = args.burn_in.unwrap_or(100 * args.n as u64);
    let thinning = args.thinning.unwrap_or(args.n as u64);
    // Per-chain seeds drawn once from the base seed: independent of --jobs.
    let mut seed_rng = ChaCha12Rng::seed_from_u64(args.seed.seed);
    let seeds: Vec<u64> = (0..args.chains).map(|_| seed_rng.gen()).collect();

    let run_chain = |chain_seed: u64| -> Result<ChainSummary> {
        let config = ChainConfig::new(
            burn_in + args.samples * thinning,
            burn_in,
            thinning,
            chain_seed,
            args.proposal.into(),
        )?;
        let (mut sum, mut sumsq, mut count) = (0.0_f64, 0.0_f64, 0u64);
        let stats = gibbs_mcmc_observe(&params, &config, |pi| {
            let t = t_sigma_perm(&sigma, pi);
            sum += t;
            sumsq += t * t;
            count += 1;
        })?;
        let mean = sum / count as f64;
        let var = (sumsq / count as f64 - mean * mean).max(0.0);
        Ok(ChainSummary {
            seed: chain_seed,
            samples: stats.samples_emitted,
            acceptance: stats.accepted as f64 / stats.proposed as f64,
            mean_t: mean,
            stderr_t: (var / count as f64).sqrt(),
        })
    };

    let summaries: Vec<ChainSummary> = with_pool(args.jobs, || {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| run_chain(s)).collect::<Result<Vec<_>>>()
    })??;

    let mean_t = summaries.iter().map(|c| c.mean_t).sum::<f64>() / summaries.len() as f64;
    let rows = summaries
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                i.to_string(),
                c.seed.to_string(),
                c.samples.to_string(),
                num(c.acceptance),
                num(c.mean_t),
                num(c.stderr_t),
            ]
        })
        .collect();
    let payload = Rendered {
        json: json!({
            "sigma": args.sigma,
            "theta": args.theta,
            "n": args.n,
            "burn_in": burn_in,
            "thinning": thinning,
            "mean_t": mean_t,
            "chains": summaries.iter().enumerate().map(|(i, c)| json!({
                "chain": i,
                "seed": c.seed,
                "samples": c.samples,
                "acceptance_rate": c.acceptance,
                "mean_t": c.mean_t,
                "stderr_t": c.stderr_t,
            })).collect::<Vec<_>>(),
        }),
        csv: Table::Records {
            header: vec!["chain", "seed", "samples", "acceptance_rate", "mean_t", "stderr_t"],
            rows,
        },
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// pmf
// ---------------------------------------------------------------------------

/// Exact Gibbs probability table over the uniform measure (n <= 8).
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: perm,prob (one-line digit form, all of \
S_n in lexicographic order).")]
pub struct PmfArgs {
    /// Pattern defining the energy.
    #[arg(long)]
    pub sigma: String,

    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    /// Permutation size (at most 8).
    #[arg(long)]
    pub n: usize,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn pmf(args: &PmfArgs) -> Result<i32> {
    let sigma = parse_pattern(&args.sigma)?;
    let params = GibbsParams {
        sigma,
        mu: Permuton::lebesgue(),
        theta: args.theta,
        n: args.n,
    };
    let table = exact_gibbs_pmf(&params)?;
    let digits = |vals: &[usize]| {
        vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("")
    };
    let rows = table
        .perms
        .iter()
        .zip(&table.probs)
        .map(|(p, q)| vec![digits(p.values()), num(*q)])
        .collect();
    let payload = Rendered {
        json: json!({
            "sigma": args.sigma,
            "theta": args.theta,
            "n": args.n,
            "free_energy": table.free_energy(),
            "mean_t_sigma": table.mean_t_sigma(),
            "entries": table.perms.iter().zip(&table.probs).map(|(p, q)| json!({
                "perm": digits(p.values()),
                "prob": q,
            })).collect::<Vec<_>>(),
        }),
        csv: Table::Records {
            header: vec!["perm", "prob"],
            rows,
        },
    };
    args.out.emit(None, payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// Solve the Euler-Lagrange fixed-point equation at one tilt.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows theta, free_energy, t_sigma, \
iterations, residual, converged, certified_unique.")]
pub struct SolveArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Pattern defining the energy.
    #[arg(long)]
    pub sigma: String,

    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    #[command(flatten)]
    pub solver: SolverOpt,

    /// Initialization of the iteration.
    #[arg(long, value_enum, default_value_t = InitArg::Uniform)]
    pub init: InitArg,

    /// Write the optimizer measure as a permuton spec JSON file.
    #[arg(long, value_name = "PATH")]
    pub density_out: Option<PathBuf>,

    /// Exit 3 when the iteration hits the cap without converging.
    #[arg(long)]
    pub strict: bool,

    #[command(flatten)]
    pub seed: SeedOpt,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn solve(args: &SolveArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let sigma = parse_pattern(&args.sigma)?;
    let init = match args.init {
        InitArg::Uniform => Init::Uniform,
        InitArg::Random => Init::Random(args.seed.seed),
    };
    let cfg = args.solver.config(init);
    let (field, report) = solve_el(&sigma, &mu, args.theta, &cfg)?;
    write_density(&args.density_out, &field.to_permuton()?)?;
    let payload = Rendered {
        json: serde_json::to_value(&report)?,
        csv: Table::KeyValue(vec![
            ("theta", num(report.theta)),
            ("free_energy", num(report.free_energy)),
            ("t_sigma", num(report.t_sigma)),
            ("iterations", report.iterations.to_string()),
            ("residual", num(report.residual)),
            ("converged", report.converged.to_string()),
            ("certified_unique", report.certified_unique.to_string()),
        ]),
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    if !report.converged {
        eprintln!(
            "warning: not converged after {} iterations (residual {})",
            report.iterations, report.residual
        );
        if args.strict {
            return Ok(3);
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// free-energy
// ---------------------------------------------------------------------------

/// Free energy via multi-start fixed-point optimization.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows theta, free_energy, t_sigma, \
clusters, failed_starts.")]
pub struct FreeEnergyArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Pattern defining the energy.
    #[arg(long)]
    pub sigma: String,

    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    #[command(flatten)]
    pub solver: SolverOpt,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn free_energy(args: &FreeEnergyArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let sigma = parse_pattern(&args.sigma)?;
    let cfg = args.solver.config(Init::Uniform);
    let base = FieldBase::for_measure(&mu, cfg.grid_m, cfg.bins)?;
    let report = multi_start_optimize(&sigma, &mu, args.theta, canonical_inits(&base), &cfg)?;
    let best = report
        .clusters
        .first()
        .ok_or(LibError::NonConvergence { theta: args.theta })?;
    let payload = Rendered {
        json: json!({
            "theta": args.theta,
            "free_energy": best.report.free_energy,
            "t_sigma": best.report.t_sigma,
            "clusters": report.clusters.len(),
            "failed_starts": report.failed,
        }),
        csv: Table::KeyValue(vec![
            ("theta", num(args.theta)),
            ("free_energy", num(best.report.free_energy)),
            ("t_sigma", num(best.report.t_sigma)),
            ("clusters", report.clusters.len().to_string()),
            ("failed_starts", report.failed.to_string()),
        ]),
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// condition
// ---------------------------------------------------------------------------

/// Calibrate the tilt whose optimizer attains a target pattern density.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows delta, theta_hat, t_sigma, \
g_value, free_energy, iterations, converged.")]
pub struct ConditionArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Pattern defining the energy.
    #[arg(long)]
    pub sigma: String,

    /// Target pattern density.
    #[arg(long)]
    pub delta: f64,

    /// Calibration tolerance on the achieved density.
    #[arg(long, default_value_t = 1e-6)]
    pub delta_tol: f64,

    #[command(flatten)]
    pub solver: SolverOpt,

    /// Write the optimizer measure as a permuton spec JSON file.
    #[arg(long, value_name = "PATH")]
    pub density_out: Option<PathBuf>,

    /// Exit 3 when the inner solver fails to converge.
    #[arg(long)]
    pub strict: bool,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn condition(args: &ConditionArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let sigma = parse_pattern(&args.sigma)?;
    let cfg = args.solver.config(Init::Uniform);
    let (field, report) = conditional_optimizer(&sigma, &mu, args.delta, args.delta_tol, &cfg)?;
    write_density(&args.density_out, &field.to_permuton()?)?;
    let payload = Rendered {
        json: json!({
            "delta": args.delta,
            "report": serde_json::to_value(&report)?,
        }),
        csv: Table::KeyValue(vec![
            ("delta", num(args.delta)),
            ("theta_hat", num(report.theta_hat)),
            ("t_sigma", num(report.t_sigma)),
            ("g_value", num(report.g_value)),
            ("free_energy", num(report.solve.free_energy)),
            ("iterations", report.solve.iterations.to_string()),
            ("converged", report.solve.converged.to_string()),
        ]),
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    if !report.solve.converged && args.strict {
        return Ok(3);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// phase-scan
// ---------------------------------------------------------------------------

/// Scan conditioned optimizers over a (ell, delta) grid of block measures.
#[derive(Debug, Args)]
#[command(after_help = "CSV columns: ell,delta,clusters,G,separated,d11,d22,\
offdiag (quadrant masses of the best cluster). Row order follows the \
argument lists; results do not depend on --jobs.")]
pub struct PhaseScanArgs {
    /// Comma-separated block parameters ell of the base measures.
    #[arg(long, value_name = "LIST")]
    pub ell: String,

    /// Comma-separated target densities delta.
    #[arg(long, value_name = "LIST")]
    pub delta: String,

    /// Field resolution for the solves.
    #[arg(long, default_value_t = 32)]
    pub m: usize,

    /// L1 residual tolerance of the fixed-point iteration.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,

    /// Iteration cap per solve.
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: u64,

    /// Calibration tolerance on the achieved density.
    #[arg(long, default_value_t = 1e-6)]
    pub delta_tol: f64,

    /// Projection resolution of the separation test.
    #[arg(long, default_value_t = 256)]
    pub dmat_resolution: usize,

    /// Worker threads for parallel rows.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Exit 3 when any row fails to converge.
    #[arg(long)]
    pub strict: bool,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn phase_scan(args: &PhaseScanArgs) -> Result<i32> {
    let ells = parse_f64_list(&args.ell)?;
    let deltas = parse_f64_list(&args.delta)?;
    let mut cfg = PhaseScanConfig::default();
    cfg.solve.grid_m = args.m;
    cfg.solve.tol = args.tol;
    cfg.solve.max_iter = args.max_iter;
    cfg.delta_tol = args.delta_tol;
    cfg.dmat_resolution = args.dmat_resolution;

    let pairs: Vec<(f64, f64)> = ells
        .iter()
        .flat_map(|&e| deltas.iter().map(move |&d| (e, d)))
        .collect();
    let results: Vec<permlab::Result<PhaseScanRow>> = with_pool(args.jobs, || {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|&(e, d)| phase_scan_row(e, d, &cfg))
            .collect()
    })?;

    let mut rows: Vec<PhaseScanRow> = Vec::new();
    let mut failures: Vec<(f64, f64, String)> = Vec::new();
    for (&(e, d), res) in pairs.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(err) => {
                eprintln!("warning: row ell={e} delta={d} failed: {err}");
                failures.push((e, d, err.to_string()));
            }
        }
    }

    let csv_rows = rows
        .iter()
        .map(|r| {
            let best = r.cluster_summaries.first();
            vec![
                num(r.ell),
                num(r.delta),
                r.clusters.to_string(),
                num(r.g_value),
                r.separated.to_string(),
                best.map_or_else(String::new, |c| num(c.d11)),
                best.map_or_else(String::new, |c| num(c.d22)),
                best.map_or_else(String::new, |c| num(c.offdiag)),
            ]
        })
        .collect();
    let payload = Rendered {
        json: json!({
            "rows": rows,
            "failed": failures.iter().map(|(e, d, msg)| json!({
                "ell": e, "delta": d, "error": msg,
            })).collect::<Vec<_>>(),
        }),
        csv: Table::Records {
            header: vec!["ell", "delta", "clusters", "G", "separated", "d11", "d22", "offdiag"],
            rows: csv_rows,
        },
    };
    args.out.emit(None, payload)?;
    if !failures.is_empty() && args.strict {
        return Ok(3);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// cc-check
// ---------------------------------------------------------------------------

/// Test whether the inversion pair weight is constant on the support.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows verdict (cc|cnc), constant or \
max_deviation, mean, samples.")]
pub struct CcCheckArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Deviation tolerance for the constancy verdict.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    /// Support sampling resolution.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn cc_check(args: &CcCheckArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let report = cc_test_21(&mu, args.tol, args.resolution)?;
    let mut kv = vec![(
        "verdict",
        match report.verdict {
            CcVerdict::ConditionallyConstant { .. } => "cc".to_string(),
            CcVerdict::NotConstant { .. } => "cnc".to_string(),
        },
    )];
    match &report.verdict {
        CcVerdict::ConditionallyConstant { constant } => kv.push(("constant", num(*constant))),
        CcVerdict::NotConstant { max_deviation, .. } => {
            kv.push(("max_deviation", num(*max_deviation)));
        }
    }
    kv.push(("mean", num(report.mean)));
    kv.push(("samples", report.samples.to_string()));
    let payload = Rendered {
        json: serde_json::to_value(&report)?,
        csv: Table::KeyValue(kv),
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// support-diag
// ---------------------------------------------------------------------------

/// Support-shape diagnostics: interior mass and the anti-diagonal frontier.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows has_interior_mass, \
frontier_intercept, frontier_rms, frontier_samples, mass_below_frontier \
(frontier fields empty when no frontier exists).")]
pub struct SupportDiagArgs {
    #[command(flatten)]
    pub mu: MuOpt,

    /// Support sampling resolution.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn support_diag(args: &SupportDiagArgs) -> Result<i32> {
    let (spec, mu) = args.mu.resolve()?;
    let diag = support_diagnostics_21(&mu, args.resolution)?;
    let payload = Rendered {
        json: serde_json::to_value(&diag)?,
        csv: Table::KeyValue(vec![
            ("has_interior_mass", diag.has_interior_mass.to_string()),
            (
                "frontier_intercept",
                diag.frontier.as_ref().map_or_else(String::new, |f| num(f.intercept)),
            ),
            (
                "frontier_rms",
                diag.frontier.as_ref().map_or_else(String::new, |f| num(f.rms_residual)),
            ),
            (
                "frontier_samples",
                diag.frontier.as_ref().map_or_else(String::new, |f| f.samples.to_string()),
            ),
            ("mass_below_frontier", num(diag.mass_below_frontier)),
        ]),
    };
    args.out.emit(Some(&spec.hash()), payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// mallows
// ---------------------------------------------------------------------------

/// Discretized Mallows optimizer density and its fixed-point residual.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows theta, m, h, el_residual, t_21. \
Use --density-out to save the grid as a spec file.")]
pub struct MallowsArgs {
    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    /// Grid resolution.
    #[arg(long, default_value_t = 256)]
    pub m: usize,

    /// Step of the finite-difference residual check (needs 0 < 2h < 1/m).
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,

    /// Write the density grid as a permuton spec JSON file.
    #[arg(long, value_name = "PATH")]
    pub density_out: Option<PathBuf>,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn mallows(args: &MallowsArgs) -> Result<i32> {
    let grid = mallows_grid(args.theta, args.m)?;
    let residual = mallows_el_residual(args.theta, args.m, args.h)?;
    let t21 = permlab::patterns::t_21_measure_exact(&grid)?;
    write_density(&args.density_out, &grid)?;
    let payload = Rendered {
        json: json!({
            "theta": args.theta,
            "m": args.m,
            "h": args.h,
            "el_residual": residual,
            "t_21": t21,
        }),
        csv: Table::KeyValue(vec![
            ("theta", num(args.theta)),
            ("m", args.m.to_string()),
            ("h", num(args.h)),
            ("el_residual", num(residual)),
            ("t_21", num(t21)),
        ]),
    };
    args.out.emit(None, payload)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// xi
// ---------------------------------------------------------------------------

/// Closed forms of the two-block family: magnetization and optimizer weights.
#[derive(Debug, Args)]
#[command(after_help = "CSV: key,value rows theta, m2, optimizers, \
optimizer_K_weights; with --delta also delta, p_conditional, g_value, \
conditioned_optimizers.")]
pub struct XiArgs {
    /// Inverse-temperature tilt.
    #[arg(long)]
    pub theta: f64,

    /// Also report the conditioned closed forms at this target density.
    #[arg(long)]
    pub delta: Option<f64>,

    #[command(flatten)]
    pub out: OutOpt,
}

pub fn xi(args: &XiArgs) -> Result<i32> {
    let m2 = curie_weiss_root(args.theta);
    let optimizers = xi_gibbs_optimizers(args.theta);
    let p = (1.0 + m2) / 2.0;
    let q = (1.0 - m2) / 2.0;
    let weight_pairs: Vec<[f64; 2]> = if optimizers.len() == 1 {
        vec![[0.5, 0.5]]
    } else {
        vec![[p, q], [q, p]]
    };
    let mut kv = vec![
        ("theta", num(args.theta)),
        ("m2", num(m2)),
        ("optimizers", optimizers.len().to_string()),
    ];
    let weight_keys: [&'static str; 2] = ["optimizer_1_weights", "optimizer_2_weights"];
    for (i, pair) in weight_pairs.iter().enumerate() {
        kv.push((weight_keys[i], format!("{} {}", num(pair[0]), num(pair[1]))));
    }
    let conditioned = match args.delta {
        Some(delta) => {
            let xc = xi_conditional_optimizers(delta)?;
            kv.push(("delta", num(delta)));
            kv.push(("p_conditional", num(xc.p)));
            kv.push(("g_value", num(xc.g_value)));
            kv.push(("conditioned_optimizers", xc.optimizers.len().to_string()));
            json!({
                "delta": delta,
                "p": xc.p,
                "t_sigma": xc.t_sigma,
                "g_value": xc.g_value,
                "optimizer_weights": [[xc.p, 1.0 - xc.p], [1.0 - xc.p, xc.p]],
            })
        }
        None => serde_json::Value::Null,
    };
    let payload = Rendered {
        json: json!({
            "theta": args.theta,
            "m2": m2,
            "optimizer_weights": weight_pairs,
            "conditioned": conditioned,
        }),
        csv: Table::KeyValue(kv),
    };
    args.out.emit(None, payload)?;
    Ok(0)
}
