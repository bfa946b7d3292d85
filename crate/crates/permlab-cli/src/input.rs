//! Resolution of command-line measure and pattern arguments.

use anyhow::{bail, Context, Result};
use clap::Args;
use permlab::{BuiltinParams, Pattern, Permuton, PermutonSpec};

/// Measure selection shared by every subcommand that takes an input
/// permuton: either a path to a spec JSON file or `builtin:NAME` with the
/// name's parameters supplied as flags.
#[derive(Debug, Args)]
pub struct MuOpt {
    /// Permuton spec: a JSON file path, or `builtin:NAME` with NAME one of
    /// lebesgue, xi, xi11, xi22, mu_ell, rect_z, sstar.
    #[arg(long, value_name = "SPEC")]
    pub mu: String,

    /// Block parameter for `builtin:mu_ell` (in [0, 1]).
    #[arg(long, value_name = "ELL")]
    pub ell: Option<f64>,

    /// Rectangle parameter for `builtin:rect_z` and `builtin:sstar`.
    #[arg(long, value_name = "Z")]
    pub z: Option<f64>,

    /// One-line permutation for `builtin:sstar`, as digits ("2143") or
    /// comma-separated values ("2,1,4,3").
    #[arg(long, value_name = "PERM")]
    pub eta: Option<String>,
}

impl MuOpt {
    /// Materialize the measure, returning its spec (for hashing) alongside.
    pub fn resolve(&self) -> Result<(PermutonSpec, Permuton)> {
        let spec = if let Some(name) = self.mu.strip_prefix("builtin:") {
            let params = BuiltinParams {
                ell: self.ell,
                z: self.z,
                eta: self.eta.as_deref().map(parse_one_line).transpose()?,
            };
            PermutonSpec::builtin(name, params)
        } else {
            if self.ell.is_some() || self.z.is_some() || self.eta.is_some() {
                bail!("--ell/--z/--eta only apply to builtin: measures");
            }
            let text = std::fs::read_to_string(&self.mu)
                .with_context(|| format!("cannot read spec file {}", self.mu))?;
            PermutonSpec::from_json(&text)
                .with_context(|| format!("cannot parse spec file {}", self.mu))?
        };
        let mu = spec.to_permuton()?;
        Ok((spec, mu))
    }
}

/// Parse a one-line permutation given as digits or comma-separated values.
pub fn parse_one_line(s: &str) -> Result<Vec<usize>> {
    let vals: Vec<usize> = if s.contains(',') {
        s.split(',')
            .map(|p| p.trim().parse().with_context(|| format!("bad entry {p:?}")))
            .collect::<Result<_>>()?
    } else {
        s.chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as usize)
                    .with_context(|| format!("bad digit {c:?}"))
            })
            .collect::<Result<_>>()?
    };
    if vals.is_empty() {
        bail!("empty permutation");
    }
    Ok(vals)
}

/// Parse a pattern argument such as "21" or "132".
pub fn parse_pattern(s: &str) -> Result<Pattern> {
    Ok(Pattern::parse(s)?)
}

/// Parse a comma-separated list of floats (for scan axes).
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().with_context(|| format!("bad number {p:?}")))
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        bail!("empty list");
    }
    Ok(vals)
}
