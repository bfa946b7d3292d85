//! JSON descriptions of permutons.
//!
//! A [`PermutonSpec`] is the serializable counterpart of [`Permuton`]: a
//! small JSON vocabulary for grid measures, segment systems, mixtures, and
//! named builtin families, used by the command-line tools to accept measures
//! from files and to stamp outputs with a content hash of their input.
//!
//! The wire format is tagged by a `"type"` field:
//!
//! ```json
//! {"type":"grid","m":2,"density":[[1.5,0.5],[0.5,1.5]]}
//! {"type":"segments","segments":[{"from":[0.0,0.0],"to":[1.0,1.0],"weight":1.0}]}
//! {"type":"mixture","weights":[0.5,0.5],"components":[...]}
//! {"type":"builtin","name":"mu_ell","params":{"ell":0.5}}
//! ```
//!
//! Builtin names: `lebesgue`, `xi`, `xi11`, `xi22`, `mu_ell` (param `ell`),
//! `rect_z` (param `z`), `sstar` (params `eta`, `z`). Densities and weights
//! are validated when the spec is turned into a measure.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::{Permuton, Segment};
use crate::models::{mu_ell, rect_permuton, sstar_inflate, xi, xi11, xi22};
use crate::patterns::Permutation;

/// One segment of a `"segments"` spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    /// Start point `[x, y]`.
    pub from: [f64; 2],
    /// End point `[x, y]`.
    pub to: [f64; 2],
    /// Mass carried by the segment.
    pub weight: f64,
}

/// Parameters of a `"builtin"` spec; which fields are required depends on
/// the builtin name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuiltinParams {
    /// Block parameter for `mu_ell`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    /// Rectangle parameter for `rect_z` and `sstar`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// One-line pattern for `sstar`, e.g. `[2, 1, 4, 3]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<usize>>,
}

impl BuiltinParams {
    fn is_empty(&self) -> bool {
        self.ell.is_none() && self.z.is_none() && self.eta.is_none()
    }
}

/// Serializable description of a permuton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PermutonSpec {
    /// Piecewise-constant density: `density[ix][iy]` over an `m x m` grid.
    Grid { m: usize, density: Vec<Vec<f64>> },
    /// Weighted slope `+-1` segments.
    Segments { segments: Vec<SegmentSpec> },
    /// Convex combination of component specs.
    Mixture {
        weights: Vec<f64>,
        components: Vec<PermutonSpec>,
    },
    /// Named measure family, optionally parameterized.
    Builtin {
        name: String,
        #[serde(default, skip_serializing_if = "BuiltinParams::is_empty")]
        params: BuiltinParams,
    },
}

impl PermutonSpec {
    /// Parse a spec from JSON text.
    pub fn from_json(text: &str) -> Result<PermutonSpec> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("malformed permuton spec: {e}")))
    }

    /// Compact (single-line) JSON encoding; this is also the preimage of
    /// [`PermutonSpec::hash`].
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization cannot fail")
    }

    /// Human-oriented indented JSON encoding.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Hex SHA-256 of the compact JSON encoding; used to stamp outputs with
    /// the identity of their input measure.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Convenience constructor for a builtin spec.
    pub fn builtin(name: &str, params: BuiltinParams) -> PermutonSpec {
        PermutonSpec::Builtin {
            name: name.to_string(),
            params,
        }
    }

    /// Materialize the described measure, validating all parameters.
    pub fn to_permuton(&self) -> Result<Permuton> {
        match self {
            PermutonSpec::Grid { m, density } => {
                if density.len() != *m {
                    return Err(Error::InvalidInput(format!(
                        "grid spec declares m = {m} but has {} rows",
                        density.len()
                    )));
                }
                Permuton::grid(density.clone())
            }
            PermutonSpec::Segments { segments } => {
                let segs = segments
                    .iter()
                    .map(|s| {
                        Segment::new(
                            (s.from[0], s.from[1]),
                            (s.to[0], s.to[1]),
                            s.weight,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Permuton::segments(segs)
            }
            PermutonSpec::Mixture {
                weights,
                components,
            } => {
                if weights.len() != components.len() {
                    return Err(Error::InvalidInput(format!(
                        "mixture spec has {} weights for {} components",
                        weights.len(),
                        components.len()
                    )));
                }
                let parts = components
                    .iter()
                    .map(PermutonSpec::to_permuton)
                    .collect::<Result<Vec<_>>>()?;
                crate::measures::mix(parts, weights.clone())
            }
            PermutonSpec::Builtin { name, params } => builtin_permuton(name, params),
        }
    }

    /// Describe an existing measure (inverse of [`PermutonSpec::to_permuton`]
    /// up to builtin names: materialized measures round-trip as explicit
    /// grids, segments, and mixtures).
    pub fn from_permuton(mu: &Permuton) -> PermutonSpec {
        match mu {
            Permuton::Grid(g) => {
                let m = g.resolution();
                let density = (0..m)
                    .map(|ix| (0..m).map(|iy| g.density(ix, iy)).collect())
                    .collect();
                PermutonSpec::Grid { m, density }
            }
            Permuton::Segments(segs) => PermutonSpec::Segments {
                segments: segs
                    .iter()
                    .map(|s| SegmentSpec {
                        from: [s.from.0, s.from.1],
                        to: [s.to.0, s.to.1],
                        weight: s.weight,
                    })
                    .collect(),
            },
            Permuton::Mixture(parts) => PermutonSpec::Mixture {
                weights: parts.iter().map(|(w, _)| *w).collect(),
                components: parts
                    .iter()
                    .map(|(_, c)| PermutonSpec::from_permuton(c))
                    .collect(),
            },
        }
    }
}

fn require(param: Option<f64>, name: &str, builtin: &str) -> Result<f64> {
    param.ok_or_else(|| {
        Error::InvalidInput(format!("builtin '{builtin}' requires parameter '{name}'"))
    })
}

fn reject_params(params: &BuiltinParams, builtin: &str) -> Result<()> {
    if params.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "builtin '{builtin}' takes no parameters"
        )))
    }
}

fn builtin_permuton(name: &str, params: &BuiltinParams) -> Result<Permuton> {
    match name {
        "lebesgue" => {
            reject_params(params, name)?;
            Ok(Permuton::lebesgue())
        }
        "xi" => {
            reject_params(params, name)?;
            Ok(xi())
        }
        "xi11" => {
            reject_params(params, name)?;
            Ok(xi11())
        }
        "xi22" => {
            reject_params(params, name)?;
            Ok(xi22())
        }
        "mu_ell" => {
            if params.z.is_some() || params.eta.is_some() {
                return Err(Error::InvalidInput(
                    "builtin 'mu_ell' takes only the parameter 'ell'".into(),
                ));
            }
            mu_ell(require(params.ell, "ell", name)?)
        }
        "rect_z" => {
            if params.ell.is_some() || params.eta.is_some() {
                return Err(Error::InvalidInput(
                    "builtin 'rect_z' takes only the parameter 'z'".into(),
                ));
            }
            rect_permuton(require(params.z, "z", name)?)
        }
        "sstar" => {
            if params.ell.is_some() {
                return Err(Error::InvalidInput(
                    "builtin 'sstar' takes the parameters 'eta' and 'z'".into(),
                ));
            }
            let eta_values = params.eta.clone().ok_or_else(|| {
                Error::InvalidInput("builtin 'sstar' requires parameter 'eta'".into())
            })?;
            let eta = Permutation::new(eta_values)?;
            sstar_inflate(&eta, require(params.z, "z", name)?)
        }
        other => Err(Error::InvalidInput(format!(
            "unknown builtin permuton '{other}'"
        ))),
    }
}
