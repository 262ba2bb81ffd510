//! Exact laws of the sums of squares.
//!
//! Conditionally on every random effect the model is a fixed-effects model,
//! so each sum of squares is `σ²χ²(df, γ₁/σ²)` where `γ₁` is the same sum of
//! squares evaluated on the conditional mean. That mean is the fixed
//! structure plus the random effects; projected onto a source it is normal
//! with isotropic covariance `c₂·I`, so `γ₁ ~ c₂χ²(df, γ₂/c₂)` with `γ₂` the
//! sum of squares of the fixed structure alone. Compounding then gives the
//! marginal law `(σ² + c₂)χ²(df, γ₂/(σ² + c₂))`.

use serde::Serialize;

use crate::anova::{denominators, symbolic_ems, SsPlan};
use crate::designs::{ModelParams, ModelSpec};
use crate::distributions::{compound, ScaledF, ScaledNoncentralChiSquare};
use crate::error::{Error, Result};

/// The law of the conditional noncentrality `γ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noncentrality {
    /// No random effect reaches this source: `γ₁` is a constant.
    Fixed { value: f64 },
    /// `γ₁` is itself a scaled (noncentral) chi-square.
    Random { law: ScaledNoncentralChiSquare },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalLaw {
    pub source: String,
    /// Conditional scale `c₁` (the residual variance).
    pub scale: f64,
    pub df: u32,
    pub gamma1: Noncentrality,
}

/// The compounding step that produced a marginal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivation {
    pub c1: f64,
    pub df: u32,
    pub c2: f64,
    pub gamma2: f64,
    /// Whether the step used a noncentral mixing law (`c₂ > 0` and `γ₂ > 0`).
    pub noncentral_mixing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsLaw {
    pub source: String,
    pub law: ScaledNoncentralChiSquare,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsLawSet {
    pub laws: Vec<SsLaw>,
    /// The listed sums of squares are mutually independent.
    pub independent: bool,
}

impl SsLawSet {
    pub fn get(&self, source: &str) -> Option<&SsLaw> {
        self.laws.iter().find(|l| l.source == source)
    }

    /// Sources whose derivation compounded with a noncentral mixing law.
    pub fn noncentral_mixing_sources(&self) -> Vec<String> {
        self.laws
            .iter()
            .filter(|l| l.derivation.noncentral_mixing)
            .map(|l| l.source.clone())
            .collect()
    }
}

/// Per-source `(c₂, γ₂)`: random-part scale of the projected conditional
/// mean, and the fixed-structure sum of squares.
fn mixing_parameters(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
    params.validate(spec)?;
    let (gamma2, _) = SsPlan::new(spec).compute(&params.fixed_mean(spec));
    Ok(spec
        .sources()
        .iter()
        .zip(gamma2)
        .map(|(s, g)| (symbolic_ems(spec, s).random_part(params) - params.sigma2, g))
        .map(|(c2, g)| {
            (
                if c2.abs() < 1e-15 * params.sigma2 {
                    0.0
                } else {
                    c2
                },
                g,
            )
        })
        .collect())
}

/// Fixed-effects laws conditional on all random effects.
pub fn conditional_laws(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<ConditionalLaw>> {
    let mixing = mixing_parameters(spec, params)?;
    spec.sources()
        .iter()
        .zip(mixing)
        .map(|(s, (c2, gamma2))| {
            let df = spec.source_df(s) as u32;
            let gamma1 = if c2 > 0.0 {
                Noncentrality::Random {
                    law: ScaledNoncentralChiSquare::new(c2, df, gamma2)?,
                }
            } else {
                Noncentrality::Fixed { value: gamma2 }
            };
            Ok(ConditionalLaw {
                source: s.name.clone(),
                scale: params.sigma2,
                df,
                gamma1,
            })
        })
        .collect()
}

/// Marginal law of every sum of squares, by compounding each conditional law.
pub fn ss_laws(spec: &ModelSpec, params: &ModelParams) -> Result<SsLawSet> {
    let laws = conditional_laws(spec, params)?
        .into_iter()
        .map(|cl| {
            let (c2, gamma2) = match cl.gamma1 {
                Noncentrality::Fixed { value } => (0.0, value),
                Noncentrality::Random { law } => (law.scale(), law.noncentrality()),
            };
            Ok(SsLaw {
                law: compound(cl.scale, cl.df, c2, gamma2)?,
                derivation: Derivation {
                    c1: cl.scale,
                    df: cl.df,
                    c2,
                    gamma2,
                    noncentral_mixing: c2 > 0.0 && gamma2 > 0.0,
                },
                source: cl.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SsLawSet {
        laws,
        independent: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FLaw {
    pub source: String,
    pub denominator: String,
    pub law: ScaledF,
}

/// Law of each tested F ratio `MS_source / MS_denominator`.
pub fn f_laws(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<FLaw>> {
    let laws = ss_laws(spec, params)?;
    f_laws_from(spec, &laws)
}

pub(crate) fn f_laws_from(spec: &ModelSpec, laws: &SsLawSet) -> Result<Vec<FLaw>> {
    spec.sources()
        .iter()
        .enumerate()
        .zip(denominators(spec))
        .filter_map(|((i, s), d)| d.map(|d| (i, s, d)))
        .map(|(i, s, d)| {
            let num = &laws.laws[i].law;
            let den = &laws.laws[d].law;
            let d_name = spec.sources()[d].name.clone();
            if !den.is_central() {
                return Err(Error::NoncentralDenominator {
                    numerator: s.name.clone(),
                    denominator: d_name,
                });
            }
            Ok(FLaw {
                source: s.name.clone(),
                denominator: d_name,
                law: ScaledF::new(num.scale() / den.scale(), num.df(), den.df(), num.lambda())?,
            })
        })
        .collect()
}
