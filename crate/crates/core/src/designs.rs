//! Balanced design structure: model specifications, true parameter values
//! and dense balanced datasets.
//!
//! Every supported design is laid out internally as a fully crossed
//! factorial over its factors (in declaration order) with a fixed number of
//! replicates per cell. Model terms and ANOVA sources are subsets of those
//! factors, encoded as bit masks over factor positions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    Fixed,
    Random,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectKind::Fixed => f.write_str("fixed"),
            EffectKind::Random => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    OneWay,
    Rcbd,
    TwoWayInteraction,
    SplitPlot,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Design::OneWay => "one_way",
            Design::Rcbd => "rcbd",
            Design::TwoWayInteraction => "two_way_interaction",
            Design::SplitPlot => "split_plot",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: usize,
    pub kind: EffectKind,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: usize, kind: EffectKind) -> Self {
        Self {
            name: name.into(),
            levels,
            kind,
        }
    }

    pub fn fixed(name: impl Into<String>, levels: usize) -> Self {
        Self::new(name, levels, EffectKind::Fixed)
    }

    pub fn random(name: impl Into<String>, levels: usize) -> Self {
        Self::new(name, levels, EffectKind::Random)
    }
}

pub const ERROR: &str = "Error";
pub const WHOLE_PLOT_ERROR: &str = "WholePlotError";
pub const SUBPLOT_ERROR: &str = "SubplotError";

/// A model term: fixed effects or a random effect indexed by a subset of factors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelTerm {
    pub name: String,
    pub mask: u8,
    pub kind: EffectKind,
}

/// One orthogonal piece of an ANOVA source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// Interaction contrast (or main effect) over the factors in the mask.
    Factorial(u8),
    /// Replicate variation within cells.
    Within,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDef {
    pub name: String,
    pub components: Vec<Component>,
    /// Index into [`ModelSpec::terms`] of the term this source estimates.
    pub term: Option<usize>,
    /// Whether an F test is attempted for this source.
    pub tested: bool,
}

/// Structure of a balanced model. Built through [`ModelSpec::new`], which
/// enforces the per-design invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    design: Design,
    factors: Vec<Factor>,
    replicates: usize,
    interaction_kind: Option<EffectKind>,
    terms: Vec<ModelTerm>,
    sources: Vec<SourceDef>,
}

impl ModelSpec {
    pub fn new(
        design: Design,
        factors: Vec<Factor>,
        replicates: usize,
        interaction_kind: Option<EffectKind>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        let expected = match design {
            Design::OneWay => 1,
            Design::Rcbd | Design::TwoWayInteraction => 2,
            Design::SplitPlot => 3,
        };
        if factors.len() != expected {
            return bad(format!(
                "{design} needs exactly {expected} factor(s), got {}",
                factors.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for f in &factors {
            if f.name.is_empty() || f.name.contains(':') || f.name.contains(',') {
                return bad(format!("invalid factor name {:?}", f.name));
            }
            if [ERROR, WHOLE_PLOT_ERROR, SUBPLOT_ERROR, "y"].contains(&f.name.as_str()) {
                return bad(format!("factor name {:?} is reserved", f.name));
            }
            if !seen.insert(f.name.clone()) {
                return bad(format!("duplicate factor name {:?}", f.name));
            }
            if f.levels < 2 {
                return bad(format!(
                    "factor {} needs at least 2 levels, got {}",
                    f.name, f.levels
                ));
            }
        }
        if replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        match design {
            Design::OneWay | Design::Rcbd => {
                if interaction_kind.is_some() {
                    return bad(format!("{design} has no interaction term"));
                }
            }
            Design::TwoWayInteraction | Design::SplitPlot => {
                let Some(kind) = interaction_kind else {
                    return bad(format!("{design} needs interaction_kind"));
                };
                let (a, b) = match design {
                    Design::SplitPlot => (&factors[1], &factors[2]),
                    _ => (&factors[0], &factors[1]),
                };
                if kind == EffectKind::Random
                    && a.kind == EffectKind::Fixed
                    && b.kind == EffectKind::Fixed
                {
                    return Err(Error::Unsupported(format!(
                        "random {}:{} interaction with both parents fixed",
                        a.name, b.name
                    )));
                }
            }
        }
        match design {
            Design::OneWay if replicates < 2 => {
                return bad("one_way needs at least 2 replicates per level".into())
            }
            Design::Rcbd if replicates != 1 => {
                return bad("rcbd has exactly one observation per cell (replicates = 1)".into())
            }
            Design::SplitPlot if replicates != factors[0].levels => {
                return bad(format!(
                    "split_plot replicates must equal the block count {} (got {replicates})",
                    factors[0].levels
                ))
            }
            _ => {}
        }

        let (terms, sources) = structure(design, &factors, interaction_kind);
        let mut spec = Self {
            design,
            factors,
            replicates,
            interaction_kind,
            terms,
            sources,
        };
        let sources = std::mem::take(&mut spec.sources);
        spec.sources = sources
            .into_iter()
            .filter(|s| spec.source_df(s) > 0)
            .collect();
        Ok(spec)
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn interaction_kind(&self) -> Option<EffectKind> {
        self.interaction_kind
    }

    pub fn terms(&self) -> &[ModelTerm] {
        &self.terms
    }

    /// ANOVA sources in table order, excluding any with zero degrees of freedom.
    pub fn sources(&self) -> &[SourceDef] {
        &self.sources
    }

    pub fn source(&self, name: &str) -> Option<&SourceDef> {
        self.sources.iter().find(|s| s.name == name)
    }

    pub fn term(&self, name: &str) -> Option<&ModelTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Observations per cell of the crossed layout (the block count is a
    /// factor for split-plot, so its cells hold one observation).
    pub fn cell_replicates(&self) -> usize {
        match self.design {
            Design::SplitPlot => 1,
            _ => self.replicates,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.factors.iter().map(|f| f.levels).product()
    }

    pub fn observation_count(&self) -> usize {
        self.cell_count() * self.cell_replicates()
    }

    /// Number of cells of the sub-layout indexed by `mask`.
    pub fn mask_cells(&self, mask: u8) -> usize {
        self.mask_factors(mask)
            .map(|i| self.factors[i].levels)
            .product()
    }

    pub(crate) fn mask_factors(&self, mask: u8) -> impl Iterator<Item = usize> + '_ {
        (0..self.factors.len()).filter(move |i| mask & (1 << i) != 0)
    }

    pub fn component_df(&self, c: Component) -> usize {
        match c {
            Component::Factorial(mask) => self
                .mask_factors(mask)
                .map(|i| self.factors[i].levels - 1)
                .product(),
            Component::Within => self.cell_count() * (self.cell_replicates() - 1),
        }
    }

    pub fn source_df(&self, s: &SourceDef) -> usize {
        s.components.iter().map(|&c| self.component_df(c)).sum()
    }

    /// For each observation (in storage order), its cell index in the
    /// sub-layout over `mask` (row-major in factor order).
    pub(crate) fn mask_index_map(&self, mask: u8) -> Vec<usize> {
        let reps = self.cell_replicates();
        let mut out = Vec::with_capacity(self.observation_count());
        let mut idx = vec![0usize; self.factors.len()];
        for _cell in 0..self.cell_count() {
            let mut m = 0usize;
            for i in self.mask_factors(mask) {
                m = m * self.factors[i].levels + idx[i];
            }
            out.extend(std::iter::repeat_n(m, reps));
            // odometer increment, last factor fastest
            for i in (0..idx.len()).rev() {
                idx[i] += 1;
                if idx[i] < self.factors[i].levels {
                    break;
                }
                idx[i] = 0;
            }
        }
        out
    }

    pub(crate) fn full_mask(&self) -> u8 {
        ((1u16 << self.factors.len()) - 1) as u8
    }
}

fn structure(
    design: Design,
    factors: &[Factor],
    interaction_kind: Option<EffectKind>,
) -> (Vec<ModelTerm>, Vec<SourceDef>) {
    let name = |mask: u8| {
        (0..factors.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| factors[i].name.as_str())
            .collect::<Vec<_>>()
            .join(":")
    };
    let term = |mask: u8, kind: EffectKind| ModelTerm {
        name: name(mask),
        mask,
        kind,
    };
    let effect = |mask: u8, t: usize| SourceDef {
        name: name(mask),
        components: vec![Component::Factorial(mask)],
        term: Some(t),
        tested: true,
    };
    let error = |n: &str, components: Vec<Component>| SourceDef {
        name: n.to_string(),
        components,
        term: None,
        tested: false,
    };
    match design {
        Design::OneWay => (
            vec![term(0b1, factors[0].kind)],
            vec![effect(0b1, 0), error(ERROR, vec![Component::Within])],
        ),
        Design::Rcbd => (
            vec![term(0b01, factors[0].kind), term(0b10, factors[1].kind)],
            vec![
                effect(0b01, 0),
                effect(0b10, 1),
                error(ERROR, vec![Component::Factorial(0b11)]),
            ],
        ),
        Design::TwoWayInteraction => (
            vec![
                term(0b01, factors[0].kind),
                term(0b10, factors[1].kind),
                term(0b11, interaction_kind.expect("validated")),
            ],
            vec![
                effect(0b01, 0),
                effect(0b10, 1),
                effect(0b11, 2),
                error(ERROR, vec![Component::Within]),
            ],
        ),
        Design::SplitPlot => {
            // factor 0 = blocks, 1 = whole-plot factor A, 2 = subplot factor B
            let whole_plot = ModelTerm {
                name: WHOLE_PLOT_ERROR.to_string(),
                mask: 0b011,
                kind: EffectKind::Random,
            };
            (
                vec![
                    term(0b001, factors[0].kind),
                    term(0b010, factors[1].kind),
                    whole_plot,
                    term(0b100, factors[2].kind),
                    term(0b110, interaction_kind.expect("validated")),
                ],
                vec![
                    effect(0b001, 0),
                    effect(0b010, 1),
                    SourceDef {
                        name: WHOLE_PLOT_ERROR.to_string(),
                        components: vec![Component::Factorial(0b011)],
                        term: Some(2),
                        tested: false,
                    },
                    effect(0b100, 3),
                    effect(0b110, 4),
                    error(
                        SUBPLOT_ERROR,
                        vec![Component::Factorial(0b101), Component::Factorial(0b111)],
                    ),
                ],
            )
        }
    }
}

/// True parameter values of a model.
///
/// Fixed-effect vectors and variance components are keyed by term name
/// (`A`, `B`, `A:B`, `WholePlotError`, ...). Fixed vectors are laid out
/// row-major over the term's factors in declaration order. Absent entries
/// are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma2: f64,
    #[serde(default)]
    pub fixed_effects: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub variance_components: BTreeMap<String, f64>,
}

impl ModelParams {
    pub fn new(mu: f64, sigma2: f64) -> Self {
        Self {
            mu,
            sigma2,
            fixed_effects: BTreeMap::new(),
            variance_components: BTreeMap::new(),
        }
    }

    pub fn with_fixed(mut self, term: impl Into<String>, effects: Vec<f64>) -> Self {
        self.fixed_effects.insert(term.into(), effects);
        self
    }

    pub fn with_variance(mut self, term: impl Into<String>, variance: f64) -> Self {
        self.variance_components.insert(term.into(), variance);
        self
    }

    pub fn variance(&self, term: &str) -> f64 {
        self.variance_components.get(term).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !self.mu.is_finite() {
            return bad(format!("mu must be finite, got {}", self.mu));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        for (name, effects) in &self.fixed_effects {
            let Some(term) = spec.term(name) else {
                return bad(format!("no term named {name:?}"));
            };
            if term.kind != EffectKind::Fixed {
                return bad(format!(
                    "term {name} is random; give a variance component instead"
                ));
            }
            let want = spec.mask_cells(term.mask);
            if effects.len() != want {
                return bad(format!(
                    "term {name} needs {want} fixed effects, got {}",
                    effects.len()
                ));
            }
            if effects.iter().any(|v| !v.is_finite()) {
                return bad(format!("term {name} has non-finite effects"));
            }
        }
        for (name, &v) in &self.variance_components {
            let Some(term) = spec.term(name) else {
                return bad(format!("no term named {name:?}"));
            };
            if term.kind != EffectKind::Random {
                return bad(format!("term {name} is fixed; give effect values instead"));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!(
                    "variance component {name} must be nonnegative, got {v}"
                ));
            }
        }
        Ok(())
    }

    /// The noise-free mean of every observation: μ plus all fixed effects.
    pub(crate) fn fixed_mean(&self, spec: &ModelSpec) -> Vec<f64> {
        let mut out = vec![self.mu; spec.observation_count()];
        for term in spec.terms().iter().filter(|t| t.kind == EffectKind::Fixed) {
            if let Some(effects) = self.fixed_effects.get(&term.name) {
                for (y, cell) in out.iter_mut().zip(spec.mask_index_map(term.mask)) {
                    *y += effects[cell];
                }
            }
        }
        out
    }
}

/// One long-format input row: a label per factor (in spec order) and the
/// raw response text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub labels: Vec<String>,
    pub response: String,
}

impl RawRecord {
    pub fn new<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        response: impl Into<String>,
    ) -> Self {
        Self {
            labels: labels.into_iter().map(Into::into).collect(),
            response: response.into(),
        }
    }
}

/// A complete balanced response array.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedDataset {
    spec: ModelSpec,
    values: Vec<f64>,
    labels: Vec<Vec<String>>,
}

impl BalancedDataset {
    /// Builds a dataset from long-format records, matching level labels to
    /// dense indices in first-appearance order.
    pub fn validate(spec: &ModelSpec, records: &[RawRecord]) -> Result<Self> {
        let factors = spec.factors();
        let reps = spec.cell_replicates();
        let mut labels: Vec<Vec<String>> = vec![Vec::new(); factors.len()];
        let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); factors.len()];
        let mut cells: Vec<Vec<f64>> = vec![Vec::new(); spec.cell_count()];

        for (r, rec) in records.iter().enumerate() {
            if rec.labels.len() != factors.len() {
                return Err(Error::RecordShape {
                    record: r,
                    found: rec.labels.len(),
                    expected: factors.len(),
                });
            }
            let mut cell = 0usize;
            for (i, label) in rec.labels.iter().enumerate() {
                let next = lookup[i].len();
                let idx = *lookup[i].entry(label.clone()).or_insert(next);
                if idx == next {
                    if next >= factors[i].levels {
                        return Err(Error::UnknownLevel {
                            factor: factors[i].name.clone(),
                            label: label.clone(),
                            levels: factors[i].levels,
                            record: r,
                        });
                    }
                    labels[i].push(label.clone());
                }
                cell = cell * factors[i].levels + idx;
            }
            let y: f64 = rec
                .response
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::NonNumericResponse {
                    value: rec.response.clone(),
                    record: r,
                })?;
            if cells[cell].len() == reps {
                return Err(Error::DuplicateCell {
                    cell: cell_name(spec, &labels, cell),
                    expected: reps,
                    record: r,
                });
            }
            cells[cell].push(y);
        }

        // levels that never appeared get placeholder labels so the missing
        // cell can still be named
        for (i, f) in factors.iter().enumerate() {
            while labels[i].len() < f.levels {
                let next = labels[i].len() + 1;
                labels[i].push(format!("<level {next} unseen>"));
            }
        }
        for (cell, ys) in cells.iter().enumerate() {
            if ys.len() < reps {
                return Err(Error::Unbalanced {
                    cell: cell_name(spec, &labels, cell),
                    found: ys.len(),
                    expected: reps,
                });
            }
        }
        Ok(Self {
            spec: spec.clone(),
            values: cells.into_iter().flatten().collect(),
            labels,
        })
    }

    /// Wraps values already in storage order; labels are `1..=levels`.
    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.observation_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                spec.observation_count(),
                values.len()
            )));
        }
        let labels = spec
            .factors()
            .iter()
            .map(|f| (1..=f.levels).map(|l| l.to_string()).collect())
            .collect();
        Ok(Self {
            spec: spec.clone(),
            values,
            labels,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Responses in storage order: row-major over factors, replicate fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn level_labels(&self, factor: usize) -> &[String] {
        &self.labels[factor]
    }

    /// Long-format view: one record per observation.
    pub fn records(&self) -> Vec<RawRecord> {
        let n_factors = self.spec.factors().len();
        let maps: Vec<Vec<usize>> = (0..n_factors)
            .map(|i| self.spec.mask_index_map(1 << i))
            .collect();
        self.values
            .iter()
            .enumerate()
            .map(|(obs, y)| RawRecord {
                labels: (0..n_factors)
                    .map(|i| self.labels[i][maps[i][obs]].clone())
                    .collect(),
                response: format!("{y}"),
            })
            .collect()
    }

    /// Means over every index not in `margin`, laid out row-major over the
    /// margin factors in spec order. An empty margin gives the grand mean.
    pub fn cell_means(&self, margin: &[&str]) -> Result<Vec<f64>> {
        let mut mask = 0u8;
        for name in margin {
            let i = self
                .spec
                .factor_index(name)
                .ok_or_else(|| Error::UnknownFactor(name.to_string()))?;
            mask |= 1 << i;
        }
        Ok(self.marginal_means(mask))
    }

    pub(crate) fn marginal_means(&self, mask: u8) -> Vec<f64> {
        marginal_means(&self.spec, &self.values, mask)
    }
}

pub(crate) fn marginal_means(spec: &ModelSpec, values: &[f64], mask: u8) -> Vec<f64> {
    let cells = spec.mask_cells(mask);
    let mut sums = vec![0.0; cells];
    for (y, cell) in values.iter().zip(spec.mask_index_map(mask)) {
        sums[cell] += y;
    }
    let per = (values.len() / cells) as f64;
    sums.iter().map(|s| s / per).collect()
}

fn cell_name(spec: &ModelSpec, labels: &[Vec<String>], mut cell: usize) -> String {
    let factors = spec.factors();
    let mut parts = vec![String::new(); factors.len()];
    for i in (0..factors.len()).rev() {
        let idx = cell % factors[i].levels;
        cell /= factors[i].levels;
        let label = labels[i]
            .get(idx)
            .cloned()
            .unwrap_or_else(|| format!("<level {}>", idx + 1));
        parts[i] = format!("{}={}", factors[i].name, label);
    }
    parts.join(",")
}
