//! Orthogonal sum-of-squares decomposition, expected mean squares, F tests,
//! method-of-moments variance components and power.

use std::fmt;

use serde::Serialize;

use crate::designs::{BalancedDataset, Component, EffectKind, ModelParams, ModelSpec, SourceDef};
use crate::distributions::ScaledF;
use crate::error::{Error, Result};
use crate::theory;

/// Sums of squares below this fraction of Σy² are round-off and reported as 0.
const ROUNDOFF_FLOOR: f64 = 1e-26;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "term", rename_all = "snake_case")]
pub enum EmsComponent {
    /// The residual variance σ².
    Error,
    /// Variance component of a random term.
    Variance(String),
    /// `γ_source / df_source`, the per-df quadratic form of the fixed mean
    /// structure projected onto the source.
    FixedQuadratic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmsTerm {
    pub coefficient: f64,
    pub component: EmsComponent,
}

/// Symbolic expected mean square: a linear combination of σ², variance
/// components and fixed-effect quadratic terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Ems(pub Vec<EmsTerm>);

impl Ems {
    pub fn has_fixed(&self) -> bool {
        self.0
            .iter()
            .any(|t| matches!(t.component, EmsComponent::FixedQuadratic(_)))
    }

    fn without(&self, c: &EmsComponent) -> Ems {
        Ems(self
            .0
            .iter()
            .filter(|t| &t.component != c)
            .cloned()
            .collect())
    }

    fn same_as(&self, other: &Ems) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().all(|t| {
                other
                    .0
                    .iter()
                    .any(|u| u.component == t.component && u.coefficient == t.coefficient)
            })
    }

    /// Coefficient of σ² plus random components, evaluated at `params`.
    pub fn random_part(&self, params: &ModelParams) -> f64 {
        self.0
            .iter()
            .map(|t| match &t.component {
                EmsComponent::Error => t.coefficient * params.sigma2,
                EmsComponent::Variance(name) => t.coefficient * params.variance(name),
                EmsComponent::FixedQuadratic(_) => 0.0,
            })
            .sum()
    }
}

impl fmt::Display for Ems {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            if t.coefficient != 1.0 {
                write!(f, "{}·", t.coefficient)?;
            }
            match &t.component {
                EmsComponent::Error => f.write_str("σ²")?,
                EmsComponent::Variance(n) => write!(f, "σ²({n})")?,
                EmsComponent::FixedQuadratic(n) => write!(f, "Q({n})")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaRow {
    pub source: String,
    pub df: usize,
    pub ss: f64,
    pub ms: f64,
    pub ems: Ems,
    pub f: Option<f64>,
    pub denominator: Option<String>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub total_ss: f64,
    pub total_df: usize,
    pub observations: usize,
}

impl AnovaTable {
    pub fn row(&self, source: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.source == source)
    }
}

/// Precomputed index maps for evaluating every source's sum of squares on
/// response vectors of one design.
#[derive(Debug, Clone)]
pub(crate) struct SsPlan {
    masks: Vec<MaskPlan>,
    /// for each source: (component indices into `masks` or within flag)
    sources: Vec<Vec<Component>>,
    cell_map: Vec<usize>,
    cells: usize,
    n: usize,
}

#[derive(Debug, Clone)]
struct MaskPlan {
    obs_map: Vec<usize>,
    cells: usize,
    /// Inclusion-exclusion over sub-masks: (sign, projection of this mask's
    /// cells onto the sub-mask's cells, sub-mask).
    subsets: Vec<(f64, Vec<usize>, u8)>,
}

impl SsPlan {
    pub(crate) fn new(spec: &ModelSpec) -> Self {
        let k = spec.factors().len();
        let masks: Vec<MaskPlan> = (0..(1u8 << k))
            .map(|mask| {
                let cells = spec.mask_cells(mask);
                let subsets = (0..(1u8 << k))
                    .filter(|sub| sub & !mask == 0)
                    .map(|sub| {
                        let sign = if (mask.count_ones() - sub.count_ones()) % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        };
                        (sign, project(spec, mask, sub), sub)
                    })
                    .collect();
                MaskPlan {
                    obs_map: spec.mask_index_map(mask),
                    cells,
                    subsets,
                }
            })
            .collect();
        Self {
            sources: spec
                .sources()
                .iter()
                .map(|s| s.components.clone())
                .collect(),
            cell_map: spec.mask_index_map(spec.full_mask()),
            cells: spec.cell_count(),
            n: spec.observation_count(),
            masks,
        }
    }

    /// Per-source sums of squares and the total (corrected) sum of squares.
    pub(crate) fn compute(&self, values: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n as f64;
        let means: Vec<Vec<f64>> = self
            .masks
            .iter()
            .map(|m| {
                let mut sums = vec![0.0; m.cells];
                for (y, &c) in values.iter().zip(&m.obs_map) {
                    sums[c] += y;
                }
                let per = n / m.cells as f64;
                sums.iter_mut().for_each(|s| *s /= per);
                sums
            })
            .collect();
        let grand = means[0][0];
        let sum_sq: f64 = values.iter().map(|y| y * y).sum();
        let floor = ROUNDOFF_FLOOR * sum_sq;
        let clean = |ss: f64| if ss <= floor { 0.0 } else { ss };

        let factorial_ss = |mask: u8| -> f64 {
            let plan = &self.masks[mask as usize];
            let mut ss = 0.0;
            for cell in 0..plan.cells {
                let e: f64 = plan
                    .subsets
                    .iter()
                    .map(|(sign, proj, sub)| sign * means[*sub as usize][proj[cell]])
                    .sum();
                ss += e * e;
            }
            ss * n / plan.cells as f64
        };
        let within = || -> f64 {
            let cell_means = &means[self.masks.len() - 1];
            values
                .iter()
                .zip(&self.cell_map)
                .map(|(y, &c)| (y - cell_means[c]).powi(2))
                .sum()
        };
        debug_assert_eq!(self.masks.last().map(|m| m.cells), Some(self.cells));

        let ss = self
            .sources
            .iter()
            .map(|comps| {
                clean(
                    comps
                        .iter()
                        .map(|c| match *c {
                            Component::Factorial(mask) => factorial_ss(mask),
                            Component::Within => within(),
                        })
                        .sum(),
                )
            })
            .collect();
        let total = clean(values.iter().map(|y| (y - grand).powi(2)).sum());
        (ss, total)
    }
}

/// For each cell of `mask`, the index of the enclosing cell of `sub`.
fn project(spec: &ModelSpec, mask: u8, sub: u8) -> Vec<usize> {
    let factors: Vec<usize> = spec.mask_factors(mask).collect();
    let levels: Vec<usize> = factors.iter().map(|&i| spec.factors()[i].levels).collect();
    let cells: usize = levels.iter().product();
    let mut idx = vec![0usize; factors.len()];
    let mut out = Vec::with_capacity(cells);
    for _ in 0..cells {
        let mut m = 0;
        for (pos, &f) in factors.iter().enumerate() {
            if sub & (1 << f) != 0 {
                m = m * levels[pos] + idx[pos];
            }
        }
        out.push(m);
        for pos in (0..idx.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < levels[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
    out
}

/// Symbolic EMS of a source under the unconstrained model.
///
/// A random term contributes `N / L_term · σ²(term)` to every source
/// component whose factors it contains; every source of the supported designs
/// receives the same contributions on all of its components, so its
/// conditional mean structure is isotropic and the expression is exact.
pub fn symbolic_ems(spec: &ModelSpec, source: &SourceDef) -> Ems {
    let n = spec.observation_count() as f64;
    let mut terms = vec![EmsTerm {
        coefficient: 1.0,
        component: EmsComponent::Error,
    }];
    let contains = |term_mask: u8, c: &Component| match *c {
        Component::Factorial(m) => m & !term_mask == 0,
        Component::Within => false,
    };
    for t in spec.terms().iter().filter(|t| t.kind == EffectKind::Random) {
        let hits = source
            .components
            .iter()
            .filter(|c| contains(t.mask, c))
            .count();
        debug_assert!(
            hits == 0 || hits == source.components.len(),
            "non-isotropic source {}",
            source.name
        );
        if hits > 0 {
            terms.push(EmsTerm {
                coefficient: n / spec.mask_cells(t.mask) as f64,
                component: EmsComponent::Variance(t.name.clone()),
            });
        }
    }
    let fixed = spec
        .terms()
        .iter()
        .filter(|t| t.kind == EffectKind::Fixed)
        .any(|t| source.components.iter().any(|c| contains(t.mask, c)));
    if fixed {
        terms.push(EmsTerm {
            coefficient: 1.0,
            component: EmsComponent::FixedQuadratic(source.name.clone()),
        });
    }
    Ems(terms)
}

/// F-test denominator for every source (by index), chosen by EMS matching:
/// the source whose EMS equals the numerator's EMS with its own term removed.
pub fn denominators(spec: &ModelSpec) -> Vec<Option<usize>> {
    let ems: Vec<Ems> = spec
        .sources()
        .iter()
        .map(|s| symbolic_ems(spec, s))
        .collect();
    spec.sources()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if !s.tested {
                return None;
            }
            let term = &spec.terms()[s.term?];
            let null = match term.kind {
                EffectKind::Random => {
                    if ems[i].has_fixed() {
                        // fixed mean structure leaks into this source; no exact test
                        return None;
                    }
                    ems[i].without(&EmsComponent::Variance(term.name.clone()))
                }
                EffectKind::Fixed => ems[i].without(&EmsComponent::FixedQuadratic(s.name.clone())),
            };
            (0..ems.len()).find(|&j| j != i && !ems[j].has_fixed() && ems[j].same_as(&null))
        })
        .collect()
}

/// SS, df and MS for every source, with symbolic EMS.
pub fn decompose(data: &BalancedDataset) -> AnovaTable {
    let spec = data.spec();
    let plan = SsPlan::new(spec);
    let (ss, total_ss) = plan.compute(data.values());
    let rows = spec
        .sources()
        .iter()
        .zip(ss)
        .map(|(s, ss)| {
            let df = spec.source_df(s);
            AnovaRow {
                source: s.name.clone(),
                df,
                ss,
                ms: ss / df as f64,
                ems: symbolic_ems(spec, s),
                f: None,
                denominator: None,
                p_value: None,
            }
        })
        .collect();
    AnovaTable {
        rows,
        total_ss,
        total_df: spec.observation_count() - 1,
        observations: spec.observation_count(),
    }
}

/// Adds F ratios, denominators and central-F p-values.
pub fn attach_tests(table: &AnovaTable, spec: &ModelSpec) -> Result<AnovaTable> {
    let mut out = table.clone();
    for (s, denom) in spec.sources().iter().zip(denominators(spec)) {
        let Some(d) = denom else { continue };
        let d_name = &spec.sources()[d].name;
        let num = table
            .row(&s.name)
            .ok_or_else(|| Error::UnknownSource(s.name.clone()))?;
        let den = table
            .row(d_name)
            .ok_or_else(|| Error::UnknownSource(d_name.clone()))?;
        let (f, p) = if den.ms > 0.0 {
            let f = num.ms / den.ms;
            let law = ScaledF::central(num.df as u32, den.df as u32)?;
            (Some(f), Some(law.sf(f)?))
        } else {
            (None, None)
        };
        let row = out
            .rows
            .iter_mut()
            .find(|r| r.source == s.name)
            .expect("row exists");
        row.f = f;
        row.p_value = p;
        row.denominator = Some(d_name.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceValue {
    pub source: String,
    pub value: f64,
}

/// Numeric E(MS) per source: σ² + Σ k·σ²(term) + γ/df.
pub fn expected_mean_squares(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<SourceValue>> {
    let laws = theory::ss_laws(spec, params)?;
    Ok(laws
        .laws
        .iter()
        .map(|l| SourceValue {
            source: l.source.clone(),
            value: l.law.mean() / l.law.df() as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentEstimate {
    /// `sigma2` for the residual variance, otherwise the random term name.
    pub component: String,
    pub raw: f64,
    pub estimate: f64,
    pub truncated: bool,
}

/// Method-of-moments estimates: solve the EMS relations of the residual
/// stratum and of each random term's own source for the unknown variances.
pub fn estimate_components(table: &AnovaTable, spec: &ModelSpec) -> Result<Vec<ComponentEstimate>> {
    let sources = spec.sources();
    let ems: Vec<Ems> = sources.iter().map(|s| symbolic_ems(spec, s)).collect();
    let random: Vec<&str> = spec
        .terms()
        .iter()
        .filter(|t| t.kind == EffectKind::Random)
        .map(|t| t.name.as_str())
        .collect();

    let residual = (0..sources.len())
        .rev()
        .find(|&i| !sources[i].tested && ems[i].0.len() == 1)
        .ok_or_else(|| Error::SingularEms("no residual stratum estimates σ²".into()))?;
    let mut equations = vec![residual];
    for name in &random {
        let i = sources
            .iter()
            .position(|s| s.term.map(|t| spec.terms()[t].name.as_str()) == Some(*name))
            .ok_or_else(|| Error::SingularEms(format!("no source for {name}")))?;
        if ems[i].has_fixed() {
            return Err(Error::SingularEms(format!(
                "E(MS) of {} involves fixed effects",
                sources[i].name
            )));
        }
        equations.push(i);
    }

    let m = equations.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (row, &i) in equations.iter().enumerate() {
        for t in &ems[i].0 {
            let col = match &t.component {
                EmsComponent::Error => 0,
                EmsComponent::Variance(n) => {
                    1 + random.iter().position(|r| r == n).expect("random term")
                }
                EmsComponent::FixedQuadratic(_) => unreachable!("checked above"),
            };
            a[row][col] = t.coefficient;
        }
        let name = &sources[i].name;
        a[row][m] = table
            .row(name)
            .ok_or_else(|| Error::UnknownSource(name.clone()))?
            .ms;
    }
    let solution = solve(a).ok_or_else(|| Error::SingularEms("EMS system is singular".into()))?;

    Ok(std::iter::once("sigma2")
        .chain(random.iter().copied())
        .zip(solution)
        .map(|(name, raw)| ComponentEstimate {
            component: name.to_string(),
            raw,
            estimate: raw.max(0.0),
            truncated: raw < 0.0,
        })
        .collect())
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let factor = row[col] / pivot_row[col];
                for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *dst -= factor * src;
                }
            }
        }
    }
    Some((0..m).map(|i| a[i][m] / a[i][i]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourcePower {
    pub source: String,
    pub denominator: String,
    pub power: f64,
}

/// Probability that each tested source's F test rejects at level `alpha`.
pub fn power(spec: &ModelSpec, params: &ModelParams, alpha: f64) -> Result<Vec<SourcePower>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ProbabilityOutOfRange(alpha));
    }
    theory::f_laws(spec, params)?
        .into_iter()
        .map(|fl| {
            let critical =
                ScaledF::central(fl.law.df_num(), fl.law.df_den())?.quantile(1.0 - alpha)?;
            Ok(SourcePower {
                source: fl.source,
                denominator: fl.denominator,
                power: fl.law.sf(critical)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{Design, Factor};
    use approx::assert_relative_eq;

    fn one_way_data() -> BalancedDataset {
        let spec = ModelSpec::new(Design::OneWay, vec![Factor::fixed("A", 2)], 2, None).unwrap();
        BalancedDataset::from_values(&spec, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    fn rcbd_data() -> BalancedDataset {
        let spec = ModelSpec::new(
            Design::Rcbd,
            vec![Factor::fixed("A", 2), Factor::fixed("B", 2)],
            1,
            None,
        )
        .unwrap();
        BalancedDataset::from_values(&spec, vec![1.0, 2.0, 3.0, 5.0]).unwrap()
    }

    #[test]
    fn one_way_hand_computed() {
        let t = decompose(&one_way_data());
        // ȳ = 2.5, ȳ_1 = 1.5, ȳ_2 = 3.5: SS_A = 2·(1 + 1) = 4, SS_E = 4·0.25 = 1
        assert_eq!(t.row("A").unwrap().ss, 4.0);
        assert_eq!(t.row("Error").unwrap().ss, 1.0);
        assert_eq!(t.total_ss, 5.0);
        assert_eq!((t.row("A").unwrap().df, t.row("Error").unwrap().df), (1, 2));
        let t = attach_tests(&t, one_way_data().spec()).unwrap();
        let a = t.row("A").unwrap();
        assert_eq!(a.f, Some(8.0));
        assert_eq!(a.denominator.as_deref(), Some("Error"));
        // F(1, 2) tail at 8 = 1 − √(8/10)
        assert_relative_eq!(a.p_value.unwrap(), 1.0 - (0.8f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rcbd_hand_computed() {
        let data = rcbd_data();
        let t = attach_tests(&decompose(&data), data.spec()).unwrap();
        let ss: Vec<f64> = t.rows.iter().map(|r| r.ss).collect();
        assert_eq!(ss, vec![6.25, 2.25, 0.25]);
        assert_eq!(t.total_ss, 8.75);
        assert_eq!(t.row("A").unwrap().f, Some(25.0));
        assert_eq!(t.row("B").unwrap().f, Some(9.0));
    }

    #[test]
    fn constant_data_gives_zero_ss_and_undefined_f() {
        let spec = ModelSpec::new(
            Design::TwoWayInteraction,
            vec![Factor::fixed("A", 3), Factor::random("B", 3)],
            2,
            Some(EffectKind::Random),
        )
        .unwrap();
        let data = BalancedDataset::from_values(&spec, vec![0.1; 18]).unwrap();
        let t = attach_tests(&decompose(&data), &spec).unwrap();
        assert!(t.rows.iter().all(|r| r.ss == 0.0));
        assert_eq!(t.total_ss, 0.0);
        for r in &t.rows {
            assert!(r.f.is_none() && r.p_value.is_none());
        }
        assert_eq!(t.row("A").unwrap().denominator.as_deref(), Some("A:B"));
    }

    #[test]
    fn denominators_follow_ems_matching() {
        let names = |spec: &ModelSpec| -> Vec<(String, Option<String>)> {
            spec.sources()
                .iter()
                .zip(denominators(spec))
                .map(|(s, d)| (s.name.clone(), d.map(|d| spec.sources()[d].name.clone())))
                .collect()
        };
        let two_way = ModelSpec::new(
            Design::TwoWayInteraction,
            vec![Factor::fixed("A", 2), Factor::random("B", 3)],
            2,
            Some(EffectKind::Random),
        )
        .unwrap();
        assert_eq!(
            names(&two_way),
            vec![
                ("A".into(), Some("A:B".into())),
                ("B".into(), Some("A:B".into())),
                ("A:B".into(), Some("Error".into())),
                ("Error".into(), None)
            ]
        );
        let fixed = ModelSpec::new(
            Design::TwoWayInteraction,
            vec![Factor::fixed("A", 2), Factor::fixed("B", 3)],
            2,
            Some(EffectKind::Fixed),
        )
        .unwrap();
        assert!(names(&fixed)[..3]
            .iter()
            .all(|(_, d)| d.as_deref() == Some("Error")));
        let split = ModelSpec::new(
            Design::SplitPlot,
            vec![
                Factor::random("Block", 4),
                Factor::fixed("A", 3),
                Factor::fixed("B", 2),
            ],
            4,
            Some(EffectKind::Fixed),
        )
        .unwrap();
        assert_eq!(
            names(&split),
            vec![
                ("Block".into(), Some("WholePlotError".into())),
                ("A".into(), Some("WholePlotError".into())),
                ("WholePlotError".into(), None),
                ("B".into(), Some("SubplotError".into())),
                ("A:B".into(), Some("SubplotError".into())),
                ("SubplotError".into(), None)
            ]
        );
    }

    #[test]
    fn symbolic_ems_rendering() {
        let spec = ModelSpec::new(Design::OneWay, vec![Factor::random("A", 3)], 4, None).unwrap();
        assert_eq!(
            symbolic_ems(&spec, &spec.sources()[0]).to_string(),
            "σ² + 4·σ²(A)"
        );
        assert_eq!(symbolic_ems(&spec, &spec.sources()[1]).to_string(), "σ²");
        let spec = ModelSpec::new(
            Design::Rcbd,
            vec![Factor::fixed("A", 3), Factor::random("B", 4)],
            1,
            None,
        )
        .unwrap();
        assert_eq!(
            symbolic_ems(&spec, &spec.sources()[0]).to_string(),
            "σ² + Q(A)"
        );
        assert_eq!(
            symbolic_ems(&spec, &spec.sources()[1]).to_string(),
            "σ² + 3·σ²(B)"
        );
    }

    #[test]
    fn expected_mean_squares_examples() {
        let spec = ModelSpec::new(Design::OneWay, vec![Factor::random("A", 3)], 4, None).unwrap();
        let ems = expected_mean_squares(&spec, &ModelParams::new(0.0, 1.0).with_variance("A", 2.0))
            .unwrap();
        assert_relative_eq!(ems[0].value, 9.0);
        assert_relative_eq!(ems[1].value, 1.0);

        let spec = ModelSpec::new(
            Design::Rcbd,
            vec![Factor::fixed("A", 3), Factor::random("B", 4)],
            1,
            None,
        )
        .unwrap();
        let ems = expected_mean_squares(&spec, &ModelParams::new(0.0, 2.0).with_variance("B", 1.0))
            .unwrap();
        assert_relative_eq!(ems[1].value, 5.0);

        let params = ModelParams::new(3.0, 1.7);
        let ems = expected_mean_squares(&spec, &params).unwrap();
        assert!(ems.iter().all(|e| (e.value - 1.7).abs() < 1e-14));
    }

    fn table_with_ms(ms_a: f64, ms_e: f64) -> AnovaTable {
        let row = |s: &str, df: usize, ms: f64| AnovaRow {
            source: s.into(),
            df,
            ss: ms * df as f64,
            ms,
            ems: Ems(vec![]),
            f: None,
            denominator: None,
            p_value: None,
        };
        AnovaTable {
            rows: vec![row("A", 2, ms_a), row("Error", 9, ms_e)],
            total_ss: 0.0,
            total_df: 11,
            observations: 12,
        }
    }

    #[test]
    fn moment_estimates() {
        let spec = ModelSpec::new(Design::OneWay, vec![Factor::random("A", 3)], 4, None).unwrap();
        let est = estimate_components(&table_with_ms(9.0, 1.0), &spec).unwrap();
        assert_eq!(est[0].component, "sigma2");
        assert_relative_eq!(est[0].estimate, 1.0);
        assert_relative_eq!(est[1].estimate, 2.0);
        assert!(!est[1].truncated);

        let est = estimate_components(&table_with_ms(1.5, 1.5), &spec).unwrap();
        assert_eq!(est[1].raw, 0.0);

        let est = estimate_components(&table_with_ms(0.5, 1.5), &spec).unwrap();
        assert_relative_eq!(est[1].raw, -0.25);
        assert_eq!(est[1].estimate, 0.0);
        assert!(est[1].truncated);
    }

    #[test]
    fn moment_estimates_split_plot() {
        let spec = ModelSpec::new(
            Design::SplitPlot,
            vec![
                Factor::random("Block", 4),
                Factor::fixed("A", 3),
                Factor::fixed("B", 2),
            ],
            4,
            Some(EffectKind::Fixed),
        )
        .unwrap();
        // E(MS) at σ² = 1, σ²(WP) = 0.5, σ²(Block) = 2: Block 1 + 2·0.5 + 6·2 = 14, WP = 2
        let mut table = decompose(&BalancedDataset::from_values(&spec, vec![0.0; 24]).unwrap());
        for r in &mut table.rows {
            r.ms = match r.source.as_str() {
                "Block" => 14.0,
                "WholePlotError" => 2.0,
                _ => 1.0,
            };
        }
        let est = estimate_components(&table, &spec).unwrap();
        let get = |n: &str| est.iter().find(|e| e.component == n).unwrap().estimate;
        assert_relative_eq!(get("sigma2"), 1.0);
        assert_relative_eq!(get("WholePlotError"), 0.5);
        assert_relative_eq!(get("Block"), 2.0);
    }

    #[test]
    fn unidentified_components_are_singular() {
        let spec = ModelSpec::new(
            Design::TwoWayInteraction,
            vec![Factor::fixed("A", 3), Factor::random("B", 4)],
            1,
            Some(EffectKind::Random),
        )
        .unwrap();
        let table = decompose(
            &BalancedDataset::from_values(&spec, (0..12).map(|i| i as f64).collect()).unwrap(),
        );
        assert!(matches!(
            estimate_components(&table, &spec),
            Err(Error::SingularEms(_))
        ));
    }

    #[test]
    fn power_under_null_is_alpha() {
        let spec = ModelSpec::new(
            Design::Rcbd,
            vec![Factor::fixed("A", 3), Factor::random("B", 4)],
            1,
            None,
        )
        .unwrap();
        for p in power(&spec, &ModelParams::new(1.0, 2.0), 0.05).unwrap() {
            assert_relative_eq!(p.power, 0.05, epsilon = 1e-10);
        }
        assert!(power(&spec, &ModelParams::new(1.0, 2.0), 1.0).is_err());
    }
}
