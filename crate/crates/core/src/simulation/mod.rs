//! Seeded Monte Carlo generation of balanced datasets and the verification
//! harness that compares simulated sums of squares with their exact laws.
//!
//! Replications are split into contiguous blocks, one per worker. Worker `w`
//! draws from the ChaCha8 stream `w` of the master seed, and blocks are
//! concatenated in worker order, so a report is a pure function of
//! `(spec, params, reps, alphas, master_seed, worker_count)`.

pub mod ks;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::anova::SsPlan;
use crate::designs::{BalancedDataset, EffectKind, ModelParams, ModelSpec};
use crate::distributions::{compound, mixed_mgf_by_quadrature, ScaledF, ScaledNoncentralChiSquare};
use crate::error::{Error, Result};
use crate::theory::{self, SsLawSet};

/// Smallest replication count accepted by the KS-based checks.
pub const MIN_REPLICATIONS: usize = 1_000;
pub const MEAN_SE_LIMIT: f64 = 4.0;
pub const VARIANCE_SE_LIMIT: f64 = 5.0;
pub const KS_P_MIN: f64 = 0.01;
pub const CORRELATION_SE_LIMIT: f64 = 4.0;
pub const REJECTION_SE_LIMIT: f64 = 4.0;
pub const MGF_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    pub worker_count: usize,
}

impl SeedPolicy {
    pub fn new(master_seed: u64, worker_count: usize) -> Self {
        Self {
            master_seed,
            worker_count: worker_count.max(1),
        }
    }

    /// Independent stream owned by worker `w`.
    pub fn stream(&self, w: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(w as u64);
        rng
    }

    fn partition(&self, reps: usize) -> Vec<usize> {
        let w = self.worker_count;
        (0..w)
            .map(|i| reps / w + usize::from(i < reps % w))
            .collect()
    }

    /// Runs `job(rng, count)` for each worker's block and concatenates the
    /// results in worker order.
    fn run<T, F>(&self, reps: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, usize) -> Vec<T> + Sync,
    {
        let counts = self.partition(reps);
        let job = &job;
        std::thread::scope(|scope| {
            let handles: Vec<_> = counts
                .iter()
                .enumerate()
                .map(|(w, &count)| {
                    let mut rng = self.stream(w);
                    scope.spawn(move || job(&mut rng, count))
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    }
}

/// Maps `f` over `items` on `workers` threads, preserving order.
fn par_map<F>(workers: usize, items: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    let chunk = items.len().div_ceil(workers.max(1)).max(1);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&x| f(x)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Draws responses `y = fixed mean + random effects + error`.
struct DatasetSampler {
    fixed_mean: Vec<f64>,
    random: Vec<RandomTerm>,
    sigma: f64,
}

struct RandomTerm {
    obs_map: Vec<usize>,
    cells: usize,
    sd: f64,
}

impl DatasetSampler {
    fn new(spec: &ModelSpec, params: &ModelParams) -> Result<Self> {
        params.validate(spec)?;
        let random = spec
            .terms()
            .iter()
            .filter(|t| t.kind == EffectKind::Random)
            .map(|t| RandomTerm {
                obs_map: spec.mask_index_map(t.mask),
                cells: spec.mask_cells(t.mask),
                sd: params.variance(&t.name).sqrt(),
            })
            .collect();
        Ok(Self {
            fixed_mean: params.fixed_mean(spec),
            random,
            sigma: params.sigma2.sqrt(),
        })
    }

    /// Draw order: each random term's effects in term order, then the errors.
    fn fill<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>, effects: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.fixed_mean);
        for term in &self.random {
            effects.clear();
            effects.extend((0..term.cells).map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                term.sd * z
            }));
            for (y, &c) in out.iter_mut().zip(&term.obs_map) {
                *y += effects[c];
            }
        }
        for y in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *y += self.sigma * z;
        }
    }
}

/// One dataset drawn from the model, deterministic in `seed`.
pub fn simulate_dataset(
    spec: &ModelSpec,
    params: &ModelParams,
    seed: u64,
) -> Result<BalancedDataset> {
    let sampler = DatasetSampler::new(spec, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut out, mut buf) = (Vec::new(), Vec::new());
    sampler.fill(&mut rng, &mut out, &mut buf);
    BalancedDataset::from_values(spec, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: String, statistic: f64, threshold: f64) -> Self {
        Self {
            name,
            statistic,
            threshold,
            passed: statistic <= threshold,
        }
    }

    fn at_least(name: String, statistic: f64, threshold: f64) -> Self {
        Self {
            name,
            statistic,
            threshold,
            passed: statistic >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceReport {
    pub source: String,
    pub df: u32,
    pub empirical_mean: f64,
    pub theoretical_mean: f64,
    pub empirical_variance: f64,
    pub theoretical_variance: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub first: String,
    pub second: String,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionReport {
    pub source: String,
    pub denominator: String,
    pub alpha: f64,
    pub critical_value: f64,
    pub rate: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub design: String,
    pub master_seed: u64,
    pub worker_count: usize,
    pub replications: usize,
    pub laws: SsLawSet,
    pub noncentral_mixing_sources: Vec<String>,
    pub sources: Vec<SourceReport>,
    pub correlations: Vec<CorrelationReport>,
    pub rejection_rates: Vec<RejectionReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl SimReport {
    pub fn source(&self, name: &str) -> Option<&SourceReport> {
        self.sources.iter().find(|s| s.source == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Simulates `reps` datasets and checks every source's sum of squares
/// against its derived law.
pub fn run_verification(
    spec: &ModelSpec,
    params: &ModelParams,
    reps: usize,
    alphas: &[f64],
    policy: SeedPolicy,
) -> Result<SimReport> {
    let laws = theory::ss_laws(spec, params)?;
    run_verification_against(spec, params, &laws, reps, alphas, policy)
}

/// As [`run_verification`], but checks the simulation against the supplied
/// laws instead of the derived ones.
pub fn run_verification_against(
    spec: &ModelSpec,
    params: &ModelParams,
    laws: &SsLawSet,
    reps: usize,
    alphas: &[f64],
    policy: SeedPolicy,
) -> Result<SimReport> {
    if reps < MIN_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "reps below minimum {MIN_REPLICATIONS} (got {reps})"
        )));
    }
    if let Some(&a) = alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::ProbabilityOutOfRange(a));
    }
    let sources = spec.sources();
    if laws.laws.len() != sources.len() {
        return Err(Error::InvalidParameter(
            "law set does not match the model's sources".into(),
        ));
    }
    let sampler = DatasetSampler::new(spec, params)?;
    let plan = SsPlan::new(spec);
    let k = sources.len();

    // rows of k sums of squares, one per replication
    let flat: Vec<f64> = policy.run(reps, |rng, count| {
        let (mut y, mut buf) = (Vec::new(), Vec::new());
        let mut out = Vec::with_capacity(count * k);
        for _ in 0..count {
            sampler.fill(rng, &mut y, &mut buf);
            out.extend(plan.compute(&y).0);
        }
        out
    });
    let column = |j: usize| -> Vec<f64> { flat.iter().skip(j).step_by(k).copied().collect() };
    let columns: Vec<Vec<f64>> = (0..k).map(column).collect();
    let n = reps as f64;

    let mut checks = Vec::new();
    let mut source_reports = Vec::new();
    for (j, law) in laws.laws.iter().enumerate() {
        let xs = &columns[j];
        let (mean, var) = mean_var(xs);
        let law = &law.law;
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let cdf = par_map(policy.worker_count, &sorted, |x| law.cdf_unchecked(x));
        let d = ks::ks_statistic(&cdf);
        let p = ks::ks_p_value(d, reps);
        let name = &sources[j].name;

        let mean_se = (law.variance() / n).sqrt();
        checks.push(Check::at_most(
            format!("mean[{name}]"),
            (mean - law.mean()).abs() / mean_se,
            MEAN_SE_LIMIT,
        ));
        let var_se = ((law.cumulant(4) + 2.0 * law.variance().powi(2)) / n).sqrt();
        checks.push(Check::at_most(
            format!("variance[{name}]"),
            (var - law.variance()).abs() / var_se,
            VARIANCE_SE_LIMIT,
        ));
        checks.push(Check::at_least(format!("ks[{name}]"), p, KS_P_MIN));
        source_reports.push(SourceReport {
            source: name.clone(),
            df: law.df(),
            empirical_mean: mean,
            theoretical_mean: law.mean(),
            empirical_variance: var,
            theoretical_variance: law.variance(),
            ks_statistic: d,
            ks_p_value: p,
        });
    }

    let mut correlations = Vec::new();
    let corr_limit = CORRELATION_SE_LIMIT / n.sqrt();
    for a in 0..k {
        for b in a + 1..k {
            let r = correlation(&columns[a], &columns[b]);
            let (first, second) = (sources[a].name.clone(), sources[b].name.clone());
            checks.push(Check::at_most(
                format!("corr[{first},{second}]"),
                r.abs(),
                corr_limit,
            ));
            correlations.push(CorrelationReport {
                first,
                second,
                correlation: r,
            });
        }
    }

    let mut rejection_rates = Vec::new();
    for fl in theory::f_laws_from(spec, laws)? {
        let i = sources
            .iter()
            .position(|s| s.name == fl.source)
            .expect("source");
        let d = sources
            .iter()
            .position(|s| s.name == fl.denominator)
            .expect("denominator");
        let (df_num, df_den) = (fl.law.df_num() as f64, fl.law.df_den() as f64);
        let null = ScaledF::central(fl.law.df_num(), fl.law.df_den())?;
        for &alpha in alphas {
            let critical = null.quantile(1.0 - alpha)?;
            let hits = columns[i]
                .iter()
                .zip(&columns[d])
                .filter(|(num, den)| **den > 0.0 && (*num / df_num) / (*den / df_den) > critical)
                .count();
            let rate = hits as f64 / n;
            let expected = fl.law.sf(critical)?;
            let se = ((expected * (1.0 - expected)).max(1.0 / n) / n).sqrt();
            checks.push(Check::at_most(
                format!("rejection[{}@{alpha}]", fl.source),
                (rate - expected).abs() / se,
                REJECTION_SE_LIMIT,
            ));
            rejection_rates.push(RejectionReport {
                source: fl.source.clone(),
                denominator: fl.denominator.clone(),
                alpha,
                critical_value: critical,
                rate,
                expected,
            });
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(SimReport {
        design: spec.design().to_string(),
        master_seed: policy.master_seed,
        worker_count: policy.worker_count,
        replications: reps,
        noncentral_mixing_sources: laws.noncentral_mixing_sources(),
        laws: laws.clone(),
        sources: source_reports,
        correlations,
        rejection_rates,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub c1: f64,
    pub df: u32,
    pub c2: f64,
    pub gamma2: f64,
    pub law: ScaledNoncentralChiSquare,
    pub master_seed: u64,
    pub worker_count: usize,
    pub replications: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// Values of t at which the quadrature MGF was compared (empty when the
    /// mixing law is degenerate).
    pub mgf_grid: Vec<f64>,
    pub mgf_max_relative_error: Option<f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Fractions of the MGF domain limit `1/(2(c₁+c₂))` used for the identity check.
pub const MGF_GRID_FRACTIONS: [f64; 7] = [-2.0, -1.0, -0.5, -0.1, 0.1, 0.25, 0.4];

/// Largest relative gap between the quadrature mixed MGF and the compound
/// law's closed-form MGF over the standard t-grid.
pub fn mgf_identity_error(c1: f64, p: u32, c2: f64, gamma2: f64) -> Result<(Vec<f64>, f64)> {
    let law = compound(c1, p, c2, gamma2)?;
    let limit = 0.5 / (c1 + c2);
    let grid: Vec<f64> = MGF_GRID_FRACTIONS.iter().map(|f| f * limit).collect();
    let mut worst = 0.0f64;
    for &t in &grid {
        let quad = mixed_mgf_by_quadrature(c1, p, c2, gamma2, t)?;
        let exact = law.mgf(t)?;
        worst = worst.max(((quad - exact) / exact).abs());
    }
    Ok((grid, worst))
}

/// Hierarchical sampling of `γ₁ ~ (c₂, p, γ₂)` then `x | γ₁ ~ (c₁, p, γ₁)`,
/// tested against the compound law, plus the quadrature MGF identity.
pub fn lemma_check(
    c1: f64,
    p: u32,
    c2: f64,
    gamma2: f64,
    reps: usize,
    policy: SeedPolicy,
) -> Result<LemmaReport> {
    if reps < MIN_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "reps below minimum {MIN_REPLICATIONS} (got {reps})"
        )));
    }
    let law = compound(c1, p, c2, gamma2)?;
    let mixing = if c2 > 0.0 {
        Some(ScaledNoncentralChiSquare::new(c2, p, gamma2)?)
    } else {
        None
    };
    let mut xs: Vec<f64> = policy.run(reps, |rng, count| {
        (0..count)
            .map(|_| {
                let gamma1 = mixing.map_or(gamma2, |m| m.sample_with(rng));
                ScaledNoncentralChiSquare::new(c1, p, gamma1)
                    .expect("valid")
                    .sample_with(rng)
            })
            .collect()
    });
    xs.sort_by(f64::total_cmp);
    let cdf = par_map(policy.worker_count, &xs, |x| law.cdf_unchecked(x));
    let d = ks::ks_statistic(&cdf);
    let ks_p = ks::ks_p_value(d, reps);

    let mut checks = vec![Check::at_least("ks[hierarchical]".into(), ks_p, KS_P_MIN)];
    let (grid, mgf_err) = if c2 > 0.0 {
        let (grid, err) = mgf_identity_error(c1, p, c2, gamma2)?;
        checks.push(Check::at_most("mgf[quadrature]".into(), err, MGF_REL_TOL));
        (grid, Some(err))
    } else {
        (Vec::new(), None)
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(LemmaReport {
        c1,
        df: p,
        c2,
        gamma2,
        law,
        master_seed: policy.master_seed,
        worker_count: policy.worker_count,
        replications: reps,
        ks_statistic: d,
        ks_p_value: ks_p,
        mgf_grid: grid,
        mgf_max_relative_error: mgf_err,
        checks,
        passed,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{Design, Factor};

    fn one_way_random(var_a: f64) -> (ModelSpec, ModelParams) {
        let spec = ModelSpec::new(Design::OneWay, vec![Factor::random("A", 3)], 4, None).unwrap();
        (spec, ModelParams::new(1.0, 1.0).with_variance("A", var_a))
    }

    #[test]
    fn degenerate_model_is_constant() {
        let spec = ModelSpec::new(
            Design::Rcbd,
            vec![Factor::random("A", 3), Factor::random("B", 2)],
            1,
            None,
        )
        .unwrap();
        let params = ModelParams::new(4.5, 1.0);
        let mut params = params;
        params.sigma2 = f64::MIN_POSITIVE;
        let data = simulate_dataset(&spec, &params, 3).unwrap();
        assert!(data.values().iter().all(|&y| (y - 4.5).abs() < 1e-100));
    }

    #[test]
    fn simulation_is_deterministic() {
        let (spec, params) = one_way_random(2.0);
        assert_eq!(
            simulate_dataset(&spec, &params, 9).unwrap(),
            simulate_dataset(&spec, &params, 9).unwrap()
        );
        assert_ne!(
            simulate_dataset(&spec, &params, 9).unwrap(),
            simulate_dataset(&spec, &params, 10).unwrap()
        );
    }

    #[test]
    fn one_way_random_marginal_moments() {
        // var(y) = σ² + σ²_α, cov within a group = σ²_α
        let (spec, params) = one_way_random(2.0);
        let datasets = 100_000;
        let policy = SeedPolicy::new(77, 4);
        let sampler = DatasetSampler::new(&spec, &params).unwrap();
        let pairs: Vec<(f64, f64)> = policy.run(datasets, |rng, count| {
            let (mut y, mut buf) = (Vec::new(), Vec::new());
            (0..count)
                .map(|_| {
                    sampler.fill(rng, &mut y, &mut buf);
                    (y[0], y[1])
                })
                .collect()
        });
        let n = pairs.len() as f64;
        let (m0, v0) = mean_var(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let m1 = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov = pairs.iter().map(|p| (p.0 - m0) * (p.1 - m1)).sum::<f64>() / (n - 1.0);
        // SE of a sample variance of a normal with variance 3: 3·√(2/n)
        assert!((v0 - 3.0).abs() < 4.0 * 3.0 * (2.0 / n).sqrt(), "{v0}");
        // SE of the covariance: √((σ₀²σ₁² + cov²)/n) = √((9 + 4)/n)
        assert!((cov - 2.0).abs() < 4.0 * (13.0 / n).sqrt(), "{cov}");
        assert!((m0 - 1.0).abs() < 4.0 * (3.0 / n).sqrt());
    }

    #[test]
    fn pooled_observation_variance() {
        let (spec, params) = one_way_random(2.0);
        // 10^6 pooled observations from 83_334 datasets; groups introduce
        // correlation, so compare with the exact variance of the pooled estimator
        let sampler = DatasetSampler::new(&spec, &params).unwrap();
        let policy = SeedPolicy::new(5, 2);
        let ys: Vec<f64> = policy.run(83_334, |rng, count| {
            let (mut y, mut buf) = (Vec::new(), Vec::new());
            let mut out = Vec::new();
            for _ in 0..count {
                sampler.fill(rng, &mut y, &mut buf);
                out.extend_from_slice(&y);
            }
            out
        });
        let (_, v) = mean_var(&ys);
        // blocks of 4 with intra-block correlation 2/3 inflate the SE by about √(1+3·(2/3)²)
        let se = 3.0 * (2.0 / ys.len() as f64).sqrt() * (1.0f64 + 3.0 * 4.0 / 9.0).sqrt();
        assert!((v - 3.0).abs() < 4.0 * se, "{v}");
    }

    #[test]
    fn rejects_too_few_reps() {
        let (spec, params) = one_way_random(2.0);
        let err = run_verification(&spec, &params, 10, &[0.05], SeedPolicy::new(1, 1)).unwrap_err();
        assert!(err.to_string().contains("reps below minimum"));
        assert!(lemma_check(1.0, 3, 2.0, 0.0, 10, SeedPolicy::new(1, 1)).is_err());
    }

    #[test]
    fn report_is_reproducible() {
        let (spec, params) = one_way_random(2.0);
        let policy = SeedPolicy::new(2024, 3);
        let a = run_verification(&spec, &params, 2_000, &[0.05], policy).unwrap();
        let b = run_verification(&spec, &params, 2_000, &[0.05], policy).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn conclusions_stable_across_worker_counts() {
        let (spec, params) = one_way_random(2.0);
        for workers in [1, 2, 5] {
            let r = run_verification(
                &spec,
                &params,
                20_000,
                &[0.05],
                SeedPolicy::new(31, workers),
            )
            .unwrap();
            assert!(
                r.passed,
                "workers = {workers}: {:?}",
                r.failed_checks().collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn wrong_law_is_detected() {
        let (spec, params) = one_way_random(2.0);
        let mut laws = theory::ss_laws(&spec, &params).unwrap();
        for l in &mut laws.laws {
            l.law = l.law.rescaled(1.25).unwrap();
        }
        let r = run_verification_against(&spec, &params, &laws, 20_000, &[], SeedPolicy::new(8, 2))
            .unwrap();
        assert!(!r.passed);
        assert!(r.failed_checks().any(|c| c.name.starts_with("ks[")));
    }

    #[test]
    fn degenerate_lemma_check() {
        let r = lemma_check(1.5, 4, 0.0, 6.0, 20_000, SeedPolicy::new(12, 2)).unwrap();
        assert_eq!(r.law, ScaledNoncentralChiSquare::new(1.5, 4, 6.0).unwrap());
        assert!(r.mgf_max_relative_error.is_none());
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn partition_covers_all_reps() {
        let p = SeedPolicy::new(0, 4);
        assert_eq!(p.partition(10), vec![3, 3, 2, 2]);
        assert_eq!(SeedPolicy::new(0, 0).worker_count, 1);
    }
}
