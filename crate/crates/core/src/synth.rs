//! Synthetic data from known data-generating processes, plus two oracles that
//! share no code with the estimator: a quadrature evaluation of the mixing
//! integral and brute-force grid maximization of a small MNL likelihood.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{AreaType, CovariateKind, CrashRecord, Dataset, Lighting, Schema, SegmentKey};
use crate::ingest::write_csv;
use crate::model::{ModelSpec, ParameterEntry, ParameterVector};
use crate::{Error, Result};

/// Largest grid [`enumerate_small_mnl`] will walk.
pub const MAX_GRID_POINTS: u64 = 10_000_000;
/// Largest dataset [`enumerate_small_mnl`] accepts.
pub const MAX_ENUMERATION_OBS: usize = 12;
/// Quadrature range in standard deviations.
pub const QUADRATURE_HALF_WIDTH: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Indicator { p: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Generator {
    fn kind(&self) -> CovariateKind {
        match self {
            Generator::Indicator { .. } => CovariateKind::Indicator,
            _ => CovariateKind::Continuous,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Generator::Indicator { p } => p > 0.0 && p < 1.0,
            Generator::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Generator::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("generator for {name:?} is invalid: {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Generator::Indicator { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Generator::Uniform { lo, hi } => rng.random_range(lo..hi),
            Generator::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub name: String,
    #[serde(flatten)]
    pub generator: Generator,
}

/// One stratum of the generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDgp {
    pub segment: SegmentKey,
    /// Relative share of observations.
    #[serde(default = "unit_weight")]
    pub weight: f64,
    /// Coefficients that differ from the base parameters in this segment.
    #[serde(default)]
    pub overrides: Vec<ParameterEntry>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: ModelSpec,
    pub parameters: ParameterVector,
    pub covariates: Vec<CovariateGenerator>,
    /// Empty means a single rural-daylight segment.
    #[serde(default)]
    pub segments: Vec<SegmentDgp>,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(model: ModelSpec, parameters: ParameterVector, covariates: Vec<CovariateGenerator>, seed: u64) -> Self {
        DgpSpec {
            model,
            parameters,
            covariates,
            segments: Vec::new(),
            seed,
        }
    }

    pub fn with_segment(mut self, segment: SegmentKey, weight: f64, overrides: Vec<ParameterEntry>) -> Self {
        self.segments.push(SegmentDgp {
            segment,
            weight,
            overrides,
        });
        self
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::new(
            self.covariates
                .iter()
                .map(|c| (c.name.clone(), c.generator.kind()))
                .collect(),
        )
    }

    /// Segments actually generated, with the default filled in.
    pub fn effective_segments(&self) -> Vec<SegmentDgp> {
        if self.segments.is_empty() {
            vec![SegmentDgp {
                segment: SegmentKey {
                    area: AreaType::Rural,
                    lighting: Lighting::Daylight,
                },
                weight: 1.0,
                overrides: Vec::new(),
            }]
        } else {
            self.segments.clone()
        }
    }

    /// True parameters of one segment (base values with its overrides applied).
    pub fn segment_parameters(&self, segment: &SegmentDgp) -> ParameterVector {
        let mut p = self.parameters.clone();
        for e in &segment.overrides {
            p.set(&e.id, e.value, e.sd);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let schema = self.schema()?;
        for c in &self.covariates {
            c.generator.validate(&c.name)?;
        }
        for name in self.model.covariates() {
            if schema.index_of(&name).is_none() {
                return Err(Error::SpecMismatch(format!("no generator for covariate {name:?}")));
            }
        }
        let mut seen = Vec::new();
        for s in self.effective_segments() {
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::Argument(format!(
                    "segment {} has weight {}",
                    s.segment, s.weight
                )));
            }
            if seen.contains(&s.segment) {
                return Err(Error::Argument(format!("segment {} listed twice", s.segment)));
            }
            seen.push(s.segment);
            Plan::new(&self.model, &schema, &self.segment_parameters(&s))?;
        }
        Ok(())
    }
}

/// Splits `n` in proportion to `weights`; remainders go to the largest
/// fractional parts, earlier entries first on ties.
pub fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Coefficients resolved against a schema: (μ, σ) and where each loads.
struct Plan {
    n_alt: usize,
    coefficients: Vec<PlanCoefficient>,
}

struct PlanCoefficient {
    mu: f64,
    sigma: Option<f64>,
    /// (alternative position, covariate column or `None` for a constant)
    loadings: Vec<(usize, Option<usize>)>,
}

impl Plan {
    fn new(spec: &ModelSpec, schema: &Schema, params: &ParameterVector) -> Result<Plan> {
        let mut coefficients = Vec::new();
        for c in spec.coefficients() {
            let e = params
                .get(&c.id)
                .ok_or_else(|| Error::Argument(format!("no true value for coefficient {:?}", c.id)))?;
            let sigma = if c.random {
                let s =
                    e.sd.ok_or_else(|| Error::Argument(format!("random coefficient {:?} has no σ", c.id)))?;
                Some(s.abs())
            } else {
                None
            };
            let mut loadings = Vec::new();
            for l in &c.loadings {
                let j = spec
                    .alternative_position(l.alternative)
                    .ok_or_else(|| Error::Argument(format!("{} is not an alternative", l.alternative)))?;
                let col = match &l.covariate {
                    Some(name) => Some(
                        schema
                            .index_of(name)
                            .ok_or_else(|| Error::SpecMismatch(format!("covariate {name:?} is not in the data")))?,
                    ),
                    None => None,
                };
                loadings.push((j, col));
            }
            coefficients.push(PlanCoefficient {
                mu: e.value,
                sigma,
                loadings,
            });
        }
        Ok(Plan {
            n_alt: spec.alternatives.len(),
            coefficients,
        })
    }

    fn n_random(&self) -> usize {
        self.coefficients.iter().filter(|c| c.sigma.is_some()).count()
    }

    /// Utilities with random coefficients at `μ + σ·z`.
    fn utilities(&self, values: &[f64], z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = 0.0);
        let mut dim = 0;
        for c in &self.coefficients {
            let beta = match c.sigma {
                Some(s) => {
                    let b = c.mu + s * z[dim];
                    dim += 1;
                    b
                }
                None => c.mu,
            };
            for &(j, col) in &c.loadings {
                out[j] += beta * col.map_or(1.0, |i| values[i]);
            }
        }
    }
}

/// Simulates `n` observations. Segment sizes follow the weights exactly
/// (largest remainder); rows are grouped by segment in declaration order.
pub fn simulate_dataset(dgp: &DgpSpec, n: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("cannot simulate an empty dataset".into()));
    }
    dgp.validate()?;
    let schema = dgp.schema()?;
    let segments = dgp.effective_segments();
    let counts = allocate(n, &segments.iter().map(|s| s.weight).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    let mut records = Vec::with_capacity(n);
    let mut u = vec![0.0; dgp.model.alternatives.len()];
    for (segment, count) in segments.iter().zip(counts) {
        let plan = Plan::new(&dgp.model, &schema, &dgp.segment_parameters(segment))?;
        let mut z = vec![0.0; plan.n_random()];
        for _ in 0..count {
            let values: Vec<f64> = dgp.covariates.iter().map(|c| c.generator.sample(&mut rng)).collect();
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            plan.utilities(&values, &z, &mut u);
            let mut best = 0;
            let mut best_u = f64::NEG_INFINITY;
            for (j, &uj) in u.iter().enumerate() {
                let total = uj + gumbel(&mut rng);
                if total > best_u {
                    best_u = total;
                    best = j;
                }
            }
            records.push(CrashRecord {
                severity: dgp.model.alternatives[best],
                area: segment.segment.area,
                lighting: segment.segment.lighting,
                values,
            });
        }
    }
    Dataset::new(schema, records)
}

/// Standard Gumbel by inversion.
fn gumbel(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    }
}

/// Simulates and writes the result in the ingest CSV layout.
pub fn write_simulated_csv(dgp: &DgpSpec, n: usize, out: impl Write) -> Result<Dataset> {
    let data = simulate_dataset(dgp, n)?;
    write_csv(&data, out)?;
    Ok(data)
}

fn softmax(u: &[f64]) -> Vec<f64> {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mixed-logit probabilities by a trapezoid rule over ±8 standard deviations
/// on each random dimension (tensor grid, at most two dimensions).
pub fn quadrature_probability_oracle(
    record: &CrashRecord,
    schema: &Schema,
    spec: &ModelSpec,
    params: &ParameterVector,
    n_nodes: usize,
) -> Result<Vec<f64>> {
    if n_nodes < 100 {
        return Err(Error::Argument(format!(
            "quadrature needs at least 100 nodes, got {n_nodes}"
        )));
    }
    let plan = Plan::new(spec, schema, params)?;
    let dims = plan.n_random();
    if dims > 2 {
        return Err(Error::Argument(format!(
            "quadrature supports at most 2 random coefficients, spec has {dims}"
        )));
    }
    let mut u = vec![0.0; plan.n_alt];
    if dims == 0 {
        plan.utilities(&record.values, &[], &mut u);
        return Ok(softmax(&u));
    }
    let h = 2.0 * QUADRATURE_HALF_WIDTH / (n_nodes - 1) as f64;
    let nodes: Vec<f64> = (0..n_nodes).map(|i| -QUADRATURE_HALF_WIDTH + i as f64 * h).collect();
    let weights: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let end = if i == 0 || i + 1 == n_nodes { 0.5 } else { 1.0 };
            end * (-0.5 * z * z).exp()
        })
        .collect();
    let mut acc = vec![0.0; plan.n_alt];
    let mut mass = 0.0;
    let mut point = |z: &[f64], w: f64| {
        plan.utilities(&record.values, z, &mut u);
        for (a, p) in acc.iter_mut().zip(softmax(&u)) {
            *a += w * p;
        }
        mass += w;
    };
    if dims == 1 {
        for (z, w) in nodes.iter().zip(&weights) {
            point(&[*z], *w);
        }
    } else {
        for (z1, w1) in nodes.iter().zip(&weights) {
            for (z2, w2) in nodes.iter().zip(&weights) {
                point(&[*z1, *z2], w1 * w2);
            }
        }
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// Exact MNL log-likelihood with the oracle's own utility and softmax code.
pub fn exact_mnl_log_likelihood(data: &Dataset, spec: &ModelSpec, params: &ParameterVector) -> Result<f64> {
    if !spec.random.is_empty() {
        return Err(Error::Argument(
            "exact likelihood is for fixed-coefficient models".into(),
        ));
    }
    let plan = Plan::new(spec, &data.schema, params)?;
    let mut u = vec![0.0; plan.n_alt];
    let mut total = 0.0;
    for r in &data.records {
        let y = spec
            .alternative_position(r.severity)
            .ok_or_else(|| Error::SpecMismatch(format!("{} is not an alternative", r.severity)))?;
        plan.utilities(&r.values, &[], &mut u);
        let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + u.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += u[y] - lse;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// Parameter values in [`ModelSpec::parameter_names`] order.
    pub point: Vec<f64>,
    pub log_likelihood: f64,
    pub evaluated: u64,
}

/// Exhaustive search over the Cartesian product of `axes` (one axis per
/// parameter). Ties keep the first point in row-major order.
pub fn enumerate_small_mnl(data: &Dataset, spec: &ModelSpec, axes: &[Vec<f64>]) -> Result<GridOptimum> {
    if data.len() > MAX_ENUMERATION_OBS {
        return Err(Error::Argument(format!(
            "grid enumeration takes at most {MAX_ENUMERATION_OBS} observations, got {}",
            data.len()
        )));
    }
    if !spec.random.is_empty() {
        return Err(Error::Argument(
            "grid enumeration is for fixed-coefficient models".into(),
        ));
    }
    let n_params = spec.n_params();
    if n_params > 3 || n_params == 0 {
        return Err(Error::Argument(format!(
            "grid enumeration needs 1 to 3 parameters, spec has {n_params}"
        )));
    }
    if axes.len() != n_params {
        return Err(Error::Argument(format!(
            "{} grid axes for {n_params} parameters",
            axes.len()
        )));
    }
    if axes.iter().any(|a| a.is_empty() || a.iter().any(|v| !v.is_finite())) {
        return Err(Error::Argument("grid axes must be non-empty and finite".into()));
    }
    let size = axes.iter().try_fold(1u64, |acc, a| acc.checked_mul(a.len() as u64));
    match size {
        Some(s) if s <= MAX_GRID_POINTS => {}
        _ => return Err(Error::Resource(format!("grid has more than {MAX_GRID_POINTS} points"))),
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluated = 0u64;
    let mut index = vec![0usize; n_params];
    loop {
        let point: Vec<f64> = index.iter().zip(axes).map(|(&i, a)| a[i]).collect();
        let ll = exact_mnl_log_likelihood(data, spec, &ParameterVector::from_flat(spec, &point)?)?;
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((point, ll));
        }
        let mut d = n_params;
        loop {
            if d == 0 {
                let (point, log_likelihood) = best.expect("grid is non-empty");
                return Ok(GridOptimum {
                    point,
                    log_likelihood,
                    evaluated,
                });
            }
            d -= 1;
            index[d] += 1;
            if index[d] < axes[d].len() {
                break;
            }
            index[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SeverityClass;
    use crate::model::{mnl_probability, utility};

    fn one_covariate() -> (DgpSpec, ModelSpec) {
        let spec = ModelSpec::null(SeverityClass::PossibleNo)
            .with_term(SeverityClass::Major, "x")
            .with_term(SeverityClass::Minor, "x");
        let mut params = ParameterVector::starting(&spec);
        params.set("x[major]", 0.8, None);
        params.set("x[minor]", -0.4, None);
        let gens = vec![CovariateGenerator {
            name: "x".into(),
            generator: Generator::Normal { mean: 0.0, sd: 1.0 },
        }];
        (DgpSpec::new(spec.clone(), params, gens, 7), spec)
    }

    #[test]
    fn allocation_is_exact() {
        assert_eq!(allocate(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(allocate(7, &[2.0, 5.0]), vec![2, 5]);
        for n in [1, 13, 1000] {
            assert_eq!(allocate(n, &[0.3, 0.2, 0.5, 0.01]).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_validated() {
        let (dgp, _) = one_covariate();
        let a = simulate_dataset(&dgp, 500).unwrap();
        let b = simulate_dataset(&dgp, 500).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        let mut other = dgp.clone();
        other.seed = 8;
        assert_ne!(simulate_dataset(&other, 500).unwrap(), a);
        assert!(simulate_dataset(&dgp, 0).is_err());

        let mut bad = dgp.clone();
        bad.covariates[0].generator = Generator::Indicator { p: 1.0 };
        assert!(simulate_dataset(&bad, 10).is_err());
        let mut missing = dgp;
        missing.parameters.entries.pop();
        assert!(simulate_dataset(&missing, 10).is_err());
    }

    #[test]
    fn zero_coefficients_give_equal_shares() {
        let spec = ModelSpec::null(SeverityClass::PossibleNo);
        let dgp = DgpSpec::new(spec.clone(), ParameterVector::starting(&spec), Vec::new(), 3);
        let n = 30_000;
        let data = simulate_dataset(&dgp, n).unwrap();
        let bound = 3.0 * (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in data.class_counts() {
            assert!((c as f64 - n as f64 / 3.0).abs() < bound, "{c}");
        }
    }

    #[test]
    fn dominant_constant_wins() {
        let spec = ModelSpec::intercept_only(SeverityClass::PossibleNo);
        let mut params = ParameterVector::starting(&spec);
        params.set("const[minor]", 10.0, None);
        let data = simulate_dataset(&DgpSpec::new(spec, params, Vec::new(), 11), 20_000).unwrap();
        let share = data.class_counts()[SeverityClass::Minor.index()] as f64 / 20_000.0;
        assert!(share > 0.999, "{share}");
    }

    #[test]
    fn segments_follow_weights_and_overrides() {
        let (dgp, _) = one_covariate();
        let a: SegmentKey = "urban-dark".parse().unwrap();
        let b: SegmentKey = "urban-daylight".parse().unwrap();
        let dgp = dgp.with_segment(a, 1.0, Vec::new()).with_segment(
            b,
            3.0,
            vec![ParameterEntry {
                id: "x[major]".into(),
                value: -0.8,
                sd: None,
            }],
        );
        let data = simulate_dataset(&dgp, 1001).unwrap();
        let n_a = data.records.iter().filter(|r| r.lighting == Lighting::Dark).count();
        assert_eq!(n_a, 250);
        assert!(data.records.iter().all(|r| r.area == AreaType::Urban));
        assert_eq!(
            dgp.segment_parameters(&dgp.segments[1]).get("x[major]").unwrap().value,
            -0.8
        );
        let dup = dgp.clone().with_segment(a, 1.0, Vec::new());
        assert!(dup.validate().is_err());
    }

    #[test]
    fn quadrature_limits_and_point_mass() {
        let spec = ModelSpec::intercept_only(SeverityClass::PossibleNo)
            .with_term(SeverityClass::Major, "x")
            .with_random("x[major]");
        let schema = Schema::new(vec![("x".into(), CovariateKind::Continuous)]).unwrap();
        let record = CrashRecord {
            severity: SeverityClass::Major,
            area: AreaType::Rural,
            lighting: Lighting::Dark,
            values: vec![0.7],
        };
        let mut params = ParameterVector::starting(&spec);
        params.set("const[major]", -0.3, None);
        params.set("const[minor]", 0.4, None);
        params.set("x[major]", 1.2, Some(0.0));
        let q = quadrature_probability_oracle(&record, &schema, &spec, &params, 200).unwrap();
        let exact = mnl_probability(&utility(&record, &schema, &spec, &params, None).unwrap()).unwrap();
        for (a, b) in q.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-14);
        }

        params.set("x[major]", 1.2, Some(2.5));
        let coarse = quadrature_probability_oracle(&record, &schema, &spec, &params, 100).unwrap();
        let fine = quadrature_probability_oracle(&record, &schema, &spec, &params, 1000).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!((fine.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(quadrature_probability_oracle(&record, &schema, &spec, &params, 99).is_err());

        let three = ModelSpec::intercept_only(SeverityClass::PossibleNo)
            .with_term(SeverityClass::Major, "x")
            .with_random("x[major]")
            .with_random("const[major]")
            .with_random("const[minor]");
        let mut p3 = ParameterVector::starting(&three);
        p3.set("x[major]", 0.1, Some(1.0));
        assert!(matches!(
            quadrature_probability_oracle(&record, &schema, &three, &p3, 100),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn grid_oracle() {
        let schema = Schema::new(vec![("x".into(), CovariateKind::Continuous)]).unwrap();
        let rec = |severity, x| CrashRecord {
            severity,
            area: AreaType::Rural,
            lighting: Lighting::Daylight,
            values: vec![x],
        };
        let spec = ModelSpec {
            alternatives: vec![SeverityClass::Major, SeverityClass::PossibleNo],
            base: SeverityClass::PossibleNo,
            constants: vec![SeverityClass::Major],
            terms: Vec::new(),
            random: Vec::new(),
        };
        let symmetric = Dataset::new(
            schema.clone(),
            vec![rec(SeverityClass::Major, 0.0), rec(SeverityClass::PossibleNo, 0.0)],
        )
        .unwrap();
        let axis: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.1).collect();
        let best = enumerate_small_mnl(&symmetric, &spec, &[axis.clone()]).unwrap();
        assert_eq!(best.point, vec![0.0]);
        assert_eq!(best.evaluated, 41);
        assert!((best.log_likelihood - 2.0 * 0.5f64.ln()).abs() < 1e-15);

        let too_many = Dataset::new(schema.clone(), vec![rec(SeverityClass::Major, 0.0); 13]).unwrap();
        assert!(enumerate_small_mnl(&too_many, &spec, &[axis.clone()]).is_err());

        let wide = spec.clone().with_term(SeverityClass::Major, "x");
        let big: Vec<f64> = (0..4000).map(|i| i as f64).collect();
        assert!(matches!(
            enumerate_small_mnl(&symmetric, &wide, &[big.clone(), big]),
            Err(Error::Resource(_))
        ));
    }
}
