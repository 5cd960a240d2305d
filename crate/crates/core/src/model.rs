//! Utility specification and choice probabilities.
//!
//! A [`ModelSpec`] lists which covariates enter which alternative's utility and
//! which coefficients are random. Free parameters are laid out coefficient by
//! coefficient (constants first, then terms by first appearance); a random
//! coefficient occupies two consecutive slots, its mean and its spread σ.
//! σ is unconstrained during estimation and reported as |σ|.
//!
//! Simulated probabilities average MNL probabilities over per-observation
//! standard-normal draws. The likelihood works in log space (log-sum-exp over
//! draws), so a tiny simulated probability never underflows inside the
//! optimizer.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CrashRecord, Dataset, Schema, SeverityClass};
use crate::numeric::DrawMatrix;
use crate::sum::{pairwise_sum, CompensatedSum};
use crate::{Error, Result};

/// Starting value for every σ.
pub const SD_START: f64 = 0.5;

/// Observations per reduction chunk. Fixed so that sums do not depend on the
/// number of worker threads.
const CHUNK: usize = 256;

fn all_alternatives() -> Vec<SeverityClass> {
    SeverityClass::ALL.to_vec()
}

pub fn default_coefficient_id(covariate: &str, alternative: SeverityClass) -> String {
    format!("{covariate}[{}]", alternative.key())
}

pub fn constant_id(alternative: SeverityClass) -> String {
    format!("const[{}]", alternative.key())
}

/// Name of the spread parameter of a random coefficient.
pub fn sd_name(id: &str) -> String {
    format!("sd({id})")
}

/// One covariate entering one alternative's utility.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub alternative: SeverityClass,
    pub covariate: String,
    /// Shared id to tie coefficients across alternatives; defaults to
    /// `covariate[alternative]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<String>,
}

impl Term {
    pub fn new(alternative: SeverityClass, covariate: impl Into<String>) -> Self {
        Term {
            alternative,
            covariate: covariate.into(),
            coefficient: None,
        }
    }

    pub fn id(&self) -> String {
        self.coefficient
            .clone()
            .unwrap_or_else(|| default_coefficient_id(&self.covariate, self.alternative))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "all_alternatives")]
    pub alternatives: Vec<SeverityClass>,
    pub base: SeverityClass,
    /// Alternatives with a constant; never the base.
    #[serde(default)]
    pub constants: Vec<SeverityClass>,
    #[serde(default)]
    pub terms: Vec<Term>,
    /// Coefficient ids drawn from Normal(μ, σ²).
    #[serde(default)]
    pub random: Vec<String>,
}

/// Where a coefficient loads: an alternative and a covariate, or a constant (`None`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loading {
    pub alternative: SeverityClass,
    pub covariate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientDef {
    pub id: String,
    pub loadings: Vec<Loading>,
    pub random: bool,
}

impl CoefficientDef {
    pub fn is_constant(&self) -> bool {
        self.loadings.iter().all(|l| l.covariate.is_none())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterRole {
    Fixed,
    Mean,
    Sd,
}

/// One slot of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSlot {
    pub name: String,
    pub coefficient: String,
    pub role: ParameterRole,
}

impl ModelSpec {
    /// All three alternatives, no terms, no constants.
    pub fn null(base: SeverityClass) -> Self {
        ModelSpec {
            alternatives: all_alternatives(),
            base,
            constants: Vec::new(),
            terms: Vec::new(),
            random: Vec::new(),
        }
    }

    /// Constants on every non-base alternative and nothing else.
    pub fn intercept_only(base: SeverityClass) -> Self {
        let mut spec = ModelSpec::null(base);
        spec.constants = spec.alternatives.iter().copied().filter(|&a| a != base).collect();
        spec
    }

    pub fn with_term(mut self, alternative: SeverityClass, covariate: &str) -> Self {
        self.terms.push(Term::new(alternative, covariate));
        self
    }

    pub fn with_random(mut self, id: &str) -> Self {
        self.random.push(id.to_string());
        self
    }

    pub fn alternative_position(&self, alt: SeverityClass) -> Option<usize> {
        self.alternatives.iter().position(|&a| a == alt)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(format!("invalid model spec: {m}")));
        if self.alternatives.len() < 2 {
            return bad("at least two alternatives are required".into());
        }
        let mut seen = BTreeSet::new();
        for a in &self.alternatives {
            if !seen.insert(*a) {
                return bad(format!("alternative {a} listed twice"));
            }
        }
        if !self.alternatives.contains(&self.base) {
            return bad(format!("base {} is not an alternative", self.base));
        }
        let mut seen = BTreeSet::new();
        for c in &self.constants {
            if *c == self.base {
                return bad(format!("base alternative {c} cannot carry a constant"));
            }
            if !self.alternatives.contains(c) {
                return bad(format!("constant on {c}, which is not an alternative"));
            }
            if !seen.insert(*c) {
                return bad(format!("constant on {c} listed twice"));
            }
        }
        let constant_ids: BTreeSet<String> = self.constants.iter().map(|&a| constant_id(a)).collect();
        let mut pairs = BTreeSet::new();
        for t in &self.terms {
            if !self.alternatives.contains(&t.alternative) {
                return bad(format!(
                    "term {} on {}, which is not an alternative",
                    t.covariate, t.alternative
                ));
            }
            let id = t.id();
            if constant_ids.contains(&id) {
                return bad(format!("coefficient id {id:?} collides with a constant"));
            }
            if !pairs.insert((t.alternative, id.clone())) {
                return bad(format!("coefficient {id:?} enters {} twice", t.alternative));
            }
        }
        let ids: BTreeSet<String> = self.coefficients().into_iter().map(|c| c.id).collect();
        let mut seen = BTreeSet::new();
        for r in &self.random {
            if !ids.contains(r) {
                return bad(format!("random coefficient {r:?} does not appear in the spec"));
            }
            if !seen.insert(r) {
                return bad(format!("random coefficient {r:?} listed twice"));
            }
        }
        Ok(())
    }

    /// Coefficients in parameter order: constants first, then term ids by first appearance.
    pub fn coefficients(&self) -> Vec<CoefficientDef> {
        let mut out: Vec<CoefficientDef> = self
            .constants
            .iter()
            .map(|&a| CoefficientDef {
                id: constant_id(a),
                loadings: vec![Loading {
                    alternative: a,
                    covariate: None,
                }],
                random: false,
            })
            .collect();
        for t in &self.terms {
            let id = t.id();
            let loading = Loading {
                alternative: t.alternative,
                covariate: Some(t.covariate.clone()),
            };
            match out.iter_mut().find(|c| c.id == id) {
                Some(c) => c.loadings.push(loading),
                None => out.push(CoefficientDef {
                    id,
                    loadings: vec![loading],
                    random: false,
                }),
            }
        }
        for c in &mut out {
            c.random = self.random.contains(&c.id);
        }
        out
    }

    pub fn parameter_layout(&self) -> Vec<ParameterSlot> {
        let mut out = Vec::new();
        for c in self.coefficients() {
            if c.random {
                out.push(ParameterSlot {
                    name: c.id.clone(),
                    coefficient: c.id.clone(),
                    role: ParameterRole::Mean,
                });
                out.push(ParameterSlot {
                    name: sd_name(&c.id),
                    coefficient: c.id,
                    role: ParameterRole::Sd,
                });
            } else {
                out.push(ParameterSlot {
                    name: c.id.clone(),
                    coefficient: c.id,
                    role: ParameterRole::Fixed,
                });
            }
        }
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameter_layout().into_iter().map(|s| s.name).collect()
    }

    pub fn n_params(&self) -> usize {
        self.parameter_layout().len()
    }

    pub fn covariates(&self) -> BTreeSet<String> {
        self.terms.iter().map(|t| t.covariate.clone()).collect()
    }

    /// Same spec with every coefficient fixed.
    pub fn without_random(&self) -> ModelSpec {
        ModelSpec {
            random: Vec::new(),
            ..self.clone()
        }
    }

    /// Keeps only `alternatives` (which must include the base) and the terms,
    /// constants and random ids that still apply.
    pub fn restrict_to(&self, alternatives: &[SeverityClass]) -> Result<ModelSpec> {
        if !alternatives.contains(&self.base) {
            return Err(Error::Argument(format!(
                "restricted choice set must keep the base alternative {}",
                self.base
            )));
        }
        let keep = |a: &SeverityClass| alternatives.contains(a);
        let mut spec = ModelSpec {
            alternatives: self.alternatives.iter().copied().filter(keep).collect(),
            base: self.base,
            constants: self.constants.iter().copied().filter(keep).collect(),
            terms: self.terms.iter().filter(|t| keep(&t.alternative)).cloned().collect(),
            random: Vec::new(),
        };
        let ids: BTreeSet<String> = spec.coefficients().into_iter().map(|c| c.id).collect();
        spec.random = self.random.iter().filter(|r| ids.contains(*r)).cloned().collect();
        spec.validate()?;
        Ok(spec)
    }

    /// Removes every term carrying coefficient `id` (or the constant with that id).
    pub fn drop_coefficient(&self, id: &str) -> ModelSpec {
        ModelSpec {
            alternatives: self.alternatives.clone(),
            base: self.base,
            constants: self
                .constants
                .iter()
                .copied()
                .filter(|&a| constant_id(a) != id)
                .collect(),
            terms: self.terms.iter().filter(|t| t.id() != id).cloned().collect(),
            random: self.random.iter().filter(|r| *r != id).cloned().collect(),
        }
    }

    pub fn demote_random(&self, id: &str) -> ModelSpec {
        ModelSpec {
            random: self.random.iter().filter(|r| *r != id).cloned().collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub id: String,
    /// Fixed value, or mean of a random coefficient.
    pub value: f64,
    /// Unconstrained spread of a random coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub entries: Vec<ParameterEntry>,
}

impl ParameterVector {
    /// Zeros for fixed coefficients and means, [`SD_START`] for spreads.
    pub fn starting(spec: &ModelSpec) -> Self {
        ParameterVector {
            entries: spec
                .coefficients()
                .into_iter()
                .map(|c| ParameterEntry {
                    id: c.id,
                    value: 0.0,
                    sd: c.random.then_some(SD_START),
                })
                .collect(),
        }
    }

    pub fn from_flat(spec: &ModelSpec, theta: &[f64]) -> Result<Self> {
        let coefs = spec.coefficients();
        let expected: usize = coefs.iter().map(|c| if c.random { 2 } else { 1 }).sum();
        if theta.len() != expected {
            return Err(Error::Argument(format!(
                "parameter vector has {} values, spec needs {expected}",
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        let mut it = theta.iter().copied();
        let entries = coefs
            .into_iter()
            .map(|c| {
                let value = it.next().unwrap_or_default();
                let sd = if c.random { it.next() } else { None };
                ParameterEntry { id: c.id, value, sd }
            })
            .collect();
        Ok(ParameterVector { entries })
    }

    pub fn to_flat(&self, spec: &ModelSpec) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for c in spec.coefficients() {
            let e = self
                .get(&c.id)
                .ok_or_else(|| Error::Argument(format!("no value for coefficient {:?}", c.id)))?;
            out.push(e.value);
            if c.random {
                out.push(e.sd.ok_or_else(|| Error::Argument(format!("random coefficient {:?} has no σ", c.id)))?);
            }
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Option<&ParameterEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn set(&mut self, id: &str, value: f64, sd: Option<f64>) {
        match self.entries.iter_mut().find(|e| e.id == id) {
            Some(e) => {
                e.value = value;
                e.sd = sd;
            }
            None => self.entries.push(ParameterEntry {
                id: id.to_string(),
                value,
                sd,
            }),
        }
    }
}

/// μ + σ·z.
pub fn realized_coefficient(mu: f64, sigma: f64, z: f64) -> f64 {
    mu + sigma * z
}

fn covariate_value(record: &CrashRecord, schema: &Schema, name: &str) -> Result<f64> {
    schema
        .index_of(name)
        .map(|i| record.values[i])
        .ok_or_else(|| Error::SpecMismatch(format!("covariate {name:?} is not in the data")))
}

/// Systematic utilities in `spec.alternatives` order. `draw` holds one
/// standard-normal value per random coefficient (coefficient order); without
/// it random coefficients sit at their means.
pub fn utility(
    record: &CrashRecord,
    schema: &Schema,
    spec: &ModelSpec,
    params: &ParameterVector,
    draw: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let mut u = vec![0.0; spec.alternatives.len()];
    let mut dim = 0;
    for c in spec.coefficients() {
        let e = params
            .get(&c.id)
            .ok_or_else(|| Error::Argument(format!("no value for coefficient {:?}", c.id)))?;
        let beta = if c.random {
            let z = match draw {
                Some(d) => *d.get(dim).ok_or_else(|| {
                    Error::Argument(format!(
                        "draw has {} values, spec has more random coefficients",
                        d.len()
                    ))
                })?,
                None => 0.0,
            };
            dim += 1;
            match draw {
                Some(_) => realized_coefficient(e.value, e.sd.unwrap_or(0.0), z),
                None => e.value,
            }
        } else {
            e.value
        };
        for l in &c.loadings {
            let j = spec
                .alternative_position(l.alternative)
                .ok_or_else(|| Error::Argument(format!("{} is not an alternative", l.alternative)))?;
            let x = match &l.covariate {
                Some(name) => covariate_value(record, schema, name)?,
                None => 1.0,
            };
            u[j] += beta * x;
        }
    }
    Ok(u)
}

/// Writes log-softmax into `out` and returns log-sum-exp.
#[inline]
fn log_softmax_into(u: &[f64], out: &mut [f64]) -> f64 {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for &v in u {
        s += (v - m).exp();
    }
    let lse = m + s.ln();
    for (o, &v) in out.iter_mut().zip(u) {
        *o = v - lse;
    }
    lse
}

/// Softmax with max-subtraction.
pub fn mnl_probability(utilities: &[f64]) -> Result<Vec<f64>> {
    if let Some(j) = utilities.iter().position(|u| !u.is_finite()) {
        return Err(Error::Numeric(format!("utility {j} is not finite ({})", utilities[j])));
    }
    if utilities.is_empty() {
        return Err(Error::Argument("no alternatives".into()));
    }
    let m = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = utilities.iter().map(|u| (u - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Average of [`mnl_probability`] over draws; `draws` is `R × n_random`
/// values, draw-major, for one record.
pub fn simulated_probability(
    record: &CrashRecord,
    schema: &Schema,
    spec: &ModelSpec,
    params: &ParameterVector,
    draws: &[f64],
) -> Result<Vec<f64>> {
    let n_random = spec.coefficients().iter().filter(|c| c.random).count();
    if n_random == 0 {
        return Err(Error::Argument(
            "simulated probability needs a random coefficient".into(),
        ));
    }
    if draws.is_empty() || draws.len() % n_random != 0 {
        return Err(Error::Argument(format!(
            "draw block of length {} does not match {n_random} random coefficients",
            draws.len()
        )));
    }
    let mut acc = vec![CompensatedSum::default(); spec.alternatives.len()];
    let n_draws = draws.len() / n_random;
    for z in draws.chunks(n_random) {
        let p = mnl_probability(&utility(record, schema, spec, params, Some(z))?)?;
        for (a, v) in acc.iter_mut().zip(p) {
            a.add(v);
        }
    }
    Ok(acc.iter().map(|a| a.value() / n_draws as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodValue {
    pub total: f64,
    pub contributions: Vec<f64>,
}

/// Spec resolved against a dataset: dense design array and choice indices.
#[derive(Clone, Debug)]
pub struct CompiledModel {
    spec: ModelSpec,
    names: Vec<String>,
    n_alt: usize,
    n_coef: usize,
    n_obs: usize,
    /// Flat index of each coefficient's value (or mean).
    coef_param: Vec<usize>,
    /// (coefficient, flat index of σ) per random dimension.
    random: Vec<(usize, usize)>,
    /// `design[(n * n_coef + k) * n_alt + j]`
    design: Vec<f64>,
    choices: Vec<usize>,
}

struct Workspace {
    b: Vec<f64>,
    u: Vec<f64>,
    lp: Vec<f64>,
    g: Vec<f64>,
    acc_coef: Vec<f64>,
    acc_sd: Vec<f64>,
}

impl CompiledModel {
    pub fn new(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        let coefs = spec.coefficients();
        let n_alt = spec.alternatives.len();
        let n_coef = coefs.len();
        let mut coef_param = Vec::with_capacity(n_coef);
        let mut random = Vec::new();
        let mut next = 0;
        // (coefficient, alternative position, column or None for constant)
        let mut cells = Vec::new();
        for (k, c) in coefs.iter().enumerate() {
            coef_param.push(next);
            next += 1;
            if c.random {
                random.push((k, next));
                next += 1;
            }
            for l in &c.loadings {
                let j = spec.alternative_position(l.alternative).unwrap_or_default();
                let col = match &l.covariate {
                    Some(name) => Some(
                        data.schema
                            .index_of(name)
                            .ok_or_else(|| Error::SpecMismatch(format!("covariate {name:?} is not in the data")))?,
                    ),
                    None => None,
                };
                cells.push((k, j, col));
            }
        }
        let n_obs = data.len();
        let mut design = vec![0.0; n_obs * n_coef * n_alt];
        let mut choices = Vec::with_capacity(n_obs);
        for (n, r) in data.records.iter().enumerate() {
            let y = spec.alternative_position(r.severity).ok_or_else(|| {
                Error::SpecMismatch(format!(
                    "observation {n} chose {}, which is not an alternative of the model",
                    r.severity
                ))
            })?;
            choices.push(y);
            for &(k, j, col) in &cells {
                let x = col.map_or(1.0, |c| r.values[c]);
                if !x.is_finite() {
                    return Err(Error::Numeric(format!(
                        "observation {n}: covariate value {x} is not finite"
                    )));
                }
                design[(n * n_coef + k) * n_alt + j] += x;
            }
        }
        Ok(CompiledModel {
            spec: spec.clone(),
            names: spec.parameter_names(),
            n_alt,
            n_coef,
            n_obs,
            coef_param,
            random,
            design,
            choices,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_alternatives(&self) -> usize {
        self.n_alt
    }

    pub fn n_random(&self) -> usize {
        self.random.len()
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// Design value of coefficient `k` for alternative `j` at observation `n`.
    pub fn design_value(&self, n: usize, k: usize, j: usize) -> f64 {
        self.design[(n * self.n_coef + k) * self.n_alt + j]
    }

    pub fn check_draws(&self, draws: Option<&DrawMatrix>) -> Result<()> {
        match (self.random.is_empty(), draws) {
            (true, None) => Ok(()),
            (true, Some(_)) => Err(Error::Argument(
                "draws given for a model without random coefficients".into(),
            )),
            (false, None) => Err(Error::Argument(
                "model has random coefficients but no draws were given".into(),
            )),
            (false, Some(d)) => {
                if d.n_obs != self.n_obs || d.n_random != self.random.len() {
                    Err(Error::Argument(format!(
                        "draws are {}×{} (obs × random), model needs {}×{}",
                        d.n_obs,
                        d.n_random,
                        self.n_obs,
                        self.random.len()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Argument(format!(
                "parameter vector has {} values, model needs {}",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            b: vec![0.0; self.n_coef],
            u: vec![0.0; self.n_alt],
            lp: vec![0.0; self.n_alt],
            g: vec![0.0; self.n_coef],
            acc_coef: vec![0.0; self.n_coef],
            acc_sd: vec![0.0; self.random.len()],
        }
    }

    #[inline]
    fn utilities_into(&self, n: usize, b: &[f64], u: &mut [f64]) {
        let x = &self.design[n * self.n_coef * self.n_alt..(n + 1) * self.n_coef * self.n_alt];
        u.fill(0.0);
        for (k, &bk) in b.iter().enumerate() {
            let row = &x[k * self.n_alt..(k + 1) * self.n_alt];
            for (uj, &xj) in u.iter_mut().zip(row) {
                *uj += bk * xj;
            }
        }
    }

    /// Coefficient values at the means.
    pub fn mean_coefficients(&self, theta: &[f64]) -> Vec<f64> {
        self.coef_param.iter().map(|&i| theta[i]).collect()
    }

    /// Per-coefficient score `Σ_j (1(j=y) − P_j) x_kj` into `g`.
    #[inline]
    fn coefficient_score(&self, n: usize, lp: &[f64], g: &mut [f64]) {
        let y = self.choices[n];
        let x = &self.design[n * self.n_coef * self.n_alt..(n + 1) * self.n_coef * self.n_alt];
        for (k, gk) in g.iter_mut().enumerate() {
            let row = &x[k * self.n_alt..(k + 1) * self.n_alt];
            let mut s = row[y];
            for (j, &xj) in row.iter().enumerate() {
                s -= lp[j].exp() * xj;
            }
            *gk = s;
        }
    }

    /// Log-likelihood contribution of observation `n`; adds its score to `grad`
    /// when given.
    fn observation(
        &self,
        n: usize,
        theta: &[f64],
        draws: Option<&DrawMatrix>,
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        for (bk, &i) in ws.b.iter_mut().zip(&self.coef_param) {
            *bk = theta[i];
        }
        let y = self.choices[n];
        let Some(draws) = draws.filter(|_| !self.random.is_empty()) else {
            self.utilities_into(n, &ws.b, &mut ws.u);
            log_softmax_into(&ws.u, &mut ws.lp);
            if let Some(grad) = grad {
                self.coefficient_score(n, &ws.lp, &mut ws.g);
                for (k, &i) in self.coef_param.iter().enumerate() {
                    grad[i] += ws.g[k];
                }
            }
            return ws.lp[y];
        };

        let want_grad = grad.is_some();
        let block = draws.block(n);
        let n_random = self.random.len();
        let mut max = f64::NEG_INFINITY;
        let mut s = 0.0;
        ws.acc_coef.fill(0.0);
        ws.acc_sd.fill(0.0);
        for z in block.chunks_exact(n_random) {
            for (d, &(k, sd_idx)) in self.random.iter().enumerate() {
                ws.b[k] = theta[self.coef_param[k]] + theta[sd_idx] * z[d];
            }
            self.utilities_into(n, &ws.b, &mut ws.u);
            log_softmax_into(&ws.u, &mut ws.lp);
            let a = ws.lp[y];
            if a > max {
                // Rescale running sums to the new maximum.
                let f = (max - a).exp();
                s *= f;
                if want_grad {
                    ws.acc_coef.iter_mut().for_each(|v| *v *= f);
                    ws.acc_sd.iter_mut().for_each(|v| *v *= f);
                }
                max = a;
            }
            let w = (a - max).exp();
            s += w;
            if want_grad {
                self.coefficient_score(n, &ws.lp, &mut ws.g);
                for (acc, &g) in ws.acc_coef.iter_mut().zip(&ws.g) {
                    *acc += w * g;
                }
                for (d, &(k, _)) in self.random.iter().enumerate() {
                    ws.acc_sd[d] += w * ws.g[k] * z[d];
                }
            }
        }
        if let Some(grad) = grad {
            for (k, &i) in self.coef_param.iter().enumerate() {
                grad[i] += ws.acc_coef[k] / s;
            }
            for (d, &(_, sd_idx)) in self.random.iter().enumerate() {
                grad[sd_idx] += ws.acc_sd[d] / s;
            }
        }
        max + s.ln() - (draws.n_draws as f64).ln()
    }

    /// Per-observation log-likelihood contributions.
    pub fn contributions(&self, theta: &[f64], draws: Option<&DrawMatrix>) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_draws(draws)?;
        let chunks: Vec<Vec<f64>> = (0..self.n_obs)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut ws = self.workspace();
                idx.iter()
                    .map(|&n| self.observation(n, theta, draws, &mut ws, None))
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }

    /// Total log-likelihood, fixed-order pairwise sum of the contributions.
    pub fn value(&self, theta: &[f64], draws: Option<&DrawMatrix>) -> Result<f64> {
        Ok(pairwise_sum(&self.contributions(theta, draws)?))
    }

    /// Log-likelihood and analytic gradient.
    pub fn value_and_gradient(&self, theta: &[f64], draws: Option<&DrawMatrix>) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        self.check_draws(draws)?;
        let p = self.n_params();
        let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..self.n_obs)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut ws = self.workspace();
                let mut grad = vec![0.0; p];
                let ll = idx
                    .iter()
                    .map(|&n| self.observation(n, theta, draws, &mut ws, Some(&mut grad)))
                    .collect();
                (ll, grad)
            })
            .collect();
        let mut contributions = Vec::with_capacity(self.n_obs);
        let mut grad = vec![CompensatedSum::default(); p];
        for (ll, g) in chunks {
            contributions.extend(ll);
            for (acc, v) in grad.iter_mut().zip(g) {
                acc.add(v);
            }
        }
        Ok((
            pairwise_sum(&contributions),
            grad.iter().map(CompensatedSum::value).collect(),
        ))
    }

    /// Per-observation gradient rows (for the outer-product covariance).
    pub fn scores(&self, theta: &[f64], draws: Option<&DrawMatrix>) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        self.check_draws(draws)?;
        let p = self.n_params();
        let chunks: Vec<Vec<Vec<f64>>> = (0..self.n_obs)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut ws = self.workspace();
                idx.iter()
                    .map(|&n| {
                        let mut g = vec![0.0; p];
                        self.observation(n, theta, draws, &mut ws, Some(&mut g));
                        g
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }

    /// Predicted probabilities for observation `n`: MNL at the means, or the
    /// draw average when the model has random coefficients and draws are given.
    pub fn probabilities(&self, n: usize, theta: &[f64], draws: Option<&DrawMatrix>) -> Vec<f64> {
        let mut ws = self.workspace();
        self.probabilities_with(n, theta, draws, None, &mut ws)
    }

    /// As [`CompiledModel::probabilities`], with the design value of coefficient
    /// `k` in alternative `j` replaced by `value`.
    pub fn probabilities_overriding(
        &self,
        n: usize,
        theta: &[f64],
        draws: Option<&DrawMatrix>,
        k: usize,
        j: usize,
        value: f64,
    ) -> Vec<f64> {
        let mut ws = self.workspace();
        self.probabilities_with(n, theta, draws, Some((k, j, value)), &mut ws)
    }

    /// Position of coefficient `id` in coefficient order.
    pub fn coefficient_index(&self, id: &str) -> Option<usize> {
        self.spec.coefficients().iter().position(|c| c.id == id)
    }

    fn probabilities_with(
        &self,
        n: usize,
        theta: &[f64],
        draws: Option<&DrawMatrix>,
        replace: Option<(usize, usize, f64)>,
        ws: &mut Workspace,
    ) -> Vec<f64> {
        for (bk, &i) in ws.b.iter_mut().zip(&self.coef_param) {
            *bk = theta[i];
        }
        let utilities = |b: &[f64], u: &mut [f64]| {
            self.utilities_into(n, b, u);
            if let Some((k, j, value)) = replace {
                u[j] += b[k] * (value - self.design_value(n, k, j));
            }
        };
        match draws.filter(|_| !self.random.is_empty()) {
            None => {
                utilities(&ws.b, &mut ws.u);
                log_softmax_into(&ws.u, &mut ws.lp);
                ws.lp.iter().map(|v| v.exp()).collect()
            }
            Some(d) => {
                let mut acc = vec![CompensatedSum::default(); self.n_alt];
                for z in d.block(n).chunks_exact(self.random.len()) {
                    for (dim, &(k, sd_idx)) in self.random.iter().enumerate() {
                        ws.b[k] = theta[self.coef_param[k]] + theta[sd_idx] * z[dim];
                    }
                    utilities(&ws.b, &mut ws.u);
                    log_softmax_into(&ws.u, &mut ws.lp);
                    for (a, &l) in acc.iter_mut().zip(&ws.lp) {
                        a.add(l.exp());
                    }
                }
                acc.iter().map(|a| a.value() / d.n_draws as f64).collect()
            }
        }
    }

    /// Predicted probabilities for every observation, in order.
    pub fn all_probabilities(&self, theta: &[f64], draws: Option<&DrawMatrix>) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        self.check_draws(draws)?;
        let chunks: Vec<Vec<Vec<f64>>> = (0..self.n_obs)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut ws = self.workspace();
                idx.iter()
                    .map(|&n| self.probabilities_with(n, theta, draws, None, &mut ws))
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }
}

/// Log-likelihood with per-observation contributions. Fails if any
/// observation's probability underflows to zero in double precision.
pub fn log_likelihood(
    dataset: &Dataset,
    spec: &ModelSpec,
    params: &ParameterVector,
    draws: Option<&DrawMatrix>,
) -> Result<LikelihoodValue> {
    let model = CompiledModel::new(spec, dataset)?;
    let theta = params.to_flat(spec)?;
    let contributions = model.contributions(&theta, draws)?;
    if let Some(n) = contributions.iter().position(|&c| !(c.exp() > 0.0)) {
        return Err(Error::Numeric(format!(
            "observation {n}: probability of the chosen class is zero at working precision (log {})",
            contributions[n]
        )));
    }
    Ok(LikelihoodValue {
        total: pairwise_sum(&contributions),
        contributions,
    })
}

/// Analytic gradient of [`log_likelihood`] in [`ModelSpec::parameter_layout`] order.
pub fn ll_gradient(
    dataset: &Dataset,
    spec: &ModelSpec,
    params: &ParameterVector,
    draws: Option<&DrawMatrix>,
) -> Result<Vec<f64>> {
    let model = CompiledModel::new(spec, dataset)?;
    let theta = params.to_flat(spec)?;
    Ok(model.value_and_gradient(&theta, draws)?.1)
}
