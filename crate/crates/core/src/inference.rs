//! Marginal effects and normal-share decompositions of random coefficients.

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, SeverityClass};
use crate::estimate::FitResult;
use crate::model::{CompiledModel, ParameterRole};
use crate::numeric::{std_normal_cdf, std_normal_sf};
use crate::sum::pairwise_sum;
use crate::{Error, Result};

/// `[1(i=m) − P_m]·P_i·β_k`, where `m` is the alternative whose utility holds
/// the variable and `i` the target; both index `probabilities`.
pub fn marginal_effect_point(probabilities: &[f64], beta_k: f64, home: usize, target: usize) -> Result<f64> {
    let n = probabilities.len();
    if home >= n || target >= n {
        return Err(Error::Argument(format!(
            "alternative index out of range ({home}, {target}) for {n} probabilities"
        )));
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Argument(format!(
            "{probabilities:?} is not a probability vector"
        )));
    }
    let indicator = if home == target { 1.0 } else { 0.0 };
    Ok((indicator - probabilities[home]) * probabilities[target] * beta_k)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMode {
    /// Derivative formula applied to every variable, indicators included.
    #[default]
    Derivative,
    /// Indicators: average of P(x=1) − P(x=0); continuous variables keep the derivative.
    DiscreteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffectRow {
    pub covariate: String,
    /// Alternative whose utility holds the term.
    pub alternative: SeverityClass,
    pub coefficient: String,
    /// Average effect on each alternative's probability, in table order.
    pub effects: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffectsTable {
    pub alternatives: Vec<SeverityClass>,
    pub mode: EffectMode,
    pub rows: Vec<MarginalEffectRow>,
}

impl MarginalEffectsTable {
    pub fn row(&self, coefficient: &str) -> Option<&MarginalEffectRow> {
        self.rows.iter().find(|r| r.coefficient == coefficient)
    }
}

/// Average marginal effects, one row per model term. Mixed fits use simulated
/// probabilities with the same draws as estimation and random coefficients at
/// their means.
pub fn marginal_effects_average(data: &Dataset, fit: &FitResult, mode: EffectMode) -> Result<MarginalEffectsTable> {
    if data.is_empty() {
        return Err(Error::Domain("marginal effects of an empty dataset".into()));
    }
    let spec = &fit.spec;
    let model = CompiledModel::new(spec, data)?;
    let theta = fit.theta();
    let draws = fit.draws_for(data.len())?;
    let draws = draws.as_ref();
    let probs = model.all_probabilities(&theta, draws)?;
    let n_alt = spec.alternatives.len();
    let kinds: Vec<_> = data.schema.iter().map(|(_, k)| k).collect();

    let mut rows = Vec::new();
    for term in &spec.terms {
        let id = term.id();
        let k = model
            .coefficient_index(&id)
            .ok_or_else(|| Error::Argument(format!("coefficient {id:?} missing from the model")))?;
        let home = spec
            .alternative_position(term.alternative)
            .ok_or_else(|| Error::Argument(format!("{} is not an alternative", term.alternative)))?;
        let beta = fit
            .parameters
            .iter()
            .find(|p| p.coefficient == id && p.role != ParameterRole::Sd)
            .map(|p| p.estimate)
            .ok_or_else(|| Error::Argument(format!("no estimate for {id:?}")))?;
        let column = data
            .schema
            .index_of(&term.covariate)
            .ok_or_else(|| Error::SpecMismatch(format!("covariate {:?} is not in the data", term.covariate)))?;
        let discrete =
            mode == EffectMode::DiscreteDifference && kinds[column] == crate::domain::CovariateKind::Indicator;

        let mut per_alt = vec![Vec::with_capacity(data.len()); n_alt];
        for (n, p) in probs.iter().enumerate() {
            if discrete {
                let one = model.probabilities_overriding(n, &theta, draws, k, home, 1.0);
                let zero = model.probabilities_overriding(n, &theta, draws, k, home, 0.0);
                for i in 0..n_alt {
                    per_alt[i].push(one[i] - zero[i]);
                }
            } else {
                for (i, values) in per_alt.iter_mut().enumerate() {
                    let indicator = if i == home { 1.0 } else { 0.0 };
                    values.push((indicator - p[home]) * p[i] * beta);
                }
            }
        }
        let nf = data.len() as f64;
        rows.push(MarginalEffectRow {
            covariate: term.covariate.clone(),
            alternative: term.alternative,
            coefficient: id,
            effects: per_alt.iter().map(|v| pairwise_sum(v) / nf).collect(),
        });
    }
    Ok(MarginalEffectsTable {
        alternatives: spec.alternatives.clone(),
        mode,
        rows,
    })
}

/// Mass of Normal(μ, σ²) above and below zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalShare {
    pub positive: f64,
    pub negative: f64,
}

pub fn share_positive(mu: f64, sigma: f64) -> Result<NormalShare> {
    if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::Argument(format!(
            "share of a normal needs finite μ and σ > 0 (μ={mu}, σ={sigma})"
        )));
    }
    let z = mu / sigma;
    Ok(NormalShare {
        positive: std_normal_cdf(z),
        negative: std_normal_sf(z),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomShareRow {
    pub coefficient: String,
    pub mean: f64,
    pub sd: f64,
    pub share: NormalShare,
}

/// Normal shares for every random coefficient of a fit with σ ≠ 0.
pub fn random_parameter_shares(fit: &FitResult) -> Vec<RandomShareRow> {
    let mut out = Vec::new();
    for p in fit.parameters.iter().filter(|p| p.role == ParameterRole::Mean) {
        let Some(sd) = fit
            .parameters
            .iter()
            .find(|q| q.coefficient == p.coefficient && q.role == ParameterRole::Sd)
        else {
            continue;
        };
        if let Ok(share) = share_positive(p.estimate, sd.estimate) {
            out.push(RandomShareRow {
                coefficient: p.coefficient.clone(),
                mean: p.estimate,
                sd: sd.estimate,
                share,
            });
        }
    }
    out
}
