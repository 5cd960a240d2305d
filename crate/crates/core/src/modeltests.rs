//! Specification tests: likelihood-ratio partition and transfer tests, the
//! Hausman–McFadden IIA test, and the battery that runs them over area ×
//! lighting segments.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AreaType, Dataset, Partition, SegmentKey};
use crate::estimate::{fit, EstimationOptions, FitResult};
use crate::linalg::invert_symmetric;
use crate::model::{constant_id, CompiledModel, ModelSpec};
use crate::numeric::chi_square_quantile;
use crate::{Error, Result};

/// Log-likelihood and estimated-parameter count of one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLikelihood {
    pub label: String,
    pub log_likelihood: f64,
    pub n_params: usize,
}

impl ModelLikelihood {
    pub fn new(label: impl Into<String>, log_likelihood: f64, n_params: usize) -> Self {
        ModelLikelihood {
            label: label.into(),
            log_likelihood,
            n_params,
        }
    }

    pub fn from_fit(label: impl Into<String>, fit: &FitResult) -> Self {
        ModelLikelihood::new(label, fit.ll_converged, fit.n_estimated())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Partition,
    Transfer,
    Hausman,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: u32,
    pub critical_value: f64,
    pub confidence: f64,
    pub reject_null: bool,
    /// Models the statistic was computed from.
    pub inputs: Vec<ModelLikelihood>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn decide(
    kind: TestKind,
    statistic: f64,
    df: u32,
    confidence: f64,
    inputs: Vec<ModelLikelihood>,
    warnings: Vec<String>,
) -> Result<TestResult> {
    let critical_value = chi_square_quantile(df, confidence)?;
    Ok(TestResult {
        kind,
        statistic,
        df,
        critical_value,
        confidence,
        reject_null: statistic > critical_value,
        inputs,
        warnings,
    })
}

fn to_df(df: i64, what: &str) -> Result<u32> {
    if df < 1 {
        return Err(Error::Argument(format!(
            "{what} has {df} degrees of freedom; need at least 1"
        )));
    }
    u32::try_from(df).map_err(|_| Error::Argument(format!("{what}: degrees of freedom {df} too large")))
}

/// `−2[LL_full − Σ_j LL_j]` with `df = Σ_j k_j − k_full`.
pub fn lr_partition_test(full: &ModelLikelihood, parts: &[ModelLikelihood], confidence: f64) -> Result<TestResult> {
    let df = parts.iter().map(|p| p.n_params as i64).sum::<i64>() - full.n_params as i64;
    let df = to_df(df, "partition test")?;
    let total: f64 = parts.iter().map(|p| p.log_likelihood).sum();
    let tolerance = 1e-6 * full.log_likelihood.abs().max(1.0);
    if total < full.log_likelihood - tolerance {
        return Err(Error::Consistency(format!(
            "subgroup log-likelihoods sum to {total}, below the pooled {}; \
             the subgroups do not refit a partition of the pooled data",
            full.log_likelihood
        )));
    }
    let statistic = (-2.0 * (full.log_likelihood - total)).max(0.0);
    let mut inputs = vec![full.clone()];
    inputs.extend(parts.iter().cloned());
    decide(TestKind::Partition, statistic, df, confidence, inputs, Vec::new())
}

/// `−2[LL_{k1k2} − LL_{k1}]`; `transferred` carries LL_{k1k2} and the donor
/// model's parameter count, which is the df.
pub fn lr_transfer_test(
    native: &ModelLikelihood,
    transferred: &ModelLikelihood,
    confidence: f64,
) -> Result<TestResult> {
    let df = to_df(transferred.n_params as i64, "transfer test")?;
    // `+ 0.0` turns the identity case's −0 into 0.
    let statistic = -2.0 * (transferred.log_likelihood - native.log_likelihood) + 0.0;
    let mut warnings = Vec::new();
    if statistic < 0.0 {
        warnings.push("transferred parameters fit better than the native model (different specifications?)".into());
    }
    decide(
        TestKind::Transfer,
        statistic,
        df,
        confidence,
        vec![native.clone(), transferred.clone()],
        warnings,
    )
}

/// Log-likelihood of `donor`'s converged parameters on `data`, with draws
/// rebuilt for `data` exactly as estimation would build them.
pub fn transferred_log_likelihood(donor: &FitResult, data: &Dataset) -> Result<f64> {
    let model = CompiledModel::new(&donor.spec, data)?;
    let draws = donor.draws_for(data.len())?;
    model.value(&donor.theta(), draws.as_ref())
}

/// Hausman–McFadden statistic over the non-constant parameters both fits
/// share by name. Alternative-specific constants are left out: both fits
/// estimate them almost identically, which leaves the covariance difference
/// near-singular in that direction. A non-positive-definite covariance
/// difference falls back to the pseudo-inverse with its rank as df.
pub fn hausman_iia_test(full: &FitResult, restricted: &FitResult, confidence: f64) -> Result<TestResult> {
    let full_theta = full.theta();
    let restricted_theta = restricted.theta();
    let constants: Vec<String> = full
        .spec
        .constants
        .iter()
        .chain(&restricted.spec.constants)
        .map(|&a| constant_id(a))
        .collect();
    let index = |fit: &FitResult, name: &str| fit.parameters.iter().position(|p| p.name == name && !p.held);
    let shared: Vec<(usize, usize)> = restricted
        .parameters
        .iter()
        .filter(|p| !constants.contains(&p.coefficient))
        .filter_map(|p| Some((index(full, &p.name)?, index(restricted, &p.name)?)))
        .collect();
    if shared.is_empty() {
        return Err(Error::Argument(
            "the two fits share no estimated non-constant parameters".into(),
        ));
    }
    let m = shared.len();
    let d = DVector::from_iterator(m, shared.iter().map(|&(f, r)| restricted_theta[r] - full_theta[f]));
    let v = DMatrix::from_fn(m, m, |a, b| {
        let (fa, ra) = shared[a];
        let (fb, rb) = shared[b];
        restricted.covariance[ra][rb] - full.covariance[fa][fb]
    });
    let inv = invert_symmetric(&v);
    let mut warnings = Vec::new();
    let mut df = m;
    if inv.pseudo {
        df = inv.rank.max(1);
        warnings.push(format!(
            "covariance difference is not positive definite (smallest eigenvalue {:.3e}); \
             pseudo-inverse used with rank {} as df",
            inv.min_eigenvalue, inv.rank
        ));
    }
    let mut statistic = d.dot(&(&inv.inverse * &d));
    if statistic < 0.0 {
        warnings.push(format!("negative statistic {statistic:.4} truncated to 0"));
        statistic = 0.0;
    }
    let inputs = vec![
        ModelLikelihood::from_fit("full", full),
        ModelLikelihood::from_fit("restricted", restricted),
    ];
    decide(TestKind::Hausman, statistic, df as u32, confidence, inputs, warnings)
}

/// Specs for every model in the battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySpecs {
    /// Pooled over all segments.
    pub full: ModelSpec,
    pub rural: ModelSpec,
    pub urban: ModelSpec,
    pub segments: BTreeMap<SegmentKey, ModelSpec>,
}

impl BatterySpecs {
    /// One template for every model.
    pub fn shared(template: &ModelSpec) -> Self {
        BatterySpecs {
            full: template.clone(),
            rural: template.clone(),
            urban: template.clone(),
            segments: SegmentKey::all().into_iter().map(|k| (k, template.clone())).collect(),
        }
    }
}

/// Fitted models the battery draws on. Pooled fits are optional so that a
/// report can still show what is available.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryFits {
    pub full: Option<FitResult>,
    pub rural: Option<FitResult>,
    pub urban: Option<FitResult>,
    pub segments: BTreeMap<SegmentKey, FitResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    /// `full`, `rural` or `urban`.
    pub label: String,
    pub result: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "snake_case")]
pub enum TransferCell {
    Diagonal,
    Test { result: TestResult },
    NotEvaluable { reason: String },
}

/// Pairwise transfer tests within one area: row = data segment k1, column =
/// parameter donor k2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub area: AreaType,
    pub segments: Vec<SegmentKey>,
    pub cells: Vec<Vec<TransferCell>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub confidence: f64,
    pub partition: Vec<PartitionRow>,
    pub transfer: Vec<TransferMatrix>,
    pub notes: Vec<String>,
}

impl BatteryReport {
    pub fn is_empty(&self) -> bool {
        self.partition.is_empty() && self.transfer.is_empty()
    }
}

fn area_segments<'a>(fits: &'a BTreeMap<SegmentKey, FitResult>, area: AreaType) -> Vec<(SegmentKey, &'a FitResult)> {
    fits.iter()
        .filter(|(k, _)| k.area == area)
        .map(|(k, f)| (*k, f))
        .collect()
}

/// Builds the report from existing fits: pooled-vs-segments partition tests
/// (all, rural, urban) and within-area transfer matrices.
pub fn assemble_battery(fits: &BatteryFits, partition: &Partition, confidence: f64) -> Result<BatteryReport> {
    let mut report = BatteryReport {
        confidence,
        ..BatteryReport::default()
    };
    if fits.segments.len() < 2 {
        report
            .notes
            .push("nothing to compare: fewer than two segment models are available".into());
        return Ok(report);
    }

    let likelihoods = |list: &[(SegmentKey, &FitResult)]| -> Vec<ModelLikelihood> {
        list.iter()
            .map(|(k, f)| ModelLikelihood::from_fit(k.label(), f))
            .collect()
    };
    let all: Vec<(SegmentKey, &FitResult)> = fits.segments.iter().map(|(k, f)| (*k, f)).collect();
    let groups = [
        ("full", fits.full.as_ref(), all),
        (
            "rural",
            fits.rural.as_ref(),
            area_segments(&fits.segments, AreaType::Rural),
        ),
        (
            "urban",
            fits.urban.as_ref(),
            area_segments(&fits.segments, AreaType::Urban),
        ),
    ];
    for (label, pooled, parts) in groups {
        match pooled {
            None => report
                .notes
                .push(format!("{label}: no pooled model; partition test skipped")),
            Some(_) if parts.len() < 2 => report.notes.push(format!(
                "{label}: fewer than two segment models; partition test skipped"
            )),
            Some(pooled) => {
                let result = lr_partition_test(
                    &ModelLikelihood::from_fit(label, pooled),
                    &likelihoods(&parts),
                    confidence,
                )
                .map_err(|e| e.in_component(format!("{label} partition test")))?;
                report.partition.push(PartitionRow {
                    label: label.to_string(),
                    result,
                });
            }
        }
    }

    for area in AreaType::ALL {
        let members = area_segments(&fits.segments, area);
        if members.len() < 2 {
            continue;
        }
        let mut cells = Vec::with_capacity(members.len());
        for (k1, fit_k1) in &members {
            let data = partition
                .segments
                .get(k1)
                .ok_or_else(|| Error::Argument(format!("no data for segment {k1}")))?;
            let native = ModelLikelihood::from_fit(k1.label(), fit_k1);
            let mut row = Vec::with_capacity(members.len());
            for (k2, fit_k2) in &members {
                if k1 == k2 {
                    row.push(TransferCell::Diagonal);
                    continue;
                }
                let cell = match transferred_log_likelihood(fit_k2, data) {
                    Ok(ll) => {
                        let donor = ModelLikelihood::new(format!("{k2} on {k1}"), ll, fit_k2.n_estimated());
                        TransferCell::Test {
                            result: lr_transfer_test(&native, &donor, confidence)?,
                        }
                    }
                    Err(Error::SpecMismatch(reason)) => TransferCell::NotEvaluable { reason },
                    Err(e) => return Err(e.in_component(format!("transfer {k2} -> {k1}"))),
                };
                row.push(cell);
            }
            cells.push(row);
        }
        report.transfer.push(TransferMatrix {
            area,
            segments: members.iter().map(|(k, _)| *k).collect(),
            cells,
        });
    }
    Ok(report)
}

/// Fits every model the battery needs, in parallel, then assembles the report.
/// Any failed fit aborts the battery with the failing model named.
pub fn run_battery(
    data: &Dataset,
    specs: &BatterySpecs,
    opts: &EstimationOptions,
    confidence: f64,
) -> Result<(BatteryFits, BatteryReport)> {
    let partition = crate::domain::partition_dataset(data);
    if partition.segments.len() < 2 {
        let report = assemble_battery(&BatteryFits::default(), &partition, confidence)?;
        return Ok((BatteryFits::default(), report));
    }
    let fits = fit_battery(&partition, specs, opts)?;
    let report = assemble_battery(&fits, &partition, confidence)?;
    Ok((fits, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Job {
    Pooled(Option<AreaType>),
    Segment(SegmentKey),
}

/// Fits the pooled and segment models over a partition.
pub fn fit_battery(partition: &Partition, specs: &BatterySpecs, opts: &EstimationOptions) -> Result<BatteryFits> {
    let mut jobs = vec![Job::Pooled(None)];
    for area in AreaType::ALL {
        if partition.segments.keys().any(|k| k.area == area) {
            jobs.push(Job::Pooled(Some(area)));
        }
    }
    jobs.extend(partition.segments.keys().map(|&k| Job::Segment(k)));

    let results: Vec<(Job, Result<FitResult>)> = jobs
        .par_iter()
        .map(|&job| {
            let (label, spec, data) = match job {
                Job::Pooled(None) => ("full".to_string(), &specs.full, partition.pooled(|_| true)),
                Job::Pooled(Some(area)) => {
                    let spec = match area {
                        AreaType::Rural => &specs.rural,
                        AreaType::Urban => &specs.urban,
                    };
                    (area.key().to_string(), spec, partition.pooled(|k| k.area == area))
                }
                Job::Segment(k) => {
                    let spec = specs.segments.get(&k);
                    match spec {
                        Some(s) => (k.label(), s, partition.segments.get(&k).cloned()),
                        None => {
                            return (
                                job,
                                Err(Error::Argument(format!("no model spec for segment {k}")).in_component(k.label())),
                            )
                        }
                    }
                }
            };
            let result = match data {
                Some(d) => fit(&d, spec, opts),
                None => Err(Error::Domain("no observations".into())),
            };
            (job, result.map_err(|e| e.in_component(label)))
        })
        .collect();

    let mut fits = BatteryFits::default();
    for (job, result) in results {
        let f = result?;
        match job {
            Job::Pooled(None) => fits.full = Some(f),
            Job::Pooled(Some(AreaType::Rural)) => fits.rural = Some(f),
            Job::Pooled(Some(AreaType::Urban)) => fits.urban = Some(f),
            Job::Segment(k) => {
                fits.segments.insert(k, f);
            }
        }
    }
    Ok(fits)
}
