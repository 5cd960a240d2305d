//! The four subcommands. Each writes its reports under the output directory
//! and returns the paths it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use sevlogit::domain::{descriptive_stats, partition_dataset, AreaType, Dataset, Partition, SegmentKey, SeverityClass};
use sevlogit::estimate::{fit, refine_specification, EstimationOptions};
use sevlogit::inference::{marginal_effects_average, random_parameter_shares};
use sevlogit::ingest::parse_dataset;
use sevlogit::model::ModelSpec;
use sevlogit::modeltests::{assemble_battery, hausman_iia_test, BatteryFits, BatteryReport, TestResult};
use sevlogit::synth::write_simulated_csv;

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::report::{self, pooled_title, ModelReport};

pub const FITS_DIR: &str = "fits";
pub const POOLED_LABELS: [&str; 3] = ["full", "rural", "urban"];

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<PathBuf> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
    let to_io = |e: csv::Error| CliError::io(path, e.into());
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e.into()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn load_dataset(cfg: &LoadedConfig, strict: bool) -> CliResult<Dataset> {
    if !cfg.input.exists() {
        return Err(CliError::Missing(vec![format!("input file {}", cfg.input.display())]));
    }
    let parsed = parse_dataset(&cfg.input, &cfg.schema, strict)
        .map_err(|e| CliError::core(cfg.input.display().to_string(), e))?;
    if parsed.skipped() > 0 {
        warn!(
            "{}: skipped {} of {} rows ({} invalid, {} unknown codes)",
            cfg.input.display(),
            parsed.skipped(),
            parsed.rows_read,
            parsed.invalid_rows.len(),
            parsed.unknown_code_rows.len()
        );
    }
    info!("{}: {} records", cfg.input.display(), parsed.dataset.len());
    Ok(parsed.dataset)
}

pub fn cmd_describe(cfg: &LoadedConfig, strict: bool) -> CliResult<Vec<PathBuf>> {
    let data = load_dataset(cfg, strict)?;
    let partition = partition_dataset(&data);
    let mut counts = Vec::new();
    let mut tables = Vec::new();
    let mut csv_rows = Vec::new();
    for key in SegmentKey::all() {
        let segment = partition.segments.get(&key).filter(|d| !d.is_empty());
        counts.push((key, segment.map_or(0, Dataset::len)));
        let table = match segment {
            Some(d) => {
                let t = descriptive_stats(d).map_err(|e| CliError::core(key.label(), e))?;
                csv_rows.extend(report::describe_rows(&key, &t));
                Some(t)
            }
            None => {
                warn!("segment {key} has no observations");
                None
            }
        };
        tables.push((key, table));
    }
    create_dir(&cfg.output_dir)?;
    let out = &cfg.output_dir;
    let mut count_rows: Vec<Vec<String>> = counts.iter().map(|(k, n)| vec![k.label(), n.to_string()]).collect();
    count_rows.push(vec!["excluded".into(), partition.excluded.to_string()]);
    Ok(vec![
        write_text(
            &out.join("describe.md"),
            &report::render_describe_markdown(&counts, partition.excluded, &tables),
        )?,
        write_csv_rows(&out.join("describe.csv"), &report::DESCRIBE_HEADER, &csv_rows)?,
        write_csv_rows(&out.join("segment_counts.csv"), &["segment", "n"], &count_rows)?,
    ])
}

/// One model the fit step estimates.
pub struct FitJob {
    pub label: String,
    pub title: String,
    pub pooled: bool,
    pub spec: ModelSpec,
    pub data: Dataset,
}

/// Pooled models where they pool at least two segments, then every non-empty segment.
pub fn fit_jobs(cfg: &LoadedConfig, partition: &Partition) -> Vec<FitJob> {
    let present: Vec<SegmentKey> = partition
        .segments
        .iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(k, _)| *k)
        .collect();
    let mut jobs = Vec::new();
    for label in POOLED_LABELS {
        let area = match label {
            "rural" => Some(AreaType::Rural),
            "urban" => Some(AreaType::Urban),
            _ => None,
        };
        let members = present.iter().filter(|k| area.is_none_or(|a| k.area == a)).count();
        if members < 2 {
            continue;
        }
        if let Some(data) = partition.pooled(|k| area.is_none_or(|a| k.area == a)) {
            jobs.push(FitJob {
                label: label.to_string(),
                title: pooled_title(label),
                pooled: true,
                spec: cfg.pooled_spec(label).clone(),
                data,
            });
        }
    }
    for key in present {
        jobs.push(FitJob {
            label: key.label(),
            title: key.title(),
            pooled: false,
            spec: cfg.segment_spec(&key).clone(),
            data: partition.segments[&key].clone(),
        });
    }
    jobs
}

fn run_job(job: &FitJob, opts: &EstimationOptions, cfg: &LoadedConfig) -> sevlogit::Result<ModelReport> {
    let fit = fit(&job.data, &job.spec, opts)?;
    let marginal_effects = marginal_effects_average(&job.data, &fit, cfg.config.marginal_effects)?;
    let retention = refine_specification(&fit, cfg.config.retention_confidence)?;
    Ok(ModelReport {
        label: job.label.clone(),
        title: job.title.clone(),
        pooled: job.pooled,
        random_shares: random_parameter_shares(&fit),
        marginal_effects,
        retention,
        fit,
    })
}

pub struct FitOutcome {
    pub reports: Vec<ModelReport>,
    pub failures: Vec<String>,
    pub written: Vec<PathBuf>,
}

/// Fits every job; a failing model is reported but does not stop the others.
pub fn cmd_fit(cfg: &LoadedConfig, strict: bool) -> CliResult<FitOutcome> {
    let data = load_dataset(cfg, strict)?;
    let partition = partition_dataset(&data);
    let jobs = fit_jobs(cfg, &partition);
    if jobs.is_empty() {
        return Err(CliError::Missing(vec!["no segment with observations".into()]));
    }
    let opts = &cfg.config.estimation;
    let results: Vec<(String, sevlogit::Result<ModelReport>)> = jobs
        .par_iter()
        .map(|job| {
            info!("fitting {} ({} observations)", job.label, job.data.len());
            (job.label.clone(), run_job(job, opts, cfg))
        })
        .collect();

    let fits_dir = cfg.output_dir.join(FITS_DIR);
    create_dir(&fits_dir)?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut written = Vec::new();
    for (label, result) in results {
        let json = fits_dir.join(format!("{label}.json"));
        match result {
            Ok(r) => {
                written.push(write_json(&json, &r)?);
                written.push(write_text(
                    &cfg.output_dir.join(format!("fit_{label}.md")),
                    &report::render_fit_markdown(&r),
                )?);
                reports.push(r);
            }
            Err(e) => {
                warn!("{label}: {e}");
                if json.exists() {
                    fs::remove_file(&json).map_err(|e| CliError::io(&json, e))?;
                }
                failures.push(format!("{label}: {e}"));
            }
        }
    }
    let out = &cfg.output_dir;
    let collect = |f: fn(&ModelReport) -> Vec<Vec<String>>| reports.iter().flat_map(f).collect::<Vec<_>>();
    written.push(write_csv_rows(
        &out.join("coefficients.csv"),
        &report::COEFFICIENT_HEADER,
        &collect(report::coefficient_rows),
    )?);
    written.push(write_csv_rows(
        &out.join("marginal_effects.csv"),
        &report::EFFECT_HEADER,
        &collect(report::effect_rows),
    )?);
    written.push(write_csv_rows(
        &out.join("model_stats.csv"),
        &report::STATS_HEADER,
        &reports.iter().map(report::stats_row).collect::<Vec<_>>(),
    )?);
    written.push(write_csv_rows(
        &out.join("random_shares.csv"),
        &report::SHARE_HEADER,
        &collect(report::share_rows),
    )?);
    written.push(write_csv_rows(
        &out.join("retention.csv"),
        &report::RETENTION_HEADER,
        &collect(report::retention_rows),
    )?);
    Ok(FitOutcome {
        reports,
        failures,
        written,
    })
}

pub fn read_model_report(path: &Path) -> CliResult<ModelReport> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(path, e))
}

pub struct TestsOutcome {
    pub battery: BatteryReport,
    pub hausman: Vec<(String, TestResult)>,
    pub written: Vec<PathBuf>,
}

/// Hausman–McFadden screen on one segment: MNL on all alternatives versus MNL
/// without `omit` and its observations.
fn hausman_for(
    data: &Dataset,
    spec: &ModelSpec,
    omit: SeverityClass,
    opts: &EstimationOptions,
    confidence: f64,
) -> sevlogit::Result<TestResult> {
    let spec = spec.without_random();
    let kept: Vec<SeverityClass> = spec.alternatives.iter().copied().filter(|a| *a != omit).collect();
    let restricted_spec = spec.restrict_to(&kept)?;
    let full = fit(data, &spec, opts)?;
    let restricted = fit(&data.filter_classes(&kept), &restricted_spec, opts)?;
    hausman_iia_test(&full, &restricted, confidence)
}

pub fn cmd_tests(cfg: &LoadedConfig, strict: bool) -> CliResult<TestsOutcome> {
    let data = load_dataset(cfg, strict)?;
    let partition = partition_dataset(&data);
    let jobs = fit_jobs(cfg, &partition);
    let fits_dir = cfg.output_dir.join(FITS_DIR);

    let mut missing = Vec::new();
    let mut loaded = BTreeMap::new();
    for job in &jobs {
        let path = fits_dir.join(format!("{}.json", job.label));
        if !path.exists() {
            missing.push(format!("fit file {}", path.display()));
            continue;
        }
        let r = read_model_report(&path)?;
        if r.fit.n_obs != job.data.len() {
            return Err(CliError::Missing(vec![format!(
                "{} was fitted on {} observations but the input has {}; rerun `fit`",
                path.display(),
                r.fit.n_obs,
                job.data.len()
            )]));
        }
        loaded.insert(job.label.clone(), r.fit);
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }

    let mut fits = BatteryFits {
        full: loaded.remove("full"),
        rural: loaded.remove("rural"),
        urban: loaded.remove("urban"),
        segments: BTreeMap::new(),
    };
    for (label, f) in loaded {
        let key: SegmentKey = label
            .parse()
            .map_err(|e: sevlogit::Error| CliError::core(format!("fit label {label}"), e))?;
        fits.segments.insert(key, f);
    }
    let confidence = cfg.config.test_confidence;
    let battery = assemble_battery(&fits, &partition, confidence).map_err(|e| CliError::core("test battery", e))?;

    let mut hausman = Vec::new();
    if let Some(omit) = cfg.config.hausman_omit {
        let opts = &cfg.config.estimation;
        let results: Vec<(String, sevlogit::Result<TestResult>)> = fits
            .segments
            .keys()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|key| {
                let data = &partition.segments[key];
                (
                    key.label(),
                    hausman_for(data, cfg.segment_spec(key), omit, opts, confidence),
                )
            })
            .collect();
        let mut failures = Vec::new();
        for (label, r) in results {
            match r {
                Ok(t) => hausman.push((label, t)),
                Err(e) => failures.push(format!("{label} Hausman: {e}")),
            }
        }
        if !failures.is_empty() {
            return Err(CliError::Estimation(failures));
        }
    }

    let out = &cfg.output_dir;
    create_dir(out)?;
    let mut written = vec![
        write_text(
            &out.join("tests.md"),
            &report::render_tests_markdown(&battery, &hausman),
        )?,
        write_csv_rows(
            &out.join("tests_partition.csv"),
            &report::PARTITION_HEADER,
            &report::partition_rows(&battery),
        )?,
        write_csv_rows(
            &out.join("tests_transfer.csv"),
            &report::TRANSFER_HEADER,
            &report::transfer_rows(&battery),
        )?,
        write_json(&out.join("tests.json"), &battery)?,
    ];
    if !hausman.is_empty() {
        written.push(write_csv_rows(
            &out.join("tests_hausman.csv"),
            &report::HAUSMAN_HEADER,
            &report::hausman_rows(&hausman),
        )?);
    }
    Ok(TestsOutcome {
        battery,
        hausman,
        written,
    })
}

/// Writes the synthetic dataset and returns its path and the true parameters
/// by segment, as JSON.
pub fn cmd_synth(cfg: &LoadedConfig, out: Option<&Path>) -> CliResult<(PathBuf, String)> {
    let synth = cfg
        .config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::config(&cfg.path, "no `synth` section"))?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => cfg.synth_output().expect("synth section present"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write_simulated_csv(&synth.dgp, synth.n, &mut w).map_err(|e| match e {
        sevlogit::Error::Io(io) => CliError::io(&path, io),
        sevlogit::Error::Csv(c) => CliError::io(&path, c.into()),
        other => CliError::core("synth", other),
    })?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::io(&path, e))?;

    let truth: BTreeMap<String, _> = synth
        .dgp
        .effective_segments()
        .iter()
        .map(|s| (s.segment.label(), synth.dgp.segment_parameters(s)))
        .collect();
    let text = serde_json::to_string_pretty(&truth).map_err(|e| CliError::io(&path, e.into()))?;
    Ok((path, text))
}
