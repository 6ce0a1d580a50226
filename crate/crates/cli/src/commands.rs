use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use geomguard::attack::{
    boundary_attack_batch, epsilon_grid, epsilon_sweep, make_blobs, pick_starting_points, train_classifier,
    AttackConfig, BlobMixture, ClassifierModel, SweepOptions, TrainConfig, DEFAULT_BLOB_STD,
};
use geomguard::bench::compare_paths;
use geomguard::index::{load_index, save_index};
use geomguard::monitor::{admixture_sweep, any_flagged, judge, subbatch_ensemble, FlagPolicy, MetricName, Verdict};
use geomguard::{evaluate, load_pointset, save_pointset, Format, ManifoldIndex, PointSet, SplitSpec};
use serde::Serialize;
use serde_json::json;

use crate::report::{print_csv, print_json, sig6, with_manifest, RunManifest};
use crate::{
    AdmixtureArgs, AttackArgs, AttackKind, BenchArgs, Flagged, IndexArgs, MetricsArgs, MonitorArgs, OutputFormat,
    PolicyName, UsageError,
};

type Outcome = anyhow::Result<Option<Flagged>>;

fn load(path: &Path) -> anyhow::Result<PointSet> {
    Ok(load_pointset(path, Format::from_path(path))?)
}

fn io_error(path: &Path, source: std::io::Error) -> geomguard::Error {
    geomguard::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn index(args: &IndexArgs) -> Outcome {
    let manifest = RunManifest::new("index", args)?;
    let reference = load(&args.reference)?;
    let index = ManifoldIndex::build_with(reference, args.k, args.strategy.into())?;
    save_index(&index, &args.out)?;
    let body = json!({
        "out": args.out,
        "n_reference": index.n_reference(),
        "dim": index.reference().d(),
        "k": index.k(),
    });
    print_json(&with_manifest(&body, &manifest)?)?;
    Ok(None)
}

pub fn metrics(args: &MetricsArgs) -> Outcome {
    let manifest = RunManifest::new("metrics", args)?;
    let index = match (&args.index, &args.reference) {
        (Some(path), None) => load_index(path, args.strategy.into())?,
        (None, Some(path)) => ManifoldIndex::build_with(load(path)?, args.k, args.strategy.into())?,
        _ => return Err(UsageError("exactly one of --index or --reference is required".into()).into()),
    };
    let query = load(&args.query)?;
    let report = evaluate(&index, &query, args.with_pr)?;
    print_json(&with_manifest(&report, &manifest)?)?;
    Ok(None)
}

pub fn monitor(args: &MonitorArgs) -> Outcome {
    let manifest = RunManifest::new("monitor", args)?;
    let policy = match args.policy {
        PolicyName::Iqr => FlagPolicy::Iqr {
            multiplier: args.iqr_multiplier,
        },
        PolicyName::QuantileRange => FlagPolicy::QuantileRange,
    };
    let index = load_index(&args.index, args.strategy.into())?;
    let query = load(&args.query)?;
    let bands = match &args.holdout {
        Some(path) => subbatch_ensemble(&index, &load(path)?, args.sub_batch, args.seed)?,
        None => {
            eprintln!("warning: no --holdout given; bands come from the query itself");
            subbatch_ensemble(&index, &query, args.sub_batch, args.seed)?
        }
    };
    let report = evaluate(&index, &query, false)?;
    // Coverage grows with batch size, so a larger query is judged by the
    // median of its own sub-batches rather than by its whole-batch value.
    let (observed_from, query_bands, verdicts) = if query.n() > args.sub_batch {
        let own = subbatch_ensemble(&index, &query, args.sub_batch, args.seed)?;
        let verdicts = [MetricName::Density, MetricName::Coverage]
            .into_iter()
            .map(|m| {
                let (low, high) = policy.limits(bands.get(m))?;
                let observed = own.get(m).q50().expect("ensemble has quantiles");
                Ok(Verdict::new(m, observed, low, high))
            })
            .collect::<geomguard::Result<Vec<_>>>()?;
        ("sub-batch-median", Some(own), verdicts)
    } else {
        if query.n() < args.sub_batch {
            eprintln!(
                "warning: query has {} rows but bands use sub-batches of {}; coverage is not comparable",
                query.n(),
                args.sub_batch
            );
        }
        ("batch", None, judge(&report, &bands, policy)?)
    };
    let flagged = any_flagged(&verdicts);
    let mut body = json!({
        "bands": bands,
        "report": report,
        "observed_from": observed_from,
        "verdicts": verdicts,
        "flagged": flagged,
    });
    if let Some(own) = query_bands {
        body["query_bands"] = serde_json::to_value(own)?;
    }
    print_json(&with_manifest(&body, &manifest)?)?;
    if flagged {
        eprintln!("batch flagged");
        if args.fail_on_flag {
            return Ok(Some(Flagged));
        }
    }
    Ok(None)
}

pub fn admixture(args: &AdmixtureArgs) -> Outcome {
    let manifest = RunManifest::new("admixture", args)?;
    let index = load_index(&args.index, args.strategy.into())?;
    let benign = load(&args.benign)?;
    let adversarial = load(&args.adversarial)?;
    let points = admixture_sweep(&index, &benign, &adversarial, &args.fractions, args.batch_size, args.seed)?;
    match args.format {
        OutputFormat::Json => print_json(&with_manifest(&json!({ "points": points }), &manifest)?)?,
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = points
                .iter()
                .map(|p| {
                    vec![
                        sig6(p.fraction),
                        sig6(p.realized_fraction),
                        p.n_adversarial.to_string(),
                        sig6(p.report.density),
                        sig6(p.report.coverage),
                    ]
                })
                .collect();
            print_csv(
                &["fraction", "realized_fraction", "n_adversarial", "density", "coverage"],
                &rows,
                &manifest,
            )?;
        }
    }
    Ok(None)
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parsed: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match parsed.as_deref() {
        Some(&[start, stop, step]) => Ok(epsilon_grid(start, stop, step)?),
        _ => Err(UsageError(format!("--epsilon-grid expects start:stop:step, got {spec:?}")).into()),
    }
}

fn obtain_model(args: &AttackArgs, model_set: &PointSet) -> anyhow::Result<(ClassifierModel, Option<f64>)> {
    if let Some(path) = &args.model_in {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let model: ClassifierModel =
            serde_json::from_slice(&bytes).with_context(|| format!("{}: not a classifier model", path.display()))?;
        model.validate()?;
        model.check_input(model_set)?;
        return Ok((model, None));
    }
    let config = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        hidden_width: args.hidden,
        seed: args.seed,
    };
    let training = train_classifier(model_set, &config)?;
    if let Some(path) = &args.model_out {
        fs::write(path, serde_json::to_vec_pretty(&training.model)?).map_err(|e| io_error(path, e))?;
    }
    Ok((training.model, Some(training.accuracy)))
}

fn diameter(ps: &PointSet) -> f64 {
    let lo = ps.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = ps.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    (hi - lo).max(0.0) * (ps.d() as f64).sqrt()
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| io_error(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct BoundaryReport {
    reference: geomguard::MetricReport,
    adversarial: geomguard::MetricReport,
    n_attacked: usize,
    accuracy_before: f64,
    accuracy_after: f64,
    mean_start_distance: f64,
    mean_final_distance: f64,
    mean_accepted_steps: f64,
}

pub fn attack(args: &AttackArgs) -> Outcome {
    let manifest = RunManifest::new("attack", args)?;
    let grid = parse_grid(&args.epsilon_grid)?;
    let data = make_blobs(args.samples, args.dim, args.classes, args.separation, args.seed)?;
    let (model_set, validation) = geomguard::split_stratified(&data, &SplitSpec::new(args.holdout, args.seed, true)?)?;
    let (model, train_accuracy) = obtain_model(args, &model_set)?;
    eprintln!("building index over {} reference points", model_set.n());
    let index = geomguard::build_index(model_set.without_labels(), args.k)?;

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let model_path = args.out.join("model_set.pset");
    let validation_path = args.out.join("validation.pset");
    save_pointset(&model_set, &model_path, Format::Pset)?;
    save_pointset(&validation, &validation_path, Format::Pset)?;
    let mut files: Vec<PathBuf> = vec![model_path, validation_path];

    let body = match args.attack {
        AttackKind::Fgsm => {
            let options = SweepOptions {
                sub_batch_size: (args.sub_batch > 0).then_some(args.sub_batch),
                seed: args.seed,
                keep_adversarial: true,
                ..SweepOptions::default()
            };
            let sweep = epsilon_sweep(&model, &validation, &index, &grid, &options)?;
            for point in &sweep.points {
                let path = args.out.join(format!("fgsm_eps_{}.pset", point.epsilon));
                save_pointset(point.adversarial.as_ref().expect("kept"), &path, Format::Pset)?;
                files.push(path);
            }
            let mut body = serde_json::to_value(&sweep)?;
            body["train_accuracy"] = json!(train_accuracy);
            body["files"] = json!(files);
            body
        }
        AttackKind::Boundary => {
            let labels = validation.labels().expect("generated data is labelled");
            let chosen: Vec<usize> = (0..validation.n())
                .filter(|&i| model.predict(validation.row(i)) == labels[i])
                .take(args.boundary_samples)
                .collect();
            if chosen.is_empty() {
                anyhow::bail!(geomguard::Error::Validation("no correctly classified validation sample".into()));
            }
            let sources = validation.select(&chosen);
            let starts = pick_starting_points(&model, &validation, &sources, args.seed)?;
            let config = AttackConfig {
                steps: args.steps,
                step_scale: args.step_scale.unwrap_or(0.01 * diameter(&validation)),
                seed: args.seed,
                ..AttackConfig::default()
            };
            let (adv, outcomes) = boundary_attack_batch(&model, &sources, &starts, &config)?;
            let sources_path = args.out.join("boundary_sources.pset");
            let adv_path = args.out.join("boundary_adversarial.pset");
            save_pointset(&sources, &sources_path, Format::Pset)?;
            save_pointset(&adv, &adv_path, Format::Pset)?;
            files.extend([sources_path, adv_path]);
            let n = outcomes.len() as f64;
            let report = BoundaryReport {
                reference: evaluate(&index, &sources.without_labels(), false)?,
                adversarial: evaluate(&index, &adv.without_labels(), false)?,
                n_attacked: outcomes.len(),
                accuracy_before: model.accuracy(&sources)?,
                accuracy_after: model.accuracy(&adv)?,
                mean_start_distance: outcomes.iter().map(|o| o.accepted_distances[0]).sum::<f64>() / n,
                mean_final_distance: outcomes.iter().map(|o| *o.accepted_distances.last().unwrap()).sum::<f64>() / n,
                mean_accepted_steps: outcomes.iter().map(|o| (o.accepted_distances.len() - 1) as f64).sum::<f64>() / n,
            };
            let mut body = serde_json::to_value(&report)?;
            body["train_accuracy"] = json!(train_accuracy);
            body["files"] = json!(files);
            body
        }
    };
    let full = with_manifest(&body, &manifest)?;
    let name = match args.attack {
        AttackKind::Fgsm => "sweep.json",
        AttackKind::Boundary => "boundary.json",
    };
    write_json(&args.out.join(name), &full)?;
    print_json(&full)?;
    Ok(None)
}

pub fn bench(args: &BenchArgs) -> Outcome {
    let manifest = RunManifest::new("bench", args)?;
    if !(args.query_fraction > 0.0 && args.query_fraction <= 1.0) {
        return Err(UsageError("--query-fraction must lie in (0, 1]".into()).into());
    }
    let mut results = Vec::new();
    for &s in &args.sizes {
        for &d in &args.dims {
            // A loose separation so centres can be placed in any dimension.
            let mix = BlobMixture::new(d, 10, 1.0, DEFAULT_BLOB_STD, args.seed)?;
            let t = ((s as f64 * args.query_fraction).round() as usize).max(1);
            let reference = mix.sample(s, 2 * args.seed)?.without_labels();
            let query = mix.sample(t, 2 * args.seed + 1)?.without_labels();
            let r = compare_paths(&reference, &query, args.k, args.strategy.into())?;
            eprintln!(
                "S={s} T={t} d={d}: fast {:.3}s, naive {:.3}s, speedup {:.1}x",
                r.fast_seconds, r.naive_seconds, r.speedup
            );
            if !r.identical {
                eprintln!("warning: fast and naive reports differ for S={s} d={d}");
            }
            results.push(r);
        }
    }
    match args.format {
        OutputFormat::Json => print_json(&with_manifest(&json!({ "runs": results }), &manifest)?)?,
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = results
                .iter()
                .map(|r| {
                    vec![
                        r.n_reference.to_string(),
                        r.n_query.to_string(),
                        r.dim.to_string(),
                        r.k.to_string(),
                        sig6(r.fast_seconds),
                        sig6(r.naive_seconds),
                        sig6(r.speedup),
                        r.identical.to_string(),
                        sig6(r.report.density),
                        sig6(r.report.coverage),
                    ]
                })
                .collect();
            print_csv(
                &[
                    "n_reference", "n_query", "dim", "k", "fast_seconds", "naive_seconds", "speedup", "identical",
                    "density", "coverage",
                ],
                &rows,
                &manifest,
            )?;
        }
    }
    Ok(None)
}
