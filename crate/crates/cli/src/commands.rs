//! The five subcommands. Each resolves its settings (preset, then config
//! file, then flags), does the work through the core crate, writes its data
//! files, and finishes with one manifest. Seeds are fanned out additively
//! from the user seed so no two random streams share a keystream.

use std::path::{Path, PathBuf};

use dagsurv_core::{
    apply_censoring, apply_censoring_uniform_global, default_num_bins, discretize, entropy_gap,
    generate as generate_dataset, read_adjacency_csv, read_dataset_csv, sample_erdos_renyi_dag,
    split, write_adjacency_csv, write_dataset_csv, DagSampleConfig, DagSurvModel,
    DiscreteBayesNet, EntropyGap, GenConfig, GenWarning, ModelConfig, SurvivalDataset,
    TrainConfig,
};
use serde_json::json;

use crate::manifest::ManifestBuilder;
use crate::presets::{gen_preset, load_file_config, preset_names, train_preset};
use crate::{
    CensorModeArg, CliError, EvaluateArgs, GenerateArgs, PredictArgs, PropcheckArgs, SplitArg,
    TrainArgs,
};

fn path_str(path: &Path) -> Result<&str, CliError> {
    path.to_str()
        .ok_or_else(|| CliError::usage(format!("path {path:?} is not valid UTF-8")))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body)
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("creating {}: {e}", dir.display())))
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("generate");
    let preset = match &args.preset {
        Some(name) => Some(gen_preset(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown generation preset {name:?}; available: synthetic-small, synthetic-large"
            ))
        })?),
        None => None,
    };
    if preset.is_none() && args.covariates.is_none() && args.adjacency.is_none() {
        return Err(CliError::usage(
            "nothing to generate from: pass --preset, --covariates, or --adjacency",
        ));
    }
    let covariates = args.covariates.or(preset.as_ref().map(|p| p.covariates));
    let expected_degree = args
        .expected_degree
        .or(preset.as_ref().map(|p| p.expected_degree))
        .unwrap_or(3.0);
    let samples = args
        .samples
        .or(preset.as_ref().map(|p| p.samples))
        .unwrap_or(10_000);
    let scale_c = args
        .scale_c
        .or(preset.as_ref().map(|p| p.scale_c))
        .unwrap_or(90.0);
    let censor_fraction = args
        .censor_fraction
        .or(preset.as_ref().map(|p| p.censor_fraction))
        .unwrap_or(0.5);
    let noise_mean = args.target_noise_mean.unwrap_or(30.0);
    let noise_scale = args.target_noise_scale.unwrap_or(70.0);
    ensure_out_dir(&args.out_dir)?;

    let dag = match &args.adjacency {
        Some(path) => {
            manifest.input(path)?;
            let dag = read_adjacency_csv(path_str(path)?).map_err(CliError::data)?;
            if let Some(l) = covariates {
                if l + 1 != dag.num_nodes() {
                    return Err(CliError::usage(format!(
                        "--covariates {l} contradicts the adjacency file's {} nodes",
                        dag.num_nodes()
                    )));
                }
            }
            dag
        }
        None => {
            let l = covariates.expect("checked above");
            sample_erdos_renyi_dag(&DagSampleConfig {
                num_nodes: l + 1,
                expected_degree,
                weight_range: (0.5, 2.0),
                seed: args.seed,
            })
            .map_err(CliError::data)?
        }
    };

    let gen_config = GenConfig {
        num_samples: samples,
        scale_c,
        target_noise_mean: noise_mean,
        target_noise_scale: noise_scale,
        noise_scale_is_stddev: args.noise_scale_is_stddev,
        seed: args.seed,
    };
    let (dataset, warnings) = generate_dataset(&dag, &gen_config).map_err(CliError::data)?;
    for warning in &warnings {
        match warning {
            GenWarning::TargetNotSink { children } => eprintln!(
                "warning: the target node has children {children:?}; those covariates leak the label"
            ),
        }
    }

    let censor_seed = args.seed.wrapping_add(1);
    let dataset = match args.censor_mode {
        CensorModeArg::Exact => {
            apply_censoring(&dataset, censor_fraction, censor_seed).map_err(CliError::data)?
        }
        CensorModeArg::UniformGlobal => {
            apply_censoring_uniform_global(&dataset, censor_seed).map_err(CliError::data)?
        }
    };

    let data_path = args.out_dir.join("dataset.csv");
    write_dataset_csv(&dataset, path_str(&data_path)?).map_err(CliError::data)?;
    let adjacency_path = args.out_dir.join("adjacency.csv");
    write_adjacency_csv(&dag, path_str(&adjacency_path)?).map_err(CliError::data)?;
    manifest.output(&data_path);
    manifest.output(&adjacency_path);
    manifest.seed("generate", args.seed);
    manifest.seed("censor", censor_seed);
    manifest.config(json!({
        "preset": args.preset,
        "covariates": dag.num_nodes() - 1,
        "expected_degree": expected_degree,
        "samples": samples,
        "scale_c": scale_c,
        "censor_fraction": censor_fraction,
        "censor_mode": match args.censor_mode {
            CensorModeArg::Exact => "exact",
            CensorModeArg::UniformGlobal => "uniform-global",
        },
        "target_noise_mean": noise_mean,
        "target_noise_scale": noise_scale,
        "noise_scale_is_stddev": args.noise_scale_is_stddev,
    }));
    manifest.write(&args.out_dir)?;

    println!(
        "wrote {} instances, {} covariates, {:.2}% censored, max time {:.3}",
        dataset.len(),
        dataset.num_covariates(),
        dataset.censored_fraction() * 100.0,
        dataset.max_raw_time()
    );
    println!("dataset   {}", data_path.display());
    println!("adjacency {}", adjacency_path.display());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("train");
    let (mut model_config, mut train_config) = match &args.preset {
        Some(name) => train_preset(name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown training preset {name:?}; available: {}",
                preset_names()
            ))
        })?,
        None => (ModelConfig::default(), TrainConfig::default()),
    };
    let mut time_bins = None;
    if let Some(path) = &args.config {
        manifest.input(path)?;
        time_bins = load_file_config(path)?.apply(&mut model_config, &mut train_config)?;
    }
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        train_config.seed = seed;
    }
    if args.time_bins.is_some() {
        time_bins = args.time_bins;
    }
    ensure_out_dir(&args.out_dir)?;

    // one user seed fans out: initialization, shuffling and latent noise,
    // and the split each get their own stream
    let base_seed = train_config.seed;
    let init_seed = base_seed;
    train_config.seed = base_seed.wrapping_add(1);
    let split_seed = base_seed.wrapping_add(2);
    let (train_frac, val_frac) = (0.8, 0.2);

    let dataset_digest = manifest.input(&args.data)?;
    manifest.input(&args.adjacency)?;
    let dataset = read_dataset_csv(path_str(&args.data)?).map_err(CliError::data)?;
    let dag = read_adjacency_csv(path_str(&args.adjacency)?).map_err(CliError::data)?;
    let dag = if args.zero_dag { dag.zeroed() } else { dag };

    let num_bins = time_bins.unwrap_or_else(|| default_num_bins(&dataset));
    let binned = discretize(&dataset, num_bins).map_err(CliError::data)?;
    let (train_set, val_set, _test_set) =
        split(&binned, train_frac, val_frac, split_seed).map_err(CliError::data)?;

    let mut model = DagSurvModel::new(dag, num_bins, model_config.clone(), init_seed)
        .map_err(CliError::data)?;
    println!(
        "training on {} instances ({} held out for validation), {} covariates, {} bins",
        train_set.len(),
        val_set.len(),
        train_set.num_covariates(),
        num_bins + 1
    );
    let mut best = f64::NEG_INFINITY;
    let epochs = train_config.epochs;
    let history = model
        .train_with_progress(&train_set, &val_set, &train_config, |record| {
            if record.val_ctd > best {
                best = record.val_ctd;
            }
            eprintln!(
                "epoch {:>4}/{epochs} loss {:.4} val ctd {:.4} (best {best:.4})",
                record.epoch + 1,
                record.train_loss,
                record.val_ctd
            );
        })
        .map_err(CliError::data)?;

    let mut meta: Vec<(String, String)> = vec![
        ("dataset_sha256".into(), dataset_digest),
        ("time_bins".into(), num_bins.to_string()),
        ("split_seed".into(), split_seed.to_string()),
        ("train_frac".into(), train_frac.to_string()),
        ("val_frac".into(), val_frac.to_string()),
        ("base_seed".into(), base_seed.to_string()),
        ("zero_dag".into(), args.zero_dag.to_string()),
    ];
    if let Some(preset) = &args.preset {
        meta.push(("preset".into(), preset.clone()));
    }
    let checkpoint_path = args.out_dir.join("checkpoint.txt");
    model
        .save_checkpoint(path_str(&checkpoint_path)?, &meta)
        .map_err(CliError::data)?;
    let history_path = args.out_dir.join("history.csv");
    write_file(&history_path, &history.to_csv())?;
    manifest.output(&checkpoint_path);
    manifest.output(&history_path);
    manifest.seed("base", base_seed);
    manifest.seed("init", init_seed);
    manifest.seed("shuffle", train_config.seed);
    manifest.seed("split", split_seed);
    manifest.config(json!({
        "preset": args.preset,
        "lr": train_config.learning_rate,
        "batch_size": train_config.batch_size,
        "epochs": train_config.epochs,
        "patience": train_config.patience,
        "kl_weight": train_config.kl_weight,
        "encoder_layers": model_config.encoder_layers,
        "encoder_hidden": model_config.encoder_hidden,
        "decoder_layers": model_config.decoder_layers,
        "decoder_hidden": model_config.decoder_hidden,
        "activation": model_config.activation.name(),
        "time_bins": num_bins,
        "train_frac": train_frac,
        "val_frac": val_frac,
        "zero_dag": args.zero_dag,
    }));
    manifest.write(&args.out_dir)?;

    println!(
        "best epoch {} with validation ctd {:.4}{}",
        history.best_epoch + 1,
        history.best_val_ctd,
        if history.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    println!("checkpoint {}", checkpoint_path.display());
    println!("history    {}", history_path.display());
    Ok(())
}

fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn parsed_meta<T: std::str::FromStr>(
    meta: &[(String, String)],
    key: &str,
) -> Result<T, CliError> {
    let raw = meta_value(meta, key).ok_or_else(|| {
        CliError::data(format!(
            "checkpoint lacks {key} metadata; was it written by the train command?"
        ))
    })?;
    raw.parse().map_err(|_| {
        CliError::data(format!("checkpoint metadata {key} is unreadable: {raw:?}"))
    })
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("evaluate");
    ensure_out_dir(&args.out_dir)?;
    manifest.input(&args.checkpoint)?;
    let data_digest = manifest.input(&args.data)?;
    let (model, meta) =
        DagSurvModel::load_checkpoint(path_str(&args.checkpoint)?).map_err(CliError::data)?;
    let dataset = read_dataset_csv(path_str(&args.data)?).map_err(CliError::data)?;
    let num_bins: usize = parsed_meta(&meta, "time_bins")?;
    let binned = discretize(&dataset, num_bins).map_err(CliError::data)?;

    let part = match args.split {
        SplitArg::All => binned,
        picked => {
            let stored: String = parsed_meta(&meta, "dataset_sha256")?;
            if stored != data_digest {
                return Err(CliError::data(
                    "dataset does not match the checkpoint's training data (digest mismatch); \
                     pass --split all to score a different dataset",
                ));
            }
            let split_seed: u64 = parsed_meta(&meta, "split_seed")?;
            let train_frac: f64 = parsed_meta(&meta, "train_frac")?;
            let val_frac: f64 = parsed_meta(&meta, "val_frac")?;
            let (train_part, val_part, test_part) =
                split(&binned, train_frac, val_frac, split_seed).map_err(CliError::data)?;
            match picked {
                SplitArg::Train => train_part,
                SplitArg::Val => val_part,
                SplitArg::Test => test_part,
                SplitArg::All => unreachable!("handled above"),
            }
        }
    };

    let prediction = model
        .predict(part.covariates(), args.latent_samples, args.seed)
        .map_err(CliError::data)?;
    let bootstrap_seed = args.seed.wrapping_add(1);
    let report = prediction
        .bootstrap_concordance(part.time_bins(), part.events(), args.b, bootstrap_seed)
        .map_err(CliError::data)?;

    let report_path = args.out_dir.join("ctd-report.csv");
    write_file(&report_path, &report.to_box_plot_csv())?;
    manifest.output(&report_path);
    manifest.seed("predict", args.seed);
    manifest.seed("bootstrap", bootstrap_seed);
    manifest.config(json!({
        "split": match args.split {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        },
        "b": args.b,
        "latent_samples": args.latent_samples,
        "time_bins": num_bins,
    }));
    manifest.write(&args.out_dir)?;

    println!("scored {} instances over {} bins", part.len(), num_bins + 1);
    println!("ctd point estimate {}", report.point_estimate);
    println!(
        "bootstrap median {} over b = {} resamples",
        report.bootstrap_median, report.b
    );
    println!("notch [{}, {}]", report.notch_low, report.notch_high);
    println!("report {}", report_path.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("predict");
    ensure_out_dir(&args.out_dir)?;
    manifest.input(&args.checkpoint)?;
    manifest.input(&args.data)?;
    let (model, _meta) =
        DagSurvModel::load_checkpoint(path_str(&args.checkpoint)?).map_err(CliError::data)?;
    let dataset = read_dataset_csv(path_str(&args.data)?).map_err(CliError::data)?;

    let rows: Vec<usize> = match (&args.rows, args.limit) {
        (Some(rows), _) => rows.clone(),
        (None, Some(limit)) => (0..dataset.len().min(limit)).collect(),
        (None, None) => (0..dataset.len()).collect(),
    };
    if let Some(&bad) = rows.iter().find(|&&r| r >= dataset.len()) {
        return Err(CliError::data(format!(
            "row {bad} is out of range for {} instances",
            dataset.len()
        )));
    }
    if rows.is_empty() {
        return Err(CliError::usage("no rows selected"));
    }
    let subset = dataset.subset(&rows).map_err(CliError::data)?;
    let prediction = model
        .predict(subset.covariates(), args.latent_samples, args.seed)
        .map_err(CliError::data)?;

    let pmf = prediction.pmf();
    let cdf = prediction.cdf();
    let survival = prediction.survival();
    let mut body = String::from("row,bin,pmf,cdf,survival\n");
    for (k, &row) in rows.iter().enumerate() {
        for bin in 0..prediction.num_bins() {
            body.push_str(&format!(
                "{row},{bin},{},{},{}\n",
                pmf[[k, bin]],
                cdf[[k, bin]],
                survival[[k, bin]]
            ));
        }
    }
    let predictions_path = args.out_dir.join("predictions.csv");
    write_file(&predictions_path, &body)?;
    manifest.output(&predictions_path);
    manifest.seed("predict", args.seed);
    manifest.config(json!({
        "rows": rows.len(),
        "latent_samples": args.latent_samples,
    }));
    manifest.write(&args.out_dir)?;

    println!(
        "wrote survival curves for {} instances over {} bins",
        rows.len(),
        prediction.num_bins()
    );
    println!("predictions {}", predictions_path.display());
    Ok(())
}

const INDEPENDENT_BITS_SPEC: &str = "discrete-net v1\nnodes 2\n\
    node 0 card 2 parents none\nnode 1 card 2 parents none\n\
    cpt 0\n0.5 0.5\ncpt 1\n0.5 0.5\nencoding independent\nend\n";

pub fn propcheck(args: PropcheckArgs) -> Result<(), CliError> {
    if args.net.is_none() && args.random.is_none() {
        return Err(CliError::usage(
            "nothing to check: pass --net FILE or --random TRIALS",
        ));
    }
    let mut manifest = ManifestBuilder::new("propcheck");
    ensure_out_dir(&args.out_dir)?;

    let mut rows: Vec<(String, EntropyGap)> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut check = |rows: &mut Vec<(String, EntropyGap)>,
                     failures: &mut Vec<String>,
                     name: String,
                     net: &DiscreteBayesNet,
                     requirement: Requirement| {
        let gap = entropy_gap(net);
        if gap.gap < -1e-9 {
            failures.push(format!("{name}: gap {} breaks subadditivity", gap.gap));
        }
        match requirement {
            Requirement::ExactlyBits(want) => {
                if gap.gap != want {
                    failures.push(format!("{name}: gap {} differs from {want}", gap.gap));
                }
            }
            Requirement::StrictlyPositive => {
                if gap.gap <= 1e-6 {
                    failures.push(format!(
                        "{name}: gap {} though dependence is present by construction",
                        gap.gap
                    ));
                }
            }
            Requirement::Zero => {
                if gap.gap.abs() > 1e-9 {
                    failures.push(format!(
                        "{name}: gap {} though every edge is vacuous",
                        gap.gap
                    ));
                }
            }
            Requirement::SubadditivityOnly => {}
        }
        rows.push((name, gap));
    };

    if let Some(path) = &args.net {
        manifest.input(path)?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
        let net = DiscreteBayesNet::from_net_spec(&text).map_err(CliError::data)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "net".into());
        let varying = net.has_varying_table();
        check(
            &mut rows,
            &mut failures,
            name,
            &net,
            if varying {
                // rows may differ only on unreachable parent configurations,
                // so strict positivity cannot be demanded of arbitrary files
                Requirement::SubadditivityOnly
            } else {
                Requirement::Zero
            },
        );
        println!(
            "net has {} nodes, {} edges, tables {} with their parents",
            net.dag().num_nodes(),
            net.dag().num_edges(),
            if varying { "vary" } else { "do not vary" }
        );
    } else {
        let trials = args.random.unwrap_or(0);
        let independent =
            DiscreteBayesNet::from_net_spec(INDEPENDENT_BITS_SPEC).map_err(CliError::data)?;
        check(
            &mut rows,
            &mut failures,
            "independent-bits".into(),
            &independent,
            Requirement::ExactlyBits(0.0),
        );
        let chain = DiscreteBayesNet::copy_chain(2).map_err(CliError::data)?;
        check(
            &mut rows,
            &mut failures,
            "copy-chain".into(),
            &chain,
            Requirement::ExactlyBits(1.0),
        );
        for i in 0..trials {
            let net = dagsurv_core::sample_net(&dagsurv_core::NetSampleConfig {
                seed: args.seed.wrapping_add(i as u64),
                ..dagsurv_core::NetSampleConfig::default()
            })
            .map_err(CliError::data)?;
            check(
                &mut rows,
                &mut failures,
                format!("dependent-{i:03}"),
                &net,
                Requirement::StrictlyPositive,
            );
        }
        for i in 0..trials {
            let net = dagsurv_core::sample_net(&dagsurv_core::NetSampleConfig {
                vacuous_edges: true,
                seed: args.seed.wrapping_add(i as u64),
                ..dagsurv_core::NetSampleConfig::default()
            })
            .map_err(CliError::data)?;
            check(
                &mut rows,
                &mut failures,
                format!("vacuous-{i:03}"),
                &net,
                Requirement::Zero,
            );
        }
    }

    println!(
        "{:<18} {:>14} {:>14} {:>14}",
        "case", "joint entropy", "marginal sum", "gap"
    );
    let mut csv = String::from("case,joint_entropy,independent_sum,gap\n");
    for (name, gap) in &rows {
        println!(
            "{name:<18} {:>14.6} {:>14.6} {:>14.6}",
            gap.joint_entropy, gap.independent_sum, gap.gap
        );
        csv.push_str(&format!(
            "{name},{},{},{}\n",
            gap.joint_entropy, gap.independent_sum, gap.gap
        ));
    }
    let table_path = args.out_dir.join("gap-table.csv");
    write_file(&table_path, &csv)?;
    manifest.output(&table_path);
    manifest.seed("base", args.seed);
    manifest.config(json!({
        "net": args.net.as_ref().map(|p| p.display().to_string()),
        "random": args.random,
    }));
    manifest.write(&args.out_dir)?;

    if failures.is_empty() {
        println!("all {} gap checks passed", rows.len());
        println!("table {}", table_path.display());
        Ok(())
    } else {
        for failure in &failures {
            eprintln!("failed: {failure}");
        }
        Err(CliError::data(format!(
            "{} of {} gap checks failed",
            failures.len(),
            rows.len()
        )))
    }
}

enum Requirement {
    ExactlyBits(f64),
    StrictlyPositive,
    Zero,
    SubadditivityOnly,
}

// Suppress a false dead-code association: PathBuf is used via the Args
// structs in main.
#[allow(unused_imports)]
use PathBuf as _PathBufUsed;
