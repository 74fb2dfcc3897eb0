use std::fmt::Write as _;
use std::path::Path;

use patchspan::adnet::{init_model, load_model, save_model, train, train_occ, ADConfig, ADModel, TrainConfig};
use patchspan::baselines::{half_masks, objectseeker_score, themis_detect, BBox, Mask, StubOracle, ThemisParams, Verdict};
use patchspan::ensemble::ThresholdSet;
use patchspan::explain::{exact_shapley, kernel_shap, SHAP_CSV_HEADER};
use patchspan::featurize::{curves, curves_csv, ChannelMask};
use patchspan::fmap_io::{load_feature_map, Label, SampleRecord};
use patchspan::metrics::{
    bench_pipeline, best_threshold, detection_metrics, roc_curve, Criterion, EffectFilter, ScoredSample,
};
use patchspan::synthgen::{gen_corpus, SynthConfig};
use patchspan::{Error, Result};
use serde::Deserialize;

use crate::args::*;
use crate::data::{cluster_params, emit, featurize_paths, featurize_records, records};

fn thresholds_for(model: &ADModel) -> Result<ThresholdSet> {
    ThresholdSet::equidistant(model.config.ensemble_size)
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let config = SynthConfig {
        rows: args.rows,
        cols: args.cols,
        n_clean: args.n_clean,
        n_attacked: args.n_attacked,
        patch_counts: args.patch_counts.clone(),
        blob_side_fraction: args.blob_side_fraction,
        blob_gain: args.blob_gain,
        smoothness: args.smoothness,
        seed: args.seed,
    };
    let manifest = gen_corpus(&config, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

pub fn featurize(args: &FeaturizeArgs) -> Result<()> {
    let thresholds = ThresholdSet::equidistant(args.ensemble_size)?;
    let map = load_feature_map(&args.map)?;
    let raw = curves(&map, &thresholds, &cluster_params(&args.cluster)?);
    emit(args.out.as_deref(), &curves_csv(&raw, &thresholds))
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mask = ChannelMask::parse(&args.channels)?;
    let thresholds = ThresholdSet::equidistant(args.ensemble_size)?;
    let params = cluster_params(&args.cluster)?;
    let config = TrainConfig {
        lr: args.lr,
        patience_epochs: args.patience,
        max_epochs: args.max_epochs,
        val_fraction: args.val_fraction,
        occ_mode: args.occ,
        seed: args.seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let model = init_model(&ADConfig::new(mask, args.ensemble_size, args.seed))?;

    let mut recs = records(&args.manifest, &["train", "val"])?;
    if args.occ {
        recs.retain(|r| r.label == Label::Clean);
        if recs.is_empty() {
            return Err(Error::Config("one-class training needs clean samples".into()));
        }
    }
    let inputs = featurize_records(&recs, &thresholds, &params, mask)?;
    let (model, history) = if args.occ {
        train_occ(model, &inputs, &config)?
    } else {
        let dataset: Vec<_> = inputs.into_iter().zip(recs.iter().map(|r| r.label)).collect();
        train(model, &dataset, &config)?
    };
    save_model(&model, &args.out)?;
    if let Some(path) = &args.history {
        emit(Some(path), &history.to_csv())?;
    }
    println!(
        "best_epoch={} best_val_loss={} epochs={} train_size={} val_size={}",
        history.best_epoch,
        history.best_val_loss,
        history.epochs.len(),
        history.train_size,
        history.val_size
    );
    Ok(())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let inputs = featurize_paths(
        &args.maps,
        &thresholds_for(&model)?,
        &cluster_params(&args.cluster)?,
        model.config.channel_mask,
    )?;
    let mut out = String::new();
    for (path, input) in args.maps.iter().zip(&inputs) {
        writeln!(out, "{},{}", path.display(), model.score(input)?).unwrap();
    }
    emit(None, &out)
}

fn scored_split(model_path: &Path, manifest: &Path, split: &str, cluster: &ClusterArgs) -> Result<Vec<ScoredSample>> {
    let model = load_model(model_path)?;
    let recs: Vec<SampleRecord> = records(manifest, &[split])?;
    let inputs = featurize_records(&recs, &thresholds_for(&model)?, &cluster_params(cluster)?, model.config.channel_mask)?;
    recs.iter()
        .zip(&inputs)
        .map(|(r, x)| {
            Ok(ScoredSample {
                score: model.score(x)?,
                label: r.label,
                effective: r.effective,
                patch_count: r.patch_count,
            })
        })
        .collect()
}

pub const EVAL_CSV_HEADER: &str = "split,filter,threshold_source,threshold,accuracy,accuracy_effective,accuracy_noneffective,detection_rate,fpr,auc,n_clean,n_attacked";

pub fn eval(args: &EvalArgs) -> Result<()> {
    let filter = EffectFilter::parse(&args.filter)?;
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Argument(format!("threshold {t} must lie in [0, 1]")));
        }
    }
    let samples = scored_split(&args.model, &args.manifest, &args.split, &args.cluster)?;
    let roc = roc_curve(&samples)?;
    let (source, threshold) = match args.threshold {
        Some(t) => ("fixed", t),
        None => ("best", best_threshold(&samples, Criterion::MaxAccuracy(filter))?.threshold),
    };
    let accuracy = |f: EffectFilter| {
        let m = detection_metrics(&samples, threshold, f);
        if m.no_attacked_after_filter {
            String::new()
        } else {
            m.accuracy.to_string()
        }
    };
    let main = detection_metrics(&samples, threshold, filter);
    let mut out = format!("{EVAL_CSV_HEADER}\n");
    writeln!(
        out,
        "{},{},{source},{threshold},{},{},{},{},{},{},{},{}",
        args.split,
        filter.name(),
        main.accuracy,
        accuracy(EffectFilter::EffectiveOnly),
        accuracy(EffectFilter::NonEffectiveOnly),
        main.detection_rate,
        main.fpr,
        roc.auc,
        main.n_clean,
        samples.len() - main.n_clean,
    )
    .unwrap();
    if let Some(path) = &args.roc {
        emit(Some(path), &roc.to_csv())?;
    }
    emit(args.out.as_deref(), &out)
}

pub fn roc(args: &RocArgs) -> Result<()> {
    let samples = scored_split(&args.model, &args.manifest, &args.split, &args.cluster)?;
    emit(args.out.as_deref(), &roc_curve(&samples)?.to_csv())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let model = match (&args.model, args.ensemble_size) {
        (Some(path), _) => load_model(path)?,
        (None, b) => init_model(&ADConfig::new(ChannelMask::ALL, b.unwrap_or(20), args.seed))?,
    };
    let recs = records(&args.manifest, &[&args.split])?;
    let maps = recs
        .iter()
        .map(|r| Ok((load_feature_map(&r.map_path)?, r.patch_count)))
        .collect::<Result<Vec<_>>>()?;
    let report = bench_pipeline(&maps, &thresholds_for(&model)?, &cluster_params(&args.cluster)?, &model)?;
    emit(args.out.as_deref(), &report.to_csv())
}

pub fn shap(args: &ShapArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let recs = records(&args.manifest, &[&args.split])?;
    let inputs = featurize_records(&recs, &thresholds_for(&model)?, &cluster_params(&args.cluster)?, model.config.channel_mask)?;
    let mut out = format!("{SHAP_CSV_HEADER}\n");
    for (rec, input) in recs.iter().zip(&inputs) {
        let attribution = if args.exact {
            exact_shapley(&model, input, None)?
        } else {
            kernel_shap(&model, input, None, args.samples, args.seed)?
        };
        writeln!(out, "{}", attribution.csv_row(&rec.map_path.display().to_string())).unwrap();
    }
    emit(args.out.as_deref(), &out)
}

pub fn themis(args: &ThemisArgs) -> Result<()> {
    let params = ThemisParams::new(args.beta, args.theta, args.window)?;
    let map = load_feature_map(&args.map)?;
    let oracle = StubOracle::load(&args.oracle)?;
    let outcome = themis_detect(&args.input, &map, &params, &oracle)?;
    let (verdict, window) = match outcome.verdict {
        Verdict::Clean => ("clean", String::from(",,")),
        Verdict::Attack { window } => ("attack", format!("{},{},{}", window.row, window.col, window.size)),
    };
    println!("input,verdict,row,col,size,queries,candidates");
    println!("{},{verdict},{window},{},{}", args.input, outcome.queries, outcome.candidates);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    input: String,
    original: Vec<[f64; 4]>,
    masked: Vec<MaskedRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskedRecord {
    mask: String,
    boxes: Vec<[f64; 4]>,
}

fn boxes(raw: &[[f64; 4]]) -> Result<Vec<BBox>> {
    raw.iter().map(|b| BBox::new(b[0], b[1], b[2], b[3])).collect()
}

pub fn objseeker(args: &ObjSeekerArgs) -> Result<()> {
    let path = &args.detections;
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
    let expected = args.width.zip(args.height).map(|(w, h)| half_masks(w, h, args.k_x, args.k_y));
    let mut out = String::from("input,score,no_original_boxes,empty_masked_sets\n");
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { path: path.clone(), line: i + 1, message };
        let rec: DetectionRecord = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        let masked = rec
            .masked
            .iter()
            .map(|m| Ok((m.mask.parse::<Mask>()?, boxes(&m.boxes)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse(e.to_string()))?;
        if let Some(expected) = &expected {
            let got: Vec<Mask> = masked.iter().map(|m| m.0).collect();
            if &got != expected {
                return Err(parse("masked sets do not follow the generated half-masks".into()));
            }
        }
        let original = boxes(&rec.original).map_err(|e| parse(e.to_string()))?;
        let s = objectseeker_score(&original, &masked, args.k_x, args.k_y).map_err(|e| parse(e.to_string()))?;
        writeln!(out, "{},{},{},{}", rec.input, s.score, s.no_original_boxes, s.empty_masked_sets).unwrap();
    }
    emit(None, &out)
}
