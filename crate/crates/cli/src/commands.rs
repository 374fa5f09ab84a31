use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use jestcap::corpus::{
    captions_per_image_stats, emotion_classifier, emotion_distribution, grammar_patterns,
    parse_tag_subset, CaptionsPerImage, Emotion, EmotionReport, PosLexicon, HISTOGRAM_LABELS,
};
use jestcap::curate::{apply_filters, FilterSpec};
use jestcap::floatrows::KeyedRows;
use jestcap::manifest::write_atomic;
use jestcap::metrics::classifier::{train_humour_classifier, ClassifierConfig};
use jestcap::metrics::embedding::{ImageTable, SplitProvider};
use jestcap::metrics::{
    diversity_score, external_score, humour_score, EmbeddingProvider, HashEmbedder,
    HumourClassifierParams, NegativeSamplingSpec, ScoreItem, ScoreReport, ScorerRegistry,
    TableEmbedder,
};
use jestcap::sweep::{kernel_sweep, SweepConfig, SweepRow};
use jestcap::synth::{synthetic_corpus, SynthSpec};
use jestcap::toycap::{
    generate, train as train_model, ContextMap, DecodeConfig, ToyCaptionerParams, TrainConfig,
};
use jestcap::{load_manifest, save_manifest, CorpusManifest, KernelSpec, LossConfig};

use crate::svg::histogram_svg;
use crate::{
    ClassifierArgs, CurateArgs, EvalArgs, Format, StatsArgs, SweepArgs, SynthArgs, TrainArgs,
};

pub const SCORERS_ENV: &str = "JESTCAP_SCORERS";

/// Bad flags or inputs detected before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and validation failures (including missing inputs), 1 for
/// everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<jestcap::Error>() {
            return match e {
                jestcap::Error::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    2
                }
                e if e.is_validation() => 2,
                _ => 1,
            };
        }
    }
    1
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("input file not found: {}", path.display())));
    }
    Ok(())
}

fn require_table(path: &Path) -> Result<()> {
    require_file(path)?;
    require_file(&jestcap::manifest::sidecar(path, "ids"))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}

fn out_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => out_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn scorer_registry() -> Result<ScorerRegistry> {
    match std::env::var_os(SCORERS_ENV) {
        Some(p) if !p.is_empty() => {
            let path = PathBuf::from(p);
            require_file(&path)
                .with_context(|| format!("{SCORERS_ENV} points at a missing file"))?;
            Ok(ScorerRegistry::load(&path)?)
        }
        _ => Ok(ScorerRegistry::with_defaults()),
    }
}

fn load_contexts(path: &Path) -> Result<ContextMap> {
    let table = KeyedRows::read(path)?;
    Ok(table
        .keys()
        .iter()
        .map(|k| (k.clone(), table.get_f64(k).expect("key from table")))
        .collect())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

// ---------------------------------------------------------------------------
// stats

#[derive(Serialize)]
struct PatternSummary {
    subset: String,
    distinct: usize,
    frequencies: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct StatsReport {
    captions_per_image: CaptionsPerImage,
    histogram_labels: [&'static str; 4],
    grammar_patterns: Vec<PatternSummary>,
    emotions: BTreeMap<&'static str, f64>,
    emotion_counts: BTreeMap<&'static str, usize>,
    emotional_fraction: f64,
}

fn emotion_maps(r: &EmotionReport) -> (BTreeMap<&'static str, f64>, BTreeMap<&'static str, usize>) {
    let shares = Emotion::ALL
        .iter()
        .map(|&e| (e.as_str(), r.distribution.share(e)))
        .collect();
    let counts = Emotion::ALL
        .iter()
        .map(|&e| (e.as_str(), r.counts[e.index()]))
        .collect();
    (shares, counts)
}

fn stats_text(r: &StatsReport) -> String {
    let c = &r.captions_per_image;
    let mut s = String::new();
    let _ = writeln!(s, "images {}  captions {}", c.images, c.records);
    let _ = writeln!(
        s,
        "captions per image: mean {:.3}  median {:.1}  min {}  max {}",
        c.mean, c.median, c.min, c.max
    );
    for (label, n) in HISTOGRAM_LABELS.iter().zip(c.histogram) {
        let _ = writeln!(s, "  {label:>8} {n}");
    }
    for p in &r.grammar_patterns {
        let _ = writeln!(s, "distinct patterns over {}: {}", p.subset, p.distinct);
    }
    let _ = writeln!(s, "emotional fraction {:.3}", r.emotional_fraction);
    for (name, share) in &r.emotions {
        let _ = writeln!(s, "  {name:>8} {share:.3}");
    }
    s
}

fn stats_csv(r: &StatsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "value"])?;
    let c = &r.captions_per_image;
    for (k, v) in [
        ("images", c.images as f64),
        ("records", c.records as f64),
        ("mean", c.mean),
        ("median", c.median),
        ("min", c.min as f64),
        ("max", c.max as f64),
    ] {
        w.write_record(["captions_per_image", k, &v.to_string()])?;
    }
    for (label, n) in HISTOGRAM_LABELS.iter().zip(c.histogram) {
        w.write_record(["histogram", label, &n.to_string()])?;
    }
    for p in &r.grammar_patterns {
        w.write_record(["distinct_patterns", &p.subset, &p.distinct.to_string()])?;
    }
    for (name, share) in &r.emotions {
        w.write_record(["emotion", name, &share.to_string()])?;
    }
    w.write_record([
        "emotion",
        "emotional_fraction",
        &r.emotional_fraction.to_string(),
    ])?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    require_file(&a.manifest)?;
    if let Some(l) = &a.lexicon {
        require_file(l)?;
    }
    let subsets = a
        .subsets
        .iter()
        .map(|s| parse_tag_subset(s).map(|t| (s.clone(), t)))
        .collect::<jestcap::Result<Vec<_>>>()?;
    let emotion = emotion_classifier(&a.emotion)?;

    let manifest = load_manifest(&a.manifest)?;
    let lexicon = match &a.lexicon {
        Some(p) => PosLexicon::load(p)?,
        None => PosLexicon::demo(),
    };
    let cpi = captions_per_image_stats(&manifest)?;
    let mut patterns = Vec::new();
    for (name, subset) in &subsets {
        let stats = grammar_patterns(&manifest, &lexicon, subset)?;
        patterns.push(PatternSummary {
            subset: name.clone(),
            distinct: stats.distinct(),
            frequencies: stats
                .frequencies
                .iter()
                .map(|(p, n)| (p.to_string(), *n))
                .collect(),
        });
    }
    let emo = emotion_distribution(&manifest, emotion.as_ref())?;
    let (emotions, emotion_counts) = emotion_maps(&emo);
    let report = StatsReport {
        captions_per_image: cpi,
        histogram_labels: HISTOGRAM_LABELS,
        grammar_patterns: patterns,
        emotions,
        emotion_counts,
        emotional_fraction: emo.emotional_fraction,
    };

    out_dir(&a.out)?;
    write_text(&a.out.join("stats.json"), &to_json(&report))?;
    match a.format {
        Format::Text => write_text(&a.out.join("stats.txt"), &stats_text(&report))?,
        Format::Csv => write_text(&a.out.join("stats.csv"), &stats_csv(&report)?)?,
        Format::Svg => write_text(
            &a.out.join("captions_per_image.svg"),
            &histogram_svg(
                "Captions per image",
                &HISTOGRAM_LABELS,
                &report.captions_per_image.histogram,
            ),
        )?,
    }
    print!("{}", stats_text(&report));
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn train(a: &TrainArgs) -> Result<()> {
    require_file(&a.manifest)?;
    require_table(&a.contexts)?;
    let manifest = load_manifest(&a.manifest)?;
    let contexts = load_contexts(&a.contexts)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        loss: LossConfig {
            kernel: a.kernel,
            ..LossConfig::default()
        },
        hidden_dim: a.hidden,
        embed_dim: a.embed,
        ..TrainConfig::default()
    };
    let outcome = train_model(&manifest, &contexts, &config)?;

    out_dir(&a.out)?;
    outcome.params.save(a.out.join("checkpoint.toycap"))?;
    let mut history = String::from("epoch,loss\n");
    let _ = writeln!(history, "0,{}", outcome.initial_loss);
    for (i, l) in outcome.history.iter().enumerate() {
        let _ = writeln!(history, "{},{}", i + 1, l);
    }
    write_text(&a.out.join("loss_history.csv"), &history)?;
    println!(
        "kernel {}  epochs {}  loss {:.6} -> {:.6}",
        a.kernel,
        a.epochs,
        outcome.initial_loss,
        outcome.final_loss()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn report_csv(report: &ScoreReport) -> Result<String> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image_id", "caption", "humour", "benign", "fluency"])?;
    for it in &report.items {
        w.write_record([
            it.image_id.as_str(),
            it.caption.as_str(),
            &opt(it.humour),
            &it.benign.to_string(),
            &it.fluency.to_string(),
        ])?;
    }
    let s = report.summary();
    w.write_record(["mean", "", &opt(s.humour), &opt(s.benign), &opt(s.fluency)])?;
    w.write_record(["diversity", "", &opt(s.diversity), "", ""])?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.manifest)?;
    require_table(&a.contexts)?;
    match (&a.classifier, &a.embeddings) {
        (Some(c), Some(e)) => {
            require_file(c)?;
            require_table(e)?;
        }
        (Some(_), None) => return Err(usage("--classifier needs --embeddings for image vectors")),
        (None, Some(e)) => require_table(e)?,
        (None, None) => {}
    }
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let registry = scorer_registry()?;
    registry.get("benign")?;
    registry.get("fluency")?;

    let params = ToyCaptionerParams::load(&a.checkpoint)?;
    let manifest = load_manifest(&a.manifest)?;
    if params.vocab_size() != manifest.vocabulary.len() {
        return Err(jestcap::Error::Integrity(format!(
            "checkpoint has {} output tokens but the manifest vocabulary has {}",
            params.vocab_size(),
            manifest.vocabulary.len()
        ))
        .into());
    }
    let contexts = load_contexts(&a.contexts)?;
    let texts = HashEmbedder::new(a.text_dim, 0)?;
    let classifier = match (&a.classifier, &a.embeddings) {
        (Some(c), Some(e)) => Some((
            HumourClassifierParams::load(c)?,
            SplitProvider {
                images: ImageTable(KeyedRows::read(e)?),
                texts: texts.clone(),
            },
        )),
        _ => None,
    };

    let mut items = Vec::new();
    let mut embeddings = Vec::new();
    for image_id in manifest.image_ids() {
        let ctx = contexts.get(image_id).ok_or_else(|| {
            jestcap::Error::Config(format!("no context vector for image_id {image_id:?}"))
        })?;
        for s in 0..a.samples {
            let decode = if a.samples == 1 {
                DecodeConfig::greedy(a.max_len)
            } else {
                DecodeConfig::sample(a.max_len, a.temperature, a.seed.wrapping_add(s as u64))
            };
            let caption = manifest
                .vocabulary
                .detokenize(&generate(&params, ctx, &decode)?);
            let humour = match &classifier {
                Some((p, provider)) => Some(humour_score(p, image_id, &caption, provider)?),
                None => None,
            };
            embeddings.push(texts.text_embed(&caption)?);
            items.push(ScoreItem {
                image_id: image_id.to_string(),
                humour,
                benign: external_score(&registry, "benign", image_id, &caption)?,
                fluency: external_score(&registry, "fluency", image_id, &caption)?,
                caption,
            });
        }
    }
    let diversity = if embeddings.len() >= 2 {
        Some(diversity_score(&embeddings)?)
    } else {
        None
    };
    let report = ScoreReport { items, diversity };
    report.validate()?;

    out_parent(&a.out)?;
    write_text(&a.out, &report.to_jsonl())?;
    match a.format {
        Format::Csv => write_text(
            &jestcap::manifest::sidecar(&a.out, "csv"),
            &report_csv(&report)?,
        )?,
        Format::Svg => return Err(usage("eval supports --format text or csv")),
        Format::Text => {}
    }
    print!("{}", report.render_table());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

fn sweep_text(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>10} {:>11}  per-seed diversity",
        "kernel", "diversity", "final loss"
    );
    for r in rows {
        let loss = r.final_loss.iter().sum::<f64>() / r.final_loss.len().max(1) as f64;
        let seeds: Vec<String> = r.per_seed.iter().map(|d| format!("{d:.4}")).collect();
        let _ = writeln!(
            s,
            "{:<14} {:>10.4} {:>11.4}  {}",
            r.kernel,
            r.mean_diversity,
            loss,
            seeds.join(" ")
        );
    }
    s
}

fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kernel",
        "mean_diversity",
        "per_seed_diversity",
        "per_seed_final_loss",
    ])?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
    for r in rows {
        w.write_record([
            r.kernel.as_str(),
            &r.mean_diversity.to_string(),
            &join(&r.per_seed),
            &join(&r.final_loss),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    require_file(&a.manifest)?;
    require_table(&a.contexts)?;
    if a.alpha_sweep.is_empty() || a.seeds.is_empty() {
        return Err(usage("--alpha-sweep and --seeds need at least one value"));
    }
    let mut kernels = a
        .alpha_sweep
        .iter()
        .map(|&x| KernelSpec::sigmoid(x))
        .collect::<jestcap::Result<Vec<_>>>()?;
    if a.baseline {
        kernels.insert(0, KernelSpec::none());
    }
    let defaults = SweepConfig::default();
    let config = SweepConfig {
        kernels,
        seeds: a.seeds.clone(),
        train: TrainConfig {
            learning_rate: a.lr,
            epochs: a.epochs,
            ..defaults.train.clone()
        },
        samples_per_context: a.samples,
        ..defaults
    };
    let manifest = load_manifest(&a.manifest)?;
    let contexts = load_contexts(&a.contexts)?;
    let rows = kernel_sweep(&manifest, &contexts, &config)?;

    out_parent(&a.out)?;
    let body = match a.format {
        Format::Text => sweep_text(&rows),
        Format::Csv => sweep_csv(&rows)?,
        Format::Svg => return Err(usage("sweep supports --format text or csv")),
    };
    write_text(&a.out, &body)?;
    print!("{}", sweep_text(&rows));
    Ok(())
}

// ---------------------------------------------------------------------------
// curate

pub fn curate(a: &CurateArgs) -> Result<()> {
    require_file(&a.manifest)?;
    require_file(&a.filters)?;
    let spec = FilterSpec::load(&a.filters)?;
    let registry = scorer_registry()?;
    let manifest = load_manifest(&a.manifest)?;
    let (curated, report) = apply_filters(&manifest, &spec, &registry)?;
    if !report.check_conservation(manifest.len(), curated.len()) {
        return Err(
            jestcap::Error::Integrity("curation report counts do not add up".into()).into(),
        );
    }

    out_dir(&a.out)?;
    save_manifest(&curated, a.out.join("curated.jsonl"))?;
    write_text(&a.out.join("curation_report.jsonl"), &report.to_jsonl())?;
    for s in &report.stages {
        println!(
            "{:<40} in {:>6}  dropped {:>6}  out {:>6}",
            s.stage, s.input, s.dropped, s.output
        );
    }
    println!("kept {} of {} records", curated.len(), manifest.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// train-classifier

#[derive(Serialize)]
struct ClassifierReport {
    seed: u64,
    train_pairs: usize,
    in_domain_pairs: usize,
    out_domain_pairs: usize,
    out_domain_images: usize,
    in_domain_accuracy: f64,
    out_domain_accuracy: f64,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

fn fit_classifier(
    manifest: &CorpusManifest,
    spec: &NegativeSamplingSpec,
    provider: &dyn EmbeddingProvider,
    a: &ClassifierArgs,
) -> Result<()> {
    let config = ClassifierConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..ClassifierConfig::default()
    };
    let outcome = train_humour_classifier(manifest, spec, provider, &config)?;
    let report = ClassifierReport {
        seed: a.seed,
        train_pairs: outcome.splits.train.len(),
        in_domain_pairs: outcome.splits.in_domain.len(),
        out_domain_pairs: outcome.splits.out_domain.len(),
        out_domain_images: outcome.splits.out_domain_images.len(),
        in_domain_accuracy: outcome.in_domain_accuracy,
        out_domain_accuracy: outcome.out_domain_accuracy,
        initial_loss: outcome.loss_history.first().copied(),
        final_loss: outcome.loss_history.last().copied(),
    };
    out_dir(&a.out)?;
    outcome.params.save(a.out.join("classifier.f32"))?;
    write_text(&a.out.join("classifier_report.json"), &to_json(&report))?;
    println!(
        "in-domain accuracy {:.4}  out-of-domain accuracy {:.4}",
        report.in_domain_accuracy, report.out_domain_accuracy
    );
    Ok(())
}

pub fn train_classifier(a: &ClassifierArgs) -> Result<()> {
    require_file(&a.manifest)?;
    require_table(&a.embeddings)?;
    if let Some(t) = &a.text_embeddings {
        require_table(t)?;
    }
    if let Some(s) = &a.sampling {
        require_file(s)?;
    }
    let spec = match &a.sampling {
        Some(p) => NegativeSamplingSpec::load(p)?.with_seed(a.seed),
        None => NegativeSamplingSpec::swap_only(a.seed),
    };
    for src in [&spec.random_text, &spec.external_captions]
        .into_iter()
        .flatten()
    {
        require_file(&src.path)?;
    }
    let manifest = load_manifest(&a.manifest)?;
    let images = KeyedRows::read(&a.embeddings)?;
    match &a.text_embeddings {
        Some(t) => fit_classifier(
            &manifest,
            &spec,
            &TableEmbedder::new(images, KeyedRows::read(t)?),
            a,
        ),
        None => {
            let provider = SplitProvider {
                images: ImageTable(images),
                texts: HashEmbedder::new(a.text_dim, 0)?,
            };
            fit_classifier(&manifest, &spec, &provider, a)
        }
    }
}

// ---------------------------------------------------------------------------
// synth

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.contexts < 2 || a.templates == 0 {
        return Err(usage("synth needs at least 2 contexts and 1 template"));
    }
    let (manifest, contexts) = synthetic_corpus(&SynthSpec {
        contexts: a.contexts,
        templates_per_context: a.templates,
    })?;
    let mut keys: Vec<&String> = contexts.keys().collect();
    keys.sort();
    let table = KeyedRows::from_map(keys.iter().map(|k| (k.as_str(), contexts[*k].as_slice())))?;
    out_dir(&a.out)?;
    save_manifest(&manifest, a.out.join("manifest.jsonl"))?;
    table.write(a.out.join("contexts.f32"))?;
    println!(
        "{} records over {} images, vocabulary {}",
        manifest.len(),
        contexts.len(),
        manifest.vocabulary.len()
    );
    Ok(())
}
