//! File-based pipeline stages behind the `ibsc` binary.
//!
//! Every stage reads its inputs from disk (the configured data files and the
//! artifacts earlier stages left in the output directory), writes its own
//! artifacts there and returns a short summary for standard output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;

use crate::calibration::CalibratedModel;
use crate::config::PipelineConfig;
use crate::construction::{ConstructedSample, Provenance, SourcePlan};
use crate::data::{AttributeTable, ClassId, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{compare_strategies, EvalReport, Strategy, StrategyInputs};
use crate::io::{self, MatrixFormat};
use crate::pipeline;
use crate::relation::{build_relation_matrix, RelationMatrix};
use crate::synth;

pub const FEATURES_FILE: &str = "features.csv";
pub const ATTRIBUTES_CONTINUOUS_FILE: &str = "attributes_continuous.csv";
pub const ATTRIBUTES_BINARY_FILE: &str = "attributes_binary.csv";
pub const SPLIT_FILE: &str = "split.txt";
pub const GROUND_TRUTH_FILE: &str = "ground_truth_R.bin";
pub const RELATION_FILE: &str = "relation.bin";
pub const DEGENERATE_ROWS_FILE: &str = "degenerate_rows.txt";
pub const MODELS_FILE: &str = "attribute_models.json";
pub const PLAN_FILE: &str = "source_plan.csv";
pub const CONSTRUCTED_FILE: &str = "constructed.csv";
pub const CONSTRUCTED_META_FILE: &str = "constructed_meta.csv";
pub const PROVENANCE_FILE: &str = "constructed_provenance.csv";
pub const SKIPPED_FILE: &str = "skipped_attributes.csv";
pub const SCREENED_FILE: &str = "screened.csv";
pub const SCREEN_SCORES_FILE: &str = "screen_scores.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const COMPARE_REPORT_FILE: &str = "compare_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Relation,
    Construct,
    Screen,
    Eval,
    Compare,
    Pipeline,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "synth" => Stage::Synth,
            "relation" => Stage::Relation,
            "construct" => Stage::Construct,
            "screen" => Stage::Screen,
            "eval" => Stage::Eval,
            "compare" => Stage::Compare,
            "pipeline" => Stage::Pipeline,
            other => return Err(Error::Config(format!("unknown stage '{other}'"))),
        })
    }
}

/// Runs one stage (or all of them for [`Stage::Pipeline`]).
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<String> {
    cfg.params.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    match stage {
        Stage::Synth => synth_stage(cfg),
        Stage::Relation => relation_stage(cfg),
        Stage::Construct => construct_stage(cfg),
        Stage::Screen => screen_stage(cfg),
        Stage::Eval => eval_stage(cfg),
        Stage::Compare => compare_stage(cfg),
        Stage::Pipeline => {
            let mut summary = String::new();
            if cfg.synth.is_some() {
                summary.push_str(&synth_stage(cfg)?);
            }
            for stage in [relation_stage, construct_stage, screen_stage, eval_stage, compare_stage] {
                summary.push_str(&stage(cfg)?);
            }
            Ok(summary)
        }
    }
}

fn artifact(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

struct DataPaths {
    features: PathBuf,
    format: MatrixFormat,
    continuous: PathBuf,
    binary: PathBuf,
    split: PathBuf,
}

/// Configured data paths, falling back to the synthetic files in the output
/// directory when a `[synth]` section is present.
fn data_paths(cfg: &PipelineConfig) -> Result<DataPaths> {
    let pick = |configured: &Option<PathBuf>, file: &str, key: &str| match configured {
        Some(p) => Ok(p.clone()),
        None if cfg.synth.is_some() => Ok(artifact(cfg, file)),
        None => Err(Error::Config(format!("no `{key}` path configured in [data]"))),
    };
    Ok(DataPaths {
        format: if cfg.features.is_some() { cfg.format } else { MatrixFormat::Csv },
        features: pick(&cfg.features, FEATURES_FILE, "features")?,
        continuous: pick(&cfg.attributes_continuous, ATTRIBUTES_CONTINUOUS_FILE, "attributes_continuous")?,
        binary: pick(&cfg.attributes_binary, ATTRIBUTES_BINARY_FILE, "attributes_binary")?,
        split: pick(&cfg.split, SPLIT_FILE, "split")?,
    })
}

fn load_inputs(cfg: &PipelineConfig) -> Result<(Dataset, AttributeTable, SplitSpec)> {
    let paths = data_paths(cfg)?;
    for p in [&paths.features, &paths.continuous, &paths.binary, &paths.split] {
        std::fs::metadata(p).map_err(|e| Error::io(p, e))?;
    }
    let attrs = io::load_attribute_table(&paths.continuous, &paths.binary)?;
    let dataset = io::load_dataset(&paths.features, paths.format, Some(attrs.class_names()))?;
    let split = io::load_split(&paths.split)?;
    split.validate(&attrs, &dataset)?;
    Ok((dataset, attrs, split))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    text.push('\n');
    io::write_text(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&io::read_text(path)?).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

fn synth_stage(cfg: &PipelineConfig) -> Result<String> {
    let sc = cfg
        .synth_config()
        .ok_or_else(|| Error::Config("the synth stage needs a [synth] section".into()))?;
    let data = synth::generate(&sc)?;
    io::write_dataset(&artifact(cfg, FEATURES_FILE), MatrixFormat::Csv, &data.dataset)?;
    io::write_attribute_table(
        &artifact(cfg, ATTRIBUTES_CONTINUOUS_FILE),
        &artifact(cfg, ATTRIBUTES_BINARY_FILE),
        &data.attrs,
    )?;
    io::write_split(&artifact(cfg, SPLIT_FILE), &data.split)?;
    io::write_matrix_binary(&artifact(cfg, GROUND_TRUTH_FILE), &data.truth.to_real())?;
    Ok(format!(
        "synth: {} samples, {} features, {} attributes, {} seen / {} unseen classes, seed {}\n",
        data.dataset.n(),
        data.dataset.p(),
        data.attrs.d(),
        sc.k_s,
        sc.k_u,
        sc.seed
    ))
}

fn relation_stage(cfg: &PipelineConfig) -> Result<String> {
    let (dataset, attrs, split) = load_inputs(cfg)?;
    let fit = build_relation_matrix(&dataset, &attrs, &split, &cfg.params.relation_params())?;
    let rel = &fit.relation;
    io::write_matrix_binary(&artifact(cfg, RELATION_FILE), &rel.to_real())?;
    io::write_text(
        &artifact(cfg, DEGENERATE_ROWS_FILE),
        &io::format_index_list(rel.degenerate_rows().iter().copied()),
    )?;
    write_json(&artifact(cfg, MODELS_FILE), &fit.models)?;
    Ok(format!(
        "relation: {}x{} matrix, {} relevant entries, {} environment dims, {} degenerate attributes, seed {}\n",
        rel.d(),
        rel.p(),
        rel.matrix().iter().filter(|&&v| v == 1).count(),
        rel.environment_dims().len(),
        rel.degenerate_rows().len(),
        cfg.params.seed
    ))
}

fn load_relation(cfg: &PipelineConfig) -> Result<(RelationMatrix, Vec<Option<CalibratedModel>>)> {
    let m = io::read_matrix_binary(&artifact(cfg, RELATION_FILE))?;
    let degenerate: BTreeSet<usize> = io::read_index_list(&artifact(cfg, DEGENERATE_ROWS_FILE))?.into_iter().collect();
    let relation = RelationMatrix::from_real(&m, degenerate)?;
    let models: Vec<Option<CalibratedModel>> = read_json(&artifact(cfg, MODELS_FILE))?;
    Ok((relation, models))
}

fn load_plan(cfg: &PipelineConfig) -> Result<SourcePlan> {
    let path = artifact(cfg, PLAN_FILE);
    SourcePlan::from_csv(&io::read_text(&path)?).map_err(|m| Error::parse(&path, 0, m))
}

fn construct_stage(cfg: &PipelineConfig) -> Result<String> {
    let (dataset, attrs, split) = load_inputs(cfg)?;
    let (relation, models) = load_relation(cfg)?;
    let (_, plan, built) = pipeline::construct(&dataset, &attrs, &split, &relation, &models, &cfg.params)?;
    io::write_text(&artifact(cfg, PLAN_FILE), &plan.to_csv())?;

    let samples: Vec<&ConstructedSample> = built.values().flat_map(|c| &c.samples).collect();
    write_samples(cfg, &samples, dataset.p())?;

    let mut skipped = String::from("class,attribute\n");
    for (u, c) in &built {
        for a in &c.skipped_attributes {
            writeln!(skipped, "{u},{a}").unwrap();
        }
    }
    io::write_text(&artifact(cfg, SKIPPED_FILE), &skipped)?;

    let mut summary = format!("construct: {} samples for {} unseen classes\n", samples.len(), built.len());
    for (u, c) in &built {
        let cs = plan.get(*u)?;
        writeln!(
            summary,
            "  class {u}: sources {:?}, {} samples, {} skipped attributes",
            cs.sources,
            c.samples.len(),
            c.skipped_attributes.len()
        )
        .unwrap();
    }
    Ok(summary)
}

/// Writes the constructed feature CSV plus its metadata and provenance.
/// Sample ids are positions in `samples`.
fn write_samples(cfg: &PipelineConfig, samples: &[&ConstructedSample], p: usize) -> Result<()> {
    let mut x = Array2::zeros((samples.len(), p));
    for (i, s) in samples.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.feature[..]));
    }
    let labels: Vec<ClassId> = samples.iter().map(|s| s.target_class).collect();
    io::write_feature_csv(&artifact(cfg, CONSTRUCTED_FILE), None, &labels, &x, &[])?;

    let mut meta = String::from("id,target_class,base_sample\n");
    let mut prov = String::from("id,dim,donor_sample_index\n");
    for (i, s) in samples.iter().enumerate() {
        writeln!(meta, "{i},{},{}", s.target_class, s.base_sample).unwrap();
        for (j, pv) in s.provenance.iter().enumerate() {
            if let Provenance::Donor(d) = pv {
                writeln!(prov, "{i},{j},{d}").unwrap();
            }
        }
    }
    io::write_text(&artifact(cfg, CONSTRUCTED_META_FILE), &meta)?;
    io::write_text(&artifact(cfg, PROVENANCE_FILE), &prov)
}

fn parse_usize_rows(path: &Path, header: &str, width: usize) -> Result<Vec<Vec<usize>>> {
    let text = io::read_text(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(header) {
        return Err(Error::parse(path, 1, format!("expected header `{header}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields = l
                .split(',')
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            if fields.len() != width {
                return Err(Error::parse(path, i + 2, format!("expected {width} fields")));
            }
            Ok(fields)
        })
        .collect()
}

/// Constructed samples by id, as written by the construct stage.
fn load_constructed(cfg: &PipelineConfig) -> Result<Vec<ConstructedSample>> {
    let table = io::read_feature_csv(&artifact(cfg, CONSTRUCTED_FILE), &[])?;
    let meta_path = artifact(cfg, CONSTRUCTED_META_FILE);
    let meta = parse_usize_rows(&meta_path, "id,target_class,base_sample", 3)?;
    if meta.len() != table.labels.len() {
        return Err(Error::parse(
            &meta_path,
            0,
            format!("{} rows but {} constructed samples", meta.len(), table.labels.len()),
        ));
    }
    let p = table.features.ncols();
    let mut samples: Vec<ConstructedSample> = meta
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if m[0] != i || m[1] != table.labels[i] || table.ids[i] != i.to_string() {
                return Err(Error::parse(&meta_path, i + 2, "does not match the constructed samples"));
            }
            Ok(ConstructedSample {
                feature: table.features.row(i).to_vec(),
                target_class: m[1],
                base_sample: m[2],
                provenance: vec![Provenance::Retained; p],
                screen_score: None,
            })
        })
        .collect::<Result<_>>()?;
    let prov_path = artifact(cfg, PROVENANCE_FILE);
    for (line, r) in parse_usize_rows(&prov_path, "id,dim,donor_sample_index", 3)?.iter().enumerate() {
        if r[0] >= samples.len() || r[1] >= p {
            return Err(Error::parse(&prov_path, line + 2, "id or dim out of range"));
        }
        samples[r[0]].provenance[r[1]] = Provenance::Donor(r[2]);
    }
    Ok(samples)
}

fn group_by_class(samples: Vec<ConstructedSample>) -> BTreeMap<ClassId, Vec<ConstructedSample>> {
    let mut map: BTreeMap<ClassId, Vec<ConstructedSample>> = BTreeMap::new();
    for s in samples {
        map.entry(s.target_class).or_default().push(s);
    }
    map
}

fn screen_stage(cfg: &PipelineConfig) -> Result<String> {
    let (dataset, attrs, split) = load_inputs(cfg)?;
    let samples = load_constructed(cfg)?;
    // Screening reorders samples, so remember each one's id.
    let ids: BTreeMap<(ClassId, usize), usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.target_class, s.base_sample), i))
        .collect();
    if ids.len() != samples.len() {
        return Err(Error::Validation("constructed samples repeat a (class, base sample) pair".into()));
    }
    let outcome = pipeline::screen_all(&dataset, &attrs, &split, &group_by_class(samples), cfg.params.keep_fraction)?;

    let kept: Vec<&ConstructedSample> = outcome.values().flat_map(|o| &o.kept).collect();
    let kept_ids: Vec<String> = kept.iter().map(|s| ids[&(s.target_class, s.base_sample)].to_string()).collect();
    let mut x = Array2::zeros((kept.len(), dataset.p()));
    for (i, s) in kept.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.feature[..]));
    }
    let labels: Vec<ClassId> = kept.iter().map(|s| s.target_class).collect();
    let scores: Vec<f64> = kept.iter().map(|s| s.screen_score.unwrap_or(f64::NAN)).collect();
    io::write_feature_csv(
        &artifact(cfg, SCREENED_FILE),
        Some(&kept_ids),
        &labels,
        &x,
        &[("screen_score", &scores)],
    )?;

    let mut table = String::from("id,label,base_sample,screen_score,kept\n");
    for o in outcome.values() {
        for (s, k) in o.kept.iter().map(|s| (s, 1)).chain(o.rejected.iter().map(|s| (s, 0))) {
            writeln!(
                table,
                "{},{},{},{},{k}",
                ids[&(s.target_class, s.base_sample)],
                s.target_class,
                s.base_sample,
                s.screen_score.unwrap_or(f64::NAN)
            )
            .unwrap();
        }
    }
    io::write_text(&artifact(cfg, SCREEN_SCORES_FILE), &table)?;

    let total: usize = outcome.values().map(|o| o.kept.len() + o.rejected.len()).sum();
    Ok(format!(
        "screen: kept {} of {} samples (keep_fraction {})\n",
        kept.len(),
        total,
        cfg.params.keep_fraction
    ))
}

/// Screened samples in file order, with their recorded scores.
fn load_screened(cfg: &PipelineConfig, constructed: &[ConstructedSample]) -> Result<Vec<ConstructedSample>> {
    let path = artifact(cfg, SCREENED_FILE);
    let table = io::read_feature_csv(&path, &["screen_score"])?;
    table
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = id
                .parse::<usize>()
                .ok()
                .and_then(|k| constructed.get(k))
                .ok_or_else(|| Error::parse(&path, i + 2, format!("unknown sample id `{id}`")))?;
            if s.feature.as_slice() != table.features.row(i).as_slice().unwrap_or(&[]) || s.target_class != table.labels[i] {
                return Err(Error::parse(&path, i + 2, format!("sample `{id}` differs from the constructed set")));
            }
            Ok(ConstructedSample {
                screen_score: Some(table.extra[i][0]),
                ..s.clone()
            })
        })
        .collect()
}

fn evaluate(cfg: &PipelineConfig, strategies: &[Strategy], file: &str, stage: &str) -> Result<String> {
    let (dataset, attrs, split) = load_inputs(cfg)?;
    let (relation, _) = load_relation(cfg)?;
    let plan = load_plan(cfg)?;
    let constructed_list = load_constructed(cfg)?;
    let screened = group_by_class(load_screened(cfg, &constructed_list)?);
    let constructed = group_by_class(constructed_list);
    let inputs = StrategyInputs {
        dataset: &dataset,
        attrs: &attrs,
        split: &split,
        relation: &relation,
        plan: &plan,
        constructed: &constructed,
        screened: &screened,
    };
    let results = compare_strategies(&inputs, strategies, cfg.params.classifier, cfg.params.seed)?;
    let report = EvalReport {
        strategies: results.iter().map(|(s, r)| (s.name().to_string(), r.clone())).collect(),
        config: cfg.echo(),
        seed: cfg.params.seed,
    };
    write_json(&artifact(cfg, file), &report)?;
    let mut summary = format!("{stage}: classifier {}, seed {}\n", cfg.params.classifier, cfg.params.seed);
    for (s, r) in &results {
        writeln!(summary, "  {s:<7} top1 {:.4} ({} training samples)", r.top1, r.train_samples).unwrap();
    }
    Ok(summary)
}

fn eval_stage(cfg: &PipelineConfig) -> Result<String> {
    evaluate(cfg, &[Strategy::Ibsc, Strategy::IbscS], EVAL_REPORT_FILE, "eval")
}

fn compare_stage(cfg: &PipelineConfig) -> Result<String> {
    evaluate(cfg, &Strategy::ALL, COMPARE_REPORT_FILE, "compare")
}
