//! Pipeline configuration: flat `key = value` lines, `#` comments and one
//! `[section]` per stage.
//!
//! ```text
//! seed = 7
//! out = runs/a
//!
//! [data]
//! features = features.csv
//! attributes_continuous = attrs_cont.csv
//! attributes_binary = attrs_bin.csv
//! split = split.txt
//!
//! [relation]
//! lambda = 0.05
//!
//! [construct]
//! k = 5
//!
//! [screen]
//! keep_fraction = 0.5
//!
//! [eval]
//! classifier = linear_ovr
//! ```
//!
//! Relative paths are resolved against the config file's directory. A
//! `[synth]` section makes the `synth` stage write a generated dataset into
//! the output directory, and data paths default to those files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::construction::splice::DEFAULT_SHORTLIST;
use crate::construction::PlanParams;
use crate::error::{Error, Result};
use crate::eval::ClassifierKind;
use crate::io::MatrixFormat;
use crate::linear::{DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::relation::{RelationParams, DEFAULT_RELATION_RIDGE};
use crate::screening::DEFAULT_KEEP_FRACTION;
use crate::synth::SynthConfig;

/// Numeric settings of a run. Serialized as the config echo of reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub lambda: f64,
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub k: usize,
    pub auto_k: bool,
    pub k_max: usize,
    pub shortlist: usize,
    pub keep_fraction: f64,
    pub classifier: ClassifierKind,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        let plan = PlanParams::default();
        PipelineParams {
            lambda: DEFAULT_LAMBDA,
            ridge: DEFAULT_RELATION_RIDGE,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            k: plan.k,
            auto_k: plan.auto_k,
            k_max: plan.k_max,
            shortlist: DEFAULT_SHORTLIST,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            classifier: ClassifierKind::default(),
            seed: 0,
        }
    }
}

impl PipelineParams {
    pub fn relation_params(&self) -> RelationParams {
        RelationParams {
            lambda: self.lambda,
            ridge: self.ridge,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }

    pub fn plan_params(&self) -> PlanParams {
        PlanParams {
            k: self.k,
            auto_k: self.auto_k,
            k_max: self.k_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return fail(format!("ridge must be non-negative, got {}", self.ridge));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.k_max < 2 {
            return fail(format!("k_max must be at least 2, got {}", self.k_max));
        }
        if self.shortlist == 0 {
            return fail("shortlist must be at least 1".into());
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return fail(format!("keep_fraction must be in (0, 1], got {}", self.keep_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub features: Option<PathBuf>,
    pub format: MatrixFormat,
    pub attributes_continuous: Option<PathBuf>,
    pub attributes_binary: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub out: PathBuf,
    pub synth: Option<SynthConfig>,
    pub params: PipelineParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: None,
            format: MatrixFormat::Csv,
            attributes_continuous: None,
            attributes_binary: None,
            split: None,
            out: PathBuf::from("ibsc_out"),
            synth: None,
            params: PipelineParams::default(),
        }
    }
}

/// `section -> key -> (line, value)`; the global section is `""`.
type RawConfig = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const SECTIONS: &[&str] = &["", "data", "synth", "relation", "construct", "screen", "eval"];

fn parse_raw(path: &Path, text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::new();
    let mut section = String::new();
    raw.insert(section.clone(), BTreeMap::new());
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(path, line_no, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) || name.is_empty() {
                return Err(Error::parse(path, line_no, format!("unknown section [{name}]")));
            }
            if raw.contains_key(name) {
                return Err(Error::parse(path, line_no, format!("section [{name}] repeated")));
            }
            section = name.to_string();
            raw.insert(section.clone(), BTreeMap::new());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::parse(path, line_no, "empty key"));
        }
        let entries = raw.get_mut(&section).expect("section inserted");
        if entries.insert(key.to_string(), (line_no, value.to_string())).is_some() {
            return Err(Error::parse(path, line_no, format!("key `{key}` repeated")));
        }
    }
    Ok(raw)
}

struct Section<'a> {
    path: &'a Path,
    name: &'a str,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section<'_> {
    fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<()> {
        if let Some((line, value)) = self.entries.remove(key) {
            *target = value
                .parse()
                .map_err(|_| Error::parse(self.path, line, format!("invalid value `{value}` for `{key}`")))?;
        }
        Ok(())
    }

    fn take_path(&mut self, key: &str, base: &Path) -> Option<PathBuf> {
        self.entries.remove(key).map(|(_, v)| base.join(v))
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => {
                let section = if self.name.is_empty() { "top level" } else { self.name };
                Err(Error::parse(self.path, line, format!("unknown key `{key}` in {section}")))
            }
            None => Ok(()),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(path, &text, &base)
    }

    /// Parses config text; `source` names the file in errors and `base`
    /// anchors relative paths.
    pub fn parse(source: &Path, text: &str, base: &Path) -> Result<Self> {
        let mut raw = parse_raw(source, text)?;
        let synth_present = raw.contains_key("synth");
        let mut cfg = PipelineConfig::default();
        let mut section = |name: &'static str| Section {
            path: source,
            name,
            entries: raw.remove(name).unwrap_or_default(),
        };

        let mut global = section("");
        global.take("seed", &mut cfg.params.seed)?;
        if let Some(out) = global.take_path("out", base) {
            cfg.out = out;
        }
        global.finish()?;

        let mut data = section("data");
        cfg.features = data.take_path("features", base);
        data.take("format", &mut cfg.format)?;
        cfg.attributes_continuous = data.take_path("attributes_continuous", base);
        cfg.attributes_binary = data.take_path("attributes_binary", base);
        cfg.split = data.take_path("split", base);
        data.finish()?;

        let mut relation = section("relation");
        relation.take("lambda", &mut cfg.params.lambda)?;
        relation.take("ridge", &mut cfg.params.ridge)?;
        relation.take("tol", &mut cfg.params.tol)?;
        relation.take("max_iter", &mut cfg.params.max_iter)?;
        relation.finish()?;

        let mut construct = section("construct");
        construct.take("k", &mut cfg.params.k)?;
        construct.take("auto_k", &mut cfg.params.auto_k)?;
        construct.take("k_max", &mut cfg.params.k_max)?;
        construct.take("shortlist", &mut cfg.params.shortlist)?;
        construct.finish()?;

        let mut screen = section("screen");
        screen.take("keep_fraction", &mut cfg.params.keep_fraction)?;
        screen.finish()?;

        let mut eval = section("eval");
        eval.take("classifier", &mut cfg.params.classifier)?;
        eval.finish()?;

        let mut synth = section("synth");
        if synth_present {
            let mut s = SynthConfig::default();
            synth.take("k_s", &mut s.k_s)?;
            synth.take("k_u", &mut s.k_u)?;
            synth.take("d", &mut s.d)?;
            synth.take("g", &mut s.g)?;
            synth.take("e", &mut s.e)?;
            synth.take("n_c", &mut s.n_c)?;
            synth.take("sigma_noise", &mut s.sigma_noise)?;
            synth.take("attr_noise", &mut s.attr_noise)?;
            synth.finish()?;
            cfg.synth = Some(s);
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    /// Synthetic-data parameters with the run seed applied.
    pub fn synth_config(&self) -> Option<SynthConfig> {
        self.synth.map(|s| SynthConfig {
            seed: self.params.seed,
            ..s
        })
    }

    /// Config echo for reports: every setting except file paths.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self.params).expect("params serialize");
        if let Some(s) = self.synth_config() {
            v["synth"] = serde_json::to_value(s).expect("synth config serializes");
        }
        v
    }
}
