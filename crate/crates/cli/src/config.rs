//! Run configuration files.
//!
//! A configuration is a TOML document with an optional `[schema]` block and
//! exactly one command block (`[synth]`, `[analyze]`, `[compare]`,
//! `[simulate]` or `[sdc]`). Unknown keys are rejected. Relative paths are
//! resolved against the directory of the configuration file.
//!
//! ```toml
//! [[schema.variable]]
//! name = "AGE9"
//! kind = "continuous"
//! missing_codes = ["-9"]
//!
//! [[schema.variable]]
//! name = "SEX9"
//! kind = "categorical"
//! levels = ["M", "F"]
//! role = "keep-unchanged"     # synthesize | keep-unchanged | stratum | weight
//!
//! [synth]
//! data = "observed.csv"
//! stem = "synthetic"          # output file prefix
//!
//! [synth.plan]
//! visit_sequence = ["AGE9", "MSTAT9"]
//! default_method = "cart"
//! proper = false
//! m = 5
//! k = 1000                    # rows per replicate, default: observed rows
//! seed = 42
//! resample_unchanged = false
//! methods = { AGE9 = "normrank", MSTAT9 = { kind = "polyreg", proper = true } }
//! predictors = { MSTAT9 = ["AGE9", "SEX9"] }
//!
//! [[synth.plan.rules]]
//! when = "AGE9 < 16"
//! target = "MSTAT9"
//! value = "single"
//!
//! [synth.sdc]                 # the label is always applied
//! label = "FALSE DATA"
//! keys = ["AGE9", "SEX9"]
//! topcode = { AGE9 = { upper = 90 } }
//!
//! [synth.stratify]            # per-stratum synthesis on the stratum variable
//! sizes = { "1" = 40 }
//! ```
//!
//! The other blocks:
//!
//! ```toml
//! [analyze]
//! synthetic = ["synthetic_1.csv", "synthetic_2.csv"]
//! manifest = "synthetic_manifest.toml"   # or observed_rows = 20000
//! model = "ILL9=No ~ AGE9 + SEX9 + MSTAT9"
//! family = "logistic"                    # optional
//! estimator = "Ts"       # vbar | TM | TM_adj | Ts | Ts_PPD | Tp | TsDE(2.5)
//! ci_level = 0.95
//!
//! [compare]
//! observed = "observed.csv"
//! synthetic = ["synthetic_1.csv"]
//! variables = ["AGE9"]   # default: all
//! bins = 20              # or bin_width = 5
//! model = "AGE9 ~ SEX9"  # optional coefficient comparison
//!
//! [simulate]
//! study = "stratified"   # srs | stratified | ratio | shrinkage
//! preset = 2             # stratified designs 1, 2, 3
//! settings = { n_sims = 200 }
//!
//! [sdc]
//! observed = "observed.csv"
//! synthetic = ["synthetic_1.csv"]
//! keys = ["AGE9", "SEX9"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use toml::Spanned;

use seqsynth_core::combine::{Estimator, Family};
use seqsynth_core::fit::{CartControls, MethodKind, MethodSpec};
use seqsynth_core::sdc::{Bounds, DEFAULT_LABEL};
use seqsynth_core::synth::{Rule, SynthesisPlan};
use seqsynth_core::table::{Schema, VariableDef};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Option<Spanned<SchemaConfig>>,
    pub synth: Option<Spanned<SynthConfig>>,
    pub analyze: Option<Spanned<AnalyzeConfig>>,
    pub compare: Option<Spanned<CompareConfig>>,
    pub simulate: Option<Spanned<SimulateConfig>>,
    pub sdc: Option<Spanned<SdcConfig>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub variable: Vec<Spanned<VariableDef>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub data: PathBuf,
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default)]
    pub plan: Option<Spanned<PlanConfig>>,
    #[serde(default)]
    pub sdc: Option<Spanned<SdcPolicyConfig>>,
    pub stratify: Option<Spanned<StratifyConfig>>,
}

fn default_stem() -> String {
    "synthetic".into()
}

fn default_m() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

fn default_label() -> String {
    DEFAULT_LABEL.into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub visit_sequence: Option<Spanned<Vec<String>>>,
    #[serde(default)]
    pub predictors: BTreeMap<String, Spanned<Vec<String>>>,
    #[serde(default)]
    pub methods: BTreeMap<String, Spanned<MethodConfig>>,
    #[serde(default)]
    pub default_method: Option<MethodKind>,
    #[serde(default)]
    pub rules: Vec<Spanned<Rule>>,
    #[serde(default)]
    pub proper: bool,
    #[serde(default = "default_m")]
    pub m: usize,
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resample_unchanged: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MethodConfig {
    Kind(MethodKind),
    Full(MethodTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodTable {
    pub kind: MethodKind,
    #[serde(default)]
    pub proper: bool,
    #[serde(default)]
    pub smoothing: bool,
    #[serde(default)]
    pub cart: CartControls,
}

impl MethodConfig {
    fn spec(&self) -> MethodSpec {
        match self {
            MethodConfig::Kind(k) => MethodSpec::new(*k),
            MethodConfig::Full(t) => MethodSpec::new(t.kind)
                .proper(t.proper)
                .smoothed(t.smoothing)
                .with_cart(t.cart),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdcPolicyConfig {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub keys: Vec<String>,
    #[serde(default)]
    pub topcode: BTreeMap<String, Bounds>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratifyConfig {
    #[serde(default)]
    pub sizes: BTreeMap<String, usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub synthetic: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub observed_rows: Option<usize>,
    pub model: Spanned<String>,
    pub family: Option<Family>,
    #[serde(default = "default_estimator")]
    pub estimator: Spanned<String>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default = "default_analysis_stem")]
    pub stem: String,
}

fn default_estimator() -> Spanned<String> {
    Spanned::new(0..0, "Ts".into())
}

fn default_analysis_stem() -> String {
    "analysis".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub observed: PathBuf,
    pub synthetic: Vec<PathBuf>,
    pub variables: Option<Spanned<Vec<String>>>,
    pub bins: Option<usize>,
    pub bin_width: Option<f64>,
    pub model: Option<Spanned<String>>,
    pub family: Option<Family>,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default = "default_compare_stem")]
    pub stem: String,
}

fn default_compare_stem() -> String {
    "compare".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Srs,
    Stratified,
    Ratio,
    Shrinkage,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Srs => "srs",
            Study::Stratified => "stratified",
            Study::Ratio => "ratio",
            Study::Shrinkage => "shrinkage",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub study: Study,
    pub preset: Option<Spanned<u8>>,
    /// Overrides of the study's default settings.
    #[serde(default)]
    pub settings: Option<Spanned<toml::Table>>,
    pub stem: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdcConfig {
    pub observed: PathBuf,
    pub synthetic: Vec<PathBuf>,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub keys: Vec<String>,
    #[serde(default)]
    pub topcode: BTreeMap<String, Bounds>,
    #[serde(default = "default_sdc_stem")]
    pub stem: String,
}

fn default_sdc_stem() -> String {
    "sdc".into()
}

/// Which command block a configuration holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Analyze,
    Compare,
    Simulate,
    Sdc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Analyze => "analyze",
            Command::Compare => "compare",
            Command::Simulate => "simulate",
            Command::Sdc => "sdc",
        }
    }
}

/// Parsed configuration with its source for line-anchored messages.
#[derive(Debug)]
pub struct Loaded {
    pub path: PathBuf,
    pub source: String,
    pub config: RunConfig,
}

impl Loaded {
    pub fn parse(path: &Path, source: String) -> Result<Loaded> {
        let config: RunConfig = toml::from_str(&source).map_err(|e| {
            let at = e
                .span()
                .map(|s| format!(":{}", line_of(&source, s.start)))
                .unwrap_or_default();
            anyhow!("{}{at}: {}", path.display(), e.message())
        })?;
        Ok(Loaded {
            path: path.to_path_buf(),
            source,
            config,
        })
    }

    pub fn read(path: &Path) -> Result<Loaded> {
        let source = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Loaded::parse(path, source)
    }

    /// Error message anchored at the line where `span` starts.
    pub fn at(&self, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> anyhow::Error {
        if span.is_empty() && span.start == 0 {
            anyhow!("{}: {msg}", self.path.display())
        } else {
            anyhow!("{}:{}: {msg}", self.path.display(), line_of(&self.source, span.start))
        }
    }

    /// Resolve a path from the configuration relative to its directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    /// The single command block present; it must match `expected`.
    pub fn command(&self, expected: Command) -> Result<Command> {
        let c = &self.config;
        let present: Vec<Command> = [
            (c.synth.is_some(), Command::Synth),
            (c.analyze.is_some(), Command::Analyze),
            (c.compare.is_some(), Command::Compare),
            (c.simulate.is_some(), Command::Simulate),
            (c.sdc.is_some(), Command::Sdc),
        ]
        .into_iter()
        .filter_map(|(p, k)| p.then_some(k))
        .collect();
        match present.as_slice() {
            [] => bail!(
                "{}: no command block; expected [{}]",
                self.path.display(),
                expected.name()
            ),
            [one] if *one == expected => Ok(*one),
            [one] => bail!(
                "{}: config holds a [{}] block but the command is `{}`",
                self.path.display(),
                one.name(),
                expected.name()
            ),
            many => bail!(
                "{}: exactly one command block is allowed, found {}",
                self.path.display(),
                many.iter()
                    .map(|c| format!("[{}]", c.name()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        let block = self
            .config
            .schema
            .as_ref()
            .ok_or_else(|| anyhow!("{}: a [schema] block is required for this command", self.path.display()))?;
        let vars: Vec<VariableDef> = block.get_ref().variable.iter().map(|v| v.get_ref().clone()).collect();
        Schema::new(vars).map_err(|e| self.at(block.span(), e))
    }

    /// Build and validate the synthesis plan, anchoring errors at the
    /// offending entry.
    pub fn plan(&self, schema: &Schema, synth: &SynthConfig, seed: Option<u64>) -> Result<SynthesisPlan> {
        let Some(block) = &synth.plan else {
            let plan = SynthesisPlan {
                seed: seed.unwrap_or(0),
                ..SynthesisPlan::default()
            };
            plan.resolve(schema)
                .map_err(|e| anyhow!("{}: {e}", self.path.display()))?;
            return Ok(plan);
        };
        let p = block.get_ref();
        let known = |name: &str, span: std::ops::Range<usize>| -> Result<()> {
            schema.index_of(name).map(|_| ()).map_err(|e| self.at(span, e))
        };
        if let Some(seq) = &p.visit_sequence {
            for v in seq.get_ref() {
                known(v, seq.span())?;
            }
        }
        for (var, preds) in &p.predictors {
            known(var, preds.span())?;
            for v in preds.get_ref() {
                known(v, preds.span())?;
            }
        }
        let mut methods = BTreeMap::new();
        for (var, m) in &p.methods {
            let def = schema.get(var).map_err(|e| self.at(m.span(), e))?;
            let spec = m.get_ref().spec();
            spec.validate_for(def).map_err(|e| self.at(m.span(), e))?;
            methods.insert(var.clone(), spec);
        }
        for r in &p.rules {
            r.get_ref().compile(schema).map_err(|e| self.at(r.span(), e))?;
        }
        if p.m == 0 {
            return Err(self.at(block.span(), "m must be at least 1"));
        }
        if p.k == Some(0) {
            return Err(self.at(block.span(), "k must be positive"));
        }
        let plan = SynthesisPlan {
            visit_sequence: p
                .visit_sequence
                .as_ref()
                .map(|s| s.get_ref().clone())
                .unwrap_or_default(),
            predictors: p
                .predictors
                .iter()
                .map(|(k, v)| (k.clone(), v.get_ref().clone()))
                .collect(),
            methods,
            default_method: p.default_method.unwrap_or(MethodKind::Cart),
            rules: p.rules.iter().map(|r| r.get_ref().clone()).collect(),
            proper: p.proper,
            m: p.m,
            k: p.k,
            seed: seed.unwrap_or(p.seed),
            resample_unchanged: p.resample_unchanged,
        };
        // rules one at a time first, so ordering errors point at the rule
        for r in &p.rules {
            let single = SynthesisPlan {
                rules: vec![r.get_ref().clone()],
                ..plan.clone()
            };
            single.resolve(schema).map_err(|e| self.at(r.span(), e))?;
        }
        plan.resolve(schema).map_err(|e| self.at(block.span(), e))?;
        Ok(plan)
    }

    pub fn estimator(&self, spanned: &Spanned<String>) -> Result<Estimator> {
        spanned.get_ref().parse().map_err(|e| self.at(spanned.span(), e))
    }
}

/// 1-based line containing byte `offset`.
pub fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(src: &str) -> Result<Loaded> {
        Loaded::parse(Path::new("run.toml"), src.to_string())
    }

    const SCHEMA: &str = r#"
[[schema.variable]]
name = "age"
kind = "continuous"

[[schema.variable]]
name = "sex"
kind = "categorical"
levels = ["M", "F"]
"#;

    #[test]
    fn unknown_key_is_line_anchored() {
        let err = load("[synth]\ndata = \"x.csv\"\ncolour = 3\n").unwrap_err().to_string();
        assert!(err.starts_with("run.toml:3:"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn exactly_one_command_block() {
        let l = load("[synth]\ndata = \"x.csv\"\n[sdc]\nobserved = \"a\"\nsynthetic = []\n").unwrap();
        assert!(l
            .command(Command::Synth)
            .unwrap_err()
            .to_string()
            .contains("exactly one"));
        let l = load("[synth]\ndata = \"x.csv\"\n").unwrap();
        assert!(l.command(Command::Analyze).is_err());
        assert_eq!(l.command(Command::Synth).unwrap(), Command::Synth);
    }

    #[test]
    fn bad_method_points_at_its_line() {
        let src = format!("{SCHEMA}\n[synth]\ndata = \"x.csv\"\n[synth.plan]\nmethods = {{ sex = \"norm\" }}\n");
        let l = load(&src).unwrap();
        let schema = l.schema().unwrap();
        let synth = l.config.synth.as_ref().unwrap().get_ref();
        let err = l.plan(&schema, synth, None).unwrap_err().to_string();
        let line = src.lines().position(|x| x.starts_with("methods")).unwrap() + 1;
        assert!(err.starts_with(&format!("run.toml:{line}:")), "{err}");
    }

    #[test]
    fn forward_reference_rule_rejected() {
        let src = format!(
            "{SCHEMA}\n[synth]\ndata = \"x.csv\"\n[synth.plan]\nvisit_sequence = [\"age\", \"sex\"]\n\
             [[synth.plan.rules]]\nwhen = \"sex == 'F'\"\ntarget = \"age\"\nvalue = \"1\"\n"
        );
        let l = load(&src).unwrap();
        let schema = l.schema().unwrap();
        let synth = l.config.synth.as_ref().unwrap().get_ref();
        assert!(l.plan(&schema, synth, None).is_err());
    }

    #[test]
    fn seed_override_wins() {
        let src = format!("{SCHEMA}\n[synth]\ndata = \"x.csv\"\n[synth.plan]\nseed = 3\nm = 2\n");
        let l = load(&src).unwrap();
        let schema = l.schema().unwrap();
        let synth = l.config.synth.as_ref().unwrap().get_ref();
        assert_eq!(l.plan(&schema, synth, None).unwrap().seed, 3);
        assert_eq!(l.plan(&schema, synth, Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn line_numbers() {
        assert_eq!(line_of("a\nb\nc", 0), 1);
        assert_eq!(line_of("a\nb\nc", 2), 2);
        assert_eq!(line_of("a\nb\nc", 99), 3);
    }
}
