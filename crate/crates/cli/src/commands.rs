use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use seqsynth_core::combine::{analyze_synthetic, AnalysisSpec, Estimator};
use seqsynth_core::sdc::{apply_policy, remove_replicated_uniques, top_bottom_code, SdcPolicy};
use seqsynth_core::sim::{
    run_interaction_shrinkage, run_ratio_study, run_srs_simulation, run_stratified_simulation, RatioStudyConfig,
    ShrinkageConfig, SrsSimConfig, StratSimConfig, RATIO_COLUMNS,
};
use seqsynth_core::synth::{synthesize, synthesize_stratified};
use seqsynth_core::table::{parse_csv, write_csv, DataTable, Schema};
use seqsynth_core::utility::{compare_coefficients, compare_marginals, Binning};

use crate::config::{Command, Loaded, Study};

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Globals {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

/// Record of a non-synthesis run, written as `{stem}_manifest.toml`.
#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    outputs: Vec<String>,
    warnings: Vec<String>,
    /// Disclosure-control counts, never values.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sdc: Vec<String>,
    /// Effective settings after defaults and overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved: Option<toml::Table>,
    /// The configuration file as given.
    source: &'a str,
}

impl RunRecord<'_> {
    fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let p = dir.join(format!("{stem}_manifest.toml"));
        fs::write(&p, toml::to_string(self)?).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| {
            p.file_name()
                .map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned())
        })
        .collect()
}

fn read_table(path: &Path, schema: &Schema) -> Result<DataTable> {
    parse_csv(path, schema).with_context(|| format!("cannot read {}", path.display()))
}

fn read_tables(cfg: &Loaded, paths: &[PathBuf], schema: &Schema) -> Result<Vec<DataTable>> {
    if paths.is_empty() {
        bail!("{}: no synthetic files listed", cfg.path.display());
    }
    paths.iter().map(|p| read_table(&cfg.resolve(p), schema)).collect()
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn run(command: Command, cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    cfg.command(command)?;
    fs::create_dir_all(&g.out_dir).with_context(|| format!("cannot create {}", g.out_dir.display()))?;
    match command {
        Command::Synth => synth(cfg, g),
        Command::Analyze => analyze(cfg, g),
        Command::Compare => compare(cfg, g),
        Command::Simulate => simulate(cfg, g),
        Command::Sdc => sdc(cfg, g),
    }
}

fn synth(cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    let block = cfg.config.synth.as_ref().expect("checked by command()");
    let s = block.get_ref();
    let schema = cfg.schema()?;
    let plan = cfg.plan(&schema, s, g.seed)?;
    let observed = read_table(&cfg.resolve(&s.data), &schema)?;
    let output = match &s.stratify {
        Some(st) => {
            let var = schema
                .stratum()
                .ok_or_else(|| cfg.at(st.span(), "stratified synthesis needs a variable with role stratum"))?;
            synthesize_stratified(&observed, &plan, &var.name, &st.get_ref().sizes).map_err(|e| cfg.at(st.span(), e))?
        }
        None => synthesize(&observed, &plan)?,
    };
    let policy = match &s.sdc {
        Some(p) => {
            let p = p.get_ref();
            SdcPolicy {
                label: p.label.clone(),
                keys: p.keys.clone(),
                topcode: p.topcode.clone(),
            }
        }
        None => SdcPolicy::default(),
    };
    let output = apply_policy(output, &observed, &policy).map_err(|e| match &s.sdc {
        Some(p) => cfg.at(p.span(), e),
        None => anyhow!(e),
    })?;
    warn_all(&output.manifest.warnings);
    let paths = output.write_to_dir(&g.out_dir, &s.stem)?;
    for note in &output.manifest.sdc {
        eprintln!("sdc: {note}");
    }
    println!(
        "wrote {} synthetic replicates of {} rows (seed {}) to {}",
        output.replicates.len(),
        output.manifest.k,
        output.manifest.master_seed,
        g.out_dir.display()
    );
    Ok(paths)
}

/// Observed sample size from the synthesis manifest.
fn manifest_rows(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("{} is not a manifest", path.display()))?;
    match table.get("n") {
        Some(toml::Value::Integer(n)) if *n > 0 => Ok(*n as usize),
        _ => bail!("{}: manifest has no positive `n`", path.display()),
    }
}

fn analyze(cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    let block = cfg.config.analyze.as_ref().expect("checked by command()");
    let a = block.get_ref();
    let schema = cfg.schema()?;
    let est = cfg.estimator(&a.estimator)?;
    let spec = AnalysisSpec::parse(a.model.get_ref(), a.family).map_err(|e| cfg.at(a.model.span(), e))?;
    let reps = read_tables(cfg, &a.synthetic, &schema)?;
    let n_obs = match (a.observed_rows, &a.manifest) {
        (Some(_), Some(_)) => return Err(cfg.at(block.span(), "give observed_rows or manifest, not both")),
        (Some(n), None) => n,
        (None, Some(p)) => manifest_rows(&cfg.resolve(p))?,
        // the estimators that ignore n
        (None, None) if matches!(est, Estimator::Vbar | Estimator::Tm) => reps[0].n_rows(),
        (None, None) => {
            return Err(cfg.at(
                block.span(),
                format!("estimator {est} needs observed_rows or a manifest"),
            ));
        }
    };
    let mut warnings = Vec::new();
    if reps.iter().any(|r| r.label().is_none()) {
        warnings.push("some input files carry no faux-data label".to_string());
    }
    let analysis = analyze_synthetic(&reps, &spec, est, a.ci_level, n_obs).map_err(|e| cfg.at(a.model.span(), e))?;
    warnings.extend(analysis.warnings.iter().cloned());
    let path = g.out_dir.join(format!("{}.csv", a.stem));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "name",
        "estimate",
        "se",
        "variance",
        "ci_low",
        "ci_high",
        "estimator",
        "flags",
    ])?;
    println!(
        "{:<20} {:>12} {:>12} {:>26}",
        "term",
        "estimate",
        "se",
        format!("{}% interval", a.ci_level * 100.0)
    );
    for e in &analysis.estimates {
        let mut flags = Vec::new();
        if e.negative_variance {
            flags.push("negative-variance");
            warnings.push(format!(
                "{}: negative {} variance estimate, interval is NA",
                e.name, e.estimator
            ));
        }
        if e.adjusted {
            flags.push("adjusted");
        }
        w.write_record([
            e.name.clone(),
            e.estimate.to_string(),
            na(e.se()),
            e.variance.to_string(),
            na(e.interval.map(|i| i.0)),
            na(e.interval.map(|i| i.1)),
            e.estimator.clone(),
            flags.join(";"),
        ])?;
        let interval = e
            .interval
            .map_or("NA".to_string(), |(lo, hi)| format!("({lo:.4}, {hi:.4})"));
        println!(
            "{:<20} {:>12.4} {:>12} {:>26}",
            e.name,
            e.estimate,
            e.se().map_or("NA".into(), |s| format!("{s:.4}")),
            interval
        );
    }
    w.flush()?;
    warn_all(&warnings);
    let mut paths = vec![path];
    let record = RunRecord {
        command: "analyze",
        config: cfg.path.display().to_string(),
        seed: None,
        outputs: file_names(&paths),
        warnings,
        sdc: Vec::new(),
        resolved: None,
        source: &cfg.source,
    };
    paths.push(record.write(&g.out_dir, &a.stem)?);
    Ok(paths)
}

fn compare(cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    let block = cfg.config.compare.as_ref().expect("checked by command()");
    let c = block.get_ref();
    let schema = cfg.schema()?;
    let binning = match (c.bins, c.bin_width) {
        (Some(_), Some(_)) => return Err(cfg.at(block.span(), "give bins or bin_width, not both")),
        (Some(0), None) => return Err(cfg.at(block.span(), "bins must be positive")),
        (Some(b), None) => Binning::Count(b),
        (None, Some(w)) if !(w > 0.0 && w.is_finite()) => {
            return Err(cfg.at(block.span(), "bin_width must be positive"))
        }
        (None, Some(w)) => Binning::Width(w),
        (None, None) => Binning::Default,
    };
    let observed = read_table(&cfg.resolve(&c.observed), &schema)?;
    let reps = read_tables(cfg, &c.synthetic, &schema)?;
    let variables: Vec<String> = match &c.variables {
        Some(v) => {
            for name in v.get_ref() {
                schema.index_of(name).map_err(|e| cfg.at(v.span(), e))?;
            }
            v.get_ref().clone()
        }
        None => schema.names().map(str::to_string).collect(),
    };
    let mut paths = Vec::new();
    let path = g.out_dir.join(format!("{}_marginals.csv", c.stem));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variable", "bin", "observed", "synthetic", "difference"])?;
    for var in &variables {
        let m = compare_marginals(&observed, &reps, var, binning)?;
        for (i, bin) in m.bins.iter().enumerate() {
            w.write_record([
                var.clone(),
                bin.clone(),
                m.observed[i].to_string(),
                m.synthetic[i].to_string(),
                m.differences[i].to_string(),
            ])?;
        }
        println!("{var:<20} max |difference| {:.4}", m.max_abs_difference);
    }
    w.flush()?;
    paths.push(path);
    if let Some(model) = &c.model {
        let spec = AnalysisSpec::parse(model.get_ref(), c.family).map_err(|e| cfg.at(model.span(), e))?;
        let cmp = compare_coefficients(&observed, &reps, &spec, c.ci_level).map_err(|e| cfg.at(model.span(), e))?;
        let path = g.out_dir.join(format!("{}_coefficients.csv", c.stem));
        let mut w = csv::Writer::from_path(&path)?;
        for r in &cmp.rows {
            w.serialize(r)?;
            println!(
                "{:<20} observed {:>10.4} synthetic {:>10.4} z {:>7.3}",
                r.name, r.observed, r.synthetic, r.z
            );
        }
        w.flush()?;
        paths.push(path);
    }
    let record = RunRecord {
        command: "compare",
        config: cfg.path.display().to_string(),
        seed: None,
        outputs: file_names(&paths),
        warnings: Vec::new(),
        sdc: Vec::new(),
        resolved: None,
        source: &cfg.source,
    };
    paths.push(record.write(&g.out_dir, &c.stem)?);
    Ok(paths)
}

/// Defaults overlaid with the `[simulate.settings]` table.
fn merged<T: Serialize + DeserializeOwned>(
    cfg: &Loaded,
    defaults: T,
    overrides: Option<&toml::Spanned<toml::Table>>,
) -> Result<T> {
    let Some(o) = overrides else { return Ok(defaults) };
    let mut table = toml::Table::try_from(&defaults)?;
    for (k, v) in o.get_ref() {
        table.insert(k.clone(), v.clone());
    }
    T::deserialize(table).map_err(|e| cfg.at(o.span(), format!("bad settings: {e}")))
}

fn simulate(cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    let block = cfg.config.simulate.as_ref().expect("checked by command()");
    let s = block.get_ref();
    let stem = s.stem.clone().unwrap_or_else(|| s.study.name().to_string());
    if let (Some(p), false) = (&s.preset, s.study == Study::Stratified) {
        return Err(cfg.at(p.span(), "presets apply to the stratified study only"));
    }
    let settings = s.settings.as_ref();
    let dir = &g.out_dir;
    let mut paths;
    let seed;
    let resolved;
    match s.study {
        Study::Srs => {
            let mut c = merged(cfg, SrsSimConfig::default(), settings)?;
            if let Some(sd) = g.seed {
                c.seed = sd;
            }
            seed = c.seed;
            resolved = toml::Table::try_from(&c)?;
            let report = run_srs_simulation(&c)?;
            print!("{}", report.render());
            paths = report.write_csv(dir, &stem)?;
        }
        Study::Stratified => {
            let base = match &s.preset {
                Some(p) => StratSimConfig::preset(*p.get_ref()).map_err(|e| cfg.at(p.span(), e))?,
                None => StratSimConfig::default(),
            };
            let mut c = merged(cfg, base, settings)?;
            if let Some(sd) = g.seed {
                c.seed = sd;
            }
            seed = c.seed;
            resolved = toml::Table::try_from(&c)?;
            let report = run_stratified_simulation(&c)?;
            print!("{}", report.render());
            paths = report.write_csv(dir, &stem)?;
        }
        Study::Ratio => {
            let mut c = merged(cfg, RatioStudyConfig::default(), settings)?;
            if let Some(sd) = g.seed {
                c.seed = sd;
            }
            seed = c.seed;
            resolved = toml::Table::try_from(&c)?;
            let report = run_ratio_study(&c)?;
            let summary = dir.join(format!("{stem}_summary.csv"));
            let mut w = csv::Writer::from_path(&summary)?;
            for r in &report.rows {
                w.serialize(r)?;
            }
            w.flush()?;
            let per = dir.join(format!("{stem}_ratios.csv"));
            let mut w = csv::Writer::from_path(&per)?;
            w.write_record(["rep", "arm", "estimator", "coefficient", "ratio"])?;
            for (rep, cols) in report.ratios.iter().enumerate() {
                for (col, &(arm, est)) in RATIO_COLUMNS.iter().enumerate() {
                    for (j, name) in report.coefficients.iter().enumerate() {
                        w.write_record([
                            (rep + 1).to_string(),
                            arm.name().to_string(),
                            est.to_string(),
                            name.clone(),
                            na(cols[col][j]),
                        ])?;
                    }
                }
            }
            w.flush()?;
            print!("{}", report.render_rep(0));
            for (arm, est) in RATIO_COLUMNS {
                println!("{} {est}: mean ratio {}", arm.name(), na(report.grand_mean(arm, est)));
            }
            paths = vec![summary, per];
        }
        Study::Shrinkage => {
            let mut c = merged(cfg, ShrinkageConfig::default(), settings)?;
            if let Some(sd) = g.seed {
                c.seed = sd;
            }
            seed = c.seed;
            resolved = toml::Table::try_from(&c)?;
            let rows = run_interaction_shrinkage(&c)?;
            let path = dir.join(format!("{stem}_rows.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            let shrunk = rows.iter().filter(|r| r.shrunk).count();
            println!("{shrunk} of {} interaction estimates shrunk towards zero", rows.len());
            paths = vec![path];
        }
    }
    let record = RunRecord {
        command: "simulate",
        config: cfg.path.display().to_string(),
        seed: Some(seed),
        outputs: file_names(&paths),
        warnings: Vec::new(),
        sdc: Vec::new(),
        resolved: Some(resolved),
        source: &cfg.source,
    };
    paths.push(record.write(dir, &stem)?);
    Ok(paths)
}

fn sdc(cfg: &Loaded, g: &Globals) -> Result<Vec<PathBuf>> {
    let block = cfg.config.sdc.as_ref().expect("checked by command()");
    let s = block.get_ref();
    let schema = cfg.schema()?;
    let observed = read_table(&cfg.resolve(&s.observed), &schema)?;
    let reps = read_tables(cfg, &s.synthetic, &schema)?;
    for k in s.keys.iter().chain(s.topcode.keys()) {
        schema.index_of(k).map_err(|e| cfg.at(block.span(), e))?;
    }
    let mut notes = Vec::new();
    if s.keys.is_empty() {
        notes.push("no key variables: unique removal skipped".to_string());
    }
    let mut paths = Vec::new();
    for (l, rep) in reps.iter().enumerate() {
        let (mut t, clamped) = top_bottom_code(rep, &s.topcode)?;
        if !s.topcode.is_empty() {
            notes.push(format!("replicate {}: {clamped} cells top/bottom-coded", l + 1));
        }
        if !s.keys.is_empty() {
            let (kept, removed) = remove_replicated_uniques(&observed, &t, &s.keys)?;
            notes.push(format!("replicate {}: {removed} replicated unique rows removed", l + 1));
            t = kept;
        }
        t.set_label(Some(s.label.clone()));
        let p = g.out_dir.join(format!("{}_{}.csv", s.stem, l + 1));
        write_csv(&t, &p)?;
        paths.push(p);
    }
    for n in &notes {
        eprintln!("sdc: {n}");
    }
    let record = RunRecord {
        command: "sdc",
        config: cfg.path.display().to_string(),
        seed: None,
        outputs: file_names(&paths),
        warnings: Vec::new(),
        sdc: notes,
        resolved: None,
        source: &cfg.source,
    };
    let p = g.out_dir.join(format!("{}_manifest.toml", s.stem));
    fs::write(&p, format!("# {}\n{}", s.label, toml::to_string(&record)?))?;
    paths.push(p);
    println!("wrote {} labelled files to {}", reps.len(), g.out_dir.display());
    Ok(paths)
}
