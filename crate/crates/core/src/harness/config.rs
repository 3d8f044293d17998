//! Experiment configuration: a flat `key = value` text file.
//!
//! ```text
//! # comments start with '#'
//! model = contextual            # quantum | contextual | lrhv
//! n_trials = 100000
//! seed = 42                     # generated and recorded when absent
//! convention = spin             # photon doubles planar angles
//! setting.0.a = 0               # planar angle in degrees ...
//! setting.0.b = 0.5, 0, 0.5     # ... or three components (normalized)
//! contextual.epsilon = 0.05     # or epsilon_a / epsilon_b
//! contextual.eta = 1            # or eta_a / eta_b
//! contextual.profile = uniform  # uniform | gaussian (needs contextual.sigma)
//! lrhv.ensemble = atoms         # uniform | atoms
//! lrhv.atom.0.lambda = 30       # direction-valued atom, or lrhv.atom.0.index = 2
//! lrhv.atom.0.count = 5
//! lrhv.response = deterministic # deterministic | stochastic | table
//! lrhv.order = random           # random | blocked
//! ```
//!
//! Unknown keys and keys irrelevant to the chosen model are errors, so typos
//! cannot silently fall back to defaults. [`ExperimentConfig::canonical`]
//! renders every resolved value in a fixed order; that text is what gets
//! stored and hashed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::contextual::{CapDistribution, CapProfile, ExperimentSetting};
use crate::error::{Error, Result};
use crate::lrhv::{AnalyzerPair, Atom, HiddenVariable, HiddenVariableEnsemble, ResponseModel, ResponseTable};
use crate::purity::PurityConfig;
use crate::quantum::Direction;
use crate::series::ModelTag;

/// How planar angles map to Bloch-sphere directions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Convention {
    /// Angles are spin-analyzer orientations, used as given.
    #[default]
    Spin,
    /// Angles are polarizer orientations; the Bloch angle is twice the
    /// polarizer angle.
    Photon,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DirectionSpec {
    Planar(f64),
    Vector([f64; 3]),
}

impl DirectionSpec {
    pub fn resolve(&self, convention: Convention) -> Result<Direction> {
        match (*self, convention) {
            (DirectionSpec::Planar(deg), Convention::Spin) => Ok(Direction::planar_degrees(deg)),
            (DirectionSpec::Planar(deg), Convention::Photon) => Ok(Direction::planar_degrees(2.0 * deg)),
            (DirectionSpec::Vector([x, y, z]), _) => Direction::normalized(x, y, z),
        }
    }

    fn render(&self) -> String {
        match self {
            DirectionSpec::Planar(d) => format!("{d}"),
            DirectionSpec::Vector([x, y, z]) => format!("{x}, {y}, {z}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SettingSpec {
    pub id: u32,
    pub a: DirectionSpec,
    pub b: DirectionSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContextualParams {
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub profile: CapProfile,
}

impl Default for ContextualParams {
    fn default() -> Self {
        ContextualParams {
            epsilon_a: 0.05,
            epsilon_b: 0.05,
            eta_a: 1.0,
            eta_b: 1.0,
            profile: CapProfile::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EnsembleKind {
    #[default]
    Uniform,
    Atoms,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResponseKind {
    #[default]
    Deterministic,
    Stochastic,
    Table,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DrawOrder {
    /// Draws in the order they were made.
    #[default]
    Random,
    /// All draws of atom 0 first, then atom 1, and so on.
    Blocked,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrhvParams {
    pub ensemble: EnsembleKind,
    pub atoms: Vec<(HiddenVariableSpec, u64)>,
    pub response: ResponseKind,
    pub visibility: f64,
    pub table: Option<PathBuf>,
    pub order: DrawOrder,
}

impl Default for LrhvParams {
    fn default() -> Self {
        LrhvParams {
            ensemble: EnsembleKind::Uniform,
            atoms: Vec::new(),
            response: ResponseKind::Deterministic,
            visibility: 1.0,
            table: None,
            order: DrawOrder::Random,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HiddenVariableSpec {
    Direction(DirectionSpec),
    Index(u32),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepMetric {
    /// `P(+,+|A,A) + P(-,-|A,A)` of the contextual model at the first setting's `a`.
    #[default]
    Gap,
    /// Empirical CHSH from simulated series at the four configured settings.
    Chsh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepParams {
    pub metric: SweepMetric,
    pub samples: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            metric: SweepMetric::Gap,
            samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelTag,
    pub n_trials: usize,
    pub seed: Option<u64>,
    pub convention: Convention,
    pub output: Option<PathBuf>,
    pub settings: Vec<SettingSpec>,
    pub contextual: ContextualParams,
    pub lrhv: LrhvParams,
    pub purity: PurityConfig,
    pub sweep: SweepParams,
    /// Directory relative paths in the file are resolved against.
    pub base_dir: Option<PathBuf>,
}

struct Entry {
    value: String,
    line: usize,
}

struct Fields {
    map: BTreeMap<String, Entry>,
}

fn parse_number<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("`{v}` is not a valid {}", std::any::type_name::<T>())))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_number(key, v)?;
    if !x.is_finite() {
        return Err(Error::config(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn parse_direction(key: &str, v: &str) -> Result<DirectionSpec> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.len() {
        1 => Ok(DirectionSpec::Planar(parse_f64(key, parts[0])?)),
        3 => {
            let c = [parse_f64(key, parts[0])?, parse_f64(key, parts[1])?, parse_f64(key, parts[2])?];
            let spec = DirectionSpec::Vector(c);
            spec.resolve(Convention::Spin)
                .map_err(|_| Error::config(key, "direction vector has zero length"))?;
            Ok(spec)
        }
        _ => Err(Error::config(key, "expected an angle in degrees or three components `x, y, z`")),
    }
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}", i + 1), "expected `key = value`"));
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(Error::config(format!("line {}", i + 1), "empty key"));
            }
            if let Some(prev) = map.insert(k.clone(), Entry { value: v, line: i + 1 }) {
                return Err(Error::config(k, format!("duplicate key (first on line {})", prev.line)));
            }
        }
        Ok(Fields { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|e| e.value)
    }

    fn take_parsed<T>(&mut self, key: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Option<T>> {
        self.take(key).map(|v| f(key, &v)).transpose()
    }

    /// Removes all `prefix.<id>.<field>` keys, grouped by id.
    fn take_indexed(&mut self, prefix: &str) -> Result<BTreeMap<u32, BTreeMap<String, String>>> {
        let keys: Vec<String> = self.map.keys().filter(|k| k.starts_with(&format!("{prefix}."))).cloned().collect();
        let mut out: BTreeMap<u32, BTreeMap<String, String>> = BTreeMap::new();
        for k in keys {
            let rest = &k[prefix.len() + 1..];
            let Some((id, field)) = rest.split_once('.') else {
                return Err(Error::config(k, format!("expected `{prefix}.<id>.<field>`")));
            };
            let id: u32 = id
                .parse()
                .map_err(|_| Error::config(&k, format!("`{id}` is not a non-negative integer id")))?;
            let v = self.take(&k).expect("key listed above");
            out.entry(id).or_default().insert(field.to_string(), v);
        }
        Ok(out)
    }
}

fn choice<T: Copy>(key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
    options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::config(key, format!("`{v}` is not one of {}", names.join(", ")))
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::parse(text)?;
        let model = match f.take("model") {
            None => return Err(Error::config("model", "missing (quantum, contextual or lrhv)")),
            Some(v) => choice(
                "model",
                &v,
                &[("quantum", ModelTag::Quantum), ("contextual", ModelTag::Contextual), ("lrhv", ModelTag::Lrhv)],
            )?,
        };
        let n_trials = f
            .take_parsed("n_trials", parse_number::<usize>)?
            .ok_or_else(|| Error::config("n_trials", "missing"))?;
        if n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        let seed = f.take_parsed("seed", parse_number::<u64>)?;
        let convention = f
            .take_parsed("convention", |k, v| choice(k, v, &[("spin", Convention::Spin), ("photon", Convention::Photon)]))?
            .unwrap_or_default();
        let output = f.take("output").map(PathBuf::from);

        let mut settings = Vec::new();
        for (id, mut fields) in f.take_indexed("setting")? {
            let key = |field: &str| format!("setting.{id}.{field}");
            let mut dir = |field: &str| -> Result<DirectionSpec> {
                let v = fields.remove(field).ok_or_else(|| Error::config(key(field), "missing"))?;
                parse_direction(&key(field), &v)
            };
            let (a, b) = (dir("a")?, dir("b")?);
            if let Some(extra) = fields.keys().next() {
                return Err(Error::config(key(extra), "unknown setting field (expected a or b)"));
            }
            settings.push(SettingSpec { id, a, b });
        }
        if settings.is_empty() {
            return Err(Error::config("setting", "at least one `setting.<id>.a` / `.b` pair is required"));
        }

        let mut contextual = ContextualParams::default();
        let mut lrhv = LrhvParams::default();
        if model == ModelTag::Contextual {
            let both_eps = f.take_parsed("contextual.epsilon", parse_f64)?;
            let both_eta = f.take_parsed("contextual.eta", parse_f64)?;
            contextual.epsilon_a = f.take_parsed("contextual.epsilon_a", parse_f64)?.or(both_eps).unwrap_or(contextual.epsilon_a);
            contextual.epsilon_b = f.take_parsed("contextual.epsilon_b", parse_f64)?.or(both_eps).unwrap_or(contextual.epsilon_b);
            contextual.eta_a = f.take_parsed("contextual.eta_a", parse_f64)?.or(both_eta).unwrap_or(1.0);
            contextual.eta_b = f.take_parsed("contextual.eta_b", parse_f64)?.or(both_eta).unwrap_or(1.0);
            for (k, e) in [("contextual.epsilon_a", contextual.epsilon_a), ("contextual.epsilon_b", contextual.epsilon_b)] {
                if !(e > 0.0 && e < 2.0) {
                    return Err(Error::config(k, format!("{e} is outside (0, 2)")));
                }
            }
            for (k, e) in [("contextual.eta_a", contextual.eta_a), ("contextual.eta_b", contextual.eta_b)] {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::config(k, format!("{e} is outside (0, 1]")));
                }
            }
            let sigma = f.take_parsed("contextual.sigma", parse_f64)?;
            let profile = f.take("contextual.profile").unwrap_or_else(|| "uniform".into());
            contextual.profile = match (profile.as_str(), sigma) {
                ("uniform", None) => CapProfile::Uniform,
                ("uniform", Some(_)) => {
                    return Err(Error::config("contextual.sigma", "only used with contextual.profile = gaussian"))
                }
                ("gaussian", Some(s)) if s > 0.0 => CapProfile::TruncatedGaussian { sigma: s },
                ("gaussian", Some(s)) => return Err(Error::config("contextual.sigma", format!("{s} is not positive"))),
                ("gaussian", None) => return Err(Error::config("contextual.sigma", "required by the gaussian profile")),
                (other, _) => {
                    return Err(Error::config("contextual.profile", format!("`{other}` is not one of uniform, gaussian")))
                }
            };
        }
        if model == ModelTag::Lrhv {
            lrhv.ensemble = f
                .take_parsed("lrhv.ensemble", |k, v| choice(k, v, &[("uniform", EnsembleKind::Uniform), ("atoms", EnsembleKind::Atoms)]))?
                .unwrap_or_default();
            lrhv.response = f
                .take_parsed("lrhv.response", |k, v| {
                    choice(
                        k,
                        v,
                        &[
                            ("deterministic", ResponseKind::Deterministic),
                            ("stochastic", ResponseKind::Stochastic),
                            ("table", ResponseKind::Table),
                        ],
                    )
                })?
                .unwrap_or_default();
            lrhv.order = f
                .take_parsed("lrhv.order", |k, v| choice(k, v, &[("random", DrawOrder::Random), ("blocked", DrawOrder::Blocked)]))?
                .unwrap_or_default();
            let visibility = f.take_parsed("lrhv.visibility", parse_f64)?;
            lrhv.table = f.take("lrhv.table").map(PathBuf::from);
            for (id, mut fields) in f.take_indexed("lrhv.atom")? {
                let key = |field: &str| format!("lrhv.atom.{id}.{field}");
                let count = fields
                    .remove("count")
                    .map(|v| parse_number::<u64>(&key("count"), &v))
                    .transpose()?
                    .unwrap_or(1);
                if count == 0 {
                    return Err(Error::config(key("count"), "must be at least 1"));
                }
                let lambda = match (fields.remove("lambda"), fields.remove("index")) {
                    (Some(v), None) => HiddenVariableSpec::Direction(parse_direction(&key("lambda"), &v)?),
                    (None, Some(v)) => HiddenVariableSpec::Index(parse_number(&key("index"), &v)?),
                    _ => return Err(Error::config(key("lambda"), "give exactly one of `lambda` or `index`")),
                };
                if let Some(extra) = fields.keys().next() {
                    return Err(Error::config(key(extra), "unknown atom field (expected lambda, index or count)"));
                }
                lrhv.atoms.push((lambda, count));
            }
            match lrhv.ensemble {
                EnsembleKind::Atoms if lrhv.atoms.is_empty() => {
                    return Err(Error::config("lrhv.atom", "the atoms ensemble needs at least one `lrhv.atom.<k>`"))
                }
                EnsembleKind::Uniform if !lrhv.atoms.is_empty() => {
                    return Err(Error::config("lrhv.atom", "atoms given but lrhv.ensemble = uniform"))
                }
                EnsembleKind::Uniform if lrhv.order == DrawOrder::Blocked => {
                    return Err(Error::config("lrhv.order", "blocked order needs an atoms ensemble"))
                }
                _ => {}
            }
            match (lrhv.response, visibility) {
                (ResponseKind::Stochastic, v) => {
                    let v = v.unwrap_or(1.0);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::config("lrhv.visibility", format!("{v} is outside [0, 1]")));
                    }
                    lrhv.visibility = v;
                }
                (_, Some(_)) => {
                    return Err(Error::config("lrhv.visibility", "only used with lrhv.response = stochastic"))
                }
                _ => {}
            }
            let indexed = lrhv.atoms.iter().all(|(l, _)| matches!(l, HiddenVariableSpec::Index(_)));
            let directional = lrhv.atoms.iter().all(|(l, _)| matches!(l, HiddenVariableSpec::Direction(_)));
            match lrhv.response {
                ResponseKind::Table => {
                    if lrhv.table.is_none() {
                        return Err(Error::config("lrhv.table", "required by lrhv.response = table"));
                    }
                    if lrhv.ensemble != EnsembleKind::Atoms || !indexed {
                        return Err(Error::config("lrhv.atom", "tabulated responses need atoms given by `index`"));
                    }
                }
                _ => {
                    if lrhv.table.is_some() {
                        return Err(Error::config("lrhv.table", "only used with lrhv.response = table"));
                    }
                    if !directional {
                        return Err(Error::config("lrhv.atom", "direction-based responses need atoms given by `lambda`"));
                    }
                }
            }
        }

        let mut purity = PurityConfig::default();
        if let Some(a) = f.take_parsed("purity.alpha", parse_f64)? {
            purity.alpha = a;
        }
        if let Some(m) = f.take_parsed("purity.subsamples", parse_number::<usize>)? {
            purity.subsamples = m;
        }
        if let Some(fr) = f.take_parsed("purity.fraction", parse_f64)? {
            purity.fraction = fr;
        }
        purity
            .validate()
            .map_err(|e| Error::config("purity", e.to_string()))?;

        let mut sweep = SweepParams::default();
        if let Some(m) = f.take_parsed("sweep.metric", |k, v| choice(k, v, &[("gap", SweepMetric::Gap), ("chsh", SweepMetric::Chsh)]))? {
            sweep.metric = m;
        }
        if let Some(s) = f.take_parsed("sweep.samples", parse_number::<usize>)? {
            if s < crate::contextual::MIN_SAMPLES {
                return Err(Error::config("sweep.samples", format!("must be at least {}", crate::contextual::MIN_SAMPLES)));
            }
            sweep.samples = s;
        }

        if let Some((k, e)) = f.map.iter().next() {
            let hint = if k.starts_with("contextual.") || k.starts_with("lrhv.") {
                format!("not used by model `{model}`")
            } else {
                "unknown key".to_string()
            };
            return Err(Error::config(k, format!("{hint} (line {})", e.line)));
        }
        Ok(ExperimentConfig {
            model,
            n_trials,
            seed,
            convention,
            output,
            settings,
            contextual,
            lrhv,
            purity,
            sweep,
            base_dir: None,
        })
    }

    /// Fills in a missing seed from the operating system's entropy source.
    pub fn ensure_seed(&mut self) -> u64 {
        *self.seed.get_or_insert_with(rand::random)
    }

    /// Every resolved value in a fixed order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", self.model.to_string());
        kv("n_trials", self.n_trials.to_string());
        if let Some(seed) = self.seed {
            kv("seed", seed.to_string());
        }
        kv(
            "convention",
            match self.convention {
                Convention::Spin => "spin",
                Convention::Photon => "photon",
            }
            .into(),
        );
        if let Some(o) = &self.output {
            kv("output", o.display().to_string());
        }
        for st in &self.settings {
            kv(&format!("setting.{}.a", st.id), st.a.render());
            kv(&format!("setting.{}.b", st.id), st.b.render());
        }
        match self.model {
            ModelTag::Contextual => {
                let c = &self.contextual;
                kv("contextual.epsilon_a", c.epsilon_a.to_string());
                kv("contextual.epsilon_b", c.epsilon_b.to_string());
                kv("contextual.eta_a", c.eta_a.to_string());
                kv("contextual.eta_b", c.eta_b.to_string());
                match c.profile {
                    CapProfile::Uniform => kv("contextual.profile", "uniform".into()),
                    CapProfile::TruncatedGaussian { sigma } => {
                        kv("contextual.profile", "gaussian".into());
                        kv("contextual.sigma", sigma.to_string());
                    }
                }
            }
            ModelTag::Lrhv => {
                let l = &self.lrhv;
                kv(
                    "lrhv.ensemble",
                    match l.ensemble {
                        EnsembleKind::Uniform => "uniform",
                        EnsembleKind::Atoms => "atoms",
                    }
                    .into(),
                );
                for (k, (lambda, count)) in l.atoms.iter().enumerate() {
                    match lambda {
                        HiddenVariableSpec::Direction(d) => kv(&format!("lrhv.atom.{k}.lambda"), d.render()),
                        HiddenVariableSpec::Index(i) => kv(&format!("lrhv.atom.{k}.index"), i.to_string()),
                    }
                    kv(&format!("lrhv.atom.{k}.count"), count.to_string());
                }
                kv(
                    "lrhv.response",
                    match l.response {
                        ResponseKind::Deterministic => "deterministic",
                        ResponseKind::Stochastic => "stochastic",
                        ResponseKind::Table => "table",
                    }
                    .into(),
                );
                if l.response == ResponseKind::Stochastic {
                    kv("lrhv.visibility", l.visibility.to_string());
                }
                if let Some(t) = &l.table {
                    kv("lrhv.table", t.display().to_string());
                }
                kv(
                    "lrhv.order",
                    match l.order {
                        DrawOrder::Random => "random",
                        DrawOrder::Blocked => "blocked",
                    }
                    .into(),
                );
            }
            _ => {}
        }
        kv("purity.alpha", self.purity.alpha.to_string());
        kv("purity.subsamples", self.purity.subsamples.to_string());
        kv("purity.fraction", self.purity.fraction.to_string());
        kv(
            "sweep.metric",
            match self.sweep.metric {
                SweepMetric::Gap => "gap",
                SweepMetric::Chsh => "chsh",
            }
            .into(),
        );
        kv("sweep.samples", self.sweep.samples.to_string());
        s
    }

    /// Replaces one value, re-validating the whole configuration.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut text = self.canonical();
        // later keys win only if the key is absent, so rebuild without it
        let expanded: Vec<String> = match key {
            "contextual.epsilon" => vec!["contextual.epsilon_a".into(), "contextual.epsilon_b".into()],
            "contextual.eta" => vec!["contextual.eta_a".into(), "contextual.eta_b".into()],
            k => vec![k.to_string()],
        };
        text = text
            .lines()
            .filter(|l| {
                let k = l.split('=').next().unwrap_or("").trim();
                !expanded.iter().any(|e| e == k)
            })
            .map(|l| format!("{l}\n"))
            .collect();
        for k in &expanded {
            let _ = writeln!(text, "{k} = {value}");
        }
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = self.base_dir.clone();
        Ok(cfg)
    }

    pub fn pairs(&self) -> Result<Vec<AnalyzerPair>> {
        self.settings
            .iter()
            .map(|s| {
                let key = |f: &str| format!("setting.{}.{f}", s.id);
                let a = s.a.resolve(self.convention).map_err(|e| Error::config(key("a"), e.to_string()))?;
                let b = s.b.resolve(self.convention).map_err(|e| Error::config(key("b"), e.to_string()))?;
                Ok(AnalyzerPair::new(s.id, a, b))
            })
            .collect()
    }

    pub fn contextual_setting(&self, pair: &AnalyzerPair) -> Result<ExperimentSetting> {
        let c = &self.contextual;
        let cap_a = CapDistribution::new(pair.a, c.epsilon_a, c.profile).map_err(|e| Error::config("contextual.epsilon_a", e.to_string()))?;
        let cap_b = CapDistribution::new(pair.b, c.epsilon_b, c.profile).map_err(|e| Error::config("contextual.epsilon_b", e.to_string()))?;
        ExperimentSetting::new(cap_a, cap_b, c.eta_a, c.eta_b).map_err(|e| Error::config("contextual.eta", e.to_string()))
    }

    pub fn ensemble(&self) -> Result<HiddenVariableEnsemble> {
        match self.lrhv.ensemble {
            EnsembleKind::Uniform => Ok(HiddenVariableEnsemble::UniformSphere),
            EnsembleKind::Atoms => {
                let atoms = self
                    .lrhv
                    .atoms
                    .iter()
                    .enumerate()
                    .map(|(k, (l, count))| {
                        let lambda = match l {
                            HiddenVariableSpec::Index(i) => HiddenVariable::Index(*i),
                            HiddenVariableSpec::Direction(d) => HiddenVariable::Direction(
                                d.resolve(self.convention)
                                    .map_err(|e| Error::config(format!("lrhv.atom.{k}.lambda"), e.to_string()))?,
                            ),
                        };
                        Ok(Atom { lambda, count: *count })
                    })
                    .collect::<Result<Vec<_>>>()?;
                HiddenVariableEnsemble::atoms(atoms).map_err(|e| Error::config("lrhv.atom", e.to_string()))
            }
        }
    }

    pub fn response(&self) -> Result<ResponseModel> {
        match self.lrhv.response {
            ResponseKind::Deterministic => Ok(ResponseModel::DeterministicSign),
            ResponseKind::Stochastic => ResponseModel::stochastic(self.lrhv.visibility)
                .map_err(|e| Error::config("lrhv.visibility", e.to_string())),
            ResponseKind::Table => {
                let rel = self.lrhv.table.as_ref().ok_or_else(|| Error::config("lrhv.table", "missing"))?;
                let path = match &self.base_dir {
                    Some(base) if rel.is_relative() => base.join(rel),
                    _ => rel.clone(),
                };
                Ok(ResponseModel::Table(ResponseTable::load(&path)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUANTUM: &str = "\
# two settings
model = quantum
n_trials = 1000
seed = 7
setting.0.a = 0
setting.0.b = 45
setting.1.a = 90   # trailing comment
setting.1.b = 0, 1, 1
";

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(QUANTUM).unwrap();
        assert_eq!(cfg.model, ModelTag::Quantum);
        assert_eq!(cfg.n_trials, 1000);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.settings.len(), 2);
        let pairs = cfg.pairs().unwrap();
        assert!((pairs[1].b.dot(&Direction::Y) - 0.5f64.sqrt()).abs() < 1e-12);
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical(), cfg.canonical());
    }

    fn err_key(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        assert_eq!(err_key("n_trials = 5\nsetting.0.a=0\nsetting.0.b=0"), "model");
        assert_eq!(err_key(&QUANTUM.replace("n_trials = 1000", "n_trials = 0")), "n_trials");
        assert_eq!(err_key(&QUANTUM.replace("setting.1.b = 0, 1, 1", "setting.1.b = 1, 2")), "setting.1.b");
        assert_eq!(err_key(&QUANTUM.replace("setting.1.b = 0, 1, 1", "setting.1.b = 0, 0, 0")), "setting.1.b");
        assert_eq!(err_key(&format!("{QUANTUM}contextual.epsilon = 0.1\n")), "contextual.epsilon");
        assert_eq!(err_key(&format!("{QUANTUM}sead = 3\n")), "sead");
        assert_eq!(err_key(&format!("{QUANTUM}seed = 3\n")), "seed");
        assert_eq!(err_key(&QUANTUM.replace("setting.0.a = 0", "setting.0.a = nan")), "setting.0.a");
        let ctx = QUANTUM.replace("model = quantum", "model = contextual");
        assert_eq!(err_key(&format!("{ctx}contextual.eta = 1.5\n")), "contextual.eta_a");
        assert_eq!(err_key(&format!("{ctx}contextual.profile = gaussian\n")), "contextual.sigma");
        let lrhv = QUANTUM.replace("model = quantum", "model = lrhv");
        assert_eq!(err_key(&format!("{lrhv}lrhv.ensemble = atoms\n")), "lrhv.atom");
        assert_eq!(err_key(&format!("{lrhv}lrhv.response = table\nlrhv.ensemble = atoms\nlrhv.atom.0.index = 0\n")), "lrhv.table");
    }

    #[test]
    fn contextual_and_lrhv_sections() {
        let ctx = format!(
            "{}contextual.epsilon = 0.01\ncontextual.eta_b = 0.5\ncontextual.profile = gaussian\ncontextual.sigma = 0.05\n",
            QUANTUM.replace("model = quantum", "model = contextual")
        );
        let cfg = ExperimentConfig::parse(&ctx).unwrap();
        assert_eq!(cfg.contextual.epsilon_a, 0.01);
        assert_eq!(cfg.contextual.eta_b, 0.5);
        let setting = cfg.contextual_setting(&cfg.pairs().unwrap()[0]).unwrap();
        assert_eq!(setting.detection_probability(), 0.5);
        assert_eq!(ExperimentConfig::parse(&cfg.canonical()).unwrap(), cfg);

        let lrhv = format!(
            "{}lrhv.ensemble = atoms\nlrhv.atom.0.lambda = 10\nlrhv.atom.0.count = 3\nlrhv.atom.1.lambda = 0, 0, -1\nlrhv.order = blocked\n",
            QUANTUM.replace("model = quantum", "model = lrhv")
        );
        let cfg = ExperimentConfig::parse(&lrhv).unwrap();
        assert_eq!(cfg.ensemble().unwrap().total_count(), Some(4));
        assert_eq!(cfg.lrhv.order, DrawOrder::Blocked);
        assert_eq!(ExperimentConfig::parse(&cfg.canonical()).unwrap(), cfg);
    }

    #[test]
    fn photon_convention_doubles_planar_angles() {
        let cfg = ExperimentConfig::parse(&format!("{QUANTUM}convention = photon\n")).unwrap();
        let p = cfg.pairs().unwrap();
        assert!((p[0].b.dot(&Direction::X) - 1.0).abs() < 1e-12);
        // vectors are already Bloch vectors
        assert!((p[1].b.dot(&Direction::Y) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn overrides_revalidate() {
        let ctx = QUANTUM.replace("model = quantum", "model = contextual");
        let cfg = ExperimentConfig::parse(&ctx).unwrap();
        let c2 = cfg.with_override("contextual.epsilon", "0.1").unwrap();
        assert_eq!((c2.contextual.epsilon_a, c2.contextual.epsilon_b), (0.1, 0.1));
        assert!(cfg.with_override("contextual.epsilon", "3").is_err());
        assert_eq!(cfg.with_override("seed", "9").unwrap().seed, Some(9));
    }
}
