//! Run configuration: flat `key = value` lines with dotted section
//! prefixes. `#` starts a comment; blank lines are ignored.
//!
//! ```text
//! out_dir = runs/demo
//! synth.events = 7
//! net.learning_rate = 0.001
//! net.layers = cc:80:5:1, conv:128:5:2, conv:128:5:1, conv:128:5:2, conv:2:3:1
//! split.mode = holdout
//! split.test = ev5, ev6
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use scn_core::cubegen::{window_side, CHANNELS};
use scn_core::gridstore::{DomainGrid, SynthParams};
use scn_core::net::{Architecture, LayerKind, LayerSpec, ScnConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum SplitChoice {
    /// Train on `train`, score on `test`; empty lists mean "all but the
    /// last two events" and "the last two".
    Holdout { train: Vec<String>, test: Vec<String> },
    /// Pool the samples of every event and cross-validate.
    KFold { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    data_dir: Option<PathBuf>,
    model_path: Option<PathBuf>,
    pub grid: DomainGrid,
    pub n_events: usize,
    pub synth: SynthParams,
    pub net: ScnConfig,
    /// Score periodic evaluations on this many held-out samples.
    pub eval_subsample: Option<usize>,
    pub split: SplitChoice,
    eval_events: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = DomainGrid::default();
        RunConfig {
            out_dir: PathBuf::from("out"),
            data_dir: None,
            model_path: None,
            grid,
            n_events: 7,
            synth: SynthParams::default(),
            net: ScnConfig {
                arch: arch_for(&grid, Architecture::default().layers),
                ..ScnConfig::default()
            },
            eval_subsample: None,
            split: SplitChoice::Holdout {
                train: Vec::new(),
                test: Vec::new(),
            },
            eval_events: Vec::new(),
        }
    }
}

fn arch_for(grid: &DomainGrid, layers: Vec<LayerSpec>) -> Architecture {
    Architecture {
        channels: CHANNELS,
        slices: grid.levels,
        side: window_side(grid),
        layers,
    }
}

pub fn event_id(i: usize) -> String {
    format!("ev{i}")
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", n + 1);
            }
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut layers = Architecture::default().layers;

        macro_rules! take {
            ($key:literal, $slot:expr) => {
                if let Some(v) = map.remove($key) {
                    $slot = parse_value(&v).with_context(|| format!("key `{}`", $key))?;
                }
            };
        }
        if let Some(v) = map.remove("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        if let Some(v) = map.remove("data_dir") {
            c.data_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = map.remove("model_path") {
            c.model_path = Some(PathBuf::from(v));
        }
        if let Some(v) = map.remove("seed") {
            c.set_seed(parse_value(&v).context("key `seed`")?);
        }
        take!("threshold", c.net.threshold);

        take!("grid.cell_rows", c.grid.cell_rows);
        take!("grid.cell_cols", c.grid.cell_cols);
        take!("grid.pixels_per_cell_side", c.grid.pixels_per_cell_side);
        take!("grid.levels", c.grid.levels);

        let s = &mut c.synth;
        take!("synth.events", c.n_events);
        take!("synth.frames", s.n_frames);
        take!("synth.storms_min", s.n_storms.0);
        take!("synth.storms_max", s.n_storms.1);
        take!("synth.scale_min_km", s.storm_scale_km.0);
        take!("synth.scale_max_km", s.storm_scale_km.1);
        take!("synth.advection_min", s.advection_km_per_frame.0);
        take!("synth.advection_max", s.advection_km_per_frame.1);
        take!("synth.growth_min", s.growth_rate.0);
        take!("synth.growth_max", s.growth_rate.1);
        take!("synth.decay_min", s.decay_rate.0);
        take!("synth.decay_max", s.decay_rate.1);
        take!("synth.positive_fraction", s.target_positive_fraction);
        take!("synth.seed", s.seed);
        take!("synth.start_time", s.start_time);

        if let Some(v) = map.remove("net.layers") {
            layers = parse_layers(&v).context("key `net.layers`")?;
        }
        let n = &mut c.net;
        take!("net.learning_rate", n.learning_rate);
        take!("net.batch_size", n.batch_size);
        take!("net.iterations", n.iterations);
        take!("net.eval_every", n.eval_every);
        take!("net.seed", n.seed);
        take!("net.class_weight_0", n.class_weights.0);
        take!("net.class_weight_1", n.class_weights.1);
        take!("net.threshold", n.threshold);
        if let Some(v) = map.remove("net.eval_subsample") {
            let m: usize = parse_value(&v).context("key `net.eval_subsample`")?;
            c.eval_subsample = (m > 0).then_some(m);
        }

        let mode = map.remove("split.mode").unwrap_or_else(|| "holdout".into());
        let train = map.remove("split.train").map(|v| parse_list(&v)).unwrap_or_default();
        let test = map.remove("split.test").map(|v| parse_list(&v)).unwrap_or_default();
        let k = map.remove("split.k");
        let split_seed = map.remove("split.seed");
        c.split = match mode.as_str() {
            "holdout" => {
                if k.is_some() {
                    bail!("`split.k` only applies to split.mode = kfold");
                }
                SplitChoice::Holdout { train, test }
            }
            "kfold" => SplitChoice::KFold {
                k: k.map_or(Ok(5), |v| parse_value(&v)).context("key `split.k`")?,
                seed: split_seed
                    .map_or(Ok(c.net.seed), |v| parse_value(&v))
                    .context("key `split.seed`")?,
            },
            other => bail!("unknown split.mode `{other}` (holdout | kfold)"),
        };
        if let Some(v) = map.remove("eval.events") {
            c.eval_events = parse_list(&v);
        }

        if let Some(k) = map.keys().next() {
            bail!("unknown key `{k}`");
        }
        c.net.arch = arch_for(&c.grid, layers);
        c.validate()?;
        Ok(c)
    }

    /// One seed for the generator, initialisation, shuffling and folds.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.net.seed = seed;
        if let SplitChoice::KFold { seed: s, .. } = &mut self.split {
            *s = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.synth.validate()?;
        self.net.validate()?;
        if self.n_events == 0 {
            bail!("synth.events must be >= 1");
        }
        if let SplitChoice::Holdout { train, test } = &self.split {
            if let Some(id) = train.iter().find(|id| test.contains(id)) {
                bail!("event `{id}` is in both split.train and split.test");
            }
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out_dir.join("events"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.out_dir.join("model.scn"))
    }

    pub fn all_events(&self) -> Vec<String> {
        (0..self.n_events).map(event_id).collect()
    }

    /// `(train, test)` event ids for a holdout run.
    pub fn holdout_events(&self) -> (Vec<String>, Vec<String>) {
        let all = self.all_events();
        let (train, test) = match &self.split {
            SplitChoice::Holdout { train, test } => (train.clone(), test.clone()),
            SplitChoice::KFold { .. } => (Vec::new(), Vec::new()),
        };
        let test = if test.is_empty() {
            all[all.len().saturating_sub(2)..].to_vec()
        } else {
            test
        };
        let train = if train.is_empty() {
            all.into_iter().filter(|e| !test.contains(e)).collect()
        } else {
            train
        };
        (train, test)
    }

    pub fn eval_events(&self) -> Vec<String> {
        if self.eval_events.is_empty() {
            self.holdout_events().1
        } else {
            self.eval_events.clone()
        }
    }
}

fn parse_value<T: FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("invalid value `{v}`: {e}"))
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// `kind:maps:kernel:stride`, with kind `cc` (cross-channel 3D) or `conv`.
fn parse_layers(v: &str) -> Result<Vec<LayerSpec>> {
    parse_list(v)
        .iter()
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let [kind, maps, k, s] = parts[..] else {
                bail!("layer `{item}`: expected kind:maps:kernel:stride");
            };
            let (maps, k, s) = (parse_value(maps)?, parse_value(k)?, parse_value(s)?);
            Ok(match kind {
                "cc" => LayerSpec::cross_channel(maps, k, s),
                "conv" => LayerSpec::conv2d(maps, k, s),
                other => bail!("layer `{item}`: unknown kind `{other}` (cc | conv)"),
            })
        })
        .collect()
}

pub fn format_layers(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(|l| {
            let kind = match l.kind {
                LayerKind::CrossChannel3D => "cc",
                LayerKind::Conv2D => "conv",
            };
            format!("{kind}:{}:{}:{}", l.out_maps, l.kernel.0, l.stride)
        })
        .collect::<Vec<_>>()
        .join(", ")
}
