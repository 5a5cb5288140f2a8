//! Run configuration: defaults, then a `key = value` file, then flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use locspike::kv::KvFile;
use locspike::model::{Architecture, ModelSpec};
use locspike::neurons::Surrogate;
use locspike::topology::{load_coords, LocationOrder, OrderKind};
use locspike::training::TrainConfig;
use locspike::{Error, Result};

/// Keys understood by `train`, in echo order.
pub const TRAIN_KEYS: &[&str] = &[
    "model",
    "data",
    "out",
    "n_taxels",
    "n_steps",
    "n_classes",
    "hidden",
    "hops",
    "filters",
    "temporal_mode",
    "fusion",
    "order",
    "coords",
    "surrogate",
    "init_gain",
    "srm.threshold",
    "srm.tau_s",
    "srm.tau_r",
    "srm.kernel_window",
    "lif.decay",
    "lif.threshold",
    "lif.reset",
    "epochs",
    "batch_size",
    "lr",
    "lr_decay",
    "optimizer",
    "l2",
    "lambda",
    "seed",
    "rounds",
    "split",
    "target_true_rate",
    "target_false_rate",
];

/// Overlays `--config` and `--set key=value` pairs, then named flags.
pub fn overrides(file: Option<&Path>, sets: &[String], flags: &KvFile) -> Result<KvFile> {
    let mut kv = match file {
        Some(p) => KvFile::load(p)?,
        None => KvFile::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
        kv.set(k.trim(), v.trim());
    }
    kv.merge(flags);
    Ok(kv)
}

/// Rejects keys outside `allowed`.
pub fn check_keys(kv: &KvFile, allowed: &[&str]) -> Result<()> {
    match kv.keys().find(|k| !allowed.contains(k)) {
        Some(k) => Err(Error::Config(format!("unknown config key `{k}`"))),
        None => Ok(()),
    }
}

/// Fills defaults for keys missing from `kv`.
pub fn with_defaults(kv: &KvFile, defaults: &[(&str, &str)]) -> KvFile {
    let mut out = KvFile::new();
    for (k, v) in defaults {
        out.set(*k, v);
    }
    out.merge(kv);
    out
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value `{value}` for key `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `arch`, `whorl`, `loop`, `identity`, or a comma-separated one-based permutation.
pub fn parse_order(value: &str, n: usize) -> Result<LocationOrder> {
    match value {
        "identity" => Ok(LocationOrder::identity(n)),
        "arch" | "whorl" | "loop" => LocationOrder::named(value.parse::<OrderKind>()?, n),
        list => {
            let one_based = parse_list("order", list)?;
            if one_based.contains(&0) {
                return Err(Error::Order("custom order indices are one-based".into()));
            }
            let order = LocationOrder::custom(one_based.iter().map(|i| i - 1).collect())?;
            if order.len() != n {
                return Err(Error::Order(format!("order has {} entries, N={n}", order.len())));
            }
            Ok(order)
        }
    }
}

fn render_order(order: &LocationOrder) -> String {
    match order.kind() {
        OrderKind::Custom if order.as_slice().iter().enumerate().all(|(i, &p)| i == p) => "identity".into(),
        OrderKind::Custom => order
            .one_based()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(","),
        kind => kind.to_string(),
    }
}

/// Fully resolved `train` configuration.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub data: String,
    pub out: PathBuf,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    /// Coordinate source as given, echoed verbatim.
    pub coords: String,
}

impl TrainRun {
    /// Builds the run from overrides; `dims` and `coords` describe the dataset.
    pub fn resolve(
        kv: &KvFile,
        dims: (usize, usize, usize),
        dataset_coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        check_keys(kv, TRAIN_KEYS)?;
        let arch: Architecture = kv.required("model")?;
        let data: String = kv.required("data")?;
        let out: PathBuf = kv.required("out")?;
        let n = kv.parsed("n_taxels")?.unwrap_or(dims.0);
        let t = kv.parsed("n_steps")?.unwrap_or(dims.1);
        let k = kv.parsed("n_classes")?.unwrap_or(dims.2);
        let mut spec = ModelSpec::new(arch, n, t, k);
        let mut coords = "default".to_string();
        if let Some(c) = dataset_coords {
            spec.coords = c;
            coords = "dataset".into();
        }
        let mut train = TrainConfig::for_family(arch.family());
        for (key, value) in kv.iter() {
            match key {
                "model" | "data" | "out" | "n_taxels" | "n_steps" | "n_classes" => {}
                "hidden" => spec.hidden = parse_list(key, value)?,
                "hops" => spec.hops = parse(key, value)?,
                "filters" => spec.filters = parse(key, value)?,
                "temporal_mode" => spec.temporal_mode = value.parse()?,
                "fusion" => spec.fusion = value.parse()?,
                "order" => spec.order = parse_order(value, n)?,
                "coords" => match value {
                    "default" => {}
                    "dataset" if coords == "dataset" => {}
                    "dataset" => return Err(Error::Config("dataset ships no coordinates".into())),
                    path => {
                        spec.coords = load_coords(Path::new(path))?;
                        coords = path.to_string();
                    }
                },
                "surrogate" => spec.surrogate = value.parse::<Surrogate>()?,
                "init_gain" => spec.init_gain = parse(key, value)?,
                "srm.threshold" => spec.srm.threshold = parse(key, value)?,
                "srm.tau_s" => spec.srm.tau_s = parse(key, value)?,
                "srm.tau_r" => spec.srm.tau_r = parse(key, value)?,
                "srm.kernel_window" => spec.srm.kernel_window = parse(key, value)?,
                "lif.decay" => spec.lif.decay = parse(key, value)?,
                "lif.threshold" => spec.lif.threshold = parse(key, value)?,
                "lif.reset" => spec.lif.reset = parse(key, value)?,
                "epochs" => train.epochs = parse(key, value)?,
                "batch_size" => train.batch_size = parse(key, value)?,
                "lr" => train.lr = parse(key, value)?,
                "lr_decay" => train.lr_decay = parse(key, value)?,
                "optimizer" => train.optimizer = value.parse()?,
                "l2" => train.l2 = parse(key, value)?,
                "lambda" => train.lambda = parse(key, value)?,
                "seed" => train.seed = parse(key, value)?,
                "rounds" => train.rounds = parse(key, value)?,
                "split" => train.split = parse(key, value)?,
                "target_true_rate" => train.target_true_rate = parse(key, value)?,
                "target_false_rate" => train.target_false_rate = parse(key, value)?,
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        spec.validate()?;
        train.validate()?;
        Ok(Self {
            data,
            out,
            spec,
            train,
            coords,
        })
    }

    /// Every resolved key, suitable for reuse as `--config`.
    pub fn to_kv(&self) -> KvFile {
        let (s, c) = (&self.spec, &self.train);
        let mut kv = KvFile::new();
        kv.set("model", s.arch);
        kv.set("data", &self.data);
        kv.set("out", self.out.display());
        kv.set("n_taxels", s.n_taxels);
        kv.set("n_steps", s.n_steps);
        kv.set("n_classes", s.n_classes);
        let hidden: Vec<String> = s.hidden.iter().map(usize::to_string).collect();
        kv.set("hidden", hidden.join(","));
        kv.set("hops", s.hops);
        kv.set("filters", s.filters);
        kv.set("temporal_mode", s.temporal_mode);
        kv.set("fusion", s.fusion);
        kv.set("order", render_order(&s.order));
        kv.set("coords", &self.coords);
        kv.set("surrogate", s.surrogate);
        kv.set("init_gain", s.init_gain);
        kv.set("srm.threshold", s.srm.threshold);
        kv.set("srm.tau_s", s.srm.tau_s);
        kv.set("srm.tau_r", s.srm.tau_r);
        kv.set("srm.kernel_window", s.srm.kernel_window);
        kv.set("lif.decay", s.lif.decay);
        kv.set("lif.threshold", s.lif.threshold);
        kv.set("lif.reset", s.lif.reset);
        kv.set("epochs", c.epochs);
        kv.set("batch_size", c.batch_size);
        kv.set("lr", c.lr);
        kv.set("lr_decay", c.lr_decay);
        kv.set("optimizer", c.optimizer);
        kv.set("l2", c.l2);
        kv.set("lambda", c.lambda);
        kv.set("seed", c.seed);
        kv.set("rounds", c.rounds);
        kv.set("split", c.split);
        kv.set("target_true_rate", c.target_true_rate);
        kv.set("target_false_rate", c.target_false_rate);
        kv
    }
}
