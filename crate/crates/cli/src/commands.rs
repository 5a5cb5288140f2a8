//! Subcommand implementations. Each resolves its configuration fully
//! before touching data or writing anything.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use locspike::energy::{compression_ratio, count_dense_ops, count_snn_ops, dense_maps, CountOptions};
use locspike::event_data::{synthetic_dataset, write_dataset, EventStream, SyntheticSpec};
use locspike::inference::{StreamState, Weighting};
use locspike::kv::KvFile;
use locspike::layers::Axis;
use locspike::model::Model;
use locspike::topology::{build_spatial_graph, build_temporal_graph, default_coords, load_coords, TemporalMode};
use locspike::training::{check_compatible, evaluate, train};
use locspike::{Error, Result};

use crate::config::{check_keys, overrides, with_defaults, TrainRun};
use crate::data;

/// Configuration sources shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    /// Named command-line flags, already rendered as key/value pairs.
    pub flags: KvFile,
}

impl Sources {
    fn resolve(&self, defaults: &[(&str, &str)]) -> Result<KvFile> {
        let kv = overrides(self.config.as_deref(), &self.sets, &self.flags)?;
        let allowed: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
        check_keys(&kv, &allowed)?;
        Ok(with_defaults(&kv, defaults))
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn required(kv: &KvFile, key: &str) -> Result<String> {
    match kv.get(key) {
        Some(v) if !v.is_empty() => Ok(v.to_string()),
        _ => Err(Error::Config(format!("missing required setting `{key}`"))),
    }
}

fn optional(kv: &KvFile, key: &str) -> Option<String> {
    kv.get(key).filter(|v| !v.is_empty()).map(str::to_string)
}

fn opt_parsed<T: std::str::FromStr>(kv: &KvFile, key: &str) -> Result<Option<T>> {
    optional(kv, key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse value `{v}` for key `{key}`")))
        })
        .transpose()
}

/// Prints `text` and copies it to `out` when given.
fn emit(text: &str, out: Option<String>) -> Result<()> {
    print!("{text}");
    match out {
        Some(p) => write(Path::new(&p), text),
        None => Ok(()),
    }
}

fn load_checked(kv: &KvFile) -> Result<(Model, data::Loaded)> {
    let model = Model::load(Path::new(&required(kv, "checkpoint")?))?;
    let loaded = data::load(&required(kv, "data")?)?;
    check_compatible(&model.spec, &loaded.dataset)?;
    Ok((model, loaded))
}

pub fn cmd_train(src: &Sources) -> Result<()> {
    let mut kv = overrides(src.config.as_deref(), &src.sets, &src.flags)?;
    check_keys(&kv, crate::config::TRAIN_KEYS)?;
    let model = required(&kv, "model")?;
    if kv.get("out").is_none() {
        kv.set("out", format!("runs/{model}"));
    }
    let loaded = data::load(&required(&kv, "data")?)?;
    let meta = &loaded.dataset.meta;
    let run = TrainRun::resolve(&kv, (meta.n_taxels, meta.n_steps, meta.n_classes), loaded.coords.clone())?;
    check_compatible(&run.spec, &loaded.dataset)?;

    let outcome = train(&run.spec, &loaded.dataset, &run.train)?;
    create_dir(&run.out)?;
    outcome.model.save(&run.out.join("model.json"))?;
    write(&run.out.join("metrics.csv"), &outcome.report.metrics_csv())?;
    run.to_kv().save(&run.out.join("config.txt"))?;
    let mut summary = String::from("round,test_acc\n");
    for (r, a) in outcome.report.round_accuracy.iter().enumerate() {
        writeln!(summary, "{r},{a:.6}").unwrap();
    }
    writeln!(summary, "mean,{:.6}", outcome.report.mean_test_accuracy()).unwrap();
    write(&run.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub const EVAL_KEYS: &[(&str, &str)] = &[("checkpoint", ""), ("data", ""), ("out", "")];

pub fn cmd_eval(src: &Sources) -> Result<()> {
    let kv = src.resolve(EVAL_KEYS)?;
    let (model, loaded) = load_checked(&kv)?;
    let streams: Vec<&EventStream> = loaded.dataset.streams.iter().collect();
    let summary = evaluate(&model, &streams)?;
    let text = format!(
        "model,dataset,samples,correct,accuracy\n{},{},{},{},{:.6}\n",
        model.spec.arch,
        loaded.dataset.meta.name,
        streams.len(),
        summary.correct,
        summary.accuracy()
    );
    emit(&text, optional(&kv, "out"))
}

pub const STREAM_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("data", ""),
    ("out", "stream_out"),
    ("every", "1"),
    ("psi", ""),
    ("zeta", ""),
];

fn weighting(kv: &KvFile) -> Result<Weighting> {
    match (opt_parsed::<f64>(kv, "psi")?, opt_parsed::<f64>(kv, "zeta")?) {
        (Some(_), Some(_)) => Err(Error::Config("psi and zeta are mutually exclusive".into())),
        (Some(psi), None) => Ok(Weighting::Sigmoid { psi }),
        (None, Some(zeta)) => Ok(Weighting::Linear { zeta }),
        (None, None) => Ok(Weighting::None),
    }
}

pub fn cmd_stream(src: &Sources) -> Result<()> {
    let kv = src.resolve(STREAM_KEYS)?;
    let every: usize = kv.required("every")?;
    if every == 0 {
        return Err(Error::Config("every must be at least 1".into()));
    }
    let weighting = weighting(&kv)?;
    let out = PathBuf::from(required(&kv, "out")?);
    let (model, loaded) = load_checked(&kv)?;
    let streams = &loaded.dataset.streams;
    let n_steps = model.spec.n_steps;
    let emitted = |t: usize| t % every == 0 || t == n_steps;

    let runs = streams
        .par_iter()
        .map(|s| StreamState::new(&model, s, weighting)?.run())
        .collect::<Result<Vec<_>>>()?;

    let k = model.n_classes();
    let mut rows = String::from("sample,label,t");
    for c in 0..k {
        write!(rows, ",score_{c}").unwrap();
    }
    rows.push_str(",prediction\n");
    let mut correct = vec![0usize; n_steps + 1];
    for (s, steps) in streams.iter().zip(&runs) {
        for step in steps.iter().filter(|st| emitted(st.t)) {
            write!(rows, "{},{},{}", s.sample_id, s.label, step.t).unwrap();
            for v in &step.scores {
                write!(rows, ",{v}").unwrap();
            }
            writeln!(rows, ",{}", step.class).unwrap();
            correct[step.t] += usize::from(step.class == s.label);
        }
    }
    let mut acc = String::from("t,accuracy\n");
    let n = streams.len().max(1) as f64;
    for t in (1..=n_steps).filter(|&t| emitted(t)) {
        writeln!(acc, "{t},{:.6}", correct[t] as f64 / n).unwrap();
    }

    create_dir(&out)?;
    write(&out.join("stream.csv"), &rows)?;
    write(&out.join("stream_accuracy.csv"), &acc)?;
    kv.save(&out.join("config.txt"))?;
    println!("t,accuracy");
    println!("{n_steps},{:.6}", correct[n_steps] as f64 / n);
    Ok(())
}

pub const COUNT_KEYS: &[(&str, &str)] = &[
    ("checkpoint", ""),
    ("data", ""),
    ("out", ""),
    ("layers", ""),
    ("strict", "false"),
    ("kernel_window", "true"),
];

pub fn cmd_count_ops(src: &Sources) -> Result<()> {
    let kv = src.resolve(COUNT_KEYS)?;
    let opts = CountOptions {
        strict: kv.required("strict")?,
        kernel_window: kv.required("kernel_window")?,
    };
    let (model, loaded) = load_checked(&kv)?;
    let streams: Vec<&EventStream> = loaded.dataset.streams.iter().collect();
    let snn = count_snn_ops(&model, &streams, opts)?;
    let dense = count_dense_ops(&dense_maps(&model));
    let text = format!(
        "model,dataset,samples,additions,multiplications,dense_additions,dense_multiplications,ratio\n{},{},{},{},{},{},{},{}\n",
        model.spec.arch,
        loaded.dataset.meta.name,
        streams.len(),
        snn.additions,
        snn.multiplications,
        dense.additions,
        dense.multiplications,
        compression_ratio(&dense, &snn)
    );
    emit(&text, optional(&kv, "out"))?;
    eprintln!("note: one-time graph operator precomputation is not counted");
    if let Some(path) = optional(&kv, "layers") {
        let mut layers =
            String::from("axis,index,kind,input_spikes,synaptic_additions,update_additions,multiplications\n");
        for l in &snn.layers {
            let axis = match l.axis {
                Axis::Time => "time",
                Axis::Location => "location",
            };
            writeln!(
                layers,
                "{axis},{},{},{},{},{},{}",
                l.index,
                l.kind.name(),
                l.input_spikes,
                l.synaptic_additions,
                l.update_additions,
                l.multiplications
            )
            .unwrap();
        }
        write(Path::new(&path), &layers)?;
    }
    Ok(())
}

pub const GRAPH_KEYS: &[(&str, &str)] = &[
    ("coords", ""),
    ("taxels", ""),
    ("temporal", ""),
    ("mode", "sparse"),
    ("out", ""),
];

pub fn cmd_graph(src: &Sources) -> Result<()> {
    let kv = src.resolve(GRAPH_KEYS)?;
    let picked = ["coords", "taxels", "temporal"]
        .iter()
        .filter(|k| optional(&kv, k).is_some())
        .count();
    if picked != 1 {
        return Err(Error::Config("give exactly one of coords, taxels or temporal".into()));
    }
    let mut text = String::new();
    if let Some(t) = opt_parsed::<usize>(&kv, "temporal")? {
        let mode: TemporalMode = required(&kv, "mode")?.parse()?;
        let g = build_temporal_graph(t, mode)?;
        text.push_str("src,dst\n");
        for (p, q) in &g.edges {
            writeln!(text, "{p},{q}").unwrap();
        }
    } else {
        let coords = match optional(&kv, "coords") {
            Some(p) => load_coords(Path::new(&p))?,
            None => default_coords(kv.required("taxels")?),
        };
        let g = build_spatial_graph(&coords)?;
        text.push_str("src,dst,weight\n");
        for (i, j, w) in &g.edges {
            writeln!(text, "{i},{j},{w}").unwrap();
        }
    }
    emit(&text, optional(&kv, "out"))
}

pub const SYNTH_KEYS: &[(&str, &str)] = &[
    ("out", ""),
    ("preset", ""),
    ("name", ""),
    ("task", "disjoint"),
    ("n_taxels", "16"),
    ("n_steps", "40"),
    ("n_classes", "3"),
    ("samples_per_class", "60"),
    ("rate_hi", "0.4"),
    ("rate_lo", "0.02"),
    ("seed", "0"),
];

pub fn cmd_gen_synth(src: &Sources) -> Result<()> {
    let kv = src.resolve(SYNTH_KEYS)?;
    let out = PathBuf::from(required(&kv, "out")?);
    let (default_name, spec) = match optional(&kv, "preset") {
        Some(p) => {
            let spec = data::preset(&p).ok_or_else(|| {
                Error::Config(format!("unknown preset `{p}`, expected one of {}", data::PRESETS.join(", ")))
            })?;
            (p, spec)
        }
        None => (
            "synthetic".to_string(),
            SyntheticSpec {
                n_taxels: kv.required("n_taxels")?,
                n_steps: kv.required("n_steps")?,
                n_classes: kv.required("n_classes")?,
                samples_per_class: kv.required("samples_per_class")?,
                rate_hi: kv.required("rate_hi")?,
                rate_lo: kv.required("rate_lo")?,
                seed: kv.required("seed")?,
                task: required(&kv, "task")?.parse()?,
            },
        ),
    };
    if out.join("manifest.txt").exists() {
        return Err(Error::Config(format!(
            "{} already holds a dataset; refusing to overwrite it",
            out.display()
        )));
    }
    let name = optional(&kv, "name").unwrap_or(default_name);
    let ds = synthetic_dataset(&name, &spec)?;
    write_dataset(&out, &ds)?;
    println!("{} samples written to {}", ds.streams.len(), out.display());
    Ok(())
}
