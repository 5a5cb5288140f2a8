use locspike::event_data::{synthetic_dataset, Dataset, SyntheticSpec, SyntheticTask};
use locspike::model::{Architecture, ModelSpec};
use locspike::training::{train, TrainConfig};

fn late_task() -> Dataset {
    let spec = SyntheticSpec {
        n_taxels: 16,
        n_steps: 40,
        n_classes: 3,
        samples_per_class: 60,
        rate_hi: 0.6,
        rate_lo: 0.02,
        seed: 99,
        task: SyntheticTask::LateTiming,
    };
    synthetic_dataset("late-timing", &spec).unwrap()
}

fn accuracy(arch: Architecture, ds: &Dataset) -> f64 {
    let mut spec = ModelSpec::new(arch, 16, 40, 3);
    if arch.family() == locspike::model::Family::Lif {
        spec.hidden = vec![32];
        spec.filters = 8;
    }
    let mut cfg = TrainConfig::for_family(arch.family());
    cfg.epochs = 30;
    cfg.rounds = 3;
    cfg.seed = 5;
    train(&spec, ds, &cfg).unwrap().report.mean_test_accuracy()
}

pub fn hybrid_beats_branch() -> Result<String, String> {
    let ds = late_task();
    let mut lines = Vec::new();
    let mut ok = true;
    for (time, loc, hybrid) in [
        (Architecture::SnnTsrm, Architecture::SnnLsrm, Architecture::HybridSrmFc),
        (Architecture::Ssgnn, Architecture::Tsgnn, Architecture::HybridLifGnn),
    ] {
        let (a, b, h) = (accuracy(time, &ds), accuracy(loc, &ds), accuracy(hybrid, &ds));
        ok &= b > a && h >= a.max(b) - 0.02;
        lines.push(format!("{time} {:.1}%, {loc} {:.1}%, {hybrid} {:.1}%", 100.0 * a, 100.0 * b, 100.0 * h));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}
