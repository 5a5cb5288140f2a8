use locspike::event_data::{synthetic_dataset, Dataset, SyntheticSpec, SyntheticTask};
use locspike::model::{Architecture, ModelSpec};
use locspike::training::{train, TrainConfig};

pub fn three_class_task(seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        n_taxels: 16,
        n_steps: 40,
        n_classes: 3,
        samples_per_class: 60,
        rate_hi: 0.4,
        rate_lo: 0.02,
        seed,
        task: SyntheticTask::Disjoint,
    };
    synthetic_dataset("synthetic-3", &spec).unwrap()
}

pub fn desk_spec(arch: Architecture) -> ModelSpec {
    let mut spec = ModelSpec::new(arch, 16, 40, 3);
    if arch.family() == locspike::model::Family::Lif {
        spec.hidden = vec![32];
        spec.filters = 8;
    }
    spec
}

pub fn desk_config(arch: Architecture) -> TrainConfig {
    let mut cfg = TrainConfig::for_family(arch.family());
    cfg.epochs = 50;
    cfg.rounds = 5;
    cfg.seed = 7;
    cfg
}

fn converge(arch: Architecture) -> (f64, Vec<f64>) {
    let ds = three_class_task(2024);
    let out = train(&desk_spec(arch), &ds, &desk_config(arch)).unwrap();
    (out.report.mean_test_accuracy(), out.report.round_accuracy)
}

pub fn synthetic_convergence() -> Result<String, String> {
    let (srm, srm_rounds) = converge(Architecture::HybridSrmFc);
    let (lif, lif_rounds) = converge(Architecture::HybridLifGnn);
    let detail = format!(
        "mean test accuracy over 5 rounds: Hybrid_SRM_FC {:.1}% {:?}, Hybrid_LIF_GNN {:.1}% {:?}",
        100.0 * srm,
        srm_rounds,
        100.0 * lif,
        lif_rounds
    );
    if srm >= 0.95 && lif >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
