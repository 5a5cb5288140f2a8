use locspike::layers::Retention;
use locspike::model::{Architecture, Fusion, Model, ModelSpec};
use locspike::neurons::{SpikeFn, Surrogate};
use locspike::topology::{Coord, LocationOrder};
use locspike::training::{backward, output_loss, LossSetup, TrainConfig};
use locspike::event_data::EventStream;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::random_stream;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;
// Gradients below this magnitude are compared in absolute terms.
const FLOOR: f64 = 1e-3;
// Instances with a relaxed potential this close to a surrogate kink are redrawn.
const KINK_MARGIN: f64 = 1e-3;

fn relaxed_loss(model: &Model, stream: &EventStream, setup: &LossSetup) -> f64 {
    let spike = SpikeFn::Relaxed(model.spec.surrogate);
    let trace = model.forward_trace(stream, spike, Retention::SpikesOnly).unwrap();
    output_loss(&trace.raw_output(), stream.label, setup).unwrap().0
}

fn near_kink(model: &Model, stream: &EventStream) -> bool {
    let spike = SpikeFn::Relaxed(model.spec.surrogate);
    let trace = model.forward_trace(stream, spike, Retention::Full).unwrap();
    let branches = [(&model.time, &trace.time), (&model.location, &trace.location)];
    for (branch, tr) in branches {
        let (Some(branch), Some(tr)) = (branch, tr) else { continue };
        for (layer, lt) in branch.layers.iter().zip(&tr.layers) {
            let kinks = model.spec.surrogate.kinks(layer.threshold());
            let pots = lt.potentials.as_ref().unwrap();
            if pots.iter().any(|u| kinks.iter().any(|k| (u - k).abs() < KINK_MARGIN)) {
                return true;
            }
        }
    }
    false
}

fn max_fusion_tie(model: &Model, stream: &EventStream) -> bool {
    if model.spec.fusion != Fusion::Max {
        return false;
    }
    let spike = SpikeFn::Relaxed(model.spec.surrogate);
    let raw = model
        .forward_trace(stream, spike, Retention::SpikesOnly)
        .unwrap()
        .raw_output();
    let (Some(a), Some(b)) = (&raw.time, &raw.location) else { return false };
    let ma: Vec<f64> = a.rows().into_iter().map(|r| r.mean().unwrap()).collect();
    let mb: Vec<f64> = b.rows().into_iter().map(|r| r.mean().unwrap()).collect();
    ma.iter().zip(&mb).any(|(x, y)| (x - y).abs() < KINK_MARGIN)
}

/// Compares reverse-mode gradients with central differences on every weight;
/// returns the worst relative error and how many weights were checked and
/// had a non-negligible gradient.
fn check(model: &mut Model, stream: &EventStream, setup: &LossSetup) -> (f64, usize, usize) {
    let spike = SpikeFn::Relaxed(model.spec.surrogate);
    let trace = model.forward_trace(stream, spike, Retention::Full).unwrap();
    let (_, og) = output_loss(&trace.raw_output(), stream.label, setup).unwrap();
    let grads = backward(model, &trace, &og).unwrap();
    let mut worst: f64 = 0.0;
    let (mut total, mut live) = (0, 0);
    for g in 0..grads.len() {
        for i in 0..grads[g].len() {
            let orig = model.params()[g][i];
            model.params_mut()[g][i] = orig + STEP;
            let up = relaxed_loss(model, stream, setup);
            model.params_mut()[g][i] = orig - STEP;
            let down = relaxed_loss(model, stream, setup);
            model.params_mut()[g][i] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let an = grads[g][i];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(FLOOR);
            worst = worst.max(rel);
            total += 1;
            live += usize::from(an.abs() > FLOOR);
        }
    }
    (worst, total, live)
}

fn srm_instance(rng: &mut ChaCha8Rng) -> ModelSpec {
    let arch = *[Architecture::HybridSrmFc, Architecture::SnnTsrm, Architecture::SnnLsrm]
        .choose(rng)
        .unwrap();
    let n = rng.gen_range(2..=3);
    let t = rng.gen_range(3..=5);
    let mut spec = ModelSpec::new(arch, n, t, 2);
    spec.hidden = vec![rng.gen_range(1..=3)];
    spec.srm.tau_s = rng.gen_range(0.8..2.0);
    spec.srm.tau_r = rng.gen_range(0.8..2.0);
    spec.srm.threshold = rng.gen_range(0.3..1.0);
    spec.srm.kernel_window = rng.gen_range(2..=6);
    spec.surrogate = Surrogate::Exponential {
        steepness: rng.gen_range(1.0..4.0),
    };
    spec.init_gain = rng.gen_range(1.5..3.0);
    spec
}

fn lif_instance(rng: &mut ChaCha8Rng) -> ModelSpec {
    let arch = *[Architecture::HybridLifGnn, Architecture::Ssgnn, Architecture::Tsgnn]
        .choose(rng)
        .unwrap();
    let n = rng.gen_range(2..=4);
    let t = rng.gen_range(2..=5);
    let mut spec = ModelSpec::new(arch, n, t, 2);
    spec.hidden = vec![rng.gen_range(1..=3)];
    spec.filters = rng.gen_range(1..=2);
    spec.hops = rng.gen_range(0..=2);
    spec.lif.decay = rng.gen_range(0.1..0.9);
    spec.lif.threshold = rng.gen_range(0.3..0.8);
    spec.lif.reset = rng.gen_range(-0.2..0.2);
    spec.surrogate = Surrogate::Rectangular {
        width: rng.gen_range(0.8..2.0),
    };
    spec.fusion = if rng.gen_bool(0.5) { Fusion::Mean } else { Fusion::Max };
    if rng.gen_bool(0.5) {
        spec.temporal_mode = locspike::topology::TemporalMode::Dense;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    spec.order = LocationOrder::custom(perm).unwrap();
    spec.coords = (0..n)
        .map(|_| -> Coord { [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)] })
        .collect();
    spec.init_gain = rng.gen_range(1.0..3.0);
    spec
}

struct Summary {
    worst: f64,
    drawn: usize,
    weights: usize,
    live: usize,
}

fn run(family_spec: fn(&mut ChaCha8Rng) -> ModelSpec, seed: u64) -> Result<Summary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut accepted, mut drawn, mut worst) = (0, 0, 0.0f64);
    let (mut weights, mut live) = (0, 0);
    while accepted < 50 {
        drawn += 1;
        if drawn > 2000 {
            return Err(format!("only {accepted} instances away from surrogate kinks"));
        }
        let spec = family_spec(&mut rng);
        let mut model = Model::new(spec.clone(), rng.gen()).unwrap();
        let mut stream = random_stream(spec.n_taxels, spec.n_steps, 0.5, &mut rng);
        stream.label = rng.gen_range(0..spec.n_classes);
        if near_kink(&model, &stream) || max_fusion_tie(&model, &stream) {
            continue;
        }
        let mut cfg = TrainConfig::for_family(spec.arch.family());
        cfg.lambda = rng.gen_range(0.3..1.5);
        let setup = LossSetup::new(&model, &cfg);
        let (w, total, l) = check(&mut model, &stream, &setup);
        worst = worst.max(w);
        weights += total;
        live += l;
        accepted += 1;
    }
    Ok(Summary {
        worst,
        drawn,
        weights,
        live,
    })
}

pub fn gradient_check() -> Result<String, String> {
    let srm = run(srm_instance, 11)?;
    let lif = run(lif_instance, 12)?;
    let detail = format!(
        "50 instances per stack ({} and {} drawn); worst relative error SRM {:.2e} ({}/{} weights with |g|>{FLOOR}), LIF-GNN {:.2e} ({}/{} weights)",
        srm.drawn, lif.drawn, srm.worst, srm.live, srm.weights, lif.worst, lif.live, lif.weights
    );
    let enough_signal = srm.live * 4 > srm.weights && lif.live * 4 > lif.weights;
    if srm.worst <= TOL && lif.worst <= TOL && enough_signal {
        Ok(detail)
    } else {
        Err(detail)
    }
}
