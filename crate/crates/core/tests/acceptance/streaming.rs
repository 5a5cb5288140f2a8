use locspike::event_data::EventStream;
use locspike::inference::{
    sigmoid_weight, stream_lif, stream_srm, time_weight_lif, time_weight_srm, StreamState, Weighting,
};
use locspike::layers::Axis;
use locspike::model::{Architecture, Fusion, Model, ModelSpec};
use locspike::topology::{LocationOrder, TemporalMode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{random_grid, random_stream};

fn random_model(arch: Architecture, rng: &mut ChaCha8Rng) -> Model {
    let n = rng.gen_range(2..=8);
    let t = rng.gen_range(2..=12);
    let k = rng.gen_range(1..=4);
    let mut spec = ModelSpec::new(arch, n, t, k);
    spec.hidden = vec![rng.gen_range(2..=8)];
    spec.filters = rng.gen_range(1..=3);
    spec.hops = rng.gen_range(0..=3);
    spec.init_gain = rng.gen_range(1.5..4.0);
    spec.srm.kernel_window = rng.gen_range(2..=8);
    spec.lif.decay = rng.gen_range(0.1..0.9);
    spec.fusion = if rng.gen_bool(0.5) { Fusion::Mean } else { Fusion::Max };
    spec.temporal_mode = if rng.gen_bool(0.5) { TemporalMode::Sparse } else { TemporalMode::Dense };
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    spec.order = LocationOrder::custom(perm).unwrap();
    spec.coords = (0..n).map(|_| [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)]).collect();
    Model::new(spec, rng.gen()).unwrap()
}

fn check_stream(model: &Model, s: &EventStream) -> Result<usize, String> {
    let err = |e: locspike::Error| e.to_string();
    let n_steps = s.n_steps();
    let batch = model.forward(s).map_err(err)?;
    let batch_pred = model.predict_output(&batch).map_err(err)?;
    let mut state = StreamState::new(model, s, Weighting::None).map_err(err)?;
    let mut prev_o1: Option<locspike::event_data::SpikeGrid> = None;
    let mut spikes = 0;
    for t in 1..=n_steps {
        let row = state.advance().map_err(err)?;
        let o1 = state.time_output().unwrap();
        // Causality: the time-branch output only grows by one column per step.
        if let Some(p) = &prev_o1 {
            for k in 0..o1.rows() {
                if &o1.row(k)[..t - 1] != p.row(k) {
                    return Err(format!("O_1 at t={t} does not extend O_1 at t={}", t - 1));
                }
            }
        }
        match model.family() {
            locspike::model::Family::Srm => {
                let lit = stream_srm(s, model, t).map_err(err)?;
                if lit.o1.as_ref() != Some(&o1) || lit.counts != row.scores || lit.class != row.class {
                    return Err(format!("incremental and literal Alg. outputs differ at t={t}"));
                }
            }
            locspike::model::Family::Lif => {
                let lit = stream_lif(s, model, t).map_err(err)?;
                if lit.o1 != row.time || lit.o2 != row.location || lit.fused != row.scores || lit.class != row.class {
                    return Err(format!("incremental and literal outputs differ at t={t}"));
                }
            }
        }
        spikes += o1.count_ones();
        prev_o1 = Some(o1);
    }
    let last_o1 = prev_o1.unwrap();
    if batch.time.as_ref() != Some(&last_o1) {
        return Err("time-branch output at t=T differs from batch".into());
    }
    let last_o2 = model.forward_branch(&s.padded_prefix(n_steps), Axis::Location).map_err(err)?;
    if batch.location.as_ref() != Some(&last_o2) {
        return Err("location-branch output at t=T differs from batch".into());
    }
    let end = stream_srm_or_lif_scores(model, s)?;
    if end.0 != batch_pred.scores || end.1 != batch_pred.class {
        return Err("scores at t=T differ from batch prediction".into());
    }
    Ok(spikes)
}

fn stream_srm_or_lif_scores(model: &Model, s: &EventStream) -> Result<(Vec<f64>, usize), String> {
    let rows = StreamState::new(model, s, Weighting::None)
        .and_then(|st| st.run())
        .map_err(|e| e.to_string())?;
    let last = rows.last().unwrap();
    Ok((last.scores.clone(), last.class))
}

pub fn end_of_stream_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut spikes = 0;
    for arch in [Architecture::HybridSrmFc, Architecture::HybridLifGnn] {
        for _ in 0..20 {
            let model = random_model(arch, &mut rng);
            for _ in 0..20 {
                let density = rng.gen_range(0.05..0.6);
                let s = random_stream(model.spec.n_taxels, model.spec.n_steps, density, &mut rng);
                spikes += check_stream(&model, &s)?;
            }
        }
    }
    Ok(format!(
        "20 models x 20 streams per algorithm: t=T equals batch, incremental equals literal at every t ({spikes} time-branch spikes)"
    ))
}

pub fn time_weighting() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tol = 1e-12;
    for _ in 0..1000 {
        let psi = rng.gen_range(-50.0..50.0);
        let total = rng.gen_range(1..500);
        if (sigmoid_weight(psi, total, total) - 0.5).abs() > tol {
            return Err(format!("omega(T) != 0.5 for psi={psi}"));
        }
    }
    let mut checked = 0;
    for _ in 0..500 {
        let k = rng.gen_range(1..6);
        let total = rng.gen_range(1..50);
        let a: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let half = time_weight_lif(&a, &b, 2.0, total, total).map_err(|e| e.to_string())?;
        for i in 0..k {
            if (half[i] - 0.5 * (a[i] + b[i])).abs() > tol {
                return Err("zeta=2, t=T is not an equal split".into());
            }
        }
        let zeta = rng.gen_range(1.0..5.0);
        let t = rng.gen_range(0..=total);
        let w = time_weight_lif(&a, &b, zeta, t, total).map_err(|e| e.to_string())?;
        for i in 0..k {
            if w[i] < a[i].min(b[i]) - tol || w[i] > a[i].max(b[i]) + tol {
                return Err(format!("entry {} outside [{}, {}]", w[i], a[i].min(b[i]), a[i].max(b[i])));
            }
            checked += 1;
        }
        // Sigmoid-weighted counts are convex combinations of the two counts.
        let (g1, g2) = (random_grid(k, total, 0.5, &mut rng), random_grid(k, 7, 0.5, &mut rng));
        let psi = rng.gen_range(-10.0..10.0);
        let wc = time_weight_srm(&g1, &g2, psi, t.max(1), total).map_err(|e| e.to_string())?;
        for i in 0..k {
            let c1 = g1.row(i).iter().map(|&x| f64::from(x)).sum::<f64>();
            let c2 = g2.row(i).iter().map(|&x| f64::from(x)).sum::<f64>();
            if wc.scores[i] < c1.min(c2) - tol || wc.scores[i] > c1.max(c2) + tol {
                return Err("weighted count outside branch counts".into());
            }
        }
    }
    Ok(format!("omega(T)=0.5 on 1000 psi values; equal halves at zeta=2; {checked} entries within convex bounds"))
}
