use locspike::energy::{count_dense_ops, count_sample_ops, count_snn_ops, dense_maps, CountOptions, DenseMap};
use locspike::event_data::EventStream;
use locspike::layers::Axis;
use locspike::model::{Architecture, Model, ModelSpec};
use locspike::training::{loss_count, loss_lsrm, loss_mse, loss_weighted};
use ndarray::{array, concatenate, Array2, Axis as NdAxis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::random_stream;

pub fn loss_identities() -> Result<String, String> {
    let e = |r: locspike::Result<f64>| r.map_err(|e| e.to_string());
    let checks = [
        (e(loss_lsrm(&array![[1.0, 1.0, 0.0], [0.0, 1.0, 0.0]], &[2.0, 1.0]))?, 0.0),
        (e(loss_lsrm(&array![[1.0, 1.0, 1.0]], &[1.0]))?, 2.0),
        (e(loss_lsrm(&array![[1.0, 1.0, 1.0, 1.0, 1.0], [0.0; 5]], &[5.0, 2.0]))?, 2.0),
        (e(loss_weighted(&array![[1.0, 1.0, 0.0]], &array![[1.0, 0.0]], 1.0, &[3.0]))?, 0.0),
        (e(loss_weighted(&array![[1.0, 1.0, 1.0, 1.0]], &array![[1.0, 1.0]], 0.5, &[5.0]))?, 0.0),
        (e(loss_mse(&[0.3, 0.7], &[0.3, 0.7]))?, 0.0),
        (e(loss_mse(&[0.5, 0.5], &[1.0, 0.0]))?, 0.5),
        (e(loss_mse(&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0]))?, 1.0),
    ];
    for (i, (got, want)) in checks.iter().enumerate() {
        if got != want {
            return Err(format!("worked example {i}: {got} != {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..100 {
        let k = rng.gen_range(1..6);
        let (t, n) = (rng.gen_range(1..30), rng.gen_range(1..30));
        let bit = |rng: &mut ChaCha8Rng| f64::from(u8::from(rng.gen_bool(0.4)));
        let o1 = Array2::from_shape_simple_fn((k, t), || bit(&mut rng));
        let o2 = Array2::from_shape_simple_fn((k, n), || bit(&mut rng));
        let target: Vec<f64> = (0..k).map(|_| f64::from(rng.gen_range(0..(t + n) as u32))).collect();
        let w = e(loss_weighted(&o1, &o2, 1.0, &target))?;
        let cat = concatenate(NdAxis(1), &[o1.view(), o2.view()]).unwrap();
        let c = e(loss_count(&cat, &target))?;
        if w != c {
            return Err(format!("case {case}: weighted {w} vs concatenated {c}"));
        }
    }
    Ok("8 worked examples exact; lambda=1 equals concatenated count loss on 100 random grids".into())
}

fn input_layer_additions(model: &Model, s: &EventStream, opts: CountOptions) -> Vec<f64> {
    let c = count_sample_ops(model, s, opts).unwrap();
    c.layers.iter().filter(|l| l.index == 0).map(|l| l.additions()).collect()
}

fn small_model(arch: Architecture, rng: &mut ChaCha8Rng) -> Model {
    let (n, t) = (rng.gen_range(2..=8), rng.gen_range(2..=12));
    let mut spec = ModelSpec::new(arch, n, t, rng.gen_range(1..=4));
    spec.hidden = vec![rng.gen_range(2..=10)];
    spec.filters = rng.gen_range(1..=3);
    spec.init_gain = rng.gen_range(1.0..4.0);
    Model::new(spec, rng.gen()).unwrap()
}

pub fn energy_accounting() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut runs, mut additions, mut network_drops, mut trials) = (0, 0.0, 0, 0);
    for arch in locspike::model::Architecture::ALL {
        for _ in 0..10 {
            let model = small_model(arch, &mut rng);
            let (n, t) = (model.spec.n_taxels, model.spec.n_steps);
            let streams: Vec<EventStream> = (0..5).map(|_| random_stream(n, t, 0.3, &mut rng)).collect();
            let refs: Vec<&EventStream> = streams.iter().collect();
            for strict in [false, true] {
                for kernel_window in [false, true] {
                    let opts = CountOptions { strict, kernel_window };
                    let c = count_snn_ops(&model, &refs, opts).map_err(|e| e.to_string())?;
                    if c.multiplications != 0.0 || c.layers.iter().any(|l| l.multiplications != 0.0) {
                        return Err(format!("{arch}: nonzero multiplications"));
                    }
                    let (ta, _) = c.branch_totals(Axis::Time);
                    let (la, _) = c.branch_totals(Axis::Location);
                    if (ta + la - c.additions).abs() > 1e-9 * c.additions.max(1.0) {
                        return Err("totals differ from breakdown".into());
                    }
                    runs += 1;
                    additions += c.additions;
                }
            }
            // Adding input spikes never lowers the work of the layers they feed.
            for s in &streams {
                let mut cur = s.clone();
                let mut grid = cur.grid().clone();
                let mut before = input_layer_additions(&model, &cur, CountOptions::default());
                let mut total_before = count_sample_ops(&model, &cur, CountOptions::default()).unwrap().additions;
                for _ in 0..10 {
                    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..t));
                    grid.set(a, b, true);
                    cur = cur.with_grid(grid.clone());
                    let after = input_layer_additions(&model, &cur, CountOptions::default());
                    if after.iter().zip(&before).any(|(x, y)| x < y) {
                        return Err(format!("{arch}: input-layer additions decreased {before:?} -> {after:?}"));
                    }
                    let total_after = count_sample_ops(&model, &cur, CountOptions::default()).unwrap().additions;
                    network_drops += usize::from(total_after < total_before);
                    trials += 1;
                    before = after;
                    total_before = total_after;
                }
            }
            // Dense baseline: closed form, independent of the data.
            let maps = dense_maps(&model);
            let expected: f64 = maps.iter().map(|m| (m.f_in * m.f_out * m.steps) as f64).sum();
            let d = count_dense_ops(&maps);
            if d.multiplications != expected || d.additions != expected {
                return Err("dense count differs from closed form".into());
            }
        }
    }
    let d = count_dense_ops(&[DenseMap { f_in: 10, f_out: 20, steps: 5 }]);
    if (d.multiplications, d.additions) != (1000.0, 1000.0) {
        return Err("10->20 over 5 steps is not 1000/1000".into());
    }
    Ok(format!(
        "{runs} spiking runs with 0 multiplications (mean {:.0} additions); input-layer tallies monotone over {trials} added spikes \
         (whole-network tally fell in {network_drops} of them); dense counts match F_in*F_out*steps",
        additions / runs as f64
    ))
}
