use locspike::event_data::{transpose, EventStream, SpikeGrid};
use locspike::layers::{Axis, Branch, Layer, LayerKind, LifDense};
use locspike::model::{Architecture, Model, ModelSpec};
use locspike::neurons::{llif_step, srm_forward, tlif_step, LifParams, SrmParams};
use locspike::topology::LocationOrder;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::random_grid;

fn lif_model(axis: Axis, n_taxels: usize, n_steps: usize, w: &Array2<f64>, b: &Array1<f64>, p: &LifParams) -> Model {
    let arch = match axis {
        Axis::Time => Architecture::Ssgnn,
        Axis::Location => Architecture::Tsgnn,
    };
    let mut spec = ModelSpec::new(arch, n_taxels, n_steps, w.nrows());
    spec.order = LocationOrder::identity(n_taxels);
    spec.lif = p.clone();
    let kind = match axis {
        Axis::Time => LayerKind::SsFc,
        Axis::Location => LayerKind::TsFc,
    };
    let branch = Branch {
        axis,
        layers: vec![Layer::Lif(LifDense {
            kind,
            weights: w.clone(),
            bias: b.clone(),
            params: p.clone(),
        })],
    };
    match axis {
        Axis::Time => Model {
            spec,
            time: Some(branch),
            location: None,
        },
        Axis::Location => Model {
            spec,
            time: None,
            location: Some(branch),
        },
    }
}

pub fn transpose_duality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut spikes = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=16);
        let t = rng.gen_range(1..=16);
        let k = rng.gen_range(1..=4);
        let p = LifParams {
            decay: rng.gen_range(0.05..0.95),
            threshold: rng.gen_range(0.2..1.0),
            reset: 0.0,
        };
        let x = EventStream::new(random_grid(n, t, 0.4, &mut rng), 0, "x").unwrap();
        let w = Array2::from_shape_simple_fn((k, n), || rng.gen_range(-0.5..1.0));
        let b = Array1::from_shape_simple_fn(k, || rng.gen_range(-0.1..0.2));
        // Time recurrence on X; location recurrence on transpose(X), whose
        // taxel axis is X's time axis.
        let time_model = lif_model(Axis::Time, n, t, &w, &b, &p);
        let y = EventStream::new(transpose(&x).grid().clone(), 0, "y").unwrap();
        let loc_model = lif_model(Axis::Location, t, n, &w, &b, &p);
        let a = time_model.forward_branch(&x, Axis::Time).map_err(|e| e.to_string())?;
        let c = loc_model.forward_branch(&y, Axis::Location).map_err(|e| e.to_string())?;
        if a != c {
            return Err(format!("case {case}: grids differ"));
        }
        spikes += a.count_ones();
        // Scalar neuron updates agree as well.
        let (mut ut, mut ot, mut ul, mut ol) = (0.0, false, 0.0, false);
        for step in 0..t {
            let drive = rng.gen_range(-0.5..1.5);
            (ut, ot) = tlif_step(ut, ot, drive, &p);
            (ul, ol) = llif_step(ul, ol, drive, &p);
            if ut.to_bits() != ul.to_bits() || ot != ol {
                return Err(format!("case {case}: scalar steps differ at {step}"));
            }
        }
    }
    Ok(format!("200 random grids bit-identical ({spikes} output spikes compared)"))
}

/// Direct evaluation of the kernel sums from their closed forms.
fn srm_oracle(x: &SpikeGrid, w: &Array2<f64>, p: &SrmParams) -> (Array2<f64>, Vec<Vec<bool>>) {
    let eps = |s: usize| -> f64 {
        if s > p.kernel_window {
            return 0.0;
        }
        let r = s as f64 / p.tau_s;
        r * (1.0 - r).exp()
    };
    let eta = |s: usize| -> f64 {
        if s == 0 || s > p.kernel_window {
            return 0.0;
        }
        let r = s as f64 / p.tau_r;
        -2.0 * p.threshold * r * (1.0 - r).exp()
    };
    let (n_out, len) = (w.nrows(), x.cols());
    let mut u = Array2::zeros((n_out, len));
    let mut o = vec![vec![false; len]; n_out];
    for t in 0..len {
        for i in 0..n_out {
            let mut acc = 0.0;
            for j in 0..x.rows() {
                for tp in 0..=t {
                    if x.get(j, tp) == 1 {
                        acc += w[(i, j)] * eps(t - tp);
                    }
                }
            }
            for tp in 0..t {
                if o[i][tp] {
                    acc += eta(t - tp);
                }
            }
            u[(i, t)] = acc;
            o[i][t] = acc >= p.threshold;
        }
    }
    (u, o)
}

pub fn srm_oracle_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut fired = 0;
    for case in 0..300 {
        let n_in = rng.gen_range(1..=3);
        let len = rng.gen_range(1..=8);
        let p = SrmParams {
            threshold: rng.gen_range(0.3..1.5),
            tau_s: rng.gen_range(0.5..3.0),
            tau_r: rng.gen_range(0.5..3.0),
            kernel_window: rng.gen_range(1..=8),
        };
        let x = random_grid(n_in, len, 0.5, &mut rng);
        // One or two layers, at most three neurons in total.
        let widths: Vec<usize> = if rng.gen_bool(0.5) {
            vec![rng.gen_range(1..=3)]
        } else {
            vec![rng.gen_range(1..=2), 1]
        };
        let mut input = x.clone();
        let mut fan_in = n_in;
        for &width in &widths {
            let w = Array2::from_shape_simple_fn((width, fan_in), || rng.gen_range(-1.0..2.0));
            let got = srm_forward(&input, &w, &p).map_err(|e| e.to_string())?;
            let (u, o) = srm_oracle(&input, &w, &p);
            for i in 0..width {
                for t in 0..len {
                    worst = worst.max((got.potentials[(i, t)] - u[(i, t)]).abs());
                    if (got.spikes.get(i, t) == 1) != o[i][t] {
                        return Err(format!("case {case}: spike mismatch at neuron {i}, step {t}"));
                    }
                }
            }
            fired += got.spikes.count_ones();
            for (i, rec) in got.firing.iter().enumerate() {
                let expected: Vec<usize> = (0..len).filter(|&t| o[i][t]).collect();
                if rec.indices() != expected.as_slice() {
                    return Err(format!("case {case}: firing record differs"));
                }
            }
            input = got.spikes;
            fan_in = width;
        }
    }
    if worst <= 1e-12 {
        Ok(format!("300 nets, max potential error {worst:.1e}, {fired} spikes matched"))
    } else {
        Err(format!("max potential error {worst:.3e}"))
    }
}
