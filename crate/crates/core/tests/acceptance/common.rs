use locspike::event_data::{EventStream, SpikeGrid};
use rand::Rng;

pub fn random_grid(rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> SpikeGrid {
    let mut g = SpikeGrid::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            g.set(r, c, rng.gen::<f64>() < density);
        }
    }
    g
}

pub fn random_stream(n: usize, t: usize, density: f64, rng: &mut impl Rng) -> EventStream {
    let label = 0;
    EventStream::new(random_grid(n, t, density, rng), label, "random").unwrap()
}
