use locspike::topology::{
    build_spatial_graph, build_temporal_graph, neutouch_coords, make_order, Coord, OrderKind, TemporalMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Edge = (usize, usize, f64);

fn all_edges(coords: &[Coord]) -> Vec<Edge> {
    let mut e = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let (dx, dy) = (coords[i][0] - coords[j][0], coords[i][1] - coords[j][1]);
            e.push((i, j, (dx * dx + dy * dy).sqrt()));
        }
    }
    e
}

fn is_spanning_tree(n: usize, edges: &[&Edge]) -> bool {
    // Union by relabelling; n is tiny.
    let mut comp: Vec<usize> = (0..n).collect();
    for &&(a, b, _) in edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca == cb {
            return false;
        }
        for c in comp.iter_mut() {
            if *c == cb {
                *c = ca;
            }
        }
    }
    comp.iter().all(|&c| c == comp[0])
}

/// Exhaustive search over all (n-1)-edge subsets. Among trees of minimum
/// weight, the tie rule keeps the one whose edges, ranked by
/// (weight, lower index, higher index) and sorted from worst to best, form
/// the lexicographically smallest sequence.
fn brute_force_mst(coords: &[Coord]) -> (f64, Vec<(usize, usize)>) {
    let n = coords.len();
    let mut edges = all_edges(coords);
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let m = edges.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut pick = vec![0usize; n - 1];
    fn rec(
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        edges: &[Edge],
        n: usize,
        m: usize,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if depth == n - 1 {
            let chosen: Vec<&Edge> = pick.iter().map(|&i| &edges[i]).collect();
            if !is_spanning_tree(n, &chosen) {
                return;
            }
            let w: f64 = chosen.iter().map(|e| e.2).sum();
            let mut ranks = pick.clone();
            ranks.sort_unstable_by(|a, b| b.cmp(a));
            let better = match best {
                None => true,
                Some((bw, br)) => {
                    let tol = 1e-9;
                    w < *bw - tol || ((w - *bw).abs() <= tol && ranks < *br)
                }
            };
            if better {
                *best = Some((w, ranks));
            }
            return;
        }
        for i in start..m {
            pick[depth] = i;
            rec(i + 1, depth + 1, pick, edges, n, m, best);
        }
    }
    rec(0, 0, &mut pick, &edges, n, m, &mut best);
    let (w, ranks) = best.unwrap();
    let mut set: Vec<(usize, usize)> = ranks.iter().map(|&r| (edges[r].0, edges[r].1)).collect();
    set.sort_unstable();
    (w, set)
}

pub fn mst_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ties = 0;
    for case in 0..100 {
        let n = rng.gen_range(5..=6);
        // Half the layouts sit on a small integer grid to force equal weights.
        let coords: Vec<Coord> = if case % 2 == 0 {
            (0..n).map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]).collect()
        } else {
            (0..n)
                .map(|_| [f64::from(rng.gen_range(0..3)), f64::from(rng.gen_range(0..3))])
                .collect()
        };
        let mut w_sorted: Vec<f64> = all_edges(&coords).iter().map(|e| e.2).collect();
        w_sorted.sort_by(f64::total_cmp);
        if w_sorted.windows(2).any(|p| p[0] == p[1]) {
            ties += 1;
        }
        let g = build_spatial_graph(&coords).map_err(|e| e.to_string())?;
        let (w, set) = brute_force_mst(&coords);
        let mut got: Vec<(usize, usize)> = g.edges.iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect();
        got.sort_unstable();
        if (g.total_weight() - w).abs() > 1e-9 {
            return Err(format!("case {case}: weight {} vs oracle {w}", g.total_weight()));
        }
        if got != set {
            return Err(format!("case {case}: edges {got:?} vs oracle {set:?}"));
        }
    }
    Ok(format!("100 layouts match exhaustive search ({ties} with tied edge weights)"))
}

pub fn graph_counts() -> Result<String, String> {
    for t in 1..=40 {
        let s = build_temporal_graph(t, TemporalMode::Sparse).map_err(|e| e.to_string())?;
        let d = build_temporal_graph(t, TemporalMode::Dense).map_err(|e| e.to_string())?;
        if s.edges.len() != t - 1 || d.edges.len() != t * (t - 1) / 2 {
            return Err(format!("T={t}: {} sparse, {} dense edges", s.edges.len(), d.edges.len()));
        }
    }
    let g = build_spatial_graph(&neutouch_coords()).map_err(|e| e.to_string())?;
    let a = g.adjacency();
    if g.edges.len() != 38 || a != a.t() || !g.is_connected() {
        return Err(format!("39-taxel graph has {} edges", g.edges.len()));
    }
    Ok("temporal graphs T=1..40 have T-1 / T(T-1)/2 edges; 39-taxel MST has 38 edges, symmetric adjacency".into())
}

const ARCH: [usize; 39] = [
    11, 25, 35, 4, 18, 30, 7, 2, 20, 37, 29, 12, 9, 33, 23, 16, 1, 6, 15, 21, 27, 34, 39, 24, 17, 10,
    31, 38, 28, 14, 3, 22, 32, 8, 19, 36, 5, 13, 26,
];
const WHORL: [usize; 39] = [
    21, 15, 16, 23, 27, 24, 17, 6, 9, 12, 20, 29, 33, 34, 31, 28, 22, 14, 10, 1, 2, 7, 18, 30, 37,
    39, 38, 32, 19, 8, 3, 4, 11, 25, 35, 36, 26, 13, 5,
];

pub fn location_orders() -> Result<String, String> {
    let looped: Vec<usize> = (1..=39).collect();
    for (kind, expected) in [
        (OrderKind::Arch, ARCH.to_vec()),
        (OrderKind::Whorl, WHORL.to_vec()),
        (OrderKind::Loop, looped),
    ] {
        let o = make_order(kind, 39, None).map_err(|e| e.to_string())?;
        if o.one_based() != expected {
            return Err(format!("{kind} order differs"));
        }
        let mut sorted = o.one_based();
        sorted.sort_unstable();
        if sorted != (1..=39).collect::<Vec<_>>() {
            return Err(format!("{kind} order is not a bijection"));
        }
    }
    Ok("arch, whorl and loop orders verbatim and bijective on 1..39".into())
}
