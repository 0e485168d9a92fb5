use gridembed_core::carving::{carve, make_color_classes, tgeo_sample, CarvingInput, TGeoParams};
use gridembed_core::decomposition::{random_carving, ClassOrder};
use gridembed_core::embedding::*;
use gridembed_core::generators::er_bounded;
use gridembed_core::graph::{greedy_power_coloring, Bfs};
use gridembed_core::lll::{mt_solve, ConstraintSystem, Sampler};
use gridembed_core::{rng, Graph, Partition};
use proptest::prelude::*;

const INF: u32 = u32::MAX;

/// All-pairs distances by Floyd–Warshall.
fn apsp(g: &Graph) -> Vec<Vec<u32>> {
    let n = g.vertex_count();
    let mut d = vec![vec![INF; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for (u, v) in g.edges() {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if d[k][j] != INF && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn small_graph() -> impl Strategy<Value = Graph> {
    (2usize..40, 1usize..5, any::<u64>()).prop_map(|(n, d, s)| er_bounded(n, d, s))
}

fn carving_tuple(g: &Graph, m: usize, m_cap: u32, seed: u64) -> Vec<Partition> {
    random_carving(g, m, 0.3, m_cap, ClassOrder::default(), seed).unwrap()
}

/// Brute-force `max{ρ : B(v, ρ) ⊆ C_v}` capped at `n`.
fn brute_pad(dist: &[Vec<u32>], p: &Partition, v: usize) -> u32 {
    let n = dist.len() as u32;
    (0..n)
        .filter(|&w| p.cluster_of[w as usize] != p.cluster_of[v])
        .map(|w| dist[v][w as usize])
        .filter(|&d| d != INF)
        .min()
        .map_or(INF, |d| d - 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pad_radii_match_definition(g in small_graph(), seed in any::<u64>()) {
        let dist = apsp(&g);
        for p in carving_tuple(&g, 2, 2, seed) {
            let pad = p.pad_radii(&g);
            for v in 0..g.vertex_count() {
                prop_assert_eq!(pad[v], brute_pad(&dist, &p, v));
            }
        }
    }

    #[test]
    fn nesting_refines_and_inherits(g in small_graph(), seed in any::<u64>()) {
        let fine = carving_tuple(&g, 3, 1, seed);
        let coarse = carving_tuple(&g, 3, 4, seed ^ 1);
        let nested = nest(&g, &fine, &coarse).unwrap();
        for ((p, q), c) in fine.iter().zip(&nested).zip(&coarse) {
            prop_assert!(p.refines(q));
            // Nested clusters are unions of fine clusters inside one coarse cluster,
            // or single fine clusters.
            for cl in &q.clusters {
                let inside = cl.iter().all(|&v| c.cluster_of[v] == c.cluster_of[cl[0]]);
                let one_fine = cl.iter().all(|&v| p.cluster_of[v] == p.cluster_of[cl[0]]);
                prop_assert!(inside || one_fine);
            }
        }
        let r = fine.iter().filter_map(|p| p.max_diam()).max().unwrap_or(0).max(1);
        let dist = apsp(&g);
        for (q, p) in coarse.iter().zip(&nested) {
            for v in 0..g.vertex_count() {
                if brute_pad(&dist, q, v) >= 2 * r {
                    prop_assert!(brute_pad(&dist, p, v) >= r);
                }
            }
        }
    }

    #[test]
    fn psi_is_a_dumpling_contraction(g in small_graph(), seed in any::<u64>(), tmax in 0u32..4) {
        let d = carving_tuple(&g, 2, 1, seed);
        let f = nest(&g, &d, &carving_tuple(&g, 2, 4, seed ^ 7)).unwrap();
        let mut r = rng::stream(seed, &[]);
        let t: Vec<Vec<u32>> = f.iter().map(|q| (0..q.len()).map(|_| rng::below(&mut r, tmax as u64 + 1) as u32).collect()).collect();
        let psi = dumpling_psi(&g, &d, &f, &t).unwrap();
        for i in 0..2 {
            for (u, v) in g.edges() {
                prop_assert!((psi[i][u] - psi[i][v]).abs() <= 1);
                if d[i].cluster_of[u] == d[i].cluster_of[v] {
                    prop_assert_eq!(psi[i][u], psi[i][v]);
                }
                // Vertices of fine clusters touching another coarse cluster are on the boundary.
                if f[i].cluster_of[u] != f[i].cluster_of[v] {
                    prop_assert_eq!(psi[i][u], 0);
                    prop_assert_eq!(psi[i][v], 0);
                }
            }
            prop_assert!(psi[i].iter().all(|&x| x >= 0));
        }
    }

    #[test]
    fn realized_cocycles_satisfy_the_laws(g in small_graph(), seed in any::<u64>()) {
        let mut r = rng::stream(seed, &[]);
        let edges: Vec<_> = g.edges().collect();
        // Potential-derived deltas are consistent by construction.
        let pot: Vec<i64> = (0..g.vertex_count() * 2).map(|_| rng::below(&mut r, 7) as i64 - 3).collect();
        let values = edges.iter().flat_map(|&(u, v)| [pot[2 * v] - pot[2 * u], pot[2 * v + 1] - pot[2 * u + 1]]).collect();
        let c = EdgeCocycle { dim: 2, columns: vec![0, 1], edges: edges.clone(), values };
        let f = realize_cocycle(&g, &c).unwrap();
        let cc = Cocycle::new(&g, &f);
        let n = g.vertex_count();
        for &b in &f.basepoints {
            prop_assert!(f.row(b).iter().all(|&x| x == 0));
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            prop_assert_eq!(cc.delta(u, v).unwrap(), c.values[2 * e..2 * e + 2].to_vec());
        }
        for x in 0..n {
            if let Some(d) = cc.delta(x, x) { prop_assert!(d.iter().all(|&a| a == 0)); }
            for y in 0..n {
                for z in 0..n {
                    if let (Some(a), Some(b), Some(c2)) = (cc.delta(x, y), cc.delta(y, z), cc.delta(x, z)) {
                        prop_assert_eq!(vec![a[0] + b[0], a[1] + b[1]], c2);
                    }
                }
            }
        }
    }

    #[test]
    fn inconsistent_cycles_are_rejected(n in 3usize..20, bump in 1i64..4) {
        let g = gridembed_core::generators::cycle(n);
        let edges: Vec<_> = g.edges().collect();
        let mut values = vec![1i64; edges.len()];
        // The path edges step by 1, so (0, n−1) is consistent at n − 1.
        let last = edges.iter().position(|&e| e == (0, n - 1)).unwrap();
        values[last] = (n - 1) as i64 + bump;
        let c = EdgeCocycle { dim: 1, columns: vec![0], edges, values };
        prop_assert!(matches!(realize_cocycle(&g, &c), Err(gridembed_core::Error::InconsistentCocycle(_, _))));
    }

    #[test]
    fn verifier_matches_brute_force(g in small_graph(), seed in any::<u64>(), r_emp in 1u32..6) {
        let mut r = rng::stream(seed, &[]);
        let n = g.vertex_count();
        let f = GridEmbedding {
            dim: 3,
            columns: vec![0, 2],
            coords: (0..2 * n).map(|_| rng::below(&mut r, 5) as i64).collect(),
            basepoints: vec![],
            schedule: None,
        };
        let rep = verify_embedding(&g, &f, 0.5, r_emp);
        let dist = apsp(&g);
        let linf = |u: usize, v: usize| (0..2).map(|k| (f.coords[2 * u + k] - f.coords[2 * v + k]).abs()).max().unwrap();
        let stretch = g.edges().map(|(u, v)| linf(u, v)).max().unwrap_or(0) as u64;
        prop_assert_eq!(rep.max_edge_stretch, stretch);
        let mut min_ratio: Option<f64> = None;
        let mut max_fail = 0;
        let mut pairs = 0;
        let mut collisions = std::collections::BTreeSet::new();
        for u in 0..n {
            for v in u + 1..n {
                if f.coords[2 * u..2 * u + 2] == f.coords[2 * v..2 * v + 2] {
                    collisions.insert(v);
                }
                let d = dist[u][v];
                if d == INF { continue; }
                pairs += 1;
                let target = (d as f64).sqrt();
                if (linf(u, v) as f64) < target { max_fail = max_fail.max(d); }
                if d >= r_emp {
                    let q = linf(u, v) as f64 / target;
                    min_ratio = Some(min_ratio.map_or(q, |m: f64| m.min(q)));
                }
            }
        }
        prop_assert_eq!(rep.pairs_checked, pairs);
        prop_assert_eq!(rep.min_far_ratio, min_ratio);
        prop_assert_eq!(rep.empirical_threshold, max_fail + 1);
        prop_assert_eq!(rep.injective, collisions.is_empty());
    }

    #[test]
    fn pair_enumeration_matches_brute_force(g in small_graph(), lo in 0u32..4, width in 1u32..5) {
        let hi = lo + width;
        let got = enumerate_pairs(&g, lo as f64, hi as f64, PairSource::Exhaustive, 0);
        let dist = apsp(&g);
        let n = g.vertex_count();
        let want: Vec<(u32, u32)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| dist[u][v] != INF && dist[u][v] > lo && dist[u][v] <= hi)
            .map(|(u, v)| (u as u32, v as u32)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn injective_augmentation(g in small_graph(), s in 1u32..5) {
        // With a constant base map only R ≥ every component diameter keeps
        // far vertices apart.
        let radius = g.vertex_count() as u32;
        let base = GridEmbedding::zero(&g, 2);
        let (f, rep) = injective_from(&g, &base, radius, s, 2.0).unwrap();
        let colors = greedy_power_coloring(&g, radius).into_iter().max().map_or(0, |c| c + 1);
        prop_assert_eq!(rep.colors, colors);
        // Smallest k with (s+1)^k ≥ colors.
        let mut k = 0;
        while ((s as u64) + 1).pow(k) < colors as u64 { k += 1; }
        prop_assert_eq!(rep.k, k as usize);
        let v = verify_embedding_with(&g, &f, 0.5, 1, &VerifyOptions { s, ..VerifyOptions::default() });
        prop_assert!(v.injective, "{:?}", v);
        prop_assert!(v.upper_ok, "{:?}", v);
    }

    #[test]
    fn digits_needed_is_minimal(colors in 0usize..5000, s in 1u32..12) {
        let k = digits_needed(colors, s);
        let base = s as u128 + 1;
        prop_assert!(base.pow(k as u32) >= colors as u128);
        if k > 0 { prop_assert!(base.pow(k as u32 - 1) < colors as u128); }
    }

    #[test]
    fn carving_is_a_bounded_partition(g in small_graph(), m_cap in 0u32..4, seed in any::<u64>()) {
        let tg = TGeoParams::new(0.3, m_cap).unwrap();
        let mut r = rng::stream(seed, &[]);
        let t = (0..g.vertex_count()).map(|_| tgeo_sample(&tg, &mut r)).collect();
        let p = carve(&g, &CarvingInput { m_cap, classes: make_color_classes(&g, m_cap), t }).unwrap();
        let dist = apsp(&g);
        let mut seen = vec![0; g.vertex_count()];
        for c in &p.clusters {
            for &u in c {
                seen[u] += 1;
                for &v in c {
                    prop_assert!(dist[u][v] <= 2 * m_cap);
                }
            }
        }
        prop_assert!(seen.iter().all(|&x| x == 1));
    }

    #[test]
    fn solver_output_satisfies_every_constraint(n in 2usize..30, seed in any::<u64>()) {
        // Random 3-variable "not all equal to 0" constraints over domain 4.
        let mut cs = ConstraintSystem::new();
        let vars: Vec<usize> = (0..n).map(|_| cs.add_variable(Sampler::Uniform(4))).collect();
        let mut r = rng::stream(seed, &[]);
        let mut scopes = Vec::new();
        for _ in 0..n {
            let mut s: Vec<usize> = (0..3).map(|_| vars[rng::below(&mut r, n as u64) as usize]).collect();
            s.sort_unstable();
            s.dedup();
            scopes.push(s.clone());
            cs.add_constraint(&s, |vals: &[u32]| vals.iter().all(|&x| x == 0));
        }
        let solve = mt_solve(&mut cs, &mut r, None);
        prop_assert!(solve.stats.converged);
        for s in scopes {
            prop_assert!(s.iter().any(|&v| solve.values[v] != 0));
        }
    }

    #[test]
    fn bfs_matches_floyd_warshall(g in small_graph(), src in 0usize..40) {
        let src = src % g.vertex_count();
        let dist = apsp(&g);
        let mut bfs = Bfs::new(g.vertex_count());
        bfs.run(&g, src, None);
        for v in 0..g.vertex_count() {
            prop_assert_eq!(bfs.dist(v).unwrap_or(INF), dist[src][v]);
        }
    }
}
