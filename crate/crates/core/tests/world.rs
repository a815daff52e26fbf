use mipp::world::{GridWorld, Path};
use proptest::prelude::*;

/// All-pairs costs by Floyd–Warshall over the grid's current edges.
fn floyd(w: &GridWorld) -> Vec<Vec<f64>> {
    let n = w.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
        for j in w.neighbors(i) {
            d[i][j] = w.edge_cost(i, j).unwrap();
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn scrambled(w: usize, h: usize, walks: &[(usize, usize)], cuts: &[usize]) -> GridWorld {
    let mut g = GridWorld::new(w, h, 1.0).unwrap();
    let n = g.len();
    for (k, &(a, b)) in walks.iter().enumerate() {
        let path = g.shortest_path(a % n, b % n).unwrap();
        g.inflate_traversed(&path, 1.5 + (k % 3) as f64).unwrap();
    }
    for &c in cuts {
        let from = c % n;
        let first = g.neighbors(from).next();
        if let Some(to) = first {
            g.remove_edge(from, to);
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dijkstra_matches_floyd(
        w in 1usize..6, h in 1usize..6,
        walks in prop::collection::vec((0usize..36, 0usize..36), 0..5),
        cuts in prop::collection::vec(0usize..36, 0..3),
    ) {
        let g = scrambled(w, h, &walks, &cuts);
        let oracle = floyd(&g);
        for s in 0..g.len() {
            let from = g.costs_from(s).unwrap();
            let to = g.costs_to(s).unwrap();
            for v in 0..g.len() {
                prop_assert!((from[v] - oracle[s][v]).abs() < 1e-9 || from[v] == oracle[s][v]);
                prop_assert!((to[v] - oracle[v][s]).abs() < 1e-9 || to[v] == oracle[v][s]);
                if oracle[s][v].is_finite() {
                    let p = g.shortest_path(s, v).unwrap();
                    prop_assert_eq!(p.nodes[0], s);
                    prop_assert_eq!(*p.nodes.last().unwrap(), v);
                    prop_assert!((g.path_cost(&p.nodes).unwrap() - oracle[s][v]).abs() < 1e-9);
                    prop_assert!((p.cost - oracle[s][v]).abs() < 1e-9);
                } else {
                    prop_assert!(g.shortest_path(s, v).is_err());
                }
            }
        }
    }

    #[test]
    fn partition_is_an_exact_cover(w in 1usize..30, h in 1usize..30, m in 1usize..6, f in 1usize..12) {
        prop_assume!(m <= w && f <= h);
        let mut g = GridWorld::new(w, h, 1.0).unwrap();
        g.partition(m, f).unwrap();
        let mut seen = vec![0u8; g.len()];
        for (area, subs) in g.areas().iter().zip(g.subareas()) {
            let mut joined: Vec<usize> = subs.concat();
            joined.sort_unstable();
            prop_assert_eq!(&joined, area);
            for &id in area {
                seen[id] += 1;
            }
            let sizes: Vec<usize> = subs.iter().map(Vec::len).collect();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            // rows per subarea differ by at most one
            prop_assert!(spread <= area.len() / h);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn inflation_only_touches_walked_edges(w in 2usize..6, h in 2usize..6, a in 0usize..36, b in 0usize..36) {
        let mut g = GridWorld::new(w, h, 1.0).unwrap();
        let n = g.len();
        let path = g.shortest_path(a % n, b % n).unwrap();
        g.inflate_traversed(&path, 3.0).unwrap();
        let walked: std::collections::HashSet<(usize, usize)> = path
            .nodes
            .windows(2)
            .flat_map(|p| [(p[0], p[1]), (p[1], p[0])])
            .collect();
        for u in 0..n {
            for v in g.neighbors(u).collect::<Vec<_>>() {
                let expected = if walked.contains(&(u, v)) { 3.0 } else { 1.0 };
                prop_assert_eq!(g.edge_cost(u, v).unwrap(), expected);
            }
        }
    }
}

#[test]
fn concatenated_paths_share_the_joint() {
    let g = GridWorld::new(5, 5, 1.0).unwrap();
    let p = g.shortest_path(0, 12).unwrap().concat(&g.shortest_path(12, 24).unwrap());
    assert_eq!(p.nodes.len(), 9);
    assert_eq!(p.cost, 8.0);
    assert_eq!(Path::trivial(3).concat(&Path::trivial(3)).nodes, vec![3]);
}
