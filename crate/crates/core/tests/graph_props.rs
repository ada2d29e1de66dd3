mod common;

use common::random_cliques;
use ggm_ot::graph::{binary_tree_graph, chain_graph, zero_fill, DecomposableGraph};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_from(seed: u64, k: usize, chain: bool) -> DecomposableGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cliques, n) = random_cliques(&mut rng, k, chain);
    DecomposableGraph::from_labels(&cliques, n).unwrap()
}

proptest! {
    #[test]
    fn q_sets_partition_later_cliques(seed in any::<u64>(), k in 1usize..10, chain in any::<bool>()) {
        let g = graph_from(seed, k, chain);
        for kk in 2..=k {
            let q = g.q(kk);
            prop_assert!(q < kk);
            let sep = g.separator(kk);
            let within = |j: usize| sep.iter().all(|v| g.clique(j).contains(v));
            prop_assert!(within(q));
            prop_assert!((1..q).all(|j| !within(j)));
            let holders: Vec<usize> = (1..=k).filter(|&j| g.q_set(j).contains(&kk)).collect();
            prop_assert_eq!(holders, vec![q]);
        }
        prop_assert!(g.q_set(k).is_empty());
    }

    #[test]
    fn separators_are_history_intersections(seed in any::<u64>(), k in 2usize..10, chain in any::<bool>()) {
        let g = graph_from(seed, k, chain);
        for kk in 2..=k {
            let expected: Vec<usize> = g.clique(kk).iter().copied().filter(|v| g.history(kk - 1).contains(v)).collect();
            prop_assert_eq!(g.separator(kk), &expected[..]);
        }
        let mut covered = vec![false; g.n_nodes()];
        for kk in 1..=k {
            for &v in g.clique(kk) {
                covered[v] = true;
            }
        }
        prop_assert!(covered.into_iter().all(|c| c));
    }

    #[test]
    fn zero_fill_is_linear_and_symmetric(a in prop::collection::vec(-5.0f64..5.0, 9), b in prop::collection::vec(-5.0f64..5.0, 9), c in -3.0f64..3.0) {
        let ma = DMatrix::from_row_slice(3, 3, &a);
        let ma = &ma + ma.transpose();
        let mb = DMatrix::from_row_slice(3, 3, &b);
        let source = [1, 4, 6];
        let target = [0, 1, 2, 4, 5, 6];
        let lhs = zero_fill(&(&ma * c + &mb), &source, &target).unwrap();
        let rhs = zero_fill(&ma, &source, &target).unwrap() * c + zero_fill(&mb, &source, &target).unwrap();
        prop_assert!((&lhs - &rhs).abs().max() < 1e-12);
        let sym = zero_fill(&ma, &source, &target).unwrap();
        prop_assert_eq!(sym.transpose(), sym.clone());
        prop_assert_eq!(sym.row(0).iter().copied().filter(|v| *v != 0.0).count(), 0);
        prop_assert_eq!(sym[(3, 5)], ma[(1, 2)]);
    }

    #[test]
    fn generators_validate_round_trip(k in 1usize..20, m in 2usize..7, s_raw in 1usize..6) {
        let s = 1 + s_raw % (m - 1);
        let g = chain_graph(k, m, s).unwrap();
        prop_assert_eq!(g.n_nodes(), k * m - (k - 1) * s);
        let labels: Vec<Vec<usize>> = (1..=k).map(|j| g.clique_labels(j)).collect();
        let again = DecomposableGraph::from_labels(&labels, g.n_nodes()).unwrap();
        for j in 2..=k {
            prop_assert_eq!(again.q(j), j - 1);
            prop_assert_eq!(again.separator(j).len(), s);
        }
        let t = binary_tree_graph(k, 4, 1).unwrap();
        let labels: Vec<Vec<usize>> = (1..=k).map(|j| t.clique_labels(j)).collect();
        let again = DecomposableGraph::from_labels(&labels, t.n_nodes()).unwrap();
        for j in 2..=k {
            prop_assert_eq!(again.q(j), j / 2);
        }
    }
}
