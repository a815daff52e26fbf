use std::collections::BTreeSet;
use std::sync::Arc;

use mipp::gp::{
    fit_hyperparams, mutual_information, mutual_information_symmetric, sample_environment, Bounds,
    FitOptions, GpModel, Kernel, Point,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grid(w: usize, h: usize) -> Arc<[Point]> {
    (0..w * h).map(|i| [(i % w) as f64, (i / w) as f64]).collect()
}

fn se(k: Kernel, a: Point, b: Point) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    k.signal * k.signal * (-d2 / (2.0 * k.length_scale * k.length_scale)).exp()
}

/// Conditioning through the precision matrix of the joint over `sensed ∪ {t}`.
fn precision_oracle(k: Kernel, locs: &[Point], sensed: &[usize], z: &[f64], t: usize) -> (f64, f64) {
    let jitter = 1e-6 * k.signal * k.signal;
    let ids: Vec<usize> = sensed.iter().copied().chain([t]).collect();
    let m = ids.len();
    let joint = DMatrix::from_fn(m, m, |i, j| {
        se(k, locs[ids[i]], locs[ids[j]]) + if i == j && i < m - 1 { jitter } else { 0.0 }
    });
    let p = joint.lu().try_inverse().unwrap();
    let ptt = p[(m - 1, m - 1)];
    let mean = -(0..m - 1).map(|i| p[(m - 1, i)] * z[i]).sum::<f64>() / ptt;
    (mean, 1.0 / ptt)
}

fn logdet(k: Kernel, locs: &[Point], ids: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let jitter = 1e-6 * k.signal * k.signal;
    let c = DMatrix::from_fn(ids.len(), ids.len(), |i, j| {
        se(k, locs[ids[i]], locs[ids[j]]) + if i == j { jitter } else { 0.0 }
    });
    c.lu().determinant().ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_matches_joint_conditioning(
        w in 1usize..=5, h in 1usize..=5,
        s in 0.5f64..2.0, l in 0.4f64..1.5,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..8),
        values in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let locs = grid(w, h);
        let n = locs.len();
        let sensed: Vec<usize> = picks.iter().map(|p| p.index(n)).collect::<BTreeSet<_>>().into_iter().collect();
        let z = values[..sensed.len()].to_vec();
        let k = Kernel::new(s, l).unwrap();
        let gp = GpModel::new(k, locs.clone(), sensed.clone(), z.clone()).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let post = gp.posterior(&all).unwrap();
        for t in 0..n {
            if sensed.contains(&t) {
                continue;
            }
            let (mean, var) = precision_oracle(k, &locs, &sensed, &z, t);
            prop_assert!((post.mean[t] - mean).abs() < 1e-8, "mean {} vs {}", post.mean[t], mean);
            prop_assert!((post.variance[t] - var).abs() < 1e-8, "var {} vs {}", post.variance[t], var);
        }
    }

    #[test]
    fn evidence_never_increases_variance(
        s in 0.5f64..2.0, l in 0.5f64..3.0,
        picks in prop::collection::vec(0usize..16, 1..10),
    ) {
        let locs = grid(4, 4);
        let k = Kernel::new(s, l).unwrap();
        let mut sensed: Vec<usize> = Vec::new();
        let all: Vec<usize> = (0..16).collect();
        let mut last = GpModel::prior(k, locs.clone()).unwrap().posterior(&all).unwrap().variance;
        for p in picks {
            if sensed.contains(&p) {
                continue;
            }
            sensed.push(p);
            let z = vec![0.3; sensed.len()];
            let var = GpModel::new(k, locs.clone(), sensed.clone(), z).unwrap().posterior(&all).unwrap().variance;
            for (a, b) in var.iter().zip(&last) {
                prop_assert!(*a <= *b + 1e-10);
            }
            last = var;
        }
    }

    #[test]
    fn entropy_chain_rule(
        s in 0.5f64..2.0, l in 0.5f64..2.0,
        a in prop::collection::btree_set(0usize..12, 1..5),
        b in prop::collection::btree_set(0usize..12, 1..5),
    ) {
        let gp = GpModel::prior(Kernel::new(s, l).unwrap(), grid(4, 3)).unwrap();
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().filter(|x| !a.contains(x)).collect();
        let ab: Vec<usize> = a.iter().chain(&b).copied().collect();
        let joint = gp.entropy(&ab).unwrap();
        let split = gp.entropy(&a).unwrap() + gp.conditional_entropy(&b, &a).unwrap();
        prop_assert!((joint - split).abs() < 1e-8);
    }

    #[test]
    fn mi_matches_log_determinants(
        s in 0.5f64..2.0, l in 0.5f64..1.5,
        placed in prop::collection::btree_set(0usize..16, 1..15),
    ) {
        let locs = grid(4, 4);
        let k = Kernel::new(s, l).unwrap();
        let gp = GpModel::prior(k, locs.clone()).unwrap();
        let a: Vec<usize> = placed.into_iter().collect();
        let rest: Vec<usize> = (0..16).filter(|i| !a.contains(i)).collect();
        let all: Vec<usize> = (0..16).collect();
        let oracle = 0.5 * (logdet(k, &locs, &a) + logdet(k, &locs, &rest) - logdet(k, &locs, &all));
        prop_assert!((mutual_information(&gp, &a).unwrap() - oracle).abs() < 1e-6);
        prop_assert!((mutual_information_symmetric(&gp, &a).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn greedy_gain_is_the_mi_increment(
        l in 0.6f64..2.0,
        placed in prop::collection::btree_set(0usize..12, 0..6),
        cand in 0usize..12,
    ) {
        prop_assume!(!placed.contains(&cand));
        let gp = GpModel::prior(Kernel::new(1.0, l).unwrap(), grid(4, 3)).unwrap();
        let placed: Vec<usize> = placed.into_iter().collect();
        let mut with = placed.clone();
        with.push(cand);
        let delta = mutual_information(&gp, &with).unwrap() - mutual_information(&gp, &placed).unwrap();
        prop_assert!((gp.mi_gain(&placed, cand).unwrap() - delta).abs() < 1e-6);
    }
}

#[test]
fn fit_recovers_generating_kernel() {
    let locs = grid(25, 25);
    let truth = Kernel::new(2.0, 3.0).unwrap();
    let env = sample_environment(truth, &locs, 11).unwrap();
    let data: Vec<(Point, f64)> = (0..120)
        .map(|i| {
            let id = (i * 37 + 5) % locs.len();
            (locs[id], env.values[id])
        })
        .collect();
    let fit = fit_hyperparams(&data, Kernel::new(1.0, 1.0).unwrap(), &Bounds::default(), &FitOptions::default())
        .unwrap();
    assert!(!fit.degenerate);
    assert!((fit.kernel.signal - 2.0).abs() / 2.0 < 0.15, "{fit:?}");
    assert!((fit.kernel.length_scale - 3.0).abs() / 3.0 < 0.15, "{fit:?}");
}

#[test]
fn fit_never_loses_to_its_starting_point() {
    let locs = grid(6, 6);
    let env = sample_environment(Kernel::new(1.0, 2.0).unwrap(), &locs, 3).unwrap();
    let data: Vec<(Point, f64)> = (0..36).map(|i| (locs[i], env.values[i])).collect();
    let (p, v): (Vec<Point>, Vec<f64>) = data.iter().copied().unzip();
    for init in [Kernel::new(0.3, 0.7).unwrap(), Kernel::new(5.0, 9.0).unwrap()] {
        let fit = fit_hyperparams(&data, init, &Bounds::default(), &FitOptions::default()).unwrap();
        let start = mipp::gp::log_marginal_likelihood(&p, &v, init, 1e-6).unwrap().0;
        assert!(fit.log_likelihood >= start);
    }
}
