use netlasso::datasets::{parse_csv, save_csv, LabeledPoints};
use netlasso::{
    adjusted_rand_index, directional_derivative, extract_partition, prox_trimmed, trimmed_norm, Blocks, Graph,
    Partition, Points, WeightScheme,
};
use proptest::prelude::*;

fn blocks(max_m: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_m, 1usize..=3).prop_flat_map(|(m, p)| (Just(m), Just(p), prop::collection::vec(-5.0f64..5.0, m * p)))
}

fn labels(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..=max_n).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn ari_is_symmetric_and_bounded((x, y) in labels(30)) {
        let (px, py) = (Partition::from_raw(&x), Partition::from_raw(&y));
        let a = adjusted_rand_index(&px, &py).unwrap();
        let b = adjusted_rand_index(&py, &px).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
    }

    #[test]
    fn ari_ignores_label_names((x, y) in labels(30), shift in 1usize..10) {
        let (px, py) = (Partition::from_raw(&x), Partition::from_raw(&y));
        let renamed: Vec<usize> = x.iter().map(|&l| (l + shift) * 7).collect();
        let pr = Partition::from_raw(&renamed);
        prop_assert!(pr.same_as(&px));
        let a = adjusted_rand_index(&px, &py).unwrap();
        let b = adjusted_rand_index(&pr, &py).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn prox_never_worse_than_identity_or_zero((m, p, data) in blocks(8), k in 0usize..9, lambda in 0.01f64..10.0) {
        let a = Blocks::from_flat(m, p, data.clone()).unwrap();
        let (z, _) = prox_trimmed(&a, k, lambda).unwrap();
        let obj = |zs: &[f64], zb: &Blocks| {
            0.5 * zs.iter().zip(&data).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() + lambda * trimmed_norm(zb, k)
        };
        let got = obj(z.as_slice(), &z);
        let zero = Blocks::from_flat(m, p, vec![0.0; m * p]).unwrap();
        prop_assert!(got <= obj(a.as_slice(), &a) + 1e-12);
        prop_assert!(got <= obj(zero.as_slice(), &zero) + 1e-12);
    }

    #[test]
    fn prox_keeps_largest_blocks((m, p, data) in blocks(8), k in 0usize..9, lambda in 0.01f64..10.0) {
        let a = Blocks::from_flat(m, p, data).unwrap();
        let (z, _) = prox_trimmed(&a, k, lambda).unwrap();
        let norms = a.block_norms();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
        // strictly largest blocks are copied unchanged
        for &b in order.iter().take(k.min(m)) {
            if order.iter().skip(k.min(m)).all(|&o| norms[o] < norms[b]) {
                prop_assert_eq!(z.block(b), a.block(b));
            }
        }
        for b in 0..m {
            prop_assert!(norm(z.block(b)) <= norms[b] + 1e-12);
        }
    }

    #[test]
    fn trimmed_norm_decreases_in_k((m, p, data) in blocks(8)) {
        let z = Blocks::from_flat(m, p, data).unwrap();
        let vals: Vec<f64> = (0..=m + 1).map(|k| trimmed_norm(&z, k)).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert_eq!(vals[m], 0.0);
    }

    #[test]
    fn directional_derivative_is_positively_homogeneous(
        (m, p, data) in blocks(6),
        dir in prop::collection::vec(-1.0f64..1.0, 18),
        k in 0usize..7,
        c in 0.1f64..10.0,
    ) {
        let z = Blocks::from_flat(m, p, data).unwrap();
        let v = Blocks::from_flat(m, p, dir[..m * p].to_vec()).unwrap();
        let cv = Blocks::from_flat(m, p, dir[..m * p].iter().map(|x| c * x).collect()).unwrap();
        let d1 = directional_derivative(&z, &v, k, 0.0).unwrap();
        let d2 = directional_derivative(&z, &cv, k, 0.0).unwrap();
        prop_assert!((c * d1 - d2).abs() <= 1e-9 * (1.0 + d2.abs()));
    }

    #[test]
    fn difference_operator_adjoint(n in 2usize..8, p in 1usize..3, seed in prop::collection::vec(-3.0f64..3.0, 64)) {
        let graph = Graph::complete(n, WeightScheme::Uniform).unwrap();
        let op = graph.difference_operator(p);
        let x = Points::from_flat(n, p, seed[..n * p].to_vec()).unwrap();
        let m = graph.m();
        let zdata: Vec<f64> = (0..m * p).map(|i| seed[(i * 7 + 3) % seed.len()]).collect();
        let z = Blocks::from_flat(m, p, zdata).unwrap();
        let dx = op.apply(&x).unwrap();
        let dtz = op.apply_transpose(&z).unwrap();
        let lhs: f64 = dx.as_slice().iter().zip(z.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.as_slice().iter().zip(dtz.as_slice()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn partition_follows_node_relabelling(levels in prop::collection::vec(0usize..4, 3..12), rot in 0usize..12) {
        let n = levels.len();
        let x = Points::from_flat(n, 1, levels.iter().map(|&l| l as f64).collect()).unwrap();
        let graph = Graph::complete(n, WeightScheme::Uniform).unwrap();
        let part = extract_partition(&x, &graph, 1e-6).unwrap();
        prop_assert!(part.same_as(&Partition::from_raw(&levels)));
        let rotated: Vec<usize> = (0..n).map(|i| levels[(i + rot) % n]).collect();
        let xr = Points::from_flat(n, 1, rotated.iter().map(|&l| l as f64).collect()).unwrap();
        let pr = extract_partition(&xr, &graph, 1e-6).unwrap();
        let back: Vec<usize> = (0..n).map(|i| pr.labels()[(i + n - rot % n) % n]).collect();
        prop_assert!(Partition::from_raw(&back).same_as(&part));
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 2), 1..20), with_labels: bool) {
        let n = rows.len();
        let pts = Points::from_rows(&rows).unwrap();
        let lab = with_labels.then(|| Partition::from_raw(&(0..n).map(|i| i % 3).collect::<Vec<_>>()));
        let data = LabeledPoints::new(pts.clone(), lab.clone()).unwrap();
        let mut buf = Vec::new();
        save_csv(&data, &mut buf).unwrap();
        let back = parse_csv::<f64>(std::str::from_utf8(&buf).unwrap(), with_labels).unwrap();
        prop_assert_eq!(back.points.as_slice(), pts.as_slice());
        if let Some(l) = lab {
            prop_assert!(back.labels.unwrap().same_as(&l));
        }
    }
}
