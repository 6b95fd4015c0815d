use hedgeforest::bench::bias_variance_check;
use hedgeforest::data::generate_friedman;
use hedgeforest::forest::{fit_forest, residual_matrix, tree_prediction_matrix, FittedForest, ForestConfig, Node};
use hedgeforest::hedge::{combine, Kappa, WeightVector};
use nalgebra::DMatrix;

fn sse(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum()
}

fn train_test(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let train = generate_friedman(n, 1.0, seed).unwrap();
    let test = generate_friedman(2000, 1.0, seed + 1_000_000).unwrap();
    (train.features, train.target, test.features, test.target)
}

fn test_mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

#[test]
fn leaves_hold_in_bag_means_and_splits_reduce_error() {
    let (x, y, _, _) = train_test(300, 1);
    let forest = fit_forest(&x, &y, &ForestConfig { num_trees: 20, seed: 5, ..Default::default() }).unwrap();
    for tree in &forest.trees {
        // in-bag targets reaching each node, with bootstrap multiplicity
        let mut at_node: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            for _ in 0..tree.in_bag_counts[i] {
                let mut k = 0;
                loop {
                    at_node[k].push(y[i]);
                    match tree.nodes[k] {
                        Node::Leaf { .. } => break,
                        Node::Split { feature, threshold, left, right } => {
                            k = if row[feature] <= threshold { left } else { right };
                        }
                    }
                }
            }
        }
        for (k, node) in tree.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    let m = at_node[k].iter().sum::<f64>() / at_node[k].len() as f64;
                    assert!((value - m).abs() <= 1e-12 * m.abs().max(1.0));
                    assert!(at_node[k].len() >= 5 || k == 0);
                }
                Node::Split { left, right, .. } => {
                    assert!(sse(&at_node[k]) >= sse(&at_node[left]) + sse(&at_node[right]));
                }
            }
        }
    }
}

#[test]
fn many_trees_beat_one_tree() {
    for seed in 0..10 {
        let (x, y, xt, yt) = train_test(1000, seed);
        let big = fit_forest(&x, &y, &ForestConfig { num_trees: 500, seed, ..Default::default() }).unwrap();
        let one = fit_forest(&x, &y, &ForestConfig { num_trees: 1, seed, ..Default::default() }).unwrap();
        let pred = |f: &FittedForest| -> Vec<f64> {
            let rows = xt.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>());
            rows.map(|r| f.predict(&r)).collect()
        };
        let (m_big, m_one) = (test_mse(&pred(&big), &yt), test_mse(&pred(&one), &yt));
        assert!(m_big < m_one, "seed {seed}: {m_big} vs {m_one}");
    }
}

#[test]
fn equal_weight_combination_is_the_forest_mean() {
    let (x, y, xt, _) = train_test(200, 2);
    let forest = fit_forest(&x, &y, &ForestConfig { num_trees: 37, seed: 1, ..Default::default() }).unwrap();
    let m = tree_prediction_matrix(&forest, &xt).unwrap();
    let combined = combine(&WeightVector::equal(37, Kappa::Finite(1.0)), &m).unwrap();
    for i in 0..xt.nrows() {
        let row: Vec<f64> = xt.row(i).iter().copied().collect();
        let mean = m.row(i).mean();
        assert!((combined[i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((forest.predict(&row) - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn bootstrap_leaves_about_a_third_out_of_bag() {
    let expected_in_bag = 1.0 - (1.0 - 1.0 / 1000.0f64).powi(1000);
    for seed in 0..5 {
        let (x, y, _, _) = train_test(1000, seed);
        let forest = fit_forest(&x, &y, &ForestConfig { num_trees: 100, seed, ..Default::default() }).unwrap();
        let r = residual_matrix(&forest, &x, &y).unwrap();
        let oob = r.oob_fractions().unwrap();
        let mean_oob = oob.iter().sum::<f64>() / oob.len() as f64;
        assert!((1.0 - mean_oob - expected_in_bag).abs() < 0.02, "{mean_oob}");
    }
}

#[test]
fn every_residual_column_decomposes_into_bias_and_variance() {
    let (x, y, _, _) = train_test(400, 3);
    let forest = fit_forest(&x, &y, &ForestConfig { num_trees: 100, seed: 3, ..Default::default() }).unwrap();
    let r = residual_matrix(&forest, &x, &y).unwrap();
    for col in r.values.column_iter() {
        let e: Vec<f64> = col.iter().copied().collect();
        let (mse, bias2, var) = bias_variance_check(&e).unwrap();
        assert!((mse - bias2 - var).abs() <= 1e-10);
    }
}
