mod common;

use bpi_core::bench::low_rank_matrix;
use bpi_core::impute::{ImputerKind, SoftImputeParams};
use bpi_core::monotone::{detect_monotone, generate_monotone_missing, partition_blocks};
use bpi_core::pca::{fit_pca, transform, RetentionRule};
use bpi_core::pipeline::{
    baseline_impute_then_pca, bpi_reduce, bpi_reduce_impute, compare_ev, stack_with_missing, BlockRetention,
};
use bpi_core::MaskedMatrix;
use common::*;
use ndarray::{s, Array2};
use rand::Rng;

fn sylvester(order: usize) -> Array2<f64> {
    let mut h = Array2::from_elem((1, 1), 1.0);
    while h.nrows() < order {
        let n = h.nrows();
        let mut next = Array2::zeros((2 * n, 2 * n));
        next.slice_mut(s![..n, ..n]).assign(&h);
        next.slice_mut(s![..n, n..]).assign(&h);
        next.slice_mut(s![n.., ..n]).assign(&h);
        next.slice_mut(s![n.., n..]).assign(&(-&h));
        h = next;
    }
    h
}

#[test]
fn toy_stack_matches_displayed_pattern() {
    let z = stack_with_missing(&toy_scores()).unwrap();
    assert_eq!(z.n_samples(), 7);
    assert_eq!(z.n_features(), 4);
    let pattern: Vec<String> =
        (0..7).map(|i| (0..4).map(|j| if z.is_observed(i, j) { 'o' } else { '*' }).collect()).collect();
    assert_eq!(pattern, ["oooo", "oooo", "oooo", "ooo*", "ooo*", "oo**", "oo**"]);
    assert_eq!(z.missing_count(), 6);
    assert_eq!(z.get(0, 0), Some(0.5));
    assert_eq!(z.get(4, 2), Some(0.3));
    assert_eq!(z.get(2, 3), Some(1.0));
    assert!(z.missing_count() < toy().missing_count());
}

#[test]
fn toy_reduction_has_the_same_geometry() {
    let ds = detect_monotone(&toy()).unwrap();
    let stack = bpi_reduce(&ds, &BlockRetention::fixed(&[2, 1, 1])).unwrap();
    assert_eq!(stack.q(), vec![2, 1, 1]);
    assert_eq!(stack.z_star.mask(), stack_with_missing(&toy_scores()).unwrap().mask());
}

#[test]
fn missing_count_matches_counting_oracle() {
    let mut r = rng(30);
    for _ in 0..100 {
        let k = r.random_range(1..5);
        let mut counts: Vec<usize> = (0..k).map(|_| r.random_range(1..20)).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let q: Vec<usize> = (0..k).map(|_| r.random_range(1..4)).collect();
        let scores: Vec<Array2<f64>> = counts.iter().zip(&q).map(|(&n, &w)| uniform(&mut r, n, w)).collect();
        let z = stack_with_missing(&scores).unwrap();
        let oracle: usize = counts.iter().zip(&q).map(|(&n, &w)| w * (counts[0] - n)).sum();
        assert_eq!(z.missing_count(), oracle);
    }
}

#[test]
fn contract_on_three_block_dataset() {
    let mut r = rng(31);
    let x = low_rank_matrix(300, 40, 6, 3) + uniform(&mut r, 300, 40) * 0.1;
    let m = generate_monotone_missing(x.view(), &[8, 8], 4).unwrap();
    let ds = detect_monotone(&m).unwrap();
    assert_eq!(ds.spec.k(), 3);
    let stack =
        bpi_reduce_impute(&ds, &BlockRetention::uniform(RetentionRule::VarianceTarget(0.95)), &ImputerKind::Mean)
            .unwrap();
    let z = stack.z.as_ref().unwrap();
    assert!(z.iter().all(|v| v.is_finite()));
    assert_eq!(z.ncols(), stack.q().iter().sum::<usize>());
    for ((v, &obs), out) in stack.z_star.values().iter().zip(stack.z_star.mask()).zip(z.iter()) {
        if obs {
            assert_eq!(v.to_bits(), out.to_bits());
        }
    }
    let blocks = partition_blocks(&ds);
    for (i, block) in blocks.iter().enumerate() {
        let scores = transform(&stack.block_models[i], block.view()).unwrap();
        let range = stack.block_score_ranges[i].clone();
        assert_eq!(z.slice(s![..block.nrows(), range]), scores);
    }
    assert!(stack.z_star.missing_count() < ds.data.missing_count());
}

#[test]
fn single_block_equals_plain_pca() {
    let mut r = rng(32);
    for p in [7, 1] {
        let x = uniform(&mut r, 58, p);
        let ds = detect_monotone(&MaskedMatrix::complete(x.clone())).unwrap();
        for rule in [RetentionRule::KeepAll, RetentionRule::FixedDim(3), RetentionRule::VarianceTarget(0.8)] {
            let stack = bpi_reduce_impute(&ds, &BlockRetention::exact(rule), &ImputerKind::Mean).unwrap();
            let base = baseline_impute_then_pca(&ds, &ImputerKind::Mean, rule).unwrap();
            assert_eq!(stack.z.as_ref().unwrap(), &base.scores);
            let direct = transform(&fit_pca(x.view(), rule).unwrap(), x.view()).unwrap();
            assert_eq!(stack.z.unwrap(), direct);
        }
    }
}

#[test]
fn lossless_baseline_reconstructs_mean_completion() {
    let mut r = rng(33);
    let st = Staircase { n: 30, widths: vec![3, 2], counts: vec![30, 18] };
    let m = st.masked(uniform(&mut r, 30, 5));
    let ds = detect_monotone(&m).unwrap();
    let base = baseline_impute_then_pca(&ds, &ImputerKind::Mean, RetentionRule::KeepAll).unwrap();
    let back = bpi_core::pca::inverse_transform(&base.model, base.scores.view()).unwrap();
    let want = bpi_core::impute::impute_mean(&ds.data).unwrap();
    assert!((&back - &want).iter().all(|d| d.abs() < 1e-8));
}

#[test]
fn explained_variance_of_diagonal_population() {
    let h = sylvester(8);
    let lambdas = [4.0, 3.0, 2.0, 1.0];
    let mut rows = Array2::from_elem((12, 4), f64::NAN);
    for (j, l) in lambdas.iter().enumerate() {
        let scale = (l * 7.0 / 8.0f64).sqrt();
        for i in 0..8 {
            rows[[i, j]] = h[[i, j + 1]] * scale;
        }
    }
    rows.slice_mut(s![8.., ..2]).fill(0.0);
    let ds = detect_monotone(&MaskedMatrix::from_nan(rows)).unwrap();
    assert_eq!(ds.spec.widths(), vec![2, 2]);
    let cmp = compare_ev(&ds, &BlockRetention::fixed(&[1, 1])).unwrap();
    assert!((cmp.block_ev[0] - 4.0 / 7.0).abs() < 1e-12);
    assert!((cmp.block_ev[1] - 2.0 / 3.0).abs() < 1e-12);
    assert!((cmp.mean_ev - 13.0 / 21.0).abs() < 1e-12);

    let keep = compare_ev(&ds, &BlockRetention::exact(RetentionRule::KeepAll)).unwrap();
    assert_eq!(keep.block_ev, vec![1.0, 1.0]);
}

#[test]
fn reduction_shrinks_missing_cells_on_generated_data() {
    let mut r = rng(34);
    for trial in 0..30 {
        let n = r.random_range(40..120);
        let counts: Vec<usize> = (0..3).map(|_| r.random_range(5..10)).collect();
        let p = counts.iter().sum::<usize>() + r.random_range(5..10);
        let x = uniform(&mut r, n, p);
        let m = generate_monotone_missing(x.view(), &counts, trial).unwrap();
        let ds = detect_monotone(&m).unwrap();
        let q: Vec<usize> = ds.spec.widths().iter().map(|&w| r.random_range(1..w)).collect();
        let stack = bpi_reduce(&ds, &BlockRetention::fixed(&q)).unwrap();
        assert!(stack.z_star.missing_count() < m.missing_count());
    }
}

#[test]
fn pipeline_is_deterministic() {
    let x = low_rank_matrix(120, 20, 4, 8);
    let m = generate_monotone_missing(x.view(), &[3, 4, 5], 2).unwrap();
    let ds = detect_monotone(&m).unwrap();
    let imp = ImputerKind::SoftImpute(SoftImputeParams::absolute(0.5));
    let a = bpi_reduce_impute(&ds, &BlockRetention::default(), &imp).unwrap();
    let b = bpi_reduce_impute(&ds, &BlockRetention::default(), &imp).unwrap();
    assert_eq!(a.z, b.z);
    assert_eq!(a.q(), b.q());
}
