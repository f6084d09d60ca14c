use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::*;
use crate::grid::{DomainGrid, MultiIndex};

fn jitter(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = crate::rng::rng(seed);
    for s in model.param_slices_mut() {
        for v in s.iter_mut() {
            *v += scale * rng.random_range(-1.0..1.0);
        }
    }
}

fn random_batch(grid: &DomainGrid, r: usize, spec: &LossSpec, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<(usize, f64)>) {
    let mut rng = crate::rng::rng(seed);
    let xs = (0..n).map(|_| (0..r).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let meta = (0..n)
        .map(|_| {
            let t = rng.random_range(0..grid.len());
            let y = match spec.kind {
                LossKind::Squared => rng.random_range(-1.0..1.0),
                LossKind::Logistic => rng.random_range(0..2) as f64,
                LossKind::SoftmaxCrossEntropy => rng.random_range(0..spec.classes) as f64,
            };
            (t, y)
        })
        .collect();
    (xs, meta)
}

fn examples<'a>(xs: &'a [Vec<f64>], meta: &[(usize, f64)]) -> Vec<Example<'a>> {
    xs.iter().zip(meta).map(|(x, &(domain, y))| Example { domain, x, y }).collect()
}

#[test]
fn identity_net_zero_input_gives_bias() {
    let mut net = RepresentationNet::zeros(&[3, 2], &[Activation::Identity]).unwrap();
    net.layers_mut()[0].weights.fill(1.0);
    net.layers_mut()[0].bias = vec![0.5, -0.25];
    let grid = DomainGrid::new(vec![2]).unwrap();
    let bank = HeadBank::new(grid, 2, 3, BankKind::SharedOnly { head: vec![1.0; 6] }).unwrap();
    let m = Model::new(net, bank).unwrap();
    assert_eq!(m.forward(1, &[0.0; 3]).unwrap(), vec![0.25; 3]);
}

#[test]
fn additive_forward_matches_explicit_head_on_5x5() {
    let grid = DomainGrid::new(vec![5, 5]).unwrap();
    let arch = ArchConfig { hidden: vec![6], repr_dim: 4, ..ArchConfig::default() };
    let mut m = Model::init(BankVariant::Additive, grid.clone(), 3, &arch, 2, 1, &[], &mut crate::rng::rng(4)).unwrap();
    jitter(&mut m, 5, 0.5);
    let BankKind::Additive { shared, per_mode } = m.bank.kind().clone() else { unreachable!() };
    let factored = Model::new(m.net.clone(), m.bank.to_factorized().unwrap()).unwrap();
    let q = 8;
    let x = [0.3, -1.2, 0.8];
    for i in 0..5 {
        for j in 0..5 {
            let t = grid.flat_index(&MultiIndex(vec![i, j])).unwrap();
            let head: Vec<f64> = (0..q).map(|c| per_mode[0][i * q + c] + per_mode[1][j * q + c] + shared[c]).collect();
            let direct = apply_head(&head, &m.net.forward(&x), 2);
            let a = m.forward(t, &x).unwrap();
            let f = factored.forward(t, &x).unwrap();
            for c in 0..2 {
                assert!((a[c] - direct[c]).abs() < 1e-12);
                assert!((f[c] - direct[c]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn factorized_forward_matches_reconstruction() {
    let grid = DomainGrid::new(vec![2, 3, 2]).unwrap();
    let arch = ArchConfig { hidden: vec![5], repr_dim: 3, ..ArchConfig::default() };
    let m = Model::init(BankVariant::Factorized, grid.clone(), 4, &arch, 3, 2, &[], &mut crate::rng::rng(11)).unwrap();
    let BankKind::Factorized(f) = m.bank.kind() else { unreachable!() };
    let x = [1.0, 0.5, -0.5, 2.0];
    for t in 0..grid.len() {
        let head = f.reconstruct(&grid.multi_index(t).unwrap()).unwrap();
        let shared = HeadBank::new(grid.clone(), 3, 3, BankKind::SharedOnly { head }).unwrap();
        let oracle = Model::new(m.net.clone(), shared).unwrap().forward(0, &x).unwrap();
        let got = m.forward(t, &x).unwrap();
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn free_bank_has_no_head_for_unseen() {
    let grid = DomainGrid::new(vec![3, 3]).unwrap();
    let m = Model::init(BankVariant::Free, grid, 2, &ArchConfig::default(), 1, 1, &[0, 4], &mut crate::rng::rng(0)).unwrap();
    assert!(m.forward(4, &[0.0, 0.0]).is_ok());
    assert!(matches!(m.forward(5, &[0.0, 0.0]), Err(crate::Error::NoHead { domain: 5 })));
}

#[test]
fn perfect_fit_has_zero_loss_and_gradient() {
    let grid = DomainGrid::new(vec![2, 2]).unwrap();
    let arch = ArchConfig { hidden: vec![4], repr_dim: 3, hidden_activation: Activation::Tanh, ..ArchConfig::default() };
    let m = Model::init(BankVariant::Additive, grid.clone(), 2, &arch, 1, 1, &[], &mut crate::rng::rng(2)).unwrap();
    let xs: Vec<Vec<f64>> = vec![vec![0.1, 0.2], vec![-0.7, 1.1], vec![0.4, -0.3]];
    let batch: Vec<Example> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| Example { domain: i % 4, x, y: m.forward(i % 4, x).unwrap()[0] })
        .collect();
    let (loss, grads) = loss_and_grads(&m, &batch, &LossSpec::squared(), 0.0).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.slices().iter().all(|s| s.iter().all(|&g| g == 0.0)));
}

#[test]
fn gradients_match_finite_differences() {
    let grid = DomainGrid::new(vec![2, 3]).unwrap();
    let specs = [LossSpec::squared(), LossSpec::logistic(), LossSpec::softmax(3).unwrap()];
    for variant in BankVariant::ALL {
        for spec in &specs {
            for seed in 0..3u64 {
                let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu };
                let arch = ArchConfig { hidden: vec![5], repr_dim: 3, hidden_activation: act, ..ArchConfig::default() };
                let mut rng = crate::rng::rng(100 + seed);
                let mut m = Model::init(variant, grid.clone(), 4, &arch, spec.classes, 2, &[0, 2, 3, 5], &mut rng).unwrap();
                jitter(&mut m, 200 + seed, 0.3);
                let (xs, mut meta) = random_batch(&grid, 4, spec, 12, 300 + seed);
                if variant == BankVariant::Free {
                    for (t, _) in meta.iter_mut() {
                        *t = [0, 2, 3, 5][*t % 4];
                    }
                }
                let batch = examples(&xs, &meta);
                let gc = check_gradients(&m, &batch, spec, 0.05, 1e-5, 1e-8).unwrap();
                assert!(
                    gc.max_rel_error < 1e-4,
                    "{} / {}: {gc:?}",
                    variant.name(),
                    spec.kind.name()
                );
                assert!(gc.compared > 0);
            }
        }
    }
}

#[test]
fn regularizer_examples() {
    let grid = DomainGrid::new(vec![1]).unwrap();
    // one mode with a single level: vectors are β_0 = (1,0) and u = (0,1)
    let bank = HeadBank::new(
        grid.clone(),
        2,
        1,
        BankKind::Additive { shared: vec![0.0, 1.0], per_mode: vec![vec![1.0, 0.0]] },
    )
    .unwrap();
    let (v, g) = regularizer(&bank, 1.0);
    assert!((v - 0.5).abs() < 1e-15);
    assert_eq!(g, vec![vec![0.5, -0.5], vec![-0.5, 0.5]]);
    let same = HeadBank::new(grid, 2, 1, BankKind::Additive { shared: vec![3.0, 1.0], per_mode: vec![vec![3.0, 1.0]] }).unwrap();
    assert_eq!(regularizer(&same, 1.0).0, 0.0);
    assert_eq!(regularizer(&bank, 0.0).0, 0.0);
}

#[test]
fn regularizer_ignores_common_shift() {
    let grid = DomainGrid::new(vec![3, 2]).unwrap();
    let mut bank = HeadBank::init(BankVariant::Factorized, grid, 2, 2, 2, &[], &mut crate::rng::rng(8)).unwrap();
    let before = regularizer(&bank, 0.3).0;
    let shift = [0.7, -1.3, 2.0, 0.1];
    for s in bank.param_slices_mut() {
        for row in s.chunks_exact_mut(4) {
            for (v, d) in row.iter_mut().zip(shift) {
                *v += d;
            }
        }
    }
    let after = regularizer(&bank, 0.3).0;
    assert!((before - after).abs() < 1e-12 * before.max(1.0));
}

#[test]
fn additive_bank_regularizes_eleven_vectors_on_5x5() {
    let grid = DomainGrid::new(vec![5, 5]).unwrap();
    let bank = HeadBank::init(BankVariant::Additive, grid, 4, 2, 1, &[], &mut crate::rng::rng(1)).unwrap();
    assert_eq!(bank.regularized_vectors().len(), 11);
}

#[test]
fn head_norm_examples() {
    let grid = DomainGrid::new(vec![2, 2]).unwrap();
    let zero = HeadBank::new(grid.clone(), 3, 2, BankKind::SharedOnly { head: vec![0.0; 6] }).unwrap();
    assert!(head_norms(&zero).iter().all(|&(_, n)| n == 0.0));
    // 3×2 identity-like head
    let eye = HeadBank::new(grid.clone(), 3, 2, BankKind::SharedOnly { head: vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0] }).unwrap();
    for (_, n) in head_norms(&eye) {
        assert!((n - libm::sqrt(2.0)).abs() < 1e-15);
    }
    let free = HeadBank::init(BankVariant::Free, grid, 3, 2, 1, &[1, 3], &mut crate::rng::rng(3)).unwrap();
    let norms = head_norms(&free);
    assert_eq!(norms.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 3]);
    for (t, n) in norms {
        let h = free.head(t).unwrap();
        let mut s = 0.0;
        for v in &h {
            s += v * v;
        }
        assert!((n - libm::sqrt(s)).abs() < 1e-15);
    }
}

#[test]
fn softmax_loss_is_permutation_equivariant() {
    let grid = DomainGrid::new(vec![2]).unwrap();
    let arch = ArchConfig { hidden: vec![4], repr_dim: 3, ..ArchConfig::default() };
    let m = Model::init(BankVariant::SharedOnly, grid.clone(), 2, &arch, 3, 1, &[], &mut crate::rng::rng(6)).unwrap();
    let perm = [2usize, 0, 1];
    let BankKind::SharedOnly { head } = m.bank.kind() else { unreachable!() };
    let mut permuted = vec![0.0; head.len()];
    for a in 0..3 {
        for c in 0..3 {
            permuted[a * 3 + perm[c]] = head[a * 3 + c];
        }
    }
    let pm = Model::new(m.net.clone(), HeadBank::new(grid, 3, 3, BankKind::SharedOnly { head: permuted }).unwrap()).unwrap();
    let spec = LossSpec::softmax(3).unwrap();
    let xs = [vec![0.5, -1.0], vec![1.5, 0.2]];
    for y in 0..3 {
        let a = mean_loss(&m, &[Example { domain: 0, x: &xs[0], y: y as f64 }, Example { domain: 1, x: &xs[1], y: y as f64 }], &spec).unwrap();
        let yp = perm[y] as f64;
        let b = mean_loss(&pm, &[Example { domain: 0, x: &xs[0], y: yp }, Example { domain: 1, x: &xs[1], y: yp }], &spec).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn non_finite_logits_name_the_sample() {
    let grid = DomainGrid::new(vec![1]).unwrap();
    let m = Model::init(BankVariant::SharedOnly, grid, 1, &ArchConfig { hidden: vec![], ..ArchConfig::default() }, 1, 1, &[], &mut crate::rng::rng(0)).unwrap();
    let xs = [vec![1.0], vec![f64::NAN]];
    let batch = [Example { domain: 0, x: &xs[0], y: 0.0 }, Example { domain: 0, x: &xs[1], y: 0.0 }];
    assert!(matches!(loss_and_grads(&m, &batch, &LossSpec::squared(), 0.0), Err(crate::Error::Numeric { sample: 1 })));
}

#[test]
fn representation_bound_is_max_norm() {
    let mut net = RepresentationNet::zeros(&[2, 2], &[Activation::Identity]).unwrap();
    net.layers_mut()[0].weights = vec![1.0, 0.0, 0.0, 1.0];
    let xs = [vec![3.0, 4.0], vec![1.0, 1.0]];
    assert_eq!(representation_norm_bound(&net, xs.iter().map(|x| x.as_slice())), 5.0);
}
