use proptest::prelude::*;

use crelu_core::data::cifar::{read_cifar10_bin, write_cifar10_bin, RECORD};
use crelu_core::experiment::Checkpoint;
use crelu_core::linalg::DEFAULT_RCOND;
use crelu_core::nn::dense::dense_forward;
use crelu_core::nn::{activation_forward, ActivationKind, LayerSpec, NetworkConfig};
use crelu_core::pairing::pairing_mu;
use crelu_core::recon::crelu_inverse;
use crelu_core::{pinv, RngStream, Tensor};

const EXACT: f64 = 1e-12;

fn batch() -> impl Strategy<Value = Tensor> {
    (1usize..3, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n, c, h, w)| {
        prop::collection::vec(-5.0f64..5.0, n * c * h * w).prop_map(move |d| Tensor::new([n, c, h, w], d).unwrap())
    })
}

/// `(pos, neg)` halves of every sample of a CReLU output.
fn halves(y: &Tensor) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = y.shape()[0];
    y.data()
        .chunks(y.len() / n)
        .map(|s| {
            let (p, q) = s.split_at(s.len() / 2);
            (p.to_vec(), q.to_vec())
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn crelu_halves_are_complementary(x in batch()) {
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap();
        for (p, q) in halves(&y) {
            for (a, b) in p.iter().zip(&q) {
                prop_assert!(*a >= 0.0 && *b >= 0.0);
                prop_assert_eq!(a * b, 0.0);
            }
        }
    }

    #[test]
    fn crelu_difference_restores_input(x in batch()) {
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap();
        let n = x.shape()[0];
        for ((p, q), xs) in halves(&y).iter().zip(x.data().chunks(x.len() / n)) {
            for ((a, b), v) in p.iter().zip(q).zip(xs) {
                prop_assert!((a - b - v).abs() <= EXACT);
            }
            prop_assert_eq!(crelu_inverse(p, q).unwrap(), xs.to_vec());
        }
    }

    #[test]
    fn avr_is_the_sum_of_halves(x in batch()) {
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap();
        let avr = activation_forward(ActivationKind::Avr, &x).unwrap();
        let n = x.shape()[0];
        for ((p, q), a) in halves(&y).iter().zip(avr.data().chunks(avr.len() / n)) {
            for ((u, v), w) in p.iter().zip(q).zip(a) {
                prop_assert!((u + v - w).abs() <= EXACT);
            }
        }
    }

    #[test]
    fn crelu_doubles_channels(x in batch()) {
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap();
        let mut expect = x.shape().to_vec();
        expect[1] *= 2;
        prop_assert_eq!(y.shape(), &expect[..]);
        let cfg = NetworkConfig::new(
            x.shape()[1..].to_vec(),
            vec![LayerSpec::Activation(ActivationKind::Crelu), LayerSpec::GlobalAvgPool],
            2 * x.shape()[1],
        ).unwrap();
        prop_assert_eq!(cfg.shape_before(1)[0], 2 * x.shape()[1]);
    }

    #[test]
    fn crelu_then_mirrored_dense_is_linear(x in batch(), seed in any::<u64>(), out in 1usize..5) {
        let n = x.shape()[0];
        let d = x.len() / n;
        let u = RngStream::new(seed).gaussian_tensor([out, d]);
        let b = RngStream::new(seed ^ 1).gaussian_tensor([out]);
        let mut mirrored = Vec::with_capacity(out * 2 * d);
        for r in 0..out {
            mirrored.extend_from_slice(u.row(r));
            mirrored.extend(u.row(r).iter().map(|v| -v));
        }
        let mirrored = Tensor::new([out, 2 * d], mirrored).unwrap();
        let y = activation_forward(ActivationKind::Crelu, &x).unwrap().reshape([n, 2 * d]).unwrap();
        let lhs = dense_forward(&y, &mirrored, &b).unwrap();
        let rhs = dense_forward(&x.clone().reshape([n, d]).unwrap(), &u, &b).unwrap();
        let scale = 1.0 + rhs.max_abs();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= EXACT * scale);
    }
}

fn low_rank() -> impl Strategy<Value = Tensor> {
    (1usize..9, 1usize..9, 1usize..5, any::<u64>()).prop_map(|(m, n, r, seed)| {
        let mut rng = RngStream::new(seed);
        let r = r.min(m).min(n);
        let a = rng.gaussian_tensor([m, r]);
        let b = rng.gaussian_tensor([r, n]);
        a.matmul(&b).unwrap()
    })
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.sub(b).unwrap().max_abs() <= tol * (1.0 + b.max_abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pinv_satisfies_penrose_conditions(a in low_rank()) {
        let p = pinv(&a, DEFAULT_RCOND).unwrap();
        let ap = a.matmul(&p).unwrap();
        let pa = p.matmul(&a).unwrap();
        prop_assert!(close(&ap.matmul(&a).unwrap(), &a, 1e-9));
        prop_assert!(close(&pa.matmul(&p).unwrap(), &p, 1e-9));
        prop_assert!(close(&ap.transpose().unwrap(), &ap, 1e-9));
        prop_assert!(close(&pa.transpose().unwrap(), &pa, 1e-9));
    }

    #[test]
    fn pairing_ignores_filter_scale(k in 2usize..10, d in 2usize..8, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let f = rng.gaussian_tensor([k, d]);
        let mut scaled = f.clone();
        for r in 0..k {
            let s = 0.1 + 10.0 * rng.uniform();
            scaled.data_mut()[r * d..(r + 1) * d].iter_mut().for_each(|v| *v *= s);
        }
        let a = pairing_mu(&f).unwrap();
        let b = pairing_mu(&scaled).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_follows_filter_permutation(k in 2usize..10, d in 2usize..8, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let f = rng.gaussian_tensor([k, d]);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let rows: Vec<&[f64]> = perm.iter().map(|&i| f.row(i)).collect();
        let permuted = Tensor::from_rows(&rows).unwrap();
        let a = pairing_mu(&f).unwrap();
        let b = pairing_mu(&permuted).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((b.mu[new] - a.mu[old]).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_bank_pairs_perfectly(k in 1usize..8, d in 2usize..8, seed in any::<u64>()) {
        let f = RngStream::new(seed).gaussian_tensor([k, d]);
        let neg: Vec<Vec<f64>> = (0..k).map(|r| f.row(r).iter().map(|v| -v).collect()).collect();
        let mut rows: Vec<&[f64]> = (0..k).map(|r| f.row(r)).collect();
        rows.extend(neg.iter().map(Vec::as_slice));
        let bank = Tensor::from_rows(&rows).unwrap();
        let rep = pairing_mu(&bank).unwrap();
        for m in &rep.mu {
            prop_assert!((m + 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cifar_records_round_trip(records in 1usize..4, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let mut bytes = Vec::with_capacity(records * RECORD);
        for _ in 0..records {
            bytes.push(rng.below(10) as u8);
            bytes.extend((1..RECORD).map(|_| rng.below(256) as u8));
        }
        let images = read_cifar10_bin(&bytes).unwrap();
        prop_assert_eq!(images.len(), records);
        prop_assert_eq!(&write_cifar10_bin(&images).unwrap(), &bytes);
        prop_assert_eq!(read_cifar10_bin(&write_cifar10_bin(&images).unwrap()).unwrap(), images);
    }

    #[test]
    fn cifar_rejects_partial_records(extra in 1usize..RECORD) {
        prop_assert!(read_cifar10_bin(&vec![0u8; RECORD + extra]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), epoch in any::<u64>()) {
        let cfg = NetworkConfig::new(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d { out_channels: 2, kh: 3, kw: 3, stride: 1, pad: 1 },
                LayerSpec::Activation(ActivationKind::Crelu),
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_dim: 3 },
            ],
            3,
        ).unwrap();
        let ck = Checkpoint {
            seed,
            epoch,
            config: format!("seed = {seed}\n"),
            params: cfg.init_params(&mut RngStream::new(seed)),
            optimizer: None,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (a, b) in back.params.tensors.iter().zip(&ck.params.tensors) {
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
