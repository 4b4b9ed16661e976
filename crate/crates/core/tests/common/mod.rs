//! Central finite-difference gradient checks shared by the test targets.
#![allow(dead_code)]

use crelu_core::nn::dense::{dense_backward, dense_forward};
use crelu_core::nn::dropout::{dropout_backward, dropout_forward};
use crelu_core::nn::pool::{
    avgpool_backward, avgpool_forward, global_avgpool_backward, global_avgpool_forward, maxpool_backward,
    maxpool_forward,
};
use crelu_core::nn::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, network_backward, network_forward,
    softmax_xent, ActivationKind, LayerSpec, Mode, NetworkConfig, Params,
};
use crelu_core::{RngStream, Tensor};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 20;
/// Preactivations closer than this to a kink are moved away from it.
pub const KINK_MARGIN: f64 = 1e-3;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`. Coordinates for which `state` differs
/// between the two probes are reported as `None`.
pub fn numeric_gradient<S: PartialEq>(
    x: &[f64],
    mut f: impl FnMut(&[f64]) -> (f64, S),
) -> Vec<Option<f64>> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + H;
            let (up, su) = f(&probe);
            probe[i] = x[i] - H;
            let (down, sd) = f(&probe);
            probe[i] = x[i];
            (su == sd).then(|| (up - down) / (2.0 * H))
        })
        .collect()
}

/// Relative error over the coordinates with a stable discrete state.
pub fn compare(analytic: &[f64], numeric: &[Option<f64>]) -> f64 {
    let (a, n): (Vec<f64>, Vec<f64>) = analytic
        .iter()
        .zip(numeric)
        .filter_map(|(&a, n)| n.map(|n| (a, n)))
        .unzip();
    relative_error(&a, &n)
}

fn tensor_like(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Pushes every entry at least `KINK_MARGIN` away from zero.
fn off_kink(mut t: Tensor) -> Tensor {
    t.data_mut().iter_mut().for_each(|v| {
        if v.abs() < KINK_MARGIN {
            *v = if *v < 0.0 { -2.0 * KINK_MARGIN } else { 2.0 * KINK_MARGIN };
        }
    });
    t
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub worst: f64,
    pub instances: u64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst < TOLERANCE
    }
}

fn run(name: &str, mut one: impl FnMut(&mut RngStream) -> f64) -> CheckResult {
    let base = RngStream::new(0x6c7).split(name.len() as u64);
    let worst = (0..INSTANCES)
        .map(|s| one(&mut base.split(s).split(name.bytes().map(u64::from).sum())))
        .fold(0.0, f64::max);
    CheckResult {
        name: name.into(),
        worst,
        instances: INSTANCES,
    }
}

pub fn check_activation(kind: ActivationKind) -> CheckResult {
    run(&format!("activation_{kind}"), |rng| {
        let x = off_kink(rng.gaussian_tensor([2, 3, 2, 2]));
        let probe = activation_forward(kind, &x).unwrap();
        let g = rng.gaussian_tensor(probe.shape().to_vec());
        let analytic = activation_backward(kind, &x, &g).unwrap();
        let signs = |v: &[f64]| v.iter().map(|&a| a > 0.0).collect::<Vec<_>>();
        let numeric = numeric_gradient(x.data(), |v| {
            (dot(&activation_forward(kind, &tensor_like(&x, v)).unwrap(), &g), signs(v))
        });
        compare(analytic.data(), &numeric)
    })
}

pub fn check_conv() -> CheckResult {
    run("conv2d", |rng| {
        let (c, f) = (1 + rng.below(3), 1 + rng.below(3));
        let (k, stride, pad) = (1 + rng.below(3), 1 + rng.below(2), rng.below(2));
        let size = k + stride * (2 + rng.below(2)) - 2 * pad;
        let x = rng.gaussian_tensor([2, c, size, size]);
        let w = rng.gaussian_tensor([f, c, k, k]);
        let b = rng.gaussian_tensor([f]);
        let (y, cache) = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        let g = rng.gaussian_tensor(y.shape().to_vec());
        let (gx, gw, gb) = conv2d_backward(&cache, &g).unwrap();
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&conv2d_forward(x, w, b, stride, pad).unwrap().0, &g);
        let nx = numeric_gradient(x.data(), |v| (loss(&tensor_like(&x, v), &w, &b), ()));
        let nw = numeric_gradient(w.data(), |v| (loss(&x, &tensor_like(&w, v), &b), ()));
        let nb = numeric_gradient(b.data(), |v| (loss(&x, &w, &tensor_like(&b, v)), ()));
        compare(gx.data(), &nx).max(compare(gw.data(), &nw)).max(compare(gb.data(), &nb))
    })
}

pub fn check_dense() -> CheckResult {
    run("dense", |rng| {
        let (n, d, o) = (1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(5));
        let x = rng.gaussian_tensor([n, d]);
        let w = rng.gaussian_tensor([o, d]);
        let b = rng.gaussian_tensor([o]);
        let g = rng.gaussian_tensor([n, o]);
        let (gx, gw, gb) = dense_backward(&x, &w, &g).unwrap();
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&dense_forward(x, w, b).unwrap(), &g);
        let nx = numeric_gradient(x.data(), |v| (loss(&tensor_like(&x, v), &w, &b), ()));
        let nw = numeric_gradient(w.data(), |v| (loss(&x, &tensor_like(&w, v), &b), ()));
        let nb = numeric_gradient(b.data(), |v| (loss(&x, &w, &tensor_like(&b, v)), ()));
        compare(gx.data(), &nx).max(compare(gw.data(), &nw)).max(compare(gb.data(), &nb))
    })
}

pub fn check_maxpool() -> CheckResult {
    run("maxpool", |rng| {
        let (k, stride) = (2 + rng.below(2), 1 + rng.below(2));
        let size = k + stride * (1 + rng.below(3));
        let x = rng.gaussian_tensor([2, 2, size, size]);
        let (y, cache) = maxpool_forward(&x, k, stride).unwrap();
        let g = rng.gaussian_tensor(y.shape().to_vec());
        let analytic = maxpool_backward(&cache, &g).unwrap();
        let numeric = numeric_gradient(x.data(), |v| {
            let (y, c) = maxpool_forward(&tensor_like(&x, v), k, stride).unwrap();
            (dot(&y, &g), c.argmax().to_vec())
        });
        compare(analytic.data(), &numeric)
    })
}

pub fn check_avgpool() -> CheckResult {
    run("avgpool", |rng| {
        let (k, stride) = (2 + rng.below(2), 1 + rng.below(2));
        let size = k + stride * (1 + rng.below(3));
        let x = rng.gaussian_tensor([2, 2, size, size]);
        let y = avgpool_forward(&x, k, stride).unwrap();
        let g = rng.gaussian_tensor(y.shape().to_vec());
        let analytic = avgpool_backward(x.shape(), k, stride, &g).unwrap();
        let numeric = numeric_gradient(x.data(), |v| (dot(&avgpool_forward(&tensor_like(&x, v), k, stride).unwrap(), &g), ()));
        compare(analytic.data(), &numeric)
    })
}

pub fn check_global_avgpool() -> CheckResult {
    run("global_avgpool", |rng| {
        let x = rng.gaussian_tensor([2, 3, 3, 4]);
        let g = rng.gaussian_tensor([2, 3]);
        let analytic = global_avgpool_backward(x.shape(), &g).unwrap();
        let numeric = numeric_gradient(x.data(), |v| {
            let y = global_avgpool_forward(&tensor_like(&x, v)).unwrap();
            (y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum(), ())
        });
        compare(analytic.data(), &numeric)
    })
}

pub fn check_dropout() -> CheckResult {
    run("dropout", |rng| {
        let x = rng.gaussian_tensor([2, 3, 2, 2]);
        let seed = rng.split(1);
        let (y, mask) = dropout_forward(&x, 0.4, &mut seed.clone()).unwrap();
        let g = rng.gaussian_tensor(y.shape().to_vec());
        let analytic = dropout_backward(&mask, &g).unwrap();
        let numeric = numeric_gradient(x.data(), |v| {
            (dot(&dropout_forward(&tensor_like(&x, v), 0.4, &mut seed.clone()).unwrap().0, &g), ())
        });
        compare(analytic.data(), &numeric)
    })
}

pub fn check_softmax_xent() -> CheckResult {
    run("softmax_xent", |rng| {
        let (n, k) = (1 + rng.below(4), 2 + rng.below(5));
        let z = rng.gaussian_tensor([n, k]);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let (_, analytic) = softmax_xent(&z, &labels).unwrap();
        let numeric = numeric_gradient(z.data(), |v| (softmax_xent(&tensor_like(&z, v), &labels).unwrap().0, ()));
        compare(analytic.data(), &numeric)
    })
}

/// conv → CReLU → maxpool → conv → AVR → dropout → dense → leaky ReLU → dense.
pub fn composite_network() -> NetworkConfig {
    let conv = |out| LayerSpec::Conv2d {
        out_channels: out,
        kh: 3,
        kw: 3,
        stride: 1,
        pad: 1,
    };
    NetworkConfig::new(
        vec![2, 6, 6],
        vec![
            conv(3),
            LayerSpec::Activation(ActivationKind::Crelu),
            LayerSpec::MaxPool { k: 2, stride: 2 },
            conv(4),
            LayerSpec::Activation(ActivationKind::Avr),
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Dense { out_dim: 5 },
            LayerSpec::Activation(ActivationKind::LeakyRelu(0.1)),
            LayerSpec::Dense { out_dim: 3 },
        ],
        3,
    )
    .unwrap()
}

/// Every parameter and the input of the composite net against the softmax loss.
pub fn check_composite() -> CheckResult {
    let cfg = composite_network();
    run("composite_network", |rng| {
        let params = cfg.init_params(&mut rng.split(0));
        let x = rng.gaussian_tensor([3, 2, 6, 6]);
        let labels: Vec<usize> = (0..3).map(|_| rng.below(3)).collect();
        let drop = rng.split(2);
        type State = (Vec<Vec<bool>>, Vec<Vec<usize>>);
        let eval = |params: &Params, x: &Tensor| -> (f64, State, Tensor, crelu_core::nn::ForwardCache) {
            let (y, cache) = network_forward(&cfg, params, x, Mode::Train(&mut drop.clone())).unwrap();
            let (loss, g) = softmax_xent(&y, &labels).unwrap();
            let signs = cache
                .activation_inputs()
                .map(|t| t.data().iter().map(|&v| v > 0.0).collect())
                .collect();
            let winners = cache.maxpool_winners().map(<[usize]>::to_vec).collect();
            (loss, (signs, winners), g, cache)
        };
        let (_, _, g, cache) = eval(&params, &x);
        let (grads, gx) = network_backward(&cfg, &params, &cache, &g).unwrap();
        let mut worst = compare(
            gx.data(),
            &numeric_gradient(x.data(), |v| {
                let (l, s, ..) = eval(&params, &tensor_like(&x, v));
                (l, s)
            }),
        );
        for (slot, t) in params.tensors.iter().enumerate() {
            let numeric = numeric_gradient(t.data(), |v| {
                let mut p = params.clone();
                p.tensors[slot] = tensor_like(t, v);
                let (l, s, ..) = eval(&p, &x);
                (l, s)
            });
            worst = worst.max(compare(grads.tensors[slot].data(), &numeric));
        }
        worst
    })
}

pub fn all_checks() -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = [
        ActivationKind::Relu,
        ActivationKind::Crelu,
        ActivationKind::Avr,
        ActivationKind::LeakyRelu(0.2),
    ]
    .into_iter()
    .map(check_activation)
    .collect();
    out.extend([
        check_conv(),
        check_dense(),
        check_maxpool(),
        check_avgpool(),
        check_global_avgpool(),
        check_dropout(),
        check_softmax_xent(),
        check_composite(),
    ]);
    out
}
