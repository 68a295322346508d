use hullscan_tensor::gradcheck::{grad_check, GradCheckOptions};
use hullscan_tensor::nn::{BatchNorm, BiLstm, Conv2d, Linear};
use hullscan_tensor::{Conv2dGeom, Ctx, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Projects onto fixed random weights so every output element matters.
fn project(y: &Var<f64>, seed: u64) -> Var<f64> {
    let w = Tensor::randn(y.shape(), 1.0, &mut rng(seed ^ 0xabcd));
    y.mul_const(&w).sum()
}

fn check(name: &str, f: impl Fn(&Var<f64>) -> Var<f64>, x: &Tensor<f64>) {
    let r = grad_check(f, x, GradCheckOptions::default()).unwrap();
    assert!(r.passed, "{name}: {r:?}");
}

#[test]
fn elementwise_ops() {
    for seed in 0..5 {
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng(seed));
        let c = Tensor::randn(&[3, 4], 1.0, &mut rng(seed + 100));
        check("sigmoid", |v| project(&v.sigmoid(), seed), &x);
        check("tanh", |v| project(&v.tanh(), seed), &x);
        check("exp", |v| project(&v.exp(), seed), &x);
        check("relu", |v| project(&v.relu(), seed), &x);
        check("abs", |v| project(&v.abs(), seed), &x);
        check("ln", |v| project(&v.mul(v).add_scalar(0.5).ln(), seed), &x);
        check(
            "sqrt",
            |v| project(&v.mul(v).add_scalar(0.5).sqrt(), seed),
            &x,
        );
        check(
            "div",
            |v| project(&v.div(&Var::constant(c.map(|t| t * t + 1.0))), seed),
            &x,
        );
        check("clamp", |v| project(&v.clamp(-0.65, 0.65), seed), &x);
    }
}

#[test]
fn shape_ops() {
    for seed in 0..5 {
        let x = Tensor::randn(&[2, 3, 4], 1.0, &mut rng(seed));
        check("permute", |v| project(&v.permute(&[2, 0, 1]), seed), &x);
        check(
            "concat+slice",
            |v| project(&Var::concat(&[v.slice(2, 1, 2), v.mul(v)], 2), seed),
            &x,
        );
        check("sum_axis", |v| project(&v.sum_axis(1), seed), &x);
        let w = Tensor::randn(&[5, 4], 1.0, &mut rng(seed + 7));
        let b = Tensor::randn(&[5], 1.0, &mut rng(seed + 8));
        check(
            "linear",
            |v| {
                project(
                    &v.reshape(&[6, 4])
                        .linear(&Var::constant(w.clone()), Some(&Var::constant(b.clone()))),
                    seed,
                )
            },
            &x,
        );
        check("log_softmax", |v| project(&v.log_softmax(), seed), &x);
    }
}

#[test]
fn conv_and_pool() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let x = Tensor::randn(&[2, 3, 7, 6], 1.0, &mut r);
        let conv = Conv2d::<f64>::new(3, 4, (3, 2), (2, 1), (1, 1), true, &mut r);
        let ctx = Ctx::eval();
        check("conv2d", |v| project(&conv.forward(&ctx, v), seed), &x);
        let pw = Conv2d::<f64>::new(3, 2, (1, 1), (1, 1), (0, 0), false, &mut r);
        check("conv1x1", |v| project(&pw.forward(&ctx, v), seed), &x);
        check("max_pool", |v| project(&v.max_pool2d(3, 2, 1), seed), &x);
        check("avg_pool", |v| project(&v.avg_pool2d(2, 2), seed), &x);
        check("gap", |v| project(&v.global_avg_pool(), seed), &x);
        check("upsample", |v| project(&v.upsample_nearest(2, 3), seed), &x);
    }
}

#[test]
fn conv_weight_gradient() {
    let mut r = rng(11);
    let x = Var::constant(Tensor::<f64>::randn(&[2, 2, 5, 5], 1.0, &mut r));
    let w0 = Tensor::randn(&[3, 2, 3, 3], 0.5, &mut r);
    check(
        "conv weight",
        |w| project(&x.conv2d(w, None, Conv2dGeom::new((1, 1), (1, 1))), 3),
        &w0,
    );
}

#[test]
fn batch_norm_training_mode() {
    for seed in 0..5 {
        let x = Tensor::randn(&[3, 2, 2, 3], 1.0, &mut rng(seed));
        let bn = BatchNorm::<f64>::new(2);
        check(
            "batch_norm",
            |v| {
                let mut ctx = Ctx::train(0);
                project(&bn.forward(&mut ctx, v), seed)
            },
            &x,
        );
    }
}

#[test]
fn bilstm() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let lstm = BiLstm::<f64>::new(3, 4, &mut r);
        let x = Tensor::randn(&[5, 2, 3], 1.0, &mut r);
        check(
            "bilstm",
            |v| project(&lstm.forward(&Ctx::eval(), v), seed),
            &x,
        );
    }
}

#[test]
fn sampling_wrt_input_and_theta() {
    for seed in 0..5 {
        let mut r = rng(seed);
        let img = Tensor::randn(&[1, 2, 6, 5], 1.0, &mut r);
        let jitter = Tensor::<f64>::rand_uniform(&[6], -0.05, 0.05, &mut r);
        let base = [0.83, 0.11, 0.071, -0.09, 1.07, -0.043];
        let theta = Tensor::from_vec(
            &[1, 6],
            base.iter().zip(jitter.data()).map(|(b, j)| b + j).collect(),
        );
        let th = Var::constant(theta.clone());
        check(
            "grid_sample wrt input",
            |v| project(&v.grid_sample(&th.affine_grid(6, 5)), seed),
            &img,
        );
        let iv = Var::constant(img.clone());
        check(
            "grid_sample wrt theta",
            |t| project(&iv.grid_sample(&t.affine_grid(6, 5)), seed),
            &theta,
        );
    }
}

#[test]
fn cosine_similarity_rows() {
    for seed in 0..5 {
        let x = Tensor::randn(&[2, 8], 1.0, &mut rng(seed));
        let y = Var::constant(Tensor::randn(&[2, 8], 1.0, &mut rng(seed + 50)));
        check(
            "cosine",
            |v| project(&v.cosine_similarity(&y, 1e-4), seed),
            &x,
        );
        check(
            "cosine abs",
            |v| v.cosine_similarity(&y, 1e-4).abs().sum(),
            &x,
        );
    }
}

#[test]
fn linear_module_params() {
    let mut r = rng(4);
    let lin = Linear::<f64>::new(3, 2, &mut r);
    let x = Var::constant(Tensor::randn(&[4, 3], 1.0, &mut r));
    let w0 = lin.weight.value().clone();
    check("linear weight", |w| project(&x.linear(w, None), 1), &w0);
}
