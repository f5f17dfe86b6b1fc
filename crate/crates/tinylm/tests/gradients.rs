use tinylm::gradcheck::check_params;
use tinylm::train::loss_and_grad;
use tinylm::{gradient_check, init_params_with_std, TinyLmConfig, TinyLmParams};

fn tiny() -> TinyLmConfig {
    TinyLmConfig::new(11, 8, 1, 2, 8)
}

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..3 {
        let report = gradient_check(&tiny(), seed).unwrap();
        println!("seed {seed}: {report:?}");
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

#[test]
fn tied_and_multi_block_gradients() {
    let mut cfg = TinyLmConfig::new(9, 8, 2, 2, 8);
    cfg.tied_embeddings = true;
    cfg.rope_dim = 1;
    let report = gradient_check(&cfg, 5).unwrap();
    println!("{report:?}");
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn doubling_loss_scale_doubles_gradients() {
    let p: TinyLmParams<f64> = init_params_with_std(&tiny(), 2, 0.3).unwrap();
    let ids = [1, 4, 7, 2, 9, 3];
    let (_, g1) = loss_and_grad(&p, &ids, 1.0).unwrap();
    let (_, g2) = loss_and_grad(&p, &ids, 2.0).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn gradients_vanish_at_a_zero_loss_point() {
    // Every target is token 3; a huge head bias toward 3 (via a constant
    // direction after the final norm bias) makes the loss numerically zero.
    let mut p: TinyLmParams<f64> = init_params_with_std(&tiny(), 4, 0.3).unwrap();
    p.tensor_mut("lnf.gain").unwrap().fill(0.0);
    let bias = p.tensor_mut("lnf.bias").unwrap();
    bias.fill(0.0);
    bias[0] = 1.0;
    let head = p.tensor_mut("head").unwrap();
    head.fill(0.0);
    head[3] = 60.0;
    let ids = [3, 3, 3, 3, 3, 3];
    let (loss, grads) = loss_and_grad(&p, &ids, 1.0).unwrap();
    assert!(loss < 1e-20, "{loss}");
    assert!(grads.iter().all(|g| g.abs() < 1e-20));
    let report = check_params(&p, &ids).unwrap();
    assert!(report.max_abs_error < 1e-12);
}
