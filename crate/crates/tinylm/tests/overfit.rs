use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinylm::{generate, token_nll_trace, train, GenerateConfig, Schedule, TinyLmConfig, TrainConfig};

fn document(len: usize, vocab: u32, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(0..vocab)).collect()
}

fn memorize_config() -> (TinyLmConfig, TrainConfig) {
    let cfg = TinyLmConfig::new(32, 32, 2, 4, 64);
    let tc = TrainConfig {
        lr: 1e-2,
        weight_decay: 0.0,
        warmup_steps: 20,
        schedule: Schedule::WarmupConstant,
        batch_size: 1,
        grad_accum: 1,
        epochs: 500,
        max_steps: Some(500),
        seed: 1,
        ..TrainConfig::reference()
    };
    (cfg, tc)
}

#[test]
fn memorizes_a_single_64_token_document() {
    let doc = document(64, 32, 3);
    let (cfg, tc) = memorize_config();
    let start = Instant::now();
    let (params, report) = train::<f32>(&[doc.clone()], &cfg, &tc).unwrap();
    let last = report.final_loss().unwrap();
    let first_below = report.curve.iter().find(|p| p.loss < 0.05).map(|p| p.step);
    println!("final loss {last:.5}, first step below 0.05: {first_below:?}, {:?}", start.elapsed());
    assert!(report.steps <= 500);
    assert!(last < 0.05);

    let trace = token_nll_trace(&params, &doc).unwrap();
    assert!(trace.iter().all(|&x| x < 0.05), "{trace:?}");

    let prompt = &doc[..16];
    let out = generate(&params, prompt, &GenerateConfig::greedy(48)).unwrap();
    assert_eq!(out, doc);
}

#[test]
fn completes_short_memorized_sequence() {
    // "a b c d" as token ids 1 2 3 4.
    let cfg = TinyLmConfig::new(6, 16, 1, 2, 8);
    let tc = TrainConfig {
        max_steps: Some(200),
        ..memorize_config().1
    };
    let (params, _) = train::<f32>(&[vec![1, 2, 3, 4]], &cfg, &tc).unwrap();
    let out = generate(&params, &[1, 2], &GenerateConfig::greedy(2)).unwrap();
    assert_eq!(out, vec![1, 2, 3, 4]);
}
