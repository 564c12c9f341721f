mod common;

use common::oracle;
use lieprobe_core::corpus::{encode_batches, EncodedDoc};
use lieprobe_core::model::{ModelConfig, ModelState};
use lieprobe_core::rng::SeededRng;

fn random_model(
    seed: u64,
    m: usize,
    n: usize,
    classes: usize,
    vocab: usize,
    scale: f64,
) -> ModelState<f64> {
    let mut cfg = ModelConfig::new(m, n, classes);
    cfg.seed = seed;
    let mut model = ModelState::<f64>::init(&cfg, vocab).unwrap();
    let mut rng = SeededRng::new(seed ^ 0xabcd);
    for t in model.params_mut().unwrap().tensors_mut() {
        for v in t.data_mut() {
            *v = rng.normal() * scale;
        }
    }
    model
}

fn random_docs(rng: &mut SeededRng, count: usize, vocab: usize, classes: usize) -> Vec<EncodedDoc> {
    (0..count)
        .map(|_| EncodedDoc {
            ids: (0..2 + rng.below(5))
                .map(|_| 2 + rng.below(vocab - 2))
                .collect(),
            label: rng.below(classes),
        })
        .collect()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let (m, n, c, vocab) = (8, 8, 3, 12);
    for seed in 0..20u64 {
        let mut model = random_model(seed, m, n, c, vocab, 0.5);
        let mut rng = SeededRng::new(1000 + seed);
        let docs = random_docs(&mut rng, 4, vocab, c);
        let batch = encode_batches(&docs, 4).unwrap().remove(0);
        let block = model.config().neurons_per_class;
        let (loss, grads) = model.loss_and_gradients(&batch).unwrap();
        assert!((loss - oracle::batch_loss(model.params(), block, &batch)).abs() < 1e-12);

        let sizes: Vec<usize> = model
            .params()
            .tensors()
            .iter()
            .map(|t| t.data().len())
            .collect();
        for _ in 0..50 {
            let li = rng.below(sizes.len());
            let k = rng.below(sizes[li]);
            let mut eval = |delta: f64| -> f64 {
                let orig = model.params().tensors()[li].data()[k];
                model.params_mut().unwrap().tensors_mut()[li].data_mut()[k] = orig + delta;
                let l = oracle::batch_loss(model.params(), block, &batch);
                model.params_mut().unwrap().tensors_mut()[li].data_mut()[k] = orig;
                l
            };
            let central = |e: &mut dyn FnMut(f64) -> f64, h: f64| (e(h) - e(-h)) / (2.0 * h);
            let h = 1e-3;
            let fd = (4.0 * central(&mut eval, h / 2.0) - central(&mut eval, h)) / 3.0;
            let an = grads[li].data()[k];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(
                rel <= 1e-4,
                "seed {seed} param {li} entry {k}: {an} vs {fd}"
            );
        }
    }
}

#[test]
fn gru_cell_matches_straight_line_gates() {
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let (m, n) = (1 + rng.below(9), 1 + rng.below(9));
        let vocab = 3 + rng.below(5);
        let model = random_model(i, m, n, 2, vocab, 1.0);
        let w = rng.below(vocab);
        let h: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let got = model.gru_cell(w, &h).unwrap();
        let x = model.embedding_row(w).unwrap().to_vec();
        let want = oracle::gru(model.params(), &x, &h);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

#[test]
fn gamma_plus_update_recovers_state() {
    let mut rng = SeededRng::new(5);
    for i in 0..100u64 {
        let model = random_model(i, 4, 6, 2, 7, 1.0);
        let w = 2 + rng.below(5);
        let h: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let g = model.gamma(w, &h).unwrap();
        let next = model.gru_cell(w, &h).unwrap();
        for j in 0..6 {
            assert!((g[j] + next[j] - h[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_logits_match_oracle() {
    let mut rng = SeededRng::new(9);
    for i in 0..50u64 {
        let model = random_model(i, 5, 7, 4, 9, 0.8);
        let ids: Vec<usize> = (0..1 + rng.below(8)).map(|_| rng.below(9)).collect();
        let mut h = model.initial_state();
        for &w in &ids {
            h = oracle::gru(model.params(), model.embedding_row(w).unwrap(), &h);
        }
        let want = oracle::logits(model.params(), model.config().neurons_per_class, &h);
        let got = model.forward_logits(&ids).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
