//! Frozen numeric fixtures for the seed-42 default model. These values were
//! captured from a build whose image gradients had been verified against
//! finite differences; any drift here means the forward pass changed.

use cia_core::image::ImageTensor;
use cia_core::model::{init_model, ModelDims, ModelWeights, Tokenizer, BOS};

fn seed42() -> ModelWeights<f32> {
    init_model(42, ModelDims::default()).unwrap()
}

fn half_gray() -> ImageTensor<f32> {
    ImageTensor::filled(16, 16, 0.5).unwrap()
}

#[test]
fn forward_logits_match_stored_fixture() {
    let fixture: serde_json::Value = serde_json::from_str(include_str!(
        "fixtures/forward_logits_seed42.json"
    ))
    .unwrap();
    let rows = fixture["rows"].as_u64().unwrap() as usize;
    let cols = fixture["cols"].as_u64().unwrap() as usize;
    let stored: Vec<f64> = fixture["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!((rows, cols), (17, 64));
    assert_eq!(stored.len(), rows * cols);

    let logits = seed42().logits_for(&half_gray(), &[BOS]).unwrap();
    assert_eq!(logits.shape(), &[rows, cols]);
    for i in 0..rows {
        for j in 0..cols {
            let got = logits.at(i, j) as f64;
            let want = stored[i * cols + j];
            assert!(
                (got - want).abs() <= 1e-5,
                "logit ({i},{j}) drifted: got {got}, fixture {want}"
            );
        }
    }
}

#[test]
fn greedy_fixture_for_classify_the_image() {
    let model = seed42();
    let tok = Tokenizer::new();
    let mut prompt = vec![BOS];
    prompt.extend(tok.tokenize("classify the image"));
    let generated = model.generate_greedy(&half_gray(), &prompt, 8).unwrap();
    assert_eq!(generated, vec![14, 38, 48, 58, 13, 58, 56, 42]);
    assert_eq!(
        tok.detokenize(&generated).unwrap(),
        "sorry label many & bad & + be"
    );

    // A shorter horizon must be a prefix of the longer one: greedy decoding
    // never revises earlier choices.
    let shorter = model.generate_greedy(&half_gray(), &prompt, 4).unwrap();
    assert_eq!(shorter, generated[..4]);
}
