use ore_core::model::Network;
use ore_core::text::{encode, Embeddings, PerturbationSpace, PerturbationSpec};
use ore_core::{
    ore_hs, ore_msa, ConstraintSpec, CostFunction, HsConfig, MsaConfig, NetworkOracle, OracleConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODELS: [(&str, &str); 5] = [
    ("sum", include_str!("../fixtures/sum.json")),
    ("firstword", include_str!("../fixtures/firstword.json")),
    ("toy_relu", include_str!("../fixtures/toy_relu.json")),
    ("sentiment", include_str!("../fixtures/sentiment.json")),
    (
        "sentiment_cnn",
        include_str!("../fixtures/sentiment_cnn.json"),
    ),
];

const EMBEDDINGS: [(&str, &str); 2] = [
    ("toy_emb", include_str!("../fixtures/toy_emb.json")),
    (
        "sentiment_emb",
        include_str!("../fixtures/sentiment_emb.json"),
    ),
];

#[test]
fn model_files_are_canonical() {
    for (name, text) in MODELS {
        let net = Network::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(net.to_json(), text, "{name}");
    }
}

#[test]
fn embedding_files_are_canonical() {
    for (name, text) in EMBEDDINGS {
        let emb = Embeddings::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(emb.to_json(), text, "{name}");
    }
}

#[test]
fn small_fixtures_behave_as_documented() {
    let sum = Network::from_json(MODELS[0].1).unwrap();
    assert_eq!(sum.forward(&[1.0, 1.0]).unwrap().logits, vec![2.0, -2.0]);
    let first = Network::from_json(MODELS[1].1).unwrap();
    assert_eq!(first.forward(&[-0.5, 3.0]).unwrap().label, 1);
    let relu = Network::from_json(MODELS[2].1).unwrap();
    assert_eq!(relu.forward(&[-1.0, 0.0]).unwrap().logits, vec![0.0, 0.0]);
    assert_eq!(relu.gradient(&[-1.0, 0.0], (0, 1)).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn convolutional_sentiment_matches_dense() {
    let dense = Network::from_json(MODELS[3].1).unwrap();
    let conv = Network::from_json(MODELS[4].1).unwrap();
    assert!(conv.has_conv());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let x: Vec<f64> = (0..dense.input_dim())
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        let a = dense.logits(&x).unwrap();
        let b = conv.logits(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn sentiment_explanations() {
    let emb = Embeddings::from_json(EMBEDDINGS[1].1).unwrap();
    let none = ConstraintSpec::default();
    for (_, model) in &MODELS[3..] {
        let net = Network::from_json(model).unwrap();
        let t = encode(&["the", "movie", "was", "good", "but", "boring"], 6, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(0.3), &emb).unwrap();
        let oracle = NetworkOracle::new(&net, space, OracleConfig::default()).unwrap();
        assert_eq!(oracle.target(), 0);
        let cost = CostFunction::uniform(6);
        let hs = ore_hs(&oracle, &cost, &none, &HsConfig::default()).unwrap();
        let msa = ore_msa(&oracle, &cost, &none, &MsaConfig::default()).unwrap();
        assert_eq!(hs.words, msa.words);
        assert!(
            hs.words.contains(&3),
            "the positive word must be fixed: {:?}",
            hs.words
        );
    }
}
