//! Browser bindings over a bundled sentiment model.
//!
//! Every export takes plain arguments and returns a JSON string; failures
//! surface as thrown JS errors.

use ore_core::text::{knn as neighbours, word_box};
use ore_core::{
    detect_bias, encode, ore, ConstraintSpec, CostFunction, Embeddings, Explanation, Metric,
    Network, NetworkOracle, OracleConfig, PerturbationSpace, PerturbationSpec, SolverKind,
    TextInput, Verdict, Verifier, VerifierConfig, WordSet,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MODEL: &str = include_str!("../../core/fixtures/sentiment.json");
const EMBEDDINGS: &str = include_str!("../../core/fixtures/sentiment_emb.json");

struct Demo {
    net: Network,
    emb: Embeddings,
}

impl Demo {
    fn load() -> Result<Self, String> {
        Ok(Self {
            net: Network::from_json(MODEL).map_err(|e| e.to_string())?,
            emb: Embeddings::from_json(EMBEDDINGS).map_err(|e| e.to_string())?,
        })
    }

    fn input(&self, text: &str) -> Result<TextInput, String> {
        let words: Vec<&str> = text.split_whitespace().collect();
        encode(&words, self.net.input_words(), &self.emb).map_err(|e| e.to_string())
    }

    fn oracle(&self, text: &TextInput, eps: f64) -> Result<NetworkOracle, String> {
        let space = PerturbationSpace::new(text, &PerturbationSpec::eps(eps), &self.emb)
            .map_err(|e| e.to_string())?;
        let mut config = OracleConfig::default();
        config.attack.parallel = false;
        NetworkOracle::new(&self.net, space, config).map_err(|e| e.to_string())
    }

    fn label(&self, i: usize) -> Value {
        json!(self.net.labels()[i])
    }
}

fn render(text: &TextInput, words: &WordSet) -> Value {
    Value::Array(
        text.tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| json!({ "word": t, "marked": words.contains(&i) }))
            .collect(),
    )
}

fn explanation(text: &TextInput, e: &Explanation) -> Value {
    json!({
        "indices": e.words,
        "cost": e.cost,
        "tokens": render(text, &e.words),
        "queries": e.trace.queries,
    })
}

fn solver_kind(name: &str) -> Result<SolverKind, String> {
    match name {
        "hs" => Ok(SolverKind::Hs),
        "msa" => Ok(SolverKind::Msa),
        other => Err(format!("unknown solver {other:?}")),
    }
}

/// Optimal explanation of the bundled model's prediction on `text`.
pub fn explain_value(text: &str, eps: f64, solver: &str) -> Result<Value, String> {
    let demo = Demo::load()?;
    let input = demo.input(text)?;
    let oracle = demo.oracle(&input, eps)?;
    let cost = CostFunction::uniform(input.len());
    let e = ore(
        &oracle,
        &cost,
        &ConstraintSpec::default(),
        solver_kind(solver)?,
    )
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "prediction": demo.label(oracle.target()),
        "explanation": explanation(&input, &e),
    }))
}

/// Single robustness query with the positions in `fixed` held constant.
pub fn verify_value(text: &str, eps: f64, fixed: &[usize]) -> Result<Value, String> {
    let demo = Demo::load()?;
    let input = demo.input(text)?;
    let oracle = demo.oracle(&input, eps)?;
    let fixed: WordSet = fixed.iter().copied().collect();
    let bx = oracle.space().fixing(&fixed).map_err(|e| e.to_string())?;
    let verifier =
        Verifier::new(&demo.net, VerifierConfig::default()).map_err(|e| e.to_string())?;
    let r = verifier
        .check(&bx, oracle.target(), oracle.space().point())
        .map_err(|e| e.to_string())?;
    let mut out = json!({
        "prediction": demo.label(oracle.target()),
        "tokens": render(&input, &fixed),
    });
    match r.verdict {
        Verdict::Robust => out["verdict"] = json!("robust"),
        Verdict::CounterExample { point, predicted } => {
            out["verdict"] = json!("counterexample");
            out["flipped_to"] = demo.label(predicted);
            out["moved"] = json!(oracle
                .space()
                .differing_words(&point, ore_core::verifier::DIFF_TOLERANCE));
        }
        Verdict::ResourceExhausted { .. } => out["verdict"] = json!("unknown"),
    }
    Ok(out)
}

/// Bias check with the words at `protected` as the sensitive positions.
pub fn bias_value(text: &str, eps: f64, protected: &[usize]) -> Result<Value, String> {
    let demo = Demo::load()?;
    let input = demo.input(text)?;
    let oracle = demo.oracle(&input, eps)?;
    let protected: WordSet = protected.iter().copied().collect();
    let cost = CostFunction::uniform(input.len());
    let v = detect_bias(&oracle, &protected, &cost, SolverKind::Hs).map_err(|e| e.to_string())?;
    Ok(json!({
        "prediction": demo.label(oracle.target()),
        "biased": v.biased,
        "witness": v.witness.as_ref().map(|w| explanation(&input, w)),
        "moved": v.moved,
    }))
}

/// Nearest neighbours of `word` in the bundled vocabulary and their box.
pub fn knn_value(word: &str, k: usize, metric: &str) -> Result<Value, String> {
    let demo = Demo::load()?;
    let metric = match metric {
        "euclidean" => Metric::Euclidean,
        "cosine" => Metric::Cosine,
        other => return Err(format!("unknown metric {other:?}")),
    };
    let id = demo.emb.id(word).map_err(|e| e.to_string())?;
    let ids = neighbours(&demo.emb, id, k, metric).map_err(|e| e.to_string())?;
    let bx =
        word_box(&demo.emb, id, &PerturbationSpec::knn(k, metric)).map_err(|e| e.to_string())?;
    Ok(json!({
        "word": word,
        "neighbours": ids.iter().map(|&i| demo.emb.vocab().word(i)).collect::<Vec<_>>(),
        "lo": bx.lo(),
        "hi": bx.hi(),
    }))
}

/// Words the bundled model knows, padding excluded.
pub fn vocabulary_value() -> Result<Value, String> {
    let demo = Demo::load()?;
    let vocab = demo.emb.vocab();
    Ok(json!({
        "words": vocab.words().iter().enumerate().filter(|&(i, _)| i != vocab.pad_id()).map(|(_, w)| w).collect::<Vec<_>>(),
        "max_words": demo.net.input_words(),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn explain(text: &str, eps: f64, solver: &str) -> Result<String, JsError> {
    to_js(explain_value(text, eps, solver))
}

#[wasm_bindgen]
pub fn verify(text: &str, eps: f64, fixed: Vec<usize>) -> Result<String, JsError> {
    to_js(verify_value(text, eps, &fixed))
}

#[wasm_bindgen]
pub fn bias(text: &str, eps: f64, protected: Vec<usize>) -> Result<String, JsError> {
    to_js(bias_value(text, eps, &protected))
}

#[wasm_bindgen]
pub fn knn(word: &str, k: usize, metric: &str) -> Result<String, JsError> {
    to_js(knn_value(word, k, metric))
}

#[wasm_bindgen]
pub fn vocabulary() -> Result<String, JsError> {
    to_js(vocabulary_value())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marked(v: &Value) -> Vec<String> {
        v.as_array()
            .unwrap()
            .iter()
            .filter(|t| t["marked"] == true)
            .map(|t| t["word"].as_str().unwrap().to_owned())
            .collect()
    }

    #[test]
    fn solvers_agree() {
        let text = "the movie was good but boring";
        let hs = explain_value(text, 0.3, "hs").unwrap();
        let msa = explain_value(text, 0.3, "msa").unwrap();
        assert_eq!(hs["prediction"], "positive");
        assert_eq!(hs["explanation"]["cost"], msa["explanation"]["cost"]);
        assert!(marked(&hs["explanation"]["tokens"]).contains(&"good".to_owned()));
    }

    #[test]
    fn explanation_is_verified_robust() {
        let text = "the acting was awful";
        let e = explain_value(text, 0.3, "hs").unwrap();
        let fixed: Vec<usize> =
            serde_json::from_value(e["explanation"]["indices"].clone()).unwrap();
        assert_eq!(
            verify_value(text, 0.3, &fixed).unwrap()["verdict"],
            "robust"
        );
    }

    #[test]
    fn free_text_has_counterexample() {
        let v = verify_value("the movie was good", 0.6, &[]).unwrap();
        assert_eq!(v["verdict"], "counterexample");
        assert_eq!(v["flipped_to"], "negative");
    }

    #[test]
    fn bias_reports_a_verdict() {
        let v = bias_value("he was good", 0.3, &[0]).unwrap();
        assert!(v["biased"].is_boolean());
    }

    #[test]
    fn knn_includes_self() {
        let v = knn_value("good", 3, "euclidean").unwrap();
        assert_eq!(v["neighbours"][0], "good");
        assert_eq!(v["neighbours"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn errors_are_messages() {
        assert!(explain_value("zebra", 0.3, "hs").is_err());
        assert!(explain_value("good", 0.3, "sat").is_err());
        assert!(knn_value("good", 2, "manhattan").is_err());
    }

    #[test]
    fn vocabulary_skips_padding() {
        let v = vocabulary_value().unwrap();
        assert!(!v["words"].as_array().unwrap().iter().any(|w| w == "<PAD>"));
        assert_eq!(v["max_words"], 6);
    }
}
