//! Exact-match accuracy and production-level balanced F1.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lftree::LfTree;
use crate::model::{
    decode_tree, greedy_decode_seq, DecodeCaps, DecoderMode, ModelParameters,
};
use crate::scalar::Scalar;
use crate::text::{reverse_input, unmask, ExamplePair, Vocabulary};

/// Per-example evaluation outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub exact: bool,
    pub f1: f64,
    pub predicted: String,
    pub gold: String,
    pub truncated: bool,
}

/// Aggregated evaluation outcome; `accuracy == correct as f64 / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub mean_f1: f64,
    pub correct: usize,
    pub total: usize,
    pub verdicts: Vec<Verdict>,
}

/// Decoding knobs for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub max_len: usize,
    pub caps: DecodeCaps,
    pub reverse_input: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            max_len: 100,
            caps: DecodeCaps::default(),
            reverse_input: true,
        }
    }
}

/// True iff the two logical forms parse to equal trees. Whitespace and
/// bracket spacing differences disappear in the parse; if either side does
/// not parse, falls back to plain string equality.
pub fn exact_match(pred: &str, gold: &str) -> bool {
    match (LfTree::parse(pred), LfTree::parse(gold)) {
        (Ok(a), Ok(b)) => a == b,
        _ => pred == gold,
    }
}

/// Balanced F1 over the production sets of the two trees:
/// `P = |pred ∩ gold| / |pred|`, `R = |pred ∩ gold| / |gold|`,
/// `F1 = 2PR/(P+R)` (0 when both are 0).
pub fn balanced_f1(pred: &LfTree, gold: &LfTree) -> f64 {
    let p_set = pred.extract_productions();
    let g_set = gold.extract_productions();
    let inter = p_set.intersection(&g_set).count() as f64;
    if p_set.is_empty() || g_set.is_empty() {
        return 0.0;
    }
    let p = inter / p_set.len() as f64;
    let r = inter / g_set.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Decodes one preprocessed example and recovers its constants. Returns the
/// unmasked prediction string and the truncation flag.
pub fn predict_example<S: Scalar>(
    params: &ModelParameters<S>,
    vocab_q: &Vocabulary,
    vocab_a: &Vocabulary,
    example: &ExamplePair,
    opts: &EvalOptions,
) -> Result<(String, bool)> {
    let mut input = example.utterance.tokens.clone();
    if opts.reverse_input {
        input = reverse_input(&input);
    }
    let input_ids = vocab_q.encode(&input);

    let (pred_tokens, truncated): (Vec<String>, bool) = match params.mode {
        DecoderMode::Seq2Seq => {
            let out = greedy_decode_seq(&input_ids, params, opts.max_len)?;
            (
                out.tokens.iter().map(|&t| vocab_a.token(t).into()).collect(),
                out.truncated,
            )
        }
        DecoderMode::Seq2Tree => {
            let out = decode_tree(&input_ids, params, vocab_a, &opts.caps)?;
            (out.tree.to_flat_tokens(), out.truncated)
        }
    };
    let (unmasked, _unknown) = unmask(&pred_tokens, &example.utterance.table);
    let pred_str = match LfTree::from_tokens(&unmasked) {
        Ok(t) => t.serialize(),
        Err(_) => unmasked.join(" "),
    };
    Ok((pred_str, truncated))
}

/// Evaluates a model over preprocessed examples: decode (greedy or tree per
/// the model mode), unmask, and compare against the unmasked gold form.
/// Truncated or unparsable decodes count as wrong with F1 = 0.
pub fn evaluate<S: Scalar>(
    params: &ModelParameters<S>,
    vocab_q: &Vocabulary,
    vocab_a: &Vocabulary,
    examples: &[ExamplePair],
    opts: &EvalOptions,
) -> Result<EvalResult> {
    if examples.is_empty() {
        return Err(Error::Config("cannot evaluate an empty dataset".into()));
    }
    let mut verdicts = Vec::with_capacity(examples.len());
    let mut correct = 0usize;
    let mut f1_sum = 0.0f64;
    for example in examples {
        let (gold_tokens, _) = unmask(&example.logical_form, &example.utterance.table);
        let gold_str = match LfTree::from_tokens(&gold_tokens) {
            Ok(t) => t.serialize(),
            Err(_) => gold_tokens.join(" "),
        };
        let (pred_str, truncated) = predict_example(params, vocab_q, vocab_a, example, opts)?;

        let exact = !truncated && exact_match(&pred_str, &gold_str);
        let f1 = if truncated {
            0.0
        } else {
            match (LfTree::parse(&pred_str), LfTree::parse(&gold_str)) {
                (Ok(p), Ok(g)) => balanced_f1(&p, &g),
                _ => 0.0,
            }
        };
        if exact {
            correct += 1;
        }
        f1_sum += f1;
        verdicts.push(Verdict {
            exact,
            f1,
            predicted: pred_str,
            gold: gold_str,
            truncated,
        });
    }
    let total = examples.len();
    Ok(EvalResult {
        accuracy: correct as f64 / total as f64,
        mean_f1: f1_sum / total as f64,
        correct,
        total,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exact_match_cases() {
        assert!(exact_match("(A B)", "(A B)"));
        assert!(exact_match("( A B )", "(A B)"));
        assert!(!exact_match("(A B)", "(A C)"));
        // Unparsable falls back to byte equality.
        assert!(exact_match("(((", "((("));
        assert!(!exact_match("(((", "(A)"));
    }

    #[test]
    fn exact_match_is_reflexive_and_symmetric() {
        let cases = ["(f (g x) y)", "answer", "(a (b (c)))"];
        for a in cases {
            assert!(exact_match(a, a));
            for b in cases {
                assert_eq!(exact_match(a, b), exact_match(b, a));
            }
        }
    }

    #[test]
    fn f1_is_one_on_identical_trees() {
        let t = LfTree::parse("(f (g x) y)").unwrap();
        assert_eq!(balanced_f1(&t, &t), 1.0);
    }

    #[test]
    fn f1_is_zero_on_disjoint_production_sets() {
        let a = LfTree::parse("(f x)").unwrap();
        let b = LfTree::parse("(g y)").unwrap();
        assert_eq!(balanced_f1(&a, &b), 0.0);
    }

    #[test]
    fn f1_half_overlap_is_half() {
        // gold: ROOT -> [(a)], a -> [a (b) (c)], b -> [b x], c -> [c y]: 4 productions.
        // pred: ROOT -> [(a)], a -> [a (b) (c)], b -> [b z], c -> [c w]: 4 productions,
        // sharing exactly the first two. P = R = 0.5 so F1 = 0.5.
        let gold = LfTree::parse("(a (b x) (c y))").unwrap();
        let pred = LfTree::parse("(a (b z) (c w))").unwrap();
        assert_eq!(gold.extract_productions().len(), 4);
        assert_eq!(pred.extract_productions().len(), 4);
        assert_eq!(balanced_f1(&pred, &gold), 0.5);
    }

    #[test]
    fn f1_is_symmetric_and_bounded() {
        let a = LfTree::parse("(f (g x) y)").unwrap();
        let b = LfTree::parse("(f (g x) z)").unwrap();
        let ab = balanced_f1(&a, &b);
        let ba = balanced_f1(&b, &a);
        assert_eq!(ab, ba);
        assert!((0.0..=1.0).contains(&ab));
        // F1 = 1 iff production sets are equal.
        assert!(ab < 1.0);
        let c = LfTree::parse("(f (g x) y)").unwrap();
        assert_eq!(balanced_f1(&a, &c), 1.0);
    }

    #[test]
    fn evaluate_rejects_empty_datasets() {
        let params = ModelParameters::<f64>::new(
            crate::model::ModelDims {
                embed: 2,
                hidden: 2,
                layers: 1,
                vocab_q: 6,
                vocab_a: 6,
            },
            DecoderMode::Seq2Seq,
            false,
        )
        .unwrap();
        let v = Vocabulary::build(&[vec!["a".to_string()]], 1, true);
        let err = evaluate(&params, &v, &v, &[], &EvalOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
