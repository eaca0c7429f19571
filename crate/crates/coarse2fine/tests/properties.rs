//! Property tests over randomized inputs.

use coarse2fine::optim::clip_global_norm;
use coarse2fine::summary::{hard_select, SelectMode};
use coarse2fine::tape::Tape;
use coarse2fine::tensor::{max_abs_diff, Tensor};
use coarse2fine::text::{onehot, prepare_example, tokenize, PrepareConfig, RawExample, Vocabulary, EOS, PAD};
use proptest::prelude::*;
use std::collections::BTreeMap;

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        logits in prop::collection::vec(-40.0f64..40.0, 1..10),
        shift in -25.0f64..25.0,
    ) {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(logits.clone()));
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let b = tape.leaf(Tensor::vector(shifted));
        let sa = tape.softmax(a).unwrap();
        let sb = tape.softmax(b).unwrap();
        let sum: f64 = tape.value(sa).data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(tape.value(sa).data().iter().all(|&p| p >= 0.0));
        prop_assert!(max_abs_diff(tape.value(sa), tape.value(sb)) < 1e-9);
    }

    #[test]
    fn clipping_caps_and_never_increases_the_norm(
        values in prop::collection::vec(-100.0f64..100.0, 1..40),
        clip in 0.1f64..20.0,
    ) {
        let mut grads = BTreeMap::new();
        grads.insert("g".to_string(), Tensor::vector(values));
        let before = coarse2fine::optim::global_norm(&grads);
        let reported = clip_global_norm(&mut grads, clip);
        let after = coarse2fine::optim::global_norm(&grads);
        prop_assert!((reported - before).abs() < 1e-9);
        prop_assert!(after <= clip + 1e-9);
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn tokenize_is_idempotent_on_its_own_output(text in "\\PC{0,60}") {
        let tokens = tokenize(&text);
        let rejoined = tokens.join(" ");
        prop_assert_eq!(tokenize(&rejoined), tokens);
    }

    #[test]
    fn argmax_selection_ignores_monotone_rescaling(
        raw in prop::collection::vec(0.01f64..1.0, 2..6),
        k in 1usize..3,
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let rescaled: Vec<f64> = probs.iter().map(|p| (p * 3.0).exp()).collect();
        let rows: Vec<Vec<u32>> = (0..probs.len()).map(|i| vec![5 + i as u32, PAD]).collect();
        let ex = coarse2fine::text::PreparedExample {
            query_ids: vec![5],
            sentence_lengths: vec![1; rows.len()],
            index_onehots: (0..rows.len()).map(|i| onehot(i, 8)).collect(),
            rows,
            answer_ids: vec![EOS],
            answer_norm: String::new(),
            placeholder_map: Default::default(),
            gold_sentence: None,
            doc_prefix_ids: vec![],
            doc_token_total: 0,
        };
        let a = hard_select(&probs, &ex, k, SelectMode::Argmax, None).unwrap();
        let b = hard_select(&rescaled, &ex, k, SelectMode::Argmax, None).unwrap();
        prop_assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn preparation_is_deterministic_and_ids_stay_in_range(
        sentences in prop::collection::vec("[a-f ]{1,20}", 1..6),
        query in "[a-f]{1,8}",
        answer in "[a-f]{1,8}",
    ) {
        prop_assume!(sentences.iter().any(|s| !tokenize(s).is_empty()));
        let raw = RawExample::new(&query, sentences, &answer);
        let background = RawExample::new("aa bb", vec!["cc dd ee".into()], "ff");
        let vocab = Vocabulary::build(&[background, raw.clone()], 64, 4).unwrap();
        let cfg = PrepareConfig {
            max_sentences: 4,
            max_tokens: 5,
            ..PrepareConfig::default()
        };
        let a = prepare_example(&raw, &vocab, &cfg).unwrap();
        let b = prepare_example(&raw, &vocab, &cfg).unwrap();
        prop_assert_eq!(&a.rows, &b.rows);
        prop_assert_eq!(&a.query_ids, &b.query_ids);
        prop_assert_eq!(&a.answer_ids, &b.answer_ids);
        for row in &a.rows {
            prop_assert_eq!(row.len(), 5);
            for &id in row {
                prop_assert!((id as usize) < vocab.size());
            }
            // Pads only at row tails.
            let first_pad = row.iter().position(|&id| id == PAD).unwrap_or(row.len());
            prop_assert!(row[first_pad..].iter().all(|&id| id == PAD));
        }
    }
}
