//! Dataset and lexicon file handling, and the text-pipeline glue that turns
//! raw `utterance<TAB>logical form` lines into masked training examples.

use std::path::Path;

use nl2lf_core::lftree::{prolog, LfTree};
use nl2lf_core::model::DecoderMode;
use nl2lf_core::text::{
    identify_arguments, mask_logical_form, stem_tokens, tokenize, ArgumentLexicon, ArgumentTable,
    ExamplePair, MaskedUtterance, NumberPattern, Vocabulary,
};

use crate::config::LfFormat;
use crate::error::{data_err, CliError, Result};

/// One raw dataset line.
#[derive(Debug, Clone)]
pub struct RawExample {
    pub utterance: String,
    pub logical_form: String,
    /// 1-based line number for error reporting.
    pub line: usize,
}

/// Loads a dataset file: UTF-8, one example per line,
/// `utterance<TAB>logical form`. Blank lines are skipped; an empty file or a
/// line without a tab is a data error naming the line.
pub fn load_dataset(path: &Path) -> Result<Vec<RawExample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read dataset {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, lf) = line.split_once('\t').ok_or_else(|| {
            CliError::data(format!(
                "{}:{}: missing tab separator between utterance and logical form",
                path.display(),
                i + 1
            ))
        })?;
        out.push(RawExample {
            utterance: utt.trim().to_string(),
            logical_form: lf.trim().to_string(),
            line: i + 1,
        });
    }
    if out.is_empty() {
        return Err(CliError::data(format!(
            "dataset {} is empty",
            path.display()
        )));
    }
    Ok(out)
}

/// Loads a lexicon file (`surface<TAB>type<TAB>constant` per line). When
/// stemming is enabled the surface forms are stemmed too, so they keep
/// matching the stemmed utterances.
pub fn load_lexicon(
    path: &Path,
    patterns: Vec<NumberPattern>,
    stem: bool,
) -> Result<ArgumentLexicon> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read lexicon {}: {e}", path.display())))?;
    let lexicon = ArgumentLexicon::parse_lines(&text, patterns)
        .map_err(|e| data_err(&format!("lexicon {}", path.display()), e))?;
    if !stem {
        return Ok(lexicon);
    }
    let entries = lexicon
        .entries()
        .iter()
        .map(|e| {
            let mut surface = e.surface.clone();
            stem_tokens(&mut surface);
            nl2lf_core::text::LexiconEntry {
                surface,
                type_name: e.type_name.clone(),
                constant: e.constant.clone(),
            }
        })
        .collect();
    ArgumentLexicon::new(entries, lexicon.patterns().to_vec())
        .map_err(|e| data_err(&format!("lexicon {} (stemmed)", path.display()), e))
}

/// Text-pipeline settings shared by training, prediction and evaluation.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub format: LfFormat,
    pub stem: bool,
    pub argument_identification: bool,
}

/// Converts a logical-form string to canonical flat tokens (brackets as
/// their own tokens). Prolog forms are normalized to the bracketed
/// representation first.
pub fn lf_to_tokens(lf: &str, format: LfFormat) -> nl2lf_core::error::Result<Vec<String>> {
    let tree = match format {
        LfFormat::Sexpr => LfTree::parse(lf)?,
        LfFormat::Prolog => prolog::parse_prolog(lf)?,
    };
    Ok(tree.to_flat_tokens())
}

/// Renders flat tokens back in dataset syntax (Prolog when the pipeline
/// ingested Prolog, bracketed form otherwise). Unparsable predictions come
/// back space-joined as-is.
pub fn tokens_to_display(tokens: &[String], format: LfFormat) -> String {
    match LfTree::from_tokens(tokens) {
        Ok(tree) => match format {
            LfFormat::Sexpr => tree.serialize(),
            LfFormat::Prolog => prolog::render_prolog(&tree).unwrap_or_else(|_| tree.serialize()),
        },
        Err(_) => tokens.join(" "),
    }
}

/// Tokenizes and masks one utterance.
pub fn prepare_utterance(
    utterance: &str,
    lexicon: &ArgumentLexicon,
    settings: &PipelineSettings,
) -> MaskedUtterance {
    let mut tokens = tokenize(utterance);
    if settings.stem {
        stem_tokens(&mut tokens);
    }
    if settings.argument_identification {
        identify_arguments(&tokens, lexicon)
    } else {
        MaskedUtterance {
            tokens: tokens.clone(),
            table: ArgumentTable::default(),
            original: tokens,
        }
    }
}

/// Full preprocessing of one raw example: tokenize, mask the utterance,
/// normalize and mask the logical form.
pub fn preprocess_example(
    raw: &RawExample,
    lexicon: &ArgumentLexicon,
    settings: &PipelineSettings,
) -> Result<ExamplePair> {
    let utterance = prepare_utterance(&raw.utterance, lexicon, settings);
    let lf_tokens = lf_to_tokens(&raw.logical_form, settings.format)
        .map_err(|e| CliError::data(format!("line {}: {e}", raw.line)))?;
    let logical_form = mask_logical_form(&lf_tokens, &utterance.table)
        .map_err(|e| CliError::data(format!("line {}: {e}", raw.line)))?;
    Ok(ExamplePair {
        utterance,
        logical_form,
    })
}

pub fn preprocess_dataset(
    raws: &[RawExample],
    lexicon: &ArgumentLexicon,
    settings: &PipelineSettings,
) -> Result<Vec<ExamplePair>> {
    raws.iter()
        .map(|raw| preprocess_example(raw, lexicon, settings))
        .collect()
}

/// Builds the input and output vocabularies from preprocessed examples.
/// Input words below `min_count` map to `<unk>`; all logical-form tokens are
/// kept. In tree mode the output corpus is the level-sequence linearization
/// (so `<n>` counts as an output token).
pub fn build_vocabs(
    examples: &[ExamplePair],
    mode: DecoderMode,
    min_count: usize,
) -> Result<(Vocabulary, Vocabulary)> {
    let q_corpus: Vec<Vec<String>> = examples
        .iter()
        .map(|e| e.utterance.tokens.clone())
        .collect();
    let mut a_corpus: Vec<Vec<String>> = Vec::with_capacity(examples.len());
    for e in examples {
        let tokens = match mode {
            DecoderMode::Seq2Seq => e.logical_form.clone(),
            DecoderMode::Seq2Tree => {
                let tree = LfTree::from_tokens(&e.logical_form)
                    .map_err(|err| CliError::data(format!("logical form: {err}")))?;
                tree.to_level_sequences()
                    .into_iter()
                    .flat_map(|s| s.tokens)
                    .collect()
            }
        };
        a_corpus.push(tokens);
    }
    Ok((
        Vocabulary::build(&q_corpus, min_count, false),
        Vocabulary::build(&a_corpus, 1, true),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nl2lf_core::text::NumberKind;

    fn settings(format: LfFormat) -> PipelineSettings {
        PipelineSettings {
            format,
            stem: false,
            argument_identification: true,
        }
    }

    #[test]
    fn prolog_example_round_trips_through_the_pipeline() {
        let lexicon = ArgumentLexicon::new(
            vec![nl2lf_core::text::LexiconEntry {
                surface: vec!["microsoft".into()],
                type_name: "com".into(),
                constant: "'microsoft'".into(),
            }],
            vec![NumberPattern::new(NumberKind::Integer, "num", "")],
        )
        .unwrap();
        let raw = RawExample {
            utterance: "what microsoft jobs pay 40000".into(),
            logical_form: "answer(company(J,'microsoft'),salary_greater_than(J,40000,year))"
                .into(),
            line: 1,
        };
        let pair = preprocess_example(&raw, &lexicon, &settings(LfFormat::Prolog)).unwrap();
        assert_eq!(
            pair.utterance.tokens,
            vec!["what", "com0", "jobs", "pay", "num0"]
        );
        assert!(pair.logical_form.contains(&"com0".to_string()));
        assert!(pair.logical_form.contains(&"num0".to_string()));

        // Unmasking and rendering reproduces the original line exactly.
        let (unmasked, _) = nl2lf_core::text::unmask(&pair.logical_form, &pair.utterance.table);
        assert_eq!(
            tokens_to_display(&unmasked, LfFormat::Prolog),
            raw.logical_form
        );
    }

    #[test]
    fn dataset_loading_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, "good utterance\t(f x)\nno tab here\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"));
        assert_eq!(err.exit_code(), 2);

        let empty = dir.path().join("empty.tsv");
        std::fs::write(&empty, "\n\n").unwrap();
        assert!(load_dataset(&empty).is_err());
    }
}
