//! The two-stage classify-then-debias flow: score a text, rewrite it when
//! it crosses the hate threshold, optionally re-score the rewrite, and
//! aggregate pre/post bias reports over batches.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{predict_with_threshold, Classification, ClassifierModel};
use crate::corpus::{Corpus, Label};
use crate::generation::{
    debias, DebiasError, DebiasResult, GenerationBackend, GenerationConfig,
    GenerationConfigError,
};
use crate::metrics::{confusion, eval_report, mean_score, BiasReport, EvalReport};
use crate::prompt::{ExampleBank, PromptTemplate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineConfigError {
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    ThresholdOutOfRange(f64),
    #[error(transparent)]
    Generation(#[from] GenerationConfigError),
}

/// Settings for the classify-then-debias pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Decision threshold τ: texts with `p_hate ≥ τ` are debiased.
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    /// Few-shot example count for the debias prompt.
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default)]
    pub gen: GenerationConfig,
    /// Re-classify the rewritten text to produce a post score.
    #[serde(default = "d_reclassify")]
    pub reclassify: bool,
    /// When set, a debias failure is returned as an error instead of
    /// falling open (emitting the original text with a warning).
    #[serde(default)]
    pub fail_closed: bool,
}

fn d_threshold() -> f64 {
    0.5
}
fn d_k() -> usize {
    5
}
fn d_reclassify() -> bool {
    true
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            k: 5,
            gen: GenerationConfig::default(),
            reclassify: true,
            fail_closed: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineConfigError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PipelineConfigError::ThresholdOutOfRange(self.threshold));
        }
        self.gen.validate()?;
        Ok(())
    }
}

/// Everything the debias stage needs besides the text: prompt wording,
/// example bank, and the generation backend.
pub struct DebiasContext<'a, B: ?Sized> {
    pub template: &'a PromptTemplate,
    pub bank: &'a ExampleBank,
    pub backend: &'a B,
}

impl<'a, B: ?Sized> DebiasContext<'a, B> {
    pub fn new(template: &'a PromptTemplate, bank: &'a ExampleBank, backend: &'a B) -> Self {
        Self {
            template,
            bank,
            backend,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] PipelineConfigError),
    #[error("debiasing failed: {0}")]
    DebiasFailed(#[from] DebiasError),
}

/// The pipeline's verdict on one text.
///
/// `rewrite` is present exactly when the pre-classification crossed the
/// threshold and the debiaser succeeded; on failure the original text
/// passes through (`final_text = input`) with `warning` explaining why.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub input: String,
    pub pre: Classification,
    pub rewrite: Option<DebiasResult>,
    /// Classification of the rewritten text, when reclassification is on.
    pub post: Option<Classification>,
    pub final_text: String,
    pub warning: Option<String>,
}

impl PipelineOutcome {
    /// The bias score of what the pipeline emitted: the post score when the
    /// text was rewritten and re-scored, otherwise the pre score (an
    /// unchanged text keeps its score).
    pub fn final_score(&self) -> f64 {
        match (&self.rewrite, &self.post) {
            (Some(_), Some(post)) => post.p_hate,
            _ => self.pre.p_hate,
        }
    }

    /// The label of `final_text` under the same threshold regime.
    pub fn final_label(&self) -> Label {
        match (&self.rewrite, &self.post) {
            (Some(_), Some(post)) => post.label,
            _ => self.pre.label,
        }
    }
}

/// JSONL-facing flattening of a [`PipelineOutcome`]; one object per line in
/// batch output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub input: String,
    pub p_hate_pre: f64,
    pub rewritten: Option<String>,
    pub p_hate_post: Option<f64>,
    pub final_text: String,
    pub warning: Option<String>,
}

impl From<&PipelineOutcome> for OutcomeRecord {
    fn from(outcome: &PipelineOutcome) -> Self {
        Self {
            input: outcome.input.clone(),
            p_hate_pre: outcome.pre.p_hate,
            rewritten: outcome.rewrite.as_ref().map(|r| r.rewritten.clone()),
            p_hate_post: outcome.post.map(|p| p.p_hate),
            final_text: outcome.final_text.clone(),
            warning: outcome.warning.clone(),
        }
    }
}

/// Runs one text through classify-then-debias.
///
/// Texts scoring below the threshold are passed through untouched with zero
/// backend calls. A failed rewrite fails open by default — the outcome
/// carries the original text and a warning — or surfaces as
/// [`PipelineError::DebiasFailed`] when `config.fail_closed` is set.
pub fn process<B: GenerationBackend + ?Sized>(
    text: &str,
    model: &ClassifierModel,
    ctx: &DebiasContext<'_, B>,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let pre = predict_with_threshold(model, text, config.threshold);
    if pre.label != Label::Hate {
        return Ok(PipelineOutcome {
            input: text.into(),
            pre,
            rewrite: None,
            post: None,
            final_text: text.into(),
            warning: None,
        });
    }
    match debias(text, ctx.template, ctx.bank, config.k, &config.gen, ctx.backend) {
        Ok(result) => {
            let post = config
                .reclassify
                .then(|| predict_with_threshold(model, &result.rewritten, config.threshold));
            let final_text = result.rewritten.clone();
            Ok(PipelineOutcome {
                input: text.into(),
                pre,
                rewrite: Some(result),
                post,
                final_text,
                warning: None,
            })
        }
        Err(error) if config.fail_closed => Err(error.into()),
        Err(error) => Ok(PipelineOutcome {
            input: text.into(),
            pre,
            rewrite: None,
            post: None,
            final_text: text.into(),
            warning: Some(format!("debias failed, passing original through: {error}")),
        }),
    }
}

/// Applies [`process`] to every text in order and aggregates the
/// pre/post-debias bias report.
///
/// Item failures never abort the batch: each text is processed fail-open
/// and failures are recorded in the outcome warnings. The report's `post`
/// mean uses each outcome's [`PipelineOutcome::final_score`].
pub fn batch_process<B: GenerationBackend + ?Sized, S: AsRef<str>>(
    texts: &[S],
    model: &ClassifierModel,
    ctx: &DebiasContext<'_, B>,
    config: &PipelineConfig,
) -> Result<(Vec<PipelineOutcome>, BiasReport), PipelineError> {
    config.validate()?;
    let fail_open = PipelineConfig {
        fail_closed: false,
        ..config.clone()
    };
    let mut outcomes = Vec::with_capacity(texts.len());
    for text in texts {
        let outcome = process(text.as_ref(), model, ctx, &fail_open)
            .expect("fail-open processing with a validated config cannot error");
        outcomes.push(outcome);
    }
    let pre_scores: Vec<f64> = outcomes.iter().map(|o| o.pre.p_hate).collect();
    let post_scores: Vec<f64> = outcomes.iter().map(PipelineOutcome::final_score).collect();
    let report = BiasReport::from_means(
        outcomes.len() as u64,
        mean_score(&pre_scores),
        mean_score(&post_scores),
    );
    Ok((outcomes, report))
}

/// Evaluates the full pipeline on a labeled corpus.
///
/// Classification metrics come from the pre-debias predictions against the
/// corpus labels. The bias block reports the mean pre/post scores over all
/// texts plus both false-positive-tendency columns: the share of truly
/// non-hateful texts flagged hateful before debiasing, and the same share
/// measured on what the pipeline finally emitted.
pub fn evaluate_corpus<B: GenerationBackend + ?Sized>(
    corpus: &Corpus,
    model: &ClassifierModel,
    ctx: &DebiasContext<'_, B>,
    config: &PipelineConfig,
) -> Result<(Vec<PipelineOutcome>, EvalReport), PipelineError> {
    let texts: Vec<&str> = corpus.iter().map(|e| e.text.as_str()).collect();
    let (outcomes, mut bias) = batch_process(&texts, model, ctx, config)?;

    let predictions: Vec<Label> = outcomes.iter().map(|o| o.pre.label).collect();
    let truths: Vec<Label> = corpus.iter().map(|e| e.label).collect();
    let cm = confusion(&predictions, &truths)
        .expect("outcomes are in one-to-one correspondence with the corpus");
    let mut report = eval_report(cm);

    let nonhate: Vec<usize> = (0..truths.len())
        .filter(|&i| truths[i] == Label::NoHate)
        .collect();
    if !nonhate.is_empty() {
        let flagged = |label: Label| -> f64 {
            if label == Label::Hate {
                1.0
            } else {
                0.0
            }
        };
        let pre_rate = nonhate
            .iter()
            .map(|&i| flagged(outcomes[i].pre.label))
            .sum::<f64>()
            / nonhate.len() as f64;
        let post_rate = nonhate
            .iter()
            .map(|&i| flagged(outcomes[i].final_label()))
            .sum::<f64>()
            / nonhate.len() as f64;
        bias.fp_rate_on_nonhate_pre = Some(pre_rate);
        bias.fp_rate_on_nonhate_post = Some(post_rate);
    }
    report.bias = Some(bias);
    Ok((outcomes, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, TrainConfig};
    use crate::corpus::LabeledExample;
    use crate::features::FeatureConfig;
    use crate::generation::{GenerateError, MockRewriter};
    use alloc::string::ToString;
    use alloc::vec;

    const SLURS: &[&str] = &["grok", "blatherskite"];

    fn lexicon_corpus() -> Corpus {
        let hateful = [
            "you grok ruin everything",
            "what a blatherskite mess you make",
            "the grok crowd is at it again",
            "another blatherskite rant",
        ];
        let neutral = [
            "the garden looks lovely today",
            "a fine melody on the radio",
            "sunshine after the rain",
            "tea and biscuits at noon",
        ];
        let mut examples = Vec::new();
        for (i, t) in hateful.iter().enumerate() {
            examples.push(LabeledExample::new(i as u64, *t, Label::Hate));
        }
        for (i, t) in neutral.iter().enumerate() {
            examples.push(LabeledExample::new((hateful.len() + i) as u64, *t, Label::NoHate));
        }
        Corpus::from_examples(examples).unwrap()
    }

    fn trained_model() -> ClassifierModel {
        let feature_config = FeatureConfig {
            dimension: 1 << 8,
            ..FeatureConfig::default()
        };
        let train_config = TrainConfig {
            epochs: 60,
            learning_rate: 0.5,
            weight_decay: 0.0,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        train(&lexicon_corpus(), &feature_config, &train_config, |_, _| {}).unwrap()
    }

    fn zero_model() -> ClassifierModel {
        ClassifierModel::zeroed(
            FeatureConfig {
                dimension: 1 << 8,
                ..FeatureConfig::default()
            },
            TrainConfig::default(),
        )
        .unwrap()
    }

    /// A backend that always fails with the given error.
    struct Failing(GenerateError);

    impl GenerationBackend for Failing {
        fn id(&self) -> &str {
            "failing"
        }
        fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenerateError> {
            Err(self.0.clone())
        }
    }

    fn mock_ctx<'a>(
        template: &'a PromptTemplate,
        bank: &'a ExampleBank,
        mock: &'a MockRewriter,
    ) -> DebiasContext<'a, MockRewriter> {
        DebiasContext::new(template, bank, mock)
    }

    fn zero_shot_config() -> PipelineConfig {
        PipelineConfig {
            k: 0,
            gen: GenerationConfig {
                max_retries: 0,
                ..GenerationConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn non_hateful_text_passes_through_with_zero_backend_calls() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let outcome = process("the garden looks lovely today", &model, &ctx, &zero_shot_config())
            .unwrap();
        assert_eq!(outcome.final_text, outcome.input);
        assert!(outcome.rewrite.is_none());
        assert!(outcome.post.is_none());
        assert!(outcome.warning.is_none());
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn hateful_text_is_rewritten_and_scores_drop() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let outcome = process("you grok ruin everything", &model, &ctx, &zero_shot_config())
            .unwrap();
        let rewrite = outcome.rewrite.as_ref().expect("hateful text must be rewritten");
        assert!(rewrite.rewritten.contains("[redacted]"));
        let post = outcome.post.expect("reclassification is on by default");
        assert!(
            post.p_hate < outcome.pre.p_hate,
            "post {} should be below pre {}",
            post.p_hate,
            outcome.pre.p_hate
        );
        assert_eq!(outcome.final_text, rewrite.rewritten);
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn backend_failure_fails_open_with_warning() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let failing = Failing(GenerateError::Timeout);
        let ctx = DebiasContext::new(&template, &bank, &failing);

        let outcome = process("you grok ruin everything", &model, &ctx, &zero_shot_config())
            .unwrap();
        assert_eq!(outcome.final_text, outcome.input);
        assert!(outcome.rewrite.is_none());
        let warning = outcome.warning.expect("failure must be recorded");
        assert!(warning.contains("timed out"), "warning: {warning}");
    }

    #[test]
    fn fail_closed_surfaces_the_error() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let failing = Failing(GenerateError::Timeout);
        let ctx = DebiasContext::new(&template, &bank, &failing);
        let config = PipelineConfig {
            fail_closed: true,
            ..zero_shot_config()
        };

        let result = process("you grok ruin everything", &model, &ctx, &config);
        assert!(matches!(result, Err(PipelineError::DebiasFailed(_))));
    }

    #[test]
    fn invalid_threshold_is_rejected() {
        let model = zero_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);
        for threshold in [0.0, 1.0, -0.5, f64::NAN] {
            let config = PipelineConfig {
                threshold,
                ..zero_shot_config()
            };
            assert!(matches!(
                process("text", &model, &ctx, &config),
                Err(PipelineError::Config(PipelineConfigError::ThresholdOutOfRange(_)))
            ));
        }
    }

    #[test]
    fn non_hate_path_is_idempotent() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);
        let config = zero_shot_config();

        let first = process("sunshine after the rain", &model, &ctx, &config).unwrap();
        assert!(first.rewrite.is_none());
        let second = process(&first.final_text, &model, &ctx, &config).unwrap();
        assert_eq!(second.final_text, first.final_text);
    }

    #[test]
    fn batch_reduces_mean_bias_on_hateful_texts() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let texts = vec![
            "you grok ruin everything".to_string(),
            "another blatherskite rant".to_string(),
            "the garden looks lovely today".to_string(),
        ];
        let (outcomes, report) = batch_process(&texts, &model, &ctx, &zero_shot_config()).unwrap();
        assert_eq!(outcomes.len(), 3);
        // Order preservation.
        for (outcome, text) in outcomes.iter().zip(&texts) {
            assert_eq!(&outcome.input, text);
        }
        let (pre, post) = (report.pre.unwrap(), report.post.unwrap());
        assert!(post < pre, "post {post} should be below pre {pre}");
        assert_eq!(report.reduction, Some(pre - post));
        assert_eq!(report.n, 3);
    }

    #[test]
    fn all_neutral_batch_has_zero_reduction() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let texts = vec![
            "the garden looks lovely today".to_string(),
            "tea and biscuits at noon".to_string(),
        ];
        let (_, report) = batch_process(&texts, &model, &ctx, &zero_shot_config()).unwrap();
        assert_eq!(report.pre, report.post);
        assert_eq!(report.reduction, Some(0.0));
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn empty_batch_yields_null_means() {
        let model = zero_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let texts: Vec<String> = Vec::new();
        let (outcomes, report) = batch_process(&texts, &model, &ctx, &zero_shot_config()).unwrap();
        assert!(outcomes.is_empty());
        assert_eq!(report.n, 0);
        assert_eq!(report.pre, None);
        assert_eq!(report.post, None);
        assert_eq!(report.reduction, None);
    }

    #[test]
    fn gating_matches_backend_call_count() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let texts = vec![
            "you grok ruin everything".to_string(),
            "a fine melody on the radio".to_string(),
            "what a blatherskite mess you make".to_string(),
        ];
        let (outcomes, _) = batch_process(&texts, &model, &ctx, &zero_shot_config()).unwrap();
        let gated = outcomes.iter().filter(|o| o.pre.label == Label::Hate).count() as u64;
        assert_eq!(mock.calls(), gated);
        assert_eq!(gated, 2);
    }

    #[test]
    fn evaluate_corpus_fills_the_bias_block() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let (outcomes, report) =
            evaluate_corpus(&lexicon_corpus(), &model, &ctx, &zero_shot_config()).unwrap();
        assert_eq!(outcomes.len(), 8);
        assert_eq!(report.counts.total(), 8);
        // The trained model separates this tiny corpus perfectly.
        assert_eq!(report.counts.true_positive, 4);
        assert_eq!(report.counts.true_negative, 4);
        assert_eq!(report.f1, 1.0);
        let bias = report.bias.expect("bias block present");
        assert_eq!(bias.n, 8);
        assert!(bias.reduction.unwrap() > 0.0);
        assert_eq!(bias.fp_rate_on_nonhate_pre, Some(0.0));
        assert_eq!(bias.fp_rate_on_nonhate_post, Some(0.0));
    }

    #[test]
    fn outcome_record_flattens_for_jsonl() {
        let model = trained_model();
        let template = PromptTemplate::default();
        let bank = ExampleBank::default();
        let mock = MockRewriter::new(SLURS.iter().copied());
        let ctx = mock_ctx(&template, &bank, &mock);

        let rewritten = process("you grok ruin everything", &model, &ctx, &zero_shot_config())
            .unwrap();
        let record = OutcomeRecord::from(&rewritten);
        let json = serde_json::to_value(&record).unwrap();
        assert_eq!(json["input"], "you grok ruin everything");
        let p_pre = json["p_hate_pre"].as_f64().unwrap();
        assert!(p_pre > 0.5);
        assert!(json["rewritten"].as_str().unwrap().contains("[redacted]"));
        // Redaction removes the slur features, so the score drops; the
        // other hate-only words keep it from collapsing all the way.
        assert!(json["p_hate_post"].as_f64().unwrap() < p_pre);
        assert_eq!(json["warning"], serde_json::Value::Null);

        let untouched = process("tea and biscuits at noon", &model, &ctx, &zero_shot_config())
            .unwrap();
        let record = OutcomeRecord::from(&untouched);
        let json = serde_json::to_value(&record).unwrap();
        assert_eq!(json["rewritten"], serde_json::Value::Null);
        assert_eq!(json["p_hate_post"], serde_json::Value::Null);
        assert_eq!(json["final_text"], "tea and biscuits at noon");
    }
}
