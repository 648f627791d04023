//! Cross-module integration tests exercised strictly through the public
//! API, the way the companion crate and other consumers use it: corpus
//! preparation, training, prompt rendering, generation retry, the
//! classify-then-rewrite pipeline, and the serialized report layout.

use std::cell::{Cell, RefCell};
use std::time::Duration;

use debias_core::classifier::{predict_with_threshold, train, TrainConfig, TrainError};
use debias_core::corpus::{
    balance, split, BalanceConfig, BalanceError, BalanceTarget, Corpus, Label, LabeledExample,
    SplitError,
};
use debias_core::features::{FeatureConfig, FeatureConfigError};
use debias_core::generation::{
    debias, generate, GenerateError, GenerationBackend, GenerationConfig, MockRewriter,
};
use debias_core::metrics::{eval_report, BiasReport, ConfusionMatrix};
use debias_core::pipeline::{evaluate_corpus, DebiasContext, PipelineConfig};
use debias_core::prompt::{build_prompt, ExampleBank, FewShotExample, PromptError, PromptTemplate};

const SLURS: [&str; 2] = ["grok", "blatherskite"];

fn frame(index: usize, a: &str, b: &str) -> String {
    match index % 4 {
        0 => format!("the {a} by the {b} looks fine"),
        1 => format!("we passed the {a} and the {b} today"),
        2 => format!("a small {a} sits near the {b}"),
        _ => format!("that {a} and this {b} match well"),
    }
}

/// A deliberately skewed corpus: three hateful texts for every neutral one.
/// Hateful texts are neutral frames with a slur injected, so redacting the
/// slur returns them to in-distribution neutral vocabulary.
fn skewed_corpus() -> Corpus {
    let fillers = ["garden", "harbor", "teapot", "melody", "willow", "meadow"];
    let mut examples = Vec::new();
    let mut id = 0u64;
    for i in 0..30usize {
        let a = fillers[i % fillers.len()];
        let b = fillers[(i + 2) % fillers.len()];
        let slur = SLURS[i % SLURS.len()];
        examples.push(LabeledExample::new(
            id,
            frame(i, &format!("{slur} {a}"), b),
            Label::Hate,
        ));
        id += 1;
        if i % 3 == 0 {
            examples.push(LabeledExample::new(id, frame(i, a, b), Label::NoHate));
            id += 1;
        }
    }
    Corpus::from_examples(examples).expect("valid corpus")
}

#[test]
fn balance_train_and_evaluate_end_to_end() {
    let raw = skewed_corpus();
    assert_eq!(raw.count(Label::Hate), 30);
    assert_eq!(raw.count(Label::NoHate), 10);

    let balanced = balance(&raw, &BalanceConfig::default()).expect("balances");
    assert_eq!(balanced.count(Label::Hate), 20);
    assert_eq!(balanced.count(Label::NoHate), 20);

    let (train_set, eval_set) = split(&balanced, 0.25, 42).expect("splits");
    assert_eq!(train_set.len() + eval_set.len(), balanced.len());
    assert_eq!(eval_set.count(Label::Hate), 5);
    assert_eq!(eval_set.count(Label::NoHate), 5);

    let feature_config = FeatureConfig {
        dimension: 1 << 12,
        ..FeatureConfig::default()
    };
    let train_config = TrainConfig {
        epochs: 30,
        learning_rate: 0.5,
        weight_decay: 0.0,
        batch_size: 8,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut epochs_seen = 0usize;
    let model = train(&train_set, &feature_config, &train_config, |_, loss| {
        epochs_seen += 1;
        assert!(loss.is_finite());
    })
    .expect("training succeeds");
    assert_eq!(epochs_seen, 30);

    let rewriter = MockRewriter::new(SLURS);
    let template = PromptTemplate::default();
    let bank = ExampleBank::from_examples([
        FewShotExample::new("awful people everywhere", "people I disagree with"),
        FewShotExample::new("they are the worst", "I dislike their position"),
    ])
    .expect("valid bank");
    let ctx = DebiasContext::new(&template, &bank, &rewriter);
    let pipeline = PipelineConfig {
        k: 2,
        ..PipelineConfig::default()
    };

    let (outcomes, report) =
        evaluate_corpus(&eval_set, &model, &ctx, &pipeline).expect("evaluation runs");
    assert_eq!(outcomes.len(), eval_set.len());
    assert!(report.f1 >= 0.9, "F1 {}", report.f1);

    let bias = report.bias.expect("bias block present");
    assert_eq!(bias.n, eval_set.len() as u64);
    assert!(bias.reduction.expect("reduction present") > 0.0);
    assert!(bias.fp_rate_on_nonhate_pre.is_some());
    assert!(bias.fp_rate_on_nonhate_post.is_some());

    // Hateful texts got rewritten and de-scored; neutral ones passed through.
    for outcome in &outcomes {
        if outcome.rewrite.is_some() {
            assert!(outcome.final_text.contains("[redacted]"));
            let post = outcome.post.as_ref().expect("reclassified").p_hate;
            assert!(post < outcome.pre.p_hate);
        } else {
            assert_eq!(outcome.final_text, outcome.input);
        }
    }

    // On a fresh phrasing, injecting a slur must raise the score and flag it.
    let clean = predict_with_threshold(&model, "the garden by the harbor looks fine", 0.5);
    let slurred = predict_with_threshold(&model, "the grok garden by the harbor looks fine", 0.5);
    assert_eq!(slurred.label, Label::Hate);
    assert!(slurred.p_hate > clean.p_hate);
}

/// Scripted backend: fails a fixed number of times, then succeeds, while
/// recording every pause the retry loop hands it.
struct Flaky {
    failures_left: Cell<u32>,
    calls: Cell<u32>,
    pauses: RefCell<Vec<Duration>>,
    error: GenerateError,
}

impl Flaky {
    fn new(failures: u32, error: GenerateError) -> Self {
        Self {
            failures_left: Cell::new(failures),
            calls: Cell::new(0),
            pauses: RefCell::new(Vec::new()),
            error,
        }
    }
}

impl GenerationBackend for Flaky {
    fn id(&self) -> &str {
        "flaky"
    }
    fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenerateError> {
        self.calls.set(self.calls.get() + 1);
        if self.failures_left.get() > 0 {
            self.failures_left.set(self.failures_left.get() - 1);
            Err(self.error.clone())
        } else {
            Ok("recovered text".to_string())
        }
    }
    fn pause(&self, delay: Duration) {
        self.pauses.borrow_mut().push(delay);
    }
}

#[test]
fn retry_recovers_from_server_errors_with_bounded_jitter() {
    let backend = Flaky::new(
        2,
        GenerateError::Backend {
            status: Some(503),
            message: "overloaded".into(),
        },
    );
    let config = GenerationConfig {
        max_retries: 2,
        seed: 17,
        ..GenerationConfig::default()
    };

    let generation = generate(&backend, "some prompt", &config).expect("third attempt succeeds");
    assert_eq!(generation.text, "recovered text");
    assert_eq!(generation.attempts, 3);
    assert_eq!(backend.calls.get(), 3);

    // Full-jitter backoff: delay n is uniform in [0, 250 * 2^n] ms.
    let pauses = backend.pauses.borrow().clone();
    assert_eq!(pauses.len(), 2);
    assert!(pauses[0] <= Duration::from_millis(250), "{:?}", pauses[0]);
    assert!(pauses[1] <= Duration::from_millis(500), "{:?}", pauses[1]);

    // The jitter sequence is a pure function of the seed.
    let replay = Flaky::new(
        2,
        GenerateError::Backend {
            status: Some(503),
            message: "overloaded".into(),
        },
    );
    generate(&replay, "some prompt", &config).expect("same outcome");
    assert_eq!(*replay.pauses.borrow(), pauses);
}

#[test]
fn client_errors_fail_fast_without_pausing() {
    let backend = Flaky::new(
        u32::MAX,
        GenerateError::Backend {
            status: Some(400),
            message: "bad request".into(),
        },
    );
    let config = GenerationConfig {
        max_retries: 5,
        ..GenerationConfig::default()
    };

    let error = generate(&backend, "some prompt", &config).expect_err("must fail");
    assert!(!error.is_retryable());
    assert_eq!(backend.calls.get(), 1);
    assert!(backend.pauses.borrow().is_empty());
}

#[test]
fn empty_completions_are_retried_then_reported() {
    struct AlwaysEmpty;
    impl GenerationBackend for AlwaysEmpty {
        fn id(&self) -> &str {
            "empty"
        }
        fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenerateError> {
            Ok("   ".to_string())
        }
    }
    let config = GenerationConfig {
        max_retries: 1,
        ..GenerationConfig::default()
    };
    let error = generate(&AlwaysEmpty, "some prompt", &config).expect_err("stays empty");
    assert_eq!(error, GenerateError::EmptyGeneration);
}

#[test]
fn default_prompt_layout_is_stable() {
    // Uncategorized examples form a single group, so selection follows bank
    // order for every seed and the layout is fully predictable.
    let bank = ExampleBank::from_examples([
        FewShotExample::new("first bad", "first good"),
        FewShotExample::new("second bad", "second good"),
    ])
    .expect("valid bank");

    let prompt = build_prompt(&PromptTemplate::default(), &bank, 2, "you are vermin", 123)
        .expect("renders");
    assert_eq!(
        prompt,
        "Rewrite the following comment to remove hateful or biased language.\n\n\
         Biased: first bad\nUnbiased: first good\n\n\
         Biased: second bad\nUnbiased: second good\n\n\
         Biased: you are vermin\nUnbiased:"
    );
}

#[test]
fn debias_round_trip_through_the_rendered_prompt() {
    let rewriter = MockRewriter::new(["vermin"]);
    let bank = ExampleBank::from_examples([FewShotExample::new("bad words", "kind words")])
        .expect("valid bank");
    let result = debias(
        "you vermin ruin things",
        &PromptTemplate::default(),
        &bank,
        1,
        &GenerationConfig::default(),
        &rewriter,
    )
    .expect("rewrites");

    assert_eq!(result.original, "you vermin ruin things");
    assert_eq!(result.rewritten, "you [redacted] ruin things");
    assert_eq!(result.backend_id, "mock");
    assert_eq!(result.k_used, 1);
    assert_eq!(result.attempts, 1);
    assert!(result.prompt_rendered.ends_with("Biased: you vermin ruin things\nUnbiased:"));
}

#[test]
fn error_surfaces_are_typed_and_precise() {
    // Training refuses a single-class corpus.
    let one_sided = Corpus::from_examples([
        LabeledExample::new(0, "angry words", Label::Hate),
        LabeledExample::new(1, "more angry words", Label::Hate),
    ])
    .expect("valid corpus");
    let result = train(
        &one_sided,
        &FeatureConfig::default(),
        &TrainConfig::default(),
        |_, _| {},
    );
    assert!(matches!(result, Err(TrainError::SingleClassCorpus)));

    // Balancing needs both classes present.
    assert_eq!(
        balance(&one_sided, &BalanceConfig::default()),
        Err(BalanceError::EmptyClass(Label::NoHate))
    );
    assert_eq!(
        balance(
            &skewed_corpus(),
            &BalanceConfig {
                target_per_class: BalanceTarget::Exact(0),
                seed: 0
            }
        ),
        Err(BalanceError::TargetBelowOne)
    );

    // Split fractions must be strictly inside (0, 1).
    assert_eq!(
        split(&one_sided, 1.5, 0).unwrap_err(),
        SplitError::InvalidFraction(1.5)
    );

    // Prompts cannot request more examples than the bank holds.
    let tiny_bank =
        ExampleBank::from_examples([FewShotExample::new("a", "b")]).expect("valid bank");
    assert_eq!(
        build_prompt(&PromptTemplate::default(), &tiny_bank, 3, "text", 0).unwrap_err(),
        PromptError::NotEnoughExamples {
            requested: 3,
            available: 1
        }
    );

    // Temperature outside [0.1, 1.0] needs the explicit escape hatch.
    let hot = GenerationConfig {
        temperature: 1.5,
        ..GenerationConfig::default()
    };
    assert!(hot.validate().is_err());
    let allowed = GenerationConfig {
        allow_temperature_out_of_range: true,
        ..hot
    };
    assert!(allowed.validate().is_ok());

    // Feature dimensions must be powers of two.
    let mut odd = FeatureConfig {
        dimension: 100,
        ..FeatureConfig::default()
    };
    assert_eq!(odd.validate(), Err(FeatureConfigError::BadDimension(100)));
}

#[test]
fn report_json_uses_the_documented_keys() {
    let mut report = eval_report(ConfusionMatrix::new(45, 5, 35, 15));
    report.bias = Some(BiasReport::from_means(100, Some(0.6), Some(0.2)));
    let value = serde_json::to_value(&report).expect("serializes");

    assert_eq!(value["counts"]["tp"], 45);
    assert_eq!(value["counts"]["fp"], 5);
    assert_eq!(value["counts"]["tn"], 35);
    assert_eq!(value["counts"]["fn"], 15);
    for key in ["accuracy", "precision", "recall", "f1", "fpr", "fnr"] {
        assert!(value[key].is_f64(), "missing {key}");
    }
    assert_eq!(value["bias"]["n"], 100);
    assert!((value["bias"]["reduction"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}
