//! Turns a resolved [`AppConfig`] into the live pieces the CLI and server
//! share: the classifier model, prompt template, example bank, and
//! generation backend.

use std::sync::Arc;

use anyhow::{bail, Context};

use debias_core::classifier::ClassifierModel;
use debias_core::generation::{GenerationBackend, MockRewriter};
use debias_core::prompt::{ExampleBank, PromptTemplate};

use crate::config::{AppConfig, BackendKind};
use crate::defaults::{builtin_bank, builtin_lexicon, parse_lexicon};
use crate::model_file::load_model;
use crate::remote::RemoteCompletionClient;
use crate::template::{load_bank, load_template};

/// A backend that can be shared across threads and handlers.
pub type SharedBackend = Arc<dyn GenerationBackend + Send + Sync>;

/// Loads the model when a path is configured; `None` means the commands
/// that need one will refuse and the server reports `model_loaded: false`.
pub fn load_optional_model(config: &AppConfig) -> anyhow::Result<Option<ClassifierModel>> {
    match &config.model_path {
        None => Ok(None),
        Some(path) => {
            let model = load_model(path)
                .with_context(|| format!("loading model from {}", path.display()))?;
            Ok(Some(model))
        }
    }
}

/// Loads the model, erroring when none is configured.
pub fn load_required_model(config: &AppConfig) -> anyhow::Result<ClassifierModel> {
    match load_optional_model(config)? {
        Some(model) => Ok(model),
        None => bail!("no model configured; train one and set model_path (or --model)"),
    }
}

/// The prompt template: the configured file, or the built-in default.
pub fn load_template_or_default(config: &AppConfig) -> anyhow::Result<PromptTemplate> {
    match &config.template_path {
        None => Ok(PromptTemplate::default()),
        Some(path) => load_template(path)
            .with_context(|| format!("loading template from {}", path.display())),
    }
}

/// The example bank: the configured file, or the built-in default.
pub fn load_bank_or_default(config: &AppConfig) -> anyhow::Result<ExampleBank> {
    match &config.bank_path {
        None => Ok(builtin_bank()),
        Some(path) => {
            load_bank(path).with_context(|| format!("loading example bank from {}", path.display()))
        }
    }
}

/// Builds the configured generation backend.
///
/// Mock: the built-in lexicon plus any terms from `backend.lexicon`.
/// Remote: requires `backend.url`; the bearer token rides along if present.
pub fn build_backend(config: &AppConfig) -> anyhow::Result<SharedBackend> {
    match config.backend {
        BackendKind::Mock => {
            let mut lexicon = builtin_lexicon();
            if let Some(path) = &config.backend_lexicon {
                let source = std::fs::read_to_string(path)
                    .with_context(|| format!("loading lexicon from {}", path.display()))?;
                lexicon.extend(parse_lexicon(&source));
            }
            Ok(Arc::new(MockRewriter::new(lexicon)))
        }
        BackendKind::Remote => {
            let Some(url) = &config.backend_url else {
                bail!("backend = remote requires backend.url (or --backend-url)");
            };
            Ok(Arc::new(RemoteCompletionClient::new(
                url.clone(),
                config.backend_token.clone(),
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use debias_core::generation::GenerationConfig;

    #[test]
    fn the_default_backend_is_the_mock_with_the_builtin_lexicon() {
        let config = AppConfig::default();
        let backend = build_backend(&config).unwrap();
        assert_eq!(backend.id(), "mock");
        let out = backend
            .complete("Biased: you vermin ruined it\nUnbiased:", &GenerationConfig::default())
            .unwrap();
        assert_eq!(out, "you [redacted] ruined it");
    }

    #[test]
    fn a_lexicon_file_extends_the_mock_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.txt");
        std::fs::write(&path, "# extra terms\nblatherskite\n").unwrap();
        let config = AppConfig {
            backend_lexicon: Some(path),
            ..AppConfig::default()
        };
        let backend = build_backend(&config).unwrap();
        let out = backend
            .complete("Biased: what a blatherskite\nUnbiased:", &GenerationConfig::default())
            .unwrap();
        assert_eq!(out, "what a [redacted]");
    }

    #[test]
    fn remote_backend_requires_a_url() {
        let config = AppConfig {
            backend: BackendKind::Remote,
            ..AppConfig::default()
        };
        let error = match build_backend(&config) {
            Err(error) => error,
            Ok(_) => panic!("remote backend built without a url"),
        };
        assert!(error.to_string().contains("backend.url"));

        let config = AppConfig {
            backend: BackendKind::Remote,
            backend_url: Some("http://127.0.0.1:1/x".into()),
            ..AppConfig::default()
        };
        assert_eq!(build_backend(&config).unwrap().id(), "remote");
    }

    #[test]
    fn missing_model_is_none_optional_but_an_error_when_required() {
        let config = AppConfig::default();
        assert!(load_optional_model(&config).unwrap().is_none());
        assert!(load_required_model(&config).is_err());
    }

    #[test]
    fn template_and_bank_fall_back_to_builtins() {
        let config = AppConfig::default();
        assert_eq!(
            load_template_or_default(&config).unwrap(),
            PromptTemplate::default()
        );
        assert!(load_bank_or_default(&config).unwrap().len() >= 5);
    }
}
