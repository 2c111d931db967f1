//! Text generation backends.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;

use crate::error::{Error, Result};
use crate::http::{ChatMessage, ChatRequest, ChatResponse, JsonClient};

/// Anything that turns a prompt into text.
pub trait Generator: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// A chat-completions server.
#[derive(Debug)]
pub struct ChatGenerator {
    client: JsonClient,
    model: String,
    system_prompt: Option<String>,
}

impl ChatGenerator {
    pub fn new(
        endpoint: &str,
        model: impl Into<String>,
        timeout: Duration,
        max_in_flight: usize,
    ) -> Self {
        Self {
            client: JsonClient::new(endpoint, timeout, max_in_flight),
            model: model.into(),
            system_prompt: None,
        }
    }

    pub fn with_system_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.system_prompt = Some(prompt.into());
        self
    }
}

impl Generator for ChatGenerator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &self.system_prompt {
            messages.push(ChatMessage::system(system.clone()));
        }
        messages.push(ChatMessage::user(prompt));
        let request = ChatRequest {
            model: &self.model,
            messages,
        };
        let response: ChatResponse = self.client.post("/chat/completions", &request)?;
        response.into_text()
    }
}

static SOURCE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[S\d+:[^\]\s]+\]").unwrap());

/// Offline backend that answers with every source tag found in the prompt,
/// in order of appearance.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let tags: Vec<&str> = SOURCE_TAG.find_iter(prompt).map(|m| m.as_str()).collect();
        if tags.is_empty() {
            Ok("No sources were provided.".to_string())
        } else {
            Ok(format!("Based on {}.", tags.join(" ")))
        }
    }
}

/// Replays fixed replies, cycling when exhausted.
#[derive(Debug)]
pub struct ScriptedGenerator {
    replies: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedGenerator {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "scripted generator needs at least one reply");
        Self {
            replies,
            next: AtomicUsize::new(0),
        }
    }
}

impl Generator for ScriptedGenerator {
    fn complete(&self, _prompt: &str) -> Result<String> {
        let i = self.next.fetch_add(1, Ordering::Relaxed);
        Ok(self.replies[i % self.replies.len()].clone())
    }
}

/// Always fails with a transport error.
#[derive(Debug, Clone)]
pub struct FailingGenerator {
    message: String,
}

impl FailingGenerator {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

impl Generator for FailingGenerator {
    fn complete(&self, _prompt: &str) -> Result<String> {
        Err(Error::Transport {
            attempts: 1,
            message: self.message.clone(),
        })
    }
}
