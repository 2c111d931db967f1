//! Parameter-efficient fine-tuning job descriptors for external trainers.
//!
//! Fields a preset does not pin are `None` and omitted from the JSON, so a
//! trainer applies its own default instead of an invented value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneSpec {
    pub base_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_enable: Option<bool>,
    pub lora_r: u32,
    pub lora_alpha: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_dropout: Option<f64>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    /// `-1` lets `epochs` decide.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_device_batch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_device_eval_batch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_accum_steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    pub quant_bits: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp16: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bf16: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_checkpointing: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector_lr: Option<f64>,
}

impl FineTuneSpec {
    /// QLoRA adaptation of the PubMed-tuned Llama-2 7B text model.
    pub fn llama2_pubmed_qlora() -> Self {
        Self {
            base_model: "Llama-2-7b-pubmed".into(),
            lora_enable: None,
            lora_r: 64,
            lora_alpha: 16,
            lora_dropout: Some(0.1),
            learning_rate: 2e-4,
            weight_decay: 0.001,
            warmup_ratio: 0.03,
            optimizer: Some("paged_adamw_32bit".into()),
            scheduler: Some("cosine".into()),
            epochs: Some(1),
            max_steps: Some(-1),
            per_device_batch: Some(4),
            per_device_eval_batch: Some(4),
            grad_accum_steps: Some(1),
            max_grad_norm: Some(0.3),
            quant_bits: 4,
            // Switch both on for A100-class hardware.
            fp16: Some(false),
            bf16: Some(false),
            gradient_checkpointing: Some(true),
            projector_lr: None,
        }
    }

    /// LoRA fine-tuning of LLaVA with a Llama-2 7B backbone.
    pub fn llava_qlora() -> Self {
        Self {
            base_model: "llava-llama-2-7b".into(),
            lora_enable: Some(true),
            lora_r: 128,
            lora_alpha: 256,
            lora_dropout: None,
            learning_rate: 2e-4,
            weight_decay: 0.001,
            warmup_ratio: 0.03,
            optimizer: None,
            scheduler: None,
            epochs: None,
            max_steps: None,
            per_device_batch: None,
            per_device_eval_batch: None,
            grad_accum_steps: None,
            max_grad_norm: None,
            quant_bits: 4,
            fp16: None,
            bf16: None,
            gradient_checkpointing: None,
            projector_lr: Some(2e-5),
        }
    }

    /// Bundled presets with their file stems.
    pub fn presets() -> Vec<(&'static str, FineTuneSpec)> {
        vec![
            ("llama2-7b-pubmed-qlora", Self::llama2_pubmed_qlora()),
            ("llava-llama2-7b-qlora", Self::llava_qlora()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be > 0, got {v}")))
            }
        }
        if self.base_model.trim().is_empty() {
            return Err(Error::validation("base_model", "must not be empty"));
        }
        if self.lora_r == 0 {
            return Err(Error::validation("lora_r", "must be at least 1"));
        }
        if self.lora_alpha == 0 {
            return Err(Error::validation("lora_alpha", "must be at least 1"));
        }
        if let Some(p) = self.lora_dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::validation("lora_dropout", format!("must be in [0, 1), got {p}")));
            }
        }
        positive("learning_rate", self.learning_rate)?;
        if let Some(lr) = self.projector_lr {
            positive("projector_lr", lr)?;
        }
        if let Some(n) = self.max_grad_norm {
            positive("max_grad_norm", n)?;
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation("weight_decay", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::validation("warmup_ratio", "must be in [0, 1]"));
        }
        if ![4, 8, 16].contains(&self.quant_bits) {
            return Err(Error::validation(
                "quant_bits",
                format!("must be 4, 8 or 16, got {}", self.quant_bits),
            ));
        }
        for (field, v) in [
            ("epochs", self.epochs),
            ("per_device_batch", self.per_device_batch),
            ("per_device_eval_batch", self.per_device_eval_batch),
            ("grad_accum_steps", self.grad_accum_steps),
        ] {
            if v == Some(0) {
                return Err(Error::validation(field, "must be at least 1"));
            }
        }
        if matches!(self.max_steps, Some(s) if s < -1 || s == 0) {
            return Err(Error::validation("max_steps", "must be -1 or positive"));
        }
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn emit_finetune_job(spec: &FineTuneSpec) -> Result<String> {
    spec.validate()?;
    let mut json = serde_json::to_string_pretty(spec)?;
    json.push('\n');
    Ok(json)
}

pub fn parse_finetune_job(json: &str) -> Result<FineTuneSpec> {
    let spec: FineTuneSpec = serde_json::from_str(json)?;
    spec.validate()?;
    Ok(spec)
}
