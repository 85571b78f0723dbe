//! Five-component prompt construction and its few-shot / RAG extensions.
//!
//! A prompt is the ordered concatenation of: task description, output format,
//! optional task guidance, optional disambiguation rule, an optional
//! demonstration-shots block, an optional knowledge-snippets block, and the
//! inquiry text behind its prefix. Components are joined by single newlines;
//! shots are separated by blank lines. Rendering is byte-deterministic and
//! golden files pin the exact templates.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EntityType;
use crate::rag::KnowledgeSnippet;
use crate::selection::DemonstrationExample;
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("inquiry text is empty")]
    EmptyInquiry,
    #[error("template override error: {0}")]
    BadOverride(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The five template strings for one entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSet {
    pub task_description: String,
    pub output_format: String,
    pub task_guidance: String,
    pub disambiguation_rule: String,
    pub input_prefix: String,
}

impl ComponentSet {
    #[cfg(test)]
    fn get(&self, component: &str) -> Option<&str> {
        match component {
            "task_description" => Some(&self.task_description),
            "output_format" => Some(&self.output_format),
            "task_guidance" => Some(&self.task_guidance),
            "disambiguation_rule" => Some(&self.disambiguation_rule),
            "input_prefix" => Some(&self.input_prefix),
            _ => None,
        }
    }

    fn set(&mut self, component: &str, value: String) -> bool {
        match component {
            "task_description" => self.task_description = value,
            "output_format" => self.output_format = value,
            "task_guidance" => self.task_guidance = value,
            "disambiguation_rule" => self.disambiguation_rule = value,
            "input_prefix" => self.input_prefix = value,
            _ => return false,
        }
        true
    }
}

/// Template table for all four entity types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    sets: BTreeMap<EntityType, ComponentSet>,
}

fn builtin_set(entity_type: EntityType) -> ComponentSet {
    // The "exact" wording in the input prefix is reproduced verbatim from the
    // vendored templates.
    let (td, of, tg, dr, ip) = match entity_type {
        EntityType::RareDisease => (
            "Identify the names of rare diseases from the following text.",
            "Output only the exact rare disease names without any additional changes. If there are multiple rare diseases, separate their names with commas. If there is no rare disease, output none.",
            "Rare diseases are diseases that affect a small percentage of the population, typically fewer than 1 in 2,000 people. They are often genetic, chronic, and serious conditions, such as Myhre syndrome, Gaucher disease, or pure autonomic failure.",
            "Treat abbreviations as separate rare disease names. Do not identify regular diseases as rare diseases.",
            "The text from which you need to exact the names of rare diseases is:",
        ),
        EntityType::Disease => (
            "Identify the names of diseases from the following text.",
            "Output only the exact disease names without any additional changes. If there are multiple diseases, separate their names with commas. If there is no disease, output none.",
            "Diseases are abnormal conditions that negatively affect the structure or function of part of the body and are not rare, such as diabetes, hypertension, or influenza. They occur at appreciable frequency in the general population.",
            "Treat abbreviations as separate disease names. Do not identify rare diseases as regular diseases.",
            "The text from which you need to exact the names of diseases is:",
        ),
        EntityType::Sign => (
            "Identify the names of signs of rare diseases from the following text.",
            "Output only the exact sign names without any additional changes. If there are multiple signs, separate their names with commas. If there is no sign, output none.",
            "Signs are objective evidence of disease that can be observed or measured by others, such as a physician during an examination. They include findings like rash, swelling, or elevated blood pressure. Signs do not rely on the patient's description.",
            "Do not identify symptoms that are only felt and reported by the patient as signs. Treat each distinct sign as a separate name and do not merge different signs into one.",
            "The text from which you need to exact the signs of rare diseases is:",
        ),
        EntityType::Symptom => (
            "Identify the names of symptoms of rare diseases from the following text.",
            "Output only the exact symptom names without any additional changes. If there are multiple symptoms, separate their names with commas. If there is no symptom, output none.",
            "Symptoms are subjective experiences reported by the patient, which cannot be directly observed or measured by others. They reflect what the patient feels, such as pain, fatigue, or nausea. Symptoms are experienced internally and rely on the patient's description.",
            "Do not identify signs that can be observed or measured by others as symptoms. Treat each distinct symptom as a separate name and do not merge different symptoms into one.",
            "The text from which you need to exact the symptoms of rare diseases is:",
        ),
    };
    ComponentSet {
        task_description: td.to_string(),
        output_format: of.to_string(),
        task_guidance: tg.to_string(),
        disambiguation_rule: dr.to_string(),
        input_prefix: ip.to_string(),
    }
}

impl PromptTemplates {
    pub fn builtin() -> &'static PromptTemplates {
        static BUILTIN: OnceLock<PromptTemplates> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let sets = EntityType::ALL
                .into_iter()
                .map(|et| (et, builtin_set(et)))
                .collect();
            PromptTemplates { sets }
        })
    }

    /// Starts from the builtin templates and applies overrides from files
    /// named `<entity_type>.<component>.txt` in the given directory.
    pub fn with_overrides(dir: &Path) -> Result<PromptTemplates, PromptError> {
        let mut templates = PromptTemplates::builtin().clone();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "txt") {
                continue;
            }
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let Some((entity, component)) = stem.split_once('.') else {
                return Err(PromptError::BadOverride(format!(
                    "{}: expected <entity_type>.<component>.txt",
                    path.display()
                )));
            };
            let Some(entity_type) = EntityType::parse(entity) else {
                return Err(PromptError::BadOverride(format!(
                    "{}: unknown entity type {entity:?}",
                    path.display()
                )));
            };
            let value = std::fs::read_to_string(&path)?;
            let value = value.trim_end_matches('\n').to_string();
            let set = templates.sets.get_mut(&entity_type).unwrap();
            if !set.set(component, value) {
                return Err(PromptError::BadOverride(format!(
                    "{}: unknown component {component:?}",
                    path.display()
                )));
            }
        }
        Ok(templates)
    }

    pub fn components(&self, entity_type: EntityType) -> &ComponentSet {
        &self.sets[&entity_type]
    }
}

/// The five vendored template strings for an entity type.
pub fn render_components(entity_type: EntityType) -> &'static ComponentSet {
    PromptTemplates::builtin().components(entity_type)
}

/// Declarative description of one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub entity_type: EntityType,
    pub include_guidance: bool,
    pub include_disambiguation: bool,
    pub shots: Vec<DemonstrationExample>,
    pub snippets: Vec<KnowledgeSnippet>,
    pub inquiry_text: String,
}

impl PromptSpec {
    pub fn zero_shot(entity_type: EntityType, inquiry_text: impl Into<String>) -> PromptSpec {
        PromptSpec {
            entity_type,
            include_guidance: false,
            include_disambiguation: false,
            shots: Vec::new(),
            snippets: Vec::new(),
            inquiry_text: inquiry_text.into(),
        }
    }
}

/// Prompt section names, in their fixed concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    TaskDescription,
    OutputFormat,
    TaskGuidance,
    DisambiguationRule,
    Shots,
    Snippets,
    InputText,
}

impl Section {
    pub fn as_str(&self) -> &'static str {
        match self {
            Section::TaskDescription => "task_description",
            Section::OutputFormat => "output_format",
            Section::TaskGuidance => "task_guidance",
            Section::DisambiguationRule => "disambiguation_rule",
            Section::Shots => "shots",
            Section::Snippets => "snippets",
            Section::InputText => "input_text",
        }
    }
}

/// A rendered prompt: the exact text, the byte range of every section (ranges
/// tile the text, separators belong to the section they precede), and the
/// token count under the configured tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptText {
    pub text: String,
    pub sections: Vec<(Section, Range<usize>)>,
    pub token_count: usize,
}

impl PromptText {
    pub fn section(&self, section: Section) -> Option<&str> {
        self.sections
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, range)| &self.text[range.clone()])
    }

    pub fn has_section(&self, section: Section) -> bool {
        self.sections.iter().any(|(s, _)| *s == section)
    }
}

/// Renders one demonstration: the input text and its flattened output list
/// ("none" when empty), ending with a period.
fn render_shot(shot: &DemonstrationExample) -> String {
    let flat = if shot.output_list.is_empty() {
        "none".to_string()
    } else {
        shot.output_list.join(", ")
    };
    format!("Input text: {}\nOutput: {}.", shot.input_text, flat)
}

fn render_shots(shots: &[DemonstrationExample]) -> String {
    let rendered: Vec<String> = shots.iter().map(render_shot).collect();
    format!("Here are demonstration shots:\n{}", rendered.join("\n\n"))
}

fn render_snippets(snippets: &[KnowledgeSnippet]) -> String {
    let lines: Vec<String> = snippets
        .iter()
        .map(|s| format!("{}: {}", s.disease_name, s.definition))
        .collect();
    format!("Here are knowledge snippets:\n{}", lines.join("\n"))
}

/// Assembles the prompt for `spec` using the given templates.
pub fn assemble_with(
    spec: &PromptSpec,
    templates: &PromptTemplates,
    tokenizer: &Tokenizer,
) -> Result<PromptText, PromptError> {
    if spec.inquiry_text.is_empty() {
        return Err(PromptError::EmptyInquiry);
    }
    if spec.include_disambiguation && !spec.include_guidance {
        log::warn!("disambiguation without guidance is outside the three modeled zero-shot configurations");
    }
    let set = templates.components(spec.entity_type);

    let mut parts: Vec<(Section, String)> = vec![
        (Section::TaskDescription, set.task_description.clone()),
        (Section::OutputFormat, set.output_format.clone()),
    ];
    if spec.include_guidance {
        parts.push((Section::TaskGuidance, set.task_guidance.clone()));
    }
    if spec.include_disambiguation {
        parts.push((Section::DisambiguationRule, set.disambiguation_rule.clone()));
    }
    if !spec.shots.is_empty() {
        parts.push((Section::Shots, render_shots(&spec.shots)));
    }
    if !spec.snippets.is_empty() {
        parts.push((Section::Snippets, render_snippets(&spec.snippets)));
    }
    parts.push((
        Section::InputText,
        format!("{} {}", set.input_prefix, spec.inquiry_text),
    ));

    let mut text = String::new();
    let mut sections = Vec::with_capacity(parts.len());
    for (i, (section, body)) in parts.into_iter().enumerate() {
        let start = text.len();
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&body);
        sections.push((section, start..text.len()));
    }

    let token_count = tokenizer.count(&text);
    Ok(PromptText {
        text,
        sections,
        token_count,
    })
}

/// Assembles with the builtin templates.
pub fn assemble(spec: &PromptSpec, tokenizer: &Tokenizer) -> Result<PromptText, PromptError> {
    assemble_with(spec, PromptTemplates::builtin(), tokenizer)
}
