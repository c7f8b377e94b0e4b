//! Prompt templates with byte-exact placeholder substitution.
//!
//! Template bodies ship as plain-text assets and are embedded at compile
//! time; golden copies of the rendered output live alongside them so drift
//! in a body is caught byte-for-byte.
//!
//! Placeholders use double-brace markers (`{{original_question}}`) drawn
//! from a fixed whitelist. Everything else, including single braces in math
//! or JSON text, passes through untouched.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

/// Placeholder names a template body may contain.
pub const PLACEHOLDER_NAMES: [&str; 3] =
    ["original_question", "candidate_solution", "variant_question"];

/// Identifies one of the shipped prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    /// Exemplar-conditioned solving prompt used for utility scoring.
    Cbu,
    /// 1-10 integer-rubric judge prompt.
    JudgeDefault,
    /// 0-7 XML-output proof-grading judge prompt.
    JudgeProofgrader,
    /// Binary accept/reject judge prompt.
    JudgeUq,
    /// Practice-problem generation prompt for neighborhood curation.
    VariantGen,
    /// Reasoning-failure tagging prompt with strict JSON output.
    ErrorAudit,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::Cbu,
        TemplateId::JudgeDefault,
        TemplateId::JudgeProofgrader,
        TemplateId::JudgeUq,
        TemplateId::VariantGen,
        TemplateId::ErrorAudit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::Cbu => "cbu",
            TemplateId::JudgeDefault => "judge_default",
            TemplateId::JudgeProofgrader => "judge_proofgrader",
            TemplateId::JudgeUq => "judge_uq",
            TemplateId::VariantGen => "variant_gen",
            TemplateId::ErrorAudit => "error_audit",
        }
    }

    pub fn parse(name: &str) -> Option<TemplateId> {
        TemplateId::ALL.iter().copied().find(|id| id.name() == name)
    }
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A template body plus its identity.
#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub id: TemplateId,
    pub body: &'static str,
}

impl Template {
    /// Look up a shipped template.
    pub fn get(id: TemplateId) -> Template {
        let body = match id {
            TemplateId::Cbu => include_str!("../assets/templates/cbu.txt"),
            TemplateId::JudgeDefault => include_str!("../assets/templates/judge_default.txt"),
            TemplateId::JudgeProofgrader => {
                include_str!("../assets/templates/judge_proofgrader.txt")
            }
            TemplateId::JudgeUq => include_str!("../assets/templates/judge_uq.txt"),
            TemplateId::VariantGen => include_str!("../assets/templates/variant_gen.txt"),
            TemplateId::ErrorAudit => include_str!("../assets/templates/error_audit.txt"),
        };
        Template { id, body }
    }

    /// Placeholder names present in the body, in first-appearance order.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut found = Vec::new();
        for name in PLACEHOLDER_NAMES {
            if self.body.contains(&marker(name)) && !found.contains(&name) {
                found.push(name);
            }
        }
        found
    }
}

fn marker(name: &str) -> String {
    format!("{{{{{name}}}}}")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template {template} requires a binding for {{{{{placeholder}}}}}")]
    MissingBinding {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("binding {name:?} does not appear in template {template}")]
    UnknownBinding { template: &'static str, name: String },
    #[error("template {template} requires a non-empty value for {{{{{placeholder}}}}}")]
    EmptyBinding {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("golden file missing or unreadable at {path}: {detail}")]
    GoldenUnavailable { path: String, detail: String },
}

/// Substitute placeholder bindings into a template body.
///
/// Rendering is pure and deterministic: output equals the body with each
/// whitelisted `{{name}}` marker replaced by its binding and no other bytes
/// altered. Every placeholder in the body must be bound, every binding must
/// correspond to a placeholder, and the exemplar-conditioned solving prompt
/// rejects empty values.
pub fn render(
    template: &Template,
    bindings: &BTreeMap<&str, &str>,
) -> Result<String, TemplateError> {
    let required = template.placeholders();

    for name in bindings.keys() {
        if !required.iter().any(|r| r == name) {
            return Err(TemplateError::UnknownBinding {
                template: template.id.name(),
                name: (*name).to_string(),
            });
        }
    }

    let mut rendered = template.body.to_string();
    for placeholder in required {
        let value = bindings
            .get(placeholder)
            .ok_or(TemplateError::MissingBinding {
                template: template.id.name(),
                placeholder,
            })?;
        if template.id == TemplateId::Cbu && value.is_empty() {
            return Err(TemplateError::EmptyBinding {
                template: template.id.name(),
                placeholder,
            });
        }
        rendered = rendered.replace(&marker(placeholder), value);
    }
    Ok(rendered)
}

/// Fixed bindings used for golden-file rendering.
pub fn sentinel_bindings() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("original_question", "<SENTINEL ORIGINAL QUESTION>"),
        ("candidate_solution", "<SENTINEL CANDIDATE SOLUTION>"),
        ("variant_question", "<SENTINEL VARIANT QUESTION>"),
    ])
}

fn sentinel_render(template: &Template) -> Result<String, TemplateError> {
    let all = sentinel_bindings();
    let mut bindings = BTreeMap::new();
    for placeholder in template.placeholders() {
        bindings.insert(placeholder, all[placeholder]);
    }
    render(template, &bindings)
}

/// Outcome of comparing a template against its frozen golden file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenCheck {
    pub template: TemplateId,
    pub pass: bool,
}

/// Render a template with sentinel bindings and compare byte-for-byte with
/// the stored golden file.
pub fn golden_check(template: &Template, golden_path: &Path) -> Result<GoldenCheck, TemplateError> {
    let expected =
        std::fs::read(golden_path).map_err(|e| TemplateError::GoldenUnavailable {
            path: golden_path.display().to_string(),
            detail: e.to_string(),
        })?;
    let rendered = sentinel_render(template)?;
    Ok(GoldenCheck {
        template: template.id,
        pass: rendered.as_bytes() == expected.as_slice(),
    })
}

/// Default on-disk location of a template's golden file within an asset root.
pub fn golden_file_name(id: TemplateId) -> String {
    format!("{}.golden.txt", id.name())
}
