use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::{generate_for, select_demonstrations};
use super::template::placeholders;
use super::{derive_seed, FormulationError, PromptInstance, PromptTemplate};
use crate::annotation::{DocumentRecord, MarkerStyle};

pub const DEFAULT_BUDGET: usize = 4096;

pub type LengthFn = fn(&str) -> usize;

/// Token estimate: one unit per four characters, rounded up.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max: usize,
    pub length: LengthFn,
}

impl Budget {
    pub fn new(max: usize) -> Self {
        Budget {
            max,
            length: approx_tokens,
        }
    }

    pub fn check(&self, text: &str) -> Result<(), FormulationError> {
        let length = (self.length)(text);
        if length > self.max {
            return Err(FormulationError::BudgetExceeded {
                length,
                budget: self.max,
            });
        }
        Ok(())
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(DEFAULT_BUDGET)
    }
}

/// Byte offset where a query prompt stops: the first `{cot}` or `{target}`.
pub(crate) fn cut_point(body: &str) -> usize {
    placeholders(body)
        .into_iter()
        .find(|(_, _, s)| *s == "cot" || *s == "target")
        .map_or(body.len(), |(start, _, _)| start)
}

/// Substitutes every placeholder in `body`.
pub fn render_template(
    body: &str,
    slots: &BTreeMap<String, String>,
) -> Result<String, FormulationError> {
    let mut out = String::with_capacity(body.len() * 2);
    let mut cursor = 0;
    for (start, end, name) in placeholders(body) {
        let value = slots
            .get(name)
            .ok_or_else(|| FormulationError::MissingSlot(name.to_string()))?;
        out.push_str(&body[cursor..start]);
        out.push_str(value);
        cursor = end;
    }
    out.push_str(&body[cursor..]);
    Ok(out)
}

/// Query part and expected continuation of an instance under `template`.
pub(crate) fn split_query(
    template: &PromptTemplate,
    instance: &PromptInstance,
) -> Result<(String, String), FormulationError> {
    let cut = cut_point(&template.body);
    let mut query = render_template(&template.body[..cut], &instance.slots)?;
    let answer = render_template(&template.body[cut..], &instance.slots)?;
    let trimmed = query.trim_end_matches([' ', '\t']).len();
    query.truncate(trimmed);
    Ok((query, answer.trim_end().to_string()))
}

/// Demonstrations in full, then the query up to its answer slot.
pub fn render_prompt(
    template: &PromptTemplate,
    instance: &PromptInstance,
    demos: &[&PromptInstance],
    budget: &Budget,
) -> Result<String, FormulationError> {
    for inst in std::iter::once(instance).chain(demos.iter().copied()) {
        if inst.formulation != template.formulation {
            return Err(FormulationError::FormulationMismatch {
                template: template.id.clone(),
                template_formulation: template.formulation,
                instance_formulation: inst.formulation,
            });
        }
    }
    let mut parts = Vec::with_capacity(demos.len() + 1);
    for demo in demos {
        parts.push(
            render_template(&template.body, &demo.slots)?
                .trim_end()
                .to_string(),
        );
    }
    parts.push(split_query(template, instance)?.0);
    let prompt = parts.join("\n\n");
    budget.check(&prompt)?;
    Ok(prompt)
}

/// Settings for turning documents into rendered instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub representation: MarkerStyle,
    pub n_demos: usize,
    pub seed: u64,
    pub budget: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            representation: MarkerStyle::Eid,
            n_demos: 0,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Rendered instances of `doc` under `template`, with demonstrations drawn
/// from `dev`. Per-instance failures such as an exceeded budget are returned
/// in place; document-level failures abort.
pub fn build_instances(
    doc: &DocumentRecord,
    dev: &[DocumentRecord],
    template: &PromptTemplate,
    config: &GenerationConfig,
    length: LengthFn,
) -> Result<Vec<Result<PromptInstance, FormulationError>>, FormulationError> {
    let repr = config.representation;
    let budget = Budget {
        max: config.budget,
        length,
    };
    let dev_ids: Vec<String> = dev.iter().map(|d| d.id.clone()).collect();
    let demo_ids = select_demonstrations(&dev_ids, &doc.id, config.n_demos, config.seed)?;
    let demo_pools: Vec<Vec<PromptInstance>> = demo_ids
        .iter()
        .map(|id| {
            let d = dev.iter().find(|d| &d.id == id).expect("sampled from dev");
            generate_for(d, template, repr, config.seed)
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for mut inst in generate_for(doc, template, repr, config.seed)? {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[&inst.instance_id, &config.n_demos.to_string()],
        ));
        let demos: Vec<&PromptInstance> = demo_pools
            .iter()
            .filter_map(|pool| pool.choose(&mut rng))
            .collect();
        let rendered = render_prompt(template, &inst, &demos, &budget)
            .and_then(|p| Ok((p, split_query(template, &inst)?.1)));
        out.push(rendered.map(|(prompt, answer)| {
            inst.prompt = prompt;
            inst.gold_text = answer;
            inst.n_demos = config.n_demos;
            inst.demo_doc_ids = demo_ids.clone();
            inst.instance_id = format!("{}/{}s", inst.instance_id, config.n_demos);
            inst
        }));
    }
    Ok(out)
}
