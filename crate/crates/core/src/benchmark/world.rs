//! Synthetic fact worlds: invented subjects, a handful of relations with a
//! canonical statement template and paraphrases, CounterFact-style cases,
//! and a training corpus verbalizing every fact.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::counterfact::{CaseRecord, RequestedRewrite, Target};
use crate::editors::fill_template;
use crate::error::{Error, Result};
use crate::tinylm::split_units;

struct RelationSpec {
    id: &'static str,
    canonical: &'static str,
    paraphrases: [&'static str; 3],
    objects: [&'static str; 8],
}

const RELATIONS: [RelationSpec; 6] = [
    RelationSpec {
        id: "P103",
        canonical: "{} has always spoken fluent",
        paraphrases: ["{} is a native speaker of", "{} grew up at home speaking", "{}, by birth, speaks"],
        objects: ["French", "English", "Spanish", "German", "Italian", "Dutch", "Polish", "Swedish"],
    },
    RelationSpec {
        id: "P19",
        canonical: "{} was born in the city of",
        paraphrases: ["{} is originally from the city of", "{}, who was born in", "{} came into the world in"],
        objects: ["Paris", "Rome", "Berlin", "Madrid", "Vienna", "Lisbon", "Prague", "Oslo"],
    },
    RelationSpec {
        id: "P106",
        canonical: "{} works for a living as a",
        paraphrases: ["{} earns a living as a", "{}, who works as a", "{} has a job as a"],
        objects: ["pilot", "lawyer", "baker", "doctor", "farmer", "painter", "teacher", "sailor"],
    },
    RelationSpec {
        id: "P1303",
        canonical: "{} performs music on the",
        paraphrases: ["{} is known for playing the", "{}, who plays the", "{} spends every day playing the"],
        objects: ["piano", "violin", "guitar", "flute", "cello", "drums", "harp", "trumpet"],
    },
    RelationSpec {
        id: "P27",
        canonical: "{} is a legal citizen of",
        paraphrases: ["{} holds a passport from", "{}, a citizen of", "{} has the citizenship of"],
        objects: ["Canada", "Japan", "Brazil", "Egypt", "Norway", "Chile", "Kenya", "India"],
    },
    RelationSpec {
        id: "P641",
        canonical: "{} competes at a professional level in",
        paraphrases: ["{} is a professional player of", "{}, who competes in", "{} spends every weekend playing"],
        objects: ["tennis", "soccer", "hockey", "golf", "rugby", "cricket", "boxing", "rowing"],
    },
];

/// Subjects are ordered sequences of distinct name parts, so many subjects
/// share the same parts and differ only in their order.
const NAME_PARTS: [&str; 5] = ["Ka", "Lo", "Mi", "Ru", "Te"];
const NAME_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSizes {
    pub relations: usize,
    pub subjects_per_relation: usize,
    pub objects_per_relation: usize,
    pub neighborhood_size: usize,
    /// Copies of the canonical statement per fact in the corpus.
    pub canonical_repeats: usize,
    /// Two-sentence corpus lines per fact, with the fact in second place.
    pub context_pairs: usize,
    /// Each corpus line is preceded by up to this many random statements.
    pub max_lead_statements: usize,
    /// Lead statements are only added while the line stays within this
    /// many tokens, counting the start token.
    pub max_line_tokens: usize,
}

impl Default for WorldSizes {
    fn default() -> Self {
        Self {
            relations: 4,
            subjects_per_relation: 8,
            objects_per_relation: 4,
            neighborhood_size: 10,
            canonical_repeats: 3,
            context_pairs: 2,
            max_lead_statements: 3,
            max_line_tokens: 64,
        }
    }
}

impl WorldSizes {
    pub fn smallest() -> Self {
        Self {
            relations: 1,
            subjects_per_relation: 2,
            objects_per_relation: 2,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("infeasible world sizes: {msg}")));
        if self.relations == 0 || self.relations > RELATIONS.len() {
            return bad(format!("relations must be in 1..={}", RELATIONS.len()));
        }
        if self.subjects_per_relation < 2 {
            return bad("need at least 2 subjects per relation for neighborhoods".into());
        }
        if self.objects_per_relation < 2 || self.objects_per_relation > 8 {
            return bad("objects per relation must be in 2..=8".into());
        }
        if self.neighborhood_size < 5 {
            return bad("neighborhood size must be at least 5".into());
        }
        if self.canonical_repeats == 0 {
            return bad("canonical_repeats must be at least 1".into());
        }
        let names = (0..NAME_LEN).map(|i| NAME_PARTS.len() - i).product::<usize>();
        if self.relations * self.subjects_per_relation > names {
            return bad(format!("at most {names} distinct subjects"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub canonical: String,
    pub paraphrases: Vec<String>,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub relation_id: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cases_checked: usize,
    pub neighborhood_prompts_checked: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactWorld {
    pub seed: u64,
    pub sizes: WorldSizes,
    pub relations: Vec<Relation>,
    pub facts: Vec<Fact>,
    pub cases: Vec<CaseRecord>,
    pub corpus: Vec<String>,
    pub validation: ValidationReport,
}

pub fn statement(template: &str, subject: &str, object: &str) -> Result<String> {
    Ok(format!("{} {object}.", fill_template(template, subject)?))
}

fn subject_name(rng: &mut ChaCha8Rng) -> String {
    let mut parts: Vec<&str> = NAME_PARTS.choose_multiple(rng, NAME_LEN).copied().collect();
    parts.shuffle(rng);
    parts.join(" ")
}

pub fn gen_world(seed: u64, sizes: WorldSizes) -> Result<FactWorld> {
    sizes.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut used_names = HashSet::new();
    let mut relations = Vec::with_capacity(sizes.relations);
    let mut facts = Vec::new();
    // (relation index, object) -> subjects
    let mut groups: BTreeMap<(usize, String), Vec<String>> = BTreeMap::new();

    for (ri, spec) in RELATIONS.iter().take(sizes.relations).enumerate() {
        let mut pool: Vec<&str> = spec.objects.to_vec();
        pool.shuffle(&mut rng);
        let objects: Vec<String> = pool[..sizes.objects_per_relation].iter().map(|s| s.to_string()).collect();
        let n_true = (sizes.subjects_per_relation / 2).clamp(1, objects.len());
        for i in 0..sizes.subjects_per_relation {
            let subject = loop {
                let cand = subject_name(&mut rng);
                if used_names.insert(cand.clone()) {
                    break cand;
                }
            };
            let object = objects[i % n_true].clone();
            groups.entry((ri, object.clone())).or_default().push(subject.clone());
            facts.push(Fact { subject, relation_id: spec.id.to_string(), object });
        }
        relations.push(Relation {
            id: spec.id.to_string(),
            canonical: spec.canonical.to_string(),
            paraphrases: spec.paraphrases.iter().map(|s| s.to_string()).collect(),
            objects,
        });
    }

    let rel_index = |id: &str| relations.iter().position(|r| r.id == id).expect("known relation");

    let mut cases = Vec::with_capacity(facts.len());
    for (case_id, fact) in facts.iter().enumerate() {
        let ri = rel_index(&fact.relation_id);
        let rel = &relations[ri];
        let alternatives: Vec<&String> = rel.objects.iter().filter(|o| **o != fact.object).collect();
        let target_new = (*alternatives.choose(&mut rng).expect("at least two objects")).clone();

        let neighbors: Vec<&String> = groups[&(ri, fact.object.clone())]
            .iter()
            .filter(|s| **s != fact.subject)
            .collect();
        let mut pairs: Vec<(&String, &String)> = neighbors
            .iter()
            .flat_map(|s| rel.paraphrases.iter().map(move |t| (*s, t)))
            .collect();
        pairs.shuffle(&mut rng);
        let neighborhood_prompts = (0..sizes.neighborhood_size)
            .map(|i| {
                let (s, t) = pairs[i % pairs.len()];
                fill_template(t, s)
            })
            .collect::<Result<Vec<_>>>()?;

        let paraphrase_prompts = rel.paraphrases[..2]
            .iter()
            .map(|t| fill_template(t, &fact.subject))
            .collect::<Result<Vec<_>>>()?;
        let attribute_prompts = groups
            .get(&(ri, target_new.clone()))
            .map(|subs| {
                subs.iter()
                    .take(5)
                    .map(|s| fill_template(&rel.paraphrases[0], s))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();

        cases.push(CaseRecord {
            case_id: case_id as i64,
            requested_rewrite: RequestedRewrite {
                prompt: rel.canonical.clone(),
                relation_id: rel.id.clone(),
                target_new: Target::new(target_new.clone(), format!("{}:{target_new}", rel.id)),
                target_true: Target::new(fact.object.clone(), format!("{}:{}", rel.id, fact.object)),
                subject: fact.subject.clone(),
                extra: Default::default(),
            },
            paraphrase_prompts,
            neighborhood_prompts,
            attribute_prompts,
            generation_prompts: vec![fill_template(&rel.canonical, &fact.subject)?],
            extra: Default::default(),
        });
    }

    let mut corpus = Vec::new();
    let mut all_statements = Vec::new();
    for fact in &facts {
        let rel = &relations[rel_index(&fact.relation_id)];
        let canonical = statement(&rel.canonical, &fact.subject, &fact.object)?;
        for _ in 0..sizes.canonical_repeats {
            corpus.push(canonical.clone());
        }
        all_statements.push(canonical);
        for t in &rel.paraphrases {
            let s = statement(t, &fact.subject, &fact.object)?;
            corpus.push(s.clone());
            all_statements.push(s);
        }
    }
    for fact in &facts {
        let rel = &relations[rel_index(&fact.relation_id)];
        let templates: Vec<&String> = std::iter::once(&rel.canonical).chain(&rel.paraphrases).collect();
        for _ in 0..sizes.context_pairs {
            let first = all_statements[rng.random_range(0..all_statements.len())].clone();
            let t = templates.choose(&mut rng).expect("non-empty");
            corpus.push(format!("{first} {}", statement(t, &fact.subject, &fact.object)?));
        }
    }

    let singles: Vec<String> = corpus.iter().filter(|s| s.matches('.').count() == 1).cloned().collect();
    let units = |s: &str| split_units(s).len() + 1;
    for line in corpus.iter_mut() {
        let k = rng.random_range(0..=sizes.max_lead_statements);
        let mut lead = String::new();
        for _ in 0..k {
            let s = &singles[rng.random_range(0..singles.len())];
            if units(&format!("{s} {lead}{line}")) <= sizes.max_line_tokens {
                lead.push_str(s);
                lead.push(' ');
            }
        }
        line.insert_str(0, &lead);
    }

    let mut world = FactWorld {
        seed,
        sizes,
        relations,
        facts,
        cases,
        corpus,
        validation: ValidationReport { cases_checked: 0, neighborhood_prompts_checked: 0, ok: false },
    };
    world.validation = validate_world(&world)?;
    Ok(world)
}

/// Re-derives every neighborhood subject from its prompt text and checks it
/// against the fact table.
pub fn validate_world(world: &FactWorld) -> Result<ValidationReport> {
    let facts: HashSet<(&str, &str, &str)> = world
        .facts
        .iter()
        .map(|f| (f.subject.as_str(), f.relation_id.as_str(), f.object.as_str()))
        .collect();
    let subjects: HashSet<&str> = world.facts.iter().map(|f| f.subject.as_str()).collect();
    let mut prompts = 0;
    for case in &world.cases {
        let rw = &case.requested_rewrite;
        let fail = |msg: String| Err(Error::Case { case: case.case_id, msg });
        if rw.target_new.text == rw.target_true.text {
            return fail("target_new equals target_true".into());
        }
        if !facts.contains(&(rw.subject.as_str(), rw.relation_id.as_str(), rw.target_true.text.as_str())) {
            return fail("requested rewrite is not a true fact".into());
        }
        let rel = world
            .relations
            .iter()
            .find(|r| r.id == rw.relation_id)
            .ok_or_else(|| Error::Case { case: case.case_id, msg: "unknown relation".into() })?;
        if case.neighborhood_prompts.len() < 5 {
            return fail("fewer than 5 neighborhood prompts".into());
        }
        for prompt in &case.neighborhood_prompts {
            let subject = rel
                .paraphrases
                .iter()
                .find_map(|t| extract_subject(t, prompt).filter(|s| subjects.contains(s)))
                .ok_or_else(|| Error::Case {
                    case: case.case_id,
                    msg: format!("prompt {prompt:?} matches no paraphrase template"),
                })?;
            if subject == rw.subject {
                return fail(format!("neighborhood prompt {prompt:?} uses the edit subject"));
            }
            if !facts.contains(&(subject, rw.relation_id.as_str(), rw.target_true.text.as_str())) {
                return fail(format!("({subject}, {}, {}) is not a true fact", rw.relation_id, rw.target_true.text));
            }
            prompts += 1;
        }
    }
    Ok(ValidationReport {
        cases_checked: world.cases.len(),
        neighborhood_prompts_checked: prompts,
        ok: true,
    })
}

fn extract_subject<'a>(template: &str, prompt: &'a str) -> Option<&'a str> {
    let (pre, post) = template.split_once("{}")?;
    prompt.strip_prefix(pre)?.strip_suffix(post)
}

impl FactWorld {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let world: FactWorld = serde_json::from_slice(bytes)?;
        validate_world(&world)?;
        Ok(world)
    }

    pub fn relation(&self, id: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.id == id)
    }

    /// Every text the model will see, for building its tokenizer.
    pub fn tokenizer_corpus(&self) -> Vec<String> {
        let mut texts = self.corpus.clone();
        for case in &self.cases {
            texts.extend(case.neighborhood_prompts.iter().cloned());
            texts.push(format!(" {}", case.requested_rewrite.target_new.text));
        }
        texts
    }
}
