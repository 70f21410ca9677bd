use serde::{Deserialize, Serialize};

use super::pools::POOLS;
use super::suite::SuiteItem;
use super::text::{normalize_text, PromptBuilder};
use super::{tags, Result, TaskgenError};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingPrompt {
    #[serde(flatten)]
    pub item: SuiteItem,
    /// `(name, activity)` in rendered order.
    pub simple_prompts: Vec<(String, String)>,
    pub informative_index: usize,
    pub target_name: String,
    pub relation: String,
    pub partner: String,
    pub ground_truth_activity: String,
    pub distractor_sentences: Vec<String>,
    pub icl: bool,
}

impl ReadingPrompt {
    pub fn rendered(&self) -> &str {
        &self.item.prompt
    }
}

struct Composite {
    simple: Vec<(String, String)>,
    informative: usize,
    target: String,
    partner: String,
    relation: String,
}

impl Composite {
    fn answer(&self) -> &str {
        &self.simple[self.informative].1
    }
}

fn check_pool(names: usize, activities: usize, k: usize) -> Result<()> {
    let need_names = (k + 1).max(3);
    if names < need_names {
        return Err(TaskgenError::PoolExhausted {
            what: "names",
            needed: need_names,
            available: names,
        });
    }
    if activities < k {
        return Err(TaskgenError::PoolExhausted {
            what: "activities",
            needed: k,
            available: activities,
        });
    }
    Ok(())
}

/// Draws a composite whose informative prompt is `(names[ni], acts[ai])`.
fn compose(
    rng: &mut SplitMix64,
    names: &[String],
    acts: &[String],
    k: usize,
    ni: usize,
    ai: usize,
) -> Composite {
    let mut other_names: Vec<&String> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ni)
        .map(|(_, n)| n)
        .collect();
    let mut other_acts: Vec<&String> = acts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ai)
        .map(|(_, a)| a)
        .collect();
    rng.shuffle(&mut other_names);
    rng.shuffle(&mut other_acts);

    let mut simple = vec![(names[ni].clone(), acts[ai].clone())];
    for d in 0..k - 1 {
        simple.push((other_names[d].clone(), other_acts[d].clone()));
    }
    let target = other_names[k - 1].clone();
    let partner = if k >= 2 {
        other_names[0].clone()
    } else {
        other_names[k].clone()
    };
    let relations = &POOLS.reading.relations;
    let relation = relations[rng.below(relations.len())].clone();

    let mut order: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut order);
    let informative = order.iter().position(|&i| i == 0).unwrap();
    let simple = order.into_iter().map(|i| simple[i].clone()).collect();
    Composite {
        simple,
        informative,
        target,
        partner,
        relation,
    }
}

/// Renders the question part; when `mark` is set, records the per-sentence roles.
fn render_question(b: &mut PromptBuilder, c: &Composite, mark: bool) {
    b.push("Question: ");
    for (i, (name, act)) in c.simple.iter().enumerate() {
        let sentence = format!("{name} is {act}.");
        if mark {
            let role = if i == c.informative {
                "s_inf"
            } else {
                "s_dist"
            };
            b.push_seg(role, &sentence);
        } else {
            b.push(&sentence);
        }
        b.push(" ");
    }
    let anchor = &c.simple[c.informative].0;
    let t = &c.target;
    b.push(&format!(
        "{t} is doing the same thing as {anchor}. {t} {} {}. ",
        c.relation, c.partner
    ));
    let q = format!("What is {t} doing?");
    if mark {
        b.push_seg("question", &q);
    } else {
        b.push(&q);
    }
    b.push(" Answer:");
}

/// One composite prompt per (informative name, activity) pair.
///
/// Each prompt holds `composite_size` simple prompts with distinct names and
/// activities, in shuffled order. The ICL variant prepends one solved
/// composite drawn from a disjoint name and activity pool.
pub fn gen_reading_suite(
    n_names: usize,
    n_activities: usize,
    composite_size: usize,
    with_icl: bool,
    seed: u64,
) -> Result<Vec<ReadingPrompt>> {
    let pools = &POOLS.reading;
    if composite_size == 0 {
        return Err(TaskgenError::InvalidArgument(
            "composite_size must be at least 1".into(),
        ));
    }
    for (what, n, have) in [
        ("names", n_names, pools.names.len()),
        ("activities", n_activities, pools.activities.len()),
    ] {
        if n > have {
            return Err(TaskgenError::PoolExhausted {
                what,
                needed: n,
                available: have,
            });
        }
    }
    check_pool(n_names, n_activities, composite_size)?;
    if with_icl {
        check_pool(
            pools.icl_names.len(),
            pools.icl_activities.len(),
            composite_size,
        )?;
    }
    let names = &pools.names[..n_names];
    let acts = &pools.activities[..n_activities];

    let mut out = Vec::with_capacity(n_names * n_activities);
    for ni in 0..n_names {
        for ai in 0..n_activities {
            let idx = ni * n_activities + ai;
            let mut rng = SplitMix64::keyed(seed, &[tags::READING, idx as u64]);
            let main = compose(&mut rng, names, acts, composite_size, ni, ai);
            let mut icl_rng = SplitMix64::keyed(seed, &[tags::READING, idx as u64, 1]);

            let mut b = PromptBuilder::new();
            if with_icl {
                let ini = icl_rng.below(pools.icl_names.len());
                let iai = icl_rng.below(pools.icl_activities.len());
                let ex = compose(
                    &mut icl_rng,
                    &pools.icl_names,
                    &pools.icl_activities,
                    composite_size,
                    ini,
                    iai,
                );
                let start = b.pos();
                render_question(&mut b, &ex, false);
                b.push(&format!(" {} is {}.", ex.target, ex.answer()));
                b.close("icl_example", start);
                b.push(" ");
            }
            render_question(&mut b, &main, true);
            b.close("prompt", 0);
            let (text, segments) = b.finish();

            let distractor_sentences = main
                .simple
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != main.informative)
                .map(|(_, (n, a))| format!("{n} is {a}."))
                .collect();
            let (inf_name, activity) = main.simple[main.informative].clone();
            let item = SuiteItem::new(
                format!("read-{}-{idx:03}", if with_icl { "icl" } else { "base" }),
                text,
                segments,
            )
            .label("activity", &activity)
            .label("informative_name", &inf_name)
            .label("target_name", &main.target)
            .label("composite_size", composite_size)
            .label("icl", with_icl)
            .label("relation", &main.relation);
            out.push(ReadingPrompt {
                item,
                simple_prompts: main.simple.clone(),
                informative_index: main.informative,
                target_name: main.target.clone(),
                relation: main.relation.clone(),
                partner: main.partner.clone(),
                ground_truth_activity: activity,
                distractor_sentences,
                icl: with_icl,
            });
        }
    }
    Ok(out)
}

/// True when the normalized response contains the normalized activity.
pub fn score_reading(response: &str, ground_truth_activity: &str) -> bool {
    let activity = normalize_text(ground_truth_activity);
    !activity.is_empty() && normalize_text(response).contains(&activity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::char_slice;

    #[test]
    fn paper_sized_suite() {
        let suite = gen_reading_suite(10, 10, 2, false, 1).unwrap();
        assert_eq!(suite.len(), 100);
        for p in &suite {
            assert_eq!(p.simple_prompts.len(), 2);
            let (n, a) = &p.simple_prompts[p.informative_index];
            let span = p.item.segments["s_inf"][0];
            assert_eq!(char_slice(p.rendered(), span), format!("{n} is {a}."));
            assert_eq!(&p.ground_truth_activity, a);
        }
    }

    #[test]
    fn single_prompt_has_no_distractors() {
        let suite = gen_reading_suite(5, 5, 1, true, 2).unwrap();
        assert!(suite
            .iter()
            .all(|p| !p.item.segments.contains_key("s_dist")));
    }

    #[test]
    fn exhaustion() {
        assert!(matches!(
            gen_reading_suite(2, 10, 1, false, 0),
            Err(TaskgenError::PoolExhausted { .. })
        ));
        assert!(gen_reading_suite(11, 10, 1, false, 0).is_err());
    }

    #[test]
    fn scoring_rule() {
        assert!(score_reading("Oliver is reading a book.", "reading a book"));
        assert!(score_reading("Reading a book", "reading a book"));
        assert!(!score_reading("Oliver is swimming", "reading a book"));
    }
}
