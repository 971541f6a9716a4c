//! Shared synthetic-data generators for the integration suites.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use qmatch::corpus::{Question, RankingGroup};
use qmatch::embeddings::{EmbeddingTable, OovPolicy};
use qmatch::seed::component_rng;

pub const FUNCTION_WORDS: [&str; 8] = ["what", "is", "how", "does", "the", "of", "why", "work"];

/// Vocabulary of `clusters * tokens_per_cluster` topic tokens plus shared
/// function words, each with a random embedding of dimension `dim`.
pub fn synthetic_table(
    clusters: usize,
    tokens_per_cluster: usize,
    dim: usize,
    seed: u64,
) -> Arc<EmbeddingTable> {
    let mut rng = component_rng(seed, "synth-table");
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |name: String, rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        entries.push((name, v));
    };
    for w in FUNCTION_WORDS {
        push(w.to_string(), &mut rng);
    }
    for c in 0..clusters {
        for t in 0..tokens_per_cluster {
            push(format!("topic{c}x{t}"), &mut rng);
        }
    }
    let refs: Vec<(&str, Vec<f64>)> = entries
        .iter()
        .map(|(n, v)| (n.as_str(), v.clone()))
        .collect();
    Arc::new(EmbeddingTable::from_entries(&refs, OovPolicy::Zero).unwrap())
}

/// Template-generated paraphrase clusters: every question in cluster `c`
/// mentions that cluster's topic tokens, with varying function-word frames.
pub fn synthetic_clusters(
    clusters: usize,
    per_cluster: usize,
    tokens_per_cluster: usize,
    seed: u64,
) -> Vec<Vec<Question>> {
    let mut rng = component_rng(seed, "synth-questions");
    let templates = [
        "what is {a} {b}",
        "how does {a} {b} work",
        "why is {b} {a}",
        "what {a} of {b}",
        "how is the {b} {a}",
        "does {a} work the {b}",
    ];
    (0..clusters)
        .map(|c| {
            let topics: Vec<String> = (0..tokens_per_cluster)
                .map(|t| format!("topic{c}x{t}"))
                .collect();
            (0..per_cluster)
                .map(|i| {
                    let template = templates[rng.gen_range(0..templates.len())];
                    let a = &topics[rng.gen_range(0..topics.len())];
                    let mut b = &topics[rng.gen_range(0..topics.len())];
                    while b == a && tokens_per_cluster > 1 {
                        b = &topics[rng.gen_range(0..topics.len())];
                    }
                    let text = template.replace("{a}", a).replace("{b}", b);
                    Question::new(format!("c{c}-q{i}"), text)
                })
                .collect()
        })
        .collect()
}

/// Ranking groups over the training split: every train question queries a
/// few same-cluster positives against sampled other-cluster negatives.
pub fn synthetic_groups(
    clusters: &[Vec<Question>],
    train_per_cluster: usize,
    negatives: usize,
    seed: u64,
) -> Vec<RankingGroup> {
    let mut rng = component_rng(seed, "synth-groups");
    let mut groups = Vec::new();
    for (c, members) in clusters.iter().enumerate() {
        let train = &members[..train_per_cluster];
        for (i, q) in train.iter().enumerate() {
            let positives: Vec<Question> = train
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .take(2)
                .collect();
            let mut negs = Vec::new();
            while negs.len() < negatives {
                let oc = rng.gen_range(0..clusters.len());
                if oc == c {
                    continue;
                }
                let other = &clusters[oc][rng.gen_range(0..train_per_cluster)];
                negs.push(other.clone());
            }
            groups.push(RankingGroup {
                query: q.clone(),
                positives,
                negatives: negs,
            });
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    order.into_iter().map(|i| groups[i].clone()).collect()
}

/// Held-out ranking evaluation: each test question ranks every other test
/// question; its cluster partners are the relevant set.
pub fn heldout_run(
    clusters: &[Vec<Question>],
    train_per_cluster: usize,
    score: impl Fn(&Question, &Question) -> f64,
) -> qmatch::eval::RankingRun {
    let test: Vec<(usize, &Question)> = clusters
        .iter()
        .enumerate()
        .flat_map(|(c, members)| members[train_per_cluster..].iter().map(move |q| (c, q)))
        .collect();
    let queries = test
        .iter()
        .map(|(c, q)| {
            let mut candidates = Vec::new();
            let mut relevant = std::collections::HashSet::new();
            for (oc, other) in &test {
                if other.id == q.id {
                    continue;
                }
                candidates.push((other.id.clone(), score(q, other)));
                if oc == c {
                    relevant.insert(other.id.clone());
                }
            }
            qmatch::eval::RankedQuery {
                query_id: q.id.clone(),
                candidates,
                relevant,
            }
        })
        .collect();
    qmatch::eval::RankingRun::new(queries)
}

/// Labeled questions for the classifier: `per_class` questions for each
/// coarse class, built from class-distinctive content tokens.
pub fn synthetic_labeled(per_class: usize, dim: usize, seed: u64) -> (Vec<Question>, Arc<EmbeddingTable>) {
    let classes: [(&str, &str, [&str; 3]); 6] = [
        ("Quantification", "Number", ["many", "count", "total"]),
        ("Entity", "Person", ["who", "person", "name"]),
        ("Definition", "Entity", ["define", "meaning", "term"]),
        ("Description", "Reason", ["describe", "reason", "explain"]),
        ("List", "Number", ["list", "some", "examples"]),
        ("Selection", "True/False", ["either", "whether", "or"]),
    ];
    let mut rng = component_rng(seed, "synth-labeled");
    let mut vocab: Vec<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
    for (_, _, toks) in &classes {
        for t in toks {
            if !vocab.contains(&t.to_string()) {
                vocab.push(t.to_string());
            }
        }
    }
    let entries: Vec<(String, Vec<f64>)> = vocab
        .iter()
        .map(|w| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (w.clone(), v)
        })
        .collect();
    let refs: Vec<(&str, Vec<f64>)> = entries
        .iter()
        .map(|(n, v)| (n.as_str(), v.clone()))
        .collect();
    let table = Arc::new(EmbeddingTable::from_entries(&refs, OovPolicy::Zero).unwrap());

    let mut questions = Vec::new();
    for (coarse, fine, toks) in &classes {
        for i in 0..per_class {
            let a = toks[rng.gen_range(0..3)];
            let b = toks[rng.gen_range(0..3)];
            let frame = FUNCTION_WORDS[rng.gen_range(0..FUNCTION_WORDS.len())];
            let mut q = Question::new(
                format!("{coarse}-{i}"),
                format!("{frame} {a} {b} {}", toks[i % 3]),
            );
            q.coarse = Some(coarse.to_string());
            q.fine = Some(fine.to_string());
            questions.push(q);
        }
    }
    (questions, table)
}
