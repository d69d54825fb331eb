//! Seeded synthetic project histories for tests, benchmarks and demos.
//!
//! Classes belong to groups. Each group owns a code vocabulary (used in its
//! classes) and a natural-language vocabulary that only ever appears in bug
//! reports. Every class has a partner in the next group; the two share a few
//! bridge terms and occasionally change together. Two kinds of bug reports are planted: code-rich ones that name
//! the faulty class and its identifiers, and natural-language ones that use
//! only the group's bug-report vocabulary. The latter can only be tied to
//! code through earlier fixes.
//!
//! Generated words end in one of `b k p v x z`, so stemming leaves them
//! unchanged.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{parse_diff, render_file_diff, BugReport, Changeset, CommitMeta, Document, WordList};
use crate::evaluation::{build_events, FixLink, HistoryEvent};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gl", "pr", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["b", "k", "p", "v", "x", "z"];
const FILLER: &[&str] = &[
    "the", "when", "after", "it", "is", "and", "then", "again", "sometimes", "always", "really", "very",
];
const MESSAGES: &[&str] = &[
    "update",
    "refactor code",
    "minor cleanup",
    "small improvements",
    "tidy things up",
    "rework logic",
    "address review comments",
    "more changes",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub groups: usize,
    pub classes_per_group: usize,
    pub methods_per_class: usize,
    pub changesets: usize,
    /// Bugs naming classes and identifiers; fixed first.
    pub code_bugs: usize,
    /// Bugs written only in the group's natural-language vocabulary; fixed
    /// after all code-rich bugs.
    pub nl_bugs: usize,
    /// Probability that a regular commit touches a class and its partner.
    pub bridge_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            groups: 6,
            classes_per_group: 4,
            methods_per_class: 4,
            changesets: 500,
            code_bugs: 40,
            nl_bugs: 20,
            bridge_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClass {
    pub group: usize,
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHistory {
    pub changesets: Vec<Changeset>,
    /// Raw `git diff` text per changeset, same order.
    pub raw_diffs: Vec<String>,
    pub bugs: Vec<BugReport>,
    pub links: Vec<FixLink>,
    pub classes: Vec<SyntheticClass>,
    /// Ids of the natural-language-only bugs.
    pub nl_bug_ids: BTreeSet<String>,
}

impl SyntheticHistory {
    pub fn events(&self) -> Vec<HistoryEvent> {
        build_events(self.changesets.clone(), self.bugs.clone(), self.links.clone())
            .expect("generated links are consistent")
    }
}

struct Vocab {
    words: BTreeSet<String>,
    reserved: WordList,
    stop: WordList,
}

impl Vocab {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
            w.push_str(CODAS.choose(rng).unwrap());
            if !self.reserved.contains(&w) && !self.stop.contains(&w) && self.words.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn cap(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

struct Method {
    name: String,
    body: Vec<String>,
}

struct ClassState {
    group: usize,
    name: String,
    path: String,
    /// Terms specific to this class.
    terms: Vec<String>,
    methods: Vec<Method>,
}

impl ClassState {
    fn render(&self) -> String {
        let mut out = format!("package org.synth.g{};\n\npublic class {} {{\n", self.group, self.name);
        for m in &self.methods {
            out.push_str(&format!("\n    public void {}() {{\n", m.name));
            for s in &m.body {
                out.push_str("        ");
                out.push_str(s);
                out.push('\n');
            }
            out.push_str("    }\n");
        }
        out.push_str("}\n");
        out
    }
}

struct Generator {
    rng: ChaCha8Rng,
    cfg: SyntheticConfig,
    group_terms: Vec<Vec<String>>,
    nl_terms: Vec<Vec<String>>,
    /// `bridge[g][slot]` is shared by class `slot` of group `g` and its
    /// partner, class `slot` of group `g + 1`.
    bridge: Vec<Vec<Vec<String>>>,
    common: Vec<String>,
    generic_nl: Vec<String>,
    classes: Vec<ClassState>,
}

impl Generator {
    fn term_pool(&self, class: usize) -> Vec<&String> {
        let c = &self.classes[class];
        let (g, slot) = (c.group, class % self.cfg.classes_per_group);
        let n = self.cfg.groups;
        let mut pool: Vec<&String> = Vec::new();
        // weights by repetition: group terms dominate
        for _ in 0..3 {
            pool.extend(self.group_terms[g].iter());
        }
        for _ in 0..2 {
            pool.extend(c.terms.iter());
            pool.extend(self.bridge[g][slot].iter());
            pool.extend(self.bridge[(g + n - 1) % n][slot].iter());
        }
        pool.extend(self.common.iter().take(3));
        pool
    }

    fn identifier(&mut self, class: usize, parts: usize) -> String {
        let pool: Vec<String> = self.term_pool(class).into_iter().cloned().collect();
        let mut id = pool.choose(&mut self.rng).unwrap().clone();
        for _ in 1..parts {
            id.push_str(&cap(pool.choose(&mut self.rng).unwrap()));
        }
        id
    }

    fn statement(&mut self, class: usize) -> String {
        let target = self.identifier(class, 1);
        let call = self.identifier(class, 2);
        let parts = self.rng.random_range(1..=2);
        let arg = self.identifier(class, parts);
        match self.rng.random_range(0..3) {
            0 => format!("{target}.{call}({arg});"),
            1 => format!("{target} = {call}({arg});"),
            _ => format!("if ({target} != null) {{ {call}({arg}); }}"),
        }
    }

    fn new_method(&mut self, class: usize) -> Method {
        let own = self.classes[class].terms.clone();
        let verb = self.group_terms[self.classes[class].group].choose(&mut self.rng).unwrap().clone();
        let name = format!("{verb}{}", cap(own.choose(&mut self.rng).unwrap()));
        let lines = self.rng.random_range(3..=5);
        let body = (0..lines).map(|_| self.statement(class)).collect();
        Method { name, body }
    }

    /// Rewrites one or two statements of a random method, sometimes adding one.
    fn mutate(&mut self, class: usize) {
        let m = self.rng.random_range(0..self.classes[class].methods.len());
        let edits = self.rng.random_range(1..=2);
        for _ in 0..edits {
            let s = self.statement(class);
            let body = &mut self.classes[class].methods[m].body;
            let at = self.rng.random_range(0..body.len());
            if self.rng.random_bool(0.3) || body.len() < 3 {
                body.insert(at, s);
            } else {
                body[at] = s;
            }
        }
        let body = &mut self.classes[class].methods[m].body;
        if body.len() > 8 {
            body.remove(0);
        }
    }

    fn commit(&mut self, index: usize, touched: &[usize], message: String, adds: bool) -> (Changeset, String) {
        let mut raw = String::new();
        for &c in touched {
            let path = self.classes[c].path.clone();
            let old = self.classes[c].render();
            if adds {
                raw.push_str(&render_file_diff(None, Some((&path, &old))));
                continue;
            }
            self.mutate(c);
            let new = self.classes[c].render();
            raw.push_str(&render_file_diff(Some((&path, &old)), Some((&path, &new))));
        }
        let meta = CommitMeta {
            sha: format!("{:040x}", (self.cfg.seed << 32) ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9)),
            timestamp: timestamp(index),
            author: format!("dev{}", index % 5),
            message,
        };
        let cs = parse_diff(&raw, meta).expect("generated diffs parse");
        (cs, raw)
    }

    fn code_bug(&mut self, id: &str, class: usize, reported: i64) -> BugReport {
        let c = &self.classes[class];
        let method = c.methods.choose(&mut self.rng).unwrap().name.clone();
        let name = c.name.clone();
        let g = c.group;
        let ident = self.identifier(class, 2);
        let nl = self.nl_sentence(g, 4);
        BugReport {
            id: id.to_owned(),
            timestamp_reported: reported,
            summary: format!("{name}.{method} fails on {ident}"),
            description: format!("{nl}. Seen in {name} {method} {ident}"),
        }
    }

    fn nl_bug(&mut self, id: &str, group: usize, reported: i64) -> BugReport {
        BugReport {
            id: id.to_owned(),
            timestamp_reported: reported,
            summary: self.nl_sentence(group, 3),
            description: self.nl_sentence(group, 6),
        }
    }

    fn nl_sentence(&mut self, group: usize, words: usize) -> String {
        let mut out = Vec::new();
        for i in 0..words {
            out.push(self.nl_terms[group].choose(&mut self.rng).unwrap().clone());
            if i % 2 == 1 {
                out.push(FILLER.choose(&mut self.rng).unwrap().to_string());
            }
            if self.rng.random_bool(0.3) {
                out.push(self.generic_nl.choose(&mut self.rng).unwrap().clone());
            }
        }
        out.join(" ")
    }
}

fn timestamp(index: usize) -> i64 {
    1_500_000_000 + 3_600 * index as i64
}

/// Builds a project history per `cfg`. Identical configs give identical
/// histories.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticHistory {
    assert!(cfg.groups >= 2 && cfg.classes_per_group >= 2 && cfg.methods_per_class >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vocab = Vocab {
        words: BTreeSet::new(),
        reserved: WordList::java_keywords(),
        stop: WordList::english_stopwords(),
    };
    let group_terms: Vec<Vec<String>> = (0..cfg.groups).map(|_| vocab.words(10, &mut rng)).collect();
    let nl_terms: Vec<Vec<String>> = (0..cfg.groups).map(|_| vocab.words(8, &mut rng)).collect();
    let bridge: Vec<Vec<Vec<String>>> = (0..cfg.groups)
        .map(|_| (0..cfg.classes_per_group).map(|_| vocab.words(3, &mut rng)).collect())
        .collect();
    let common = vocab.words(5, &mut rng);
    let generic_nl = ["crash", "error", "wrong", "broken", "slow", "problem", "unexpected"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut classes = Vec::new();
    for g in 0..cfg.groups {
        for _ in 0..cfg.classes_per_group {
            let terms = vocab.words(4, &mut rng);
            let name = format!("{}{}", cap(&terms[0]), cap(group_terms[g].choose(&mut rng).unwrap()));
            classes.push(ClassState {
                group: g,
                path: format!("src/main/java/org/synth/g{g}/{name}.java"),
                name,
                terms,
                methods: Vec::new(),
            });
        }
    }
    let mut gen = Generator {
        rng,
        cfg: cfg.clone(),
        group_terms,
        nl_terms,
        bridge,
        common,
        generic_nl,
        classes,
    };
    for c in 0..gen.classes.len() {
        let methods = (0..cfg.methods_per_class).map(|_| gen.new_method(c)).collect();
        gen.classes[c].methods = methods;
    }

    // fix points: code-rich bugs over the first two thirds, NL bugs after
    let start = cfg.groups;
    let total_bugs = cfg.code_bugs + cfg.nl_bugs;
    assert!(cfg.changesets >= start + 2 * total_bugs + 10, "history too short for the requested bugs");
    let span = cfg.changesets - start;
    let split = start + span * 2 / 3;
    let mut fixes: Vec<(usize, bool)> = Vec::new();
    let pick = |rng: &mut ChaCha8Rng, lo: usize, hi: usize, n: usize| {
        let mut slots: Vec<usize> = (lo..hi).collect();
        slots.shuffle(rng);
        let mut s: Vec<usize> = slots.into_iter().take(n).collect();
        s.sort_unstable();
        s
    };
    let code_slots = pick(&mut gen.rng, start + 10, split, cfg.code_bugs);
    let nl_slots = pick(&mut gen.rng, split, cfg.changesets, cfg.nl_bugs);
    fixes.extend(code_slots.into_iter().map(|s| (s, false)));
    fixes.extend(nl_slots.into_iter().map(|s| (s, true)));

    let per_group = cfg.classes_per_group;
    let mut changesets = Vec::with_capacity(cfg.changesets);
    let mut raw_diffs = Vec::with_capacity(cfg.changesets);
    let mut bugs = Vec::new();
    let mut links = Vec::new();
    let mut nl_bug_ids = BTreeSet::new();
    let mut fix_iter = fixes.iter().peekable();
    for i in 0..cfg.changesets {
        let (cs, raw) = if i < start {
            let touched: Vec<usize> = (i * per_group..(i + 1) * per_group).collect();
            gen.commit(i, &touched, "initial import".into(), true)
        } else if fix_iter.peek().is_some_and(|(s, _)| *s == i) {
            let &(_, nl) = fix_iter.next().unwrap();
            let id = (bugs.len() + 1).to_string();
            let g = gen.rng.random_range(0..cfg.groups);
            let primary = g * per_group + gen.rng.random_range(0..per_group);
            let mut touched = vec![primary];
            if gen.rng.random_bool(0.3) {
                let other = g * per_group + gen.rng.random_range(0..per_group);
                if other != primary {
                    touched.push(other);
                }
            }
            let reported = timestamp(i) - 3_600 * gen.rng.random_range(1..=8) + 1_800;
            let bug = if nl {
                nl_bug_ids.insert(id.clone());
                gen.nl_bug(&id, g, reported)
            } else {
                gen.code_bug(&id, primary, reported)
            };
            bugs.push(bug);
            let msg = format!("fix issue {id}");
            let (cs, raw) = gen.commit(i, &touched, msg, false);
            links.push(FixLink {
                bug_id: id,
                fixing_sha: cs.sha.clone(),
                fixed_files: touched.iter().map(|&c| gen.classes[c].path.clone()).collect(),
            });
            (cs, raw)
        } else {
            let g = gen.rng.random_range(0..cfg.groups);
            let touched: Vec<usize> = if gen.rng.random_bool(cfg.bridge_rate) {
                let h = (g + 1) % cfg.groups;
                let slot = gen.rng.random_range(0..per_group);
                vec![g * per_group + slot, h * per_group + slot]
            } else {
                let mut in_group: Vec<usize> = (g * per_group..(g + 1) * per_group).collect();
                in_group.shuffle(&mut gen.rng);
                let n = gen.rng.random_range(1..=per_group.min(3));
                let mut t: Vec<usize> = in_group.into_iter().take(n).collect();
                t.sort_unstable();
                t
            };
            let msg = MESSAGES.choose(&mut gen.rng).unwrap().to_string();
            gen.commit(i, &touched, msg, false)
        };
        changesets.push(cs);
        raw_diffs.push(raw);
    }

    SyntheticHistory {
        changesets,
        raw_diffs,
        bugs,
        links,
        classes: gen
            .classes
            .iter()
            .map(|c| SyntheticClass {
                group: c.group,
                name: c.name.clone(),
                path: c.path.clone(),
            })
            .collect(),
        nl_bug_ids,
    }
}

/// `n` documents alternating between "A A A" and "B B B".
pub fn separable_corpus(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let t = if i % 2 == 0 { "a" } else { "b" };
            Document::from_terms(format!("d{i}"), [t, t, t])
        })
        .collect()
}
