use std::path::PathBuf;

use super::*;
use crate::backend::MockChat;
use crate::exec::ExecStatus;
use crate::fixtures::build_store_db;

struct Store {
    _dir: tempfile::TempDir,
    catalog: DbCatalog,
    db: PathBuf,
}

fn store() -> Store {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("store").join("store.sqlite");
    std::fs::create_dir_all(db.parent().unwrap()).unwrap();
    build_store_db(&db).unwrap();
    let catalog = DbCatalog::new(dir.path());
    Store { _dir: dir, catalog, db }
}

const GOLDS: &[(&str, &str)] = &[
    ("How many customers live in Alameda?", "SELECT COUNT(customer_id) FROM customers WHERE city = 'Alameda'"),
    ("Which products cost more than 100?", "SELECT title FROM products WHERE price > 100"),
    ("List the names of retail customers.", "SELECT name FROM customers WHERE segment = 'retail'"),
    ("Total price of lighting products?", "SELECT SUM(price) FROM products WHERE category = 'lighting'"),
    ("Who ordered product 12?", "SELECT DISTINCT c.name FROM customers c JOIN orders o ON c.customer_id = o.customer_id WHERE o.product_id = 12"),
];

fn items(n: usize) -> Vec<BenchItem> {
    (0..n)
        .map(|i| {
            let (q, sql) = GOLDS[i % GOLDS.len()];
            BenchItem {
                question_id: i as i64,
                db_id: "store".into(),
                question: format!("{q} #{i}"),
                evidence: format!("hint {}", i % 7),
                gold_sql: sql.into(),
                gold_columns: None,
            }
        })
        .collect()
}

#[test]
fn allocation_is_exact_and_fair() {
    assert_eq!(allocate(100, &[0.4, 0.2, 0.2, 0.2]), vec![40, 20, 20, 20]);
    assert_eq!(allocate(7, &[1.0, 1.0, 1.0]), vec![3, 2, 2]);
    assert_eq!(allocate(5, &[0.0, 1.0]), vec![0, 5]);
    assert_eq!(allocate(3, &[0.0, 0.0]), vec![0, 0]);
    for n in 0..50 {
        assert_eq!(allocate(n, &[0.3, 0.3, 0.25, 0.15]).iter().sum::<usize>(), n);
    }
}

#[test]
fn multitask_honors_mix() {
    let s = store();
    let out = synth_multitask(&items(100), &s.catalog, TaskMix::default(), SynthSettings::default()).unwrap();
    let mut counts = BTreeMap::new();
    for x in &out.samples {
        *counts.entry(x.task).or_insert(0) += 1;
    }
    let skipped = out.skipped.len();
    assert_eq!(counts[&Task::Text2sql], 40);
    assert_eq!(counts[&Task::QuestionInference], 20);
    assert_eq!(counts[&Task::EvidenceInference], 20);
    assert_eq!(counts[&Task::SelfRefine] + skipped, 20);
    assert!(skipped <= 1, "{:?}", out.skipped);
}

#[test]
fn evidence_pool_holds_gold_once() {
    let s = store();
    let mix = TaskMix {
        text2sql: 0.0,
        question_inference: 0.0,
        evidence_inference: 1.0,
        self_refine: 0.0,
    };
    let out = synth_multitask(&items(20), &s.catalog, mix, SynthSettings::default()).unwrap();
    assert_eq!(out.samples.len(), 20);
    for x in &out.samples {
        let opts: Vec<&str> = x.prompt.lines().filter_map(|l| l.split_once(". ").map(|(_, r)| r)).filter(|r| r.starts_with("hint")).collect();
        assert_eq!(opts.len(), EVIDENCE_DISTRACTORS + 1);
        assert_eq!(opts.iter().filter(|o| **o == x.target).count(), 1);
    }
}

#[test]
fn self_refine_mutations_change_the_result() {
    let s = store();
    let mix = TaskMix {
        text2sql: 0.0,
        question_inference: 0.0,
        evidence_inference: 0.0,
        self_refine: 1.0,
    };
    let its = items(25);
    let out = synth_multitask(&its, &s.catalog, mix, SynthSettings::default()).unwrap();
    assert!(!out.samples.is_empty());
    for x in &out.samples {
        let it = &its[x.meta.question_id as usize];
        assert_eq!(x.target, it.gold_sql);
        assert!(x.meta.mutation.is_some());
        let prev = x.prompt.split("Previous query:\n").nth(1).unwrap().split("\n\nExecution result").next().unwrap();
        assert_ne!(prev, it.gold_sql);
        let a = execute(prev, &s.db, 5_000);
        let g = execute(&it.gold_sql, &s.db, 5_000);
        assert!(!results_match(&a, &g, EquivalenceMode::Set), "{prev}");
    }
}

#[test]
fn failing_gold_is_skipped() {
    let s = store();
    let mut its = items(3);
    its[1].gold_sql = "SELECT nope FROM customers".into();
    let out = synth_multitask(&its, &s.catalog, TaskMix::default(), SynthSettings::default()).unwrap();
    assert_eq!(out.samples.len(), 2);
    assert_eq!(out.skipped[0].question_id, 1);
}

#[test]
fn deterministic_given_seed() {
    let s = store();
    let a = synth_multitask(&items(30), &s.catalog, TaskMix::default(), SynthSettings { seed: 4, ..Default::default() }).unwrap();
    let b = synth_multitask(&items(30), &s.catalog, TaskMix::default(), SynthSettings { seed: 4, ..Default::default() }).unwrap();
    assert_eq!(a, b);
}

fn cand(sql: &str, gen: usize, db: &Path) -> CandidateSql {
    CandidateSql {
        sql: sql.into(),
        generator_id: format!("SQLG_{gen}"),
        generator_rank: gen,
        schema_index: 1,
        refined: false,
        outcome: execute(sql, db, 5_000),
    }
}

/// Gold plus four wrong variants, spread over five generators.
fn stub_source(item: &BenchItem, _doc: &SchemaDoc, db: &Path) -> Result<CandidateBatch> {
    let wrong = [
        "SELECT COUNT(*) FROM orders",
        "SELECT name FROM customers WHERE city = 'Fresno'",
        "SELECT MAX(price) FROM products",
        "SELECT title FROM products WHERE category = 'furniture'",
    ];
    let shift = item.question_id as usize;
    let mut candidates = vec![cand(&item.gold_sql, shift % 5 + 1, db)];
    candidates.push(cand(&item.gold_sql.to_lowercase(), (shift + 2) % 5 + 1, db));
    for (i, w) in wrong.iter().enumerate() {
        candidates.push(cand(w, (shift + i) % 5 + 1, db));
    }
    candidates.push(cand("SELEC broken", 1, db));
    Ok(CandidateBatch { candidates, subsets: vec![] })
}

#[test]
fn selection_samples_are_balanced() {
    let s = store();
    let out = synth_selection(&items(600), &s.catalog, &stub_source, BalancePolicy::default(), SynthSettings::default()).unwrap();
    assert_eq!(out.samples.len(), 600);
    let r = balance_report(&out.samples);
    assert!(r.within(0.05), "{r:?}");
    for x in &out.samples {
        let listed: Vec<&str> = x.prompt.split("Candidates:\n").nth(1).unwrap().split("\n\n").next().unwrap().lines().collect();
        assert_eq!(listed.len(), x.meta.candidate_order.as_ref().unwrap().len());
        let correct = listed[x.target.parse::<usize>().unwrap() - 1].split_once(". ").unwrap().1;
        let gold = execute(&x.prompt_gold(), &s.db, 5_000);
        assert_eq!(execute(correct, &s.db, 5_000).canonical(EquivalenceMode::Set), gold.canonical(EquivalenceMode::Set));
        for l in listed {
            let sql = l.split_once(". ").unwrap().1;
            assert_eq!(deformalize(sql), sql);
        }
    }
}

impl TrainingSample {
    fn prompt_gold(&self) -> String {
        GOLDS[self.meta.question_id as usize % GOLDS.len()].1.to_string()
    }
}

#[test]
fn no_correct_candidate_and_unanimous_are_skipped() {
    let s = store();
    let all_wrong = |_: &BenchItem, _: &SchemaDoc, db: &Path| -> Result<CandidateBatch> {
        Ok(CandidateBatch {
            candidates: vec![cand("SELECT 100", 1, db), cand("SELECT 200", 2, db)],
            subsets: vec![],
        })
    };
    let out = synth_selection(&items(2), &s.catalog, &all_wrong, BalancePolicy::default(), SynthSettings::default()).unwrap();
    assert!(out.samples.is_empty());
    assert!(out.skipped.iter().all(|x| x.reason.contains("no correct candidate")));

    let unanimous = |it: &BenchItem, _: &SchemaDoc, db: &Path| -> Result<CandidateBatch> {
        Ok(CandidateBatch {
            candidates: vec![cand(&it.gold_sql, 1, db)],
            subsets: vec![],
        })
    };
    let out = synth_selection(&items(2), &s.catalog, &unanimous, BalancePolicy::default(), SynthSettings::default()).unwrap();
    assert_eq!(out.skipped.len(), 2);
}

#[test]
fn reformat_gate() {
    let s = store();
    let doc = s.catalog.doc("store").unwrap();
    let gold = "SELECT c.name FROM customers c JOIN orders o ON c.customer_id = o.customer_id WHERE o.product_id = 12";
    let cte = "```sql\nWITH buyers AS (SELECT customer_id FROM orders WHERE product_id = 12)\nSELECT c.name FROM customers c JOIN buyers b ON c.customer_id = b.customer_id\n```";
    let m = MockChat::sequence("r", [cte, "SELECT name FROM customers"]);
    let ok = reformat_sql(gold, ReformatStyle::ComplexPattern, &m, "r", &doc, &s.db, SynthSettings::default()).unwrap();
    assert!(ok.accepted);
    assert!(ok.sql.starts_with("WITH buyers"));
    let no = reformat_sql(gold, ReformatStyle::Standardized, &m, "r", &doc, &s.db, SynthSettings::default()).unwrap();
    assert!(!no.accepted);
    assert_eq!(no.sql, gold);
}

#[test]
fn reformat_corpus_counts_rejections() {
    let s = store();
    let its = items(2);
    let m = MockChat::sequence("r", [its[0].gold_sql.replace("SELECT", "select"), "SELECT 42".into()]);
    let out = synth_reformat(&its, &s.catalog, ReformatStyle::Standardized, &m, "r", SynthSettings::default()).unwrap();
    assert_eq!(out.samples.len(), 1, "{:?}", out.skipped);
    assert_eq!(out.rejected, 1);
    assert_eq!(execute(&out.samples[0].target, &s.db, 5_000).status, ExecStatus::Ok);
}
