//! Small sample databases shared by tests, benches and the README walkthrough.

use std::path::Path;

use rusqlite::Connection;

/// Three-table retail database: customers, products, orders.
/// 11 columns, 2 foreign keys.
pub const STORE_DDL: &str = "
CREATE TABLE customers (
    customer_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    city TEXT,
    segment TEXT
);
CREATE TABLE products (
    product_id INTEGER PRIMARY KEY,
    title TEXT NOT NULL,
    category TEXT,
    price REAL
);
CREATE TABLE orders (
    order_id INTEGER PRIMARY KEY,
    customer_id INTEGER REFERENCES customers(customer_id),
    product_id INTEGER REFERENCES products(product_id)
);
INSERT INTO customers VALUES
    (1, 'Ann', 'Alameda', 'retail'),
    (2, 'Bob', 'Fresno', 'wholesale'),
    (3, 'Cat', 'Alameda', 'retail'),
    (4, 'Dan', 'Oakland', NULL),
    (5, 'Eve', 'Berkeley', 'retail'),
    (6, 'Fay', NULL, 'wholesale');
INSERT INTO products VALUES
    (10, 'Desk Lamp', 'lighting', 19.99),
    (11, 'Floor Lamp', 'lighting', 49.5),
    (12, 'Office Chair', 'furniture', 120.0),
    (13, 'Standing Desk', 'furniture', 310.25),
    (14, 'Cable Tray', NULL, 0.1);
INSERT INTO orders VALUES
    (100, 1, 10),
    (101, 1, 12),
    (102, 2, 11),
    (103, 3, 10),
    (104, 3, 13),
    (105, 4, 14),
    (106, 5, 12),
    (107, 5, 12),
    (108, 2, 13);
";

pub fn build_store_db(path: &Path) -> rusqlite::Result<()> {
    let conn = Connection::open(path)?;
    conn.execute_batch(STORE_DDL)
}

/// One scripted question over the store database: gold SQL and the answer
/// each of the five default generators gives.
pub struct ScriptedQuestion {
    pub question: &'static str,
    pub evidence: &'static str,
    pub gold: &'static str,
    pub answers: [&'static str; 5],
}

const COUNT_ALAMEDA: &str = "SELECT COUNT(customer_id) FROM customers WHERE city = 'Alameda'";
const PRICEY: &str = "SELECT title FROM products WHERE price > 100";
const RETAIL: &str = "SELECT name FROM customers WHERE segment = 'retail'";
const LIGHTING: &str = "SELECT SUM(price) FROM products WHERE category = 'lighting'";

/// Five questions with known outcomes under majority voting: three
/// correct, one where the wrong answer wins the vote, and one whose gold
/// SQL does not execute.
pub const STORE_QUESTIONS: [ScriptedQuestion; 5] = [
    ScriptedQuestion {
        question: "How many customers live in Alameda?",
        evidence: "",
        gold: "SELECT COUNT(*) FROM customers WHERE city = 'Alameda'",
        answers: [COUNT_ALAMEDA, COUNT_ALAMEDA, COUNT_ALAMEDA, "SELECT COUNT(*) FROM customers", "SELECT COUNT(*) FROM customers"],
    },
    ScriptedQuestion {
        question: "Which products cost more than 100?",
        evidence: "",
        gold: PRICEY,
        answers: [PRICEY, PRICEY, PRICEY, PRICEY, PRICEY],
    },
    ScriptedQuestion {
        question: "List the names of retail customers.",
        evidence: "retail refers to segment = 'retail'",
        gold: RETAIL,
        answers: [
            RETAIL,
            "SELECT customers.name FROM customers WHERE customers.segment = 'retail'",
            "SELECT name FROM customers",
            "SELECT name FROM customers",
            "SELECT name FROM customers",
        ],
    },
    ScriptedQuestion {
        question: "Total price of lighting products?",
        evidence: "",
        gold: LIGHTING,
        answers: [LIGHTING, LIGHTING, LIGHTING, "SELECT SUM(products.price) FROM products WHERE products.category = 'lighting'", LIGHTING],
    },
    ScriptedQuestion {
        question: "Who ordered product 12?",
        evidence: "",
        gold: "SELECT nme FROM customers",
        answers: [
            "SELECT DISTINCT c.name FROM customers c JOIN orders o ON c.customer_id = o.customer_id WHERE o.product_id = 12",
            "SELECT DISTINCT c.name FROM customers c JOIN orders o ON c.customer_id = o.customer_id WHERE o.product_id = 12",
            "SELECT DISTINCT c.name FROM customers c JOIN orders o ON c.customer_id = o.customer_id WHERE o.product_id = 12",
            "SELECT name FROM customers",
            "SELECT name FROM customers",
        ],
    },
];

/// Files written by [`write_store_scenario`].
pub struct Scenario {
    pub config: std::path::PathBuf,
    pub db: std::path::PathBuf,
    pub dataset: std::path::PathBuf,
}

fn script_line(matcher: &str, response: &str) -> String {
    let mut s = serde_json::json!({ "match": matcher, "response": response, "repeat": true }).to_string();
    s.push('\n');
    s
}

/// Writes the store database (as `<dir>/store/store.sqlite`), mock scripts
/// for every role, a BIRD-format dataset of [`STORE_QUESTIONS`] and a
/// config tying them together. Every scripted response repeats, so runs
/// are deterministic regardless of call order.
pub fn write_store_scenario(dir: &Path) -> crate::Result<Scenario> {
    let db = dir.join("store").join("store.sqlite");
    std::fs::create_dir_all(db.parent().unwrap())?;
    if db.exists() {
        std::fs::remove_file(&db)?;
    }
    build_store_db(&db).map_err(|e| crate::Error::unreadable(&db, e))?;
    let mocks = dir.join("mocks");
    std::fs::create_dir_all(&mocks)?;

    let schema = script_line("List the keywords", "customers, products, Alameda, retail, lighting, price")
        + &script_line(
            "Select the columns",
            "customers.name, customers.city, customers.segment, products.title, products.price, products.category",
        );
    std::fs::write(mocks.join("schema.jsonl"), schema)?;
    std::fs::write(mocks.join("selector.jsonl"), script_line("Choose the candidate", "1"))?;
    for g in 0..5 {
        let text: String = STORE_QUESTIONS
            .iter()
            .map(|q| script_line(&format!("Question: {}", q.question), &format!("```sql\n{}\n```", q.answers[g])))
            .collect();
        std::fs::write(mocks.join(format!("g{}.jsonl", g + 1)), text)?;
    }

    let records: Vec<serde_json::Value> = STORE_QUESTIONS
        .iter()
        .enumerate()
        .map(|(i, q)| serde_json::json!({"question_id": i, "db_id": "store", "question": q.question, "evidence": q.evidence, "SQL": q.gold}))
        .collect();
    let dataset = dir.join("dev.json");
    std::fs::write(&dataset, serde_json::to_string_pretty(&records)?)?;

    let mut cfg = String::from("p_s = 2\nseed = 7\nselector = \"model\"\nworkers = 2\n\n");
    cfg += "[backends.schema]\nkind = \"mock\"\nscript = \"mocks/schema.jsonl\"\n\n";
    cfg += "[backends.selector]\nkind = \"mock\"\nscript = \"mocks/selector.jsonl\"\n";
    for g in 1..=5 {
        cfg += &format!("\n[backends.SQLG_{g}]\nkind = \"mock\"\nscript = \"mocks/g{g}.jsonl\"\n");
    }
    let config = dir.join("nl2sql.toml");
    std::fs::write(&config, cfg)?;
    Ok(Scenario { config, db, dataset })
}
