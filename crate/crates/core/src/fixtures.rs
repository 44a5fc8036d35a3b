//! Small deterministic databases and datasets used by tests, benches and the
//! CLI demo commands.
//!
//! Column comments are written as trailing `--` comments in the DDL, which
//! SQLite keeps verbatim in `sqlite_master`.

use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::Connection;
use serde_json::json;

use crate::schema::{
    ColumnInfo, ColumnRef, EnumEntry, FkOrigin, ForeignKey, OneToMany, SchemaCard, TableInfo,
};
use crate::sql::{Database, SqlValue};
use crate::Result;

/// Which catalog declarations a fixture keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Declarations {
    pub primary_keys: bool,
    pub foreign_keys: bool,
}

impl Default for Declarations {
    fn default() -> Self {
        Self {
            primary_keys: true,
            foreign_keys: true,
        }
    }
}

/// Column definition used by the fixture DDL writer.
struct Col<'a> {
    name: &'a str,
    ty: &'a str,
    extra: &'a str,
    pk: bool,
    references: Option<(&'a str, &'a str)>,
    comment: &'a str,
}

const fn col<'a>(name: &'a str, ty: &'a str) -> Col<'a> {
    Col {
        name,
        ty,
        extra: "",
        pk: false,
        references: None,
        comment: "",
    }
}

impl<'a> Col<'a> {
    const fn pk(mut self) -> Self {
        self.pk = true;
        self
    }
    const fn not_null(mut self) -> Self {
        self.extra = " NOT NULL";
        self
    }
    const fn refs(mut self, table: &'a str, column: &'a str) -> Self {
        self.references = Some((table, column));
        self
    }
    const fn comment(mut self, comment: &'a str) -> Self {
        self.comment = comment;
        self
    }
}

struct Table<'a> {
    name: &'a str,
    comment: &'a str,
    cols: Vec<Col<'a>>,
    /// Composite primary key, declared as a table constraint.
    composite_pk: &'a [&'a str],
}

fn ddl(table: &Table<'_>, decl: Declarations) -> String {
    let mut lines = Vec::new();
    let head = if table.comment.is_empty() {
        format!("CREATE TABLE {} (", table.name)
    } else {
        format!("CREATE TABLE {} ( -- {}", table.name, table.comment)
    };
    let mut defs: Vec<(String, &str)> = Vec::new();
    for c in &table.cols {
        let mut def = format!("  {} {}{}", c.name, c.ty, c.extra);
        if c.pk && decl.primary_keys {
            def.push_str(" PRIMARY KEY");
        }
        if let (Some((t, col)), true) = (c.references, decl.foreign_keys) {
            def.push_str(&format!(" REFERENCES {t}({col})"));
        }
        defs.push((def, c.comment));
    }
    if !table.composite_pk.is_empty() && decl.primary_keys {
        defs.push((format!("  PRIMARY KEY ({})", table.composite_pk.join(", ")), ""));
    }
    let n = defs.len();
    for (i, (def, comment)) in defs.into_iter().enumerate() {
        let sep = if i + 1 < n { "," } else { "" };
        if comment.is_empty() {
            lines.push(format!("{def}{sep}"));
        } else {
            lines.push(format!("{def}{sep} -- {comment}"));
        }
    }
    format!("{head}\n{}\n)", lines.join("\n"))
}

fn create(path: &Path, tables: &[Table<'_>], inserts: &[&str], decl: Declarations) -> Result<()> {
    if path.exists() {
        fs::remove_file(path)?;
    }
    let conn = Connection::open(path)?;
    let mut batch = String::from("BEGIN;\n");
    for t in tables {
        batch.push_str(&ddl(t, decl));
        batch.push_str(";\n");
    }
    for ins in inserts {
        batch.push_str(ins);
        batch.push_str(";\n");
    }
    batch.push_str("COMMIT;\n");
    conn.execute_batch(&batch)?;
    Ok(())
}

fn demo_tables() -> Vec<Table<'static>> {
    vec![
        Table {
            name: "singer",
            comment: "performing artists",
            cols: vec![
                col("singer_id", "INTEGER").pk(),
                col("name", "TEXT").not_null().comment("stage name"),
                col("age", "INTEGER"),
                col("nationality", "TEXT"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "concert",
            comment: "",
            cols: vec![
                col("concert_id", "INTEGER").pk(),
                col("singer_id", "INTEGER").refs("singer", "singer_id"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "customer",
            comment: "",
            cols: vec![col("id", "INTEGER").pk(), col("name", "TEXT")],
            composite_pk: &[],
        },
        Table {
            name: "orders",
            comment: "customer orders",
            cols: vec![
                col("order_id", "INTEGER").pk(),
                col("customer_id", "INTEGER").refs("customer", "id"),
                col("status", "INTEGER").comment("0: init; 1: paid; 2: cancelled"),
            ],
            composite_pk: &[],
        },
    ]
}

const DEMO_ROWS: &[&str] = &[
    "INSERT INTO singer VALUES (1, 'Ann', 30, 'US'), (2, 'Bo', 25, 'UK'), (3, 'Ann', 40, 'US')",
    "INSERT INTO concert VALUES (10, 1), (11, 1), (12, 2)",
    "INSERT INTO customer VALUES (1, 'Acme'), (2, 'Globex')",
    "INSERT INTO orders VALUES (100, 1, 0), (101, 1, 1), (102, 2, 2), (103, 2, 0), (104, 2, 1), (105, 2, 2)",
];

/// The four-table demo database (`singer`, `concert`, `customer`, `orders`),
/// written to `dir/demo_db.sqlite`.
pub fn demo_db(dir: &Path) -> Result<Database> {
    demo_db_with(dir, Declarations::default())
}

pub fn demo_db_with(dir: &Path, decl: Declarations) -> Result<Database> {
    let path = dir.join("demo_db.sqlite");
    create(&path, &demo_tables(), DEMO_ROWS, decl)?;
    Database::with_id("demo_db", path)
}

/// The fully mined card of [`demo_db`] under [`demo_mining_config`],
/// written out by hand so unit tests do not depend on the miner.
pub fn demo_card() -> SchemaCard {
    let c = |name: &str, ty: &str, comment: &str, nullable: bool| ColumnInfo {
        name: name.into(),
        declared_type: ty.into(),
        comment: comment.into(),
        nullable,
    };
    let r = ColumnRef::new;
    let mut card = SchemaCard {
        database_id: "demo_db".into(),
        tables: vec![
            TableInfo {
                name: "singer".into(),
                comment: "performing artists".into(),
                columns: vec![
                    c("singer_id", "INTEGER", "", false),
                    c("name", "TEXT", "stage name", false),
                    c("age", "INTEGER", "", true),
                    c("nationality", "TEXT", "", true),
                ],
            },
            TableInfo {
                name: "concert".into(),
                comment: String::new(),
                columns: vec![
                    c("concert_id", "INTEGER", "", false),
                    c("singer_id", "INTEGER", "", true),
                ],
            },
            TableInfo {
                name: "customer".into(),
                comment: String::new(),
                columns: vec![c("id", "INTEGER", "", false), c("name", "TEXT", "", true)],
            },
            TableInfo {
                name: "orders".into(),
                comment: "customer orders".into(),
                columns: vec![
                    c("order_id", "INTEGER", "", false),
                    c("customer_id", "INTEGER", "", true),
                    c("status", "INTEGER", "0: init; 1: paid; 2: cancelled", true),
                ],
            },
        ],
        ..Default::default()
    };
    for (t, k) in [
        ("singer", "singer_id"),
        ("concert", "concert_id"),
        ("customer", "id"),
        ("orders", "order_id"),
    ] {
        card.primary_keys.insert(t.into(), vec![k.into()]);
    }
    card.foreign_keys = vec![
        ForeignKey {
            child: r("concert", "singer_id"),
            parent: r("singer", "singer_id"),
            origin: FkOrigin::Declared,
            coverage: 1.0,
        },
        ForeignKey {
            child: r("orders", "customer_id"),
            parent: r("customer", "id"),
            origin: FkOrigin::Declared,
            coverage: 1.0,
        },
    ];
    card.one_to_many = vec![
        OneToMany {
            one_side: r("singer", "singer_id"),
            many_side: r("concert", "singer_id"),
            max_fanout: 2,
        },
        // Containment pairs count too: {1, 2} is a subset of customer.id.
        OneToMany {
            one_side: r("customer", "id"),
            many_side: r("concert", "singer_id"),
            max_fanout: 2,
        },
        OneToMany {
            one_side: r("singer", "singer_id"),
            many_side: r("orders", "customer_id"),
            max_fanout: 4,
        },
        OneToMany {
            one_side: r("customer", "id"),
            many_side: r("orders", "customer_id"),
            max_fanout: 4,
        },
    ];
    let text = |s: &str| SqlValue::Text(s.into());
    let label = |v: SqlValue, l: &str| EnumEntry {
        stored_value: v,
        label: l.into(),
    };
    let int = SqlValue::Integer;
    card.enums.insert(
        r("singer", "name"),
        vec![label(text("Ann"), "Ann"), label(text("Bo"), "Bo")],
    );
    card.enums.insert(
        r("singer", "nationality"),
        vec![label(text("UK"), "UK"), label(text("US"), "US")],
    );
    card.enums.insert(
        r("concert", "singer_id"),
        vec![label(int(1), "1"), label(int(2), "2")],
    );
    card.enums.insert(
        r("orders", "customer_id"),
        vec![label(int(1), "1"), label(int(2), "2")],
    );
    card.enums.insert(
        r("orders", "status"),
        vec![
            label(int(0), "init"),
            label(int(1), "paid"),
            label(int(2), "cancelled"),
        ],
    );
    card
}

/// Mining thresholds sized for the three-row demo tables.
///
/// With the default ratio of 0.2 no column of a three-row table can be an
/// enumeration, so the demo runs with the ratio relaxed to 0.7 and the
/// distinct-count cap at 3.
pub fn demo_mining_config() -> crate::mining::MiningConfig {
    crate::mining::MiningConfig {
        enum_max_distinct: 3,
        enum_max_ratio: 0.7,
        ..Default::default()
    }
}

fn concert_singer_tables() -> Vec<Table<'static>> {
    vec![
        Table {
            name: "stadium",
            comment: "",
            cols: vec![
                col("Stadium_ID", "INTEGER").pk(),
                col("Location", "TEXT"),
                col("Name", "TEXT"),
                col("Capacity", "INTEGER"),
                col("Highest", "INTEGER"),
                col("Lowest", "INTEGER"),
                col("Average", "INTEGER"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "singer",
            comment: "",
            cols: vec![
                col("Singer_ID", "INTEGER").pk(),
                col("Name", "TEXT"),
                col("Country", "TEXT"),
                col("Song_Name", "TEXT"),
                col("Song_release_year", "TEXT"),
                col("Age", "INTEGER"),
                col("Is_male", "TEXT").comment("T: male; F: female"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "concert",
            comment: "",
            cols: vec![
                col("concert_ID", "INTEGER").pk(),
                col("concert_Name", "TEXT"),
                col("Theme", "TEXT"),
                col("Stadium_ID", "INTEGER").refs("stadium", "Stadium_ID"),
                col("Year", "TEXT"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "singer_in_concert",
            comment: "",
            cols: vec![
                col("concert_ID", "INTEGER").refs("concert", "concert_ID"),
                col("Singer_ID", "INTEGER").refs("singer", "Singer_ID"),
            ],
            composite_pk: &["concert_ID", "Singer_ID"],
        },
    ]
}

const CONCERT_SINGER_ROWS: &[&str] = &[
    "INSERT INTO stadium VALUES \
     (1, 'Raith Rovers', 'Stark''s Park', 10104, 4812, 1294, 2106), \
     (2, 'Ayr United', 'Somerset Park', 11998, 2363, 1057, 1477), \
     (3, 'East Fife', 'Bayview Stadium', 2000, 1980, 533, 864), \
     (4, 'Queen''s Park', 'Hampden Park', 52500, 1763, 466, 730), \
     (5, 'Stirling Albion', 'Forthbank Stadium', 3808, 1125, 404, 642), \
     (6, 'Arbroath', 'Gayfield Park', 4125, 921, 411, 638), \
     (7, 'Alloa Athletic', 'Recreation Park', 3100, 1057, 331, 637), \
     (9, 'Peterhead', 'Balmoor', 4000, 837, 400, 615), \
     (10, 'Brechin City', 'Glebe Park', 3960, 780, 315, 552)",
    "INSERT INTO singer VALUES \
     (1, 'Joe Sharp', 'Netherlands', 'You', '1992', 52, 'F'), \
     (2, 'Timbaland', 'United States', 'Dangerous', '2008', 32, 'T'), \
     (3, 'Justin Brown', 'France', 'Hey Oh', '2013', 29, 'T'), \
     (4, 'Rose White', 'France', 'Sun', '2003', 41, 'F'), \
     (5, 'John Nizinik', 'France', 'Gentleman', '2014', 43, 'T'), \
     (6, 'Tribal King', 'France', 'Love', '2016', 25, 'T')",
    "INSERT INTO concert VALUES \
     (1, 'Auditions', 'Free choice', 1, '2014'), \
     (2, 'Super bootcamp', 'Free choice 2', 2, '2014'), \
     (3, 'Home Visits', 'Bleeding Love', 2, '2015'), \
     (4, 'Week 1', 'Wide Awake', 10, '2014'), \
     (5, 'Week 1', 'Happy Tonight', 9, '2015'), \
     (6, 'Week 2', 'Party All Night', 7, '2015')",
    "INSERT INTO singer_in_concert VALUES \
     (1, 2), (1, 3), (1, 5), (2, 3), (2, 6), (3, 5), (4, 4), (5, 6), (5, 3), (6, 2)",
];

pub fn concert_singer_db(dir: &Path) -> Result<Database> {
    concert_singer_db_with(dir, Declarations::default())
}

pub fn concert_singer_db_with(dir: &Path, decl: Declarations) -> Result<Database> {
    let path = dir.join("concert_singer.sqlite");
    create(&path, &concert_singer_tables(), CONCERT_SINGER_ROWS, decl)?;
    Database::with_id("concert_singer", path)
}

fn retail_tables() -> Vec<Table<'static>> {
    vec![
        Table {
            name: "store",
            comment: "retail locations",
            cols: vec![
                col("store_id", "INTEGER").pk(),
                col("city", "TEXT"),
                col("region", "TEXT"),
                col("manager", "TEXT"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "product",
            comment: "",
            cols: vec![
                col("product_id", "INTEGER").pk(),
                col("name", "TEXT"),
                col("brand", "TEXT"),
                col("category", "TEXT"),
                col("price", "REAL"),
            ],
            composite_pk: &[],
        },
        Table {
            name: "orders",
            comment: "",
            cols: vec![
                col("order_id", "INTEGER").pk(),
                col("store_id", "INTEGER").refs("store", "store_id"),
                col("product_id", "INTEGER").refs("product", "product_id"),
                col("status", "INTEGER").comment("0: init; 1: paid; 2: shipped; 3: cancelled"),
                col("channel", "INTEGER").comment("1: online, 2: in store"),
                col("quantity", "INTEGER"),
            ],
            composite_pk: &[],
        },
    ]
}

const CITIES: [&str; 12] = [
    "Paris", "Lyon", "Nice", "Lille", "Nantes", "Rennes", "Brest", "Dijon", "Metz", "Tours",
    "Caen", "Reims",
];
const REGIONS: [&str; 4] = ["North", "South", "East", "West"];
const MANAGERS: [&str; 25] = [
    "Alice Martin", "Bruno Petit", "Chloe Durand", "David Leroy", "Emma Moreau", "Felix Simon",
    "Gina Laurent", "Hugo Michel", "Ines Garcia", "Jules David", "Karin Bertrand", "Leo Roux",
    "Mila Vincent", "Noah Fournier", "Olga Morel", "Paul Girard", "Quinn Andre", "Rosa Mercier",
    "Sami Dupont", "Tara Lambert", "Ugo Bonnet", "Vera Francois", "Will Martinez", "Xena Legrand",
    "Yann Garnier",
];
const BRANDS: [&str; 8] = [
    "Acme", "Globex", "Initech", "Umbrella", "Hooli", "Stark", "Wayne", "Wonka",
];
const CATEGORIES: [&str; 3] = ["Gadgets", "Tools", "Toys"];
const PRODUCT_WORDS: [&str; 10] = [
    "Widget", "Gizmo", "Sprocket", "Doohickey", "Whatsit", "Gadget", "Thingamajig", "Contraption",
    "Device", "Apparatus",
];
const COLORS: [&str; 3] = ["Blue", "Red", "Green"];

fn retail_inserts() -> Vec<String> {
    let mut out = Vec::new();
    let stores: Vec<String> = (0..25)
        .map(|i| {
            format!(
                "({}, '{}', '{}', '{}')",
                i + 1,
                CITIES[i % CITIES.len()],
                REGIONS[i % REGIONS.len()],
                MANAGERS[i]
            )
        })
        .collect();
    out.push(format!("INSERT INTO store VALUES {}", stores.join(", ")));
    let products: Vec<String> = (0..30)
        .map(|i| {
            format!(
                "({}, '{} {}', '{}', '{}', {:.2})",
                i + 1,
                COLORS[i % COLORS.len()],
                PRODUCT_WORDS[i % PRODUCT_WORDS.len()],
                BRANDS[i % BRANDS.len()],
                CATEGORIES[i % CATEGORIES.len()],
                5.0 + (i as f64) * 2.5
            )
        })
        .collect();
    out.push(format!("INSERT INTO product VALUES {}", products.join(", ")));
    let orders: Vec<String> = (0..80)
        .map(|i| {
            format!(
                "({}, {}, {}, {}, {}, {})",
                1000 + i,
                (i * 7) % 25 + 1,
                (i * 11) % 30 + 1,
                i % 4,
                i % 2 + 1,
                i % 5 + 1
            )
        })
        .collect();
    out.push(format!("INSERT INTO orders VALUES {}", orders.join(", ")));
    out
}

/// A three-table retail database sized so that the default mining
/// thresholds find enumerations (`orders.status`, `orders.channel`,
/// `store.region`, `product.category`).
pub fn retail_db(dir: &Path) -> Result<Database> {
    retail_db_with(dir, Declarations::default())
}

pub fn retail_db_with(dir: &Path, decl: Declarations) -> Result<Database> {
    let path = dir.join("retail.sqlite");
    let inserts = retail_inserts();
    let refs: Vec<&str> = inserts.iter().map(String::as_str).collect();
    create(&path, &retail_tables(), &refs, decl)?;
    Database::with_id("retail", path)
}

/// A Spider-format benchmark item.
#[derive(Debug, Clone, Copy)]
pub struct FixtureItem {
    pub db_id: &'static str,
    pub question: &'static str,
    pub query: &'static str,
}

/// Twenty question/SQL pairs in the style of the Spider development set.
pub const SPIDER_MINI: [FixtureItem; 20] = [
    FixtureItem { db_id: "concert_singer", question: "How many singers do we have?", query: "SELECT count(*) FROM singer" },
    FixtureItem { db_id: "concert_singer", question: "Show name, country, age for all singers ordered by age from the oldest to the youngest.", query: "SELECT name, country, age FROM singer ORDER BY age DESC" },
    FixtureItem { db_id: "concert_singer", question: "What is the average, minimum, and maximum age of all singers from France?", query: "SELECT avg(age), min(age), max(age) FROM singer WHERE country = 'France'" },
    FixtureItem { db_id: "concert_singer", question: "Show the name and the release year of the song by the youngest singer.", query: "SELECT song_name, song_release_year FROM singer ORDER BY age LIMIT 1" },
    FixtureItem { db_id: "concert_singer", question: "What are all distinct countries where singers above age 20 are from?", query: "SELECT DISTINCT country FROM singer WHERE age > 20" },
    FixtureItem { db_id: "concert_singer", question: "Show all countries and the number of singers in each country.", query: "SELECT country, count(*) FROM singer GROUP BY country" },
    FixtureItem { db_id: "concert_singer", question: "List all song names by singers above the average age.", query: "SELECT song_name FROM singer WHERE age > (SELECT avg(age) FROM singer)" },
    FixtureItem { db_id: "concert_singer", question: "Show location and name for all stadiums with a capacity between 5000 and 10000.", query: "SELECT location, name FROM stadium WHERE capacity BETWEEN 5000 AND 10000" },
    FixtureItem { db_id: "concert_singer", question: "What is the maximum capacity and the average of all stadiums?", query: "SELECT max(capacity), average FROM stadium" },
    FixtureItem { db_id: "concert_singer", question: "How many concerts are there in year 2014 or 2015?", query: "SELECT count(*) FROM concert WHERE YEAR = 2014 OR YEAR = 2015" },
    FixtureItem { db_id: "concert_singer", question: "Show the stadium name and the number of concerts in each stadium.", query: "SELECT T2.name, count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id GROUP BY T1.stadium_id" },
    FixtureItem { db_id: "concert_singer", question: "Which year has most number of concerts?", query: "SELECT YEAR FROM concert GROUP BY YEAR ORDER BY count(*) DESC LIMIT 1" },
    FixtureItem { db_id: "concert_singer", question: "Show the stadium names without any concert.", query: "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)" },
    FixtureItem { db_id: "concert_singer", question: "Show countries where a singer above age 40 and a singer below 30 are from.", query: "SELECT country FROM singer WHERE age > 40 INTERSECT SELECT country FROM singer WHERE age < 30" },
    FixtureItem { db_id: "concert_singer", question: "Show the name and theme for all concerts and the number of singers in each concert.", query: "SELECT T2.concert_name, T2.theme, count(*) FROM singer_in_concert AS T1 JOIN concert AS T2 ON T1.concert_id = T2.concert_id GROUP BY T2.concert_id" },
    FixtureItem { db_id: "concert_singer", question: "List singer names and number of concerts for each singer.", query: "SELECT T2.name, count(*) FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id GROUP BY T2.singer_id" },
    FixtureItem { db_id: "demo_db", question: "How many orders are paid?", query: "SELECT count(*) FROM orders WHERE status = 1" },
    FixtureItem { db_id: "demo_db", question: "List the names of customers who have an order that was cancelled.", query: "SELECT DISTINCT T1.name FROM customer AS T1 JOIN orders AS T2 ON T1.id = T2.customer_id WHERE T2.status = 2" },
    FixtureItem { db_id: "demo_db", question: "What are the names of singers from the US?", query: "SELECT name FROM singer WHERE nationality = 'US'" },
    FixtureItem { db_id: "demo_db", question: "How many concerts did each singer give? Show the singer name.", query: "SELECT T1.name, count(*) FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id GROUP BY T1.singer_id" },
];

/// Writes a Spider-layout directory (`tables.json`, `dev.json`,
/// `database/<id>/<id>.sqlite`) holding [`SPIDER_MINI`].
pub fn write_spider_mini(dir: &Path) -> Result<PathBuf> {
    let db_root = dir.join("database");
    let mut metadata = Vec::new();
    for id in ["concert_singer", "demo_db"] {
        let sub = db_root.join(id);
        fs::create_dir_all(&sub)?;
        let db = match id {
            "concert_singer" => concert_singer_db(&sub)?,
            _ => demo_db(&sub)?,
        };
        let target = sub.join(format!("{id}.sqlite"));
        if db.path() != target {
            fs::rename(db.path(), &target)?;
        }
        let card = crate::mining::introspect_schema(&Database::with_id(id, &target)?)?;
        let mut table_names = Vec::new();
        let mut column_names = vec![json!([-1, "*"])];
        for (ti, t) in card.tables.iter().enumerate() {
            table_names.push(t.name.clone());
            for c in &t.columns {
                column_names.push(json!([ti, c.name]));
            }
        }
        metadata.push(json!({
            "db_id": id,
            "table_names_original": table_names,
            "table_names": table_names,
            "column_names_original": column_names,
            "column_names": column_names,
        }));
    }
    fs::write(dir.join("tables.json"), serde_json::to_string_pretty(&metadata)?)?;
    let items: Vec<_> = SPIDER_MINI
        .iter()
        .map(|i| json!({"db_id": i.db_id, "question": i.question, "query": i.query}))
        .collect();
    fs::write(dir.join("dev.json"), serde_json::to_string_pretty(&items)?)?;
    Ok(dir.to_path_buf())
}
