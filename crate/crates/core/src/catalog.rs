//! Event ingestion: parsing raw clickstream/order records, per user-brand
//! priority reduction, event importance weights and co-purchase extraction.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::units::UkSize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Men,
    Women,
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "men" => Ok(Gender::Men),
            "women" => Ok(Gender::Women),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Men => "Men",
            Gender::Women => "Women",
        })
    }
}

/// A gender / article-type slice. Models are built per category.
///
/// Article types compare case-insensitively after trimming.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Category {
    pub gender: Gender,
    pub article_type: String,
}

impl Category {
    pub fn new(gender: Gender, article_type: &str) -> Result<Self, String> {
        let article_type = article_type.trim();
        if article_type.is_empty() {
            return Err("article_type is empty".into());
        }
        Ok(Self {
            gender,
            article_type: article_type.to_string(),
        })
    }

    fn key(&self) -> (Gender, String) {
        (self.gender, self.article_type.trim().to_lowercase())
    }

    /// File-name friendly slug, e.g. `men_sports_shoes`.
    pub fn slug(&self) -> String {
        format!(
            "{}_{}",
            self.gender.to_string().to_lowercase(),
            self.article_type
                .trim()
                .to_lowercase()
                .replace(char::is_whitespace, "_")
        )
    }
}

impl PartialEq for Category {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Category {}

impl Hash for Category {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.gender, self.article_type)
    }
}

/// User-brand interaction kind, ordered by priority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Click,
    Cart,
    Wishlist,
    Purchase,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::Click,
        EventKind::Cart,
        EventKind::Wishlist,
        EventKind::Purchase,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Click => "click",
            EventKind::Cart => "cart",
            EventKind::Wishlist => "wishlist",
            EventKind::Purchase => "purchase",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "click" => Ok(EventKind::Click),
            "cart" => Ok(EventKind::Cart),
            "wishlist" => Ok(EventKind::Wishlist),
            "purchase" => Ok(EventKind::Purchase),
            other => Err(format!("unknown kind {other:?}")),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionEvent {
    pub user_id: String,
    pub brand_id: String,
    pub category: Category,
    pub kind: EventKind,
    pub timestamp: u64,
    /// Present iff `kind` is `Purchase`.
    pub size: Option<UkSize>,
    pub order_id: Option<String>,
}

impl InteractionEvent {
    pub fn is_purchase_in(&self, category: &Category) -> bool {
        self.kind == EventKind::Purchase && &self.category == category
    }

    pub fn to_record(&self) -> EventRecord {
        EventRecord {
            user: self.user_id.clone(),
            brand: self.brand_id.clone(),
            gender: self.category.gender.to_string(),
            article_type: self.category.article_type.clone(),
            kind: self.kind.as_str().to_string(),
            ts: self.timestamp as i64,
            size: self.size.map(UkSize::value),
            order: self.order_id.clone(),
        }
    }
}

/// On-disk shape of one event line (JSONL object or CSV row).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub user: String,
    pub brand: String,
    pub gender: String,
    pub article_type: String,
    pub kind: String,
    pub ts: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
}

impl EventRecord {
    pub fn validate(self) -> Result<InteractionEvent, String> {
        if self.user.trim().is_empty() {
            return Err("empty user".into());
        }
        if self.brand.trim().is_empty() {
            return Err("empty brand".into());
        }
        let gender: Gender = self.gender.parse()?;
        let category = Category::new(gender, &self.article_type)?;
        let kind: EventKind = self.kind.parse()?;
        if self.ts < 0 {
            return Err("negative timestamp".into());
        }
        let size = match self.size {
            Some(v) => Some(UkSize::new(v).map_err(|e| format!("invalid size: {e}"))?),
            None => None,
        };
        if kind == EventKind::Purchase && size.is_none() {
            return Err("purchase missing size".into());
        }
        Ok(InteractionEvent {
            user_id: self.user,
            brand_id: self.brand,
            category,
            kind,
            timestamp: self.ts as u64,
            size,
            order_id: self.order.filter(|o| !o.is_empty()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Jsonl,
    Csv,
}

impl EventFormat {
    /// `.csv` means CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Jsonl,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rejects: Vec<Reject>,
}

impl ParseReport {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rejects {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parse line-delimited event records. Malformed lines are skipped and
/// listed in the report; only I/O failures are fatal.
pub fn parse_events<R: Read>(
    source: R,
    format: EventFormat,
) -> Result<(Vec<InteractionEvent>, ParseReport), IngestError> {
    match format {
        EventFormat::Jsonl => parse_jsonl(std::io::BufReader::new(source)),
        EventFormat::Csv => parse_csv(source),
    }
}

fn parse_jsonl<R: BufRead>(
    mut source: R,
) -> Result<(Vec<InteractionEvent>, ParseReport), IngestError> {
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    let mut buf = Vec::new();
    let mut line_no = 0u64;
    loop {
        buf.clear();
        if source.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = match std::str::from_utf8(&buf) {
            Ok(l) => l.trim(),
            Err(_) => {
                report.rejects.push(Reject {
                    line_no,
                    reason: "invalid utf-8".into(),
                });
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<EventRecord>(line)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(EventRecord::validate);
        match outcome {
            Ok(ev) => events.push(ev),
            Err(reason) => report.rejects.push(Reject { line_no, reason }),
        }
    }
    Ok((events, report))
}

fn parse_csv<R: Read>(source: R) -> Result<(Vec<InteractionEvent>, ParseReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = match reader.byte_headers() {
        Ok(h) => h.clone(),
        Err(e) => match e.into_kind() {
            csv::ErrorKind::Io(io) => return Err(IngestError::Io(io)),
            other => return Err(IngestError::CsvHeader(format!("{other:?}"))),
        },
    };
    let mut events = Vec::new();
    let mut report = ParseReport::default();
    let mut record = csv::ByteRecord::new();
    loop {
        let line_no = reader.position().line();
        match reader.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line_no = e.position().map_or(line_no, |p| p.line());
                match e.into_kind() {
                    csv::ErrorKind::Io(io) => return Err(IngestError::Io(io)),
                    other => {
                        report.rejects.push(Reject {
                            line_no,
                            reason: format!("malformed record: {other:?}"),
                        });
                        continue;
                    }
                }
            }
        }
        let line_no = record.position().map_or(line_no, |p| p.line());
        let outcome = record
            .deserialize::<EventRecord>(Some(&headers))
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(EventRecord::validate);
        match outcome {
            Ok(ev) => events.push(ev),
            Err(reason) => report.rejects.push(Reject { line_no, reason }),
        }
    }
    Ok((events, report))
}

pub fn write_events_jsonl<W: Write>(
    mut out: W,
    events: &[InteractionEvent],
) -> std::io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, &ev.to_record())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Highest-priority event kind per (user, brand) within a category.
pub fn reduce_highest_priority(
    events: &[InteractionEvent],
    category: &Category,
) -> BTreeMap<(String, String), EventKind> {
    let mut out: BTreeMap<(String, String), EventKind> = BTreeMap::new();
    for ev in events.iter().filter(|e| &e.category == category) {
        out.entry((ev.user_id.clone(), ev.brand_id.clone()))
            .and_modify(|k| *k = (*k).max(ev.kind))
            .or_insert(ev.kind);
    }
    out
}

/// Importance weight per event kind; clicks are the unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventImportance {
    weights: [f64; 4],
}

impl EventImportance {
    pub fn new(weights: [f64; 4]) -> Result<Self, String> {
        if weights[EventKind::Click.index()] != 1.0 {
            return Err("click weight must be exactly 1".into());
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err("weights must be positive and finite".into());
        }
        Ok(Self { weights })
    }

    pub fn weight(&self, kind: EventKind) -> f64 {
        self.weights[kind.index()]
    }

    pub fn weights(&self) -> [f64; 4] {
        self.weights
    }
}

/// Ratio of total clicks to total events of each kind over the supplied
/// window. Every kind must occur at least once.
pub fn compute_importance(events: &[InteractionEvent]) -> Result<EventImportance, IngestError> {
    let mut counts = [0u64; 4];
    for ev in events {
        counts[ev.kind.index()] += 1;
    }
    if let Some(missing) = EventKind::ALL.iter().find(|k| counts[k.index()] == 0) {
        return Err(IngestError::InsufficientEvents(*missing));
    }
    let clicks = counts[EventKind::Click.index()] as f64;
    let mut weights = [1.0; 4];
    for kind in &EventKind::ALL[1..] {
        weights[kind.index()] = clicks / counts[kind.index()] as f64;
    }
    Ok(EventImportance { weights })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoPurchasePair {
    pub user_id: String,
    pub category: Category,
    pub brand_u: String,
    pub size_u: UkSize,
    pub brand_v: String,
    pub size_v: UkSize,
}

/// Purchases of one user in a category, in a canonical chronological order
/// (timestamp, order id, brand, size) so results do not depend on input order.
pub fn purchases_by_user<'a>(
    events: &'a [InteractionEvent],
    category: &Category,
) -> BTreeMap<&'a str, Vec<&'a InteractionEvent>> {
    let mut by_user: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
    for ev in events.iter().filter(|e| e.is_purchase_in(category)) {
        by_user.entry(ev.user_id.as_str()).or_default().push(ev);
    }
    for list in by_user.values_mut() {
        list.sort_by(|a, b| {
            (a.timestamp, &a.order_id, &a.brand_id, a.size).cmp(&(
                b.timestamp,
                &b.order_id,
                &b.brand_id,
                b.size,
            ))
        });
    }
    by_user
}

/// Every unordered pair of a user's cross-brand purchases in the category,
/// over the full history. Each pair is emitted once, earlier purchase first.
pub fn extract_copurchases(
    events: &[InteractionEvent],
    category: &Category,
) -> Vec<CoPurchasePair> {
    let mut pairs = Vec::new();
    for (user, purchases) in purchases_by_user(events, category) {
        for (i, a) in purchases.iter().enumerate() {
            for b in &purchases[i + 1..] {
                if a.brand_id == b.brand_id {
                    continue;
                }
                // is_purchase_in guarantees sizes are present
                let (Some(size_u), Some(size_v)) = (a.size, b.size) else {
                    continue;
                };
                pairs.push(CoPurchasePair {
                    user_id: user.to_string(),
                    category: category.clone(),
                    brand_u: a.brand_id.clone(),
                    size_u,
                    brand_v: b.brand_id.clone(),
                    size_v,
                });
            }
        }
    }
    pairs
}
