use std::collections::{BTreeMap, HashMap};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{commit_artefact, payload_of, ActionDraft};
use crate::error::{Error, Result};
use crate::ingest::ReleasePayload;
use crate::metamodel::{
    canonical_encode, Action, Catalog, Decimal, Id, Record, Seniority, Tag, TagOrigin,
};
use crate::store::Store;

/// Columns consulted, in order, when no text column is named.
pub const TEXT_COLUMNS: [&str; 4] = ["text", "caption", "body", "description"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagRule {
    /// Keyword or regular expression, matched case-insensitively anywhere
    /// in the text.
    pub pattern: String,
    pub label: String,
    pub confidence: Decimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagRuleSet {
    pub name: String,
    pub rules: Vec<TagRule>,
}

impl TagRuleSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: TagRuleSet = serde_json::from_str(text)?;
        set.compile()?;
        Ok(set)
    }

    pub fn compile(&self) -> Result<Vec<Regex>> {
        self.rules
            .iter()
            .map(|r| {
                if !(0.0..=1.0).contains(&r.confidence.get()) {
                    return Err(Error::InvalidArgument(format!(
                        "rule {}: confidence {} outside [0,1]",
                        r.pattern, r.confidence
                    )));
                }
                RegexBuilder::new(&r.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("rule {}: {e}", r.pattern)))
            })
            .collect()
    }
}

/// One tag to be applied to the item at `ordinal`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagEntry {
    pub ordinal: u64,
    pub label: String,
    pub author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Decimal>,
}

/// Tags computed over a release, addressed by item ordinal so the set is a
/// pure function of the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub origin: TagOrigin,
    pub entries: Vec<TagEntry>,
}

impl TagSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn label_counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.label.clone()).or_insert(0) += 1;
        }
        out
    }
}

/// `(ordinal, text)` for every item of a text-bearing payload.
pub fn texts(payload: &ReleasePayload, text_column: Option<&str>) -> Result<Vec<(u64, String)>> {
    match payload {
        ReleasePayload::Text(c) => Ok(c
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (i as u64, d.body.clone()))
            .collect()),
        ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => {
            let column = match text_column {
                Some(c) => t.column(c)?,
                None => TEXT_COLUMNS
                    .iter()
                    .find_map(|c| t.column(c).ok())
                    .ok_or_else(|| Error::NotTextBearing("table has no text column".into()))?,
            };
            Ok(t.rows
                .iter()
                .enumerate()
                .map(|(i, r)| (i as u64, r[column].clone()))
                .collect())
        }
        ReleasePayload::Signal(_) => Err(Error::NotTextBearing("signal payload".into())),
    }
}

/// External id of every item, by ordinal.
pub fn external_ids(payload: &ReleasePayload, id_column: Option<&str>) -> Result<Vec<Option<String>>> {
    Ok(match payload {
        ReleasePayload::Table(t) | ReleasePayload::Manifest(t) => {
            let c = t.column(id_column.unwrap_or("external_id"))?;
            t.rows.iter().map(|r| Some(r[c].clone())).collect()
        }
        ReleasePayload::Text(c) => c.documents.iter().map(|d| d.external_id.clone()).collect(),
        ReleasePayload::Signal(b) => b.traces.iter().map(|t| Some(t.label())).collect(),
    })
}

fn ordinal_lookup(ids: &[Option<String>]) -> HashMap<&str, u64> {
    let mut out = HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            out.entry(id.as_str()).or_insert(i as u64);
        }
    }
    out
}

/// One entry per (item, matching rule), in item then rule order.
pub fn match_rules(texts: &[(u64, String)], ruleset: &TagRuleSet) -> Result<TagSet> {
    let compiled = ruleset.compile()?;
    let mut entries = Vec::new();
    for (ordinal, text) in texts {
        for (rule, re) in ruleset.rules.iter().zip(&compiled) {
            if re.is_match(text) {
                entries.push(TagEntry {
                    ordinal: *ordinal,
                    label: rule.label.clone(),
                    author: ruleset.name.clone(),
                    confidence: Some(rule.confidence),
                });
            }
        }
    }
    Ok(TagSet {
        origin: TagOrigin::Algorithmic,
        entries,
    })
}

pub fn compute_rule_tags(payload: &ReleasePayload, ruleset: &TagRuleSet, text_column: Option<&str>) -> Result<TagSet> {
    match_rules(&texts(payload, text_column)?, ruleset)
}

fn csv_records(bytes: &[u8], expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::HeaderMalformed(format!("expected columns {expected:?}, found {found:?}")));
    }
    reader.records().map(|r| r.map_err(Error::from)).collect()
}

/// Imported classifier output, CSV `item_external_id,label,confidence`.
pub fn compute_ml_labels(payload: &ReleasePayload, csv_bytes: &[u8], id_column: Option<&str>, model: &str) -> Result<TagSet> {
    let ids = external_ids(payload, id_column)?;
    let lookup = ordinal_lookup(&ids);
    let mut entries = Vec::new();
    for r in csv_records(csv_bytes, &["item_external_id", "label", "confidence"])? {
        let ordinal = *lookup.get(&r[0]).ok_or_else(|| Error::UnknownTarget(r[0].to_string()))?;
        let confidence: f64 = r[2]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("confidence {:?} is not a number", &r[2])))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!("confidence {confidence} outside [0,1]")));
        }
        entries.push(TagEntry {
            ordinal,
            label: r[1].to_string(),
            author: model.to_string(),
            confidence: Some(Decimal(confidence)),
        });
    }
    Ok(TagSet {
        origin: TagOrigin::Algorithmic,
        entries,
    })
}

/// Manual tags in bulk, CSV `item_external_id,label,member_id`.
pub fn compute_user_tags(payload: &ReleasePayload, csv_bytes: &[u8], id_column: Option<&str>) -> Result<TagSet> {
    let ids = external_ids(payload, id_column)?;
    let lookup = ordinal_lookup(&ids);
    let mut entries = Vec::new();
    for r in csv_records(csv_bytes, &["item_external_id", "label", "member_id"])? {
        let ordinal = *lookup.get(&r[0]).ok_or_else(|| Error::UnknownTarget(r[0].to_string()))?;
        entries.push(TagEntry {
            ordinal,
            label: r[1].to_string(),
            author: r[2].to_string(),
            confidence: None,
        });
    }
    Ok(TagSet {
        origin: TagOrigin::User,
        entries,
    })
}

/// Appends one tag per entry against the items of `release_id`, the tag-set
/// artefact and the producing action.
pub fn commit_tag_set(store: &mut Store, release_id: &Id, set: &TagSet, mut draft: ActionDraft) -> Result<(Vec<Tag>, Action)> {
    let experiment = super::experiment(store, &draft.experiment_id)?;
    let mut tags = Vec::with_capacity(set.entries.len());
    for e in &set.entries {
        let target = store
            .index()
            .item_at(release_id, e.ordinal)
            .cloned()
            .ok_or_else(|| Error::UnknownTarget(format!("{release_id}#{}", e.ordinal)))?;
        if set.origin == TagOrigin::User && experiment.member(&Id::new(e.author.clone())).is_none() {
            return Err(Error::NotTeamMember {
                member: e.author.clone(),
                experiment: experiment.id.to_string(),
            });
        }
        tags.push(Tag {
            id: Id::generate("tag"),
            target,
            label: e.label.clone(),
            origin: set.origin,
            author: e.author.clone(),
            confidence: e.confidence,
            experiment_id: experiment.id.clone(),
            created_at: store.now(),
        });
    }
    let counts: serde_json::Map<String, Value> = set
        .label_counts()
        .into_iter()
        .map(|(k, v)| (k, json!(v)))
        .collect();
    draft.evaluate("tags", json!(tags.len()));
    draft.evaluate("by_label", Value::Object(counts));
    if set.origin == TagOrigin::User {
        draft = draft.manual();
    }
    let draft = draft.input(release_id);
    let extra: Vec<Record> = tags.iter().cloned().map(Record::from).collect();
    let (_, action) = commit_artefact(store, "tag-set", &set.to_bytes()?, BTreeMap::new(), draft, extra)?;
    Ok((tags, action))
}

pub fn apply_rule_tags(
    store: &mut Store,
    release_id: &Id,
    ruleset: &TagRuleSet,
    experiment_id: &Id,
    text_column: Option<&str>,
) -> Result<(Vec<Tag>, Action)> {
    let payload = payload_of(store, release_id)?;
    let set = compute_rule_tags(&payload, ruleset, text_column).map_err(|e| match e {
        Error::NotTextBearing(_) => Error::NotTextBearing(release_id.to_string()),
        other => other,
    })?;
    let draft = ActionDraft::new(store, experiment_id, "apply_rule_tags")?
        .param("ruleset", serde_json::to_value(ruleset)?);
    commit_tag_set(store, release_id, &set, draft)
}

pub fn import_ml_labels(
    store: &mut Store,
    release_id: &Id,
    csv_bytes: &[u8],
    model: &str,
    experiment_id: &Id,
    id_column: Option<&str>,
) -> Result<(Vec<Tag>, Action)> {
    let payload = payload_of(store, release_id)?;
    let set = compute_ml_labels(&payload, csv_bytes, id_column, model)?;
    let draft = ActionDraft::new(store, experiment_id, "import_ml_labels")?.param("model", model);
    commit_tag_set(store, release_id, &set, draft)
}

pub fn import_user_tags(
    store: &mut Store,
    release_id: &Id,
    csv_bytes: &[u8],
    experiment_id: &Id,
    id_column: Option<&str>,
) -> Result<(Vec<Tag>, Action)> {
    let payload = payload_of(store, release_id)?;
    let set = compute_user_tags(&payload, csv_bytes, id_column)?;
    let draft = ActionDraft::new(store, experiment_id, "import_user_tags")?;
    commit_tag_set(store, release_id, &set, draft)
}

/// A single manual tag. Publish-level targets take senior members only.
pub fn apply_user_tag(store: &mut Store, target: &Id, label: &str, member: &Id, experiment_id: &Id) -> Result<Tag> {
    let experiment = super::experiment(store, experiment_id)?;
    if !store.index().exists(target) {
        return Err(Error::UnknownTarget(target.to_string()));
    }
    let m = experiment.member(member).ok_or_else(|| Error::NotTeamMember {
        member: member.to_string(),
        experiment: experiment_id.to_string(),
    })?;
    if store.index().is_publish_level(target) && m.seniority != Seniority::Senior {
        return Err(Error::SeniorRequired(target.to_string()));
    }
    if label.trim().is_empty() {
        return Err(Error::InvalidArgument("label must be non-empty".into()));
    }
    let tag = Tag {
        id: Id::generate("tag"),
        target: target.clone(),
        label: label.to_string(),
        origin: TagOrigin::User,
        author: member.to_string(),
        confidence: None,
        experiment_id: experiment_id.clone(),
        created_at: store.now(),
    };
    store.append(tag.clone().into())?;
    Ok(tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{StagedTable, TextCorpus, TextDocument};

    fn rules(list: &[(&str, &str, f64)]) -> TagRuleSet {
        TagRuleSet {
            name: "species-rules".into(),
            rules: list
                .iter()
                .map(|(p, l, c)| TagRule { pattern: p.to_string(), label: l.to_string(), confidence: Decimal(*c) })
                .collect(),
        }
    }

    fn corpus(bodies: &[&str]) -> ReleasePayload {
        ReleasePayload::Text(TextCorpus {
            documents: bodies
                .iter()
                .enumerate()
                .map(|(i, b)| TextDocument { external_id: Some(format!("p{i}")), body: b.to_string() })
                .collect(),
        })
    }

    #[test]
    fn keyword_rule_fires() {
        let set = compute_rule_tags(
            &corpus(&["caravelaportuguesa avistada"]),
            &rules(&[("caravela", "physalia-sighting", 0.9)]),
            None,
        )
        .unwrap();
        assert_eq!(set.entries.len(), 1);
        assert_eq!(set.entries[0].confidence, Some(Decimal(0.9)));
        assert_eq!(set.entries[0].label, "physalia-sighting");
    }

    #[test]
    fn no_match_no_tags() {
        let set = compute_rule_tags(&corpus(&["beach day"]), &rules(&[("caravela", "x", 0.9)]), None).unwrap();
        assert!(set.entries.is_empty());
    }

    #[test]
    fn overlapping_rules_on_three_items() {
        // item 0 matches both, item 1 only "agua", item 2 neither: 3 tags
        let set = compute_rule_tags(
            &corpus(&["Caravela na agua", "agua viva", "sol"]),
            &rules(&[("caravela", "physalia", 0.9), ("agua", "marine", 0.7)]),
            None,
        )
        .unwrap();
        let pairs: Vec<(u64, &str)> = set.entries.iter().map(|e| (e.ordinal, e.label.as_str())).collect();
        assert_eq!(pairs, vec![(0, "physalia"), (0, "marine"), (1, "marine")]);
    }

    #[test]
    fn signal_is_not_text_bearing() {
        let err = compute_rule_tags(&ReleasePayload::Signal(Default::default()), &rules(&[]), None).unwrap_err();
        assert!(matches!(err, Error::NotTextBearing(_)));
        let table = ReleasePayload::Table(StagedTable::new(vec!["n".into()], vec![]));
        assert!(matches!(compute_rule_tags(&table, &rules(&[]), None), Err(Error::NotTextBearing(_))));
    }

    #[test]
    fn bad_rules_rejected() {
        assert!(rules(&[("(", "x", 0.5)]).compile().is_err());
        assert!(rules(&[("a", "x", 1.5)]).compile().is_err());
    }

    #[test]
    fn ml_labels_by_external_id() {
        let csv = b"item_external_id,label,confidence\np1,physalia,0.55\np0,physalia,0.95\n";
        let set = compute_ml_labels(&corpus(&["a", "b"]), csv, None, "cnn-v1").unwrap();
        assert_eq!(set.entries[0].ordinal, 1);
        assert_eq!(set.entries[1].confidence, Some(Decimal(0.95)));
        let unknown = b"item_external_id,label,confidence\nzz,x,0.5\n";
        assert!(matches!(compute_ml_labels(&corpus(&["a"]), unknown, None, "m"), Err(Error::UnknownTarget(_))));
        let bad_header = b"id,label,confidence\n";
        assert!(matches!(compute_ml_labels(&corpus(&["a"]), bad_header, None, "m"), Err(Error::HeaderMalformed(_))));
    }

    proptest::proptest! {
        #[test]
        fn rule_tagging_is_deterministic(bodies in proptest::collection::vec("[a-c ]{0,8}", 0..12)) {
            let refs: Vec<&str> = bodies.iter().map(String::as_str).collect();
            let r = rules(&[("a", "has-a", 0.5), ("b+", "has-b", 0.75), ("^c", "starts-c", 1.0)]);
            let one = compute_rule_tags(&corpus(&refs), &r, None).unwrap();
            let two = compute_rule_tags(&corpus(&refs), &r, None).unwrap();
            proptest::prop_assert_eq!(one.to_bytes().unwrap(), two.to_bytes().unwrap());
        }
    }
}
