use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::review::{review, ReviewRequest};
use crate::error::{Error, Result};
use crate::metamodel::{
    Experiment, ExperimentSettings, ExperimentStatus, Id, Member, Seniority, Timestamp, Verdict,
};
use crate::store::Store;

pub const JUNIOR_ONLY_WARNING: &str = "team has no senior member: publishing will be blocked";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    pub name: String,
    #[serde(default)]
    pub role: String,
    pub seniority: Seniority,
    #[serde(default)]
    pub responsibilities: Vec<String>,
}

impl MemberSpec {
    pub fn new(name: &str, role: &str, seniority: Seniority) -> Self {
        MemberSpec {
            id: None,
            name: name.to_string(),
            role: role.to_string(),
            seniority,
            responsibilities: Vec::new(),
        }
    }

    fn into_member(self) -> Member {
        Member {
            id: self.id.unwrap_or_else(|| Id::generate("member")),
            name: self.name,
            role: self.role,
            seniority: self.seniority,
            responsibilities: self.responsibilities,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Id>,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<Timestamp>,
    #[serde(default)]
    pub research_question: String,
    #[serde(default)]
    pub team: Vec<MemberSpec>,
    #[serde(default)]
    pub settings: ExperimentSettings,
}

/// Appends a draft experiment at cycle 1. Warnings do not block creation.
pub fn create_experiment(store: &mut Store, spec: ExperimentSpec) -> Result<(Experiment, Vec<String>)> {
    if spec.research_question.trim().is_empty() {
        return Err(Error::MissingQuestion);
    }
    if spec.team.is_empty() {
        return Err(Error::EmptyTeam);
    }
    let date = match spec.date {
        Some(d) => d,
        None => store.now(),
    };
    let experiment = Experiment {
        id: spec.id.unwrap_or_else(|| Id::generate("experiment")),
        name: spec.name,
        research_question: spec.research_question,
        date,
        team: spec.team.into_iter().map(MemberSpec::into_member).collect(),
        settings: spec.settings,
        cycle: 1,
        status: ExperimentStatus::Draft,
    };
    let mut warnings = Vec::new();
    if !experiment.has_senior() {
        warnings.push(JUNIOR_ONLY_WARNING.to_string());
    }
    store.append(experiment.clone().into())?;
    Ok((experiment, warnings))
}

/// Records a senior's acceptance of the experiment and marks it published.
pub fn publish_experiment(store: &mut Store, experiment_id: &Id, member: &Id, comment: &str) -> Result<Experiment> {
    review(
        store,
        ReviewRequest {
            target: experiment_id.clone(),
            member: member.clone(),
            verdict: Verdict::Accepted,
            comment: comment.to_string(),
            experiment: Some(experiment_id.clone()),
            expected_history: None,
        },
    )?;
    let mut experiment = super::experiment(store, experiment_id)?;
    experiment.status = ExperimentStatus::Published;
    store.append(experiment.clone().into())?;
    Ok(experiment)
}

/// Performance constraints are advisory. A key `max_<m>` bounds metric `m`
/// from above, any other key names a metric with a lower bound.
pub fn constraint_warnings(settings: &ExperimentSettings, metrics: &BTreeMap<String, f64>) -> Vec<String> {
    let mut out = Vec::new();
    for (key, bound) in &settings.performance_constraints {
        let (metric, upper) = match key.strip_prefix("max_") {
            Some(m) => (m, true),
            None => (key.strip_prefix("min_").unwrap_or(key), false),
        };
        let Some(value) = metrics.get(metric) else { continue };
        let violated = if upper { *value > bound.get() } else { *value < bound.get() };
        if violated {
            let rel = if upper { "above" } else { "below" };
            out.push(format!("{metric} = {value} is {rel} the constraint {key} = {}", bound.get()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::{Catalog, Decimal};

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::init(dir.path().join("s")).unwrap();
        (dir, store)
    }

    fn spec(team: Vec<MemberSpec>) -> ExperimentSpec {
        ExperimentSpec {
            name: "caravelas".into(),
            research_question: "track Physalia sightings".into(),
            team,
            ..Default::default()
        }
    }

    #[test]
    fn two_team_experiment_is_draft() {
        let (_d, mut store) = store();
        let (e, warnings) = create_experiment(
            &mut store,
            spec(vec![
                MemberSpec::new("Ana", "biologist", Seniority::Senior),
                MemberSpec::new("Bruno", "data scientist", Seniority::Junior),
            ]),
        )
        .unwrap();
        assert_eq!(e.status, ExperimentStatus::Draft);
        assert_eq!(e.cycle, 1);
        assert!(warnings.is_empty());
        assert!(store.index().experiment(&e.id).is_some());
        assert!(store.index().member(&e.team[0].id).is_some());
    }

    #[test]
    fn missing_question_and_team() {
        let (_d, mut store) = store();
        let mut s = spec(vec![MemberSpec::new("A", "r", Seniority::Senior)]);
        s.research_question = " ".into();
        assert!(matches!(create_experiment(&mut store, s), Err(Error::MissingQuestion)));
        assert!(matches!(create_experiment(&mut store, spec(vec![])), Err(Error::EmptyTeam)));
    }

    #[test]
    fn juniors_only_warns() {
        let (_d, mut store) = store();
        let (_, warnings) = create_experiment(&mut store, spec(vec![MemberSpec::new("J", "analyst", Seniority::Junior)])).unwrap();
        assert_eq!(warnings, vec![JUNIOR_ONLY_WARNING.to_string()]);
    }

    #[test]
    fn publish_needs_senior() {
        let (_d, mut store) = store();
        let (e, _) = create_experiment(
            &mut store,
            spec(vec![
                MemberSpec::new("S", "lead", Seniority::Senior),
                MemberSpec::new("J", "analyst", Seniority::Junior),
            ]),
        )
        .unwrap();
        let junior = e.team[1].id.clone();
        assert!(matches!(publish_experiment(&mut store, &e.id, &junior, ""), Err(Error::SeniorRequired(_))));
        let published = publish_experiment(&mut store, &e.id, &e.team[0].id, "ok").unwrap();
        assert_eq!(published.status, ExperimentStatus::Published);
    }

    #[test]
    fn constraints_only_warn() {
        let mut settings = ExperimentSettings::default();
        settings.performance_constraints.insert("min_accuracy".into(), Decimal(0.8));
        settings.performance_constraints.insert("max_rms".into(), Decimal(2.0));
        let metrics = BTreeMap::from([("accuracy".to_string(), 0.7), ("rms".to_string(), 1.0)]);
        let w = constraint_warnings(&settings, &metrics);
        assert_eq!(w.len(), 1);
        assert!(w[0].starts_with("accuracy"));
    }
}
