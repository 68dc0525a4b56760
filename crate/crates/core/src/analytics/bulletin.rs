//! Event location from phase picks and validated bulletins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::seismic::{locate_epicenter, EpicenterSolution, PhasePick};
use crate::curate::transform::{rewrap, table_descriptors};
use crate::curate::{commit_artefact, commit_derived_release, ActionDraft};
use crate::error::{Error, Result};
use crate::ingest::enrich::parse_instant;
use crate::ingest::{read_release, ReleasePayload, StagedTable};
use crate::metamodel::{
    canonical_encode, format_decimal, Action, Artefact, Catalog, Decimal, Id, Release, Seniority, Timestamp, Verdict,
};
use crate::store::Store;

pub const PICK_COLUMNS: [&str; 9] = [
    "event_id", "station_id", "x_km", "y_km", "p_arrival", "s_arrival", "picker", "magnitude", "year",
];
pub const EVENT_COLUMNS: [&str; 10] = [
    "external_id",
    "event_id",
    "stations",
    "year",
    "magnitude",
    "x_km",
    "y_km",
    "residual_rms_km",
    "station_count",
    "degenerate",
];
pub const LOCATE_OPERATION: &str = "locate_events";

fn number(table: &StagedTable, row: usize, column: &str) -> Result<f64> {
    let cell = table.cell(row, column)?;
    cell.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("row {}: {column} is not a number: {cell:?}", row + 1)))
}

fn instant(table: &StagedTable, row: usize, column: &str) -> Result<Timestamp> {
    let cell = table.cell(row, column)?;
    parse_instant(cell).ok_or_else(|| Error::InvalidArgument(format!("row {}: {column} is not a timestamp: {cell:?}", row + 1)))
}

/// Picks grouped by event, in first-appearance order.
pub fn picks_by_event(table: &StagedTable) -> Result<Vec<(String, Vec<(PhasePick, usize)>)>> {
    for c in PICK_COLUMNS {
        table.column(c)?;
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(PhasePick, usize)>> = BTreeMap::new();
    for r in 0..table.rows.len() {
        let event = table.cell(r, "event_id")?.trim().to_string();
        let pick = PhasePick {
            station_id: table.cell(r, "station_id")?.trim().to_string(),
            x_km: number(table, r, "x_km")?,
            y_km: number(table, r, "y_km")?,
            p_arrival: instant(table, r, "p_arrival")?,
            s_arrival: instant(table, r, "s_arrival")?,
            picker: table.cell(r, "picker")?.trim().to_string(),
        };
        if pick.s_arrival <= pick.p_arrival {
            return Err(Error::InvalidArgument(format!("row {}: s_arrival must follow p_arrival", r + 1)));
        }
        if !groups.contains_key(&event) {
            order.push(event.clone());
        }
        groups.entry(event).or_default().push((pick, r));
    }
    Ok(order
        .into_iter()
        .map(|e| {
            let g = groups.remove(&e).unwrap_or_default();
            (e, g)
        })
        .collect())
}

fn km(x: f64) -> String {
    format!("{x:.6}")
}

/// Locates every event of a picks table; one output row per event.
pub fn compute_events(picks: &StagedTable, vp: f64, vs: f64) -> Result<(StagedTable, Vec<EpicenterSolution<f64>>)> {
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for (event, group) in picks_by_event(picks)? {
        let obs: Vec<_> = group.iter().map(|(p, _)| p.observation::<f64>()).collect();
        let s = locate_epicenter(&obs, vp, vs)?;
        let first = group[0].1;
        let stations: Vec<&str> = group.iter().map(|(p, _)| p.station_id.as_str()).collect();
        rows.push(vec![
            event.clone(),
            event,
            stations.join(";"),
            picks.cell(first, "year")?.trim().to_string(),
            picks.cell(first, "magnitude")?.trim().to_string(),
            km(s.x_km),
            km(s.y_km),
            km(s.residual_rms_km),
            s.station_count.to_string(),
            s.degenerate.to_string(),
        ]);
        solutions.push(s);
    }
    let header = EVENT_COLUMNS.iter().map(|c| c.to_string()).collect();
    Ok((StagedTable::new(header, rows), solutions))
}

/// Derived release of located events, one item per event.
pub fn locate_events(store: &mut Store, picks_release: &Id, experiment_id: &Id, vp: f64, vs: f64) -> Result<(Release, Action)> {
    let source = crate::curate::release(store, picks_release)?;
    let payload = read_release(store, picks_release)?;
    let table = payload
        .as_table()
        .ok_or_else(|| Error::InvalidArgument(format!("release {picks_release} is not tabular")))?;
    let (events, solutions) = compute_events(table, vp, vs)?;
    let mut draft = ActionDraft::new(store, experiment_id, LOCATE_OPERATION)?
        .param("vp_km_s", format_decimal(vp))
        .param("vs_km_s", format_decimal(vs))
        .input(picks_release);
    draft.evaluate("events", json!(solutions.len()));
    draft.evaluate("degenerate", json!(solutions.iter().filter(|s| s.degenerate).count()));
    let descriptors = table_descriptors(&events);
    commit_derived_release(store, &source, &rewrap(events, false), Some(descriptors), draft)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epicenter {
    pub x_km: Decimal,
    pub y_km: Decimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulletinEvent {
    pub event_id: String,
    pub stations: Vec<String>,
    pub year: i64,
    pub magnitude: Decimal,
    pub epicenter: Epicenter,
    pub residual_rms_km: Decimal,
    pub validated_by: Id,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bulletin {
    pub experiment_id: Id,
    /// Time of the latest validation that admitted an event; the events
    /// release creation time when none did.
    pub generated_at: Timestamp,
    pub events: Vec<BulletinEvent>,
}

impl Bulletin {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        canonical_encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Newest events release the experiment located.
pub fn latest_events_release(store: &Store, experiment_id: &Id) -> Option<Release> {
    let index = store.index();
    index
        .actions()
        .filter(|a| &a.experiment_id == experiment_id && a.operation == LOCATE_OPERATION)
        .flat_map(|a| a.outputs.iter())
        .filter_map(|id| index.release(id))
        .max_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)))
        .cloned()
}

/// Events whose latest senior verdict is an acceptance. Junior verdicts
/// never admit or exclude an event.
pub fn build_bulletin(store: &Store, experiment_id: &Id) -> Result<Bulletin> {
    let index = store.index();
    let experiment = index
        .experiment(experiment_id)
        .ok_or_else(|| Error::not_found("experiment", experiment_id.as_str()))?;
    let Some(events) = latest_events_release(store, experiment_id) else {
        return Ok(Bulletin {
            experiment_id: experiment_id.clone(),
            generated_at: experiment.date,
            events: vec![],
        });
    };
    let payload = read_release(store, &events.id)?;
    let ReleasePayload::Table(table) = payload else {
        return Err(Error::InvalidArgument(format!("events release {} is not tabular", events.id)));
    };
    let mut generated_at = events.created_at;
    let mut admitted = false;
    let mut out = Vec::new();
    for item in index.items_of(&events.id) {
        let senior = index
            .validations_of(&item.id)
            .into_iter()
            .filter(|v| &v.experiment_id == experiment_id)
            .filter(|v| experiment.member(&v.validator).is_some_and(|m| m.seniority == Seniority::Senior))
            .max_by_key(|v| v.created_at);
        let Some(v) = senior.filter(|v| v.verdict == Verdict::Accepted) else {
            continue;
        };
        if !admitted || v.created_at > generated_at {
            generated_at = v.created_at;
            admitted = true;
        }
        let r = item.ordinal as usize;
        let year = table.cell(r, "year")?;
        out.push(BulletinEvent {
            event_id: table.cell(r, "event_id")?.to_string(),
            stations: table.cell(r, "stations")?.split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            year: year.trim().parse().map_err(|_| Error::InvalidArgument(format!("year {year:?}")))?,
            magnitude: Decimal(number(&table, r, "magnitude")?),
            epicenter: Epicenter {
                x_km: Decimal(number(&table, r, "x_km")?),
                y_km: Decimal(number(&table, r, "y_km")?),
            },
            residual_rms_km: Decimal(number(&table, r, "residual_rms_km")?),
            validated_by: v.validator.clone(),
        });
    }
    Ok(Bulletin {
        experiment_id: experiment_id.clone(),
        generated_at,
        events: out,
    })
}

/// Stores the bulletin as a `bulletin` artefact.
pub fn compile_bulletin(store: &mut Store, experiment_id: &Id) -> Result<(Artefact, Bulletin)> {
    let bulletin = build_bulletin(store, experiment_id)?;
    let mut draft = ActionDraft::new(store, experiment_id, "compile_bulletin")?;
    if let Some(r) = latest_events_release(store, experiment_id) {
        draft = draft.input(&r.id);
    }
    draft.evaluate("events", json!(bulletin.events.len()));
    let metrics = BTreeMap::from([("events".to_string(), Decimal(bulletin.events.len() as f64))]);
    let (artefact, _) = commit_artefact(store, "bulletin", &bulletin.to_bytes()?, metrics, draft, Vec::new())?;
    Ok((artefact, bulletin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::seismic::sp_distance;

    fn picks() -> StagedTable {
        let k: f64 = sp_distance(1.0, 6.0, 3.5);
        let stations = [("A", 0.0, 0.0), ("B", 100.0, 0.0), ("C", 0.0, 100.0)];
        let mut rows = Vec::new();
        for (event, ex, ey) in [("E1", 30.0f64, 40.0f64), ("E2", 60.0, 20.0)] {
            for (name, sx, sy) in stations {
                let dt = ((ex - sx) * (ex - sx) + (ey - sy) * (ey - sy)).sqrt() / k;
                let p = chrono::DateTime::parse_from_rfc3339("2021-03-01T00:00:00Z").unwrap().to_utc();
                let s = p + chrono::Duration::microseconds((dt * 1e6).round() as i64);
                rows.push(
                    [event, name, &sx.to_string(), &sy.to_string(), &p.to_rfc3339(), &s.to_rfc3339(), "m1", "2.5", "2021"]
                        .map(String::from)
                        .to_vec(),
                );
            }
        }
        StagedTable::new(PICK_COLUMNS.map(String::from).to_vec(), rows)
    }

    #[test]
    fn events_from_picks() {
        let (t, sols) = compute_events(&picks(), 6.0, 3.5).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.cell(0, "stations").unwrap(), "A;B;C");
        assert!((sols[0].x_km - 30.0).abs() < 1e-3 && (sols[0].y_km - 40.0).abs() < 1e-3);
        assert!((sols[1].x_km - 60.0).abs() < 1e-3);
    }

    #[test]
    fn bad_picks() {
        let mut t = picks();
        t.rows.truncate(2);
        assert!(matches!(compute_events(&t, 6.0, 3.5), Err(Error::Underdetermined(2))));
        let mut t = picks();
        t.rows[0].swap(4, 5);
        assert!(compute_events(&t, 6.0, 3.5).is_err());
    }
}
