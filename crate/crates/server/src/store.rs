//! Site store: an append-only JSON-lines event log replayed into memory, with
//! GeoJSON snapshots rewritten after every write and curator decisions
//! exported as label records.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use wastemap_core::dataengine::{LabelClass, LabelRecord};
use wastemap_core::detect::{CandidateSite, ModeName, SiteStatus};
use wastemap_core::geo::YearMonth;
use wastemap_core::monitor::WaterwayDistance;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const SITES_SNAPSHOT: &str = "sites.geojson";
pub const CONTOURS_DIR: &str = "contours";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("site {0} not found")]
    NotFound(String),
    #[error("site {site_id} was already reviewed as {existing}")]
    Conflict { site_id: String, existing: Decision },
    #[error("malformed bbox {0:?}: expected min_lon,min_lat,max_lon,max_lat")]
    BadBbox(String),
    #[error("event log {path}, line {line}: {source}")]
    CorruptLog {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Confirm,
    Reject,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Confirm => "confirm",
            Decision::Reject => "reject",
        })
    }
}

/// What a curator submits for one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub decision: Decision,
    #[serde(default)]
    pub note: String,
    /// Hand-drawn boundary as a `[lon, lat]` ring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    #[serde(flatten)]
    pub request: ReviewRequest,
    pub at: DateTime<Utc>,
}

/// Monthly footprint area of a site; the contours themselves are served
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintSummary {
    pub month: YearMonth,
    pub area_ha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    #[serde(flatten)]
    pub site: CandidateSite,
    #[serde(default)]
    pub reviews: Vec<ReviewEntry>,
    #[serde(default)]
    pub footprints: Vec<FootprintSummary>,
    #[serde(default)]
    pub waterway: Option<WaterwayDistance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// A detection run produced this candidate. Re-detections of a known id
    /// leave the stored site untouched.
    Detected { site: CandidateSite, at: DateTime<Utc> },
    /// Monitoring output for a site, replacing any earlier one.
    Monitored {
        site_id: String,
        footprints: Vec<FootprintSummary>,
        contours: geojson::FeatureCollection,
        waterway: Option<WaterwayDistance>,
        at: DateTime<Utc>,
    },
    Reviewed {
        site_id: String,
        review: ReviewEntry,
    },
}

/// Sites plus their monthly contours, as materialized from the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    pub sites: BTreeMap<String, SiteRecord>,
    pub contours: BTreeMap<String, geojson::FeatureCollection>,
}

impl StoreState {
    /// Applies one event. Events that do not fit the current state (a review
    /// of an unknown or already reviewed site) are ignored, which cannot
    /// happen for logs written through [`Store`].
    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::Detected { site, .. } => {
                self.sites.entry(site.id.clone()).or_insert_with(|| SiteRecord {
                    site: CandidateSite {
                        status: SiteStatus::Candidate,
                        ..site.clone()
                    },
                    reviews: Vec::new(),
                    footprints: Vec::new(),
                    waterway: None,
                });
            }
            Event::Monitored {
                site_id,
                footprints,
                contours,
                waterway,
                ..
            } => {
                if let Some(rec) = self.sites.get_mut(site_id) {
                    rec.footprints = footprints.clone();
                    rec.waterway = waterway.clone();
                    self.contours.insert(site_id.clone(), contours.clone());
                }
            }
            Event::Reviewed { site_id, review } => {
                if let Some(rec) = self.sites.get_mut(site_id) {
                    if rec.site.status == SiteStatus::Candidate {
                        rec.site.status = match review.request.decision {
                            Decision::Confirm => SiteStatus::Confirmed,
                            Decision::Reject => SiteStatus::Rejected,
                        };
                        rec.reviews.push(review.clone());
                    }
                }
            }
        }
    }
}

/// Conjunctive filter for [`Store::list_sites`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteFilter {
    pub status: Option<SiteStatus>,
    pub mode: Option<ModeName>,
    /// `min_lon,min_lat,max_lon,max_lat`
    pub bbox: Option<String>,
}

pub fn parse_bbox(text: &str) -> Result<[f64; 4]> {
    let bad = || StoreError::BadBbox(text.to_string());
    let parts = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    let b: [f64; 4] = parts.try_into().map_err(|_| bad())?;
    if b.iter().any(|v| !v.is_finite()) || b[0] > b[2] || b[1] > b[3] {
        return Err(bad());
    }
    Ok(b)
}

/// The label a decision produces, located at the site.
pub fn label_for(site: &CandidateSite, request: &ReviewRequest) -> LabelRecord {
    LabelRecord {
        site_id: site.id.clone(),
        class: match request.decision {
            Decision::Confirm => LabelClass::Positive,
            Decision::Reject => LabelClass::Negative,
        },
        center: site.center,
        polygon: match request.decision {
            Decision::Confirm => request.polygon.clone(),
            Decision::Reject => None,
        },
        source: "review".into(),
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    state: StoreState,
}

impl Store {
    /// Opens (creating if needed) the store in `dir` and replays its log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let state = replay(&dir.join(EVENTS_FILE))?;
        Ok(Store { dir, state })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn get(&self, id: &str) -> Result<&SiteRecord> {
        self.state.sites.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Matching sites ordered by id.
    pub fn list_sites(&self, filter: &SiteFilter) -> Result<Vec<SiteRecord>> {
        let bbox = filter.bbox.as_deref().map(parse_bbox).transpose()?;
        Ok(self
            .state
            .sites
            .values()
            .filter(|r| filter.status.map_or(true, |s| r.site.status == s))
            .filter(|r| filter.mode.map_or(true, |m| r.site.mode == m))
            .filter(|r| {
                bbox.map_or(true, |b| {
                    let [lon, lat] = r.site.center;
                    lon >= b[0] && lon <= b[2] && lat >= b[1] && lat <= b[3]
                })
            })
            .cloned()
            .collect())
    }

    /// Monthly contours of a known site; empty when never monitored.
    pub fn contours(&self, id: &str) -> Result<geojson::FeatureCollection> {
        self.get(id)?;
        Ok(self.state.contours.get(id).cloned().unwrap_or(geojson::FeatureCollection {
            bbox: None,
            features: Vec::new(),
            foreign_members: None,
        }))
    }

    /// Records candidates from a detection run; returns how many were new.
    pub fn add_candidates(&mut self, sites: &[CandidateSite]) -> Result<usize> {
        let now = Utc::now();
        let events: Vec<Event> = sites
            .iter()
            .filter(|s| !self.state.sites.contains_key(&s.id))
            .map(|s| Event::Detected { site: s.clone(), at: now })
            .collect();
        let n = events.len();
        self.commit(&events)?;
        Ok(n)
    }

    pub fn set_monitoring(
        &mut self,
        site_id: &str,
        footprints: Vec<FootprintSummary>,
        contours: geojson::FeatureCollection,
        waterway: Option<WaterwayDistance>,
    ) -> Result<()> {
        self.get(site_id)?;
        self.commit(&[Event::Monitored {
            site_id: site_id.to_string(),
            footprints,
            contours,
            waterway,
            at: Utc::now(),
        }])
    }

    /// Applies a curator decision and appends the resulting label. Repeating
    /// the decision that was already recorded changes nothing and returns the
    /// same label; a different decision is a conflict.
    pub fn submit_review(&mut self, site_id: &str, request: ReviewRequest) -> Result<(SiteRecord, LabelRecord)> {
        let rec = self.get(site_id)?;
        if let Some(first) = rec.reviews.first() {
            if first.request == request {
                return Ok((rec.clone(), label_for(&rec.site, &first.request)));
            }
            return Err(StoreError::Conflict {
                site_id: site_id.to_string(),
                existing: first.request.decision,
            });
        }
        let label = label_for(&rec.site, &request);
        self.commit(&[Event::Reviewed {
            site_id: site_id.to_string(),
            review: ReviewEntry { request, at: Utc::now() },
        }])?;
        append_jsonl(&self.dir.join(LABELS_FILE), std::slice::from_ref(&label))?;
        Ok((self.get(site_id)?.clone(), label))
    }

    fn commit(&mut self, events: &[Event]) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        append_jsonl(&self.dir.join(EVENTS_FILE), events)?;
        for e in events {
            self.state.apply(e);
        }
        self.write_snapshots()
    }

    fn write_snapshots(&self) -> Result<()> {
        let features = self
            .state
            .sites
            .values()
            .map(|r| {
                let props = match serde_json::to_value(r)? {
                    serde_json::Value::Object(m) => m,
                    _ => unreachable!("site records serialize to objects"),
                };
                Ok(geojson::Feature {
                    bbox: None,
                    geometry: Some(geojson::Geometry::new(geojson::Value::Point(r.site.center.to_vec()))),
                    id: Some(geojson::feature::Id::String(r.site.id.clone())),
                    properties: Some(props),
                    foreign_members: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fc = geojson::FeatureCollection {
            bbox: None,
            features,
            foreign_members: None,
        };
        write_atomic(&self.dir.join(SITES_SNAPSHOT), &serde_json::to_vec_pretty(&fc)?)?;
        let cdir = self.dir.join(CONTOURS_DIR);
        fs::create_dir_all(&cdir)?;
        for (id, fc) in &self.state.contours {
            write_atomic(&cdir.join(format!("{id}.geojson")), &serde_json::to_vec_pretty(fc)?)?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.sync_data()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| StoreError::CorruptLog {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// State reconstructed from an event log.
pub fn replay(path: &Path) -> Result<StoreState> {
    let mut state = StoreState::default();
    for e in read_jsonl::<Event>(path)? {
        state.apply(&e);
    }
    Ok(state)
}

/// Label records exported by reviews, in submission order.
pub fn read_labels(store_dir: &Path) -> Result<Vec<LabelRecord>> {
    read_jsonl(&store_dir.join(LABELS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_parsing() {
        assert_eq!(parse_bbox("1,2,3,4").unwrap(), [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(parse_bbox(" -1.5, 2 ,3,4").unwrap(), [-1.5, 2.0, 3.0, 4.0]);
        for bad in ["", "1,2,3", "1,2,3,4,5", "a,2,3,4", "3,2,1,4", "1,4,3,2", "nan,0,1,1"] {
            assert!(matches!(parse_bbox(bad), Err(StoreError::BadBbox(_))), "{bad}");
        }
    }
}
