//! Directory-backed session store.
//!
//! Each session lives in `<root>/<session_id>/` holding the uploaded image
//! as received, an append-only `events.jsonl` log and a `state.json`
//! snapshot. The log is the source of truth: opening the store replays
//! every log, and the snapshot is rewritten after each event for external
//! inspection.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use fafscreen_core::dataset::Label;
use fafscreen_core::grid::{compute_features, sector_stats, GridSpec, Overlay, SectorStat};
use fafscreen_core::image::{load_image, FafImage, ImageFormat};
use fafscreen_core::numfmt;
use fafscreen_core::svm::SvmModel;

use crate::error::ServiceError;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const STATE_FILE: &str = "state.json";

/// Sector statistics for the current grid placement.
#[derive(Debug, Clone, Serialize)]
pub struct GridEvaluation {
    pub features: Vec<f64>,
    pub sector_stats: Vec<SectorStat>,
    pub overlay: Overlay,
}

impl GridEvaluation {
    pub fn compute(image: &FafImage, grid: &GridSpec) -> Result<Self, ServiceError> {
        grid.validate()?;
        let features = compute_features(image, grid)?;
        Ok(Self {
            features: features.as_slice().to_vec(),
            sector_stats: sector_stats(image, grid)?,
            overlay: grid.overlay(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub decision_value: f64,
    pub signed_distance: f64,
    pub model_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionState {
    pub session_id: String,
    pub filename: String,
    pub image_file: String,
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub grid: Option<GridSpec>,
    pub evaluation: Option<GridEvaluation>,
    pub classification: Option<Classification>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub filename: String,
    pub width: usize,
    pub height: usize,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub has_grid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: String,
        filename: String,
        image_file: String,
    },
    GridSet {
        grid: GridSpec,
    },
    Classified {
        classification: Classification,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EventRecord {
    seq: u64,
    at_ms: u64,
    #[serde(flatten)]
    event: Event,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Session {
    dir: PathBuf,
    image: FafImage,
    state: SessionState,
    next_seq: u64,
}

impl Session {
    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn image(&self) -> &FafImage {
        &self.image
    }

    pub fn summary(&self) -> SessionSummary {
        let s = &self.state;
        SessionSummary {
            session_id: s.session_id.clone(),
            filename: s.filename.clone(),
            width: s.width,
            height: s.height,
            created_ms: s.created_ms,
            updated_ms: s.updated_ms,
            has_grid: s.grid.is_some(),
            label: s.classification.as_ref().map(|c| c.label),
        }
    }

    /// Evaluates and stores a grid placement. A grid that fails validation
    /// or leaves a sector empty is rejected without touching the session.
    pub fn set_grid(&mut self, grid: GridSpec) -> Result<GridEvaluation, ServiceError> {
        self.record(Event::GridSet { grid })?;
        Ok(self.state.evaluation.clone().expect("evaluation set with the grid"))
    }

    pub fn classify(
        &mut self,
        model_id: &str,
        model: &SvmModel,
    ) -> Result<Classification, ServiceError> {
        let features = match &self.state.evaluation {
            Some(e) => e.features.clone(),
            None => {
                return Err(ServiceError::Conflict(
                    "no grid has been placed on this session".into(),
                ))
            }
        };
        let unprocessable = |e: fafscreen_core::svm::SvmError| ServiceError::Unprocessable(e.to_string());
        let decision_value = model.decision_value(&features).map_err(unprocessable)?;
        let signed_distance = model.signed_distance(&features).map_err(unprocessable)?;
        let classification = Classification {
            label: Label::from_sign(decision_value),
            decision_value,
            signed_distance,
            model_id: model_id.to_string(),
        };
        self.record(Event::Classified {
            classification: classification.clone(),
        })?;
        Ok(classification)
    }

    fn record(&mut self, event: Event) -> Result<(), ServiceError> {
        let record = EventRecord {
            seq: self.next_seq,
            at_ms: now_ms().max(self.state.updated_ms),
            event,
        };
        let mut line = numfmt::to_json_vec(&record).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        // apply first so an event that cannot be replayed never reaches the log
        let mut next = self.state.clone();
        apply(&mut next, &self.image, &record)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(EVENTS_FILE))?;
        log.write_all(&line)?;
        log.sync_data()?;
        self.state = next;
        self.next_seq += 1;
        write_snapshot(&self.dir, &self.state)?;
        Ok(())
    }
}

fn apply(state: &mut SessionState, image: &FafImage, record: &EventRecord) -> Result<(), ServiceError> {
    match &record.event {
        Event::Created { .. } => {
            return Err(ServiceError::Internal(format!(
                "event {} re-creates the session",
                record.seq
            )))
        }
        Event::GridSet { grid } => {
            state.evaluation = Some(GridEvaluation::compute(image, grid)?);
            state.grid = Some(*grid);
            state.classification = None;
        }
        Event::Classified { classification } => {
            if state.evaluation.is_none() {
                return Err(ServiceError::Internal(format!(
                    "event {} classifies before any grid",
                    record.seq
                )));
            }
            state.classification = Some(classification.clone());
        }
    }
    state.updated_ms = record.at_ms;
    Ok(())
}

fn write_snapshot(dir: &Path, state: &SessionState) -> Result<(), ServiceError> {
    let bytes = numfmt::to_json_vec_pretty(state).map_err(|e| ServiceError::Internal(e.to_string()))?;
    let tmp = dir.join(format!("{STATE_FILE}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, dir.join(STATE_FILE))?;
    Ok(())
}

/// Rebuilds a session from its directory by replaying the event log.
pub fn replay(dir: &Path) -> Result<Session, ServiceError> {
    let corrupt = |msg: String| ServiceError::Internal(format!("{}: {msg}", dir.display()));
    let raw = fs::read(dir.join(EVENTS_FILE))?;
    let mut lines: Vec<&[u8]> = raw.split(|&b| b == b'\n').collect();
    // the segment after the last newline is either empty or a write torn
    // by a crash; that event never completed, so it is dropped
    lines.pop();
    let mut records = lines
        .iter()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_slice::<EventRecord>(l).map_err(|e| corrupt(format!("event line {}: {e}", i + 1)))
        });
    let first = records
        .next()
        .ok_or_else(|| corrupt("empty event log".into()))??;
    let Event::Created {
        session_id,
        filename,
        image_file,
    } = first.event
    else {
        return Err(corrupt("log does not start with a creation event".into()));
    };
    let image = load_image(&fs::read(dir.join(&image_file))?, None)
        .map_err(|e| corrupt(format!("stored image: {e}")))?;
    let mut state = SessionState {
        session_id,
        filename,
        image_file,
        width: image.width(),
        height: image.height(),
        max_value: image.max_value(),
        created_ms: first.at_ms,
        updated_ms: first.at_ms,
        grid: None,
        evaluation: None,
        classification: None,
    };
    let mut next_seq = first.seq + 1;
    for record in records {
        let record = record?;
        if record.seq != next_seq {
            return Err(corrupt(format!(
                "expected event {next_seq}, found {}",
                record.seq
            )));
        }
        apply(&mut state, &image, &record)?;
        next_seq += 1;
    }
    Ok(Session {
        dir: dir.to_path_buf(),
        image,
        state,
        next_seq,
    })
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// All sessions under one root directory. Mutations of a session are
/// serialized by its own lock; distinct sessions proceed independently.
pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, SessionHandle>>,
    skipped: Vec<(PathBuf, String)>,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut sessions = BTreeMap::new();
        let mut skipped = Vec::new();
        for entry in fs::read_dir(&root)? {
            let path = entry?.path();
            if !path.join(EVENTS_FILE).is_file() {
                continue;
            }
            match replay(&path) {
                Ok(session) => {
                    let id = session.state.session_id.clone();
                    sessions.insert(id, Arc::new(Mutex::new(session)));
                }
                Err(e) => skipped.push((path, e.to_string())),
            }
        }
        Ok(Self {
            root,
            sessions: RwLock::new(sessions),
            skipped,
        })
    }

    /// Session directories that could not be replayed at open time.
    pub fn skipped(&self) -> &[(PathBuf, String)] {
        &self.skipped
    }

    pub fn create(&self, filename: &str, bytes: &[u8]) -> Result<SessionSummary, ServiceError> {
        let format = ImageFormat::sniff(bytes)
            .ok_or_else(|| ServiceError::BadRequest("upload is not a PGM or PNG image".into()))?;
        let image = load_image(bytes, Some(format)).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let image_file = match format {
            ImageFormat::Png => "image.png",
            ImageFormat::PgmAscii | ImageFormat::PgmBinary => "image.pgm",
        }
        .to_string();
        let dir = self.root.join(&session_id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(&image_file), bytes)?;
        let record = EventRecord {
            seq: 0,
            at_ms: now_ms(),
            event: Event::Created {
                session_id: session_id.clone(),
                filename: filename.to_string(),
                image_file: image_file.clone(),
            },
        };
        let mut line = numfmt::to_json_vec(&record).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        let mut log = File::create(dir.join(EVENTS_FILE))?;
        log.write_all(&line)?;
        log.sync_data()?;
        let state = SessionState {
            session_id: session_id.clone(),
            filename: filename.to_string(),
            image_file,
            width: image.width(),
            height: image.height(),
            max_value: image.max_value(),
            created_ms: record.at_ms,
            updated_ms: record.at_ms,
            grid: None,
            evaluation: None,
            classification: None,
        };
        write_snapshot(&dir, &state)?;
        let session = Session {
            dir,
            image,
            state,
            next_seq: 1,
        };
        let summary = session.summary();
        self.sessions
            .write()
            .expect("session map lock")
            .insert(session_id, Arc::new(Mutex::new(session)));
        Ok(summary)
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ServiceError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session '{id}'")))
    }

    pub fn summaries(&self) -> Vec<SessionSummary> {
        let handles: Vec<SessionHandle> = self
            .sessions
            .read()
            .expect("session map lock")
            .values()
            .cloned()
            .collect();
        handles
            .iter()
            .map(|h| h.lock().expect("session lock").summary())
            .collect()
    }
}
