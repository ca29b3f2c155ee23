//! Append-only event store with consent-gated retention.
//!
//! Layout under the store root:
//!
//! ```text
//! index.json                      session id -> retention state
//! tombstones                      SHA-256 of every hard-deleted session id
//! sessions/<session_id>.log       one JSON EventRecord per line
//! postcards/postcard_<id>.svg     rendered postcard
//! postcards/postcard_<id>.meta    postcard sidecar
//! ```
//!
//! A session is undetermined until its visitor decides. Donating marks it
//! retained and makes it exportable; withholding, or purging an abandoned
//! session, removes its log, postcard files and index entry. Only a hash of
//! the id is kept, so later appends can be refused without the id itself
//! surviving anywhere in the store.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::affect::{quantize_levels, AffectLevels, AffectScores};
use crate::catalog::is_token;
use crate::selection::VideoChoice;
use crate::selfreport::SelfReport;
use crate::session::{replay, Consent, Event, EventBody, Phase, ReplayError, Session};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("session {session_id}: expected seq {expected}, got {got}")]
    SequenceGap {
        session_id: String,
        expected: u64,
        got: u64,
    },
    #[error("session was deleted")]
    SessionDeleted,
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("consent already recorded for `{0}`")]
    AlreadyDecided(String),
    #[error("session `{session_id}` is in phase {phase:?}, consent needs PostcardIssued")]
    NotReady { session_id: String, phase: Phase },
    #[error("invalid session id `{0}`")]
    InvalidSessionId(String),
    #[error("batch mixes sessions or is empty")]
    BadBatch,
    #[error("corrupt store data in {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("replay failed: {0}")]
    Replay(#[from] ReplayError),
}

/// One persisted event, as written to a session log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub session_id: String,
    pub seq: u64,
    pub ts: i64,
    pub kind: String,
    pub payload: serde_json::Value,
}

impl EventRecord {
    pub fn from_event(session_id: &str, event: &Event) -> EventRecord {
        let body = serde_json::to_value(&event.body).expect("event body serializes");
        let (kind, payload) = match body {
            serde_json::Value::Object(mut map) => (
                map.remove("kind")
                    .and_then(|k| k.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                map.remove("payload").unwrap_or(serde_json::Value::Null),
            ),
            _ => unreachable!("adjacently tagged enum serializes to an object"),
        };
        EventRecord {
            session_id: session_id.to_owned(),
            seq: event.seq,
            ts: event.ts,
            kind,
            payload,
        }
    }

    pub fn to_event(&self) -> Result<Event, serde_json::Error> {
        let body: EventBody = serde_json::from_value(serde_json::json!({
            "kind": self.kind,
            "payload": self.payload,
        }))?;
        Ok(Event {
            seq: self.seq,
            ts: self.ts,
            body,
        })
    }

    pub fn parse_line(line: &str) -> Result<EventRecord, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentDecision {
    pub session_id: String,
    pub decision: Consent,
    pub ts: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    Undetermined,
    Retained,
}

/// One line of the donated-data export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub session_id: String,
    pub code: String,
    pub created_ts: i64,
    pub completed_ts: i64,
    pub reports: Vec<SelfReport>,
    pub scores: Option<AffectScores>,
    pub levels: Option<AffectLevels>,
    pub video: Option<VideoChoice>,
}

impl ExportRecord {
    pub fn from_session(session: &Session) -> ExportRecord {
        ExportRecord {
            session_id: session.id(),
            code: session.token.code.clone(),
            created_ts: session.created_ts,
            completed_ts: session.last_ts,
            reports: session.reports.clone(),
            scores: session.scores,
            levels: session.scores.as_ref().map(quantize_levels),
            video: session.chosen_video.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SessionMeta {
    retention: Retention,
    last_seq: u64,
    last_ts: i64,
}

#[derive(Default)]
struct Inner {
    sessions: BTreeMap<String, SessionMeta>,
    tombstones: HashSet<String>,
    withheld: u64,
    purged: u64,
}

/// Session tallies. Deleted sessions are only counted, never identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StoreCounts {
    pub undetermined: usize,
    pub retained: usize,
    pub withheld: u64,
    pub purged: u64,
}

#[derive(Serialize, Deserialize, Default)]
struct IndexFile {
    sessions: BTreeMap<String, Retention>,
    #[serde(default)]
    withheld: u64,
    #[serde(default)]
    purged: u64,
}

#[derive(Clone, Copy)]
enum DeleteReason {
    Withheld,
    Purged,
}

/// Store handle. All operations are serialized through one lock, which
/// also gives deletion exclusivity and export a consistent snapshot.
pub struct Store {
    root: PathBuf,
    sync: bool,
    inner: Mutex<Inner>,
}

fn tombstone_key(session_id: &str) -> String {
    let digest = Sha256::digest(session_id.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_id(session_id: &str) -> Result<(), StoreError> {
    if is_token(session_id) && session_id.len() <= 64 {
        Ok(())
    } else {
        Err(StoreError::InvalidSessionId(session_id.to_owned()))
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

impl Store {
    /// Opens (creating if needed) the store at `root` with fsync on every
    /// acknowledged write.
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        Store::open_with_sync(root, true)
    }

    /// `sync = false` skips fsync; only for throwaway stores.
    pub fn open_with_sync(root: impl AsRef<Path>, sync: bool) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("postcards"))?;
        let store = Store {
            root,
            sync,
            inner: Mutex::new(Inner::default()),
        };
        store.recover()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn log_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.log"))
    }

    pub fn postcard_paths(&self, session_id: &str) -> (PathBuf, PathBuf) {
        let dir = self.root.join("postcards");
        (
            dir.join(format!("postcard_{session_id}.svg")),
            dir.join(format!("postcard_{session_id}.meta")),
        )
    }

    fn recover(&self) -> Result<(), StoreError> {
        let mut inner = self.lock();
        let tomb_path = self.root.join("tombstones");
        if tomb_path.exists() {
            for line in BufReader::new(File::open(&tomb_path)?).lines() {
                let line = line?;
                if !line.is_empty() {
                    inner.tombstones.insert(line);
                }
            }
        }
        let index_path = self.root.join("index.json");
        let index: IndexFile = if index_path.exists() {
            serde_json::from_slice(&fs::read(&index_path)?).map_err(|e| StoreError::Corrupt {
                path: index_path.display().to_string(),
                reason: e.to_string(),
            })?
        } else {
            IndexFile::default()
        };
        inner.withheld = index.withheld;
        inner.purged = index.purged;

        // Logs are authoritative for existence; the index for retention.
        let mut dirty = false;
        for entry in fs::read_dir(self.root.join("sessions"))? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".log"))
                .map(str::to_owned)
            else {
                continue;
            };
            if inner.tombstones.contains(&tombstone_key(&id)) {
                // Interrupted delete: finish it.
                fs::remove_file(&path)?;
                dirty = true;
                continue;
            }
            let Some((last_seq, last_ts)) = self.recover_log(&path)? else {
                fs::remove_file(&path)?;
                dirty = true;
                continue;
            };
            let retention = index.sessions.get(&id).copied().unwrap_or_else(|| {
                dirty = true;
                Retention::Undetermined
            });
            inner.sessions.insert(
                id,
                SessionMeta {
                    retention,
                    last_seq,
                    last_ts,
                },
            );
        }
        if index.sessions.len() != inner.sessions.len() {
            dirty = true;
        }
        if dirty {
            self.write_index(&inner)?;
        }
        Ok(())
    }

    /// Drops a torn trailing line, then returns the last (seq, ts).
    fn recover_log(&self, path: &Path) -> Result<Option<(u64, i64)>, StoreError> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
            file.sync_all()?;
        }
        let text = std::str::from_utf8(&bytes[..keep]).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let Some(last) = text.lines().last() else {
            return Ok(None);
        };
        let rec = EventRecord::parse_line(last).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Some((rec.seq, rec.ts)))
    }

    fn write_index(&self, inner: &Inner) -> Result<(), StoreError> {
        let index = IndexFile {
            sessions: inner
                .sessions
                .iter()
                .map(|(id, m)| (id.clone(), m.retention))
                .collect(),
            withheld: inner.withheld,
            purged: inner.purged,
        };
        let bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
        self.write_atomic(&self.root.join("index.json"), &bytes)
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            if self.sync {
                f.sync_all()?;
            }
        }
        fs::rename(&tmp, path)?;
        if self.sync {
            sync_dir(path.parent().unwrap_or(&self.root))?;
        }
        Ok(())
    }

    fn check_live(&self, inner: &Inner, session_id: &str) -> Result<(), StoreError> {
        check_id(session_id)?;
        if inner.tombstones.contains(&tombstone_key(session_id)) {
            return Err(StoreError::SessionDeleted);
        }
        Ok(())
    }

    /// Appends one record. Returns once the record is durable.
    pub fn append(&self, rec: &EventRecord) -> Result<(), StoreError> {
        self.append_batch(std::slice::from_ref(rec))
    }

    /// Appends contiguous records of one session with a single sync.
    pub fn append_batch(&self, recs: &[EventRecord]) -> Result<(), StoreError> {
        let first = recs.first().ok_or(StoreError::BadBatch)?;
        let session_id = first.session_id.as_str();
        if recs.iter().any(|r| r.session_id != session_id) {
            return Err(StoreError::BadBatch);
        }
        let mut inner = self.lock();
        self.check_live(&inner, session_id)?;
        let existing = inner.sessions.get(session_id).copied();
        let start = existing.map_or(1, |m| m.last_seq + 1);
        for (expected, r) in (start..).zip(recs) {
            if r.seq != expected {
                return Err(StoreError::SequenceGap {
                    session_id: session_id.to_owned(),
                    expected,
                    got: r.seq,
                });
            }
        }
        let mut buf = String::new();
        for r in recs {
            buf.push_str(&r.to_line());
        }
        let path = self.log_path(session_id);
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(buf.as_bytes())?;
        if self.sync {
            file.sync_data()?;
        }
        let last = recs.last().expect("non-empty");
        match inner.sessions.get_mut(session_id) {
            Some(meta) => {
                meta.last_seq = last.seq;
                meta.last_ts = last.ts;
            }
            None => {
                if self.sync {
                    sync_dir(&self.root.join("sessions"))?;
                }
                inner.sessions.insert(
                    session_id.to_owned(),
                    SessionMeta {
                        retention: Retention::Undetermined,
                        last_seq: last.seq,
                        last_ts: last.ts,
                    },
                );
                self.write_index(&inner)?;
            }
        }
        Ok(())
    }

    fn read_records(&self, session_id: &str) -> Result<Vec<EventRecord>, StoreError> {
        let path = self.log_path(session_id);
        let text = fs::read_to_string(&path)?;
        text.lines()
            .map(|l| {
                EventRecord::parse_line(l).map_err(|e| StoreError::Corrupt {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    fn read_session(&self, session_id: &str) -> Result<Session, StoreError> {
        let path = self.log_path(session_id);
        let events = self
            .read_records(session_id)?
            .iter()
            .map(|r| r.to_event())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        Ok(replay(&events)?)
    }

    pub fn load_records(&self, session_id: &str) -> Result<Vec<EventRecord>, StoreError> {
        let inner = self.lock();
        if check_id(session_id).is_err() || !inner.sessions.contains_key(session_id) {
            return Err(StoreError::NotFound(session_id.to_owned()));
        }
        self.read_records(session_id)
    }

    pub fn load_session(&self, session_id: &str) -> Result<Session, StoreError> {
        let inner = self.lock();
        if check_id(session_id).is_err() || !inner.sessions.contains_key(session_id) {
            return Err(StoreError::NotFound(session_id.to_owned()));
        }
        self.read_session(session_id)
    }

    pub fn retention(&self, session_id: &str) -> Option<Retention> {
        self.lock().sessions.get(session_id).map(|m| m.retention)
    }

    pub fn is_deleted(&self, session_id: &str) -> bool {
        self.lock().tombstones.contains(&tombstone_key(session_id))
    }

    /// Live session ids in sorted order.
    pub fn session_ids(&self) -> Vec<String> {
        self.lock().sessions.keys().cloned().collect()
    }

    pub fn counts(&self) -> StoreCounts {
        let inner = self.lock();
        let retained = inner
            .sessions
            .values()
            .filter(|m| m.retention == Retention::Retained)
            .count();
        StoreCounts {
            undetermined: inner.sessions.len() - retained,
            retained,
            withheld: inner.withheld,
            purged: inner.purged,
        }
    }

    /// Writes the postcard files for a live session.
    pub fn write_postcard(&self, session_id: &str, svg: &str, meta: &str) -> Result<(), StoreError> {
        let inner = self.lock();
        self.check_live(&inner, session_id)?;
        if !inner.sessions.contains_key(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_owned()));
        }
        let (svg_path, meta_path) = self.postcard_paths(session_id);
        self.write_atomic(&svg_path, svg.as_bytes())?;
        self.write_atomic(&meta_path, meta.as_bytes())?;
        Ok(())
    }

    pub fn record_consent(&self, d: &ConsentDecision) -> Result<(), StoreError> {
        let mut inner = self.lock();
        let id = d.session_id.as_str();
        if check_id(id).is_err() {
            return Err(StoreError::UnknownSession(id.to_owned()));
        }
        let meta = match inner.sessions.get(id) {
            Some(m) => *m,
            None => return Err(StoreError::UnknownSession(id.to_owned())),
        };
        if meta.retention == Retention::Retained {
            return Err(StoreError::AlreadyDecided(id.to_owned()));
        }
        let mut session = self.read_session(id)?;
        if session.phase() != Phase::PostcardIssued {
            return Err(StoreError::NotReady {
                session_id: id.to_owned(),
                phase: session.phase(),
            });
        }
        match d.decision {
            Consent::Donated => {
                let event = session.next_event(
                    d.ts,
                    EventBody::ConsentRecorded {
                        decision: Consent::Donated,
                    },
                );
                session.apply(&event).map_err(|source| ReplayError::Rejected {
                    seq: event.seq,
                    source,
                })?;
                let rec = EventRecord::from_event(id, &event);
                let mut file = OpenOptions::new().append(true).open(self.log_path(id))?;
                file.write_all(rec.to_line().as_bytes())?;
                if self.sync {
                    file.sync_data()?;
                }
                let m = inner.sessions.get_mut(id).expect("checked above");
                m.retention = Retention::Retained;
                m.last_seq = rec.seq;
                m.last_ts = rec.ts;
                self.write_index(&inner)?;
            }
            Consent::Withheld => self.delete_locked(&mut inner, id, DeleteReason::Withheld)?,
        }
        Ok(())
    }

    /// Hard-deletes every undetermined session whose last event is older
    /// than `cutoff`. Returns the number of sessions deleted.
    pub fn purge_incomplete(&self, cutoff: i64) -> Result<usize, StoreError> {
        let mut inner = self.lock();
        let doomed: Vec<String> = inner
            .sessions
            .iter()
            .filter(|(_, m)| m.retention == Retention::Undetermined && m.last_ts < cutoff)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &doomed {
            self.delete_locked(&mut inner, id, DeleteReason::Purged)?;
        }
        Ok(doomed.len())
    }

    fn delete_locked(
        &self,
        inner: &mut Inner,
        session_id: &str,
        reason: DeleteReason,
    ) -> Result<(), StoreError> {
        // Tombstone first so a crash mid-delete is finished on recovery.
        let key = tombstone_key(session_id);
        let mut tomb = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("tombstones"))?;
        tomb.write_all(format!("{key}\n").as_bytes())?;
        if self.sync {
            tomb.sync_data()?;
        }
        inner.tombstones.insert(key);

        let (svg, meta) = self.postcard_paths(session_id);
        for path in [self.log_path(session_id), svg, meta] {
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
        inner.sessions.remove(session_id);
        match reason {
            DeleteReason::Withheld => inner.withheld += 1,
            DeleteReason::Purged => inner.purged += 1,
        }
        self.write_index(inner)?;
        if self.sync {
            sync_dir(&self.root.join("sessions"))?;
            sync_dir(&self.root.join("postcards"))?;
        }
        Ok(())
    }

    /// Writes one JSON line per retained session, in session id order.
    /// Returns the number of records written.
    pub fn export_donated<W: Write>(&self, mut out: W) -> Result<usize, StoreError> {
        let records = self.donated_records()?;
        for r in &records {
            let mut line = serde_json::to_string(r).expect("export record serializes");
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        out.flush()?;
        Ok(records.len())
    }

    pub fn donated_records(&self) -> Result<Vec<ExportRecord>, StoreError> {
        let inner = self.lock();
        inner
            .sessions
            .iter()
            .filter(|(_, m)| m.retention == Retention::Retained)
            .map(|(id, _)| self.read_session(id).map(|s| ExportRecord::from_session(&s)))
            .collect()
    }
}
