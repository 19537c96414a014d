//! Append-only persistence: `index.log` lists session ids, and
//! `sessions/<id>.jsonl` holds one JSON event per line. Every append is
//! flushed to disk before the caller acknowledges the request.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
}

/// The four 1..=5 judgements collected for every shown set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Likert {
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
}

impl Likert {
    pub fn values(&self) -> [u8; 4] {
        [self.accuracy, self.diversity, self.novelty, self.serendipity]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        demographics: Demographics,
        elicitation_items: Vec<String>,
        engine_order: Vec<String>,
    },
    Ratings {
        ratings: BTreeMap<String, u8>,
    },
    Tolerances {
        beta_raw: u8,
        xi_raw: u8,
    },
    Served {
        position: usize,
        engine: String,
        items: Vec<String>,
        /// Position whose items were re-served, for the duplicated engine.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replay_of: Option<usize>,
        optimal: bool,
    },
    Feedback {
        position: usize,
        feedback: Likert,
    },
}

/// Open handle on one session's event log.
#[derive(Debug)]
pub struct SessionLog {
    file: File,
}

impl SessionLog {
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    index: Mutex<File>,
}

/// A session recovered from disk.
#[derive(Debug)]
pub struct Recovered {
    pub events: Vec<Event>,
    pub log: SessionLog,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl Store {
    /// Opens (or creates) a store and replays every session in it.
    pub fn open(dir: impl AsRef<Path>) -> io::Result<(Store, Vec<Recovered>)> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("sessions"))?;
        let index_path = dir.join("index.log");
        let mut index = OpenOptions::new().create(true).read(true).append(true).open(&index_path)?;
        let ids = read_index(&mut index)?;

        let mut recovered = Vec::with_capacity(ids.len());
        for id in ids {
            let path = session_path(&dir, &id);
            if !path.exists() {
                continue;
            }
            recovered.push(replay_session(&path)?);
        }
        Ok((
            Store {
                dir,
                index: Mutex::new(index),
            },
            recovered,
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Creates the session log holding `created`, then registers the id.
    pub fn create_session(&self, id: &str, created: &Event) -> io::Result<SessionLog> {
        if !valid_id(id) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("bad session id {id:?}")));
        }
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(session_path(&self.dir, id))?;
        let mut log = SessionLog { file };
        log.append(created)?;
        let mut index = self.index.lock().unwrap_or_else(|e| e.into_inner());
        index.write_all(format!("{id}\n").as_bytes())?;
        index.sync_data()?;
        Ok(log)
    }
}

fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("sessions").join(format!("{id}.jsonl"))
}

fn read_index(file: &mut File) -> io::Result<Vec<String>> {
    file.seek(SeekFrom::Start(0))?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let complete = text.ends_with('\n');
    let mut lines: Vec<&str> = text.lines().collect();
    if !complete && !lines.is_empty() {
        // torn final write: the session file may exist but was never acknowledged
        lines.pop();
        let keep: usize = lines.iter().map(|l| l.len() + 1).sum();
        file.set_len(keep as u64)?;
    }
    Ok(lines
        .into_iter()
        .map(str::trim)
        .filter(|l| valid_id(l))
        .map(str::to_owned)
        .collect())
}

/// Reads every complete event. A final line that is cut short or unparsable
/// was never acknowledged and is dropped; anything earlier must parse.
fn replay_session(path: &Path) -> io::Result<Recovered> {
    let file = OpenOptions::new().read(true).append(true).open(path)?;
    let mut reader = BufReader::new(&file);
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut buf = Vec::new();
    let mut torn = false;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let complete = buf.ends_with(b"\n");
        match serde_json::from_slice::<Event>(&buf) {
            Ok(event) if complete => {
                events.push(event);
                good_len += n as u64;
            }
            Ok(_) | Err(_) => {
                let rest_empty = reader.fill_buf()?.is_empty();
                if rest_empty {
                    torn = true;
                    break;
                }
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: corrupt event after byte {good_len}", path.display()),
                ));
            }
        }
    }
    drop(reader);
    if torn {
        file.set_len(good_len)?;
    }
    if !matches!(events.first(), Some(Event::Created { .. })) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: log does not start with a created event", path.display()),
        ));
    }
    Ok(Recovered {
        events,
        log: SessionLog { file },
    })
}
