// SPDX-License-Identifier: Apache-2.0

//! Append-only JSON-lines session log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use syndro_core::{BlacklistSpec, Semantics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session: String,
        dataset: String,
        targets: String,
    },
    Blacklist {
        session: String,
        blacklist: BlacklistSpec,
    },
    Pin {
        session: String,
        name: String,
        syndrome: String,
    },
    Unpin {
        session: String,
        name: String,
    },
    Learned {
        session: String,
        job: String,
        syndrome: String,
        semantics: Semantics,
    },
}

impl Event {
    pub fn session(&self) -> &str {
        match self {
            Event::SessionCreated { session, .. }
            | Event::Blacklist { session, .. }
            | Event::Pin { session, .. }
            | Event::Unpin { session, .. }
            | Event::Learned { session, .. } => session,
        }
    }
}

#[derive(Debug)]
pub struct SessionStore {
    path: PathBuf,
    file: File,
}

impl SessionStore {
    /// Opens (creating if needed) the log and returns the events already in
    /// it. A torn final line from an interrupted write is ignored; any other
    /// malformed line is an error.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<Event>)> {
        let mut events = Vec::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
            let last = lines.len().saturating_sub(1);
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str(line) {
                    Ok(e) => events.push(e),
                    Err(_) if i == last => {}
                    Err(e) => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}:{}: {e}", path.display(), i + 1),
                        ))
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            SessionStore {
                path: path.to_path_buf(),
                file,
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}
