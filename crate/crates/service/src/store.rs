use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use safewalk_core::sim::{IngestReport, Scenario, ScenarioInputs, Snapshot};

use crate::error::{ApiError, ErrorCode};

/// Snapshots kept per scenario for `?slot=` lookups.
pub const HISTORY_LEN: usize = 64;

/// What is written to disk: enough to replay the scenario to its current slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: String,
    pub seed: u64,
    pub slot: usize,
    pub inputs: ScenarioInputs,
}

pub struct ScenarioEntry {
    pub id: String,
    pub seed: u64,
    pub inputs: ScenarioInputs,
    pub scenario: Arc<Scenario>,
    pub report: IngestReport,
    history: RwLock<VecDeque<Arc<Snapshot>>>,
    /// Held for the whole of a step so that slots advance one writer at a time.
    pub writer: tokio::sync::Mutex<()>,
}

impl ScenarioEntry {
    /// Builds the scenario and advances it to `slot`. Blocking.
    pub fn build(id: String, inputs: ScenarioInputs, seed: u64, slot: usize) -> Result<ScenarioEntry, ApiError> {
        let (scenario, report) = Scenario::from_inputs(&inputs, seed)?;
        let mut history = VecDeque::new();
        let mut snap = Arc::new(scenario.initial_snapshot()?);
        history.push_back(snap.clone());
        for _ in 0..slot {
            snap = Arc::new(scenario.step(&snap)?);
            push_bounded(&mut history, snap.clone());
        }
        Ok(ScenarioEntry {
            id,
            seed,
            inputs,
            scenario: Arc::new(scenario),
            report,
            history: RwLock::new(history),
            writer: tokio::sync::Mutex::new(()),
        })
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.history.read().expect("history lock").back().expect("history is never empty").clone()
    }

    pub fn snapshot(&self, slot: usize) -> Result<Arc<Snapshot>, ApiError> {
        let history = self.history.read().expect("history lock");
        history.iter().find(|s| s.slot == slot).cloned().ok_or_else(|| {
            let oldest = history.front().map_or(0, |s| s.slot);
            let newest = history.back().map_or(0, |s| s.slot);
            ApiError::new(
                ErrorCode::SnapshotNotFound,
                format!("slot {slot} is not retained (available {oldest}..={newest})"),
            )
            .with_field("slot")
        })
    }

    /// Appends freshly computed snapshots; the last one becomes the published state.
    pub fn publish(&self, snaps: Vec<Arc<Snapshot>>) {
        let mut history = self.history.write().expect("history lock");
        for s in snaps {
            push_bounded(&mut history, s);
        }
    }

    pub fn record(&self) -> ScenarioRecord {
        ScenarioRecord {
            id: self.id.clone(),
            seed: self.seed,
            slot: self.latest().slot,
            inputs: self.inputs.clone(),
        }
    }
}

fn push_bounded(history: &mut VecDeque<Arc<Snapshot>>, snap: Arc<Snapshot>) {
    history.push_back(snap);
    while history.len() > HISTORY_LEN {
        history.pop_front();
    }
}

/// In-memory scenario table, optionally mirrored to a directory of JSON records.
pub struct Store {
    scenarios: RwLock<BTreeMap<String, Arc<ScenarioEntry>>>,
    data_dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Store {
        Store {
            scenarios: RwLock::new(BTreeMap::new()),
            data_dir: None,
        }
    }

    /// Opens `dir`, replaying every stored scenario to its saved slot.
    /// Unreadable records are reported on stderr and skipped.
    pub fn open(dir: &Path) -> io::Result<Store> {
        fs::create_dir_all(dir)?;
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut map = BTreeMap::new();
        for path in paths {
            let loaded = fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<ScenarioRecord>(&s).map_err(|e| e.to_string()))
                .and_then(|r| ScenarioEntry::build(r.id, r.inputs, r.seed, r.slot).map_err(|e| e.message));
            match loaded {
                Ok(entry) => {
                    map.insert(entry.id.clone(), Arc::new(entry));
                }
                Err(e) => eprintln!("skipping {}: {e}", path.display()),
            }
        }
        Ok(Store {
            scenarios: RwLock::new(map),
            data_dir: Some(dir.to_path_buf()),
        })
    }

    pub fn get(&self, id: &str) -> Result<Arc<ScenarioEntry>, ApiError> {
        self.scenarios
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorCode::ScenarioNotFound, format!("no scenario {id:?}")).with_field("id"))
    }

    pub fn list(&self) -> Vec<Arc<ScenarioEntry>> {
        self.scenarios.read().expect("store lock").values().cloned().collect()
    }

    /// Builds, stores and persists a new scenario at slot 0. Blocking.
    pub fn create(&self, inputs: ScenarioInputs, seed: u64) -> Result<Arc<ScenarioEntry>, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let entry = Arc::new(ScenarioEntry::build(id, inputs, seed, 0)?);
        self.insert(entry.clone())?;
        Ok(entry)
    }

    /// A stored scenario built from exactly these inputs and seed.
    pub fn find(&self, inputs: &ScenarioInputs, seed: u64) -> Option<Arc<ScenarioEntry>> {
        self.list().into_iter().find(|e| e.seed == seed && &e.inputs == inputs)
    }

    pub fn insert(&self, entry: Arc<ScenarioEntry>) -> Result<(), ApiError> {
        self.persist(&entry.record())?;
        self.scenarios.write().expect("store lock").insert(entry.id.clone(), entry);
        Ok(())
    }

    /// Writes the record atomically (temp file then rename).
    pub fn persist(&self, record: &ScenarioRecord) -> Result<(), ApiError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        let write = || -> io::Result<()> {
            let tmp = dir.join(format!(".{}.json.tmp", record.id));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(record).map_err(io::Error::other)?)?;
            f.sync_all()?;
            fs::rename(&tmp, dir.join(format!("{}.json", record.id)))
        };
        write().map_err(|e| ApiError::internal(format!("cannot persist scenario: {e}")))
    }
}
