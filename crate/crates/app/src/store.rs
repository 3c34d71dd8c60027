//! File-backed scene store: one pretty-printed JSON file per scene, replaced
//! atomically, with writes serialized per scene id.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crbgate_core::scene::Scene;

use crate::error::{AppError, ErrorCode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: Uuid,
    pub scene: Scene,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub revision: u64,
}

pub struct SceneStore {
    dir: PathBuf,
    locks: Mutex<HashMap<Uuid, Arc<Mutex<()>>>>,
}

impl SceneStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AppError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| AppError::internal(format!("cannot create data dir {}: {e}", dir.display())))?;
        Ok(SceneStore { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn lock_for(&self, id: Uuid) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id).or_default().clone()
    }

    pub fn create(&self, scene: Scene) -> Result<SceneRecord, AppError> {
        scene.validate()?;
        let now = Utc::now();
        let record = SceneRecord {
            scene_id: Uuid::new_v4(),
            scene,
            created_at: now,
            updated_at: now,
            revision: 1,
        };
        let lock = self.lock_for(record.scene_id);
        let _guard = lock.lock().expect("scene lock poisoned");
        self.write(&record)?;
        Ok(record)
    }

    pub fn get(&self, id: Uuid) -> Result<SceneRecord, AppError> {
        let path = self.path_of(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AppError::new(ErrorCode::NotFound, format!("no scene {id}")).with_detail(json!({ "scene_id": id })))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes)
            .map_err(|e| AppError::internal(format!("corrupt scene file {}: {e}", path.display())))
    }

    /// Replaces the scene if `expected_revision` is still current.
    pub fn update(&self, id: Uuid, scene: Scene, expected_revision: u64) -> Result<SceneRecord, AppError> {
        scene.validate()?;
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("scene lock poisoned");
        let current = self.get(id)?;
        if current.revision != expected_revision {
            return Err(AppError::new(
                ErrorCode::StaleRevision,
                format!("scene {id} is at revision {}, not {expected_revision}", current.revision),
            )
            .with_detail(json!({ "current_revision": current.revision, "given_revision": expected_revision })));
        }
        let record = SceneRecord {
            scene,
            updated_at: Utc::now(),
            revision: current.revision + 1,
            ..current
        };
        self.write(&record)?;
        Ok(record)
    }

    fn write(&self, record: &SceneRecord) -> Result<(), AppError> {
        let mut bytes = serde_json::to_vec_pretty(record).map_err(|e| AppError::internal(e.to_string()))?;
        bytes.push(b'\n');
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_of(record.scene_id)).map_err(|e| AppError::from(e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let store = SceneStore::open(dir.path()).unwrap();
        let rec = store.create(Scene::default_study()).unwrap();
        let first = fs::read(store.path_of(rec.scene_id)).unwrap();
        let back = store.get(rec.scene_id).unwrap();
        assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&rec).unwrap());
        store.write(&back).unwrap();
        assert_eq!(fs::read(store.path_of(rec.scene_id)).unwrap(), first);
    }

    #[test]
    fn stale_revision_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = SceneStore::open(dir.path()).unwrap();
        let rec = store.create(Scene::default_study()).unwrap();
        let next = store.update(rec.scene_id, rec.scene.clone(), 1).unwrap();
        assert_eq!(next.revision, 2);
        assert_eq!(next.created_at, rec.created_at);
        let err = store.update(rec.scene_id, rec.scene.clone(), 1).unwrap_err();
        assert_eq!(err.code, ErrorCode::StaleRevision);
        assert_eq!(store.get(Uuid::new_v4()).unwrap_err().code, ErrorCode::NotFound);
    }

    #[test]
    fn invalid_scene_is_not_stored() {
        let dir = tempfile::tempdir().unwrap();
        let store = SceneStore::open(dir.path()).unwrap();
        let mut scene = Scene::default_study();
        scene.person_height = -1.0;
        assert_eq!(store.create(scene).unwrap_err().code, ErrorCode::Validation);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
