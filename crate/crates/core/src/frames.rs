//! Anchor registry and frame tree.
//!
//! The headset and the robot each keep their own [`FrameTree`]. The only
//! fixture they share is an anchor: the headset creates it, the robot looks it
//! up by id in the [`AnchorRegistry`] (a local stand-in for the cloud anchor
//! service) and hangs it off its own world frame.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{compose, convert_transform, invert, Convention, GeometryError, Quat, Transform, Vec3};

pub const WORLD: &str = "world";
pub const DEFAULT_DEDUP_RADIUS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FramesError {
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("anchor not found: {0}")]
    AnchorNotFound(String),
    #[error("frame id must be nonempty")]
    EmptyFrameId,
    #[error("inserting '{child}' under '{parent}' would create a cycle")]
    Cycle { parent: String, child: String },
    #[error("the root frame cannot be re-parented")]
    RootReparent,
    #[error("anchor store line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FrameId(String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Result<Self, FramesError> {
        let name = name.into();
        if name.is_empty() {
            return Err(FramesError::EmptyFrameId);
        }
        Ok(FrameId(name))
    }

    pub fn world() -> Self {
        FrameId(WORLD.to_owned())
    }

    pub fn anchor(id: &str) -> Self {
        FrameId(format!("anchor:{id}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for FrameId {
    type Error = FramesError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        FrameId::new(s)
    }
}

impl From<FrameId> for String {
    fn from(f: FrameId) -> Self {
        f.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub id: String,
    /// Pose of the anchor in the owner's world frame, ROS convention.
    pub world_pose: Transform,
    /// Simulated seconds at creation. Process-local: not written to the store.
    pub created_at: f64,
}

/// Parent-child transform graph rooted at `world`.
#[derive(Debug, Clone)]
pub struct FrameTree {
    // child -> (parent, pose of child in parent)
    edges: HashMap<FrameId, (FrameId, Transform)>,
    convention: Convention,
}

impl FrameTree {
    pub fn new(convention: Convention) -> Self {
        Self { edges: HashMap::new(), convention }
    }

    pub fn contains(&self, frame: &FrameId) -> bool {
        frame.as_str() == WORLD || self.edges.contains_key(frame)
    }

    pub fn len(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parent(&self, frame: &FrameId) -> Option<&FrameId> {
        self.edges.get(frame).map(|(p, _)| p)
    }

    /// Inserts or re-parents `child` under `parent`. Rejects anything that
    /// would close a loop.
    pub fn set(&mut self, parent: &FrameId, child: &FrameId, pose: Transform) -> Result<(), FramesError> {
        if child.as_str() == WORLD {
            return Err(FramesError::RootReparent);
        }
        if !self.contains(parent) {
            return Err(FramesError::UnknownFrame(parent.to_string()));
        }
        // parent must not be child itself or one of child's descendants
        let mut cursor = Some(parent.clone());
        while let Some(f) = cursor {
            if &f == child {
                return Err(FramesError::Cycle { parent: parent.to_string(), child: child.to_string() });
            }
            cursor = self.parent(&f).cloned();
        }
        let pose = convert_transform(&pose, self.convention);
        self.edges.insert(child.clone(), (parent.clone(), pose));
        Ok(())
    }

    /// Pose of `frame` in the root.
    fn root_pose(&self, frame: &FrameId) -> Result<Transform, FramesError> {
        if !self.contains(frame) {
            return Err(FramesError::UnknownFrame(frame.to_string()));
        }
        let mut chain = Vec::new();
        let mut cursor = frame;
        while let Some((parent, pose)) = self.edges.get(cursor) {
            chain.push(pose);
            cursor = parent;
        }
        let mut acc = Transform::identity(self.convention);
        for pose in chain.iter().rev() {
            acc = compose(&acc, pose)?;
        }
        Ok(acc)
    }

    /// Pose of `to` expressed in `from`.
    pub fn lookup(&self, from: &FrameId, to: &FrameId) -> Result<Transform, FramesError> {
        if from == to {
            if !self.contains(from) {
                return Err(FramesError::UnknownFrame(from.to_string()));
            }
            return Ok(Transform::identity(self.convention));
        }
        let root_from = self.root_pose(from)?;
        let root_to = self.root_pose(to)?;
        Ok(compose(&invert(&root_from), &root_to)?)
    }
}

/// Local emulation of the anchor service. Records are kept in creation order.
#[derive(Debug)]
pub struct AnchorRegistry {
    records: Vec<AnchorRecord>,
    dedup_radius: f64,
    ids: ChaCha8Rng,
}

pub type SharedRegistry = Arc<RwLock<AnchorRegistry>>;

impl Default for AnchorRegistry {
    fn default() -> Self {
        Self::new(DEFAULT_DEDUP_RADIUS)
    }
}

impl AnchorRegistry {
    pub fn new(dedup_radius: f64) -> Self {
        Self { records: Vec::new(), dedup_radius, ids: ChaCha8Rng::from_entropy() }
    }

    /// Registry whose generated anchor ids are a pure function of `seed`.
    pub fn with_seed(dedup_radius: f64, seed: u64) -> Self {
        Self { records: Vec::new(), dedup_radius, ids: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn dedup_radius(&self) -> f64 {
        self.dedup_radius
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AnchorRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&AnchorRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Returns the nearest existing anchor within the dedup radius of the
    /// desired position, or creates a new one there. The flag is `true` when
    /// a record was created.
    pub fn create_anchor(&mut self, desired_world_pose: &Transform, created_at: f64) -> (AnchorRecord, bool) {
        let pose = convert_transform(desired_world_pose, Convention::RosRhZup);
        let nearest = self
            .records
            .iter()
            .map(|r| (r.world_pose.pos.distance(pose.pos), r))
            .filter(|(d, _)| *d <= self.dedup_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, existing)) = nearest {
            return (existing.clone(), false);
        }
        let mut bytes = [0u8; 16];
        self.ids.fill_bytes(&mut bytes);
        let id = uuid::Builder::from_random_bytes(bytes).into_uuid().to_string();
        let record = AnchorRecord { id, world_pose: pose, created_at };
        self.records.push(record.clone());
        (record, true)
    }

    /// Stores a record under a caller-chosen id, replacing any previous one.
    pub fn insert(&mut self, record: AnchorRecord) {
        match self.records.iter_mut().find(|r| r.id == record.id) {
            Some(slot) => *slot = record,
            None => self.records.push(record),
        }
    }

    pub fn to_store_string(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let p = r.world_pose.pos;
            let q = r.world_pose.rot;
            out.push_str(&r.id);
            for v in [p.x, p.y, p.z, q.x, q.y, q.z, q.w] {
                out.push(' ');
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_store(text: &str, dedup_radius: f64) -> Result<Self, FramesError> {
        let mut registry = Self::new(dedup_radius);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| FramesError::Parse { line: i + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
            }
            let mut v = [0.0; 7];
            for (slot, field) in v.iter_mut().zip(&fields[1..]) {
                *slot = field.parse().map_err(|e| parse_err(format!("'{field}': {e}")))?;
            }
            registry.records.push(AnchorRecord {
                id: fields[0].to_owned(),
                world_pose: Transform {
                    pos: Vec3::new(v[0], v[1], v[2]),
                    rot: Quat { x: v[3], y: v[4], z: v[5], w: v[6] },
                    convention: Convention::RosRhZup,
                },
                created_at: 0.0,
            });
        }
        Ok(registry)
    }

    pub fn save(&self, path: &Path) -> Result<(), FramesError> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(self.to_store_string().as_bytes())?;
        f.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, dedup_radius: f64) -> Result<Self, FramesError> {
        Self::parse_store(&fs::read_to_string(path)?, dedup_radius)
    }
}

/// Resolves `id` and makes sure the tree has an `anchor:<id>` frame under world.
pub fn query_anchor(registry: &AnchorRegistry, tree: &mut FrameTree, id: &str) -> Result<AnchorRecord, FramesError> {
    query_anchor_with_error(registry, tree, id, None)
}

/// Like [`query_anchor`], but the tree receives `error ∘ world_pose`: a rigid
/// misbelief of where the anchor sits, for co-localization error testing.
pub fn query_anchor_with_error(
    registry: &AnchorRegistry,
    tree: &mut FrameTree,
    id: &str,
    error: Option<&Transform>,
) -> Result<AnchorRecord, FramesError> {
    let mut record = registry.get(id).cloned().ok_or_else(|| FramesError::AnchorNotFound(id.to_owned()))?;
    if let Some(err) = error {
        record.world_pose = compose(&convert_transform(err, Convention::RosRhZup), &record.world_pose)?;
    }
    let frame = FrameId::anchor(id);
    if !tree.contains(&frame) {
        tree.set(&FrameId::world(), &frame, record.world_pose)?;
    }
    Ok(record)
}

/// Expresses a world point in the anchor's local frame.
pub fn to_anchor_local(anchor: &AnchorRecord, world_point: Vec3) -> Vec3 {
    invert(&anchor.world_pose).apply_point(world_point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64, z: f64) -> Transform {
        Transform::from_translation(Vec3::new(x, y, z), Convention::RosRhZup)
    }

    #[test]
    fn anchors_dedup_within_radius() {
        let mut reg = AnchorRegistry::with_seed(DEFAULT_DEDUP_RADIUS, 1);
        let (first, created) = reg.create_anchor(&at(0.0, 0.0, 0.0), 0.0);
        assert!(created);
        let (again, created) = reg.create_anchor(&at(0.1, 0.0, 0.0), 1.0);
        assert!(!created);
        assert_eq!(again, first);
        assert_eq!(reg.len(), 1);
        let (_, created) = reg.create_anchor(&at(1.0, 0.0, 0.0), 2.0);
        assert!(created);
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn seeded_ids_are_reproducible() {
        let mut a = AnchorRegistry::with_seed(0.5, 9);
        let mut b = AnchorRegistry::with_seed(0.5, 9);
        assert_eq!(a.create_anchor(&at(0.0, 0.0, 0.0), 0.0).0.id, b.create_anchor(&at(0.0, 0.0, 0.0), 0.0).0.id);
    }

    #[test]
    fn query_is_idempotent_on_tree() {
        let mut reg = AnchorRegistry::with_seed(0.5, 2);
        let (rec, _) = reg.create_anchor(&at(2.0, 0.0, 0.0), 0.0);
        let mut tree = FrameTree::new(Convention::RosRhZup);
        query_anchor(&reg, &mut tree, &rec.id).unwrap();
        query_anchor(&reg, &mut tree, &rec.id).unwrap();
        assert_eq!(tree.len(), 2);
        assert!(matches!(query_anchor(&reg, &mut tree, "nope"), Err(FramesError::AnchorNotFound(_))));
    }

    #[test]
    fn lookup_chain_and_inverse() {
        let mut tree = FrameTree::new(Convention::RosRhZup);
        let anchor = FrameId::new("anchor:a").unwrap();
        let body = FrameId::new("body").unwrap();
        tree.set(&FrameId::world(), &anchor, at(1.0, 0.0, 0.0)).unwrap();
        tree.set(&anchor, &body, at(0.0, 1.0, 0.0)).unwrap();
        let wb = tree.lookup(&FrameId::world(), &body).unwrap();
        assert!(wb.pos.distance(Vec3::new(1.0, 1.0, 0.0)) < 1e-12);
        let bw = tree.lookup(&body, &FrameId::world()).unwrap();
        assert!(bw.pos.distance(Vec3::new(-1.0, -1.0, 0.0)) < 1e-12);
        assert_eq!(tree.lookup(&FrameId::world(), &FrameId::world()).unwrap().pos, Vec3::ZERO);
        assert!(tree.lookup(&body, &FrameId::new("hand").unwrap()).is_err());
    }

    #[test]
    fn cycles_are_rejected() {
        let mut tree = FrameTree::new(Convention::RosRhZup);
        let a = FrameId::new("a").unwrap();
        let b = FrameId::new("b").unwrap();
        tree.set(&FrameId::world(), &a, at(1.0, 0.0, 0.0)).unwrap();
        tree.set(&a, &b, at(1.0, 0.0, 0.0)).unwrap();
        assert!(matches!(tree.set(&b, &a, at(0.0, 0.0, 0.0)), Err(FramesError::Cycle { .. })));
        assert!(matches!(tree.set(&a, &a, at(0.0, 0.0, 0.0)), Err(FramesError::Cycle { .. })));
        assert!(matches!(tree.set(&a, &FrameId::world(), at(0.0, 0.0, 0.0)), Err(FramesError::RootReparent)));
        assert!(FrameId::new("").is_err());
    }

    #[test]
    fn anchor_local_coincident_point() {
        let rec = AnchorRecord { id: "x".into(), world_pose: at(1.0, 0.0, 0.0), created_at: 0.0 };
        assert_eq!(to_anchor_local(&rec, Vec3::new(1.0, 0.0, 0.0)), Vec3::ZERO);
    }

    #[test]
    fn store_rejects_malformed_lines() {
        let err = AnchorRegistry::parse_store("# header\nabc 1 2 3\n", 0.5).unwrap_err();
        assert!(matches!(err, FramesError::Parse { line: 2, .. }));
        let err = AnchorRegistry::parse_store("abc 1 2 3 0 0 0 x\n", 0.5).unwrap_err();
        assert!(matches!(err, FramesError::Parse { line: 1, .. }));
    }
}
