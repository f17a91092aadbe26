//! Operator world model: ground plane, boxes, and the gaze cursor.
//!
//! All coordinates are in the headset convention (y up). The cursor and the
//! selection marker are registered as excluded objects so the gaze ray never
//! hits them; otherwise each update would land on the cursor's own near face
//! and walk it back to the camera.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

pub const DEFAULT_MAX_DIST: f64 = 10.0;
pub const CURSOR_HALF_SIZE: f64 = 0.05;
pub const MARKER_HALF_SIZE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("ray direction must be nonzero and finite")]
    BadDirection,
    #[error("box min {min:?} exceeds max {max:?}")]
    InvertedBox { min: Vec3, max: Vec3 },
    #[error("unknown object {0}")]
    UnknownObject(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub const GROUND: ObjectId = ObjectId(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SceneError> {
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(SceneError::InvertedBox { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn centered(center: Vec3, half: f64) -> Self {
        let h = Vec3::new(half, half, half);
        Self { min: center - h, max: center + h }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max).scale(0.5)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    /// Slab test. Returns the entry distance, or 0 when the origin is inside.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let o = ray.origin.to_array();
        let d = ray.dir.to_array();
        let lo = self.min.to_array();
        let hi = self.max.to_array();
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < lo[i] || o[i] > hi[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (mut t0, mut t1) = ((lo[i] - o[i]) * inv, (hi[i] - o[i]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
        }
        if t_exit < t_enter.max(0.0) {
            return None;
        }
        Some(t_enter.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Result<Self, SceneError> {
        let dir = dir.normalized().ok_or(SceneError::BadDirection)?;
        Ok(Self { origin, dir })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.scale(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub bounds: Aabb,
    /// Excluded objects are invisible to raycasts.
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub object: ObjectId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldMesh {
    pub ground_height: f64,
    objects: Vec<SceneObject>,
}

impl WorldMesh {
    pub fn new(ground_height: f64) -> Self {
        Self { ground_height, objects: Vec::new() }
    }

    pub fn add_box(&mut self, bounds: Aabb, excluded: bool) -> ObjectId {
        let id = ObjectId(self.objects.len() as u32 + 1);
        self.objects.push(SceneObject { id, bounds, excluded });
        id
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_mut(&mut self, id: ObjectId) -> Result<&mut SceneObject, SceneError> {
        self.objects.iter_mut().find(|o| o.id == id).ok_or(SceneError::UnknownObject(id.0))
    }

    pub fn move_object(&mut self, id: ObjectId, center: Vec3) -> Result<(), SceneError> {
        let obj = self.object_mut(id)?;
        let shift = center - obj.bounds.center();
        obj.bounds = Aabb { min: obj.bounds.min + shift, max: obj.bounds.max + shift };
        Ok(())
    }

    pub fn set_excluded(&mut self, id: ObjectId, excluded: bool) -> Result<(), SceneError> {
        self.object_mut(id)?.excluded = excluded;
        Ok(())
    }

    fn ground_hit(&self, ray: &Ray) -> Option<f64> {
        if ray.dir.y == 0.0 {
            return None;
        }
        let t = (self.ground_height - ray.origin.y) / ray.dir.y;
        (t >= 0.0).then_some(t)
    }

    /// Nearest hit within `max_dist` among the ground and non-excluded
    /// objects. Equal distances go to the lower object id.
    pub fn raycast(&self, ray: &Ray, max_dist: f64) -> Option<Hit> {
        let ground = self.ground_hit(ray).map(|t| (t, ObjectId::GROUND));
        let boxes = self.objects.iter().filter(|o| !o.excluded).filter_map(|o| o.bounds.intersect(ray).map(|t| (t, o.id)));
        ground
            .into_iter()
            .chain(boxes)
            .filter(|(t, _)| *t <= max_dist)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(t, object)| Hit { point: ray.at(t), object, distance: t })
    }
}

/// Gaze cursor bound to an object in the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Cursor {
    pub object: ObjectId,
    /// Current hit, used for publication.
    pub hit: Option<Vec3>,
    /// Last hit, kept for display after a miss.
    pub shown_at: Option<Vec3>,
    pub max_dist: f64,
}

impl Cursor {
    /// Registers the cursor in `mesh` with its collider turned off.
    pub fn register(mesh: &mut WorldMesh, max_dist: f64) -> Self {
        let object = mesh.add_box(Aabb::centered(Vec3::ZERO, CURSOR_HALF_SIZE), true);
        Self { object, hit: None, shown_at: None, max_dist }
    }

    pub fn update(&mut self, mesh: &mut WorldMesh, gaze: &Ray) -> Option<Vec3> {
        update_cursor(mesh, self, gaze)
    }
}

/// Moves the cursor to where the gaze meets the mesh. On a miss the cursor
/// has no position for publication but keeps its last one for display.
pub fn update_cursor(mesh: &mut WorldMesh, cursor: &mut Cursor, gaze: &Ray) -> Option<Vec3> {
    cursor.hit = mesh.raycast(gaze, cursor.max_dist).map(|h| h.point);
    if let Some(p) = cursor.hit {
        cursor.shown_at = Some(p);
        mesh.move_object(cursor.object, p).expect("cursor registered in this mesh");
    }
    cursor.hit
}
