use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = a.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Position plus roll/pitch/yaw orientation (XYZRPY), meters and radians.
///
/// Rotation convention is fixed-axis X-Y-Z: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`,
/// which is what SDF `<pose>` elements use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "PoseRepr")]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

#[derive(Deserialize)]
struct PoseRepr {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    z: f64,
    #[serde(default)]
    roll: f64,
    #[serde(default)]
    pitch: f64,
    #[serde(default)]
    yaw: f64,
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose::new(r.x, r.y, r.z, r.roll, r.pitch, r.yaw)
    }
}

/// Row-major 3x3 rotation.
pub type Rot3 = [[f64; 3]; 3];

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Pose {
            x,
            y,
            z,
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        }
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Pose::new(x, y, 0.0, 0.0, 0.0, yaw)
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(x, y, z, 0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn xy(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn rotation(&self) -> Rot3 {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    }

    fn from_parts(p: [f64; 3], r: &Rot3) -> Self {
        let pitch = (-r[2][0]).atan2((r[0][0] * r[0][0] + r[1][0] * r[1][0]).sqrt());
        let yaw = r[1][0].atan2(r[0][0]);
        let roll = r[2][1].atan2(r[2][2]);
        Pose::new(p[0], p[1], p[2], roll, pitch, yaw)
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation();
        [
            self.x + r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            self.y + r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            self.z + r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    }

    /// `self ∘ other`: `other` is expressed in this pose's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let ra = self.rotation();
        let rb = other.rotation();
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| ra[i][k] * rb[k][j]).sum();
            }
        }
        Pose::from_parts(self.transform_point(other.position()), &r)
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation();
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = r[j][i];
            }
        }
        let p = self.position();
        let t = [
            -(rt[0][0] * p[0] + rt[0][1] * p[1] + rt[0][2] * p[2]),
            -(rt[1][0] * p[0] + rt[1][1] * p[1] + rt[1][2] * p[2]),
            -(rt[2][0] * p[0] + rt[2][1] * p[1] + rt[2][2] * p[2]),
        ];
        Pose::from_parts(t, &rt)
    }

    pub fn planar_distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}
