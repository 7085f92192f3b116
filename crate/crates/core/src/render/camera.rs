use serde::{Deserialize, Serialize};

use crate::Error;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn normalize(v: Vec3) -> Vec3 {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

impl Intrinsics {
    pub fn new(width: usize, height: usize, focal: f64) -> Result<Self, Error> {
        if width == 0 || height == 0 || !(focal.is_finite() && focal > 0.0) {
            return Err(Error::Invalid(format!(
                "intrinsics need positive size and focal, got {width}x{height}, f={focal}"
            )));
        }
        Ok(Self { width, height, focal })
    }

    /// `focal = 0.5·W / tan(0.5·camera_angle_x)`.
    pub fn from_camera_angle(width: usize, height: usize, camera_angle_x: f64) -> Result<Self, Error> {
        if !(camera_angle_x > 0.0 && camera_angle_x < std::f64::consts::PI) {
            return Err(Error::Invalid(format!("camera_angle_x {camera_angle_x} outside (0, π)")));
        }
        Self::new(width, height, 0.5 * width as f64 / (0.5 * camera_angle_x).tan())
    }

    pub fn camera_angle_x(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.focal).atan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Camera-to-world rigid transform. The camera looks down its local −z
/// axis with +y up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    rotation: [Vec3; 3],
    translation: Vec3,
}

pub const RIGID_TOLERANCE: f64 = 1e-6;

impl CameraPose {
    pub fn new(rotation: [Vec3; 3], translation: Vec3) -> Result<Self, Error> {
        if rotation.iter().flatten().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("pose has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let col = |k: usize| [rotation[0][k], rotation[1][k], rotation[2][k]];
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot(col(i), col(j)) - expected).abs() > RIGID_TOLERANCE {
                    return Err(Error::Invalid("pose rotation is not orthonormal".into()));
                }
            }
        }
        let det = dot(rotation[0], cross(rotation[1], rotation[2]));
        if (det - 1.0).abs() > RIGID_TOLERANCE {
            return Err(Error::Invalid(format!("pose rotation has determinant {det}")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// From a row-major 4×4 homogeneous matrix with last row `(0, 0, 0, 1)`.
    pub fn from_matrix(m: &[Vec<f64>]) -> Result<Self, Error> {
        if m.len() != 4 || m.iter().any(|r| r.len() != 4) {
            return Err(Error::Invalid("transform_matrix must be 4x4".into()));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Invalid(format!("transform_matrix last row is {:?}", m[3])));
        }
        let r = |i: usize| [m[i][0], m[i][1], m[i][2]];
        Self::new([r(0), r(1), r(2)], [m[0][3], m[1][3], m[2][3]])
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut r = self.rotation[i].to_vec();
                r.push(self.translation[i]);
                r
            })
            .collect();
        rows.push(vec![0.0, 0.0, 0.0, 1.0]);
        rows
    }

    /// Camera at `eye` looking at `target`, with `up` resolving the roll.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self, Error> {
        let back = normalize([eye[0] - target[0], eye[1] - target[1], eye[2] - target[2]]);
        let side = cross(up, back);
        if dot(side, side) < 1e-20 {
            return Err(Error::Invalid("look_at: up is parallel to the view direction".into()));
        }
        let right = normalize(side);
        let true_up = cross(back, right);
        let rotation = [
            [right[0], true_up[0], back[0]],
            [right[1], true_up[1], back[1]],
            [right[2], true_up[2], back[2]],
        ];
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> [Vec3; 3] {
        self.rotation
    }

    pub fn origin(&self) -> Vec3 {
        self.translation
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        [dot(self.rotation[0], v), dot(self.rotation[1], v), dot(self.rotation[2], v)]
    }

    /// World-space viewing direction (the camera's −z axis).
    pub fn forward(&self) -> Vec3 {
        self.rotate([0.0, 0.0, -1.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }
}

/// Ray through continuous pixel coordinate `(px, py)`; integer coordinates
/// address pixel corners, so `+0.5` hits the centre. Coordinates outside
/// the image are allowed.
pub fn pixel_ray(pose: &CameraPose, intr: &Intrinsics, px: f64, py: f64, t_near: f64, t_far: f64) -> Ray {
    let cam = [
        (px + 0.5 - 0.5 * intr.width as f64) / intr.focal,
        -(py + 0.5 - 0.5 * intr.height as f64) / intr.focal,
        -1.0,
    ];
    Ray {
        origin: pose.origin(),
        direction: normalize(pose.rotate(cam)),
        t_near,
        t_far,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blender_focal() {
        let intr = Intrinsics::from_camera_angle(800, 800, 0.6911112).unwrap();
        assert!((intr.focal - 1111.111).abs() < 1e-3);
        assert!((intr.camera_angle_x() - 0.6911112).abs() < 1e-12);
        assert!(Intrinsics::new(0, 4, 1.0).is_err());
    }

    #[test]
    fn centre_pixel_looks_down_minus_z() {
        let intr = Intrinsics::new(4, 6, 3.0).unwrap();
        let ray = pixel_ray(&CameraPose::identity(), &intr, 1.5, 2.5, 0.0, 1.0);
        assert_eq!(ray.direction, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn origin_is_translation_and_off_image_rays_are_unit() {
        let pose = CameraPose::look_at([1.0, 2.0, 3.0], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        let intr = Intrinsics::new(8, 8, 10.0).unwrap();
        for (px, py) in [(0.0, 0.0), (-4.0, 3.0), (11.9, -4.0), (7.0, 7.0)] {
            let r = pixel_ray(&pose, &intr, px, py, 0.5, 6.0);
            assert_eq!(r.origin, [1.0, 2.0, 3.0]);
            assert!(r.direction.iter().all(|v| v.is_finite()));
            assert!((dot(r.direction, r.direction).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn image_up_is_world_up_for_identity() {
        let intr = Intrinsics::new(10, 10, 5.0).unwrap();
        let top = pixel_ray(&CameraPose::identity(), &intr, 4.5, 0.0, 0.0, 1.0);
        assert!(top.direction[1] > 0.0);
        let right = pixel_ray(&CameraPose::identity(), &intr, 9.0, 4.5, 0.0, 1.0);
        assert!(right.direction[0] > 0.0);
    }

    #[test]
    fn look_at_points_minus_z_at_target() {
        let pose = CameraPose::look_at([0.0, -3.0, 1.0], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        let f = pose.forward();
        let want = normalize([0.0, 3.0, -1.0]);
        for k in 0..3 {
            assert!((f[k] - want[k]).abs() < 1e-12);
        }
        assert!(CameraPose::look_at([0.0, 0.0, 3.0], [0.0; 3], [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_non_rigid() {
        let scaled = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraPose::new(scaled, [0.0; 3]).is_err());
        let mirrored = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraPose::new(mirrored, [0.0; 3]).is_err());
        let m = vec![vec![1.0, 0.0, 0.0, 0.0]; 3];
        assert!(CameraPose::from_matrix(&m).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let pose = CameraPose::look_at([0.3, -2.0, 1.7], [0.1, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(CameraPose::from_matrix(&pose.to_matrix()).unwrap(), pose);
    }
}
