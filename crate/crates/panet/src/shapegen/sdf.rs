//! Signed-distance primitives and rotations.

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn length(v: Vec3) -> f64 {
    dot(v, v).sqrt()
}

pub fn normalize(v: Vec3) -> Vec3 {
    let l = length(v);
    [v[0] / l, v[1] / l, v[2] / l]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Unit quaternion (w, x, y, z) representing a rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn normalized(w: f64, x: f64, y: f64, z: f64) -> Quat {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Quat {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Quat {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotates a vector: v' = q v q*.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = [self.x, self.y, self.z];
        let uv = cross(u, v);
        let uuv = cross(u, uv);
        add(v, add(scale(uv, 2.0 * self.w), scale(uuv, 2.0)))
    }
}

/// Geometric primitive families, one per class plus a two-primitive composite.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Sphere { radius: f64 },
    Box3 { half: Vec3 },
    /// Upright capped cylinder: radius in the xz plane, half-height along y.
    Cylinder { radius: f64, half_height: f64 },
    /// Capped cone with base radius at y = -half_height tapering to a point.
    Cone { radius: f64, half_height: f64 },
    Torus { major: f64, minor: f64 },
    /// Box base with a sphere resting on top.
    Composite { half: Vec3, sphere_radius: f64 },
}

impl Primitive {
    /// Signed distance at a point in the primitive's local frame.
    pub fn distance(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Sphere { radius } => length(p) - radius,
            Primitive::Box3 { half } => sd_box(p, half),
            Primitive::Cylinder {
                radius,
                half_height,
            } => {
                let dx = (p[0] * p[0] + p[2] * p[2]).sqrt() - radius;
                let dy = p[1].abs() - half_height;
                let ox = dx.max(0.0);
                let oy = dy.max(0.0);
                dx.max(dy).min(0.0) + (ox * ox + oy * oy).sqrt()
            }
            Primitive::Cone {
                radius,
                half_height,
            } => sd_capped_cone(p, half_height, radius, 1e-3),
            Primitive::Torus { major, minor } => {
                let q = [(p[0] * p[0] + p[2] * p[2]).sqrt() - major, p[1]];
                (q[0] * q[0] + q[1] * q[1]).sqrt() - minor
            }
            Primitive::Composite {
                half,
                sphere_radius,
            } => {
                let base = sd_box(p, half);
                let center = [0.0, half[1] + 0.6 * sphere_radius, 0.0];
                let top = length([p[0] - center[0], p[1] - center[1], p[2] - center[2]])
                    - sphere_radius;
                base.min(top)
            }
        }
    }

    /// Radius of a bounding sphere around the origin.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box3 { half } => length(half),
            Primitive::Cylinder {
                radius,
                half_height,
            }
            | Primitive::Cone {
                radius,
                half_height,
            } => (radius * radius + half_height * half_height).sqrt(),
            Primitive::Torus { major, minor } => major + minor,
            Primitive::Composite {
                half,
                sphere_radius,
            } => length(half).max(half[1] + 1.6 * sphere_radius),
        }
    }
}

fn sd_box(p: Vec3, half: Vec3) -> f64 {
    let q = [
        p[0].abs() - half[0],
        p[1].abs() - half[1],
        p[2].abs() - half[2],
    ];
    let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
    length(outside) + q[0].max(q[1]).max(q[2]).min(0.0)
}

/// Capped cone spanning y in [-h, h], radius r1 at the base, r2 at the top.
fn sd_capped_cone(p: Vec3, h: f64, r1: f64, r2: f64) -> f64 {
    let q = [(p[0] * p[0] + p[2] * p[2]).sqrt(), p[1]];
    let k1 = [r2, h];
    let k2 = [r2 - r1, 2.0 * h];
    let ca = [
        q[0] - q[0].min(if q[1] < 0.0 { r1 } else { r2 }),
        q[1].abs() - h,
    ];
    let t = (((k1[0] - q[0]) * k2[0] + (k1[1] - q[1]) * k2[1])
        / (k2[0] * k2[0] + k2[1] * k2[1]))
        .clamp(0.0, 1.0);
    let cb = [q[0] - k1[0] + k2[0] * t, q[1] - k1[1] + k2[1] * t];
    let s = if cb[0] < 0.0 && ca[1] < 0.0 { -1.0 } else { 1.0 };
    s * (ca[0] * ca[0] + ca[1] * ca[1])
        .min(cb[0] * cb[0] + cb[1] * cb[1])
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_distance() {
        let s = Primitive::Sphere { radius: 1.0 };
        assert!((s.distance([2.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((s.distance([0.0, 0.0, 0.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_distance_outside_face() {
        let b = Primitive::Box3 {
            half: [0.5, 0.5, 0.5],
        };
        assert!((b.distance([1.5, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(b.distance([0.0, 0.0, 0.0]) < 0.0);
    }

    #[test]
    fn quaternion_rotation_preserves_length() {
        let q = Quat::normalized(0.3, -0.5, 0.7, 0.2);
        assert!((q.norm() - 1.0).abs() < 1e-12);
        let v = [1.0, 2.0, 3.0];
        let r = q.rotate(v);
        assert!((length(r) - length(v)).abs() < 1e-12);
    }

    #[test]
    fn identity_rotation_is_noop() {
        let v = [0.1, -0.2, 0.3];
        assert_eq!(Quat::IDENTITY.rotate(v), v);
    }
}
