//! Static 2D scenes: shapes, poses, exact ray casting and clearance queries.
//!
//! All queries are pure functions over an immutable [`WorldSpec`], so a world
//! can be shared freely between threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ray origin ({x}, {y}) lies outside the world bounds")]
    OriginOutsideBounds { x: f64, y: f64 },
    #[error("max range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("lidar needs at least two beams, got {0}")]
    TooFewBeams(usize),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid world `{name}`: {reason}")]
    InvalidWorld { name: String, reason: String },
}

/// A point (or free vector) in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T> From<[T; 2]> for Point<T> {
    fn from([x, y]: [T; 2]) -> Self {
        Self { x, y }
    }
}

impl<T> From<Point<T>> for [T; 2] {
    fn from(p: Point<T>) -> Self {
        [p.x, p.y]
    }
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: T, angle: T) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        self.sub(o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Aabb<T> {
    pub min: Point<T>,
    pub max: Point<T>,
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: Point<T>, max: Point<T>) -> Self {
        Self { min, max }
    }

    pub fn from_coords(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self::new(Point::new(x0, y0), Point::new(x1, y1))
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_aabb(&self, other: &Aabb<T>) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> T {
        self.width().hypot(self.height())
    }

    /// Euclidean distance from `p` to the solid box; zero inside.
    pub fn distance_to(&self, p: Point<T>) -> T {
        let zero = T::zero();
        let dx = (self.min.x - p.x).max(zero).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(zero).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    /// Distance from an interior point to the nearest wall of the box.
    fn interior_wall_distance(&self, p: Point<T>) -> T {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }
}

/// Obstacle primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum Shape<T> {
    Circle { center: Point<T>, radius: T },
    Rect { min: Point<T>, max: Point<T> },
    /// Infinitely thin wall.
    Segment { a: Point<T>, b: Point<T> },
}

impl<T: Scalar> Shape<T> {
    pub fn circle(center: Point<T>, radius: T) -> Result<Self, GeometryError> {
        Self::Circle { center, radius }.validated()
    }

    pub fn rect(min: Point<T>, max: Point<T>) -> Result<Self, GeometryError> {
        Self::Rect { min, max }.validated()
    }

    pub fn segment(a: Point<T>, b: Point<T>) -> Result<Self, GeometryError> {
        Self::Segment { a, b }.validated()
    }

    pub fn validated(self) -> Result<Self, GeometryError> {
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidShape(msg));
        match *self {
            Shape::Circle { center, radius } => {
                if !center.is_finite() || !(radius > T::zero()) || !radius.is_finite() {
                    return bad(format!("circle radius must be positive and finite, got {radius}"));
                }
            }
            Shape::Rect { min, max } => {
                if !Aabb::new(min, max).is_valid() {
                    return bad("rect min corner must be below max corner on both axes".into());
                }
            }
            Shape::Segment { a, b } => {
                if !a.is_finite() || !b.is_finite() || a == b {
                    return bad("segment endpoints must be finite and distinct".into());
                }
            }
        }
        Ok(())
    }

    /// Distance along the unit ray `origin + t * dir` (t >= 0) to this shape.
    ///
    /// Returns `Some(0)` when the origin is inside a solid shape.
    pub fn ray_hit(&self, origin: Point<T>, dir: Point<T>) -> Option<T> {
        let zero = T::zero();
        match *self {
            Shape::Circle { center, radius } => {
                let f = origin.sub(center);
                let b = f.dot(dir);
                let c = f.dot(f) - radius * radius;
                if c <= zero {
                    return Some(zero);
                }
                if b >= zero {
                    return None;
                }
                let disc = b * b - c;
                if disc < zero {
                    return None;
                }
                // Far root is cancellation-free; the near root follows from t1 * t2 = c.
                let far = -b + disc.sqrt();
                Some(c / far)
            }
            Shape::Rect { min, max } => {
                let bx = Aabb::new(min, max);
                if bx.contains(origin) {
                    return Some(zero);
                }
                let mut t_enter = T::neg_infinity();
                let mut t_exit = T::infinity();
                for (o, d, lo, hi) in [(origin.x, dir.x, min.x, max.x), (origin.y, dir.y, min.y, max.y)] {
                    if d == zero {
                        if o < lo || o > hi {
                            return None;
                        }
                    } else {
                        let t1 = (lo - o) / d;
                        let t2 = (hi - o) / d;
                        t_enter = t_enter.max(t1.min(t2));
                        t_exit = t_exit.min(t1.max(t2));
                    }
                }
                (t_enter <= t_exit && t_enter >= zero).then_some(t_enter)
            }
            Shape::Segment { a, b } => {
                let e = b.sub(a);
                let w = a.sub(origin);
                let denom = dir.cross(e);
                if denom != zero {
                    let t = w.cross(e) / denom;
                    let u = w.cross(dir) / denom;
                    (t >= zero && u >= zero && u <= T::one()).then_some(t)
                } else if w.cross(dir) == zero {
                    // Collinear: the ray meets the nearer endpoint ahead of it.
                    let ta = w.dot(dir);
                    let tb = b.sub(origin).dot(dir);
                    let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
                    if hi < zero {
                        None
                    } else {
                        Some(lo.max(zero))
                    }
                } else {
                    None
                }
            }
        }
    }

    /// Euclidean distance from `p` to the shape surface; zero inside solids.
    pub fn distance_to(&self, p: Point<T>) -> T {
        match *self {
            Shape::Circle { center, radius } => (p.distance(center) - radius).max(T::zero()),
            Shape::Rect { min, max } => Aabb::new(min, max).distance_to(p),
            Shape::Segment { a, b } => {
                let e = b.sub(a);
                let u = (p.sub(a).dot(e) / e.dot(e)).max(T::zero()).min(T::one());
                p.distance(a.add(e.scale(u)))
            }
        }
    }

    /// Closed point-in-solid test. Segments have no interior.
    pub fn contains(&self, p: Point<T>) -> bool {
        match *self {
            Shape::Circle { center, radius } => p.sub(center).dot(p.sub(center)) <= radius * radius,
            Shape::Rect { min, max } => Aabb::new(min, max).contains(p),
            Shape::Segment { .. } => false,
        }
    }

    pub fn translated(&self, v: Point<T>) -> Self {
        match *self {
            Shape::Circle { center, radius } => Shape::Circle { center: center.add(v), radius },
            Shape::Rect { min, max } => Shape::Rect { min: min.add(v), max: max.add(v) },
            Shape::Segment { a, b } => Shape::Segment { a: a.add(v), b: b.add(v) },
        }
    }
}

/// Planar robot pose; heading is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub heading: T,
}

impl<T: Scalar> Pose<T> {
    pub fn new(x: T, y: T, heading: T) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }

    pub fn position(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle<T: Scalar>(angle: T) -> T {
    let tau = T::TAU();
    let a = angle.rem_euclid(&tau);
    if a > T::PI() {
        a - tau
    } else {
        a
    }
}

/// Ray bearings are snapped to this lattice (2^-36 rad) after reduction modulo
/// a full turn, so bearings that differ by whole turns resolve to the same ray.
const BEARING_LATTICE: f64 = 68_719_476_736.0;

fn ray_direction<T: Scalar>(angle: T) -> Point<T> {
    let lattice = T::lit(BEARING_LATTICE);
    let reduced = angle.rem_euclid(&T::TAU());
    let snapped = (reduced * lattice).round() / lattice;
    Point::new(snapped.cos(), snapped.sin())
}

/// A static scene: obstacles inside a walled rectangular arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WorldSpec<T> {
    pub name: String,
    /// Outer walls; the interior is free space.
    pub bounds: Aabb<T>,
    pub spawn_region: Aabb<T>,
    pub goal_region: Aabb<T>,
    #[serde(default)]
    pub obstacles: Vec<Shape<T>>,
}

impl<T: Scalar> WorldSpec<T> {
    pub fn new(
        name: impl Into<String>,
        bounds: Aabb<T>,
        spawn_region: Aabb<T>,
        goal_region: Aabb<T>,
        obstacles: Vec<Shape<T>>,
    ) -> Result<Self, GeometryError> {
        let world = Self { name: name.into(), bounds, spawn_region, goal_region, obstacles };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |reason: &str| GeometryError::InvalidWorld { name: self.name.clone(), reason: reason.to_string() };
        if !self.bounds.is_valid() {
            return Err(invalid("bounds must be a non-degenerate rectangle"));
        }
        if !self.spawn_region.is_valid() || !self.bounds.contains_aabb(&self.spawn_region) {
            return Err(invalid("spawn region must be a rectangle inside the bounds"));
        }
        if !self.goal_region.is_valid() || !self.bounds.contains_aabb(&self.goal_region) {
            return Err(invalid("goal region must be a rectangle inside the bounds"));
        }
        for shape in &self.obstacles {
            shape.validate()?;
        }
        Ok(())
    }

    /// Length of the arena diagonal, used to normalize goal distances.
    pub fn diagonal(&self) -> T {
        self.bounds.diagonal()
    }

    pub fn translated(&self, v: Point<T>) -> Self {
        Self {
            name: self.name.clone(),
            bounds: Aabb::new(self.bounds.min.add(v), self.bounds.max.add(v)),
            spawn_region: Aabb::new(self.spawn_region.min.add(v), self.spawn_region.max.add(v)),
            goal_region: Aabb::new(self.goal_region.min.add(v), self.goal_region.max.add(v)),
            obstacles: self.obstacles.iter().map(|s| s.translated(v)).collect(),
        }
    }

    fn check_origin(&self, origin: Point<T>) -> Result<(), GeometryError> {
        if self.bounds.contains(origin) {
            Ok(())
        } else {
            Err(GeometryError::OriginOutsideBounds { x: origin.x.as_f64(), y: origin.y.as_f64() })
        }
    }

    /// Distance from `origin` to the first surface along `angle`, clamped to `max_range`.
    pub fn raycast(&self, origin: Point<T>, angle: T, max_range: T) -> Result<T, GeometryError> {
        if !(max_range > T::zero()) {
            return Err(GeometryError::NonPositiveRange(max_range.as_f64()));
        }
        self.check_origin(origin)?;
        let dir = ray_direction(angle);
        let zero = T::zero();
        let wall = |o: T, d: T, lo: T, hi: T| {
            if d > zero {
                (hi - o) / d
            } else if d < zero {
                (lo - o) / d
            } else {
                T::infinity()
            }
        };
        let b = &self.bounds;
        let mut best = wall(origin.x, dir.x, b.min.x, b.max.x).min(wall(origin.y, dir.y, b.min.y, b.max.y));
        for shape in &self.obstacles {
            if let Some(t) = shape.ray_hit(origin, dir) {
                best = best.min(t);
            }
        }
        Ok(best.min(max_range))
    }

    /// Endpoint-inclusive fan of `n_beams` rays spanning `fov`, centred on the heading.
    pub fn lidar_scan(&self, pose: &Pose<T>, n_beams: usize, fov: T, max_range: T) -> Result<Vec<T>, GeometryError> {
        if n_beams < 2 {
            return Err(GeometryError::TooFewBeams(n_beams));
        }
        let origin = pose.position();
        (0..n_beams)
            .map(|i| self.raycast(origin, pose.heading + beam_angle(i, n_beams, fov), max_range))
            .collect()
    }

    /// Distance from `p` to the nearest obstacle or wall surface; zero inside an obstacle.
    pub fn min_clearance(&self, p: Point<T>) -> T {
        let walls = if self.bounds.contains(p) { self.bounds.interior_wall_distance(p) } else { T::zero() };
        self.obstacles.iter().fold(walls, |acc, s| acc.min(s.distance_to(p)))
    }

    /// True when `p` lies inside a solid obstacle or outside the bounds.
    pub fn is_blocked(&self, p: Point<T>) -> bool {
        !self.bounds.contains(p) || self.obstacles.iter().any(|s| s.contains(p))
    }
}

/// Body-frame angle of beam `i` in an endpoint-inclusive fan.
pub fn beam_angle<T: Scalar>(i: usize, n_beams: usize, fov: T) -> T {
    let step = fov / T::lit((n_beams - 1) as f64);
    -fov / T::two() + T::lit(i as f64) * step
}
