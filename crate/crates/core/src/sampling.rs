//! Parametric solids, volumetric Poisson-disk sampling and neighbor spring
//! construction.

use nalgebra::{Isometry3, Point3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spring::SpringElement;
use crate::Vec3;

/// Solid primitives in their local frame. Cylinders and frusta run along
/// local +z; frusta start at `z = 0` with `base_radius` and end at
/// `z = length` with `top_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeKind {
    Box {
        half_extents: [f64; 3],
    },
    /// Box with a solid wall of the given thickness and an empty interior.
    BoxShell {
        half_extents: [f64; 3],
        wall: f64,
    },
    /// Centered on the origin.
    Cylinder {
        radius: f64,
        length: f64,
    },
    Frustum {
        base_radius: f64,
        top_radius: f64,
        length: f64,
    },
    HollowFrustum {
        outer_base_radius: f64,
        outer_top_radius: f64,
        inner_base_radius: f64,
        inner_top_radius: f64,
        length: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolidShape {
    pub kind: ShapeKind,
    pub pose: Isometry3<f64>,
}

impl SolidShape {
    pub fn new(kind: ShapeKind, pose: Isometry3<f64>) -> Result<Self> {
        let shape = Self { kind, pose };
        shape.validate()?;
        Ok(shape)
    }

    pub fn at_origin(kind: ShapeKind) -> Result<Self> {
        Self::new(kind, Isometry3::identity())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match &self.kind {
            ShapeKind::Box { half_extents } => half_extents.iter().try_for_each(|&h| positive("half_extents", h)),
            ShapeKind::BoxShell { half_extents, wall } => {
                half_extents.iter().try_for_each(|&h| positive("half_extents", h))?;
                positive("wall", *wall)
            }
            ShapeKind::Cylinder { radius, length } => {
                positive("radius", *radius)?;
                positive("length", *length)
            }
            ShapeKind::Frustum {
                base_radius,
                top_radius,
                length,
            } => {
                positive("base_radius", *base_radius)?;
                positive("top_radius", *top_radius)?;
                positive("length", *length)
            }
            ShapeKind::HollowFrustum {
                outer_base_radius,
                outer_top_radius,
                inner_base_radius,
                inner_top_radius,
                length,
            } => {
                positive("outer_base_radius", *outer_base_radius)?;
                positive("outer_top_radius", *outer_top_radius)?;
                positive("inner_base_radius", *inner_base_radius)?;
                positive("inner_top_radius", *inner_top_radius)?;
                positive("length", *length)?;
                // Linear radii: checking both ends covers the whole axis.
                if inner_base_radius >= outer_base_radius || inner_top_radius >= outer_top_radius {
                    return Err(Error::param(
                        "inner radius",
                        "must be below the outer radius along the axis",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Closed-set membership in the local frame.
    pub fn contains_local(&self, p: &Point3<f64>) -> bool {
        match &self.kind {
            ShapeKind::Box { half_extents: h } => p.x.abs() <= h[0] && p.y.abs() <= h[1] && p.z.abs() <= h[2],
            ShapeKind::BoxShell { half_extents: h, wall } => {
                let inside = p.x.abs() <= h[0] && p.y.abs() <= h[1] && p.z.abs() <= h[2];
                let core = p.x.abs() < h[0] - wall && p.y.abs() < h[1] - wall && p.z.abs() < h[2] - wall;
                inside && !core
            }
            ShapeKind::Cylinder { radius, length } => {
                p.z.abs() <= 0.5 * length && p.x * p.x + p.y * p.y <= radius * radius
            }
            ShapeKind::Frustum {
                base_radius,
                top_radius,
                length,
            } => {
                if p.z < 0.0 || p.z > *length {
                    return false;
                }
                let r = lerp(*base_radius, *top_radius, p.z / length);
                p.x * p.x + p.y * p.y <= r * r
            }
            ShapeKind::HollowFrustum {
                outer_base_radius,
                outer_top_radius,
                inner_base_radius,
                inner_top_radius,
                length,
            } => {
                if p.z < 0.0 || p.z > *length {
                    return false;
                }
                let t = p.z / length;
                let ro = lerp(*outer_base_radius, *outer_top_radius, t);
                let ri = lerp(*inner_base_radius, *inner_top_radius, t);
                let r2 = p.x * p.x + p.y * p.y;
                r2 <= ro * ro && r2 >= ri * ri
            }
        }
    }

    pub fn contains(&self, world: &Vec3) -> bool {
        let local = self.pose.inverse_transform_point(&Point3::from(*world));
        self.contains_local(&local)
    }

    /// Axis-aligned bounds in the local frame.
    pub fn local_bounds(&self) -> (Vec3, Vec3) {
        match &self.kind {
            ShapeKind::Box { half_extents: h } | ShapeKind::BoxShell { half_extents: h, .. } => {
                let h = Vec3::new(h[0], h[1], h[2]);
                (-h, h)
            }
            ShapeKind::Cylinder { radius, length } => (
                Vec3::new(-radius, -radius, -0.5 * length),
                Vec3::new(*radius, *radius, 0.5 * length),
            ),
            ShapeKind::Frustum {
                base_radius,
                top_radius,
                length,
            } => {
                let r = base_radius.max(*top_radius);
                (Vec3::new(-r, -r, 0.0), Vec3::new(r, r, *length))
            }
            ShapeKind::HollowFrustum {
                outer_base_radius,
                outer_top_radius,
                length,
                ..
            } => {
                let r = outer_base_radius.max(*outer_top_radius);
                (Vec3::new(-r, -r, 0.0), Vec3::new(r, r, *length))
            }
        }
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        let frustum = |r0: f64, r1: f64, l: f64| PI * l * (r0 * r0 + r0 * r1 + r1 * r1) / 3.0;
        match &self.kind {
            ShapeKind::Box { half_extents: h } => 8.0 * h[0] * h[1] * h[2],
            ShapeKind::BoxShell { half_extents: h, wall } => {
                let outer = 8.0 * h[0] * h[1] * h[2];
                let inner: f64 = h.iter().map(|x| (2.0 * (x - wall)).max(0.0)).product();
                outer - inner
            }
            ShapeKind::Cylinder { radius, length } => PI * radius * radius * length,
            ShapeKind::Frustum {
                base_radius,
                top_radius,
                length,
            } => frustum(*base_radius, *top_radius, *length),
            ShapeKind::HollowFrustum {
                outer_base_radius,
                outer_top_radius,
                inner_base_radius,
                inner_top_radius,
                length,
            } => {
                frustum(*outer_base_radius, *outer_top_radius, *length)
                    - frustum(*inner_base_radius, *inner_top_radius, *length)
            }
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledPart {
    pub points: Vec<Vec3>,
    pub source: SolidShape,
    pub sample_radius: f64,
    pub part_mass: f64,
}

impl SampledPart {
    pub fn point_mass(&self) -> f64 {
        self.part_mass / self.points.len() as f64
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_mass(mut self, part_mass: f64) -> Self {
        self.part_mass = part_mass;
        self
    }
}

/// Tuning for [`poisson_sample_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonParams {
    /// Dart throwing stops after this many consecutive spacing rejections.
    pub max_failures: usize,
    /// Spacing of the gap-filling candidate lattice, relative to the radius.
    pub fill_spacing: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            max_failures: 1000,
            fill_spacing: 0.25,
        }
    }
}

/// Uniform grid with cell edge just under `radius / sqrt(3)`, so a cell
/// normally holds a single accepted point.
struct SpacingGrid {
    origin: Vec3,
    inv_cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
    radius_sq: f64,
}

impl SpacingGrid {
    fn new(lo: Vec3, hi: Vec3, radius: f64) -> Self {
        let cell = 0.999 * radius / 3f64.sqrt();
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).max(1));
        Self {
            origin: lo,
            inv_cell: 1.0 / cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
            radius_sq: radius * radius,
        }
    }

    fn coord(&self, p: &Vec3) -> [isize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) * self.inv_cell).floor() as isize;
            c.clamp(0, self.dims[k] as isize - 1)
        })
    }

    fn index(&self, c: [isize; 3]) -> usize {
        (c[0] as usize * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize
    }

    fn accepts(&self, p: &Vec3, points: &[Vec3]) -> bool {
        let c = self.coord(p);
        for dx in -2..=2isize {
            for dy in -2..=2isize {
                for dz in -2..=2isize {
                    let n = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if (0..3).any(|k| n[k] < 0 || n[k] >= self.dims[k] as isize) {
                        continue;
                    }
                    for &slot in &self.cells[self.index(n)] {
                        if (points[slot as usize] - p).norm_squared() < self.radius_sq {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: &Vec3, id: usize) {
        let i = self.index(self.coord(p));
        self.cells[i].push(id as u32);
    }
}

pub fn poisson_sample(shape: &SolidShape, radius: f64, seed: u64) -> Result<SampledPart> {
    poisson_sample_with(shape, radius, seed, PoissonParams::default())
}

/// Seeded volumetric Poisson-disk sampling: dart throwing against a spatial
/// hash until `max_failures` consecutive rejections, then a pass over a
/// jittered candidate lattice in shuffled order that fills the remaining
/// gaps. Every point satisfies `shape.contains`, and all pairwise distances
/// are at least `radius`.
pub fn poisson_sample_with(shape: &SolidShape, radius: f64, seed: u64, params: PoissonParams) -> Result<SampledPart> {
    shape.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::param("radius", "must be finite and > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = shape.local_bounds();
    let part = |points| SampledPart {
        points,
        source: shape.clone(),
        sample_radius: radius,
        part_mass: 0.0,
    };

    // Only one point can ever fit.
    if radius > (hi - lo).norm() {
        let center = shape.pose.transform_point(&Point3::from((lo + hi) * 0.5)).coords;
        if shape.contains(&center) {
            return Ok(part(vec![center]));
        }
        for _ in 0..1_000_000 {
            let p = Point3::from(random_local(&lo, &hi, &mut rng));
            if shape.contains_local(&p) {
                return Ok(part(vec![shape.pose.transform_point(&p).coords]));
            }
        }
        return Ok(part(Vec::new()));
    }

    // Spacing and containment are tested in the local frame; the pose is
    // applied once at the end.
    let mut grid = SpacingGrid::new(lo, hi, radius);
    let mut points: Vec<Vec3> = Vec::new();

    // Outside-shape draws count against a separate budget so thin solids in
    // large boxes still terminate.
    let volume_ratio = (shape.volume() / (hi - lo).product()).clamp(1e-6, 1.0);
    let miss_budget = ((params.max_failures as f64 / volume_ratio) as usize).max(params.max_failures) * 4;
    let mut failures = 0;
    let mut misses = 0;
    while failures < params.max_failures && misses < miss_budget {
        let p = random_local(&lo, &hi, &mut rng);
        if !shape.contains_local(&Point3::from(p)) {
            misses += 1;
            continue;
        }
        misses = 0;
        if grid.accepts(&p, &points) {
            grid.insert(&p, points.len());
            points.push(p);
            failures = 0;
        } else {
            failures += 1;
        }
    }

    let h = radius * params.fill_spacing;
    let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / h).floor() as usize + 1);
    let mut candidates = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let jitter = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
                let local = lo + Vec3::new(i as f64, j as f64, k as f64) * h + jitter * h;
                candidates.push(local);
            }
        }
    }
    candidates.shuffle(&mut rng);
    for p in candidates {
        if shape.contains_local(&Point3::from(p)) && grid.accepts(&p, &points) {
            grid.insert(&p, points.len());
            points.push(p);
        }
    }
    Ok(part(
        points
            .iter()
            .map(|p| shape.pose.transform_point(&Point3::from(*p)).coords)
            .collect(),
    ))
}

fn random_local(lo: &Vec3, hi: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.random_range(lo.x..=hi.x),
        rng.random_range(lo.y..=hi.y),
        rng.random_range(lo.z..=hi.z),
    )
}

/// Springs produced by [`connect_springs`], with part-local endpoint indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringNetwork {
    pub springs: Vec<SpringElement>,
    /// Number of connected components among the points.
    pub components: usize,
}

impl SpringNetwork {
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }
}

/// One spring per unordered pair within `connect_radius`, ordered by
/// `(min_index, max_index)`, rest length equal to the current distance.
pub fn connect_springs(points: &[Vec3], connect_radius: f64, stiffness: f64, damping: f64) -> Result<SpringNetwork> {
    if !(connect_radius > 0.0) {
        return Err(Error::param("connect_radius", "must be > 0"));
    }
    if !(stiffness > 0.0) || !(damping >= 0.0) {
        return Err(Error::param("stiffness", "requires stiffness > 0 and damping >= 0"));
    }
    let pairs = neighbor_pairs(points, connect_radius);
    let springs: Vec<SpringElement> = pairs
        .iter()
        .map(|&(i, j)| SpringElement::new(i, j, (points[j] - points[i]).norm(), stiffness, damping))
        .collect();
    let components = connected_components(points.len(), pairs.iter().copied());
    if components > 1 {
        log::warn!(
            "spring network over {} points is disconnected ({} components)",
            points.len(),
            components
        );
    }
    Ok(SpringNetwork { springs, components })
}

/// Sorted `(i, j)` pairs with `i < j` and distance `<= radius`.
pub fn neighbor_pairs(points: &[Vec3], radius: f64) -> Vec<(usize, usize)> {
    use std::collections::HashMap;
    let inv = 1.0 / radius;
    let key = |p: &Vec3| {
        (
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let r2 = radius * radius;
    let mut pairs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bucket {
                            if j > i && (points[j] - p).norm_squared() <= r2 {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Union-find component count.
pub fn connected_components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for (a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}
