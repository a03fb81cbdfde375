//! Named systems and analytic reference sets used by the shipped scenes.

use std::f64::consts::{PI, TAU};

use crate::error::{usage, Result};
use crate::ifs::{FiniteSet, IfsSpec, MapSpec};
use crate::spaces::Space;

fn scaled_shift(scale: f64, offset: [f64; 2]) -> MapSpec {
    MapSpec::Affine { matrix: vec![scale, 0.0, 0.0, scale], offset: offset.to_vec() }
}

/// Three half-scale maps onto the corners of the unit-side triangle.
pub fn sierpinski() -> IfsSpec {
    let maps = [[0.0, 0.0], [0.5, 0.0], [0.25, 0.25 * 3f64.sqrt()]].into_iter().map(|v| scaled_shift(0.5, v)).collect();
    IfsSpec::new(Space::euclidean(2), maps, "sierpinski").expect("valid preset")
}

/// The single map `x -> x / 2` on the plane.
pub fn halving() -> IfsSpec {
    IfsSpec::new(Space::euclidean(2), vec![scaled_shift(0.5, [0.0, 0.0])], "halving").expect("valid preset")
}

/// Identity and rotation by `alpha` on the unit circle.
pub fn circle_rotation(alpha: f64) -> IfsSpec {
    IfsSpec::new(Space::Circle, vec![MapSpec::Identity, MapSpec::Rotation2 { alpha }], "circle").expect("valid preset")
}

/// `diag(1, 2, 2)` and the same scaling composed with a rotation by `alpha`
/// of the `(y, z)` plane, acting on homogeneous coordinates.
pub fn projective_pair(alpha: f64) -> IfsSpec {
    let (s, c) = alpha.sin_cos();
    let maps = vec![
        MapSpec::Projective3x3 { matrix: [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0] },
        MapSpec::Projective3x3 { matrix: [1.0, 0.0, 0.0, 0.0, 2.0 * c, -2.0 * s, 0.0, 2.0 * s, 2.0 * c] },
    ];
    IfsSpec::new(Space::Projective2, maps, "projective").expect("valid preset")
}

fn line_map(scale: f64, offset: f64) -> MapSpec {
    MapSpec::Affine { matrix: vec![scale], offset: vec![offset] }
}

/// `{x/2, x/2 + 1/2}` on the line; its attractor is `[0, 1]`.
pub fn interval_halves() -> IfsSpec {
    IfsSpec::new(Space::euclidean(1), vec![line_map(0.5, 0.0), line_map(0.5, 0.5)], "halves").expect("valid preset")
}

/// `{x/3, x/3 + 2/3}` on the line; its attractor is the middle-thirds Cantor set.
pub fn cantor() -> IfsSpec {
    IfsSpec::new(Space::euclidean(1), vec![line_map(1.0 / 3.0, 0.0), line_map(1.0 / 3.0, 2.0 / 3.0)], "cantor")
        .expect("valid preset")
}

/// `n` equally spaced points of the unit circle.
pub fn circle_net(n: usize) -> FiniteSet {
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            [a.cos(), a.sin()]
        })
        .collect();
    FiniteSet::new(Space::Circle, &pts, 0.0).expect("nonempty net")
}

/// `n` equally spaced points of the projective line `x = 0`.
pub fn projective_line_net(n: usize) -> FiniteSet {
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let a = PI * i as f64 / n as f64;
            [0.0, a.cos(), a.sin()]
        })
        .collect();
    FiniteSet::new(Space::Projective2, &pts, 0.0).expect("nonempty net")
}

/// The origin of `R^dim`.
pub fn origin(dim: usize) -> FiniteSet {
    FiniteSet::new(Space::euclidean(dim), &[vec![0.0; dim]], 0.0).expect("nonempty")
}

/// Analytic reference sets by name, as used in scene files.
pub fn analytic_reference(name: &str, points: usize, space: Space) -> Result<FiniteSet> {
    match (name, space) {
        ("circle-net", Space::Circle) => Ok(circle_net(points)),
        ("projective-line-x0", Space::Projective2) => Ok(projective_line_net(points)),
        ("origin", Space::Euclidean { dim }) => Ok(origin(dim)),
        _ => usage(format!("no analytic reference {name:?} for {space} scenes")),
    }
}
