//! Attack reachable domains: the image of the feasible attack set under the
//! first-order eigenvalue drift, its boundary by projected ascent, and the
//! attack penetration index.

mod api;
mod ascent;
mod attack_set;
mod cloud;

pub use api::{bus_report, compute_api, ApiBranch, ApiResult, BusApiReport, DEFAULT_GAMMA, DEFAULT_GRID_RESOLUTION};
pub use ascent::{boundary_ascent, boundary_ascent_report, trace_boundary, AscentConfig, AscentReport, MIN_DIRECTIONS};
pub use attack_set::{is_feasible, project, stealth_distances, AttackBox, FeasibleAttackSet, StealthModel};
pub use cloud::{draw_attacks, drift, sample_ard, ArdCloud, ArdSample, DriftMap, MIN_CLOUD_DRAWS};

use crate::linalg::C64;

/// Area of the convex hull of points in the complex plane.
pub fn hull_area(points: &[C64]) -> f64 {
    let mut p: Vec<(f64, f64)> = points.iter().map(|z| (z.re, z.im)).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        * 0.5
}
