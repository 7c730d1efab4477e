//! DBSCAN on the unit sphere with great-circle distance in degrees.

use std::collections::VecDeque;

use crate::geometry::UnitVec3;

pub const NOISE: i32 = -1;

fn neighbours(points: &[UnitVec3], i: usize, eps_deg: f64) -> Vec<usize> {
    (0..points.len())
        .filter(|&j| points[i].angle_to(&points[j]) <= eps_deg)
        .collect()
}

/// Cluster labels `0, 1, ...` in order of each cluster's first core point;
/// `NOISE` for unclustered points.
///
/// A point's neighbourhood includes the point itself, so `min_pts = 1` makes
/// every point a core point. Core points are expanded in index order and a
/// border point reachable from several clusters joins the first one found.
pub fn dbscan_sphere(points: &[UnitVec3], eps_deg: f64, min_pts: usize) -> Vec<i32> {
    const UNSEEN: i32 = -2;
    let mut labels = vec![UNSEEN; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if labels[i] != UNSEEN {
            continue;
        }
        let nbrs = neighbours(points, i, eps_deg);
        if nbrs.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = nbrs.into_iter().filter(|&j| j != i).collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster;
            }
            if labels[q] != UNSEEN {
                continue;
            }
            labels[q] = cluster;
            let q_nbrs = neighbours(points, q, eps_deg);
            if q_nbrs.len() >= min_pts {
                queue.extend(q_nbrs);
            }
        }
    }
    labels
}
