//! Spherical distance and campus polygon membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// A closed campus ring in lat/lon. Membership is evaluated in the planar
/// lat/lon chart, which is accurate at campus scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampusBoundary {
    vertices: Vec<LatLon>,
}

impl CampusBoundary {
    /// Accepts a ring with or without a repeated closing vertex.
    pub fn new(mut vertices: Vec<LatLon>) -> Result<Self> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Invalid(format!(
                "campus polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.lat.is_finite() || !v.lon.is_finite()) {
            return Err(Error::Invalid("campus polygon has non-finite vertex".into()));
        }
        if self_intersects(&vertices) {
            return Err(Error::Invalid("campus polygon is self-intersecting".into()));
        }
        Ok(CampusBoundary { vertices })
    }

    pub fn vertices(&self) -> &[LatLon] {
        &self.vertices
    }

    /// Winding-number test; a nonzero winding number means inside.
    pub fn contains(&self, p: LatLon) -> bool {
        let n = self.vertices.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let side = (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat);
            if a.lat <= p.lat {
                if b.lat > p.lat && side > 0.0 {
                    winding += 1;
                }
            } else if b.lat <= p.lat && side < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// Parses one ring: a JSON array of `[lat, lon]` pairs.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let pairs: Vec<[f64; 2]> = serde_json::from_str(line)?;
        Self::new(pairs.into_iter().map(|[lat, lon]| LatLon { lat, lon }).collect())
    }

    pub fn to_json_line(&self) -> String {
        let mut ring: Vec<[f64; 2]> = self.vertices.iter().map(|v| [v.lat, v.lon]).collect();
        ring.push(ring[0]);
        serde_json::to_string(&ring).expect("finite coordinates serialize")
    }
}

fn orient(a: LatLon, b: LatLon, c: LatLon) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn segments_cross(p1: LatLon, p2: LatLon, q1: LatLon, q2: LatLon) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn self_intersects(v: &[LatLon]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}
