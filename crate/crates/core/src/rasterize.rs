//! Polygon rasterization into multi-class label maps and boundary-contour
//! extraction for surface-distance evaluation.
//!
//! A pixel belongs to a polygon iff its center (x+0.5, y+0.5) is inside
//! under the even-odd rule. Overlapping structures resolve by a fixed
//! z-order, fatty < fibroglandular < pectoral < nipple, later wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassId, LabelMap};

/// Closed annotation contour; vertices are real pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub class: ClassId,
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(class: ClassId, vertices: Vec<(f64, f64)>) -> Result<Polygon> {
        if class == ClassId::Background {
            return Err(Error::invalid("polygons cannot carry the background class"));
        }
        if vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        Ok(Polygon { class, vertices })
    }
}

/// Boundary pixels of one structure, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub class: ClassId,
    pub points: Vec<(usize, usize)>,
}

impl ContourSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Paint rank; later classes overwrite earlier ones where polygons overlap.
fn z_order(class: ClassId) -> u8 {
    match class {
        ClassId::Background => 0,
        ClassId::Fatty => 1,
        ClassId::Fibroglandular => 2,
        ClassId::Pectoral => 3,
        ClassId::Nipple => 4,
    }
}

/// Scanline even-odd fill of `poly` over `out`, pixel-center convention.
fn fill_polygon(poly: &Polygon, out: &mut LabelMap) {
    let (w, h) = out.dims();
    let n = poly.vertices.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for y in 0..h {
        let cy = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = poly.vertices[i];
            let (x2, y2) = poly.vertices[(i + 1) % n];
            // Half-open crossing rule; horizontal edges never cross.
            if (y1 > cy) != (y2 > cy) {
                crossings.push((x2 - x1) * (cy - y1) / (y2 - y1) + x1);
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("NaN crossing"));
        for pair in crossings.chunks_exact(2) {
            let (left, right) = (pair[0], pair[1]);
            // Centers in [left, right): x + 0.5 >= left and x + 0.5 < right.
            let x_first = (left - 0.5).ceil().max(0.0) as usize;
            let x_end = (right - 0.5).ceil();
            if x_end <= x_first as f64 {
                continue;
            }
            let x_end = (x_end as usize).min(w);
            for x in x_first..x_end {
                out.set(x, y, poly.class);
            }
        }
    }
}

/// Rasterize polygons into a label map; unfilled pixels stay background.
pub fn rasterize_polygons(polys: &[Polygon], width: usize, height: usize) -> Result<LabelMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("label map dimensions must be positive"));
    }
    for p in polys {
        if p.vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "polygon needs at least 3 vertices, got {}",
                p.vertices.len()
            )));
        }
        if p.class == ClassId::Background {
            return Err(Error::invalid("polygons cannot carry the background class"));
        }
    }
    let mut order: Vec<&Polygon> = polys.iter().collect();
    order.sort_by_key(|p| z_order(p.class));
    let mut out = LabelMap::filled(width, height, ClassId::Background);
    for poly in order {
        fill_polygon(poly, &mut out);
    }
    Ok(out)
}

/// Boundary pixels of `cls`: class pixels 4-adjacent to another class or to
/// the image border. An absent class yields an empty contour.
pub fn extract_contour(labels: &LabelMap, cls: ClassId) -> ContourSet {
    let (w, h) = labels.dims();
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if labels.get(x, y) != cls {
                continue;
            }
            let on_border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            let boundary = on_border
                || labels.get(x - 1, y) != cls
                || labels.get(x + 1, y) != cls
                || labels.get(x, y - 1) != cls
                || labels.get(x, y + 1) != cls;
            if boundary {
                points.push((x, y));
            }
        }
    }
    ContourSet { class: cls, points }
}
