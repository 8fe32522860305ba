//! Planar object scenes and pick-target selection: the object farthest from
//! its nearest neighbour wins, after excluding the dual-arm interference
//! band near the tray centre and a margin along the tray edges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene json: {0}")]
    Parse(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned rectangle with closed bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Rect { x_min, y_min, x_max, y_max }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn is_proper(&self) -> bool {
        self.x_max > self.x_min && self.y_max > self.y_min
    }
}

/// Object centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Fraction of the tray width the default interference band covers.
pub const DEFAULT_BAND_WIDTH_FRACTION: f64 = 0.15;
/// Fraction of the tray diagonal excluded along the edges by default.
pub const DEFAULT_EDGE_MARGIN_FRACTION: f64 = 0.05;

/// Object centres, tray geometry and the exclusion zones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScene {
    pub objects: Vec<Point>,
    pub tray: Rect,
    /// Central strip excluded so the two arms never reach for the same spot.
    pub band: Rect,
    /// Objects strictly closer than this to any tray edge are excluded.
    pub edge_margin: f64,
}

impl ObjectScene {
    /// Scene with the default central band (15% of tray width, full height)
    /// and edge margin (5% of the tray diagonal).
    pub fn with_defaults(tray: Rect, objects: Vec<Point>) -> Self {
        let cx = 0.5 * (tray.x_min + tray.x_max);
        let half = 0.5 * DEFAULT_BAND_WIDTH_FRACTION * tray.width();
        ObjectScene {
            objects,
            tray,
            band: Rect::new(cx - half, tray.y_min, cx + half, tray.y_max),
            edge_margin: DEFAULT_EDGE_MARGIN_FRACTION * tray.diagonal(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !self.tray.is_proper() {
            return Err(SceneError::Invalid("tray rectangle is degenerate".into()));
        }
        if !(self.edge_margin >= 0.0 && self.edge_margin.is_finite()) {
            return Err(SceneError::Invalid("edge margin must be finite and >= 0".into()));
        }
        for (i, p) in self.objects.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(SceneError::Invalid(format!("object {i} has non-finite centre")));
            }
            if !self.tray.contains(p.x, p.y) {
                return Err(SceneError::Invalid(format!(
                    "object {i} at ({}, {}) lies outside the tray",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    /// Indices of objects that may be picked: outside the interference band
    /// and at least the edge margin away from every tray edge.
    pub fn eligible(&self) -> Vec<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                if self.band.contains(p.x, p.y) {
                    return false;
                }
                let m = self.edge_margin;
                p.x - self.tray.x_min >= m
                    && self.tray.x_max - p.x >= m
                    && p.y - self.tray.y_min >= m
                    && self.tray.y_max - p.y >= m
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        let scene: ObjectScene =
            serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SceneError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SceneError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Choose the object whose nearest eligible neighbour is farthest away;
/// ties break to the lowest index, a single survivor wins outright, and an
/// empty survivor set yields `None`.
pub fn select_target(scene: &ObjectScene) -> Option<usize> {
    let eligible = scene.eligible();
    match eligible.len() {
        0 => None,
        1 => Some(eligible[0]),
        _ => {
            let mut best: Option<(usize, f64)> = None;
            for &i in &eligible {
                let pi = scene.objects[i];
                let mut nearest = f64::INFINITY;
                for &j in &eligible {
                    if i == j {
                        continue;
                    }
                    let pj = scene.objects[j];
                    let d2 = (pi.x - pj.x).powi(2) + (pi.y - pj.y).powi(2);
                    if d2 < nearest {
                        nearest = d2;
                    }
                }
                match best {
                    Some((_, best_d2)) if nearest <= best_d2 => {}
                    _ => best = Some((i, nearest)),
                }
            }
            best.map(|(i, _)| i)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn open_scene(objects: Vec<Point>) -> ObjectScene {
        // Large tray, no band, no margin: every object eligible.
        ObjectScene {
            objects,
            tray: Rect::new(-100.0, -100.0, 100.0, 100.0),
            band: Rect::new(0.0, 0.0, -1.0, -1.0), // empty
            edge_margin: 0.0,
        }
    }

    #[test]
    fn single_eligible_object_wins() {
        let scene = open_scene(vec![Point { x: 1.0, y: 2.0 }]);
        assert_eq!(select_target(&scene), Some(0));
    }

    #[test]
    fn collinear_triple_prefers_isolated_end() {
        // Centres at x = 0, 1, 3: nearest-neighbour distances 1, 1, 2.
        let scene = open_scene(vec![
            Point { x: 0.0, y: 0.0 },
            Point { x: 1.0, y: 0.0 },
            Point { x: 3.0, y: 0.0 },
        ]);
        assert_eq!(select_target(&scene), Some(2));
    }

    #[test]
    fn all_objects_inside_band_yields_none() {
        let tray = Rect::new(0.0, 0.0, 1.0, 1.0);
        let mut scene = ObjectScene::with_defaults(
            tray,
            vec![Point { x: 0.5, y: 0.2 }, Point { x: 0.51, y: 0.8 }],
        );
        scene.edge_margin = 0.0;
        assert_eq!(select_target(&scene), None);
    }

    #[test]
    fn edge_margin_excludes_border_objects() {
        let tray = Rect::new(0.0, 0.0, 1.0, 1.0);
        let scene = ObjectScene {
            objects: vec![Point { x: 0.02, y: 0.5 }, Point { x: 0.8, y: 0.5 }],
            tray,
            band: Rect::new(0.45, 0.0, 0.55, 1.0),
            edge_margin: 0.05,
        };
        assert_eq!(select_target(&scene), Some(1));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // A symmetric pair: both have the same nearest-neighbour distance.
        let scene = open_scene(vec![Point { x: 0.0, y: 0.0 }, Point { x: 2.0, y: 0.0 }]);
        assert_eq!(select_target(&scene), Some(0));
    }

    /// Independent re-derivation used to cross-check `select_target`.
    fn brute_force(scene: &ObjectScene) -> Option<usize> {
        let mut survivors = Vec::new();
        for (i, p) in scene.objects.iter().enumerate() {
            let in_band = p.x >= scene.band.x_min
                && p.x <= scene.band.x_max
                && p.y >= scene.band.y_min
                && p.y <= scene.band.y_max;
            let near_edge = (p.x - scene.tray.x_min) < scene.edge_margin
                || (scene.tray.x_max - p.x) < scene.edge_margin
                || (p.y - scene.tray.y_min) < scene.edge_margin
                || (scene.tray.y_max - p.y) < scene.edge_margin;
            if !in_band && !near_edge {
                survivors.push(i);
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for &i in &survivors {
            let mut min_d = f64::INFINITY;
            for &j in &survivors {
                if i != j {
                    let dx = scene.objects[i].x - scene.objects[j].x;
                    let dy = scene.objects[i].y - scene.objects[j].y;
                    min_d = min_d.min((dx * dx + dy * dy).sqrt());
                }
            }
            if best.map(|(_, d)| min_d > d).unwrap_or(true) {
                best = Some((i, min_d));
            }
        }
        if survivors.len() == 1 {
            return Some(survivors[0]);
        }
        best.map(|(i, _)| i)
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> ObjectScene {
        let tray = Rect::new(0.0, 0.0, 1.2, 0.8);
        let count = rng.gen_range(0..10);
        let objects = (0..count)
            .map(|_| Point { x: rng.gen_range(0.0..1.2), y: rng.gen_range(0.0..0.8) })
            .collect();
        ObjectScene::with_defaults(tray, objects)
    }

    #[test]
    fn matches_brute_force_on_random_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..2_000 {
            let scene = random_scene(&mut rng);
            assert_eq!(select_target(&scene), brute_force(&scene));
        }
    }

    #[test]
    fn choice_is_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..500 {
            let scene = random_scene(&mut rng);
            let picked = select_target(&scene);
            let scale = rng.gen_range(0.1..20.0);
            let (dx, dy) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let map = |p: &Point| Point { x: p.x * scale + dx, y: p.y * scale + dy };
            let map_rect = |r: &Rect| {
                Rect::new(
                    r.x_min * scale + dx,
                    r.y_min * scale + dy,
                    r.x_max * scale + dx,
                    r.y_max * scale + dy,
                )
            };
            let transformed = ObjectScene {
                objects: scene.objects.iter().map(map).collect(),
                tray: map_rect(&scene.tray),
                band: map_rect(&scene.band),
                edge_margin: scene.edge_margin * scale,
            };
            assert_eq!(select_target(&transformed), picked);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let tray = Rect::new(0.0, 0.0, 1.0, 1.0);
        let scene = ObjectScene::with_defaults(tray, vec![Point { x: 0.2, y: 0.3 }]);
        let text = scene.to_json();
        let back = ObjectScene::from_json_str(&text).unwrap();
        assert_eq!(scene, back);

        let bad = ObjectScene::with_defaults(tray, vec![Point { x: 2.0, y: 0.3 }]);
        assert!(bad.validate().is_err());
    }
}
