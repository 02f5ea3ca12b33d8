//! Deterministic synthetic scenes: colored rectangles on a gray background
//! with a geometric description tree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::{argmax, Image, LabelMap};
use crate::nncore::Rng;
use crate::treeconv::{SemanticTree, Vocabulary};

pub const RELATIONS: [&str; 3] = ["above", "beside", "other"];
pub const ABOVE: usize = 1;
pub const BESIDE: usize = 2;
pub const OTHER: usize = 3;

const PLACEMENT_ATTEMPTS: usize = 100;

pub const BACKGROUND_COLOR: [f64; 3] = [0.5, 0.5, 0.5];

/// Base colors for up to eight classes.
const PALETTE: [(&str, [f64; 3]); 8] = [
    ("red", [0.9, 0.1, 0.1]),
    ("green", [0.1, 0.9, 0.1]),
    ("blue", [0.1, 0.1, 0.9]),
    ("yellow", [0.9, 0.9, 0.1]),
    ("magenta", [0.9, 0.1, 0.9]),
    ("cyan", [0.1, 0.9, 0.9]),
    ("black", [0.05, 0.05, 0.05]),
    ("white", [0.95, 0.95, 0.95]),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub classes: usize,
    pub relations: usize,
    pub height: usize,
    pub width: usize,
    pub min_entities: usize,
    pub max_entities: usize,
    pub min_side: usize,
    pub max_side: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            classes: 4,
            relations: 3,
            height: 16,
            width: 16,
            min_entities: 2,
            max_entities: 4,
            min_side: 4,
            max_side: 6,
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.classes < 2 || self.classes > PALETTE.len() {
            return bad("classes must be in 2..=8");
        }
        if self.relations != RELATIONS.len() {
            return bad("the scene grammar uses exactly 3 relations");
        }
        if self.min_entities == 0 || self.min_entities > self.max_entities || self.max_entities > self.classes {
            return bad("entity counts must satisfy 1 <= min <= max <= classes");
        }
        if self.min_side < 2 || self.min_side > self.max_side {
            return bad("rectangle sides must satisfy 2 <= min <= max");
        }
        if self.max_side > self.height || self.max_side > self.width {
            return bad("rectangles must fit in the image");
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad("noise must be in [0, 0.5)");
        }
        Image::zeros(self.height, self.width).map(|_| ())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut categories = vec!["background".to_string()];
        categories.extend(PALETTE[..self.classes].iter().map(|(n, _)| n.to_string()));
        Vocabulary {
            categories,
            relations: RELATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Anchor color of every class, background first.
    pub fn anchors(&self) -> Vec<[f64; 3]> {
        std::iter::once(BACKGROUND_COLOR)
            .chain(PALETTE[..self.classes].iter().map(|(_, c)| *c))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Image,
    pub labels: LabelMap,
    pub tree: SemanticTree,
}

/// Half-open rectangle `[y0, y1) × [x0, x1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Rect {
    y0: usize,
    x0: usize,
    y1: usize,
    x1: usize,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        self.y0 < o.y1 && o.y0 < self.y1 && self.x0 < o.x1 && o.x0 < self.x1
    }

    fn union(&self, o: &Rect) -> Rect {
        Rect {
            y0: self.y0.min(o.y0),
            x0: self.x0.min(o.x0),
            y1: self.y1.max(o.y1),
            x1: self.x1.max(o.x1),
        }
    }

    /// Doubled center, exact in integers.
    fn center2(&self) -> (i64, i64) {
        ((self.y0 + self.y1) as i64, (self.x0 + self.x1) as i64)
    }
}

fn place(spec: &SceneSpec, rng: &mut Rng, count: usize) -> Option<Vec<Rect>> {
    let mut rects: Vec<Rect> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let h = rng.between(spec.min_side, spec.max_side);
            let w = rng.between(spec.min_side, spec.max_side);
            let y0 = rng.below(spec.height - h + 1);
            let x0 = rng.below(spec.width - w + 1);
            let r = Rect {
                y0,
                x0,
                y1: y0 + h,
                x1: x0 + w,
            };
            if rects.iter().all(|o| !r.overlaps(o)) {
                rects.push(r);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(rects)
}

/// Merge the nearest pair of nodes (by bounding-box center) until one
/// remains. Vertical offsets give `above` with the upper node on the left,
/// horizontal ones `beside` with the leftmost node on the left, and equal
/// offsets give `other`.
fn describe(entities: &[(usize, Rect)]) -> SemanticTree {
    let mut active: Vec<(SemanticTree, Rect)> = entities
        .iter()
        .map(|&(c, r)| (SemanticTree::Leaf(c), r))
        .collect();
    while active.len() > 1 {
        let mut best = (i64::MAX, 0, 0);
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let (ay, ax) = active[i].1.center2();
                let (by, bx) = active[j].1.center2();
                let d = (ay - by).pow(2) + (ax - bx).pow(2);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let (b, rb) = active.remove(j);
        let (a, ra) = active.remove(i);
        let (ay, ax) = ra.center2();
        let (by, bx) = rb.center2();
        let (dy, dx) = (by - ay, bx - ax);
        let node = if dy.abs() > dx.abs() {
            if ay < by {
                SemanticTree::node(ABOVE, a, b)
            } else {
                SemanticTree::node(ABOVE, b, a)
            }
        } else if dx.abs() > dy.abs() {
            if ax < bx {
                SemanticTree::node(BESIDE, a, b)
            } else {
                SemanticTree::node(BESIDE, b, a)
            }
        } else {
            SemanticTree::node(OTHER, a, b)
        };
        active.push((node, ra.union(&rb)));
    }
    active.pop().expect("at least one entity").0
}

/// Scene `index` of the stream defined by `spec`. Identical inputs give
/// bit-identical scenes.
pub fn generate(spec: &SceneSpec, index: u64) -> Result<Scene> {
    spec.validate()?;
    let base = Rng::new(spec.seed);
    let mut sub = 0u64;
    let (mut rng, classes, rects) = loop {
        let mut rng = base.fork(index.wrapping_mul(1 << 16).wrapping_add(sub));
        let count = rng.between(spec.min_entities, spec.max_entities);
        let mut classes: Vec<usize> = (1..=spec.classes).collect();
        rng.shuffle(&mut classes);
        classes.truncate(count);
        if let Some(rects) = place(spec, &mut rng, count) {
            break (rng, classes, rects);
        }
        sub += 1;
        if sub >= 1 << 16 {
            return Err(Error::Config("could not place rectangles; shrink them or the entity count".into()));
        }
    };

    let (h, w) = (spec.height, spec.width);
    let mut labels = vec![0usize; h * w];
    for (&c, r) in classes.iter().zip(&rects) {
        for y in r.y0..r.y1 {
            labels[y * w + r.x0..y * w + r.x1].fill(c);
        }
    }
    let anchors = spec.anchors();
    let m = h * w;
    let mut pixels = vec![0.0; 3 * m];
    for ch in 0..3 {
        for (j, &c) in labels.iter().enumerate() {
            let v = anchors[c][ch] + rng.uniform(-spec.noise, spec.noise);
            pixels[ch * m + j] = v.clamp(0.0, 1.0);
        }
    }

    let mut entities: Vec<(usize, Rect)> = classes.into_iter().zip(rects).collect();
    entities.sort_by_key(|(c, _)| *c);
    Ok(Scene {
        image: Image::new(h, w, pixels)?,
        labels: LabelMap::new(h, w, labels)?,
        tree: describe(&entities),
    })
}

/// Label each pixel with the class whose anchor color is nearest.
pub fn nearest_anchor_labels(image: &Image, spec: &SceneSpec) -> LabelMap {
    let anchors = spec.anchors();
    let mut labels = Vec::with_capacity(image.pixel_count());
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = image.rgb(y, x);
            labels.push(argmax(anchors.iter().enumerate().map(|(c, a)| {
                let d: f64 = a.iter().zip(&p).map(|(u, v)| (u - v).powi(2)).sum();
                (c, -d)
            })));
        }
    }
    LabelMap {
        height: image.height(),
        width: image.width(),
        labels,
    }
}

pub fn pixel_accuracy(pred: &LabelMap, gt: &LabelMap) -> f64 {
    let hits = pred.labels.iter().zip(&gt.labels).filter(|(a, b)| a == b).count();
    hits as f64 / gt.labels.len() as f64
}
