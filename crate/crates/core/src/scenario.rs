//! Scenario description: target body, anchors, true pose and the measurement
//! edge list.

use nalgebra::Vector3;
use rand::seq::index;

use crate::dissimilarity::{AoaFrame, Dissimilarity, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::{apply_pose, rotation_from_euler, Conformation, EulerAngles, Pose, RotationMatrix};
use crate::intensity::{stream_rng, IntensityOptions, NoiseModel};

/// One measurement between target landmark `target` and anchor `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: usize,
    pub anchor: usize,
    pub kind: Dissimilarity,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScenarioOptions {
    pub tolerances: Tolerances,
    pub intensity: IntensityOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    body: Conformation,
    anchors: Conformation,
    pose: Pose,
    edges: Vec<Edge>,
    options: ScenarioOptions,
}

impl Scenario {
    pub fn new(
        body: Conformation,
        anchors: Conformation,
        pose: Pose,
        edges: Vec<Edge>,
        options: ScenarioOptions,
    ) -> Result<Self> {
        for (i, e) in edges.iter().enumerate() {
            let bad = |msg: String| Error::Validation(format!("edge {i}: {msg}"));
            if e.target >= body.len() {
                return Err(bad(format!("target index {} out of range", e.target)));
            }
            if e.anchor >= anchors.len() {
                return Err(bad(format!("anchor index {} out of range", e.anchor)));
            }
            if let Dissimilarity::Adoa { third } = e.kind {
                if third >= anchors.len() || third == e.anchor {
                    return Err(bad(format!("ADoA third node {third} invalid")));
                }
            }
            e.noise.validate().map_err(|err| bad(err.to_string()))?;
        }
        Ok(Self { body, anchors, pose, edges, options })
    }

    pub fn body(&self) -> &Conformation {
        &self.body
    }

    pub fn anchors(&self) -> &Conformation {
        &self.anchors
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn options(&self) -> &ScenarioOptions {
        &self.options
    }

    pub fn n_targets(&self) -> usize {
        self.body.len()
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Landmark positions at the true pose.
    pub fn targets(&self) -> Conformation {
        apply_pose(&self.pose, &self.body)
    }

    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        Self::new(self.body.clone(), self.anchors.clone(), self.pose, edges, self.options)
    }

    pub fn with_pose(&self, pose: Pose) -> Self {
        Self { pose, ..self.clone() }
    }

    pub fn with_options(&self, options: ScenarioOptions) -> Self {
        Self { options, ..self.clone() }
    }

    /// Anchor position and, for ADoA, the third node.
    pub fn edge_anchors(&self, e: &Edge) -> (Vector3<f64>, Option<Vector3<f64>>) {
        let third = match e.kind {
            Dissimilarity::Adoa { third } => Some(self.anchors.column(third)),
            _ => None,
        };
        (self.anchors.column(e.anchor), third)
    }

    /// Noise-free dissimilarity of edge `i`.
    pub fn true_dissimilarity(&self, i: usize) -> Result<f64> {
        let e = &self.edges[i];
        let (a, k) = self.edge_anchors(e);
        let theta = self.pose.transform(&self.body.column(e.target));
        e.kind
            .eval(&theta, &a, k.as_ref(), &self.options.tolerances)
            .map_err(|err| err.at_edge(i))
    }

    pub fn true_dissimilarities(&self) -> Result<Vec<f64>> {
        (0..self.edges.len()).map(|i| self.true_dissimilarity(i)).collect()
    }

    /// Keeps `round(fraction · |edges|)` edges (at least one), chosen
    /// uniformly without replacement, in their original order.
    pub fn subset(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Validation(format!("connectivity fraction {fraction} not in (0, 1]")));
        }
        let n = self.edges.len();
        if fraction == 1.0 || n == 0 {
            return Ok(self.clone());
        }
        let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut rng = stream_rng(seed, 0);
        let mut picked = index::sample(&mut rng, n, keep).into_vec();
        picked.sort_unstable();
        self.with_edges(picked.into_iter().map(|i| self.edges[i]).collect())
    }

    /// Applies a global rotation to anchors, pose and AoA frames.
    pub fn rotated(&self, r: &RotationMatrix) -> Result<Self> {
        let rm = r.matrix();
        let anchors = Conformation::new(rm * self.anchors.matrix())?;
        let pose = Pose::new(r.compose(&self.pose.rotation), rm * self.pose.translation);
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let kind = match e.kind {
                    Dissimilarity::Aoa(f) => Dissimilarity::Aoa(f.rotated(rm)),
                    k => k,
                };
                Edge { kind, ..*e }
            })
            .collect();
        Self::new(self.body.clone(), anchors, pose, edges, self.options)
    }
}

/// Edge classes used by [`complete_edges`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeClass {
    Distance,
    SquaredDistance,
    Aoa(AoaFrame),
    /// Third node is anchor `(a + offset) mod n_A`.
    Adoa { offset: usize },
}

/// Every target–anchor pair with the given measurement class.
pub fn complete_edges(n_targets: usize, n_anchors: usize, class: EdgeClass, noise: NoiseModel) -> Vec<Edge> {
    let mut out = Vec::with_capacity(n_targets * n_anchors);
    for target in 0..n_targets {
        for anchor in 0..n_anchors {
            let kind = match class {
                EdgeClass::Distance => Dissimilarity::Distance,
                EdgeClass::SquaredDistance => Dissimilarity::SquaredDistance,
                EdgeClass::Aoa(f) => Dissimilarity::Aoa(f),
                EdgeClass::Adoa { offset } => Dissimilarity::Adoa { third: (anchor + offset) % n_anchors },
            };
            out.push(Edge { target, anchor, kind, noise });
        }
    }
    out
}

/// Unit cube of side 1 centred at the origin (target body of the reference
/// experiment).
pub fn table3_body() -> Conformation {
    cube(0.5)
}

/// Cube of side 20 centred at the origin (anchors of the reference
/// experiment).
pub fn table3_anchors() -> Conformation {
    cube(10.0)
}

/// Angles (10°, 20°, 45°), translation (-3, 0.5, 7).
pub fn table3_pose() -> Pose {
    let angles = EulerAngles::from_degrees(10.0, 20.0, 45.0).expect("finite");
    Pose::new(rotation_from_euler(angles), Vector3::new(-3.0, 0.5, 7.0))
}

fn cube(h: f64) -> Conformation {
    let s = [
        [-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0],
        [-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0],
        [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0],
    ];
    let rows: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| v * h).collect()).collect();
    Conformation::from_rows(&rows).expect("static cube")
}

/// Reference experiment with one complete edge class.
pub fn table3(class: EdgeClass, noise: NoiseModel) -> Scenario {
    let body = table3_body();
    let anchors = table3_anchors();
    let edges = complete_edges(body.len(), anchors.len(), class, noise);
    Scenario::new(body, anchors, table3_pose(), edges, ScenarioOptions::default()).expect("valid reference scenario")
}
