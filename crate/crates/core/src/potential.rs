//! Potential tables `Φ(s,a)`: the constant `C` on the winning region and a
//! distance term `d(s,a) < C` elsewhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::Mdp;
use crate::numfmt::{round_sig, write_atomic};
use crate::region::WinningRegion;

/// Slack used when a distance value has to be pulled below `C`.
pub const CLAMP_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("C must be finite, got {0}")]
    InvalidC(f64),
    #[error("distance spec needs state coordinates but the MDP has none")]
    MissingCoords,
    #[error("no state carries label `{0}`")]
    UnknownLabel(String),
    #[error("custom distance table has {got} entries, expected {expected}")]
    TableShape { got: usize, expected: usize },
    #[error("region shape {0}x{1} does not match the MDP")]
    RegionShape(usize, usize),
    #[error("non-finite distance at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("invalid distance spec `{0}`")]
    Spec(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PotentialWarning {
    /// `W = ∅`; the potential is pure distance shaping.
    EmptyRegion,
    /// Entries where `d(s,a) ≥ C` were clamped to `C − ε`.
    Clamped { count: usize },
}

/// How `d(s,a)` is evaluated outside the winning region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceSpec {
    ConstantPenalty { value: f64 },
    /// `−scale · dist(s, W) (+ bonus if a moves closer)`, with `dist` the L1
    /// distance between state coordinates.
    ManhattanToRegion { scale: f64, closer_bonus: f64 },
    /// As above but towards the states carrying `label`.
    ManhattanToTarget { label: String, scale: f64, closer_bonus: f64 },
    /// Row-major `S × A` table.
    Custom { table: Vec<f64> },
}

impl DistanceSpec {
    pub fn id(&self) -> String {
        match self {
            DistanceSpec::ConstantPenalty { value } => format!("const:{value}"),
            DistanceSpec::ManhattanToRegion { scale, closer_bonus } => format!("region:{scale}:{closer_bonus}"),
            DistanceSpec::ManhattanToTarget { label, scale, closer_bonus } => {
                format!("target:{label}:{scale}:{closer_bonus}")
            }
            DistanceSpec::Custom { .. } => "custom".into(),
        }
    }

    /// Parses `const:V`, `region[:scale[:bonus]]`, `target:LABEL[:scale[:bonus]]`
    /// or `custom:FILE` (a JSON array of `S × A` values).
    pub fn parse(text: &str) -> Result<Self, PotentialError> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |i: usize, default: f64| -> Result<f64, PotentialError> {
            match parts.get(i) {
                None => Ok(default),
                Some(p) => p.parse().map_err(|_| PotentialError::Spec(text.into())),
            }
        };
        match parts[0] {
            "const" if parts.len() == 2 => Ok(DistanceSpec::ConstantPenalty { value: num(1, 0.0)? }),
            "region" if parts.len() <= 3 => Ok(DistanceSpec::ManhattanToRegion {
                scale: num(1, 1.0)?,
                closer_bonus: num(2, 1.0)?,
            }),
            "target" if (2..=4).contains(&parts.len()) => Ok(DistanceSpec::ManhattanToTarget {
                label: parts[1].to_string(),
                scale: num(2, 1.0)?,
                closer_bonus: num(3, 1.0)?,
            }),
            "custom" if parts.len() >= 2 => {
                let path = &text["custom:".len()..];
                let body = std::fs::read_to_string(path).map_err(|e| PotentialError::Io(e.to_string()))?;
                let table: Vec<f64> = serde_json::from_str(&body).map_err(|e| PotentialError::Spec(e.to_string()))?;
                Ok(DistanceSpec::Custom { table })
            }
            _ => Err(PotentialError::Spec(text.into())),
        }
    }
}

/// `Φ` over `S × A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    num_states: usize,
    num_actions: usize,
    c: f64,
    values: Vec<f64>,
    members: Vec<bool>,
    distance: String,
    warnings: Vec<PotentialWarning>,
}

impl PotentialTable {
    /// `Φ ≡ value` with every pair a member.
    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            c: value,
            values: vec![value; num_states * num_actions],
            members: vec![true; num_states * num_actions],
            distance: "none".into(),
            warnings: Vec::new(),
        }
    }

    /// Arbitrary table; members are the entries equal to `c`.
    pub fn from_values(num_states: usize, num_actions: usize, c: f64, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_states * num_actions);
        let members = values.iter().map(|&v| v == c).collect();
        Self { num_states, num_actions, c, values, members, distance: "table".into(), warnings: Vec::new() }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_member(&self, s: usize, a: usize) -> bool {
        self.members[s * self.num_actions + a]
    }

    pub fn distance_id(&self) -> &str {
        &self.distance
    }

    pub fn warnings(&self) -> &[PotentialWarning] {
        &self.warnings
    }

    /// Same table shifted by `delta`, membership unchanged.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.c += delta;
        for v in &mut out.values {
            *v += delta;
        }
        out
    }

    pub fn to_file_format(&self) -> PotentialFile {
        PotentialFile {
            c: self.c,
            distance: self.distance.clone(),
            num_states: self.num_states,
            num_actions: self.num_actions,
            members: self.members.iter().map(|&m| m as u8).collect(),
            phi: self.values.iter().map(|&v| round_sig(v, 12)).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("potential serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<(), PotentialError> {
        write_atomic(path, self.to_json_string().as_bytes()).map_err(|e| PotentialError::Io(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, PotentialError> {
        let f: PotentialFile = serde_json::from_str(text).map_err(|e| PotentialError::Spec(e.to_string()))?;
        let n = f.num_states * f.num_actions;
        if f.phi.len() != n || f.members.len() != n {
            return Err(PotentialError::TableShape { got: f.phi.len(), expected: n });
        }
        Ok(Self {
            num_states: f.num_states,
            num_actions: f.num_actions,
            c: f.c,
            values: f.phi,
            members: f.members.iter().map(|&m| m != 0).collect(),
            distance: f.distance,
            warnings: Vec::new(),
        })
    }
}

/// On-disk potential representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialFile {
    #[serde(rename = "C")]
    pub c: f64,
    pub distance: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub members: Vec<u8>,
    pub phi: Vec<f64>,
}

fn l1(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// L1 distance from every state to the nearest target state; `None` if there
/// are no targets.
fn distances_to(coords: &[Vec<i64>], targets: &[usize]) -> Option<Vec<f64>> {
    if targets.is_empty() {
        return None;
    }
    Some(
        coords
            .iter()
            .map(|c| targets.iter().map(|&t| l1(c, &coords[t])).min().unwrap() as f64)
            .collect(),
    )
}

fn manhattan(mdp: &Mdp, dist: &[f64], scale: f64, bonus: f64) -> Vec<f64> {
    let na = mdp.num_actions();
    let mut out = vec![0.0; mdp.num_states() * na];
    for s in 0..mdp.num_states() {
        for a in 0..na {
            let mut d = -scale * dist[s];
            if mdp.is_available(s, a) {
                let expected: f64 = mdp.successors(s, a).iter().map(|x| x.prob * dist[x.next]).sum();
                if expected < dist[s] {
                    d += bonus;
                }
            }
            out[s * na + a] = d;
        }
    }
    out
}

/// Builds `Φ(s,a) = C` for `(s,a) ∈ W` and `d(s,a)` otherwise.
pub fn synthesize_potential(
    mdp: &Mdp,
    region: &WinningRegion,
    c: f64,
    distance: &DistanceSpec,
) -> Result<PotentialTable, PotentialError> {
    if !c.is_finite() {
        return Err(PotentialError::InvalidC(c));
    }
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    if region.num_states() != ns || region.num_actions() != na {
        return Err(PotentialError::RegionShape(region.num_states(), region.num_actions()));
    }
    let mut warnings = Vec::new();
    if region.is_empty() {
        log::warn!("winning region is empty; potential reduces to the distance term");
        warnings.push(PotentialWarning::EmptyRegion);
    }
    let d = match distance {
        DistanceSpec::ConstantPenalty { value } => vec![*value; ns * na],
        DistanceSpec::ManhattanToRegion { scale, closer_bonus } => {
            let coords = mdp.coords().ok_or(PotentialError::MissingCoords)?;
            let dist = distances_to(coords, &region.states()).unwrap_or_else(|| vec![0.0; ns]);
            manhattan(mdp, &dist, *scale, *closer_bonus)
        }
        DistanceSpec::ManhattanToTarget { label, scale, closer_bonus } => {
            let coords = mdp.coords().ok_or(PotentialError::MissingCoords)?;
            let bit = mdp.ap().index_of(label).ok_or_else(|| PotentialError::UnknownLabel(label.clone()))?;
            let targets: Vec<usize> = (0..ns).filter(|&s| mdp.label(s).contains(bit)).collect();
            let dist = distances_to(coords, &targets).ok_or_else(|| PotentialError::UnknownLabel(label.clone()))?;
            manhattan(mdp, &dist, *scale, *closer_bonus)
        }
        DistanceSpec::Custom { table } => {
            if table.len() != ns * na {
                return Err(PotentialError::TableShape { got: table.len(), expected: ns * na });
            }
            table.clone()
        }
    };
    let mut values = vec![0.0; ns * na];
    let mut members = vec![false; ns * na];
    let mut clamped = 0;
    for i in 0..ns * na {
        if region.members()[i] {
            values[i] = c;
            members[i] = true;
        } else {
            let v = d[i];
            if !v.is_finite() {
                return Err(PotentialError::NonFinite(i / na, i % na));
            }
            if v >= c {
                clamped += 1;
                values[i] = c - CLAMP_EPSILON;
            } else {
                values[i] = v;
            }
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} distance values were >= C and have been clamped");
        warnings.push(PotentialWarning::Clamped { count: clamped });
    }
    Ok(PotentialTable { num_states: ns, num_actions: na, c, values, members, distance: distance.id(), warnings })
}
