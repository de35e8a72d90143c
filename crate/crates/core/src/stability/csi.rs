use serde::{Deserialize, Serialize};

use crate::model::NumericGuards;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Pcsi,
    Dcsi,
    Ecsi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiResult {
    pub csi: f64,
    pub pcsi: f64,
    pub dcsi: f64,
    pub ecsi: f64,
    /// Components that were raised to the soft floor.
    pub floored_components: Vec<Component>,
}

/// Geometric mean of the three indices, each floored at `eps_floor`.
pub fn csi(p: f64, d: f64, e: f64, guards: &NumericGuards) -> CsiResult {
    let eps = guards.eps_floor;
    let floored_components = [(Component::Pcsi, p), (Component::Dcsi, d), (Component::Ecsi, e)]
        .into_iter()
        .filter(|(_, v)| *v < eps)
        .map(|(c, _)| c)
        .collect();
    CsiResult { csi: (p.max(eps) * d.max(eps) * e.max(eps)).cbrt(), pcsi: p, dcsi: d, ecsi: e, floored_components }
}
