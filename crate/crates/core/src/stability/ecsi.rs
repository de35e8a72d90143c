use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorTrajectory, NumericGuards};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskEcsi {
    pub improvement: f64,
    pub backsliding: f64,
    pub ecsi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskOutcome {
    Included(TaskEcsi),
    /// First-attempt error below tau: too little signal.
    Excluded,
}

/// Task score from improvement `I` and backsliding `B`.
pub fn combine(improvement: f64, backsliding: f64) -> f64 {
    improvement * (1.0 - backsliding.min(1.0))
}

/// `B` is the share of total error movement that went upward;
/// `I = max(0, (e_1 - e_K) / max(e_1, eps))`; the task score is `I * (1 - min(1, B))`.
pub fn ecsi_task(traj: &ErrorTrajectory, guards: &NumericGuards) -> Result<TaskOutcome> {
    let e = &traj.error_rates;
    if e.len() < 2 {
        return Err(Error::TooFewAttempts { task_id: traj.task_id.clone(), attempts: e.len() });
    }
    let first = e[0];
    let last = e[e.len() - 1];
    if first < guards.tau {
        return Ok(TaskOutcome::Excluded);
    }
    let (mut up, mut total) = (0.0, 0.0);
    for w in e.windows(2) {
        let step = w[1] - w[0];
        up += step.max(0.0);
        total += step.abs();
    }
    let backsliding = up / (total + guards.eps_floor);
    let improvement = ((first - last) / first.max(guards.eps_floor)).max(0.0);
    Ok(TaskOutcome::Included(TaskEcsi { improvement, backsliding, ecsi: combine(improvement, backsliding) }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcsiResult {
    pub ecsi: f64,
    pub per_task: BTreeMap<String, TaskEcsi>,
    pub excluded_low_initial_error: Vec<String>,
}

/// Equal-weight mean of task scores over tasks that pass the tau gate.
pub fn ecsi(trajectories: &[ErrorTrajectory], guards: &NumericGuards) -> Result<EcsiResult> {
    let mut per_task = BTreeMap::new();
    let mut values = Vec::new();
    let mut excluded = Vec::new();
    for t in trajectories {
        match ecsi_task(t, guards)? {
            TaskOutcome::Included(r) => {
                values.push(r.ecsi);
                per_task.insert(t.task_id.clone(), r);
            }
            TaskOutcome::Excluded => excluded.push(t.task_id.clone()),
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyAfterExclusion("no error-decay task passes the tau gate"));
    }
    Ok(EcsiResult {
        ecsi: values.iter().sum::<f64>() / values.len() as f64,
        per_task,
        excluded_low_initial_error: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeedbackKind;
    use proptest::prelude::*;

    fn traj(id: &str, e: &[f64]) -> ErrorTrajectory {
        ErrorTrajectory { task_id: id.into(), error_rates: e.to_vec(), feedback_kind: FeedbackKind::Structured }
    }

    fn included(t: &ErrorTrajectory) -> TaskEcsi {
        match ecsi_task(t, &NumericGuards::default()).unwrap() {
            TaskOutcome::Included(r) => r,
            TaskOutcome::Excluded => panic!("excluded"),
        }
    }

    #[test]
    fn monotone_decrease() {
        let r = included(&traj("t", &[0.8, 0.6, 0.4, 0.3, 0.2]));
        assert!((r.improvement - 0.75).abs() < 1e-15);
        assert_eq!(r.backsliding, 0.0);
        assert_eq!(r.ecsi, r.improvement);
    }

    #[test]
    fn combination_of_improvement_and_backsliding() {
        // I = (1.0 - 0.2) / 1.0 = 0.8. Steps -0.6, +0.3, -0.1, -0.4: up 0.3,
        // total 1.4, so B = 0.3 / (1.4 + 1e-6).
        let r = included(&traj("t", &[1.0, 0.4, 0.7, 0.6, 0.2]));
        assert!((r.improvement - 0.8).abs() < 1e-12);
        assert!((r.backsliding - 0.3 / (1.4 + 1e-6)).abs() < 1e-12);
        assert!((r.ecsi - 0.8 * (1.0 - r.backsliding)).abs() < 1e-12);
    }

    #[test]
    fn tau_gate_and_short_trajectories() {
        let g = NumericGuards::default();
        assert_eq!(ecsi_task(&traj("easy", &[0.1, 0.05, 0.0]), &g).unwrap(), TaskOutcome::Excluded);
        assert!(matches!(ecsi_task(&traj("one", &[0.5]), &g), Err(Error::TooFewAttempts { attempts: 1, .. })));
        assert!(matches!(ecsi(&[traj("easy", &[0.1, 0.0])], &g), Err(Error::EmptyAfterExclusion(_))));
    }

    #[test]
    fn no_net_improvement_scores_zero() {
        let r = included(&traj("t", &[0.5, 0.3, 0.7]));
        assert_eq!(r.improvement, 0.0);
        assert_eq!(r.ecsi, 0.0);
        let flat = included(&traj("flat", &[0.5, 0.5, 0.5]));
        assert_eq!(flat.backsliding, 0.0);
        assert_eq!(flat.ecsi, 0.0);
    }

    #[test]
    fn aggregation() {
        // Two tasks scoring 0.75 and 0.32 average to 0.535.
        let t1 = traj("a", &[0.8, 0.6, 0.4, 0.3, 0.2]);
        let t2 = traj("b", &[1.0, 0.4, 0.7, 0.6, 0.2]);
        let g = NumericGuards::default();
        let r = ecsi(&[t1.clone(), t2.clone(), traj("easy", &[0.05, 0.0])], &g).unwrap();
        let expected = (included(&t1).ecsi + included(&t2).ecsi) / 2.0;
        assert!((r.ecsi - expected).abs() < 1e-15);
        assert_eq!(r.excluded_low_initial_error, vec!["easy"]);
        assert_eq!(r.per_task.len(), 2);
        let single = ecsi(std::slice::from_ref(&t1), &g).unwrap();
        assert_eq!(single.ecsi, included(&t1).ecsi);
    }

    proptest! {
        #[test]
        fn strictly_decreasing_has_no_backsliding(start in 0.2f64..=1.0, steps in proptest::collection::vec(0.01f64..0.2, 1..8)) {
            let mut e = vec![start];
            for s in steps {
                let next = e.last().unwrap() * (1.0 - s);
                e.push(next);
            }
            let r = included(&traj("t", &e));
            prop_assert_eq!(r.backsliding, 0.0);
            prop_assert_eq!(r.ecsi, r.improvement);
        }

        #[test]
        fn task_scores_in_unit_interval(e in proptest::collection::vec(0.0f64..=1.0, 2..8)) {
            if let TaskOutcome::Included(r) = ecsi_task(&traj("t", &e), &NumericGuards::default()).unwrap() {
                prop_assert!((0.0..=1.0).contains(&r.ecsi));
                prop_assert!((0.0..1.0).contains(&r.backsliding));
            }
        }
    }
}
