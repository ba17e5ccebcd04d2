use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::StrokeSide;
use crate::float17;
use crate::model::{Phase, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub state: State,
    pub phase: Phase,
    pub u: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    PhaseChange { from: Phase, to: Phase },
    ControlSwitch,
    StrokeViolation(StrokeSide),
    FootRest,
    Settled,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tau: f64,
    pub kind: EventKind,
}

/// Time-ordered samples plus every discrete event of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    /// Event localization tolerance the run used.
    pub event_tol: f64,
}

impl Trajectory {
    pub fn new(event_tol: f64) -> Self {
        Self {
            samples: Vec::new(),
            events: Vec::new(),
            event_tol,
        }
    }

    /// Appends a sample, replacing the last one if it has the same time.
    pub(crate) fn push(&mut self, sample: Sample) {
        match self.samples.last_mut() {
            Some(last) if sample.tau == last.tau => *last = sample,
            Some(last) if sample.tau < last.tau => {}
            _ => self.samples.push(sample),
        }
    }

    pub fn initial_phase(&self) -> Option<Phase> {
        self.samples.first().map(|s| s.phase)
    }

    /// Writes `tau, x_b, v_b, x_f, v_f, phase, u, gamma, w_act, w_gnd`.
    ///
    /// Floats carry 17 significant digits so they parse back bit-exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tau,x_b,v_b,x_f,v_f,phase,u,gamma,w_act,w_gnd")?;
        for s in &self.samples {
            let st = &s.state;
            let f = float17;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                f(s.tau),
                f(st.x_b),
                f(st.v_b),
                f(st.x_f),
                f(st.v_f),
                s.phase,
                f(s.u),
                f(s.gamma),
                f(st.w_act),
                f(st.w_gnd)
            )?;
        }
        Ok(())
    }
}

/// Number of yielding episodes in `traj`, merging episodes separated by less
/// than ten event tolerances.
pub fn count_steps(traj: &Trajectory) -> u32 {
    count_steps_with_tol(traj, traj.event_tol)
}

pub fn count_steps_with_tol(traj: &Trajectory, event_tol: f64) -> u32 {
    let Some(mut phase) = traj.initial_phase() else {
        return 0;
    };
    let mut steps = u32::from(phase == Phase::Yielding);
    let mut last_exit: Option<f64> = None;
    for e in &traj.events {
        if let EventKind::PhaseChange { from, to } = e.kind {
            debug_assert_eq!(from, phase);
            if to == Phase::Yielding && from != Phase::Yielding {
                let merged = last_exit.is_some_and(|t| e.tau - t < 10.0 * event_tol);
                if !merged {
                    steps += 1;
                }
            } else if from == Phase::Yielding && to != Phase::Yielding {
                last_exit = Some(e.tau);
            }
            phase = to;
        }
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(initial: Phase, changes: &[(f64, Phase, Phase)]) -> Trajectory {
        let mut t = Trajectory::new(1e-12);
        t.push(Sample {
            tau: 0.0,
            state: State::default(),
            phase: initial,
            u: 0.0,
            gamma: 0.0,
        });
        for &(tau, from, to) in changes {
            t.events.push(Event {
                tau,
                kind: EventKind::PhaseChange { from, to },
            });
        }
        t
    }

    #[test]
    fn single_intrusion() {
        use Phase::*;
        assert_eq!(count_steps(&traj(Yielding, &[(1.0, Yielding, Static)])), 1);
    }

    #[test]
    fn three_intrusions() {
        use Phase::*;
        let t = traj(
            Yielding,
            &[
                (1.0, Yielding, Static),
                (2.0, Static, Yielding),
                (2.5, Yielding, Static),
                (3.0, Static, Yielding),
                (3.2, Yielding, Static),
            ],
        );
        assert_eq!(count_steps(&t), 3);
    }

    #[test]
    fn slivers_merge() {
        use Phase::*;
        let t = traj(
            Yielding,
            &[(1.0, Yielding, Static), (1.0 + 5e-12, Static, Yielding), (2.0, Yielding, Static)],
        );
        assert_eq!(count_steps(&t), 1);
    }

    #[test]
    fn empty_trajectory() {
        assert_eq!(count_steps(&Trajectory::new(1e-12)), 0);
    }

    #[test]
    fn csv_header_and_rows() {
        let t = traj(Phase::Yielding, &[]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("tau,x_b,v_b,x_f,v_f,phase,u,gamma,w_act,w_gnd"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,yielding,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0"));
    }
}
