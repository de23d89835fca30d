//! Generalized sliding-window schedule.
//!
//! A window covers `T_w` consecutive frames starting at `t0`; the decisions of
//! its target sub-window `{t1, ..., t1 + delta_w - 1}` are final, after which
//! the window advances by `delta_w`. Frames are 0-based.

use std::fmt;
use std::ops::Range;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub t0: usize,
    pub t_w: usize,
    pub t1: usize,
    pub delta_w: usize,
}

impl WindowSpec {
    pub fn new(t0: usize, t_w: usize, t1: usize, delta_w: usize) -> Result<Self> {
        let spec = WindowSpec {
            t0,
            t_w,
            t1,
            delta_w,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_w == 0 || self.delta_w > self.t_w {
            return Err(Error::param(
                "delta_w",
                format!(
                    "need 1 <= delta_w <= T_w, got {} and {}",
                    self.delta_w, self.t_w
                ),
            ));
        }
        if self.t1 < self.t0 || self.t1 + self.delta_w > self.t0 + self.t_w {
            return Err(Error::param(
                "t1",
                format!(
                    "target {}..{} outside window {}..{}",
                    self.t1,
                    self.t1 + self.delta_w,
                    self.t0,
                    self.t0 + self.t_w
                ),
            ));
        }
        Ok(())
    }

    pub fn frames(&self) -> Range<usize> {
        self.t0..self.t0 + self.t_w
    }

    pub fn targets(&self) -> Range<usize> {
        self.t1..self.t1 + self.delta_w
    }

    /// Average number of frames a target decision waits for,
    /// `t0 + T_w - t1 - (delta_w + 1) / 2`.
    pub fn mean_latency(&self) -> f64 {
        (self.t0 + self.t_w) as f64 - self.t1 as f64 - (self.delta_w as f64 + 1.0) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSchedule {
    pub n_frames: usize,
    pub windows: Vec<WindowSpec>,
    /// Index of the window whose target sub-window decides each frame.
    pub decided_by: Vec<usize>,
}

/// Windows of nominal size `t_w` whose targets start `target_offset` frames
/// after the window start and advance by `delta_w`.
///
/// Targets tile `0..n_frames`. A window that would start before frame 0 is
/// truncated at the front (its last frame is unchanged, so the decision
/// latency is preserved); windows are also truncated at the last frame.
pub fn make_schedule(
    n_frames: usize,
    t_w: usize,
    delta_w: usize,
    target_offset: usize,
) -> Result<WindowSchedule> {
    if n_frames == 0 {
        return Err(Error::param("n_frames", "must be at least 1"));
    }
    if t_w == 0 {
        return Err(Error::param("t_w", "must be at least 1"));
    }
    if delta_w == 0 || delta_w > t_w {
        return Err(Error::param(
            "delta_w",
            format!("need 1 <= delta_w <= T_w, got {delta_w} and {t_w}"),
        ));
    }
    if target_offset + delta_w > t_w {
        return Err(Error::param(
            "target_offset",
            format!("offset {target_offset} + step {delta_w} exceeds window {t_w}"),
        ));
    }
    let mut windows = Vec::new();
    let mut decided_by = vec![usize::MAX; n_frames];
    let mut t1 = 0;
    while t1 < n_frames {
        let nominal_end = t1 + (t_w - 1 - target_offset);
        let t0 = t1.saturating_sub(target_offset);
        let end = nominal_end.min(n_frames - 1);
        let delta = delta_w.min(n_frames - t1);
        let spec = WindowSpec::new(t0, end + 1 - t0, t1, delta)?;
        for t in spec.targets() {
            decided_by[t] = windows.len();
        }
        windows.push(spec);
        t1 += delta_w;
    }
    Ok(WindowSchedule {
        n_frames,
        windows,
        decided_by,
    })
}

impl fmt::Display for WindowSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>6} {:>12} {:>12} {:>8}",
            "window", "frames", "targets", "latency"
        )?;
        for (i, w) in self.windows.iter().enumerate() {
            writeln!(
                f,
                "{:>6} {:>12} {:>12} {:>8.2}",
                i,
                format!("{}..{}", w.t0, w.t0 + w.t_w - 1),
                format!("{}..{}", w.t1, w.t1 + w.delta_w - 1),
                w.mean_latency()
            )?;
        }
        Ok(())
    }
}
