//! Trajectory record files: one CSV row per step, with the start position
//! and config echo in the comment header.

use anyhow::{anyhow, bail, Context, Result};
use sitegrid_core::env::{Action, RewardComponents};
use sitegrid_core::eval::{TraceStep, Trajectory};
use sitegrid_core::map::Cell;

pub const TRAJECTORY_HEADER: &str =
    "step,x,y,action,r_cov,r_safety,r_decision,r_delay,budget_left,progress_total,comm_device,terminal";

pub fn trajectory_to_csv(trajectory: &Trajectory, echo: &str) -> String {
    let mut out = String::new();
    out.push_str("# sitegrid trajectory v1\n");
    out.push_str(&format!("# start_x = {}\n", trajectory.start.x));
    out.push_str(&format!("# start_y = {}\n", trajectory.start.y));
    for line in echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &trajectory.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.index,
            s.position.x,
            s.position.y,
            s.action.as_str(),
            s.components.coverage_gain,
            s.components.safety,
            s.components.decision,
            s.components.delay,
            s.budget_left,
            s.progress_total,
            s.comm_device.map(|d| d.to_string()).unwrap_or_default(),
            s.terminal as u8,
        ));
    }
    out
}

pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut start_x = None;
    let mut start_y = None;
    let mut steps = Vec::new();
    let mut seen_header = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("start_x =") {
                start_x = Some(v.trim().parse::<usize>().context("start_x")?);
            } else if let Some(v) = rest.strip_prefix("start_y =") {
                start_y = Some(v.trim().parse::<usize>().context("start_y")?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != TRAJECTORY_HEADER {
                bail!("trajectory line {}: unexpected column header", ln + 1);
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            bail!("trajectory line {}: expected 12 fields, got {}", ln + 1, f.len());
        }
        let err = |what: &str| anyhow!("trajectory line {}: bad {what}", ln + 1);
        steps.push(TraceStep {
            index: f[0].parse().map_err(|_| err("step"))?,
            position: Cell::new(
                f[1].parse().map_err(|_| err("x"))?,
                f[2].parse().map_err(|_| err("y"))?,
            ),
            action: Action::parse(f[3]).ok_or_else(|| err("action"))?,
            components: RewardComponents {
                coverage_gain: f[4].parse().map_err(|_| err("r_cov"))?,
                safety: f[5].parse().map_err(|_| err("r_safety"))?,
                decision: f[6].parse().map_err(|_| err("r_decision"))?,
                delay: f[7].parse().map_err(|_| err("r_delay"))?,
            },
            budget_left: f[8].parse().map_err(|_| err("budget_left"))?,
            progress_total: f[9].parse().map_err(|_| err("progress_total"))?,
            comm_device: if f[10].is_empty() {
                None
            } else {
                Some(f[10].parse().map_err(|_| err("comm_device"))?)
            },
            terminal: f[11] == "1",
        });
    }
    let start = Cell::new(
        start_x.ok_or_else(|| anyhow!("trajectory file missing start_x header"))?,
        start_y.ok_or_else(|| anyhow!("trajectory file missing start_y header"))?,
    );
    // Step indices must be contiguous from zero and only the last entry may
    // be terminal.
    for (i, s) in steps.iter().enumerate() {
        if s.index as usize != i {
            bail!("trajectory step indices are not contiguous at {}", s.index);
        }
        if s.terminal && i + 1 != steps.len() {
            bail!("terminal step {} is not the last entry", s.index);
        }
    }
    Ok(Trajectory { start, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let t = Trajectory {
            start: Cell::new(2, 3),
            steps: vec![
                TraceStep {
                    index: 0,
                    position: Cell::new(3, 3),
                    action: Action::MoveXPos,
                    components: RewardComponents {
                        coverage_gain: 0.8,
                        safety: 0.0,
                        decision: 0.0,
                        delay: -0.1,
                    },
                    budget_left: 9,
                    progress_total: 2.0,
                    comm_device: None,
                    terminal: false,
                },
                TraceStep {
                    index: 1,
                    position: Cell::new(3, 3),
                    action: Action::Assign,
                    components: RewardComponents {
                        coverage_gain: 0.0,
                        safety: -1.0,
                        decision: 0.0,
                        delay: -0.1,
                    },
                    budget_left: 8,
                    progress_total: 2.0,
                    comm_device: Some(1),
                    terminal: true,
                },
            ],
        };
        let csv = trajectory_to_csv(&t, "seed = 1");
        let back = trajectory_from_csv(&csv).unwrap();
        assert_eq!(back.start, t.start);
        assert_eq!(back.steps.len(), 2);
        assert_eq!(back.steps[1].comm_device, Some(1));
        assert!(back.steps[1].terminal);
        assert_eq!(back.steps[0].components.coverage_gain, 0.8);
    }

    #[test]
    fn non_contiguous_indices_rejected() {
        let t = "# start_x = 0\n# start_y = 0\n".to_string()
            + TRAJECTORY_HEADER
            + "\n1,0,0,hold,0,0,0,-0.1,3,0,,0\n";
        assert!(trajectory_from_csv(&t).is_err());
    }
}
