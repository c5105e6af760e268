//! Static SVG rendering of a scenario plus an agent trajectory: map layers
//! as colored cells, target/device overlays, and the path polyline with
//! per-step communication color coding.

use anyhow::{bail, Result};
use sitegrid_core::eval::Trajectory;
use sitegrid_core::map::Cell;
use sitegrid_core::scenario::{Scenario, TaskSetup};

const CELL: f64 = 20.0;
const MARGIN: f64 = 12.0;
const LEGEND_H: f64 = 96.0;

/// Per-device palette, cycled when there are more devices than colors.
const DEVICE_COLORS: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#17becf",
];
const COLOR_START: &str = "#b8e0b8";
const COLOR_NOGO: &str = "#f5c77e";
const COLOR_OBSTACLE: &str = "#4a4a4a";
const COLOR_TARGET: &str = "#4f93d8";
const COLOR_PATH: &str = "#333333";

fn center(c: Cell) -> (f64, f64) {
    (
        MARGIN + (c.x as f64 + 0.5) * CELL,
        MARGIN + (c.y as f64 + 0.5) * CELL,
    )
}

/// Renders the scenario and trajectory to an SVG document. The trajectory
/// may be empty (map-only image). Positions outside the grid are rejected.
pub fn render_svg(scenario: &Scenario, trajectory: &Trajectory, echo: &str) -> Result<String> {
    let size = scenario.map.size();
    for (i, s) in trajectory.steps.iter().enumerate() {
        if s.position.x >= size || s.position.y >= size {
            bail!(
                "trajectory step {i} position {} is outside the {size}x{size} grid",
                s.position
            );
        }
    }
    if !trajectory.steps.is_empty() && (trajectory.start.x >= size || trajectory.start.y >= size) {
        bail!("trajectory start {} is outside the grid", trajectory.start);
    }

    let w = MARGIN * 2.0 + size as f64 * CELL;
    let h = MARGIN * 2.0 + size as f64 * CELL + LEGEND_H;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<!--\n");
    for line in echo.lines() {
        svg.push_str(line);
        svg.push('\n');
    }
    svg.push_str("-->\n");
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));

    // Map layers.
    for y in 0..size {
        for x in 0..size {
            let c = Cell::new(x, y);
            let fill = if scenario.map.is_obstacle(c) {
                COLOR_OBSTACLE
            } else if scenario.map.is_nogo(c) {
                COLOR_NOGO
            } else if scenario.map.is_start(c) {
                COLOR_START
            } else {
                continue;
            };
            let (px, py) = (MARGIN + x as f64 * CELL, MARGIN + y as f64 * CELL);
            svg.push_str(&format!(
                "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\"/>\n"
            ));
        }
    }

    // Task overlay: target cells or devices.
    match &scenario.task {
        TaskSetup::Coverage(target) => {
            let max = target
                .rows()
                .flatten()
                .cloned()
                .fold(0.0_f64, f64::max)
                .max(1.0);
            for y in 0..size {
                for x in 0..size {
                    let v = target.get(Cell::new(x, y));
                    if v > 0.0 {
                        let (px, py) = (MARGIN + x as f64 * CELL, MARGIN + y as f64 * CELL);
                        let opacity = 0.25 + 0.5 * v / max;
                        svg.push_str(&format!(
                            "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{COLOR_TARGET}\" fill-opacity=\"{opacity:.3}\"/>\n"
                        ));
                    }
                }
            }
        }
        TaskSetup::Harvest(devices) => {
            for (i, d) in devices.iter().enumerate() {
                let (cx, cy) = center(d.position);
                let color = DEVICE_COLORS[i % DEVICE_COLORS.len()];
                svg.push_str(&format!(
                    "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"{:.1}\" fill=\"{color}\" stroke=\"black\" stroke-width=\"1\"/>\n",
                    CELL * 0.35
                ));
                svg.push_str(&format!(
                    "<text x=\"{cx}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"middle\">{:.1}</text>\n",
                    cy - CELL * 0.45,
                    d.initial_data
                ));
            }
        }
    }

    // Grid lines.
    let grid_end = MARGIN + size as f64 * CELL;
    for i in 0..=size {
        let p = MARGIN + i as f64 * CELL;
        svg.push_str(&format!(
            "<line x1=\"{p}\" y1=\"{MARGIN}\" x2=\"{p}\" y2=\"{grid_end}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n"
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{p}\" x2=\"{grid_end}\" y2=\"{p}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n"
        ));
    }

    // Path polyline: one segment per step, colored by the communicating
    // device, plain when no link was active.
    if !trajectory.steps.is_empty() {
        let mut prev = trajectory.start;
        for s in &trajectory.steps {
            let (x1, y1) = center(prev);
            let (x2, y2) = center(s.position);
            let color = s
                .comm_device
                .map(|d| DEVICE_COLORS[d % DEVICE_COLORS.len()])
                .unwrap_or(COLOR_PATH);
            if prev == s.position {
                // Hold or blocked step: mark a dot instead of a segment.
                svg.push_str(&format!(
                    "<circle cx=\"{x1}\" cy=\"{y1}\" r=\"2.0\" fill=\"{color}\"/>\n"
                ));
            } else {
                svg.push_str(&format!(
                    "<line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" stroke=\"{color}\" stroke-width=\"2.2\" stroke-linecap=\"round\"/>\n"
                ));
            }
            prev = s.position;
        }
        let (sx, sy) = center(trajectory.start);
        svg.push_str(&format!(
            "<circle cx=\"{sx}\" cy=\"{sy}\" r=\"5\" fill=\"none\" stroke=\"#0a0\" stroke-width=\"2\"/>\n"
        ));
        let (ex, ey) = center(prev);
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"8\" height=\"8\" fill=\"none\" stroke=\"#c00\" stroke-width=\"2\"/>\n",
            ex - 4.0,
            ey - 4.0
        ));
    }

    // Legend.
    let ly = grid_end + 16.0;
    let legend = [
        (COLOR_START, "start/finish"),
        (COLOR_NOGO, "no-go"),
        (COLOR_OBSTACLE, "obstacle"),
        (COLOR_TARGET, "remaining target"),
        (COLOR_PATH, "move without communication"),
        (DEVICE_COLORS[0], "communicating with device (per-device color)"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = ly + (i % 3) as f64 * 16.0;
        let x = MARGIN + (i / 3) as f64 * 220.0;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{label}</text>\n",
            x + 14.0,
            y + 9.0
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitegrid_core::env::{Action, RewardComponents};
    use sitegrid_core::eval::TraceStep;
    use sitegrid_core::scenario::{ScenarioConfig, TargetLayer, TaskMode};

    fn scenario() -> Scenario {
        let map = sitegrid_core::map::PortfolioMap::parse("L..\n.N.\n..O\n").unwrap();
        let mut target = TargetLayer::zeros(3);
        target.set(Cell::new(2, 0), 1.0);
        Scenario {
            map,
            cfg: ScenarioConfig {
                mode: TaskMode::Cra,
                budget_range: (5, 5),
                cra_shape_count_range: (1, 1),
                cra_coverage_range: (0.1, 1.0),
                dh_device_count_range: (1, 1),
                dh_data_range: (1.0, 2.0),
                seed: 0,
            },
            task: TaskSetup::Coverage(target),
        }
    }

    #[test]
    fn empty_trajectory_renders_map_only() {
        let svg = render_svg(&scenario(), &Trajectory::default(), "seed = 0").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(COLOR_OBSTACLE));
        assert!(!svg.contains("stroke-linecap"));
    }

    #[test]
    fn three_step_trajectory_has_three_segments() {
        let step = |i: u32, x: usize| TraceStep {
            index: i,
            position: Cell::new(x, 0),
            action: Action::MoveXPos,
            components: RewardComponents::default(),
            budget_left: 5 - i,
            progress_total: 0.0,
            comm_device: None,
            terminal: false,
        };
        let t = Trajectory {
            start: Cell::new(0, 0),
            steps: vec![step(0, 1), step(1, 2), step(2, 1)],
        };
        let svg = render_svg(&scenario(), &t, "").unwrap();
        let segments = svg.matches("stroke-linecap").count();
        assert_eq!(segments, 3);
    }

    #[test]
    fn off_grid_trajectory_is_rejected() {
        let t = Trajectory {
            start: Cell::new(0, 0),
            steps: vec![TraceStep {
                index: 0,
                position: Cell::new(9, 9),
                action: Action::Hold,
                components: RewardComponents::default(),
                budget_left: 1,
                progress_total: 0.0,
                comm_device: None,
                terminal: true,
            }],
        };
        assert!(render_svg(&scenario(), &t, "").is_err());
    }
}
