//! Scenario data: task configuration, randomized target/device generation,
//! and the versioned scenario file format.

use crate::env::AgentState;
use crate::map::{Cell, MapError, PortfolioMap};
use crate::rng::Rng;
use rand::Rng as _;
use thiserror::Error;

/// Attempts to regenerate a CRA target layer before giving up on the
/// requested coverage range.
pub const CRA_RESAMPLE_ATTEMPTS: usize = 1000;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;
const SCENARIO_HEADER: &str = "sitegrid-scenario";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskMode {
    /// Coverage resource allocation: sweep the visibility window over all
    /// target cells.
    Cra,
    /// Data harvesting: collect data from stationary devices over the
    /// wireless channel.
    Dh,
}

impl TaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMode::Cra => "cra",
            TaskMode::Dh => "dh",
        }
    }

    pub fn parse(s: &str) -> Option<TaskMode> {
        match s {
            "cra" => Some(TaskMode::Cra),
            "dh" => Some(TaskMode::Dh),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("coverage range not satisfied after {0} target resamples (map too constrained)")]
    CoverageUnsatisfiable(usize),
    #[error("requested {requested} devices but the map has only {available} non-obstacle cells")]
    NotEnoughCells { requested: usize, available: usize },
    #[error("scenario file: {0}")]
    Corrupted(String),
    #[error("scenario file version {got} is not supported (expected {SCENARIO_FORMAT_VERSION})")]
    VersionMismatch { got: String },
    #[error("scenario file: unknown key {0:?}")]
    UnknownKey(String),
    #[error("scenario file: bad value for {key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("device at {0} sits on an obstacle cell")]
    DeviceOnObstacle(Cell),
    #[error("two devices share cell {0}")]
    DuplicateDeviceCell(Cell),
    #[error("device at {0} has non-positive data")]
    NonPositiveData(Cell),
    #[error("target value at {0} sits on an obstacle cell")]
    TargetOnObstacle(Cell),
    #[error("CRA target value at {0} is not 0 or 1")]
    NonBinaryTarget(Cell),
}

/// Ranges driving randomized scenario generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub mode: TaskMode,
    /// Initial decision budget, sampled uniformly (inclusive).
    pub budget_range: (u32, u32),
    /// Number of rectangles layered into a CRA target.
    pub cra_shape_count_range: (u32, u32),
    /// Accepted fraction of non-obstacle cells covered by the CRA target.
    pub cra_coverage_range: (f64, f64),
    pub dh_device_count_range: (u32, u32),
    /// Initial data per device, in data units.
    pub dh_data_range: (f64, f64),
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::InvalidConfig(msg.to_string()));
        if self.budget_range.0 > self.budget_range.1 {
            return bad("budget range must be nonempty");
        }
        if self.cra_shape_count_range.0 > self.cra_shape_count_range.1
            || self.cra_shape_count_range.0 == 0
        {
            return bad("CRA shape count range must be nonempty with min >= 1");
        }
        let (lo, hi) = self.cra_coverage_range;
        if !(lo <= hi && lo > 0.0 && hi <= 1.0) {
            return bad("CRA coverage range must be a nonempty subset of (0, 1]");
        }
        if self.dh_device_count_range.0 > self.dh_device_count_range.1
            || self.dh_device_count_range.0 == 0
        {
            return bad("DH device count range must be nonempty with min >= 1");
        }
        if self.dh_data_range.0 > self.dh_data_range.1 || self.dh_data_range.0 <= 0.0 {
            return bad("DH data range must be nonempty and positive");
        }
        Ok(())
    }
}

/// The per-cell target map shared by both task modes: 0/1 coverage demand
/// for CRA, remaining data at device cells for DH.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetLayer {
    size: usize,
    values: Vec<f64>,
}

impl TargetLayer {
    pub fn zeros(size: usize) -> Self {
        TargetLayer {
            size,
            values: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, c: Cell) -> f64 {
        self.values[c.y * self.size + c.x]
    }

    pub fn set(&mut self, c: Cell, v: f64) {
        self.values[c.y * self.size + c.x] = v;
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.size)
    }

    /// The layer as a `size x size x 1` tensor indexed `(y, x, 0)`.
    pub fn as_tensor(&self) -> ndarray::Array3<f64> {
        ndarray::Array3::from_shape_vec((self.size, self.size, 1), self.values.clone())
            .expect("length matches shape")
    }
}

/// A stationary data-harvesting device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceSpec {
    pub position: Cell,
    pub initial_data: f64,
}

/// Generates a CRA target layer as a union of random axis-aligned
/// rectangles, resampling the whole layer until the covered fraction of
/// non-obstacle cells falls inside the configured range.
pub fn gen_cra_target(
    map: &PortfolioMap,
    cfg: &ScenarioConfig,
    rng: &mut Rng,
) -> Result<TargetLayer, ScenarioError> {
    cfg.validate()?;
    let size = map.size();
    let span = (size / 2).max(1);
    let non_obstacle = map.non_obstacle_cells().len();
    let (lo, hi) = cfg.cra_coverage_range;
    for _ in 0..CRA_RESAMPLE_ATTEMPTS {
        let shapes = rng.random_range(cfg.cra_shape_count_range.0..=cfg.cra_shape_count_range.1);
        let mut layer = TargetLayer::zeros(size);
        for _ in 0..shapes {
            let w = rng.random_range(1..=span);
            let h = rng.random_range(1..=span);
            let x0 = rng.random_range(0..=size - w);
            let y0 = rng.random_range(0..=size - h);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    let c = Cell::new(x, y);
                    if !map.is_obstacle(c) {
                        layer.set(c, 1.0);
                    }
                }
            }
        }
        let frac = layer.nonzero_count() as f64 / non_obstacle as f64;
        if frac >= lo && frac <= hi {
            return Ok(layer);
        }
    }
    Err(ScenarioError::CoverageUnsatisfiable(CRA_RESAMPLE_ATTEMPTS))
}

/// Places devices uniformly over non-obstacle cells (without replacement)
/// with data drawn uniformly from the configured range.
pub fn gen_dh_devices(
    map: &PortfolioMap,
    cfg: &ScenarioConfig,
    rng: &mut Rng,
) -> Result<Vec<DeviceSpec>, ScenarioError> {
    cfg.validate()?;
    let count =
        rng.random_range(cfg.dh_device_count_range.0..=cfg.dh_device_count_range.1) as usize;
    let cells = map.non_obstacle_cells();
    if cells.len() < count {
        return Err(ScenarioError::NotEnoughCells {
            requested: count,
            available: cells.len(),
        });
    }
    let picks = rand::seq::index::sample(rng, cells.len(), count);
    Ok(picks
        .into_iter()
        .map(|i| DeviceSpec {
            position: cells[i],
            initial_data: rng.random_range(cfg.dh_data_range.0..=cfg.dh_data_range.1),
        })
        .collect())
}

/// Samples the agent's initial position (uniform over start/finish cells)
/// and decision budget (uniform over the configured range).
pub fn sample_initial_state(
    map: &PortfolioMap,
    cfg: &ScenarioConfig,
    rng: &mut Rng,
) -> AgentState {
    let starts = map.start_cells();
    assert!(!starts.is_empty(), "map invariant: at least one start cell");
    let position = starts[rng.random_range(0..starts.len())];
    let budget = rng.random_range(cfg.budget_range.0..=cfg.budget_range.1);
    AgentState::new(position, budget)
}

/// Mode-specific scenario payload.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskSetup {
    Coverage(TargetLayer),
    Harvest(Vec<DeviceSpec>),
}

/// A complete generated scenario: map, configuration, and the sampled
/// target layer or device list.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: PortfolioMap,
    pub cfg: ScenarioConfig,
    pub task: TaskSetup,
}

impl Scenario {
    /// Generates a scenario from `seed`, overriding the seed stored in
    /// `cfg`. Generation is a pure function of (map, cfg, seed).
    pub fn generate(
        map: &PortfolioMap,
        cfg: &ScenarioConfig,
        seed: u64,
    ) -> Result<Scenario, ScenarioError> {
        let mut cfg = cfg.clone();
        cfg.seed = seed;
        let mut rng = crate::rng::rng_from(seed);
        let task = match cfg.mode {
            TaskMode::Cra => TaskSetup::Coverage(gen_cra_target(map, &cfg, &mut rng)?),
            TaskMode::Dh => TaskSetup::Harvest(gen_dh_devices(map, &cfg, &mut rng)?),
        };
        Ok(Scenario {
            map: map.clone(),
            cfg,
            task,
        })
    }

    /// Scale used to normalize target values in observations: the largest
    /// initial device payload for DH, 1 for CRA.
    pub fn target_scale(&self) -> f64 {
        match &self.task {
            TaskSetup::Coverage(_) => 1.0,
            TaskSetup::Harvest(devices) => devices
                .iter()
                .map(|d| d.initial_data)
                .fold(1.0_f64, f64::max),
        }
    }

    /// Serializes to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{SCENARIO_HEADER} v{SCENARIO_FORMAT_VERSION}\n"
        ));
        let c = &self.cfg;
        out.push_str(&format!("mode = {}\n", c.mode.as_str()));
        out.push_str(&format!("seed = {}\n", c.seed));
        out.push_str(&format!("budget_min = {}\n", c.budget_range.0));
        out.push_str(&format!("budget_max = {}\n", c.budget_range.1));
        out.push_str(&format!("cra_shapes_min = {}\n", c.cra_shape_count_range.0));
        out.push_str(&format!("cra_shapes_max = {}\n", c.cra_shape_count_range.1));
        out.push_str(&format!("cra_cover_min = {}\n", c.cra_coverage_range.0));
        out.push_str(&format!("cra_cover_max = {}\n", c.cra_coverage_range.1));
        out.push_str(&format!("dh_devices_min = {}\n", c.dh_device_count_range.0));
        out.push_str(&format!("dh_devices_max = {}\n", c.dh_device_count_range.1));
        out.push_str(&format!("dh_data_min = {}\n", c.dh_data_range.0));
        out.push_str(&format!("dh_data_max = {}\n", c.dh_data_range.1));
        out.push_str("map:\n");
        out.push_str(&self.map.to_text());
        match &self.task {
            TaskSetup::Coverage(target) => {
                out.push_str("target:\n");
                for row in target.rows() {
                    let mut tokens: Vec<String> = Vec::new();
                    let mut run_value = row[0];
                    let mut run_len = 0usize;
                    for &v in row {
                        if v == run_value {
                            run_len += 1;
                        } else {
                            tokens.push(format!("{run_len}x{run_value}"));
                            run_value = v;
                            run_len = 1;
                        }
                    }
                    tokens.push(format!("{run_len}x{run_value}"));
                    out.push_str(&tokens.join(" "));
                    out.push('\n');
                }
            }
            TaskSetup::Harvest(devices) => {
                out.push_str("devices:\n");
                for d in devices {
                    out.push_str(&format!(
                        "{} {} {}\n",
                        d.position.x, d.position.y, d.initial_data
                    ));
                }
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses and validates a scenario file.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ScenarioError::Corrupted("empty file".into()))?;
        let expected = format!("{SCENARIO_HEADER} v{SCENARIO_FORMAT_VERSION}");
        if header != expected {
            if header.starts_with(SCENARIO_HEADER) {
                return Err(ScenarioError::VersionMismatch {
                    got: header.to_string(),
                });
            }
            return Err(ScenarioError::Corrupted(format!(
                "bad header {header:?}"
            )));
        }

        let mut kv = std::collections::BTreeMap::new();
        let mut map_lines: Vec<String> = Vec::new();
        let mut target_lines: Vec<String> = Vec::new();
        let mut device_lines: Vec<String> = Vec::new();
        let mut section = "kv";
        let mut ended = false;
        for line in lines {
            if line == "end" {
                ended = true;
                break;
            }
            match section {
                "kv" => {
                    if line == "map:" {
                        section = "map";
                    } else if let Some((k, v)) = line.split_once('=') {
                        let _ = kv.insert(k.trim().to_string(), v.trim().to_string());
                    } else {
                        return Err(ScenarioError::Corrupted(format!(
                            "expected key = value or map:, got {line:?}"
                        )));
                    }
                }
                "map" => {
                    if line == "target:" {
                        section = "target";
                    } else if line == "devices:" {
                        section = "devices";
                    } else {
                        map_lines.push(line.to_string());
                    }
                }
                "target" => target_lines.push(line.to_string()),
                "devices" => device_lines.push(line.to_string()),
                _ => unreachable!(),
            }
        }
        if !ended {
            return Err(ScenarioError::Corrupted("missing end marker".into()));
        }

        let get = |key: &str| -> Result<String, ScenarioError> {
            kv.get(key)
                .cloned()
                .ok_or_else(|| ScenarioError::Corrupted(format!("missing key {key}")))
        };
        let parse_u32 = |key: &str| -> Result<u32, ScenarioError> {
            get(key)?.parse().map_err(|e| ScenarioError::BadValue {
                key: key.into(),
                msg: format!("{e}"),
            })
        };
        let parse_f64 = |key: &str| -> Result<f64, ScenarioError> {
            get(key)?.parse().map_err(|e| ScenarioError::BadValue {
                key: key.into(),
                msg: format!("{e}"),
            })
        };
        let mode_str = get("mode")?;
        let mode = TaskMode::parse(&mode_str).ok_or_else(|| ScenarioError::BadValue {
            key: "mode".into(),
            msg: format!("unknown mode {mode_str:?}"),
        })?;
        let known = [
            "mode",
            "seed",
            "budget_min",
            "budget_max",
            "cra_shapes_min",
            "cra_shapes_max",
            "cra_cover_min",
            "cra_cover_max",
            "dh_devices_min",
            "dh_devices_max",
            "dh_data_min",
            "dh_data_max",
        ];
        for key in kv.keys() {
            if !known.contains(&key.as_str()) {
                return Err(ScenarioError::UnknownKey(key.clone()));
            }
        }
        let cfg = ScenarioConfig {
            mode,
            budget_range: (parse_u32("budget_min")?, parse_u32("budget_max")?),
            cra_shape_count_range: (parse_u32("cra_shapes_min")?, parse_u32("cra_shapes_max")?),
            cra_coverage_range: (parse_f64("cra_cover_min")?, parse_f64("cra_cover_max")?),
            dh_device_count_range: (parse_u32("dh_devices_min")?, parse_u32("dh_devices_max")?),
            dh_data_range: (parse_f64("dh_data_min")?, parse_f64("dh_data_max")?),
            seed: get("seed")?.parse().map_err(|e| ScenarioError::BadValue {
                key: "seed".into(),
                msg: format!("{e}"),
            })?,
        };
        cfg.validate()?;

        let map = PortfolioMap::parse(&map_lines.join("\n"))?;

        let task = match mode {
            TaskMode::Cra => {
                if target_lines.len() != map.size() {
                    return Err(ScenarioError::Corrupted(format!(
                        "expected {} target rows, got {}",
                        map.size(),
                        target_lines.len()
                    )));
                }
                let mut target = TargetLayer::zeros(map.size());
                for (y, line) in target_lines.iter().enumerate() {
                    let mut x = 0usize;
                    for token in line.split_whitespace() {
                        let (count, value) = token.split_once('x').ok_or_else(|| {
                            ScenarioError::Corrupted(format!("bad run token {token:?}"))
                        })?;
                        let count: usize = count.parse().map_err(|_| {
                            ScenarioError::Corrupted(format!("bad run length in {token:?}"))
                        })?;
                        let value: f64 = value.parse().map_err(|_| {
                            ScenarioError::Corrupted(format!("bad run value in {token:?}"))
                        })?;
                        for _ in 0..count {
                            if x >= map.size() {
                                return Err(ScenarioError::Corrupted(format!(
                                    "target row {} overflows the grid",
                                    y + 1
                                )));
                            }
                            target.set(Cell::new(x, y), value);
                            x += 1;
                        }
                    }
                    if x != map.size() {
                        return Err(ScenarioError::Corrupted(format!(
                            "target row {} has {} cells, expected {}",
                            y + 1,
                            x,
                            map.size()
                        )));
                    }
                }
                validate_cra_target(&map, &target)?;
                TaskSetup::Coverage(target)
            }
            TaskMode::Dh => {
                let mut devices = Vec::with_capacity(device_lines.len());
                for line in &device_lines {
                    let parts: Vec<&str> = line.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(ScenarioError::Corrupted(format!(
                            "bad device line {line:?}"
                        )));
                    }
                    let x: usize = parts[0].parse().map_err(|_| {
                        ScenarioError::Corrupted(format!("bad device x in {line:?}"))
                    })?;
                    let y: usize = parts[1].parse().map_err(|_| {
                        ScenarioError::Corrupted(format!("bad device y in {line:?}"))
                    })?;
                    let data: f64 = parts[2].parse().map_err(|_| {
                        ScenarioError::Corrupted(format!("bad device data in {line:?}"))
                    })?;
                    devices.push(DeviceSpec {
                        position: Cell::new(x, y),
                        initial_data: data,
                    });
                }
                validate_devices(&map, &devices)?;
                TaskSetup::Harvest(devices)
            }
        };

        Ok(Scenario { map, cfg, task })
    }
}

/// Checks the CRA target invariants: binary values, none on obstacles.
pub fn validate_cra_target(
    map: &PortfolioMap,
    target: &TargetLayer,
) -> Result<(), ScenarioError> {
    for c in map.cells() {
        let v = target.get(c);
        if v != 0.0 && v != 1.0 {
            return Err(ScenarioError::NonBinaryTarget(c));
        }
        if v != 0.0 && map.is_obstacle(c) {
            return Err(ScenarioError::TargetOnObstacle(c));
        }
    }
    Ok(())
}

/// Checks the device invariants: in-grid non-obstacle positions, unique
/// cells, positive data.
pub fn validate_devices(
    map: &PortfolioMap,
    devices: &[DeviceSpec],
) -> Result<(), ScenarioError> {
    let mut seen = std::collections::HashSet::new();
    for d in devices {
        if d.position.x >= map.size() || d.position.y >= map.size() {
            return Err(ScenarioError::Corrupted(format!(
                "device at {} is outside the grid",
                d.position
            )));
        }
        if map.is_obstacle(d.position) {
            return Err(ScenarioError::DeviceOnObstacle(d.position));
        }
        if !seen.insert(d.position) {
            return Err(ScenarioError::DuplicateDeviceCell(d.position));
        }
        if d.initial_data <= 0.0 {
            return Err(ScenarioError::NonPositiveData(d.position));
        }
    }
    Ok(())
}
