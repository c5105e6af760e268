//! Observation pipeline: egocentric centering of the world tensors, the
//! local central crop, the pooled global view, and the flatten-size
//! calculators for the downstream network.
//!
//! A `C x C x n` tensor is recentered into a `(2C-1) x (2C-1) x n` tensor
//! with the agent at index `(C-1, C-1)` and a per-channel pad value
//! outside the physical map. The local view is an odd-sided central crop;
//! the global view is non-overlapping average pooling with high-edge
//! padding when the kernel does not divide the centered side.

use crate::env::AgentState;
use crate::map::{Cell, PortfolioMap};
use crate::scenario::TargetLayer;
use ndarray::{Array2, Array3};
use thiserror::Error;

/// Pad used for the three map channels outside the grid: not a start
/// cell, no-go, obstacle.
pub const MAP_PAD: [f64; 3] = [0.0, 1.0, 1.0];
/// Pad for the target channel outside the grid.
pub const TARGET_PAD: [f64; 1] = [0.0];

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("pad vector has {got} entries, tensor has {expected} channels")]
    PadLength { expected: usize, got: usize },
    #[error("crop side {proj} exceeds centered side {side}")]
    CropTooLarge { proj: usize, side: usize },
    #[error("crop side {0} must be odd")]
    CropEven(usize),
    #[error("invalid observation config: {0}")]
    InvalidConfig(String),
    #[error("flatten-size term for the {which} branch is negative ({value})")]
    NegativeTerm { which: &'static str, value: i64 },
    #[error("conv stack drives the {which} branch spatial side to {value} (< 1)")]
    SpatialUnderflow { which: &'static str, value: i64 },
}

/// Local crop side `proj` and pooling kernel `port`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsConfig {
    pub proj: usize,
    pub port: usize,
}

impl ObsConfig {
    pub fn validate(&self, grid_size: usize) -> Result<(), ObsError> {
        let side = centered_side(grid_size);
        if self.proj == 0 || self.proj % 2 == 0 {
            return Err(ObsError::CropEven(self.proj));
        }
        if self.proj > side {
            return Err(ObsError::CropTooLarge {
                proj: self.proj,
                side,
            });
        }
        if self.port == 0 || self.port > side {
            return Err(ObsError::InvalidConfig(format!(
                "port must be in 1..={side}, got {}",
                self.port
            )));
        }
        Ok(())
    }

    /// Spatial side of the pooled global view.
    pub fn global_side(&self, grid_size: usize) -> usize {
        centered_side(grid_size).div_ceil(self.port)
    }
}

/// Centered side length: 2C - 1.
pub fn centered_side(grid_size: usize) -> usize {
    2 * grid_size - 1
}

/// An egocentric tensor: the physical map translated so the agent sits at
/// index `(C-1, C-1)`, padded per channel everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredMap {
    pub grid_size: usize,
    pub values: Array3<f64>,
    pub pad: Vec<f64>,
}

impl CenteredMap {
    pub fn side(&self) -> usize {
        centered_side(self.grid_size)
    }

    pub fn channels(&self) -> usize {
        self.values.dim().2
    }
}

/// Recenters tensor `a` (indexed `(y, x, ch)`) on the agent position.
pub fn center_map(a: &Array3<f64>, p: Cell, pad: &[f64]) -> Result<CenteredMap, ObsError> {
    let (rows, cols, channels) = a.dim();
    debug_assert_eq!(rows, cols, "world tensors are square");
    let c = rows;
    if pad.len() != channels {
        return Err(ObsError::PadLength {
            expected: channels,
            got: pad.len(),
        });
    }
    let side = centered_side(c);
    let mut values = Array3::zeros((side, side, channels));
    for i in 0..side {
        // source row = i - (C-1) + p.y
        let sy = i as i64 - (c as i64 - 1) + p.y as i64;
        for j in 0..side {
            let sx = j as i64 - (c as i64 - 1) + p.x as i64;
            let inside = sy >= 0 && sy < c as i64 && sx >= 0 && sx < c as i64;
            for ch in 0..channels {
                values[(i, j, ch)] = if inside {
                    a[(sy as usize, sx as usize, ch)]
                } else {
                    pad[ch]
                };
            }
        }
    }
    Ok(CenteredMap {
        grid_size: c,
        values,
        pad: pad.to_vec(),
    })
}

/// Central `proj x proj` crop of a centered tensor, keeping the agent cell
/// in the middle.
pub fn crop_project(b: &CenteredMap, proj: usize) -> Result<Array3<f64>, ObsError> {
    let side = b.side();
    if proj % 2 == 0 || proj == 0 {
        return Err(ObsError::CropEven(proj));
    }
    if proj > side {
        return Err(ObsError::CropTooLarge { proj, side });
    }
    let channels = b.channels();
    let offset = b.grid_size - 1 - proj / 2;
    let mut out = Array3::zeros((proj, proj, channels));
    for i in 0..proj {
        for j in 0..proj {
            for ch in 0..channels {
                out[(i, j, ch)] = b.values[(i + offset, j + offset, ch)];
            }
        }
    }
    Ok(out)
}

/// Non-overlapping `port x port` average pooling of a centered tensor.
/// When `port` does not divide the side, the tensor is padded with the
/// centered map's pad vector on the high-index edges first.
pub fn pool_portfolio(b: &CenteredMap, port: usize) -> Result<Array3<f64>, ObsError> {
    if port == 0 {
        return Err(ObsError::InvalidConfig("port must be >= 1".into()));
    }
    let side = b.side();
    let channels = b.channels();
    let out_side = side.div_ceil(port);
    let mut out = Array3::zeros((out_side, out_side, channels));
    let norm = (port * port) as f64;
    for i in 0..out_side {
        for j in 0..out_side {
            for ch in 0..channels {
                let mut sum = 0.0;
                for u in 0..port {
                    for v in 0..port {
                        let y = i * port + u;
                        let x = j * port + v;
                        sum += if y < side && x < side {
                            b.values[(y, x, ch)]
                        } else {
                            b.pad[ch]
                        };
                    }
                }
                out[(i, j, ch)] = sum / norm;
            }
        }
    }
    Ok(out)
}

/// What the agent sees: local crop and pooled global view of the map and
/// the target layer, plus the remaining-budget scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub local_map: Array3<f64>,
    pub local_target: Array2<f64>,
    pub global_map: Array3<f64>,
    pub global_target: Array2<f64>,
    pub budget: f64,
}

/// Normalization applied before tensors enter the observation: target
/// values divide by `target_scale` (max initial device data for DH, 1 for
/// CRA) and the budget scalar divides by `budget_scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObsNorm {
    pub target_scale: f64,
    pub budget_scale: f64,
}

impl Default for ObsNorm {
    fn default() -> Self {
        ObsNorm {
            target_scale: 1.0,
            budget_scale: 1.0,
        }
    }
}

/// Builds the observation from the full state by composing centering,
/// cropping and pooling with the fixed pad vectors.
pub fn assemble_observation(
    map: &PortfolioMap,
    target: &TargetLayer,
    state: &AgentState,
    cfg: &ObsConfig,
    norm: &ObsNorm,
) -> Result<Observation, ObsError> {
    cfg.validate(map.size())?;
    let map_tensor = map.as_tensor();
    let mut target_tensor = target.as_tensor();
    if norm.target_scale != 1.0 {
        target_tensor.mapv_inplace(|v| v / norm.target_scale);
    }
    let centered_map = center_map(&map_tensor, state.position, &MAP_PAD)?;
    let centered_target = center_map(&target_tensor, state.position, &TARGET_PAD)?;
    let local_map = crop_project(&centered_map, cfg.proj)?;
    let local_target = crop_project(&centered_target, cfg.proj)?
        .index_axis(ndarray::Axis(2), 0)
        .to_owned();
    let global_map = pool_portfolio(&centered_map, cfg.port)?;
    let global_target = pool_portfolio(&centered_target, cfg.port)?
        .index_axis(ndarray::Axis(2), 0)
        .to_owned();
    Ok(Observation {
        local_map,
        local_target,
        global_map,
        global_target,
        budget: state.budget as f64 / norm.budget_scale,
    })
}

/// Literal evaluation of the published flatten-size formula:
/// `N = n_c ((proj - n_k * floor(s_k/2))^2 + (ceil((2C-1)/port) - n_k * floor(s_k/2))^2) + 1`.
///
/// Note this differs from [`actual_flatten_size`], which models the real
/// valid-convolution stack; both are exposed deliberately.
pub fn flatten_size_eq19(
    cfg: &ObsConfig,
    grid_size: usize,
    n_c: usize,
    n_k: usize,
    s_k: usize,
) -> Result<usize, ObsError> {
    let reduction = (n_k * (s_k / 2)) as i64;
    let local = cfg.proj as i64 - reduction;
    if local < 0 {
        return Err(ObsError::NegativeTerm {
            which: "local",
            value: local,
        });
    }
    let global = cfg.global_side(grid_size) as i64 - reduction;
    if global < 0 {
        return Err(ObsError::NegativeTerm {
            which: "global",
            value: global,
        });
    }
    Ok(n_c * ((local * local) as usize + (global * global) as usize) + 1)
}

/// Flatten width implied by the concrete architecture: each valid
/// `s_k x s_k` convolution shrinks a side by `s_k - 1`; both branch
/// feature maps are flattened and the budget scalar appended.
pub fn actual_flatten_size(
    cfg: &ObsConfig,
    grid_size: usize,
    n_c: usize,
    n_k: usize,
    s_k: usize,
) -> Result<usize, ObsError> {
    let reduction = (n_k * (s_k - 1)) as i64;
    let local = cfg.proj as i64 - reduction;
    let global = cfg.global_side(grid_size) as i64 - reduction;
    if n_k > 0 {
        if local < 1 {
            return Err(ObsError::SpatialUnderflow {
                which: "local",
                value: local,
            });
        }
        if global < 1 {
            return Err(ObsError::SpatialUnderflow {
                which: "global",
                value: global,
            });
        }
    }
    Ok(n_c * ((local * local) as usize + (global * global) as usize) + 1)
}
