/*
Copyright 2026 The linksdf Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Scenario description shared by the `bench` and `replay` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linksdf::format::{read_model, read_trajectory_csv};
use linksdf::fixtures;
use linksdf::neural::TinyMlp;
use linksdf::precompute::build_robot_link_sdfs;
use linksdf::robot::required_extent;
use linksdf::{
    CanonicalPoints, ConfigBatch, EnvGrid, ExactProvider, Exec, LinkPoseBatch, LinkSdf,
    ObstacleVoxelSet, RobotModel, TransformProvider,
};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Exact,
    Neural,
}

#[derive(Debug, Clone, Args)]
pub struct RobotArgs {
    /// Robot description (JSON), or `builtin:arm3` / `builtin:arm6`.
    #[arg(long, default_value = "builtin:arm3")]
    pub robot: String,
    /// Half-extent of each link field [m].
    #[arg(long, default_value_t = 0.48)]
    pub link_extent: f64,
    /// Cell size of each link field [m].
    #[arg(long, default_value_t = 0.01)]
    pub link_res: f64,
}

impl RobotArgs {
    pub fn load_robot(&self) -> anyhow::Result<RobotModel> {
        match self.robot.strip_prefix("builtin:") {
            Some("arm3") => Ok(fixtures::three_link_model()),
            Some("arm6") => Ok(fixtures::six_dof_model()),
            Some(other) => Err(UsageError(format!("unknown builtin robot {other:?}")).into()),
            None => Ok(RobotModel::load(Path::new(&self.robot))?),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    /// Half-extent of the environment grid [m].
    #[arg(long, default_value_t = 1.0)]
    pub grid_extent: f64,
    /// Environment voxel size [m].
    #[arg(long, default_value_t = 0.04)]
    pub grid_res: f64,
    /// Joint-space waypoints, one per row. Random configurations when absent.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Number of random configurations when no trajectory is given.
    #[arg(long, default_value_t = 50)]
    pub configs: usize,
    /// Point-cloud manifest.
    #[arg(long)]
    pub clouds: Option<PathBuf>,
    /// Number of random obstacle points when no clouds are given.
    #[arg(long, default_value_t = 3000)]
    pub obstacles: usize,
    #[arg(long, value_enum, default_value_t = ProviderKind::Exact)]
    pub provider: ProviderKind,
    /// Trained model for `--provider neural`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Protective separation distance [m].
    #[arg(long, default_value_t = 0.03)]
    pub d_prot: f64,
    /// Assumed obstacle speed [m/s].
    #[arg(long, default_value_t = 1.6)]
    pub v_obs: f64,
    /// Fail instead of warning when the link extent is below the required extent.
    #[arg(long)]
    pub strict_extent: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Everything needed to build robot fields for a trajectory.
pub struct Scenario {
    pub model: RobotModel,
    pub grid: EnvGrid,
    pub sdfs: Vec<LinkSdf>,
    pub points: CanonicalPoints,
    pub provider: Box<dyn TransformProvider>,
    pub configs: ConfigBatch,
    pub poses: LinkPoseBatch,
}

impl ScenarioArgs {
    pub fn grid(&self) -> anyhow::Result<EnvGrid> {
        Ok(EnvGrid::cubic(self.grid_extent, self.grid_res)?)
    }

    pub fn check_extent(&self, model: &RobotModel) -> anyhow::Result<()> {
        let need = required_extent(self.v_obs, model.max_braking_time(), self.d_prot, model.link_reach());
        if self.robot.link_extent < need {
            let msg = format!(
                "link extent {} m is below the required {need:.3} m (v_obs {} m/s, braking {:.3} s, d_prot {} m, reach {} m)",
                self.robot.link_extent,
                self.v_obs,
                model.max_braking_time(),
                self.d_prot,
                model.link_reach()
            );
            if self.strict_extent {
                bail!(UsageError(msg));
            }
            log::warn!("{msg}");
        }
        Ok(())
    }

    pub fn load_configs(&self, model: &RobotModel, rng: &mut ChaCha8Rng) -> anyhow::Result<ConfigBatch> {
        match &self.trajectory {
            Some(p) => Ok(read_trajectory_csv(p)?),
            None => Ok(model.random_configs(self.configs, rng)),
        }
    }

    pub fn provider(&self, points: &CanonicalPoints) -> anyhow::Result<Box<dyn TransformProvider>> {
        match self.provider {
            ProviderKind::Exact => Ok(Box::new(ExactProvider::new(points))),
            ProviderKind::Neural => {
                let path = self
                    .model
                    .as_ref()
                    .ok_or_else(|| UsageError("--provider neural needs --model".into()))?;
                let m: TinyMlp = read_model(path)?;
                if m.num_points() != points.len() {
                    bail!(UsageError(format!(
                        "model {} maps {} points, the window needs {}",
                        path.display(),
                        m.num_points(),
                        points.len()
                    )));
                }
                Ok(Box::new(m))
            }
        }
    }

    pub fn build(&self, exec: Exec) -> anyhow::Result<Scenario> {
        let model = self.robot.load_robot()?;
        self.check_extent(&model)?;
        let grid = self.grid()?;
        let points = CanonicalPoints::masked(self.robot.link_extent, &grid)?;
        let provider = self.provider(&points)?;
        let sdfs = build_robot_link_sdfs(&model, self.robot.link_extent, self.robot.link_res, exec)
            .context("building link fields")?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let configs = self.load_configs(&model, &mut rng)?;
        let poses = model.forward_kinematics_batch_with(&configs, exec)?;
        Ok(Scenario {
            model,
            grid,
            sdfs,
            points,
            provider,
            configs,
            poses,
        })
    }
}

/// `n` uniformly random points inside the grid, from a stream independent
/// of the configuration sampler.
pub fn random_cloud(grid: &EnvGrid, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let e = *grid.extent();
    (0..n)
        .map(|_| Vector3::from_fn(|a, _| rng.random_range(-e[a]..e[a])))
        .collect()
}

/// Random obstacles with exactly `n` distinct voxels.
pub fn random_obstacles(grid: &EnvGrid, n: usize, seed: u64) -> anyhow::Result<ObstacleVoxelSet> {
    let total = grid.voxel_count();
    if n > total {
        bail!(UsageError(format!("{n} obstacle voxels requested, grid has {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let picked = rand::seq::index::sample(&mut rng, total, n);
    Ok(ObstacleVoxelSet::from_voxels(grid, picked.iter().map(|l| grid.unravel(l)))?)
}
