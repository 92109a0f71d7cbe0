//! Shared fixtures for planning benchmarks.

use std::sync::Arc;

use tvmdp::{
    make_vortex, GridWorld, MotionConfig, NoiseConfig, Problem, RewardModel, TimingConfig, Vec2,
};

/// Square grid of side `side` with unit cells, start at 0 and goal in the
/// opposite corner, under a vortex orbiting the grid center.
pub fn vortex_problem(side: usize) -> Arc<Problem> {
    let grid = GridWorld::square(side, 1.0, side * side - 1).expect("valid grid");
    let c = side as f64 / 2.0;
    let field = make_vortex(Vec2::new(c, c), 0.1, 0.2, c * 0.4).expect("valid vortex");
    let motion =
        MotionConfig::nominal(&grid, 1.0, NoiseConfig::default_for(1.0)).expect("valid motion");
    Arc::new(
        Problem::new(
            grid,
            field,
            motion,
            RewardModel::default(),
            TimingConfig::default(),
        )
        .expect("valid problem"),
    )
}
