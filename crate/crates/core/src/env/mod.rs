//! Built-in environments.

mod physics;
mod smooth;
mod tabular;

pub use physics::{Acrobot, CartPole, PhysicsEnv, PhysicsKind};
pub use smooth::{SmoothCosineMdp, SmoothQ};
pub use tabular::{make_gridworld, make_random_tabular, TabularError, TabularMdp};
