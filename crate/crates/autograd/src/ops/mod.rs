//! Differentiable operations, implemented as methods on [`crate::Graph`].

mod conv;
mod elementwise;
mod loss;
mod norm;
mod shape;

pub use loss::{si_sdr_db, SI_SDR_CAP_DB, SI_SDR_CAP_RATIO};
pub use norm::BatchNormStats;

use crate::{shape_err, Graph, Result, Var};

impl Graph {
    pub(crate) fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return shape_err(format!("{op}: {sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    pub(crate) fn dims3(&self, v: Var) -> Result<(usize, usize, usize)> {
        self.value(v).dims3()
    }
}
