use std::sync::Arc;

use crate::error::Result;
use crate::he::{EvalMetrics, Evaluator, PublicKey};
use crate::interp::{named_tables, NamedTables};
use crate::ring::RingParams;

/// An evaluator paired with the interpolation tables for its ring.
#[derive(Clone, Debug)]
pub struct Circuit {
    ev: Evaluator,
    tables: Arc<NamedTables>,
}

impl Circuit {
    pub fn new(pk: &PublicKey) -> Result<Self> {
        Self::from_evaluator(Evaluator::new(pk))
    }

    pub fn from_evaluator(ev: Evaluator) -> Result<Self> {
        let tables = named_tables(ev.ring())?;
        Ok(Circuit { ev, tables })
    }

    pub fn with_tables(ev: Evaluator, tables: Arc<NamedTables>) -> Self {
        Circuit { ev, tables }
    }

    pub fn ev(&self) -> &Evaluator {
        &self.ev
    }

    pub fn tables(&self) -> &NamedTables {
        &self.tables
    }

    pub fn ring(&self) -> &RingParams {
        self.ev.ring()
    }

    pub fn metrics(&self) -> EvalMetrics {
        self.ev.metrics()
    }

    pub fn metered<R>(&self, body: impl FnOnce(&Circuit) -> R) -> (R, EvalMetrics) {
        let tables = self.tables.clone();
        self.ev.metered(|ev| body(&Circuit { ev: ev.clone(), tables }))
    }
}
