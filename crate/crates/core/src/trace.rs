//! Iteration traces for the block-greedy solvers.

/// One greedy iteration: the chosen block, its marginal density, and the
/// cumulative cost and value after adding it.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: u32,
    pub block: String,
    pub density: f64,
    pub cost: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GreedyTrace {
    pub rows: Vec<TraceRow>,
}

impl GreedyTrace {
    pub fn push(&mut self, block: String, density: f64, cost: f64, value: f64) {
        self.rows.push(TraceRow {
            iteration: self.rows.len() as u32 + 1,
            block,
            density,
            cost,
            value,
        });
    }

    /// CSV with header `iteration,block,density,cost,value`. Block labels
    /// use `;` as the inner separator so rows never need quoting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,block,density,cost,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.block, r.density, r.cost, r.value
            ));
        }
        out
    }
}
