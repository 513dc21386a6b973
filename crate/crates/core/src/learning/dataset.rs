use std::io::{Read, Write};

use crate::dynamics::{fmt_f64, parse_finite, ControlVec, StateVec, STATE_DIM};
use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 7] = ["x1", "x2", "x3", "x4", "u1", "u2", "cost_to_go"];

/// Supervised `(state, control)` pairs with an optional cost-to-go per row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<StateVec>,
    pub control_targets: Vec<ControlVec>,
    pub cost_targets: Vec<Option<f64>>,
}

impl Dataset {
    pub fn push(&mut self, x: StateVec, u: ControlVec, cost: Option<f64>) {
        self.inputs.push(x);
        self.control_targets.push(u);
        self.cost_targets.push(cost);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Rows carrying a cost-to-go label.
    pub fn cost_rows(&self) -> impl Iterator<Item = (&StateVec, f64)> {
        self.inputs
            .iter()
            .zip(&self.cost_targets)
            .filter_map(|(x, c)| c.map(|c| (x, c)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DATASET_HEADER)?;
        for ((x, u), c) in self.inputs.iter().zip(&self.control_targets).zip(&self.cost_targets) {
            let mut rec: Vec<String> = x.iter().chain(u.iter()).map(|v| fmt_f64(*v)).collect();
            rec.push(c.map(fmt_f64).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() != DATASET_HEADER.len()
            || header.iter().zip(DATASET_HEADER).any(|(a, b)| a.trim() != b)
        {
            return Err(Error::Parse(format!(
                "dataset header must be {}",
                DATASET_HEADER.join(",")
            )));
        }
        let mut data = Dataset::default();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != DATASET_HEADER.len() {
                return Err(Error::DimensionMismatch {
                    expected: DATASET_HEADER.len(),
                    got: rec.len(),
                });
            }
            let mut x = StateVec::zeros();
            for i in 0..STATE_DIM {
                x[i] = parse_finite(&rec[i])?;
            }
            let u = ControlVec::new(parse_finite(&rec[4])?, parse_finite(&rec[5])?);
            let c = match rec[6].trim() {
                "" => None,
                s => Some(parse_finite(s)?),
            };
            data.push(x, u, c);
        }
        Ok(data)
    }
}
