use std::path::Path;

use crate::error::{dim_err, invalid, Error, Result};

/// Paired inputs and targets, `m ≥ 1` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid("a dataset needs at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(dim_err(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let d_in = inputs[0].len();
        let d_out = targets[0].len();
        if inputs.iter().any(|x| x.len() != d_in) || targets.iter().any(|y| y.len() != d_out) {
            return Err(dim_err("ragged dataset rows"));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn d_out(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i]
    }

    /// Writes `x0,…,y0,…` with a header line and 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.d_in())
            .map(|j| format!("x{j}"))
            .chain((0..self.d_out()).map(|j| format!("y{j}")))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:.16e}")).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`write_csv`](Self::write_csv); columns named
    /// `x*` are inputs, `y*` targets.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let d_in = header.iter().filter(|h| h.starts_with('x')).count();
        if d_in == 0 || d_in == header.len() {
            return Err(Error::Config(format!(
                "{}: expected x* input and y* target columns",
                path.display()
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            inputs.push(vals[..d_in].to_vec());
            targets.push(vals[d_in..].to_vec());
        }
        Self::new(inputs, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let data = Dataset::new(
            vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]],
            vec![vec![std::f64::consts::PI], vec![-0.0]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        data.write_csv(&p).unwrap();
        assert_eq!(Dataset::read_csv(&p).unwrap(), data);
    }

    #[test]
    fn rejects_mismatch() {
        assert!(Dataset::new(vec![vec![1.0]], vec![]).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![0.0], vec![0.0]]).is_err());
    }
}
