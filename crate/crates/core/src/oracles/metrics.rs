use crate::ensemble::MomentSeries;
use crate::error::{Error, Result};
use crate::sde::Trajectory;

/// Root-mean-square error of the estimated means against the reference over
/// the grid nodes in `[t_a, t_b]`, averaged over components and nodes.
pub fn rmse(estimates: &MomentSeries, truth: &Trajectory, t_a: f64, t_b: f64) -> Result<f64> {
    if estimates.dim() != truth.dim() || estimates.len() != truth.len() {
        return Err(Error::Dimension {
            what: "estimate/reference",
            expected: truth.len() * truth.dim(),
            found: estimates.len() * estimates.dim(),
        });
    }
    rmse_by(|k| estimates.mean(k), truth, t_a, t_b)
}

/// [`rmse`] for an arbitrary per-node estimate accessor.
pub fn rmse_by<'a>(
    estimate: impl Fn(usize) -> &'a [f64],
    truth: &Trajectory,
    t_a: f64,
    t_b: f64,
) -> Result<f64> {
    let window = truth.grid().window(t_a, t_b);
    let n = truth.dim();
    let mut total = 0.0;
    let mut count = 0usize;
    for k in window {
        let (e, x) = (estimate(k), truth.row(k));
        total += e.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += n;
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!("empty evaluation window [{t_a}, {t_b}]")));
    }
    Ok((total / count as f64).sqrt())
}

/// Mean of `values[k]` over the nodes of `[t_a, t_b]`.
pub fn time_average(values: impl Fn(usize) -> f64, truth_grid: &crate::sde::TimeGrid, t_a: f64, t_b: f64) -> Result<f64> {
    let window = truth_grid.window(t_a, t_b);
    let (mut sum, mut count) = (0.0, 0usize);
    for k in window {
        sum += values(k);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!("empty averaging window [{t_a}, {t_b}]")));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::MomentKind;
    use crate::sde::TimeGrid;

    fn series(values: &[[f64; 2]]) -> (MomentSeries, TimeGrid) {
        let grid = TimeGrid::with_steps(0.0, 0.5, values.len() - 1).unwrap();
        let mut s = MomentSeries::new(grid, 2, MomentKind::Filter, false);
        for (k, v) in values.iter().enumerate() {
            s.set(k, v, None);
        }
        (s, grid)
    }

    #[test]
    fn identical_is_zero_and_offset_is_offset() {
        let vals = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let (s, grid) = series(&vals);
        let truth = Trajectory::from_rows(grid, &vals.iter().map(|v| v.to_vec()).collect::<Vec<_>>()).unwrap();
        assert_eq!(rmse(&s, &truth, 0.0, 1.0).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = vals.iter().map(|v| vec![v[0] + 0.3, v[1] + 0.3]).collect();
        let truth = Trajectory::from_rows(grid, &shifted).unwrap();
        assert!((rmse(&s, &truth, 0.0, 1.0).unwrap() - 0.3).abs() < 1e-12);
        assert!(rmse(&s, &truth, 5.0, 6.0).is_err());
    }
}
