//! Parameter sweeps: the cartesian product of dotted-path overrides, one
//! independent scenario per point, run in parallel.

use rayon::prelude::*;

use super::config::{parse_literal, set_path, ScenarioConfig};
use super::run::{run_scenario, RunRecord};
use super::HarnessError;

/// `path=v1,v2,…` as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepParam {
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl SweepParam {
    pub fn parse(spec: &str) -> Result<Self, HarnessError> {
        let (path, list) = spec
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected path=list, got {spec:?}")))?;
        let list = list.trim();
        let inner = list
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .unwrap_or(list);
        let values: Vec<toml::Value> = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_literal)
            .collect();
        if values.is_empty() {
            return Err(HarnessError::Config(format!("no values for {path}")));
        }
        Ok(Self {
            path: path.trim().to_string(),
            values,
        })
    }
}

/// One point of a sweep and its configuration.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub assignment: Vec<(String, toml::Value)>,
    pub config: ScenarioConfig,
}

/// Expands the grid in row-major order (last parameter fastest).
pub fn expand(base: &ScenarioConfig, params: &[SweepParam]) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut grid: Vec<Vec<(String, toml::Value)>> = vec![vec![]];
    for p in params {
        grid = grid
            .into_iter()
            .flat_map(|a| {
                p.values.iter().map(move |v| {
                    let mut a = a.clone();
                    a.push((p.path.clone(), v.clone()));
                    a
                })
            })
            .collect();
    }
    grid.into_iter()
        .enumerate()
        .map(|(index, assignment)| {
            let mut value = base.to_value();
            for (path, v) in &assignment {
                set_path(&mut value, path, v.clone())?;
            }
            let config = ScenarioConfig::from_value(value)?;
            Ok(SweepPoint {
                index,
                assignment,
                config,
            })
        })
        .collect()
}

/// Runs every point in parallel; results keep the grid order.
pub fn run_sweep(points: &[SweepPoint]) -> Vec<Result<RunRecord, HarnessError>> {
    points.par_iter().map(|p| run_scenario(&p.config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_list() {
        let p = SweepParam::parse("controller.adaptive.mu=[0.5, 1,2]").unwrap();
        assert_eq!(p.path, "controller.adaptive.mu");
        assert_eq!(p.values.len(), 3);
        assert_eq!(p.values[1], toml::Value::Integer(1));
        let q = SweepParam::parse("controller.kind=mmac,linear-only").unwrap();
        assert_eq!(q.values[1], toml::Value::String("linear-only".into()));
    }

    #[test]
    fn grid_order() {
        let base = ScenarioConfig::default();
        let params = [
            SweepParam::parse("seed=1,2").unwrap(),
            SweepParam::parse("event.load_factor=0.5,0.25,0.75").unwrap(),
        ];
        let pts = expand(&base, &params).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].config.seed, 1);
        assert_eq!(pts[1].config.event.load_factor, 0.25);
        assert_eq!(pts[3].config.seed, 2);
    }

    #[test]
    fn bad_path_is_config_error() {
        let base = ScenarioConfig::default();
        let params = [SweepParam::parse("controller.nonsense=1").unwrap()];
        assert!(matches!(expand(&base, &params), Err(HarnessError::Config(_))));
    }
}
