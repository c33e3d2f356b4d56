//! Optimized source on the grid and its versioned text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::belief::PolicyRow;
use crate::context::{ContextSpace, CONTEXT_ORDERING_VERSION};
use crate::dp::grid::SimplexGrid;
use crate::error::{Error, Result};

const MAGIC: &str = "fsc-policy-table";
const FORMAT_VERSION: u32 = 1;

/// Header of a policy table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMeta {
    pub channel_digest: String,
    pub u: usize,
    pub v: usize,
    pub m: usize,
    /// `1 / delta`.
    pub delta_units: u32,
    /// `1 / eta`.
    pub eta_units: u32,
    pub n_iter: usize,
    pub num_inputs: usize,
    pub admissible: Vec<bool>,
    pub ordering_version: u32,
    pub sigma: f64,
    pub span: f64,
}

impl PolicyMeta {
    pub fn delta(&self) -> f64 {
        1.0 / self.delta_units as f64
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.eta_units as f64
    }
}

/// One policy row per grid point.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    meta: PolicyMeta,
    grid: SimplexGrid,
    rows: Vec<PolicyRow>,
}

impl PolicyTable {
    pub fn new(meta: PolicyMeta, grid: SimplexGrid, rows: Vec<PolicyRow>) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!("{} rows for {} grid points", rows.len(), grid.len())));
        }
        Ok(Self { meta, grid, rows })
    }

    pub fn meta(&self) -> &PolicyMeta {
        &self.meta
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, index: usize) -> &PolicyRow {
        &self.rows[index]
    }

    /// Row at the grid point nearest to `alpha` under the quantizer.
    pub fn lookup(&self, alpha: &[f64]) -> &PolicyRow {
        &self.rows[self.grid.locate(alpha)]
    }

    /// Context space the table was optimized on, rebuilt for `channel`.
    pub fn context_space(&self, channel: &crate::channel::ChannelSpec) -> Result<ContextSpace> {
        let space = ContextSpace::new(channel, self.meta.u, self.meta.v, self.meta.m)?;
        if space.admissible() != self.meta.admissible.as_slice() {
            return Err(Error::DimensionMismatch("admissible contexts differ from the policy table".into()));
        }
        Ok(space)
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let adm: Vec<&str> = m.admissible.iter().map(|&a| if a { "1" } else { "0" }).collect();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "digest {}", m.channel_digest);
        let _ = writeln!(out, "u {}", m.u);
        let _ = writeln!(out, "v {}", m.v);
        let _ = writeln!(out, "m {}", m.m);
        let _ = writeln!(out, "delta_units {}", m.delta_units);
        let _ = writeln!(out, "eta_units {}", m.eta_units);
        let _ = writeln!(out, "n_iter {}", m.n_iter);
        let _ = writeln!(out, "num_inputs {}", m.num_inputs);
        let _ = writeln!(out, "contexts {}", m.admissible.len());
        let _ = writeln!(out, "admissible {}", adm.join(" "));
        let _ = writeln!(out, "ordering {}", m.ordering_version);
        let _ = writeln!(out, "sigma {}", m.sigma);
        let _ = writeln!(out, "span {}", m.span);
        let _ = writeln!(out, "points {}", self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let units: Vec<String> = self.grid.point_units(i).iter().map(|n| n.to_string()).collect();
            let probs: Vec<String> = row.as_slice().iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{} | {}", units.join(" "), probs.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing header field {key}")))?;
            let (k, v) = line.split_once(' ').ok_or_else(|| Error::Parse(format!("malformed header line {line:?}")))?;
            if k != key {
                return Err(Error::Parse(format!("expected header field {key}, found {k}")));
            }
            Ok(v.to_string())
        };
        let version = next(MAGIC)?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Parse(format!("unsupported policy format version {version}")));
        }
        fn num<T: std::str::FromStr>(s: String, key: &str) -> Result<T> {
            s.trim().parse().map_err(|_| Error::Parse(format!("bad value for {key}: {s:?}")))
        }
        let channel_digest = next("digest")?;
        let u = num(next("u")?, "u")?;
        let v = num(next("v")?, "v")?;
        let m = num(next("m")?, "m")?;
        let delta_units: u32 = num(next("delta_units")?, "delta_units")?;
        let eta_units = num(next("eta_units")?, "eta_units")?;
        let n_iter = num(next("n_iter")?, "n_iter")?;
        let num_inputs: usize = num(next("num_inputs")?, "num_inputs")?;
        let contexts: usize = num(next("contexts")?, "contexts")?;
        let admissible: Vec<bool> = next("admissible")?.split_whitespace().map(|t| t == "1").collect();
        if admissible.len() != contexts {
            return Err(Error::Parse("admissible mask length differs from context count".into()));
        }
        let ordering_version = num(next("ordering")?, "ordering")?;
        if ordering_version != CONTEXT_ORDERING_VERSION {
            return Err(Error::Parse(format!("context ordering version {ordering_version} is not supported")));
        }
        let sigma = num(next("sigma")?, "sigma")?;
        let span = num(next("span")?, "span")?;
        let points: usize = num(next("points")?, "points")?;
        let grid = SimplexGrid::new(&admissible, 1.0 / delta_units as f64, u64::MAX)?;
        if grid.len() != points {
            return Err(Error::Parse(format!("{points} points declared, grid has {}", grid.len())));
        }
        let mut rows = Vec::with_capacity(points);
        for i in 0..points {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing record {i}")))?;
            let (units, probs) = line.split_once('|').ok_or_else(|| Error::Parse(format!("record {i} lacks '|'")))?;
            let units: Vec<u16> = units
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("record {i}: bad coordinate {t:?}"))))
                .collect::<Result<_>>()?;
            if units != grid.point_units(i) {
                return Err(Error::Parse(format!("record {i} is out of grid order")));
            }
            let probs: Vec<f64> = probs
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("record {i}: bad probability {t:?}"))))
                .collect::<Result<_>>()?;
            if probs.len() != contexts * num_inputs {
                return Err(Error::Parse(format!("record {i} has {} probabilities", probs.len())));
            }
            rows.push(row_unchecked(num_inputs, probs));
        }
        let meta = PolicyMeta {
            channel_digest,
            u,
            v,
            m,
            delta_units,
            eta_units,
            n_iter,
            num_inputs,
            admissible,
            ordering_version,
            sigma,
            span,
        };
        Self::new(meta, grid, rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Checks every row against the constraint structure of `space`.
    pub fn validate(&self, space: &ContextSpace) -> Result<()> {
        for row in &self.rows {
            PolicyRow::new(space, row.as_slice().to_vec())?;
        }
        Ok(())
    }
}

fn row_unchecked(num_inputs: usize, probs: Vec<f64>) -> PolicyRow {
    PolicyRow::from_parts(num_inputs, probs)
}
