use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Every knob a run can take. Unset fields fall back to per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nn: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zgrid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_l: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fast: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub only: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f.clone(); })*
    };
}

impl RunConfig {
    /// Values set in `other` win.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(
            self, other, d, profile, table, l, ns, nn, mu, z, beta, beta0, beta1, rho, tail_radius, epsilon, zeta, theta,
            radius, tol, points, method, zgrid, box_radius, ks_l, fast, only, seed
        );
    }

    /// Short content hash used to name the run directory.
    pub fn hash(&self, subcommand: &str) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Deserialize)]
struct SidecarConfig {
    config: RunConfig,
}

/// Read a config file: either a bare config or a run sidecar that embeds one.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if value.get("config").is_some() && value.get("subcommand").is_some() {
        let s: SidecarConfig = serde_json::from_value(value).context("parsing sidecar config")?;
        return Ok(s.config);
    }
    serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))
}

/// `lo:hi:count`, where either end may be `zc`.
pub fn parse_zgrid(spec: &str, zc: f64) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("z grid must look like lo:hi:count, got {spec:?}");
    }
    let end = |s: &str| -> Result<f64> {
        if s.trim() == "zc" {
            Ok(zc)
        } else {
            s.trim().parse::<f64>().with_context(|| format!("bad z grid end {s:?}"))
        }
    };
    let (lo, hi) = (end(parts[0])?, end(parts[1])?);
    let n: usize = parts[2].trim().parse().with_context(|| format!("bad z grid count {:?}", parts[2]))?;
    if n < 2 || !(lo <= hi) {
        bail!("z grid needs lo <= hi and at least two points");
    }
    Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect())
}

/// `axis:lo..hi`, `box:R` or `list:x1,x2,..;y1,y2,..`.
pub fn parse_points(spec: &str, d: usize) -> Result<Vec<Vec<i64>>> {
    let (kind, rest) = spec.split_once(':').with_context(|| format!("points must be kind:spec, got {spec:?}"))?;
    match kind {
        "axis" => {
            let (lo, hi) = rest.split_once("..").with_context(|| "axis points look like axis:lo..hi")?;
            let lo: i64 = lo.trim().parse().context("bad axis start")?;
            let hi: i64 = hi.trim().parse().context("bad axis end")?;
            if lo > hi || lo < 0 {
                bail!("axis range must satisfy 0 <= lo <= hi");
            }
            Ok(spreadout::green::axis_points(d, lo, hi))
        }
        "box" => {
            let r: usize = rest.trim().parse().context("bad box radius")?;
            let mut pts = vec![vec![0; d]];
            pts.extend(spreadout::decomp::box_representatives(d, r));
            Ok(pts)
        }
        "list" => rest
            .split(';')
            .map(|p| {
                let x: Vec<i64> = p.split(',').map(|c| c.trim().parse::<i64>()).collect::<std::result::Result<_, _>>()?;
                if x.len() != d {
                    bail!("point {p:?} does not have {d} coordinates");
                }
                Ok(x)
            })
            .collect(),
        _ => bail!("unknown point kind {kind:?}; use axis, box or list"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_later_values() {
        let mut a = RunConfig { d: Some(3), beta: Some(0.1), ..Default::default() };
        let b = RunConfig { d: Some(5), ..Default::default() };
        a.overlay(&b);
        assert_eq!(a.d, Some(5));
        assert_eq!(a.beta, Some(0.1));
    }

    #[test]
    fn hash_depends_on_content() {
        let a = RunConfig { d: Some(3), ..Default::default() };
        let b = RunConfig { d: Some(5), ..Default::default() };
        assert_eq!(a.hash("green"), a.clone().hash("green"));
        assert_ne!(a.hash("green"), b.hash("green"));
        assert_ne!(a.hash("green"), a.hash("kernel"));
    }

    #[test]
    fn grids_and_points() {
        let z = parse_zgrid("1:zc:5", 1.4).unwrap();
        assert_eq!(z.len(), 5);
        assert_eq!(z[4], 1.4);
        assert!((z[1] - 1.1).abs() < 1e-12);
        assert!(parse_zgrid("1:2", 1.0).is_err());
        assert_eq!(parse_points("axis:1..3", 3).unwrap(), vec![vec![1, 0, 0], vec![2, 0, 0], vec![3, 0, 0]]);
        assert_eq!(parse_points("list:1,2;0,-1", 2).unwrap(), vec![vec![1, 2], vec![0, -1]]);
        assert_eq!(parse_points("box:1", 2).unwrap().len(), 3);
        assert!(parse_points("ring:3", 2).is_err());
    }
}
