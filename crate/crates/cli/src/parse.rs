//! Parsers for the compact argument grammars.

use anyhow::{anyhow, bail, Context, Result};
use mantensor::io::Crop;

/// `full`, `r` or `r1,r2,…`; a single value is repeated for every mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RankSpec {
    Full,
    Tuple(Vec<usize>),
}

impl RankSpec {
    pub fn resolve(&self, shape: &[usize], entry_dim: usize) -> Result<Vec<usize>> {
        match self {
            RankSpec::Full => Ok(full_rank(shape, entry_dim)),
            RankSpec::Tuple(r) if r.len() == 1 => Ok(vec![r[0]; shape.len()]),
            RankSpec::Tuple(r) if r.len() == shape.len() => Ok(r.clone()),
            RankSpec::Tuple(r) => bail!("rank {r:?} does not match tensor order {}", shape.len()),
        }
    }
}

/// Largest rank the mode-k unfolding can have: `min(d_k, d · ∏_{l≠k} d_l)`.
pub fn full_rank(shape: &[usize], entry_dim: usize) -> Vec<usize> {
    let total: usize = shape.iter().product::<usize>() * entry_dim;
    shape.iter().map(|&d| d.min(total / d.max(1))).collect()
}

pub fn rank_spec(s: &str) -> Result<RankSpec> {
    if s.trim() == "full" {
        return Ok(RankSpec::Full);
    }
    let r = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad rank {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if r.contains(&0) {
        bail!("ranks must be positive");
    }
    Ok(RankSpec::Tuple(r))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankList(pub Vec<usize>);

/// Comma-separated items, each `r` or an inclusive range `a..b[:step]`.
pub fn rank_list(s: &str) -> Result<RankList> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if let Some((a, rest)) = item.split_once("..") {
            let (b, step) = match rest.split_once(':') {
                Some((b, st)) => (b, st.parse::<usize>().with_context(|| format!("bad step in {item:?}"))?),
                None => (rest, 1),
            };
            let a: usize = a.parse().with_context(|| format!("bad range start in {item:?}"))?;
            let b: usize = b.parse().with_context(|| format!("bad range end in {item:?}"))?;
            if step == 0 || a > b {
                bail!("empty rank range {item:?}");
            }
            out.extend((a..=b).step_by(step));
        } else {
            out.push(item.parse().with_context(|| format!("bad rank {item:?}"))?);
        }
    }
    if out.contains(&0) {
        bail!("ranks must be positive");
    }
    Ok(RankList(out))
}

pub fn dims3(s: &str) -> Result<[usize; 3]> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad dims {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    v.try_into().map_err(|_| anyhow!("dims must be X,Y,Z"))
}

fn span(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("expected a:b, got {s:?}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// `x0:x1,y0:y1,z` with 0-based half-open ranges.
pub fn crop(s: &str) -> Result<Crop> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        bail!("crop must be x0:x1,y0:y1,z");
    }
    Ok(Crop {
        x: span(parts[0])?,
        y: span(parts[1])?,
        z: parts[2].trim().parse().with_context(|| format!("bad slice in {s:?}"))?,
    })
}
