//! Channel, cache and topology parameters.
//!
//! The canonical description of a channel is the full joint law of the four
//! link gains in one slot ([`JointLinkPmf`]). Marginal erasure probabilities
//! are always derived from it, never stored independently of it.

use serde::{Deserialize, Serialize};

use crate::channel::TopologyState;
use crate::error::{Error, Result};

/// Consistency tolerance for probability sums and stored marginals.
pub const PROB_TOL: f64 = 1e-12;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::Parameter(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

/// Joint probability of the 16 link states `(G11, G12, G21, G22)`.
///
/// Indexing follows [`TopologyState::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLinkPmf {
    p: [f64; 16],
}

impl JointLinkPmf {
    pub fn new(p: [f64; 16]) -> Result<Self> {
        for (s, &v) in p.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Parameter(format!("pmf[{s}] = {v} is negative")));
            }
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Parameter(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self { p })
    }

    /// Point mass on a single state.
    pub fn point(state: TopologyState) -> Self {
        let mut p = [0.0; 16];
        p[state.index()] = 1.0;
        Self { p }
    }

    pub fn prob(&self, state: TopologyState) -> f64 {
        self.p[state.index()]
    }

    pub fn as_array(&self) -> &[f64; 16] {
        &self.p
    }

    /// States with nonzero probability, in index order.
    pub fn support(&self) -> Vec<TopologyState> {
        TopologyState::all()
            .filter(|s| self.p[s.index()] > 0.0)
            .collect()
    }

    fn sum_where(&self, pred: impl Fn(&TopologyState) -> bool) -> f64 {
        TopologyState::all()
            .filter(|s| pred(s))
            .map(|s| self.p[s.index()])
            .sum()
    }
}

/// Per-link erasure probabilities derived from a joint law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `delta[i][j]` = Pr(G_ij = 0), zero-based user indices.
    pub delta: [[f64; 2]; 2],
    /// Pr(both links into receiver i are off).
    pub delta_rx: [f64; 2],
    /// Pr(both links out of transmitter j are off).
    pub delta_tx: [f64; 2],
}

pub fn derive_marginals(pmf: &JointLinkPmf) -> Marginals {
    let mut delta = [[0.0; 2]; 2];
    for (i, row) in delta.iter_mut().enumerate() {
        for (j, d) in row.iter_mut().enumerate() {
            *d = pmf.sum_where(|s| s.gain(i, j) == 0);
        }
    }
    let delta_rx = [0, 1].map(|i| pmf.sum_where(|s| s.gain(i, 0) == 0 && s.gain(i, 1) == 0));
    let delta_tx = [0, 1].map(|j| pmf.sum_where(|s| s.gain(0, j) == 0 && s.gain(1, j) == 0));
    Marginals {
        delta,
        delta_rx,
        delta_tx,
    }
}

/// Symmetric four-topology channel: only the all-on, cross-only, direct-only
/// and all-off states occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourTopologyParams {
    pub delta: f64,
    pub eps: f64,
}

impl FourTopologyParams {
    pub fn new(delta: f64, eps: f64) -> Result<Self> {
        check_prob("delta", delta)?;
        check_prob("eps", eps)?;
        Ok(Self { delta, eps })
    }

    /// `(p_A, p_B, p_C, p_D)`.
    pub fn topology_probs(&self) -> [f64; 4] {
        let d = self.delta;
        [(1.0 - d) * (1.0 - d), d * (1.0 - d), d * (1.0 - d), d * d]
    }

    pub fn pmf(&self) -> JointLinkPmf {
        let [pa, pb, pc, pd] = self.topology_probs();
        let mut p = [0.0; 16];
        p[TopologyState::A.index()] = pa;
        p[TopologyState::B.index()] = pb;
        p[TopologyState::C.index()] = pc;
        p[TopologyState::D.index()] = pd;
        JointLinkPmf { p }
    }
}

/// Full channel description: joint link law, its derived marginals, and the
/// cache-miss fraction of each receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub pmf: JointLinkPmf,
    pub delta: [[f64; 2]; 2],
    pub delta_rx: [f64; 2],
    pub delta_tx: [f64; 2],
    /// `eps[i]`: fraction of the other user's message that receiver `i` does
    /// NOT have in its cache.
    pub eps: [f64; 2],
}

impl ChannelParams {
    pub fn from_pmf(pmf: JointLinkPmf, eps1: f64, eps2: f64) -> Result<Self> {
        check_prob("eps1", eps1)?;
        check_prob("eps2", eps2)?;
        let m = derive_marginals(&pmf);
        Ok(Self {
            pmf,
            delta: m.delta,
            delta_rx: m.delta_rx,
            delta_tx: m.delta_tx,
            eps: [eps1, eps2],
        })
    }

    /// Links independent across users: the joint law is the product measure.
    pub fn from_independent(
        d11: f64,
        d12: f64,
        d21: f64,
        d22: f64,
        eps1: f64,
        eps2: f64,
    ) -> Result<Self> {
        for (name, v) in [("d11", d11), ("d12", d12), ("d21", d21), ("d22", d22)] {
            check_prob(name, v)?;
        }
        let d = [[d11, d12], [d21, d22]];
        let mut p = [0.0; 16];
        for s in TopologyState::all() {
            let mut prob = 1.0;
            for (i, row) in d.iter().enumerate() {
                for (j, &dij) in row.iter().enumerate() {
                    prob *= if s.gain(i, j) == 0 { dij } else { 1.0 - dij };
                }
            }
            p[s.index()] = prob;
        }
        // The product is exact up to rounding; renormalise so the sum check
        // cannot trip on accumulated error.
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Self::from_pmf(JointLinkPmf::new(p)?, eps1, eps2)
    }

    pub fn from_four_topology(p: FourTopologyParams) -> Result<Self> {
        FourTopologyParams::new(p.delta, p.eps)?;
        Self::from_pmf(p.pmf(), p.eps, p.eps)
    }

    /// Re-derives the marginals and checks them against the stored values,
    /// including the Fréchet lower bounds a genuine joint law must satisfy.
    pub fn validate(&self) -> Result<()> {
        JointLinkPmf::new(self.pmf.p)?;
        check_prob("eps1", self.eps[0])?;
        check_prob("eps2", self.eps[1])?;
        let m = derive_marginals(&self.pmf);
        let close = |a: f64, b: f64| (a - b).abs() <= PROB_TOL;
        for i in 0..2 {
            for j in 0..2 {
                if !close(m.delta[i][j], self.delta[i][j]) {
                    return Err(Error::Parameter(format!(
                        "stored delta[{i}][{j}] = {} disagrees with pmf ({})",
                        self.delta[i][j], m.delta[i][j]
                    )));
                }
            }
            if !close(m.delta_rx[i], self.delta_rx[i]) || !close(m.delta_tx[i], self.delta_tx[i]) {
                return Err(Error::Parameter(format!(
                    "stored pairwise erasure probabilities for user {} disagree with pmf",
                    i + 1
                )));
            }
        }
        for i in 0..2 {
            let rx_lo = self.delta[i][0] + self.delta[i][1] - 1.0;
            let rx_hi = self.delta[i][0].min(self.delta[i][1]);
            let tx_lo = self.delta[0][i] + self.delta[1][i] - 1.0;
            let tx_hi = self.delta[0][i].min(self.delta[1][i]);
            if self.delta_rx[i] < rx_lo - PROB_TOL || self.delta_rx[i] > rx_hi + PROB_TOL {
                return Err(Error::Parameter(format!("delta_rx[{i}] violates Fréchet bounds")));
            }
            if self.delta_tx[i] < tx_lo - PROB_TOL || self.delta_tx[i] > tx_hi + PROB_TOL {
                return Err(Error::Parameter(format!("delta_tx[{i}] violates Fréchet bounds")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Independent,
    FourTopology,
    Joint,
}

/// Parameters read from a `key = value` file. `#` starts a comment.
///
/// Keys: `model`, `delta`, `eps1`, `eps2`, `pmf = [16 floats]`,
/// `d11`, `d12`, `d21`, `d22`. `eps` sets both miss fractions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamConfig {
    pub model: Option<Model>,
    pub delta: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub pmf: Option<[f64; 16]>,
    pub d: [[Option<f64>; 2]; 2],
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as a number")))
}

impl ParamConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => {
                    cfg.model = Some(match value {
                        "independent" => Model::Independent,
                        "four_topology" => Model::FourTopology,
                        "joint" => Model::Joint,
                        other => return Err(Error::Config(format!("unknown model {other:?}"))),
                    })
                }
                "delta" => cfg.delta = Some(parse_f64(key, value)?),
                "eps" => {
                    let e = parse_f64(key, value)?;
                    cfg.eps1 = Some(e);
                    cfg.eps2 = Some(e);
                }
                "eps1" => cfg.eps1 = Some(parse_f64(key, value)?),
                "eps2" => cfg.eps2 = Some(parse_f64(key, value)?),
                "d11" | "d12" | "d21" | "d22" => {
                    let b = key.as_bytes();
                    cfg.d[(b[1] - b'1') as usize][(b[2] - b'1') as usize] = Some(parse_f64(key, value)?);
                }
                "pmf" => {
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| Error::Config("pmf must be written as [p0, ..., p15]".into()))?;
                    let vals = inner
                        .split(',')
                        .map(|x| parse_f64(key, x.trim()))
                        .collect::<Result<Vec<f64>>>()?;
                    let arr: [f64; 16] = vals
                        .try_into()
                        .map_err(|v: Vec<f64>| Error::Config(format!("pmf has {} entries, expected 16", v.len())))?;
                    cfg.pmf = Some(arr);
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    fn model(&self) -> Model {
        self.model.unwrap_or(if self.pmf.is_some() {
            Model::Joint
        } else if self.d.iter().flatten().any(Option::is_some) {
            Model::Independent
        } else {
            Model::FourTopology
        })
    }

    fn eps(&self) -> Result<[f64; 2]> {
        match (self.eps1, self.eps2) {
            (Some(a), Some(b)) => Ok([a, b]),
            _ => Err(Error::Config("eps1 and eps2 are required".into())),
        }
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        let [e1, e2] = self.eps()?;
        match self.model() {
            Model::Joint => {
                let p = self.pmf.ok_or_else(|| Error::Config("model joint needs pmf".into()))?;
                ChannelParams::from_pmf(JointLinkPmf::new(p)?, e1, e2)
            }
            Model::Independent => {
                let mut d = [0.0; 4];
                for (k, v) in self.d.iter().flatten().enumerate() {
                    d[k] = v.or(self.delta).ok_or_else(|| {
                        Error::Config("model independent needs d11..d22 or delta".into())
                    })?;
                }
                ChannelParams::from_independent(d[0], d[1], d[2], d[3], e1, e2)
            }
            Model::FourTopology => {
                let p = self.four_topology()?;
                let mut c = ChannelParams::from_four_topology(p)?;
                c.eps = [e1, e2];
                Ok(c)
            }
        }
    }

    /// The symmetric four-topology channel the coding schemes run on.
    pub fn four_topology(&self) -> Result<FourTopologyParams> {
        if self.model() != Model::FourTopology {
            return Err(Error::Scope("the schemes need model = four_topology".into()));
        }
        let delta = self
            .delta
            .ok_or_else(|| Error::Config("model four_topology needs delta".into()))?;
        let [e1, e2] = self.eps()?;
        if (e1 - e2).abs() > PROB_TOL {
            return Err(Error::Scope(format!("the schemes need eps1 = eps2, got {e1} and {e2}")));
        }
        FourTopologyParams::new(delta, e1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn independent_all_on() {
        let p = ChannelParams::from_independent(0.0, 0.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(p.pmf.prob(TopologyState::A), 1.0);
        assert_eq!(p.delta_rx, [0.0, 0.0]);
        assert_eq!(p.delta_tx, [0.0, 0.0]);
    }

    #[test]
    fn independent_half_is_uniform() {
        let p = ChannelParams::from_independent(0.5, 0.5, 0.5, 0.5, 1.0, 1.0).unwrap();
        for s in TopologyState::all() {
            assert_abs_diff_eq!(p.pmf.prob(s), 1.0 / 16.0, epsilon = 1e-15);
        }
        for i in 0..2 {
            assert_abs_diff_eq!(p.delta_rx[i], 0.25, epsilon = 1e-15);
            assert_abs_diff_eq!(p.delta_tx[i], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn independent_quarter() {
        let p = ChannelParams::from_independent(0.25, 0.25, 0.25, 0.25, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(p.delta_rx[0], 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta_rx[1], 1.0 / 16.0, epsilon = 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(ChannelParams::from_independent(1.2, 0.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(ChannelParams::from_independent(0.0, 0.0, 0.0, 0.0, -0.1, 1.0).is_err());
        assert!(FourTopologyParams::new(0.5, 1.5).is_err());
        assert!(JointLinkPmf::new([0.1; 16]).is_err());
    }

    #[test]
    fn four_topology_probabilities() {
        let p = FourTopologyParams::new(0.0, 1.0).unwrap();
        assert_eq!(p.topology_probs(), [1.0, 0.0, 0.0, 0.0]);
        let p = FourTopologyParams::new(0.5, 1.0).unwrap();
        assert_eq!(p.topology_probs(), [0.25; 4]);
        let p = FourTopologyParams::new(0.2, 1.0).unwrap();
        let [a, b, c, d] = p.topology_probs();
        assert_abs_diff_eq!(a, 16.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 4.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 4.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 1.0 / 25.0, epsilon = 1e-15);
        let cp = ChannelParams::from_four_topology(p).unwrap();
        assert_abs_diff_eq!(cp.delta_rx[0], 1.0 / 25.0, epsilon = 1e-15);
        assert_eq!(cp.pmf.support().len(), 4);
    }

    #[test]
    fn marginals_of_point_mass() {
        let m = derive_marginals(&JointLinkPmf::point(TopologyState::D));
        assert_eq!(m.delta, [[1.0; 2]; 2]);
        assert_eq!(m.delta_rx, [1.0; 2]);
        assert_eq!(m.delta_tx, [1.0; 2]);
    }

    #[test]
    fn four_topology_round_trip_grid() {
        for k in 0..=10 {
            let d = k as f64 / 10.0;
            let cp = ChannelParams::from_four_topology(FourTopologyParams::new(d, 0.5).unwrap())
                .unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(cp.delta[i][j], d, epsilon = 1e-12);
                }
                assert_abs_diff_eq!(cp.delta_rx[i], d * d, epsilon = 1e-12);
                assert_abs_diff_eq!(cp.delta_tx[i], d * d, epsilon = 1e-12);
            }
            cp.validate().unwrap();
        }
    }

    #[test]
    fn tampered_marginals_rejected() {
        let mut cp = ChannelParams::from_independent(0.3, 0.4, 0.2, 0.1, 1.0, 1.0).unwrap();
        cp.validate().unwrap();
        cp.delta_rx[0] = 0.0;
        assert!(cp.validate().is_err());
    }

    #[test]
    fn frechet_bound_holds_for_random_pmfs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let mut p = [0.0; 16];
            p.iter_mut().for_each(|v| *v = rng.gen::<f64>());
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            let cp = ChannelParams::from_pmf(JointLinkPmf::new(p).unwrap(), 1.0, 1.0).unwrap();
            for i in 0..2 {
                assert!(cp.delta_rx[i] >= cp.delta[i][0] + cp.delta[i][1] - 1.0 - 1e-12);
            }
            cp.validate().unwrap();
        }
    }

    #[test]
    fn config_four_topology() {
        let c = ParamConfig::parse("# channel\nmodel = four_topology\ndelta = 0.25\neps1 = 0.5 # cache\neps2=0.5\n").unwrap();
        assert_eq!(c.four_topology().unwrap(), FourTopologyParams::new(0.25, 0.5).unwrap());
        let p = c.channel_params().unwrap();
        assert_abs_diff_eq!(p.delta[0][0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p.delta_rx[0], 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn config_joint_and_independent() {
        let mut text = String::from("model = joint\neps1 = 1\neps2 = 0\npmf = [");
        text.push_str(&(0..16).map(|k| if k == 15 { "1" } else { "0" }).collect::<Vec<_>>().join(", "));
        text.push(']');
        let c = ParamConfig::parse(&text).unwrap();
        let p = c.channel_params().unwrap();
        assert_eq!(p.delta_rx, [0.0, 0.0]);
        assert!(matches!(c.four_topology(), Err(Error::Scope(_))));

        let c = ParamConfig::parse("model = independent\nd11 = 0.1\nd12=0.2\nd21=0.3\nd22=0.4\neps=1").unwrap();
        let p = c.channel_params().unwrap();
        assert_abs_diff_eq!(p.delta[1][0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn config_errors() {
        for bad in ["delta", "colour = 3", "delta = x", "pmf = [1, 0]", "model = mesh"] {
            assert!(matches!(ParamConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
        let c = ParamConfig::parse("delta = 0.2\neps1 = 0.5\neps2 = 0.6").unwrap();
        assert!(matches!(c.four_topology(), Err(Error::Scope(_))));
        assert!(matches!(ParamConfig::parse("delta = 0.2").unwrap().channel_params(), Err(Error::Config(_))));
    }
}
