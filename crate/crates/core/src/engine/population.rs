use crate::error::{Error, Result};
use crate::nn::{GradVector, Momentum, MlpNetwork, OutputMode};
use crate::seed::{self, Rng};

/// Streaming per-parameter importance: the running mean of absolute
/// importance samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaStore {
    omega: Vec<f64>,
    count: u64,
}

impl OmegaStore {
    pub fn new(len: usize) -> Self {
        OmegaStore {
            omega: vec![0.0; len],
            count: 0,
        }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Absorbs one importance sample.
    pub fn absorb(&mut self, g: &GradVector) -> Result<()> {
        if g.len() != self.omega.len() {
            return Err(Error::shape("importance sample", self.omega.len(), g.len()));
        }
        let c = self.count as f64;
        let denom = c + 1.0;
        for (o, v) in self.omega.iter_mut().zip(g.iter()) {
            *o = (c * *o + v.abs()) / denom;
        }
        self.count += 1;
        Ok(())
    }
}

/// Generator parameters frozen at the start of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    theta_star: Vec<f64>,
}

impl ParamSnapshot {
    pub fn of(net: &MlpNetwork) -> Self {
        ParamSnapshot {
            theta_star: net.params().to_vec(),
        }
    }

    pub fn from_vec(theta_star: Vec<f64>) -> Self {
        ParamSnapshot { theta_star }
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn refresh(&mut self, net: &MlpNetwork) {
        self.theta_star.clear();
        self.theta_star.extend_from_slice(net.params());
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorMember {
    pub net: MlpNetwork,
    pub omega: OmegaStore,
    pub snapshot: ParamSnapshot,
    pub(crate) optimizer: Momentum,
}

impl GeneratorMember {
    pub fn new(net: MlpNetwork) -> Self {
        let n = net.params().len();
        GeneratorMember {
            omega: OmegaStore::new(n),
            snapshot: ParamSnapshot::of(&net),
            net,
            optimizer: Momentum::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorPopulation {
    members: Vec<GeneratorMember>,
}

impl GeneratorPopulation {
    /// `count` generators with independently seeded initial weights.
    pub fn new(count: usize, dims: &[usize], run_seed: u64) -> Result<Self> {
        let nets = (0..count)
            .map(|k| {
                let mut rng: Rng = seed::derived_rng(run_seed, &[seed::TAG_GENERATOR_INIT, k as u64]);
                MlpNetwork::new(dims, OutputMode::Linear, 0.0, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_networks(nets)
    }

    pub fn from_networks(nets: Vec<MlpNetwork>) -> Result<Self> {
        let first = nets
            .first()
            .ok_or_else(|| Error::Config("a population needs at least one generator".into()))?;
        let dims = first.dims().to_vec();
        for n in &nets {
            if n.dims() != dims.as_slice() {
                return Err(Error::Config("all generators must share layer dims".into()));
            }
            if n.dropout_p() != 0.0 {
                return Err(Error::Config("generators cannot use dropout".into()));
            }
            if n.output_mode() != OutputMode::Linear {
                return Err(Error::Config("generators need a linear output".into()));
            }
        }
        if dims[0] != *dims.last().unwrap() {
            return Err(Error::Config("generator output dim must equal its input dim".into()));
        }
        Ok(GeneratorPopulation {
            members: nets.into_iter().map(GeneratorMember::new).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[GeneratorMember] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [GeneratorMember] {
        &mut self.members
    }

    pub fn generator(&self, k: usize) -> &MlpNetwork {
        &self.members[k].net
    }

    pub fn generators(&self) -> impl Iterator<Item = &MlpNetwork> {
        self.members.iter().map(|m| &m.net)
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].net.input_dim()
    }
}
