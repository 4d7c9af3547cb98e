//! Uniform handle over the five samplers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::ctmc::{Balancing, CtmcError, CtmcKind, CtmcState};
use crate::pps::{PpsError, PpsState};
use crate::targets::Target;
use crate::trace::TraceSink;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Pps(#[from] PpsError),
    #[error(transparent)]
    Ctmc(#[from] CtmcError),
    #[error("unknown sampler `{0}` (expected pps, bd, zanella-sqrt, zanella-min or zanella-ratio)")]
    UnknownTag(String),
}

/// Sampler selector. Window length and base intensity are fixed at `m = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Pps,
    BirthDeath,
    Zanella(Balancing),
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::Pps,
        SamplerKind::BirthDeath,
        SamplerKind::Zanella(Balancing::Sqrt),
        SamplerKind::Zanella(Balancing::Min1),
        SamplerKind::Zanella(Balancing::Ratio),
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Pps => "pps",
            Self::BirthDeath => "bd",
            Self::Zanella(Balancing::Sqrt) => "zanella-sqrt",
            Self::Zanella(Balancing::Min1) => "zanella-min",
            Self::Zanella(Balancing::Ratio) => "zanella-ratio",
        }
    }

    fn ctmc_kind(self) -> Option<CtmcKind> {
        match self {
            Self::Pps => None,
            Self::BirthDeath => Some(CtmcKind::BIRTH_DEATH),
            Self::Zanella(b) => Some(CtmcKind::Zanella(b)),
        }
    }

    /// A fresh chain started from the zero vector.
    pub fn start<T: Target + ?Sized>(self, target: &T) -> Result<Chain, SamplerError> {
        let d = target.dim();
        self.start_frozen(target, &vec![0; d], vec![false; d])
    }

    /// A chain whose `frozen` components are held at `initial`; the rest
    /// start at zero.
    pub fn start_frozen<T: Target + ?Sized>(
        self,
        target: &T,
        initial: &[u32],
        frozen: Vec<bool>,
    ) -> Result<Chain, SamplerError> {
        Ok(match self.ctmc_kind() {
            None => Chain::Pps(PpsState::with_frozen(target, 1.0, initial, frozen)?),
            Some(kind) => {
                let mut start = initial.to_vec();
                for (s, f) in start.iter_mut().zip(&frozen) {
                    if !f {
                        *s = 0;
                    }
                }
                Chain::Ctmc(CtmcState::with_frozen(target, kind, &start, frozen)?)
            }
        })
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SamplerKind {
    type Err = SamplerError;
    fn from_str(s: &str) -> Result<Self, SamplerError> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| SamplerError::UnknownTag(s.to_string()))
    }
}

/// A running chain of any kind.
#[derive(Clone, Debug)]
pub enum Chain {
    Pps(PpsState),
    Ctmc(CtmcState),
}

impl Chain {
    pub fn counts(&self) -> &[u32] {
        match self {
            Chain::Pps(s) => s.counts(),
            Chain::Ctmc(s) => s.counts(),
        }
    }

    pub fn is_absorbing<T: Target + ?Sized>(&mut self, target: &T) -> bool {
        match self {
            Chain::Pps(s) => s.is_absorbing(target),
            Chain::Ctmc(s) => s.is_absorbing(target),
        }
    }

    pub fn run<T, R, S>(
        &mut self,
        target: &T,
        steps: u64,
        rng: &mut R,
        sink: &mut S,
    ) -> Result<(), SamplerError>
    where
        T: Target + ?Sized,
        R: Rng + ?Sized,
        S: TraceSink + ?Sized,
    {
        match self {
            Chain::Pps(s) => s.run(target, steps, rng, sink).map(|_| ())?,
            Chain::Ctmc(s) => s.run(target, steps, rng, sink)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for k in SamplerKind::ALL {
            assert_eq!(k.tag().parse::<SamplerKind>().unwrap(), k);
        }
        assert!("gibbs".parse::<SamplerKind>().is_err());
    }
}
