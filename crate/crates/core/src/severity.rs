//! Attack severity: a convex blend of the attack tweets' share of the
//! window volume and of the service's audience.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEVERITY_BETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityInput {
    pub n_attack: u64,
    pub n_all: u64,
    /// Follower count of the attacked service.
    pub n_user: u64,
    /// Weight of the volume share; not the Dirichlet prior.
    pub beta: f64,
}

impl SeverityInput {
    pub fn validate(&self) -> Result<()> {
        if self.n_all == 0 {
            return Err(Error::invalid("n_all must be positive"));
        }
        if self.n_user == 0 {
            return Err(Error::invalid("n_user must be positive"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.n_attack > self.n_all {
            return Err(Error::invalid(format!(
                "n_attack ({}) exceeds n_all ({})",
                self.n_attack, self.n_all
            )));
        }
        if self.n_attack > self.n_user {
            return Err(Error::invalid(format!(
                "n_attack ({}) exceeds n_user ({})",
                self.n_attack, self.n_user
            )));
        }
        Ok(())
    }

    pub fn volume_share(&self) -> f64 {
        self.n_attack as f64 / self.n_all as f64
    }

    pub fn audience_share(&self) -> f64 {
        self.n_attack as f64 / self.n_user as f64
    }
}

/// `beta * n_attack / n_all + (1 - beta) * n_attack / n_user`.
pub fn severity_level(input: &SeverityInput) -> Result<f64> {
    input.validate()?;
    let (v, a) = (input.volume_share(), input.audience_share());
    // exact endpoints
    if input.beta == 1.0 {
        return Ok(v);
    }
    if input.beta == 0.0 {
        return Ok(a);
    }
    Ok(input.beta * v + (1.0 - input.beta) * a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityReport {
    pub input: SeverityInput,
    /// Value at beta = 1.
    pub volume_endpoint: f64,
    /// Value at beta = 0.
    pub audience_endpoint: f64,
    pub blended: f64,
}

pub fn severity_report(input: &SeverityInput) -> Result<SeverityReport> {
    let blended = severity_level(input)?;
    Ok(SeverityReport {
        input: *input,
        volume_endpoint: input.volume_share(),
        audience_endpoint: input.audience_share(),
        blended,
    })
}

impl std::fmt::Display for SeverityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "n_attack={}", self.input.n_attack)?;
        writeln!(f, "n_all={}", self.input.n_all)?;
        writeln!(f, "n_user={}", self.input.n_user)?;
        writeln!(f, "beta={}", self.input.beta)?;
        writeln!(f, "severity_beta1={}", self.volume_endpoint)?;
        writeln!(f, "severity_beta0={}", self.audience_endpoint)?;
        writeln!(f, "severity={}", self.blended)
    }
}
