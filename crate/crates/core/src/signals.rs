//! Emission signals for load shifting, one per metric.

use crate::case::{case_hash, GridCase, Partition};
use crate::dispatch::{DispatchModel, LmceMethod, DEFAULT_DELTA};
use crate::metrics::{ace_with, cef_with, lace_r_with, MetricKind, LACE_R_SEGMENTS};
use crate::nn::{expand_zonal, project_balance, zone_loads, NetworkModel};
use crate::sls::{SignalSource, SlsError};

/// Signals computed directly from the market model.
pub struct ClassicSignal<'a> {
    case: &'a GridCase,
    model: &'a DispatchModel,
    kind: MetricKind,
    hash: String,
    pub segments: usize,
}

impl<'a> ClassicSignal<'a> {
    /// `kind` must be one of ACE, LMCE, LACE-R or CEF.
    pub fn new(case: &'a GridCase, model: &'a DispatchModel, kind: MetricKind) -> Self {
        ClassicSignal {
            case,
            model,
            kind,
            hash: case_hash(case),
            segments: LACE_R_SEGMENTS,
        }
    }
}

impl SignalSource for ClassicSignal<'_> {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn signal(&self, d: &[f64]) -> Result<Vec<f64>, SlsError> {
        Ok(match self.kind {
            MetricKind::AceBroadcast => vec![ace_with(self.model, d)?; d.len()],
            MetricKind::Lmce => self.model.lmce(d, LmceMethod::Basis, DEFAULT_DELTA)?.mu,
            MetricKind::LaceR => lace_r_with(self.model, d, self.segments, &self.hash)?.metric.values,
            MetricKind::Cef => cef_with(self.case, self.model, d, &self.hash)?.values,
            other => {
                return Err(SlsError::Signal {
                    name: other.name().to_string(),
                    message: "not a market-derived metric".into(),
                })
            }
        })
    }
}

/// Projected output `λ̃` of a trained nodal model at the pre-shift loads.
pub struct LaceSSignal<'a> {
    pub network: &'a NetworkModel,
    pub market: &'a DispatchModel,
}

impl SignalSource for LaceSSignal<'_> {
    fn name(&self) -> String {
        MetricKind::LaceS.name().to_string()
    }

    fn signal(&self, d: &[f64]) -> Result<Vec<f64>, SlsError> {
        let e = self.market.solve(d)?.total_emissions;
        let err = |e: crate::nn::NnError| SlsError::Signal {
            name: self.name(),
            message: e.to_string(),
        };
        let lh = self.network.forward(d).map_err(err)?;
        project_balance(&lh, d, e).map_err(err)
    }
}

/// Projected zonal output `λ̃ᶻ`, broadcast to the loads of each zone.
pub struct ZaceSSignal<'a> {
    pub network: &'a NetworkModel,
    pub market: &'a DispatchModel,
    pub zones: &'a Partition,
}

impl SignalSource for ZaceSSignal<'_> {
    fn name(&self) -> String {
        MetricKind::ZaceSExpanded.name().to_string()
    }

    fn signal(&self, d: &[f64]) -> Result<Vec<f64>, SlsError> {
        let e = self.market.solve(d)?.total_emissions;
        let err = |e: crate::nn::NnError| SlsError::Signal {
            name: self.name(),
            message: e.to_string(),
        };
        let lh = self.network.forward(d).map_err(err)?;
        let dz = zone_loads(d, self.zones).map_err(err)?;
        Ok(expand_zonal(&project_balance(&lh, &dz, e).map_err(err)?, self.zones))
    }
}
