//! Locational carbon emission metrics for DC-dispatched transmission grids.

pub mod case;
pub mod dispatch;
pub mod fixtures;
pub mod lp;
pub mod metrics;
pub mod nn;
pub mod signals;
pub mod sls;
pub mod training;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cases.md")]
    mod cases {}
    #[doc = include_str!("../../../book/src/dispatch.md")]
    mod dispatch {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/lace_s.md")]
    mod lace_s {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/zonal.md")]
    mod zonal {}
    #[doc = include_str!("../../../book/src/load_shifting.md")]
    mod load_shifting {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
