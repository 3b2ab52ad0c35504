pub mod bench;
pub mod categorize;
pub mod config;
pub mod forge;
pub mod oracle;
pub mod patch;
pub mod porter;
pub mod report;
pub mod vcs;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/patches.md")]
    mod patches {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/porting.md")]
    mod porting {}
    #[doc = include_str!("../../../book/src/categories.md")]
    mod categories {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../book/src/fixtures.md")]
    mod fixtures {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
