//! Site graphs compiled into the library.

use super::graph::{SiteGraph, SiteLoadError};

pub const BUNDLED_SITE_NAMES: [&str; 5] = ["shop-small", "trap-site", "checkout-flow", "classifieds", "forum"];

fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "shop-small" => include_str!("../../fixtures/shop-small.json"),
        "trap-site" => include_str!("../../fixtures/trap-site.json"),
        "checkout-flow" => include_str!("../../fixtures/checkout-flow.json"),
        "classifieds" => include_str!("../../fixtures/classifieds.json"),
        "forum" => include_str!("../../fixtures/forum.json"),
        _ => return None,
    })
}

/// Raw JSON of a bundled site.
pub fn bundled_site_source(name: &str) -> Option<&'static str> {
    source(name)
}

/// Parses a bundled site; `None` for unknown names.
pub fn bundled_site(name: &str) -> Option<Result<SiteGraph, SiteLoadError>> {
    source(name).map(SiteGraph::from_json)
}

/// Every bundled site, in [`BUNDLED_SITE_NAMES`] order.
pub fn bundled_sites() -> Result<Vec<SiteGraph>, SiteLoadError> {
    BUNDLED_SITE_NAMES
        .iter()
        .map(|n| SiteGraph::from_json(source(n).expect("listed fixture")))
        .collect()
}
