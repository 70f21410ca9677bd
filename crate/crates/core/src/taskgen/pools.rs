use std::sync::LazyLock;

use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub(crate) struct ReadingPools {
    pub names: Vec<String>,
    pub activities: Vec<String>,
    pub icl_names: Vec<String>,
    pub icl_activities: Vec<String>,
    pub relations: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub(crate) struct PersonaPools {
    pub names: Vec<String>,
    pub activities: Vec<String>,
    pub icl_pairs: Vec<(String, String)>,
    pub icl_query: String,
}

#[derive(Debug, Deserialize)]
pub(crate) struct Pools {
    pub reading: ReadingPools,
    pub persona: PersonaPools,
    pub scholars: Vec<String>,
}

pub(crate) static POOLS: LazyLock<Pools> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../../data/pools.json")).expect("bundled pools.json")
});
