// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks: a synthetic dataset with a planted
//! two-condition syndrome and its daily target series.

use syndro_core::synthbench::{gen_synthetic_dataset, SyntheticDataConfig};
use syndro_core::{
    count_series, parse_syndrome, Dataset, Granularity, Semantics, Syndrome, TargetSeries, TimeIndex,
};

pub struct Fixture {
    pub dataset: Dataset,
    pub index: TimeIndex,
    pub planted: Syndrome,
    pub targets: TargetSeries,
}

pub const PLANTED: &str = "a01 = \"v01\" AND a04 = \"v00\"\nOR a07 = \"v02\"";

pub fn fixture(n_instances: usize, granularity: Granularity) -> Fixture {
    let dataset = gen_synthetic_dataset(&SyntheticDataConfig {
        n_instances,
        ..SyntheticDataConfig::default()
    })
    .expect("valid generator config");
    let index = TimeIndex::spanning(&dataset, granularity);
    let planted = parse_syndrome(PLANTED, dataset.schema()).expect("planted syndrome parses");
    let counts = count_series(&planted, &dataset, &index, Semantics::Disjunctive);
    let targets = TargetSeries::for_index(&index, counts.0).expect("series matches index");
    Fixture {
        dataset,
        index,
        planted,
        targets,
    }
}
