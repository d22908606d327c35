//! Seeded synthetic table generators: planted-context data where content
//! distributions depend on one column, independent-column null data, and
//! the two desk-scale benchmark stand-ins committed under data/.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::tabular::RawTable;

/// Planted-context generator. Each context value induces a distinct mode
/// per content column; normal rows follow their context's modes with
/// probability 1 - noise. Anomalies (when requested) are half contextual
/// (content drawn from a different context value's profile) and half
/// rare-value (content uniform over all values).
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub n_rows: usize,
    pub ctx_values: usize,
    pub content_columns: usize,
    pub content_values: usize,
    pub noise: f64,
    pub n_anomalies: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_rows: 2000,
            ctx_values: 5,
            content_columns: 3,
            content_values: 12,
            noise: 0.1,
            n_anomalies: 0,
            seed: 0,
        }
    }
}

/// The mode content value for (context value, content column). The additive
/// shift is injective in the context value, so modes never collide within a
/// column as long as ctx_values <= content_values.
/// Nonzero shift per column keeps every column's mode profile distinct
/// and prevents any content column from being a verbatim copy of the
/// context.
fn planted_mode(ctx_value: usize, col: usize, content_values: usize) -> usize {
    (ctx_value + col + 1) % content_values
}

pub fn planted_raw(spec: &PlantedSpec) -> RawTable {
    assert!(spec.ctx_values >= 2 && spec.ctx_values <= spec.content_values);
    assert!(spec.n_anomalies < spec.n_rows);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut header = vec!["ctx".to_string()];
    header.extend((1..=spec.content_columns).map(|j| format!("y{j}")));
    header.push("label".to_string());

    let mut rows = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        let anomalous = i < spec.n_anomalies;
        let ctx = rng.gen_range(0..spec.ctx_values);
        // Contextual anomalies follow a different context's profile;
        // rare-value anomalies ignore profiles entirely.
        let contextual = anomalous && i % 2 == 0;
        let profile_ctx = if contextual {
            (ctx + 1 + rng.gen_range(0..spec.ctx_values - 1)) % spec.ctx_values
        } else {
            ctx
        };
        let mut row = vec![format!("g{ctx}")];
        for j in 0..spec.content_columns {
            let v = if anomalous && !contextual {
                rng.gen_range(0..spec.content_values)
            } else if rng.gen_bool(spec.noise) {
                rng.gen_range(0..spec.content_values)
            } else {
                planted_mode(profile_ctx, j, spec.content_values)
            };
            row.push(format!("v{v}"));
        }
        row.push(if anomalous { "1" } else { "0" }.to_string());
        rows.push(row);
    }
    shuffle_rows(&mut rows, spec.seed ^ 0x9e37_79b9);
    RawTable { header, rows }
}

/// Independent uniform columns: no context carries information about any
/// other column.
#[derive(Debug, Clone)]
pub struct IidSpec {
    pub n_rows: usize,
    pub columns: usize,
    pub values: usize,
    pub seed: u64,
}

impl Default for IidSpec {
    fn default() -> Self {
        IidSpec { n_rows: 2000, columns: 4, values: 12, seed: 0 }
    }
}

pub fn iid_raw(spec: &IidSpec) -> RawTable {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut header: Vec<String> = (1..=spec.columns).map(|j| format!("c{j}")).collect();
    header.push("label".to_string());
    let rows = (0..spec.n_rows)
        .map(|_| {
            let mut row: Vec<String> =
                (0..spec.columns).map(|_| format!("v{}", rng.gen_range(0..spec.values))).collect();
            row.push("0".to_string());
            row
        })
        .collect();
    RawTable { header, rows }
}

fn shuffle_rows(rows: &mut [Vec<String>], seed: u64) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
}

/// Columns of a benchmark stand-in. Informative columns carry a
/// context-dependent mode; the rest have one context-independent mode.
struct FixtureColumn {
    name: &'static str,
    cardinality: usize,
    informative: bool,
}

/// Mode adherence of context-dependent columns.
const FIXTURE_SIGNAL_NOISE: f64 = 0.25;
/// Filler columns are kept near-uniform so they dilute nothing.
const FIXTURE_FILLER_NOISE: f64 = 0.8;

/// Generates a contextual-anomaly fixture: the first column is the planted
/// context; informative content columns follow a context-dependent mode
/// plus uniform noise, filler columns a fixed mode. Anomaly mix is half
/// contextual, half rare-value. A contextual anomaly borrows, per
/// informative column independently, the mode of some other context: each
/// borrowed value is common marginally and the row forms no coherent
/// alternative profile, so it is visible only against its own context's
/// conditional distribution. Rare-value anomalies draw every content
/// column uniformly and are visible marginally.
fn fixture_raw(
    columns: &[FixtureColumn],
    n_rows: usize,
    n_anomalies: usize,
    seed: u64,
) -> RawTable {
    let ctx_card = columns[0].cardinality;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut header: Vec<String> = columns.iter().map(|c| c.name.to_string()).collect();
    header.push("is_anomaly".to_string());

    // Mode of content column j under context value v: deterministic spread
    // so distinct contexts get distinct modes wherever cardinality allows.
    let mode = |v: usize, j: usize, card: usize| (v * (j + 2) + j) % card;

    let mut rows = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let anomalous = i < n_anomalies;
        let contextual = anomalous && i % 2 == 0;
        let ctx = rng.gen_range(0..ctx_card);
        let mut row = vec![format!("{}_{}", columns[0].name.to_lowercase(), ctx)];
        for (j, col) in columns.iter().enumerate().skip(1) {
            let mode_ctx = if !col.informative {
                0
            } else if contextual {
                (ctx + 1 + rng.gen_range(0..ctx_card - 1)) % ctx_card
            } else {
                ctx
            };
            let noise =
                if col.informative { FIXTURE_SIGNAL_NOISE } else { FIXTURE_FILLER_NOISE };
            let v = if anomalous && !contextual {
                rng.gen_range(0..col.cardinality)
            } else if rng.gen_bool(noise) {
                rng.gen_range(0..col.cardinality)
            } else {
                mode(mode_ctx, j, col.cardinality)
            };
            row.push(format!("{}_{}", col.name.to_lowercase(), v));
        }
        row.push(if anomalous { "1" } else { "0" }.to_string());
        rows.push(row);
    }
    shuffle_rows(&mut rows, seed ^ 0x51_7c_c1_b7);
    RawTable { header, rows }
}

/// Contraceptive-method-choice stand-in: 1,473 rows, 29 anomalies, 8
/// feature columns with total cardinality 25 (average 3.12). The planted
/// context is the first column.
pub fn cmc_fixture() -> RawTable {
    let columns = [
        FixtureColumn { name: "Contraceptive_method_used", cardinality: 3, informative: false },
        FixtureColumn { name: "Wife_education", cardinality: 4, informative: true },
        FixtureColumn { name: "Husband_education", cardinality: 4, informative: false },
        FixtureColumn { name: "Number_of_children", cardinality: 4, informative: true },
        FixtureColumn { name: "Wife_religion", cardinality: 2, informative: false },
        FixtureColumn { name: "Wife_now_working", cardinality: 2, informative: false },
        FixtureColumn { name: "Husband_occupation", cardinality: 4, informative: false },
        FixtureColumn { name: "Standard_of_living_index", cardinality: 2, informative: false },
    ];
    fixture_raw(&columns, 1473, 29, 0x0c3c)
}

/// Solar-flare stand-in: 1,066 rows, 43 anomalies, 11 feature columns with
/// total cardinality 41 (average 3.73). The planted context is the first
/// column.
pub fn sf_fixture() -> RawTable {
    let columns = [
        FixtureColumn {
            name: "X-class_flares_production_by_this_region",
            cardinality: 2,
            informative: false,
        },
        FixtureColumn { name: "Modified_Zurich_class", cardinality: 7, informative: true },
        FixtureColumn { name: "Largest_spot_size", cardinality: 6, informative: true },
        FixtureColumn { name: "Spot_distribution", cardinality: 6, informative: true },
        FixtureColumn { name: "Activity", cardinality: 4, informative: false },
        FixtureColumn { name: "Evolution", cardinality: 3, informative: false },
        FixtureColumn { name: "Previous_24h_activity", cardinality: 3, informative: false },
        FixtureColumn { name: "Historically_complex", cardinality: 3, informative: false },
        FixtureColumn { name: "Region_became_complex", cardinality: 3, informative: false },
        FixtureColumn { name: "Area", cardinality: 2, informative: false },
        FixtureColumn { name: "Area_of_largest_spot", cardinality: 2, informative: false },
    ];
    fixture_raw(&columns, 1066, 43, 0x05f0)
}
