//! Latin hypercube sampling of the 10-D wheel/terrain input space and
//! generation of labeled force datasets.
//!
//! Each surrogate input row holds, in canonical order: slip ratio, slip
//! angle, longitudinal velocity, normal load, steering rate, aggregate
//! soil modulus k*, sinkage exponent n, shear modulus k, cohesion c,
//! and friction angle phi. Targets are lateral tire forces from the
//! reference terramechanics model.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Result, TerraError};
use crate::terramech::{self, TerrainParams, TireForces, WheelGeometry, WheelState, DEFAULT_MESH};

/// Number of surrogate input dimensions.
pub const DIM: usize = 10;

/// Canonical dimension names, in input order.
pub const DIMENSION_NAMES: [&str; DIM] = [
    "slip_ratio",
    "slip_angle",
    "velocity",
    "load",
    "steering_rate",
    "k_star",
    "n",
    "k",
    "c",
    "phi",
];

/// Column index of the normal load within an input row.
pub const LOAD_INDEX: usize = 3;

/// Column index of the aggregate modulus k* within an input row.
pub const K_STAR_INDEX: usize = 5;

/// Column index of the sinkage exponent n within an input row.
pub const N_INDEX: usize = 6;

/// Offset redraws attempted before stratum swapping repairs a row whose
/// load the sampled soil cannot support.
const MAX_OFFSET_REDRAWS: usize = 20;

/// Bounds of the sampled input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpace {
    /// Per-dimension [min, max] bounds in canonical order.
    pub bounds: [[f64; 2]; DIM],
}

impl Default for InputSpace {
    /// The surrogate training envelope: slip ratio, slip angle [rad],
    /// velocity [m/s], load [N], steering rate [rad/s], k* [N/m^(n+2)],
    /// n [-], k [m], c [Pa], phi [rad].
    fn default() -> Self {
        Self {
            bounds: [
                [-1.0, 1.0],
                [-0.6, 0.6],
                [2.0, 10.0],
                [500.0, 5500.0],
                [-0.56, 0.56],
                [43_000.0, 2_080_000.0],
                [0.3, 1.3],
                [0.01, 0.024],
                [650.0, 20_700.0],
                [0.105, 0.66],
            ],
        }
    }
}

impl InputSpace {
    /// Validates that every dimension has min < max.
    pub fn validate(&self) -> Result<()> {
        for (d, b) in self.bounds.iter().enumerate() {
            if !(b[0] < b[1]) {
                return Err(TerraError::InvalidInput(format!(
                    "dimension {} has empty bounds [{}, {}]",
                    DIMENSION_NAMES[d], b[0], b[1]
                )));
            }
        }
        Ok(())
    }

    /// True when every coordinate of `row` lies inside the bounds.
    pub fn contains(&self, row: ArrayView1<f64>) -> bool {
        row.iter()
            .zip(self.bounds.iter())
            .all(|(v, b)| *v >= b[0] && *v <= b[1])
    }
}

/// Labeled training data: N×10 inputs and N×1 lateral-force targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Input rows in canonical dimension order.
    pub inputs: Array2<f64>,
    /// Lateral force targets [N], one column.
    pub targets: Array2<f64>,
    /// Generation provenance.
    pub provenance: Provenance,
}

/// How a dataset came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// RNG seed the dataset derives from.
    pub seed: u64,
    /// Number of rows requested.
    pub count: usize,
    /// Unix time of generation [s]; honors `SOURCE_DATE_EPOCH` so
    /// reproducible runs can pin it.
    pub generated_at_unix: u64,
    /// Bounds the rows were drawn from.
    pub space: InputSpace,
    /// Wheel geometry used when labeling.
    pub geometry: WheelGeometry,
    /// Rows whose soil could not carry the sampled load and were
    /// resampled or stratum-swapped.
    pub resampled_rows: usize,
}

impl Dataset {
    /// Number of rows.
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    /// True when the dataset has no rows.
    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// SHA-256 over the canonical CSV serialization of rows.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for i in 0..self.len() {
            for v in self.inputs.row(i) {
                hasher.update(format!("{v}").as_bytes());
                hasher.update(b",");
            }
            for v in self.targets.row(i) {
                hasher.update(format!("{v}").as_bytes());
                hasher.update(b";");
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Latin hypercube sample of `count` rows over `space`.
///
/// For every dimension the interval is divided into `count` equal
/// strata; a random permutation assigns one stratum per row and a
/// uniform offset places the sample inside it, so each dimension's
/// marginal histogram with `count` bins holds exactly one sample per
/// bin. Deterministic for a given seed.
pub fn lhs_sample(space: &InputSpace, count: usize, seed: u64) -> Result<Array2<f64>> {
    space.validate()?;
    if count == 0 {
        return Err(TerraError::InvalidInput("sample count must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Array2::zeros((count, DIM));
    let mut strata: Vec<usize> = (0..count).collect();
    for d in 0..DIM {
        let [lo, hi] = space.bounds[d];
        let width = (hi - lo) / count as f64;
        strata.shuffle(&mut rng);
        for (row, &stratum) in strata.iter().enumerate() {
            let offset: f64 = rng.random();
            samples[[row, d]] = lo + (stratum as f64 + offset) * width;
        }
    }
    Ok(samples)
}

/// Splits an input row into the wheel state and terrain parameters the
/// reference model consumes. The sampled aggregate modulus k* is
/// decomposed as k_c = 0, k_phi = k*, the canonical representative of
/// the aggregate.
pub fn row_to_state(row: ArrayView1<f64>) -> (WheelState, TerrainParams) {
    let ws = WheelState {
        slip_ratio: row[0],
        slip_angle: row[1],
        longitudinal_velocity: row[2],
        normal_load: row[3],
        steering_rate: row[4],
    };
    let terrain = TerrainParams {
        k_c: 0.0,
        k_phi: row[K_STAR_INDEX],
        n: row[N_INDEX],
        k: row[7],
        c: row[8],
        phi: row[9],
    };
    (ws, terrain)
}

/// Builds the canonical 10-feature input row for a wheel state on the
/// given terrain.
pub fn features(
    ws: &WheelState,
    terrain: &TerrainParams,
    geom: &WheelGeometry,
) -> [f64; DIM] {
    [
        ws.slip_ratio,
        ws.slip_angle,
        ws.longitudinal_velocity,
        ws.normal_load,
        ws.steering_rate,
        terramech::aggregate_modulus(terrain, geom),
        terrain.n,
        terrain.k,
        terrain.c,
        terrain.phi,
    ]
}

/// Labels one input row through the reference model.
fn label_row(row: ArrayView1<f64>, geom: &WheelGeometry) -> Result<TireForces> {
    let (ws, terrain) = row_to_state(row);
    terramech::tire_forces(&ws, &terrain, geom, DEFAULT_MESH)
}

/// Generates a labeled dataset: LHS inputs propagated through the
/// reference terramechanics model, targets = lateral force.
///
/// Rows whose sampled soil cannot support the sampled load are repaired
/// without breaking the Latin hypercube marginals: first the offsets
/// within the row's assigned strata are redrawn; if the stratum
/// combination itself is infeasible, the load / k* / n stratum is
/// swapped with a feasible donor row (both rows keep one sample per
/// stratum per dimension). More than 1% repaired rows logs a
/// data-quality warning.
pub fn generate_dataset(
    space: &InputSpace,
    count: usize,
    seed: u64,
    geom: &WheelGeometry,
) -> Result<Dataset> {
    let mut inputs = lhs_sample(space, count, seed)?;
    // Dedicated repair stream so feasible-path draws stay stable.
    let mut repair_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let stratum_widths: Vec<f64> = (0..DIM)
        .map(|d| (space.bounds[d][1] - space.bounds[d][0]) / count as f64)
        .collect();

    // Feasibility must match labelability exactly: at braking slip the
    // shear stress carries part of the vertical load with opposite
    // sign, so the bearing capacity at a row's own slip state can be
    // tighter than the static one.
    let feasible = |row: ArrayView1<f64>| -> bool { label_row(row, geom).is_ok() };

    let infeasible: Vec<usize> = (0..count)
        .into_par_iter()
        .filter(|&i| !feasible(inputs.row(i)))
        .collect();

    let mut resampled = 0usize;
    let mut unrepaired: Vec<usize> = Vec::new();
    for &i in &infeasible {
        resampled += 1;
        let mut fixed = false;
        for _ in 0..MAX_OFFSET_REDRAWS {
            let mut row = inputs.row_mut(i);
            for d in 0..DIM {
                let lo = space.bounds[d][0];
                let stratum = ((row[d] - lo) / stratum_widths[d]).floor().min(count as f64 - 1.0);
                let offset: f64 = repair_rng.random();
                row[d] = lo + (stratum + offset) * stratum_widths[d];
            }
            if feasible(inputs.row(i)) {
                fixed = true;
                break;
            }
        }
        if !fixed {
            unrepaired.push(i);
        }
    }

    // Stratum swaps along the load, k*, then n axis against random
    // feasible donors; a swap is kept only if both rows end feasible.
    for &i in &unrepaired {
        let mut fixed = false;
        'repair: for dim in [LOAD_INDEX, K_STAR_INDEX, N_INDEX] {
            for _ in 0..MAX_OFFSET_REDRAWS {
                let donor = repair_rng.random_range(0..count);
                if donor == i {
                    continue;
                }
                let (a, b) = (inputs[[i, dim]], inputs[[donor, dim]]);
                inputs[[i, dim]] = b;
                inputs[[donor, dim]] = a;
                if feasible(inputs.row(i)) && feasible(inputs.row(donor)) {
                    fixed = true;
                    break 'repair;
                }
                inputs[[i, dim]] = a;
                inputs[[donor, dim]] = b;
            }
        }
        if !fixed {
            return Err(TerraError::InvalidInput(format!(
                "row {i} could not be repaired; the input space is largely infeasible \
                 for the wheel geometry"
            )));
        }
    }

    if resampled * 100 > count {
        log::warn!(
            "{resampled} of {count} sampled rows required resampling; the input space \
             grazes the soil bearing-capacity limit"
        );
    }

    let labels: Vec<Result<TireForces>> = (0..count)
        .into_par_iter()
        .map(|i| label_row(inputs.row(i), geom))
        .collect();
    let mut targets = Array2::zeros((count, 1));
    for (i, label) in labels.into_iter().enumerate() {
        targets[[i, 0]] = label?.fy;
    }

    Ok(Dataset {
        inputs,
        targets,
        provenance: Provenance {
            seed,
            count,
            generated_at_unix: timestamp(),
            space: space.clone(),
            geometry: *geom,
            resampled_rows: resampled,
        },
    })
}

/// Current Unix time, overridable through `SOURCE_DATE_EPOCH` for
/// byte-reproducible artifacts.
fn timestamp() -> u64 {
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(value) = epoch.parse() {
            return value;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Disjoint 70/15/15 train/validation/test partition; the rounding
/// residue goes to training. Deterministic per seed.
pub fn split_dataset(d: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let n = d.len();
    if n < 20 {
        return Err(TerraError::InvalidInput(format!(
            "need at least 20 rows to split, got {n}"
        )));
    }
    let n_val = n * 15 / 100;
    let n_test = n * 15 / 100;
    let n_train = n - n_val - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let take = |rows: &[usize]| -> Dataset {
        let cols = d.inputs.ncols();
        let inputs = Array2::from_shape_fn((rows.len(), cols), |(i, j)| d.inputs[[rows[i], j]]);
        let targets =
            Array2::from_shape_fn((rows.len(), 1), |(i, j)| d.targets[[rows[i], j]]);
        Dataset {
            inputs,
            targets,
            provenance: d.provenance.clone(),
        }
    };
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}

/// Writes the dataset rows as CSV: ten input columns plus the target.
/// Floats use the shortest round-trip decimal form, so re-parsing is
/// lossless.
pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
    let mut header: Vec<&str> = DIMENSION_NAMES.to_vec();
    header.push("fy");
    writer
        .write_record(&header)
        .map_err(|e| TerraError::Serialization(e.to_string()))?;
    for i in 0..d.len() {
        let mut record: Vec<String> = d.inputs.row(i).iter().map(|v| format!("{v}")).collect();
        record.push(format!("{}", d.targets[[i, 0]]));
        writer
            .write_record(&record)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| TerraError::Serialization(e.to_string()))?;
    Ok(())
}

/// Reads a dataset back from [`write_csv`] output. Provenance is taken
/// from the caller since the CSV holds only data rows.
pub fn read_csv(path: &Path, provenance: Provenance) -> Result<Dataset> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
    let mut rows: Vec<[f64; DIM + 1]> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TerraError::Serialization(e.to_string()))?;
        if record.len() != DIM + 1 {
            return Err(TerraError::Serialization(format!(
                "expected {} columns, got {}",
                DIM + 1,
                record.len()
            )));
        }
        let mut row = [0.0; DIM + 1];
        for (j, field) in record.iter().enumerate() {
            row[j] = field
                .parse()
                .map_err(|e| TerraError::Serialization(format!("bad float {field:?}: {e}")))?;
        }
        rows.push(row);
    }
    let n = rows.len();
    let mut inputs = Array2::zeros((n, DIM));
    let mut targets = Array2::zeros((n, 1));
    for (i, row) in rows.iter().enumerate() {
        for j in 0..DIM {
            inputs[[i, j]] = row[j];
        }
        targets[[i, 0]] = row[DIM];
    }
    Ok(Dataset {
        inputs,
        targets,
        provenance,
    })
}

/// Writes the JSON provenance manifest next to a dataset.
pub fn write_manifest(d: &Dataset, path: &Path) -> Result<()> {
    let mut manifest = serde_json::to_value(&d.provenance)
        .map_err(|e| TerraError::Serialization(e.to_string()))?;
    manifest["content_sha256"] = serde_json::Value::String(d.content_hash());
    std::fs::write(
        path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| TerraError::Serialization(e.to_string()))?,
    )?;
    Ok(())
}

/// Reads a manifest written by [`write_manifest`]: the provenance and
/// the recorded content hash.
pub fn read_manifest(path: &Path) -> Result<(Provenance, String)> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| TerraError::Serialization(format!("manifest {}: {e}", path.display())))?;
    let hash = value
        .get("content_sha256")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            TerraError::Serialization(format!("manifest {} lacks content_sha256", path.display()))
        })?
        .to_string();
    let provenance: Provenance = serde_json::from_value(value)
        .map_err(|e| TerraError::Serialization(format!("manifest {}: {e}", path.display())))?;
    Ok((provenance, hash))
}

/// Loads a dataset from its CSV and manifest, verifying the content
/// hash.
pub fn read_dataset(csv_path: &Path, manifest_path: &Path) -> Result<Dataset> {
    let (provenance, expected_hash) = read_manifest(manifest_path)?;
    let dataset = read_csv(csv_path, provenance)?;
    let actual = dataset.content_hash();
    if actual != expected_hash {
        return Err(TerraError::Serialization(format!(
            "dataset {} does not match its manifest hash",
            csv_path.display()
        )));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terramech::{normal_pressure, tire_forces};

    #[test]
    fn single_sample_is_inside_bounds() {
        let space = InputSpace::default();
        let s = lhs_sample(&space, 1, 7).unwrap();
        assert!(space.contains(s.row(0)));
    }

    #[test]
    fn each_stratum_holds_exactly_one_sample() {
        let space = InputSpace::default();
        for seed in [0, 1234] {
            let n = 100;
            let s = lhs_sample(&space, n, seed).unwrap();
            for d in 0..DIM {
                let [lo, hi] = space.bounds[d];
                let mut histogram = vec![0usize; n];
                for i in 0..n {
                    let bin = (((s[[i, d]] - lo) / (hi - lo)) * n as f64)
                        .floor()
                        .min(n as f64 - 1.0) as usize;
                    histogram[bin] += 1;
                }
                assert!(
                    histogram.iter().all(|&c| c == 1),
                    "dimension {} not stratified for seed {seed}",
                    DIMENSION_NAMES[d]
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = InputSpace::default();
        let a = lhs_sample(&space, 64, 42).unwrap();
        let b = lhs_sample(&space, 64, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_rows_round_trip_through_the_reference_model() {
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let d = generate_dataset(&space, 64, 3, &geom).unwrap();
        assert_eq!(d.len(), 64);
        for i in 0..d.len() {
            assert!(space.contains(d.inputs.row(i)), "row {i} escaped bounds");
            let (ws, terrain) = row_to_state(d.inputs.row(i));
            let again = tire_forces(&ws, &terrain, &geom, DEFAULT_MESH).unwrap();
            assert_eq!(again.fy, d.targets[[i, 0]], "row {i} target not reproducible");
        }
    }

    #[test]
    fn targets_respect_the_shear_saturation_bound() {
        // Pointwise |tau_y| <= c + sigma tan(phi), and sigma peaks at
        // the deepest point of the arc, so the integrated lateral force
        // cannot exceed the saturated stress over the contact patch.
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let d = generate_dataset(&space, 128, 11, &geom).unwrap();
        for i in 0..d.len() {
            let (ws, terrain) = row_to_state(d.inputs.row(i));
            let forces = tire_forces(&ws, &terrain, &geom, DEFAULT_MESH).unwrap();
            let theta_e = (1.0 - forces.sinkage / geom.radius).clamp(-1.0, 1.0).acos();
            let sigma_max = normal_pressure(forces.sinkage, &terrain, &geom).unwrap();
            let patch = geom.radius * theta_e * geom.width;
            let bound = (terrain.c + sigma_max * terrain.phi.tan()) * patch;
            assert!(
                d.targets[[i, 0]].abs() <= bound * (1.0 + 1e-12),
                "row {i}: |fy| = {} exceeds saturation bound {bound}",
                d.targets[[i, 0]].abs()
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let a = generate_dataset(&space, 96, 5, &geom).unwrap();
        let b = generate_dataset(&space, 96, 5, &geom).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn split_ratios_match_the_rounding_rule() {
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let d = generate_dataset(&space, 100, 9, &geom).unwrap();
        let (train, val, test) = split_dataset(&d, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (70, 15, 15));

        let d20 = generate_dataset(&space, 20, 9, &geom).unwrap();
        let (train, val, test) = split_dataset(&d20, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (14, 3, 3));
    }

    #[test]
    fn split_is_a_disjoint_partition() {
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let d = generate_dataset(&space, 50, 21, &geom).unwrap();
        let (train, val, test) = split_dataset(&d, 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for part in [&train, &val, &test] {
            for i in 0..part.len() {
                let key = format!("{:?}", part.inputs.row(i).to_vec());
                assert!(seen.insert(key), "duplicate row across splits");
            }
        }
        assert_eq!(seen.len(), d.len());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let space = InputSpace::default();
        let geom = WheelGeometry::default();
        let d = generate_dataset(&space, 32, 13, &geom).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.csv");
        write_csv(&d, &path).unwrap();
        let back = read_csv(&path, d.provenance.clone()).unwrap();
        assert_eq!(d.inputs, back.inputs);
        assert_eq!(d.targets, back.targets);

        let manifest = dir.path().join("dataset.json");
        write_manifest(&d, &manifest).unwrap();
        let via_manifest = read_dataset(&path, &manifest).unwrap();
        assert_eq!(d, via_manifest);

        // A tampered CSV must fail the manifest hash check.
        let mut text = std::fs::read_to_string(&path).unwrap();
        let first_row = text.lines().nth(1).unwrap().to_string();
        text.push_str(&first_row);
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        assert!(read_dataset(&path, &manifest).is_err());
    }
}
