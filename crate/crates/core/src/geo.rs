//! The discrete location space: bounding boxes, grids of cells with a
//! Euclidean ground distance in kilometres, and check-in ingestion.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{pmf_unchecked, Pmf, SampleSet};

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let bbox = BoundingBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::domain(format!("invalid bounding box {self:?}")));
        }
        Ok(())
    }

    /// Central Paris, as used for the 10,260 check-in study region.
    pub fn paris() -> Self {
        BoundingBox {
            lat_min: 48.8286,
            lat_max: 48.8798,
            lon_min: 2.2855,
            lon_max: 2.3909,
        }
    }

    /// Northern San Francisco.
    pub fn san_francisco() -> Self {
        BoundingBox {
            lat_min: 37.7228,
            lat_max: 37.7946,
            lon_min: -122.5153,
            lon_max: -122.3789,
        }
    }

    pub fn strictly_contains(&self, lat: f64, lon: f64) -> bool {
        lat > self.lat_min && lat < self.lat_max && lon > self.lon_min && lon < self.lon_max
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    fn km_per_deg_lat() -> f64 {
        EARTH_RADIUS_KM * std::f64::consts::PI / 180.0
    }

    fn km_per_deg_lon(&self) -> f64 {
        let mid = 0.5 * (self.lat_min + self.lat_max);
        Self::km_per_deg_lat() * mid.to_radians().cos()
    }

    pub fn width_km(&self) -> f64 {
        (self.lon_max - self.lon_min) * self.km_per_deg_lon()
    }

    pub fn height_km(&self) -> f64 {
        (self.lat_max - self.lat_min) * Self::km_per_deg_lat()
    }

    /// Equirectangular projection about the box centre; x grows east, y north.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let lat_c = 0.5 * (self.lat_min + self.lat_max);
        let lon_c = 0.5 * (self.lon_min + self.lon_max);
        (
            (lon - lon_c) * self.km_per_deg_lon(),
            (lat - lat_c) * Self::km_per_deg_lat(),
        )
    }
}

/// Symmetric table of ground distances (km) between the cells of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    m: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Pairwise Euclidean distances between planar points.
    pub fn from_points(points: &[(f64, f64)]) -> Self {
        let m = points.len();
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let d = (points[i].0 - points[j].0).hypot(points[i].1 - points[j].1);
                data[i * m + j] = d;
                data[j * m + i] = d;
            }
        }
        DistanceMatrix { m, data }
    }

    /// `m` points on a line with the given spacing.
    pub fn line(m: usize, spacing: f64) -> Self {
        let points: Vec<(f64, f64)> = (0..m).map(|i| (i as f64 * spacing, 0.0)).collect();
        Self::from_points(&points)
    }

    /// Accepts an arbitrary table after checking shape, symmetry and sign.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let mut data = Vec::with_capacity(m * m);
        for row in &rows {
            Error::check_dim(m, row.len())?;
            data.extend_from_slice(row);
        }
        for i in 0..m {
            if data[i * m + i] != 0.0 {
                return Err(Error::domain(format!("nonzero self-distance at {i}")));
            }
            for j in 0..m {
                let d = data[i * m + j];
                if !d.is_finite() || d < 0.0 || d != data[j * m + i] {
                    return Err(Error::domain(format!("invalid distance at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { m, data })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    /// Smallest strictly positive distance, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.data.iter().copied().filter(|&d| d > 0.0).min_by(f64::total_cmp)
    }
}

/// A `rows x cols` grid of equal rectangular cells over a bounding box.
/// Cells are numbered row-major from the south-west corner.
#[derive(Clone, Debug)]
pub struct GridSpace {
    pub bbox: BoundingBox,
    pub rows: usize,
    pub cols: usize,
    centroids: Vec<(f64, f64)>,
    dist: DistanceMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub rows: usize,
    pub cols: usize,
    pub bbox: BoundingBox,
    /// Cell width (east-west) and height (north-south) in km.
    pub cell_km: (f64, f64),
}

pub fn build_grid(bbox: BoundingBox, rows: usize, cols: usize) -> Result<GridSpace> {
    bbox.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::domain("grid needs at least one row and one column"));
    }
    let (w, h) = (bbox.width_km(), bbox.height_km());
    let (cw, ch) = (w / cols as f64, h / rows as f64);
    let mut centroids = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            centroids.push((-0.5 * w + (c as f64 + 0.5) * cw, -0.5 * h + (r as f64 + 0.5) * ch));
        }
    }
    let dist = DistanceMatrix::from_points(&centroids);
    Ok(GridSpace {
        bbox,
        rows,
        cols,
        centroids,
        dist,
    })
}

impl GridSpace {
    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dist(&self) -> &DistanceMatrix {
        &self.dist
    }

    /// Planar centroid (km, relative to the box centre).
    pub fn centroid(&self, i: usize) -> (f64, f64) {
        self.centroids[i]
    }

    pub fn centroids(&self) -> &[(f64, f64)] {
        &self.centroids
    }

    pub fn row_col(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Geographic centroid of cell `i` as (lat, lon).
    pub fn centroid_latlon(&self, i: usize) -> (f64, f64) {
        let (r, c) = self.row_col(i);
        let b = &self.bbox;
        (
            b.lat_min + (r as f64 + 0.5) * (b.lat_max - b.lat_min) / self.rows as f64,
            b.lon_min + (c as f64 + 0.5) * (b.lon_max - b.lon_min) / self.cols as f64,
        )
    }

    pub fn cell_km(&self) -> (f64, f64) {
        (
            self.bbox.width_km() / self.cols as f64,
            self.bbox.height_km() / self.rows as f64,
        )
    }

    /// Row-major index of the cell containing (lat, lon). Each cell owns its
    /// upper edge on both axes, and the first row/column also owns the lower
    /// edge, so a point on an interior boundary goes to the lower-index cell.
    pub fn locate(&self, lat: f64, lon: f64) -> Result<usize> {
        if !self.bbox.contains(lat, lon) {
            return Err(Error::domain(format!("point ({lat}, {lon}) outside grid bbox")));
        }
        let b = &self.bbox;
        let axis = |v: f64, lo: f64, hi: f64, n: usize| -> usize {
            let frac = (v - lo) / (hi - lo) * n as f64;
            (frac.ceil() as usize).saturating_sub(1).min(n - 1)
        };
        let r = axis(lat, b.lat_min, b.lat_max, self.rows);
        let c = axis(lon, b.lon_min, b.lon_max, self.cols);
        Ok(self.index(r, c))
    }

    /// Indices of cells within Chebyshev distance `radius` of `center`.
    pub fn neighborhood(&self, center: usize, radius: usize) -> Vec<usize> {
        let (r0, c0) = self.row_col(center);
        let mut out = Vec::new();
        for r in r0.saturating_sub(radius)..=(r0 + radius).min(self.rows - 1) {
            for c in c0.saturating_sub(radius)..=(c0 + radius).min(self.cols - 1) {
                out.push(self.index(r, c));
            }
        }
        out
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            rows: self.rows,
            cols: self.cols,
            bbox: self.bbox,
            cell_km: self.cell_km(),
        }
    }
}

/// Moves all mass in the Chebyshev ring of `radius_cells` around `target`
/// onto `target`, leaving it isolated among empty cells.
pub fn plant_island(pmf: &Pmf, grid: &GridSpace, target: usize, radius_cells: usize) -> Result<Pmf> {
    Error::check_dim(grid.cell_count(), pmf.len())?;
    if target >= grid.cell_count() {
        return Err(Error::domain(format!("target cell {target} out of range")));
    }
    if radius_cells == 0 {
        return Err(Error::domain("island radius must be at least one cell"));
    }
    let mut p = pmf.as_slice().to_vec();
    let mut moved = 0.0;
    for i in grid.neighborhood(target, radius_cells) {
        if i != target {
            moved += p[i];
            p[i] = 0.0;
        }
    }
    p[target] += moved;
    Ok(pmf_unchecked(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckinRecord {
    pub user_id: String,
    pub timestamp: String,
    pub lat: f64,
    pub lon: f64,
    pub poi_id: String,
}

#[derive(Clone, Debug, Default)]
pub struct IngestResult {
    /// Records strictly inside the bounding box, in file order.
    pub records: Vec<CheckinRecord>,
    pub lines_read: usize,
    pub skipped_malformed: usize,
    pub outside_bbox: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub lines_read: usize,
    pub skipped_malformed: usize,
    pub outside_bbox: usize,
}

impl IngestResult {
    pub fn summary(&self) -> IngestSummary {
        IngestSummary {
            records: self.records.len(),
            lines_read: self.lines_read,
            skipped_malformed: self.skipped_malformed,
            outside_bbox: self.outside_bbox,
        }
    }

    /// Cell index of every record on `grid`.
    pub fn to_samples(&self, grid: &GridSpace) -> Result<SampleSet> {
        let indices = self
            .records
            .iter()
            .map(|r| grid.locate(r.lat, r.lon))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet::from_indices(indices))
    }
}

fn parse_checkin(line: &str) -> Option<CheckinRecord> {
    let mut fields = line.split('\t');
    let user_id = fields.next()?.trim();
    let timestamp = fields.next()?.trim();
    let lat: f64 = fields.next()?.trim().parse().ok()?;
    let lon: f64 = fields.next()?.trim().parse().ok()?;
    let poi_id = fields.next()?.trim();
    if !lat.is_finite() || !lon.is_finite() {
        return None;
    }
    Some(CheckinRecord {
        user_id: user_id.to_owned(),
        timestamp: timestamp.to_owned(),
        lat,
        lon,
        poi_id: poi_id.to_owned(),
    })
}

/// Reads tab-separated `user, timestamp, lat, lon, poi` rows and keeps the
/// ones strictly inside `bbox`. Malformed rows are skipped and counted.
pub fn ingest_checkins(path: impl AsRef<Path>, bbox: &BoundingBox) -> Result<IngestResult> {
    bbox.validate()?;
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = IngestResult::default();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines_read += 1;
        match parse_checkin(&line) {
            Some(rec) if bbox.strictly_contains(rec.lat, rec.lon) => out.records.push(rec),
            Some(_) => out.outside_bbox += 1,
            None => out.skipped_malformed += 1,
        }
    }
    log::info!(
        "ingested {} records from {} ({} malformed, {} outside bbox)",
        out.records.len(),
        path.display(),
        out.skipped_malformed,
        out.outside_bbox
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::uniform_pmf;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn unit_box() -> BoundingBox {
        BoundingBox::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn bbox_rejects_inverted_ranges() {
        assert!(BoundingBox::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn paris_grid_has_half_km_cells() {
        let g = build_grid(BoundingBox::paris(), 12, 16).unwrap();
        assert_eq!(g.cell_count(), 192);
        let (w, h) = g.cell_km();
        assert!((w - 0.5).abs() < 0.05 && (h - 0.5).abs() < 0.05, "{w} x {h}");
    }

    #[test]
    fn single_cell_grid() {
        let g = build_grid(unit_box(), 1, 1).unwrap();
        assert_eq!(g.cell_count(), 1);
        assert_eq!(g.dist().get(0, 0), 0.0);
    }

    #[test]
    fn two_rows_over_one_km() {
        let dlat = 1.0 / BoundingBox::km_per_deg_lat();
        let bbox = BoundingBox::new(10.0, 10.0 + dlat, 5.0, 5.01).unwrap();
        let g = build_grid(bbox, 2, 1).unwrap();
        assert_abs_diff_eq!(g.dist().get(0, 1), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(build_grid(unit_box(), 0, 3).is_err());
    }

    #[test]
    fn locate_centroids_and_ties() {
        let g = build_grid(BoundingBox::paris(), 12, 16).unwrap();
        for i in 0..g.cell_count() {
            let (lat, lon) = g.centroid_latlon(i);
            assert_eq!(g.locate(lat, lon).unwrap(), i);
        }
        let g = build_grid(unit_box(), 4, 4).unwrap();
        // boundary between column 0 and 1 (lon = 0.25) inside row 0
        assert_eq!(g.locate(0.1, 0.25).unwrap(), 0);
        // corner shared by cells 0, 1, 4, 5
        assert_eq!(g.locate(0.25, 0.25).unwrap(), 0);
        assert_eq!(g.locate(0.0, 0.0).unwrap(), 0);
        assert_eq!(g.locate(1.0, 1.0).unwrap(), 15);
        assert!(g.locate(1.5, 0.5).is_err());
    }

    #[test]
    fn island_on_small_grid() {
        let g = build_grid(unit_box(), 3, 3).unwrap();
        let p = plant_island(&uniform_pmf(9).unwrap(), &g, 4, 1).unwrap();
        for i in 0..9 {
            let want = if i == 4 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(p[i], want, epsilon = 1e-15);
        }
    }

    #[test]
    fn island_without_neighbour_mass_is_noop() {
        let g = build_grid(unit_box(), 3, 3).unwrap();
        let mut w = vec![0.0; 9];
        w[4] = 0.6;
        w[0] = 0.4;
        let p = Pmf::new(w).unwrap();
        // radius 1 around the corner cell 8 covers 4, 5, 7
        let q = plant_island(&p, &g, 8, 1).unwrap();
        assert_abs_diff_eq!(q[8], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(q[0], 0.4, epsilon = 1e-15);
        let p = Pmf::point_mass(9, 4).unwrap();
        assert_eq!(plant_island(&p, &g, 4, 1).unwrap(), p);
        assert!(plant_island(&p, &g, 9, 1).is_err());
        assert!(plant_island(&p, &g, 4, 0).is_err());
    }

    #[test]
    fn ingest_fixture() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\t2010-10-19T23:55:27Z\t0.5\t0.5\t22847").unwrap();
        writeln!(f, "2\t2010-10-18T22:17:43Z\t1.5\t0.5\t420315").unwrap();
        writeln!(f, "3\t2010-10-17T23:42:03Z\t0.25\t0.75\t316637").unwrap();
        writeln!(f, "garbage row").unwrap();
        writeln!(f, "4\tt\tnan\t0.5\t1").unwrap();
        let r = ingest_checkins(f.path(), &unit_box()).unwrap();
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.records[0].user_id, "1");
        assert_eq!(r.records[1].poi_id, "316637");
        assert_eq!(r.outside_bbox, 1);
        assert_eq!(r.skipped_malformed, 2);
        let g = build_grid(unit_box(), 2, 2).unwrap();
        assert_eq!(r.to_samples(&g).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn ingest_empty_and_missing() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let r = ingest_checkins(f.path(), &unit_box()).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.skipped_malformed, 0);
        assert!(matches!(
            ingest_checkins("/nonexistent/checkins.txt", &unit_box()),
            Err(Error::Io { .. })
        ));
    }
}
