//! Mean-bias correction against a high-resolution long-term mean wind raster.
//!
//! The raster mean at a site divided by the mean of the reanalysis speed
//! series at the same height gives a multiplicative factor that is then
//! applied to the hub-height series.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reanalysis::LatLon;
use crate::scalar::Scalar;

/// Search radius, in pixels, used when the containing pixel is nodata.
pub const NODATA_SEARCH_RADIUS: i64 = 5;

/// Heights at which mean-wind layers are published.
pub const RASTER_HEIGHTS: [f64; 2] = [50.0, 100.0];

const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_GDAL_NODATA: u16 = 42113;

/// Single-band mean wind speed layer on a regular lat/lon raster.
///
/// `origin` is the north-west corner; row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanWindRaster {
    pub origin: LatLon,
    pub pixel_size: f64,
    pub height: f64,
    values: Array2<f64>,
    nodata: Option<f64>,
}

impl MeanWindRaster {
    pub fn new(origin: LatLon, pixel_size: f64, height: f64, values: Array2<f64>, nodata: Option<f64>) -> Result<Self> {
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::Format(format!("pixel size must be positive, got {pixel_size}")));
        }
        if !RASTER_HEIGHTS.contains(&height) {
            return Err(Error::Format(format!(
                "raster height must be 50 or 100 m, got {height}"
            )));
        }
        if values.is_empty() {
            return Err(Error::Format("raster has no pixels".into()));
        }
        let mut raster = Self {
            origin,
            pixel_size,
            height,
            values,
            nodata,
        };
        for v in raster.values.iter_mut() {
            let is_nodata = nodata.is_some_and(|nd| *v == nd);
            if !is_nodata && !v.is_finite() {
                *v = f64::NAN;
            } else if !is_nodata && *v < 0.0 {
                return Err(Error::Format(format!("negative mean wind speed {v}")));
            }
        }
        Ok(raster)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = *self.values.get((row, col))?;
        (self.is_valid(v)).then_some(v)
    }

    fn is_valid(&self, v: f64) -> bool {
        v.is_finite() && self.nodata != Some(v)
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> LatLon {
        LatLon::new(
            self.origin.lat - (row as f64 + 0.5) * self.pixel_size,
            self.origin.lon + (col as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Pixel containing the location; points on the outer edge map to the edge pixel.
    pub fn pixel_of(&self, location: LatLon) -> Option<(usize, usize)> {
        let fr = (self.origin.lat - location.lat) / self.pixel_size;
        let fc = (location.lon - self.origin.lon) / self.pixel_size;
        let (nr, nc) = (self.n_rows() as f64, self.n_cols() as f64);
        if !(fr >= 0.0 && fr <= nr && fc >= 0.0 && fc <= nc) {
            return None;
        }
        let r = (fr.floor() as usize).min(self.n_rows() - 1);
        let c = (fc.floor() as usize).min(self.n_cols() - 1);
        Some((r, c))
    }
}

/// Mean wind speed at the pixel containing `location`, falling back to the
/// nearest valid pixel within [`NODATA_SEARCH_RADIUS`] (ties: row-major order).
pub fn sample_raster(raster: &MeanWindRaster, location: LatLon) -> Result<f64> {
    let (r0, c0) = raster.pixel_of(location).ok_or(Error::OutOfDomain {
        lat: location.lat,
        lon: location.lon,
    })?;
    if let Some(v) = raster.get(r0, c0) {
        return Ok(v);
    }
    let rad = NODATA_SEARCH_RADIUS;
    let mut best: Option<(i64, usize, usize)> = None;
    for dr in -rad..=rad {
        for dc in -rad..=rad {
            let d2 = dr * dr + dc * dc;
            if d2 == 0 || d2 > rad * rad {
                continue;
            }
            let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
            if r < 0 || c < 0 {
                continue;
            }
            let (r, c) = (r as usize, c as usize);
            if raster.get(r, c).is_none() {
                continue;
            }
            let cand = (d2, r, c);
            if best.is_none_or(|b| cand < b) {
                best = Some(cand);
            }
        }
    }
    match best {
        Some((_, r, c)) => Ok(raster.get(r, c).expect("valid pixel")),
        None => Err(Error::NoData {
            lat: location.lat,
            lon: location.lon,
        }),
    }
}

/// Ratio between a high-resolution long-term mean and a reanalysis series mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactor<T> {
    pub factor: T,
    pub gwa_mean: T,
    pub reanalysis_mean: T,
}

impl<T: Scalar> CorrectionFactor<T> {
    pub fn identity() -> Self {
        Self {
            factor: T::one(),
            gwa_mean: T::one(),
            reanalysis_mean: T::one(),
        }
    }
}

pub fn correction_factor<T: Scalar>(gwa_mean: T, series: &[T]) -> Result<CorrectionFactor<T>> {
    if series.is_empty() {
        return Err(Error::DegenerateSeries("empty wind speed series".into()));
    }
    if !(gwa_mean > T::zero() && gwa_mean.is_finite()) {
        return Err(Error::Domain(format!("raster mean must be positive, got {gwa_mean}")));
    }
    let mean = series.iter().fold(T::zero(), |acc, &x| acc + x) / T::from_count(series.len());
    if !(mean > T::zero() && mean.is_finite()) {
        return Err(Error::DegenerateSeries(format!("series mean is {mean}")));
    }
    Ok(CorrectionFactor {
        factor: gwa_mean / mean,
        gwa_mean,
        reanalysis_mean: mean,
    })
}

/// The factor must come from a raster at the same height as the series it was derived from.
pub fn check_height(raster_height: f64, series_height: f64) -> Result<()> {
    if (raster_height - series_height).abs() > 1e-9 {
        return Err(Error::HeightMismatch {
            raster: raster_height,
            series: series_height,
        });
    }
    Ok(())
}

pub fn apply_correction<T: Scalar>(series: &[T], cf: &CorrectionFactor<T>) -> Vec<T> {
    series.iter().map(|&x| x * cf.factor).collect()
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Loads a raster from GeoTIFF (`.tif`/`.tiff`) or ESRI ASCII grid.
pub fn load_raster(path: &Path, height: f64) -> Result<MeanWindRaster> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("tif") | Some("tiff") => read_geotiff(path, height),
        _ => read_ascii_grid(path, height),
    }
}

pub fn read_ascii_grid(path: &Path, height: f64) -> Result<MeanWindRaster> {
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let mut tokens = text.split_whitespace().peekable();
    let mut header = std::collections::HashMap::new();
    while let Some(tok) = tokens.peek() {
        if tok.parse::<f64>().is_ok() {
            break;
        }
        let key = tokens.next().unwrap().to_ascii_lowercase();
        let val = tokens
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("bad header value for `{key}`")))?;
        header.insert(key, val);
    }
    let need = |k: &str| {
        header
            .get(k)
            .copied()
            .ok_or_else(|| Error::MissingVariable(k.to_owned()))
    };
    let n_cols = need("ncols")? as usize;
    let n_rows = need("nrows")? as usize;
    let cell = need("cellsize")?;
    let (x_ll, y_ll) = match (header.get("xllcorner"), header.get("yllcorner")) {
        (Some(&x), Some(&y)) => (x, y),
        _ => (need("xllcenter")? - cell / 2.0, need("yllcenter")? - cell / 2.0),
    };
    let nodata = header.get("nodata_value").copied();
    let values: Vec<f64> = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad raster value `{t}`")))
        })
        .collect::<Result<_>>()?;
    if values.len() != n_rows * n_cols {
        return Err(Error::Format(format!(
            "expected {} raster values, found {}",
            n_rows * n_cols,
            values.len()
        )));
    }
    let values = Array2::from_shape_vec((n_rows, n_cols), values).map_err(|e| Error::Format(e.to_string()))?;
    let origin = LatLon::new(y_ll + n_rows as f64 * cell, x_ll);
    MeanWindRaster::new(origin, cell, height, values, nodata)
}

pub fn write_ascii_grid(raster: &MeanWindRaster, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "ncols {}", raster.n_cols()).map_err(io)?;
    writeln!(out, "nrows {}", raster.n_rows()).map_err(io)?;
    writeln!(out, "xllcorner {}", raster.origin.lon).map_err(io)?;
    writeln!(
        out,
        "yllcorner {}",
        raster.origin.lat - raster.n_rows() as f64 * raster.pixel_size
    )
    .map_err(io)?;
    writeln!(out, "cellsize {}", raster.pixel_size).map_err(io)?;
    if let Some(nd) = raster.nodata {
        writeln!(out, "NODATA_value {nd}").map_err(io)?;
    }
    for row in raster.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_geotiff(path: &Path, height: f64) -> Result<MeanWindRaster> {
    use tiff::decoder::{Decoder, DecodingResult};
    use tiff::tags::Tag;

    let terr = |e: tiff::TiffError| Error::Format(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(terr)?;
    let (width, rows) = dec.dimensions().map_err(terr)?;
    let scale = dec
        .find_tag(Tag::Unknown(TAG_MODEL_PIXEL_SCALE))
        .map_err(terr)?
        .ok_or_else(|| Error::MissingVariable("ModelPixelScaleTag".into()))?
        .into_f64_vec()
        .map_err(terr)?;
    let tie = dec
        .find_tag(Tag::Unknown(TAG_MODEL_TIEPOINT))
        .map_err(terr)?
        .ok_or_else(|| Error::MissingVariable("ModelTiepointTag".into()))?
        .into_f64_vec()
        .map_err(terr)?;
    let nodata = match dec.find_tag(Tag::Unknown(TAG_GDAL_NODATA)).map_err(terr)? {
        Some(v) => {
            let s = v.into_string().map_err(terr)?;
            Some(
                s.trim_matches(char::from(0))
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad GDAL_NODATA `{s}`")))?,
            )
        }
        None => None,
    };
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::Format("incomplete georeferencing tags".into()));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if (sx - sy).abs() > 1e-9 * sx.abs() {
        return Err(Error::Format(format!(
            "non-square pixels ({sx} x {sy}) are not supported"
        )));
    }
    let origin = LatLon::new(tie[4] + tie[1] * sy, tie[3] - tie[0] * sx);
    let data: Vec<f64> = match dec.read_image().map_err(terr)? {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => return Err(Error::Format("unsupported GeoTIFF sample type".into())),
    };
    let (rows, width) = (rows as usize, width as usize);
    if data.len() != rows * width {
        return Err(Error::Format("GeoTIFF must have a single band".into()));
    }
    let values = Array2::from_shape_vec((rows, width), data).map_err(|e| Error::Format(e.to_string()))?;
    MeanWindRaster::new(origin, sx, height, values, nodata)
}

/// Writes a single-band `f32` GeoTIFF with pixel-scale, tie-point and nodata tags.
pub fn write_geotiff(raster: &MeanWindRaster, path: &Path) -> Result<()> {
    use tiff::encoder::{colortype, TiffEncoder};
    use tiff::tags::Tag;

    let terr = |e: tiff::TiffError| Error::Format(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(std::io::BufWriter::new(file)).map_err(terr)?;
    let mut img = enc
        .new_image::<colortype::Gray32Float>(raster.n_cols() as u32, raster.n_rows() as u32)
        .map_err(terr)?;
    let px = raster.pixel_size;
    img.encoder()
        .write_tag(Tag::Unknown(TAG_MODEL_PIXEL_SCALE), &[px, px, 0.0][..])
        .map_err(terr)?;
    img.encoder()
        .write_tag(
            Tag::Unknown(TAG_MODEL_TIEPOINT),
            &[0.0, 0.0, 0.0, raster.origin.lon, raster.origin.lat, 0.0][..],
        )
        .map_err(terr)?;
    if let Some(nd) = raster.nodata {
        img.encoder()
            .write_tag(Tag::Unknown(TAG_GDAL_NODATA), nd.to_string().as_str())
            .map_err(terr)?;
    }
    let data: Vec<f32> = raster.values.iter().map(|&v| v as f32).collect();
    img.write_data(&data).map_err(terr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn raster(values: Array2<f64>, nodata: Option<f64>) -> MeanWindRaster {
        MeanWindRaster::new(LatLon::new(1.0, 0.0), 0.25, 100.0, values, nodata).unwrap()
    }

    #[test]
    fn direct_and_constant_reads() {
        let r = raster(array![[1.0, 2.0], [7.2, 4.0]], None);
        let c = r.pixel_center(1, 0);
        assert_eq!(sample_raster(&r, c).unwrap(), 7.2);

        let k = raster(Array2::from_elem((4, 4), 6.0), None);
        for (lat, lon) in [(0.99, 0.01), (0.5, 0.5), (0.0, 1.0), (0.26, 0.74)] {
            assert_eq!(sample_raster(&k, LatLon::new(lat, lon)).unwrap(), 6.0);
        }
        assert!(matches!(
            sample_raster(&k, LatLon::new(1.2, 0.5)),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn nodata_center_takes_first_row_major_neighbor() {
        let nd = -9999.0;
        let r = raster(array![[5.0, 6.5, 5.5], [7.0, nd, 8.0], [9.0, 6.0, 4.0]], Some(nd));
        // four edge neighbours tie at distance 1; (0, 1) comes first in row-major order
        assert_eq!(sample_raster(&r, r.pixel_center(1, 1)).unwrap(), 6.5);

        let r = raster(array![[5.0, nd, 5.5], [7.0, nd, 8.0], [9.0, 6.0, 4.0]], Some(nd));
        assert_eq!(sample_raster(&r, r.pixel_center(1, 1)).unwrap(), 7.0);
    }

    #[test]
    fn nodata_beyond_radius() {
        let nd = -1.0;
        let mut v = Array2::from_elem((13, 13), nd);
        v[[0, 0]] = 3.0;
        let r = raster(v, Some(nd));
        assert!(matches!(
            sample_raster(&r, r.pixel_center(6, 6)),
            Err(Error::NoData { .. })
        ));
        assert_eq!(sample_raster(&r, r.pixel_center(3, 4)).unwrap(), 3.0);
    }

    #[test]
    fn factor_examples() {
        assert_eq!(correction_factor(7.5, &[7.0, 8.0]).unwrap().factor, 1.0);
        assert_eq!(correction_factor(6.0, &[8.0, 8.0]).unwrap().factor, 0.75);
        let cf = correction_factor(9.3, &[8.0, 9.0, 10.0]).unwrap();
        assert_relative_eq!(cf.factor, 9.3 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(cf.factor, 1.033333, epsilon = 1e-6);
        assert!(matches!(
            correction_factor(6.0, &[0.0, 0.0]),
            Err(Error::DegenerateSeries(_))
        ));
        assert!(matches!(
            correction_factor::<f64>(6.0, &[]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let s = [2.0, 4.0];
        let id = CorrectionFactor {
            factor: 1.0,
            gwa_mean: 3.0,
            reanalysis_mean: 3.0,
        };
        assert_eq!(apply_correction(&s, &id), s.to_vec());
        let half = CorrectionFactor {
            factor: 0.5,
            gwa_mean: 1.5,
            reanalysis_mean: 3.0,
        };
        assert_eq!(apply_correction(&s, &half), vec![1.0, 2.0]);

        let series = [5.5, 7.25, 9.0, 3.1];
        let cf = correction_factor(8.0, &series).unwrap();
        let out = apply_correction(&series, &cf);
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert_relative_eq!(mean, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn height_must_match() {
        assert!(check_height(100.0, 100.0).is_ok());
        assert!(matches!(check_height(50.0, 100.0), Err(Error::HeightMismatch { .. })));
        assert!(MeanWindRaster::new(LatLon::new(0.0, 0.0), 0.1, 80.0, Array2::zeros((1, 1)), None).is_err());
    }

    #[test]
    fn ascii_and_geotiff_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let nd = -9999.0;
        let r = MeanWindRaster::new(
            LatLon::new(-5.0, -37.0),
            0.0025,
            100.0,
            array![[6.5, 7.25, nd], [8.0, 5.5, 6.0]],
            Some(nd),
        )
        .unwrap();

        let asc = dir.path().join("gwa.asc");
        write_ascii_grid(&r, &asc).unwrap();
        let a = load_raster(&asc, 100.0).unwrap();
        assert_eq!(a.n_rows(), 2);
        assert_eq!(a.get(0, 1), Some(7.25));
        assert_eq!(a.get(0, 2), None);
        assert_relative_eq!(a.origin.lat, -5.0, epsilon = 1e-12);

        let tif = dir.path().join("gwa.tif");
        write_geotiff(&r, &tif).unwrap();
        let g = load_raster(&tif, 100.0).unwrap();
        assert_eq!((g.n_rows(), g.n_cols()), (2, 3));
        assert_eq!(g.get(1, 0), Some(8.0));
        assert_eq!(g.get(0, 2), None);
        assert_relative_eq!(g.origin.lon, -37.0, epsilon = 1e-12);
        let p = r.pixel_center(1, 2);
        assert_eq!(sample_raster(&g, p).unwrap(), 6.0);
    }
}
