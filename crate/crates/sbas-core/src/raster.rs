use crate::error::{Error, Result};

/// Row-major single-band grid with square-ish metric pixels.
///
/// Values are held as f64 in memory but the on-disk SGRID format stores f32,
/// so the nodata sentinel is quantized to f32 on construction to guarantee a
/// bit-exact round trip (NaN is the default sentinel and survives as-is).
#[derive(Debug, Clone)]
pub struct Raster {
    width: usize,
    height: usize,
    dx_m: f64,
    dy_m: f64,
    nodata: f64,
    values: Vec<f64>,
}

/// NaN-aware equality: NaN pixels (and a NaN sentinel) compare equal to each
/// other, so two identically produced rasters are ==.
impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        let same_val = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.same_shape(other)
            && same_val(self.nodata, other.nodata)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| same_val(a, b))
    }
}

impl Raster {
    /// Zero-filled raster. Errors on empty dimensions or non-positive pixel spacing.
    pub fn filled(
        width: usize,
        height: usize,
        dx_m: f64,
        dy_m: f64,
        nodata: f64,
        fill: f64,
    ) -> Result<Raster> {
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(dx_m > 0.0) || !(dy_m > 0.0) {
            return Err(Error::Invalid(format!(
                "pixel spacing must be positive, got dx={dx_m} dy={dy_m}"
            )));
        }
        Ok(Raster {
            width,
            height,
            dx_m,
            dy_m,
            nodata: nodata as f32 as f64,
            values: vec![fill; width * height],
        })
    }

    pub fn zeros(width: usize, height: usize, dx_m: f64, dy_m: f64) -> Result<Raster> {
        Raster::filled(width, height, dx_m, dy_m, f64::NAN, 0.0)
    }

    /// Wrap an existing value buffer; `values.len()` must equal `width * height`.
    pub fn from_values(
        width: usize,
        height: usize,
        dx_m: f64,
        dy_m: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Raster> {
        if values.len() != width * height {
            return Err(Error::Invalid(format!(
                "raster buffer holds {} values but {width}x{height} needs {}",
                values.len(),
                width * height
            )));
        }
        let mut r = Raster::filled(width, height, dx_m, dy_m, nodata, 0.0)?;
        r.values = values;
        Ok(r)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dx_m(&self) -> f64 {
        self.dx_m
    }

    pub fn dy_m(&self) -> f64 {
        self.dy_m
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = self.idx(x, y);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// True when `v` is the nodata sentinel (bitwise, with any NaN matching a
    /// NaN sentinel).
    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        if self.nodata.is_nan() {
            v.is_nan()
        } else {
            v == self.nodata
        }
    }

    /// Same dimensions and pixel spacing.
    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.dx_m == other.dx_m
            && self.dy_m == other.dy_m
    }

    /// Min/max over valid pixels; None when every pixel is nodata.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for &v in &self.values {
            if self.is_nodata(v) || !v.is_finite() {
                continue;
            }
            out = Some(match out {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        out
    }

    /// Mean over valid pixels; None when every pixel is nodata.
    pub fn mean(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &v in &self.values {
            if !self.is_nodata(v) && v.is_finite() {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Geometric distance in pixels between two pixel centers.
    pub fn pixel_distance(a: (usize, usize), b: (usize, usize)) -> f64 {
        let dx = a.0 as f64 - b.0 as f64;
        let dy = a.1 as f64 - b.1 as f64;
        (dx * dx + dy * dy).sqrt()
    }
}
