//! Single-channel feature maps, integer shifts and their overlap regions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `H x W` single-channel grid of finite values, row-major, indexed `(x, y)`.
#[derive(Clone, PartialEq)]
pub struct FeatureMap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadDimensions(format!(
                "feature map must be at least 1x1, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} map needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "feature map must be at least 1x1");
        Self {
            width,
            height,
            values: vec![T::zero(); width * height],
        }
    }

    /// Builds a map from `f(x, y)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values).expect("from_fn produced an invalid map")
    }

    /// Row-major nested rows, `rows[y][x]`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(width, height, rows.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn map<U: Scalar>(&self, mut f: impl FnMut(T) -> U) -> FeatureMap<U> {
        FeatureMap::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
            .expect("mapped feature map must stay finite")
    }

    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        self.map(|v| U::of(v.as_f64()))
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

impl<T: fmt::Debug> fmt::Debug for FeatureMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FeatureMap {}x{} [", self.width, self.height)?;
        for row in self.values.chunks(self.width) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// A candidate translation: `w` pixels horizontally, `h` vertically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ShiftOffset {
    pub w: i32,
    pub h: i32,
}

impl ShiftOffset {
    pub const ZERO: ShiftOffset = ShiftOffset { w: 0, h: 0 };

    pub const fn new(w: i32, h: i32) -> Self {
        Self { w, h }
    }

    pub fn l1(self) -> u32 {
        self.w.unsigned_abs() + self.h.unsigned_abs()
    }
}

impl std::ops::Neg for ShiftOffset {
    type Output = ShiftOffset;

    fn neg(self) -> ShiftOffset {
        ShiftOffset::new(-self.w, -self.h)
    }
}

impl fmt::Display for ShiftOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.w, self.h)
    }
}

/// Search bounds `|w| <= max_w`, `|h| <= max_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ShiftWindow {
    pub max_w: u32,
    pub max_h: u32,
}

impl ShiftWindow {
    pub const NONE: ShiftWindow = ShiftWindow { max_w: 0, max_h: 0 };

    pub const fn new(max_w: u32, max_h: u32) -> Self {
        Self { max_w, max_h }
    }

    pub fn candidate_count(self) -> usize {
        (2 * self.max_w as usize + 1) * (2 * self.max_h as usize + 1)
    }

    /// Every offset in the window, row by row (`h` outer, `w` inner).
    pub fn offsets(self) -> impl Iterator<Item = ShiftOffset> {
        let (mw, mh) = (self.max_w as i32, self.max_h as i32);
        (-mh..=mh).flat_map(move |h| (-mw..=mw).map(move |w| ShiftOffset::new(w, h)))
    }

    pub fn contains(self, off: ShiftOffset) -> bool {
        off.w.unsigned_abs() <= self.max_w && off.h.unsigned_abs() <= self.max_h
    }

    /// The window must leave a non-empty overlap at every offset.
    pub fn validate_for(self, width: usize, height: usize) -> Result<()> {
        if self.max_w as usize >= width || self.max_h as usize >= height {
            return Err(Error::EmptyRegion {
                w: self.max_w as i32,
                h: self.max_h as i32,
                width,
                height,
            });
        }
        Ok(())
    }
}

/// Half-open rectangle `[x_min, x_max) x [y_min, y_max)` of coordinates whose
/// values survive a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommonRegion {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
}

impl CommonRegion {
    pub fn cardinality(&self) -> usize {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y_min..self.y_max).flat_map(move |y| (self.x_min..self.x_max).map(move |x| (x, y)))
    }
}

/// Coordinates `(x, y)` with `max(w,0) <= x < min(W+w, W)` and likewise for `y`.
pub fn common_region(width: usize, height: usize, off: ShiftOffset) -> Result<CommonRegion> {
    let (wi, hi) = (width as i64, height as i64);
    let (w, h) = (off.w as i64, off.h as i64);
    if w.abs() >= wi || h.abs() >= hi {
        return Err(Error::EmptyRegion {
            w: off.w,
            h: off.h,
            width,
            height,
        });
    }
    Ok(CommonRegion {
        x_min: w.max(0) as usize,
        x_max: (wi + w).min(wi) as usize,
        y_min: h.max(0) as usize,
        y_max: (hi + h).min(hi) as usize,
    })
}

/// Moves `F[x, y]` to `(x - w, y - h)` for every `(x, y)` in the common
/// region; everything vacated is zero.
pub fn shift_map<T: Scalar>(map: &FeatureMap<T>, off: ShiftOffset) -> Result<FeatureMap<T>> {
    let (width, height) = map.dims();
    let region = common_region(width, height, off)?;
    let mut out = vec![T::zero(); width * height];
    let run = region.x_max - region.x_min;
    for y in region.y_min..region.y_max {
        let dst_y = (y as i64 - off.h as i64) as usize;
        let dst_x = (region.x_min as i64 - off.w as i64) as usize;
        let src = &map.values[y * width + region.x_min..][..run];
        out[dst_y * width + dst_x..][..run].copy_from_slice(src);
    }
    Ok(FeatureMap {
        width,
        height,
        values: out,
    })
}
