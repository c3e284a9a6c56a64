//! Pinhole projection of world points onto the patch-token lattice.

use alloc::vec::Vec;

use crate::numerics::Matrix;
use crate::{Error, Result};

/// Pinhole camera `K [R | t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsic: Matrix,
    rotation: Matrix,
    translation: [f64; 3],
    image_width: usize,
    image_height: usize,
}

impl CameraModel {
    pub fn new(
        intrinsic: Matrix,
        rotation: Matrix,
        translation: [f64; 3],
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        if intrinsic.shape() != (3, 3) {
            return Err(Error::DimensionMismatch {
                op: "camera intrinsic",
                expected: (3, 3),
                found: intrinsic.shape(),
            });
        }
        if rotation.shape() != (3, 3) {
            return Err(Error::DimensionMismatch {
                op: "camera rotation",
                expected: (3, 3),
                found: rotation.shape(),
            });
        }
        if intrinsic.get(2, 2) != 1.0 {
            return Err(Error::InvalidConfig("intrinsic[2][2] must be 1"));
        }
        let rrt = rotation.matmul(&rotation.transpose())?;
        if rrt.max_abs_diff(&Matrix::identity(3))? > 1e-9 {
            return Err(Error::InvalidConfig("rotation must be orthonormal"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidConfig("image dimensions must be positive"));
        }
        Ok(CameraModel {
            intrinsic,
            rotation,
            translation,
            image_width,
            image_height,
        })
    }

    /// Camera with focal lengths `(fx, fy)`, principal point `(cx, cy)` and
    /// pose `[R | t]`.
    pub fn from_pinhole(
        focal: (f64, f64),
        principal: (f64, f64),
        rotation: Matrix,
        translation: [f64; 3],
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        let k = Matrix::from_rows(&[
            [focal.0, 0.0, principal.0],
            [0.0, focal.1, principal.1],
            [0.0, 0.0, 1.0],
        ])?;
        CameraModel::new(k, rotation, translation, image_width, image_height)
    }

    pub fn intrinsic(&self) -> &Matrix {
        &self.intrinsic
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.image_width, self.image_height)
    }

    /// Pixel coordinates of a world point, or why it has none.
    pub fn project(&self, point: [f64; 3]) -> Result<(f64, f64)> {
        let r = &self.rotation;
        let mut cam = [0.0; 3];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = r.get(i, 0) * point[0] + r.get(i, 1) * point[1] + r.get(i, 2) * point[2] + self.translation[i];
        }
        let k = &self.intrinsic;
        let mut h = [0.0; 3];
        for (i, v) in h.iter_mut().enumerate() {
            *v = k.get(i, 0) * cam[0] + k.get(i, 1) * cam[1] + k.get(i, 2) * cam[2];
        }
        let depth = h[2];
        if depth.is_nan() || depth <= 0.0 {
            return Err(Error::BehindCamera { depth });
        }
        let (u, v) = (h[0] / depth, h[1] / depth);
        if !(u >= 0.0 && u < self.image_width as f64 && v >= 0.0 && v < self.image_height as f64) {
            return Err(Error::OutOfFrame { u, v });
        }
        Ok((u, v))
    }
}

/// Patch-token lattice laid over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenGrid {
    pub patch_w: usize,
    pub patch_h: usize,
    pub grid_w: usize,
    pub grid_h: usize,
}

impl TokenGrid {
    pub fn new(patch_w: usize, patch_h: usize, grid_w: usize, grid_h: usize) -> Result<Self> {
        if patch_w == 0 || patch_h == 0 || grid_w == 0 || grid_h == 0 {
            return Err(Error::InvalidConfig("patch and grid dimensions must be positive"));
        }
        Ok(TokenGrid {
            patch_w,
            patch_h,
            grid_w,
            grid_h,
        })
    }

    /// Number of visual tokens.
    #[inline]
    pub fn len(&self) -> usize {
        self.grid_w * self.grid_h
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.grid_w * self.patch_w, self.grid_h * self.patch_h)
    }

    /// Row-major flat index `t_v · grid_w + t_u`.
    #[inline]
    pub fn flat(&self, t: TokenCoord) -> usize {
        t.t_v * self.grid_w + t.t_u
    }

    #[inline]
    pub fn coord(&self, index: usize) -> TokenCoord {
        TokenCoord {
            t_u: index % self.grid_w,
            t_v: index / self.grid_w,
        }
    }

    pub fn contains(&self, t: TokenCoord) -> bool {
        t.t_u < self.grid_w && t.t_v < self.grid_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenCoord {
    pub t_u: usize,
    pub t_v: usize,
}

impl TokenCoord {
    pub fn new(t_u: usize, t_v: usize) -> Self {
        TokenCoord { t_u, t_v }
    }

    /// Chebyshev (ℓ∞) distance.
    pub fn chebyshev(&self, other: TokenCoord) -> usize {
        self.t_u.abs_diff(other.t_u).max(self.t_v.abs_diff(other.t_v))
    }
}

/// Projects a world point and returns the token that contains its pixel:
/// `t_u = ⌊u / P_w⌋`, `t_v = ⌊v / P_h⌋`.
pub fn project_world_to_token(cam: &CameraModel, point: [f64; 3], grid: &TokenGrid) -> Result<TokenCoord> {
    if grid.image_size() != cam.image_size() {
        return Err(Error::InvalidConfig("token grid does not tile the camera image"));
    }
    let (u, v) = cam.project(point)?;
    let t = TokenCoord {
        t_u: libm::floor(u / grid.patch_w as f64) as usize,
        t_v: libm::floor(v / grid.patch_h as f64) as usize,
    };
    debug_assert!(grid.contains(t));
    Ok(t)
}

/// All tokens within Chebyshev distance `radius` of `center`, clipped to the
/// grid, as ascending flat indices.
pub fn ring_tokens(center: TokenCoord, radius: usize, grid: &TokenGrid) -> Vec<usize> {
    if !grid.contains(center) {
        return Vec::new();
    }
    let u0 = center.t_u.saturating_sub(radius);
    let u1 = (center.t_u + radius).min(grid.grid_w - 1);
    let v0 = center.t_v.saturating_sub(radius);
    let v1 = (center.t_v + radius).min(grid.grid_h - 1);
    let mut out = Vec::with_capacity((u1 - u0 + 1) * (v1 - v0 + 1));
    for t_v in v0..=v1 {
        for t_u in u0..=u1 {
            out.push(grid.flat(TokenCoord { t_u, t_v }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid16() -> TokenGrid {
        TokenGrid::new(16, 16, 16, 16).unwrap()
    }

    #[test]
    fn identity_camera_origin() {
        let cam = CameraModel::new(Matrix::identity(3), Matrix::identity(3), [0.0; 3], 16, 16).unwrap();
        let grid = TokenGrid::new(16, 16, 1, 1).unwrap();
        assert_eq!(
            project_world_to_token(&cam, [0.0, 0.0, 1.0], &grid).unwrap(),
            TokenCoord::new(0, 0)
        );
    }

    #[test]
    fn centered_camera_hits_middle_token() {
        let cam =
            CameraModel::from_pinhole((100.0, 100.0), (112.0, 112.0), Matrix::identity(3), [0.0; 3], 224, 224).unwrap();
        let grid = TokenGrid::new(16, 16, 14, 14).unwrap();
        assert_eq!(cam.project([0.0, 0.0, 2.0]).unwrap(), (112.0, 112.0));
        assert_eq!(
            project_world_to_token(&cam, [0.0, 0.0, 2.0], &grid).unwrap(),
            TokenCoord::new(7, 7)
        );
    }

    #[test]
    fn projection_failures() {
        let cam =
            CameraModel::from_pinhole((100.0, 100.0), (112.0, 112.0), Matrix::identity(3), [0.0; 3], 224, 224).unwrap();
        let grid = TokenGrid::new(16, 16, 14, 14).unwrap();
        assert!(matches!(
            project_world_to_token(&cam, [0.0, 0.0, -1.0], &grid),
            Err(Error::BehindCamera { .. })
        ));
        assert!(matches!(
            project_world_to_token(&cam, [0.0, 0.0, 0.0], &grid),
            Err(Error::BehindCamera { .. })
        ));
        assert!(matches!(
            project_world_to_token(&cam, [5.0, 0.0, 1.0], &grid),
            Err(Error::OutOfFrame { .. })
        ));
        // u exactly at the right edge is outside the half-open image
        assert!(matches!(
            project_world_to_token(&cam, [1.12, 0.0, 1.0], &grid),
            Err(Error::OutOfFrame { .. })
        ));
        let mismatched = TokenGrid::new(16, 16, 16, 16).unwrap();
        assert!(project_world_to_token(&cam, [0.0, 0.0, 2.0], &mismatched).is_err());
    }

    #[test]
    fn camera_validation() {
        let mut k = Matrix::identity(3).into_vec();
        k[8] = 2.0;
        let k = Matrix::new(3, 3, k).unwrap();
        assert!(CameraModel::new(k, Matrix::identity(3), [0.0; 3], 8, 8).is_err());
        let skew = Matrix::from_rows(&[[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(CameraModel::new(Matrix::identity(3), skew, [0.0; 3], 8, 8).is_err());
    }

    #[test]
    fn ring_shapes() {
        let g = grid16();
        let c = TokenCoord::new(5, 9);
        assert_eq!(ring_tokens(c, 0, &g), alloc::vec![g.flat(c)]);
        let interior = ring_tokens(c, 1, &g);
        assert_eq!(interior.len(), 9);
        assert!(interior.iter().all(|&i| g.coord(i).chebyshev(c) <= 1));
        assert_eq!(ring_tokens(TokenCoord::new(0, 0), 1, &g), alloc::vec![0, 1, 16, 17]);
    }

    #[test]
    fn ring_matches_enumeration() {
        let g = grid16();
        for radius in 0..=2 {
            for center in 0..g.len() {
                let c = g.coord(center);
                let expected: Vec<usize> = (0..g.len()).filter(|&i| g.coord(i).chebyshev(c) <= radius).collect();
                assert_eq!(ring_tokens(c, radius, &g), expected);
            }
        }
    }
}
