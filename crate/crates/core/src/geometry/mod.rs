//! Spherical detection geometry.
//!
//! Angles are radians throughout; longitudes are normalized to `[-π, π)`.

mod iou;
mod merge;
mod projection;
mod sphere;

pub use iou::{sph_iou, spherical_nms, DEFAULT_NMS_THRESHOLD, IOU_GRID_LAT, IOU_GRID_LON};
pub use merge::{covering_arc, merged_fov, MergedFov};
pub use projection::{
    cubemap_faces, erp_to_sph, gnomonic_project, gnomonic_unproject, rect_bb_to_sphbb, sph_to_erp,
    ErpImage, ImageProjection, PiGrid, PixelRect, CUBE_FACE_FOV,
};
pub use sphere::{
    contains, lon_diff, normalize_lon, normalized_area, sph_area, DetectedObject, Frame,
    PlanarPoint, SphericalBox, SphericalCoord, Vec3,
};
