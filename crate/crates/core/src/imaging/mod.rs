//! Images, style filters and face geometry.

mod filters;
mod geometry;
mod image;

pub use filters::{
    blur_plane, gaussian_blur, gaussian_kernel, gray_style, light_style, luma, sketch_style, StyleFilter, LIGHT_GAMMA,
    SKETCH_EPSILON, SKETCH_SIGMA_FRACTION,
};
pub use geometry::{
    crop_face, random_crop_augment, resize_image, sample_shift, shift_points, translate, warp_affine, Affine, BBox, Point,
};
pub use image::RgbImage;
