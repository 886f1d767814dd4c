//! BT.601 full-range RGB <-> YUV.
//!
//! Chroma is offset by 0.5 so that all three planes live in `[0, 1]`. The
//! inverse is derived from the same luma coefficients rather than from rounded
//! matrix entries, which keeps the round trip at machine precision.

use super::{Image, Semantics};
use crate::error::{Error, Result};

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

#[inline]
pub fn rgb_to_yuv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = KR * r + KG * g + KB * b;
    let u = 0.5 + (b - y) / (2.0 * (1.0 - KB));
    let v = 0.5 + (r - y) / (2.0 * (1.0 - KR));
    (y, u, v)
}

#[inline]
pub fn yuv_to_rgb_pixel(y: f64, u: f64, v: f64) -> (f64, f64, f64) {
    let r = y + 2.0 * (1.0 - KR) * (v - 0.5);
    let b = y + 2.0 * (1.0 - KB) * (u - 0.5);
    let g = (y - KR * r - KB * b) / KG;
    (r, g, b)
}

/// Split an RGB image into luma and the two chroma planes.
pub fn rgb_to_yuv(img: &Image) -> Result<(Image, Image, Image)> {
    img.expect_semantics(Semantics::Rgb)?;
    let n = img.len_pixels();
    let (mut y, mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.data.chunks_exact(3) {
        let (a, b, c) = rgb_to_yuv_pixel(px[0], px[1], px[2]);
        // Guard the last-ulp excursions of exact white/black.
        y.push(a.clamp(0.0, 1.0));
        u.push(b.clamp(0.0, 1.0));
        v.push(c.clamp(0.0, 1.0));
    }
    let plane = |data| Image {
        width: img.width,
        height: img.height,
        channels: 1,
        semantics: Semantics::Yuv,
        data,
    };
    Ok((plane(y).with_semantics(Semantics::Luma), plane(u), plane(v)))
}

/// Recombine luma and chroma planes into RGB, clamped to `[0, 1]`.
pub fn yuv_to_rgb(y: &Image, u: &Image, v: &Image) -> Result<Image> {
    for (name, p) in [("Y", y), ("U", u), ("V", v)] {
        if p.channels != 1 {
            return Err(Error::Format(format!("{name} plane must be single-channel")));
        }
    }
    y.ensure_same_shape(u, "Y vs U")?;
    y.ensure_same_shape(v, "Y vs V")?;
    let mut data = Vec::with_capacity(3 * y.len_pixels());
    for i in 0..y.len_pixels() {
        let (r, g, b) = yuv_to_rgb_pixel(y.data[i], u.data[i], v.data[i]);
        data.push(r.clamp(0.0, 1.0));
        data.push(g.clamp(0.0, 1.0));
        data.push(b.clamp(0.0, 1.0));
    }
    Ok(Image {
        width: y.width,
        height: y.height,
        channels: 3,
        semantics: Semantics::Rgb,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb(w: usize, h: usize, px: [f64; 3]) -> Image {
        Image::new(w, h, 3, Semantics::Rgb, px.repeat(w * h)).unwrap()
    }

    #[test]
    fn black_maps_to_neutral_chroma() {
        let (y, u, v) = rgb_to_yuv(&rgb(3, 2, [0.0; 3])).unwrap();
        assert!(y.data.iter().all(|&x| x == 0.0));
        assert!(u.data.iter().all(|&x| x == 0.5));
        assert!(v.data.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn white_maps_to_unit_luma() {
        let (y, _, _) = rgb_to_yuv(&rgb(3, 2, [1.0; 3])).unwrap();
        assert!(y.data.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn neutral_chroma_is_gray() {
        let p = Image::filled(2, 2, Semantics::Luma, 0.5);
        let c = Image::filled(2, 2, Semantics::Yuv, 0.5);
        let out = yuv_to_rgb(&p, &c, &c).unwrap();
        assert!(out.data.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let one = Image::filled(2, 2, Semantics::Luma, 1.0);
        let out = yuv_to_rgb(&one, &c, &c).unwrap();
        assert!(out.data.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn wrong_tag_is_format_error() {
        let img = Image::filled(2, 2, Semantics::Luma, 0.5);
        assert!(matches!(rgb_to_yuv(&img), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Image::filled(2, 2, Semantics::Luma, 0.5);
        let b = Image::filled(3, 2, Semantics::Yuv, 0.5);
        assert!(matches!(yuv_to_rgb(&a, &b, &b), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn round_trip_within_1e6(px in proptest::collection::vec(0.0f64..=1.0, 3 * 16)) {
            let img = Image::new(4, 4, 3, Semantics::Rgb, px).unwrap();
            let (y, u, v) = rgb_to_yuv(&img).unwrap();
            let back = yuv_to_rgb(&y, &u, &v).unwrap();
            for (a, b) in img.data.iter().zip(&back.data) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
