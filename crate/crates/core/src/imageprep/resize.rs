use super::RawImage;
use crate::par;

/// Source coordinate and blend weight along one axis (half-pixel centres,
/// clamped to the edge).
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
                .clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize. Equal dimensions return an exact copy.
pub fn resize_bilinear(img: &RawImage, width: usize, height: usize) -> RawImage {
    if img.width() == width && img.height() == height {
        return img.clone();
    }
    let xs = axis_taps(img.width(), width);
    let ys = axis_taps(img.height(), height);
    let sw = img.width();
    let src = img.data();
    let mut out = vec![0u8; width * height * 3];
    par::for_each_chunk_mut(&mut out, width * 3, |y, row| {
        let (y0, y1, fy) = ys[y];
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let at = |yy: usize, xx: usize| f64::from(src[(yy * sw + xx) * 3 + c]);
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                row[x * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    });
    RawImage::new(width, height, out).expect("sized above")
}
