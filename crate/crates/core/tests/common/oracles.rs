//! Naive scalar reference implementations. These stay deliberately simple and
//! share no code with the library paths they check.

#![allow(dead_code)]

/// Plain RGB raster for the oracles: `data[(y * w + x) * 3 + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn get(&self, x: i64, y: i64, c: usize) -> u8 {
        let xx = x.clamp(0, self.w as i64 - 1) as usize;
        let yy = y.clamp(0, self.h as i64 - 1) as usize;
        self.data[(yy * self.w + xx) * 3 + c]
    }
}

pub fn contrast(img: &Raster, factor: f64) -> Raster {
    let mut sum = 0.0;
    for y in 0..img.h {
        for x in 0..img.w {
            let i = (y * img.w + x) * 3;
            sum += 0.299 * img.data[i] as f64
                + 0.587 * img.data[i + 1] as f64
                + 0.114 * img.data[i + 2] as f64;
        }
    }
    let mean = sum / (img.w * img.h) as f64;
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        let r = (mean + factor * (*v as f64 - mean)).round();
        *v = if r < 0.0 {
            0
        } else if r > 255.0 {
            255
        } else {
            r as u8
        };
    }
    out
}

pub fn median3(img: &Raster) -> Raster {
    let mut out = img.clone();
    for y in 0..img.h as i64 {
        for x in 0..img.w as i64 {
            for c in 0..3 {
                let mut win = Vec::with_capacity(9);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        win.push(img.get(x + dx, y + dy, c));
                    }
                }
                win.sort();
                out.data[((y as usize) * img.w + x as usize) * 3 + c] = win[4];
            }
        }
    }
    out
}

pub fn convolve3(img: &Raster, kernel: [[f64; 3]; 3]) -> Raster {
    let mut out = img.clone();
    for y in 0..img.h as i64 {
        for x in 0..img.w as i64 {
            for c in 0..3 {
                let mut acc = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        acc += kernel[ky][kx]
                            * img.get(x + kx as i64 - 1, y + ky as i64 - 1, c) as f64;
                    }
                }
                let r = acc.round().max(0.0).min(255.0);
                out.data[((y as usize) * img.w + x as usize) * 3 + c] = r as u8;
            }
        }
    }
    out
}

pub fn sharpen(img: &Raster) -> Raster {
    convolve3(img, [[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]])
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize(img: &Raster, w: usize, h: usize) -> Raster {
    let mut out = Raster {
        w,
        h,
        data: vec![0; w * h * 3],
    };
    for y in 0..h {
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * img.w as f64 / w as f64 - 0.5)
                .max(0.0)
                .min((img.w - 1) as f64);
            let sy = ((y as f64 + 0.5) * img.h as f64 / h as f64 - 0.5)
                .max(0.0)
                .min((img.h - 1) as f64);
            let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let p = |xx: i64, yy: i64| img.get(xx, yy, c) as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x0 + 1, y0) * fx;
                let bot = p(x0, y0 + 1) * (1.0 - fx) + p(x0 + 1, y0 + 1) * fx;
                let v = (top * (1.0 - fy) + bot * fy).round().max(0.0).min(255.0);
                out.data[(y * w + x) * 3 + c] = v as u8;
            }
        }
    }
    out
}

/// Full chain: contrast -> median -> sharpen -> resize.
pub fn preprocess(img: &Raster, factor: f64, sharpen_on: bool, size: usize) -> Raster {
    let a = contrast(img, factor);
    let b = median3(&a);
    let c = if sharpen_on { sharpen(&b) } else { b };
    if c.w == size && c.h == size {
        c
    } else {
        resize(&c, size, size)
    }
}

/// Fixed 8x8 test raster used for the golden preprocessing fixture.
pub fn fixture_8x8() -> Raster {
    let mut data = Vec::with_capacity(8 * 8 * 3);
    for y in 0..8u32 {
        for x in 0..8u32 {
            data.push(((x * 37 + y * 11) % 256) as u8);
            data.push(((x * y * 13 + 40) % 256) as u8);
            data.push(((200 + x * 5) as i32 - (y * 23) as i32).rem_euclid(256) as u8);
        }
    }
    Raster { w: 8, h: 8, data }
}

/// Tiny deterministic generator (SplitMix64) so the oracle fixtures do not
/// depend on the library's RNG choice.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn raster(&mut self, max_side: usize) -> Raster {
        let w = 3 + self.below(max_side as u64 - 2) as usize;
        let h = 3 + self.below(max_side as u64 - 2) as usize;
        let data = (0..w * h * 3).map(|_| self.below(256) as u8).collect();
        Raster { w, h, data }
    }
}
