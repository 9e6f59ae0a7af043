//! Static PNG line plots.

use std::path::Path;

use image::{Rgb, RgbImage};

const W: u32 = 900;
const H: u32 = 540;
const MARGIN: u32 = 40;
const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189], [255, 127, 14], [23, 190, 207]];

#[derive(Clone, Copy)]
pub enum Style {
	Line,
	Dots,
}

pub struct Series {
	pub points: Vec<(f64, f64)>,
	pub color: usize,
	pub style: Style,
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
	let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
	let mut b: Option<(f64, f64, f64, f64)> = None;
	for &(x, y) in pts {
		b = Some(match b {
			None => (x, x, y, y),
			Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
		});
	}
	b.map(|(x0, x1, y0, y1)| {
		let (y0, y1) = if y1 - y0 > 0.0 { (y0, y1) } else { (y0 - 1.0, y1 + 1.0) };
		let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
		(x0, x1, y0, y1)
	})
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
	if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
		img.put_pixel(x as u32, y as u32, c);
	}
}

fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
	let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
	let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
	let mut err = dx + dy;
	loop {
		put(img, x0, y0, c);
		if x0 == x1 && y0 == y1 {
			break;
		}
		let e2 = 2 * err;
		if e2 >= dy {
			err += dy;
			x0 += sx;
		}
		if e2 <= dx {
			err += dx;
			y0 += sy;
		}
	}
}

pub fn render(series: &[Series]) -> RgbImage {
	let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
	let axis = Rgb([0, 0, 0]);
	let (l, r, t, b) = (MARGIN as i64, (W - MARGIN) as i64, MARGIN as i64, (H - MARGIN) as i64);
	line(&mut img, (l, b), (r, b), axis);
	line(&mut img, (l, t), (l, b), axis);
	let Some((x0, x1, y0, y1)) = bounds(series) else {
		return img;
	};
	let map = |x: f64, y: f64| {
		let px = l as f64 + (x - x0) / (x1 - x0) * (r - l) as f64;
		let py = b as f64 - (y - y0) / (y1 - y0) * (b - t) as f64;
		(px.round() as i64, py.round() as i64)
	};
	for s in series {
		let c = Rgb(PALETTE[s.color % PALETTE.len()]);
		let mut prev: Option<(i64, i64)> = None;
		for &(x, y) in &s.points {
			if !(x.is_finite() && y.is_finite()) {
				prev = None;
				continue;
			}
			let p = map(x, y);
			match s.style {
				Style::Line => {
					if let Some(q) = prev {
						line(&mut img, q, p, c);
					}
					prev = Some(p);
				}
				Style::Dots => {
					for dx in -1..=1 {
						for dy in -1..=1 {
							put(&mut img, p.0 + dx, p.1 + dy, c);
						}
					}
				}
			}
		}
	}
	img
}

pub fn save(series: &[Series], path: &Path) -> image::ImageResult<()> {
	render(series).save(path)
}

#[cfg(test)]
mod tests {
	use super::*;

	#[test]
	fn draws_inside_frame() {
		let s = Series { points: (0..50).map(|i| (i as f64, (i as f64 * 0.2).sin())).collect(), color: 0, style: Style::Line };
		let img = render(&[s]);
		let blue = img.pixels().filter(|p| p.0 == PALETTE[0]).count();
		assert!(blue > 100);
		assert_eq!(img.dimensions(), (W, H));
	}

	#[test]
	fn empty_and_flat_series() {
		render(&[]);
		let s = Series { points: vec![(0.0, 1.0), (1.0, 1.0), (f64::NAN, 2.0)], color: 7, style: Style::Dots };
		render(&[s]);
	}
}
