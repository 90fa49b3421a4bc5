//! A tiny self-contained plot renderer: mean±spread against a log-scaled x
//! axis, drawn straight into an RGB tensor that [`pansr::data::write_png`]
//! can save. Covers exactly what `dimlab --plot` needs — axes, tick labels
//! in a 3x5 pixel font, whiskers, and a polyline — without pulling in a
//! charting dependency.

use pansr::Tensor;

pub struct ErrorPoint {
    pub x: f64,
    pub y: f64,
    pub spread: f64,
}

const W: usize = 640;
const H: usize = 480;
const LEFT: usize = 78;
const RIGHT: usize = 24;
const TOP: usize = 24;
const BOTTOM: usize = 56;

const BLACK: [f32; 3] = [-1.0, -1.0, -1.0];
const BLUE: [f32; 3] = [-0.8, -0.5, 0.6];
const GRAY: [f32; 3] = [-0.1, -0.1, -0.1];

struct Canvas {
    data: Vec<f32>,
}

impl Canvas {
    fn new() -> Self {
        Canvas { data: vec![1.0; 3 * W * H] }
    }

    fn set(&mut self, x: i64, y: i64, color: [f32; 3]) {
        if x < 0 || y < 0 || x as usize >= W || y as usize >= H {
            return;
        }
        let (x, y) = (x as usize, y as usize);
        for (c, v) in color.iter().enumerate() {
            self.data[c * W * H + y * W + x] = *v;
        }
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: [f32; 3]) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.set(
                (x0 + t * (x1 - x0)).round() as i64,
                (y0 + t * (y1 - y0)).round() as i64,
                color,
            );
        }
    }

    fn marker(&mut self, x: f64, y: f64, color: [f32; 3]) {
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                self.set(x.round() as i64 + dx, y.round() as i64 + dy, color);
            }
        }
    }

    /// 3x5 bitmap text at pixel scale 2; `x` is the left edge.
    fn text(&mut self, x: i64, y: i64, s: &str, color: [f32; 3]) {
        let scale = 2i64;
        let mut cx = x;
        for ch in s.chars() {
            let glyph = glyph(ch);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                self.set(
                                    cx + col as i64 * scale + sx,
                                    y + row as i64 * scale + sy,
                                    color,
                                );
                            }
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }

    fn text_width(s: &str) -> i64 {
        s.chars().count() as i64 * 8
    }
}

fn glyph(ch: char) -> [u8; 5] {
    match ch {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        'e' => [0b111, 0b100, 0b110, 0b100, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        _ => [0b000; 5],
    }
}

/// Compact tick label: powers of ten from 1000 up use `1e4` notation.
fn x_label(v: f64) -> String {
    let n = v.round() as u64;
    if n >= 1000 {
        let log = (n as f64).log10();
        if (log - log.round()).abs() < 1e-9 {
            return format!("1e{}", log.round() as u64);
        }
    }
    format!("{n}")
}

/// Renders mean±spread points on a log10 x axis into a `[3,H,W]` tensor on
/// `[-1,1]`, ready for PNG export.
pub fn line_plot(points: &[ErrorPoint]) -> Tensor<f32> {
    let mut c = Canvas::new();
    let (x0, x1) = (LEFT as f64, (W - RIGHT) as f64);
    let (y0, y1) = ((H - BOTTOM) as f64, TOP as f64);

    let lx_min = points.iter().map(|p| p.x.log10()).fold(f64::INFINITY, f64::min);
    let lx_max = points.iter().map(|p| p.x.log10()).fold(f64::NEG_INFINITY, f64::max);
    let span = (lx_max - lx_min).max(1e-9);
    let y_max = points
        .iter()
        .map(|p| p.y + p.spread)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-12)
        * 1.05;

    let px = |x: f64| x0 + (x.log10() - lx_min) / span * (x1 - x0);
    let py = |y: f64| y0 + (y / y_max) * (y1 - y0);

    // Axes.
    c.line(x0, y0, x1, y0, BLACK);
    c.line(x0, y0, x0, y1, BLACK);

    // Y ticks at 0, half, and full scale.
    for frac in [0.0, 0.5, 1.0] {
        let v = frac * y_max;
        let y = py(v);
        c.line(x0 - 4.0, y, x0, y, BLACK);
        let label = format!("{v:.2}");
        c.text(x0 as i64 - 8 - Canvas::text_width(&label), y as i64 - 5, &label, BLACK);
    }

    // X ticks at every data point.
    for p in points {
        let x = px(p.x);
        c.line(x, y0, x, y0 + 4.0, BLACK);
        let label = x_label(p.x);
        c.text(x as i64 - Canvas::text_width(&label) / 2, y0 as i64 + 8, &label, BLACK);
    }

    // Whiskers, connecting line, markers.
    for p in points {
        let x = px(p.x);
        let (lo, hi) = (py((p.y - p.spread).max(0.0)), py(p.y + p.spread));
        c.line(x, lo, x, hi, GRAY);
        c.line(x - 3.0, lo, x + 3.0, lo, GRAY);
        c.line(x - 3.0, hi, x + 3.0, hi, GRAY);
    }
    for pair in points.windows(2) {
        c.line(px(pair[0].x), py(pair[0].y), px(pair[1].x), py(pair[1].y), BLUE);
    }
    for p in points {
        c.marker(px(p.x), py(p.y), BLUE);
    }

    Tensor::from_vec(&[3, H, W], c.data).expect("canvas buffer matches its shape")
}
