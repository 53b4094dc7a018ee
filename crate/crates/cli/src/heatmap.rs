//! Density heatmaps as binary PGM (P5), with an optional PPM (P6) variant
//! marking the chosen graph rectangles in the red channel.

use fatgraph_core::construction::{classify_row, col_amask, row_runs, WeightWord};
use fatgraph_core::graph::f_enclosure;
use fatgraph_core::grid::side_count;
use fatgraph_core::{Params, Rat};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub depth: u32,
    pub pixels: u64,
    /// Mark `S_k` for this `k`.
    pub overlay: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: u64,
    pub height: u64,
    pub gray: Vec<u8>,
    /// Red-channel overlay mask, row-major like `gray`.
    pub marked: Option<Vec<bool>>,
}

impl Image {
    pub fn encode(&self) -> Vec<u8> {
        match &self.marked {
            None => {
                let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
                out.extend_from_slice(&self.gray);
                out
            }
            Some(mask) => {
                let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
                for (g, &m) in self.gray.iter().zip(mask) {
                    out.extend_from_slice(&[if m { 255 } else { *g }, *g, *g]);
                }
                out
            }
        }
    }

    pub fn distinct_levels(&self) -> Vec<u8> {
        let mut v = self.gray.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Largest number of band steps any level-`depth` row lies in.
fn max_band_count(depth: u32, params: &Params) -> Result<u32, CliError> {
    Ok(row_runs(depth, params)?
        .iter()
        .map(|r| (r.class.upper | r.class.lower).count_ones())
        .max()
        .unwrap_or(0))
}

/// `round(255 · (log d − log d_min) / (log d_max − log d_min))` for
/// `d = p^a q^b`, `d_min = p^c`, `d_max = q^c`; mid-gray when `c = 0`.
pub fn tone(a: u32, b: u32, c: u32, params: &Params) -> u8 {
    if c == 0 {
        return 128;
    }
    let lp = params.p().to_f64().ln();
    let lq = params.q().to_f64().ln();
    let num = a as f64 * lp + b as f64 * lq - c as f64 * lp;
    let den = c as f64 * (lq - lp);
    (255.0 * num / den).round().clamp(0.0, 255.0) as u8
}

pub fn render(spec: &HeatmapSpec, params: &Params) -> Result<Image, CliError> {
    let depth = spec.depth;
    if depth > 15 {
        return Err(CliError::ResolutionMismatch(format!(
            "depth {depth} is too deep to render"
        )));
    }
    let side = side_count(depth);
    let n = spec.pixels;
    if n == 0 || n > side || side % n != 0 {
        return Err(CliError::ResolutionMismatch(format!(
            "{n} pixels must divide 4^{depth} = {side}"
        )));
    }
    let step = side / n;
    let index = |p: u64| p * step + step / 2;
    let c = max_band_count(depth, params)?;

    let amasks: Vec<u64> = (0..n).map(|px| col_amask(depth, index(px))).collect();
    let mut gray = Vec::with_capacity((n * n) as usize);
    for py in 0..n {
        let row = index(n - 1 - py);
        let class = classify_row(depth, row, params)?;
        class.check_defined(params)?;
        for &am in &amasks {
            let w = WeightWord::combine(depth, class.masks(), am);
            gray.push(tone(w.p_count(), w.q_count(), c, params));
        }
    }

    let marked = match spec.overlay {
        None => None,
        Some(k) => {
            let size = Rat::from(n);
            let spans: Vec<(Rat, Rat)> = (0..n)
                .map(|px| {
                    let x = Rat::new(2 * px as i64 + 1, 2) / &size;
                    f_enclosure(&x, k, params).map(|e| (e.lo, e.hi))
                })
                .collect::<Result<_, _>>()?;
            let mut mask = Vec::with_capacity((n * n) as usize);
            for py in 0..n {
                let y = Rat::new(2 * (n - 1 - py) as i64 + 1, 2) / &size;
                mask.extend(spans.iter().map(|(lo, hi)| *lo <= y && y <= *hi));
            }
            Some(mask)
        }
    };
    Ok(Image {
        width: n,
        height: n,
        gray,
        marked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_depth_is_flat() {
        let params = Params::reference();
        let img = render(&HeatmapSpec { depth: 3, pixels: 64, overlay: None }, &params).unwrap();
        assert_eq!(img.distinct_levels(), vec![128]);
    }

    #[test]
    fn mismatched_pixels_rejected() {
        let params = Params::reference();
        let spec = HeatmapSpec { depth: 2, pixels: 3, overlay: None };
        assert!(matches!(render(&spec, &params), Err(CliError::ResolutionMismatch(_))));
    }

    #[test]
    fn header_and_size() {
        let params = Params::reference();
        let img = render(&HeatmapSpec { depth: 4, pixels: 16, overlay: Some(1) }, &params).unwrap();
        let bytes = img.encode();
        assert!(bytes.starts_with(b"P6\n16 16\n255\n"));
        assert_eq!(bytes.len(), "P6\n16 16\n255\n".len() + 16 * 16 * 3);
    }
}
