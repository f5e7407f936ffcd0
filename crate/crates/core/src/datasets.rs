//! Synthetic generators and CSV input/output.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::centroids::Centroids;
use crate::error::{Error, Result};
use crate::path::{csv_err, Partition};
use crate::scalar::Scalar;

/// Seeded generator used by every dataset routine.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints<T> {
    pub points: Centroids<T>,
    pub labels: Option<Partition>,
    pub seed: Option<u64>,
}

impl<T: Scalar> LabeledPoints<T> {
    pub fn new(points: Centroids<T>, labels: Option<Partition>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.n() != points.n() {
                return Err(Error::DimensionMismatch { expected: points.n(), found: l.n() });
            }
        }
        Ok(Self { points, labels, seed: None })
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    /// Column `d` of the points.
    pub fn column(&self, d: usize) -> Vec<T> {
        self.points.rows().map(|r| r[d]).collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * rng.sample::<f64, _>(StandardNormal)
    }
}

fn check_sd(sd: f64) -> Result<()> {
    if sd >= 0.0 && sd.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("noise sd must be finite and non-negative, got {sd}")))
    }
}

/// Two latent regression lines. Rows are `(a_i, b_i)`; the first `⌈n/2⌉` rows
/// follow line 0, the rest line 1.
pub fn gen_two_line_regression<T: Scalar>(
    n: usize,
    slopes: [f64; 2],
    intercepts: [f64; 2],
    x_range: (f64, f64),
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledPoints<T>> {
    check_sd(noise_sd)?;
    if !(x_range.0 < x_range.1) {
        return Err(Error::param("x_range must satisfy lo < hi"));
    }
    let mut r = rng(seed);
    let first = n.div_ceil(2);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = usize::from(i >= first);
        let a = r.random_range(x_range.0..x_range.1);
        let b = intercepts[c] + slopes[c] * a + gaussian(&mut r, noise_sd);
        data.extend([T::c(a), T::c(b)]);
        labels.push(c);
    }
    Ok(LabeledPoints {
        points: Centroids::from_flat(n, 2, data)?,
        labels: Some(Partition::from_raw(&labels)),
        seed: Some(seed),
    })
}

/// Two interleaved half circles: the upper arc around `(0, 0)` and the lower arc
/// around `(1, 0.5)`, both of radius 1, with isotropic Gaussian jitter.
pub fn gen_half_moons<T: Scalar>(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledPoints<T>> {
    if n < 2 {
        return Err(Error::param("half moons needs n >= 2"));
    }
    check_sd(noise_sd)?;
    let n_out = n / 2;
    let n_in = n - n_out;
    let angle = |i: usize, count: usize| if count > 1 { PI * i as f64 / (count - 1) as f64 } else { 0.0 };
    let mut r = rng(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_out {
        let t = angle(i, n_out);
        let (x, y) = (t.cos() + gaussian(&mut r, noise_sd), t.sin() + gaussian(&mut r, noise_sd));
        data.extend([T::c(x), T::c(y)]);
        labels.push(0);
    }
    for i in 0..n_in {
        let t = angle(i, n_in);
        let (x, y) = (1.0 - t.cos() + gaussian(&mut r, noise_sd), 0.5 - t.sin() + gaussian(&mut r, noise_sd));
        data.extend([T::c(x), T::c(y)]);
        labels.push(1);
    }
    Ok(LabeledPoints {
        points: Centroids::from_flat(n, 2, data)?,
        labels: Some(Partition::from_raw(&labels)),
        seed: Some(seed),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalInstance<T> {
    pub original: Vec<T>,
    pub noisy: Vec<T>,
    pub noise_sd: f64,
    /// Edge indices `i` of the path graph with `x°_i != x°_{i+1}`.
    pub jumps: Vec<usize>,
    pub seed: u64,
}

/// Piecewise-constant signal from `(length, value)` segments plus i.i.d. noise.
pub fn gen_piecewise_signal<T: Scalar>(
    n: usize,
    levels: &[(usize, f64)],
    noise_sd: f64,
    seed: u64,
) -> Result<SignalInstance<T>> {
    check_sd(noise_sd)?;
    let total: usize = levels.iter().map(|l| l.0).sum();
    if total != n {
        return Err(Error::param(format!("segment lengths sum to {total}, expected {n}")));
    }
    let original: Vec<f64> = levels.iter().flat_map(|&(len, v)| std::iter::repeat_n(v, len)).collect();
    let jumps = original.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(i, _)| i).collect();
    let mut r = rng(seed);
    let noisy = original.iter().map(|&v| T::c(v + gaussian(&mut r, noise_sd))).collect();
    Ok(SignalInstance {
        original: original.into_iter().map(T::c).collect(),
        noisy,
        noise_sd,
        jumps,
        seed,
    })
}

/// Six segments (five jumps) of near-equal length.
pub fn default_levels(n: usize) -> Vec<(usize, f64)> {
    const VALUES: [f64; 6] = [0.0, 1.0, -0.5, 1.5, 0.5, -1.0];
    let base = n / VALUES.len();
    let extra = n % VALUES.len();
    VALUES
        .iter()
        .enumerate()
        .map(|(i, &v)| (base + usize::from(i < extra), v))
        .collect()
}

impl<T: Scalar> SignalInstance<T> {
    /// Two columns `original,noisy` with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["original", "noisy"]).map_err(csv_err)?;
        for (o, y) in self.original.iter().zip(&self.noisy) {
            w.write_record([fmt(*o), fmt(*y)]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub(crate) fn fmt<T: Scalar>(v: T) -> String {
    format!("{:?}", v.as_f64())
}

/// Reads a rectangular numeric CSV. A header row is detected when its first cell does
/// not parse as a number. With `has_labels` the last column holds integer labels.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, has_labels: bool) -> Result<LabeledPoints<T>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, has_labels)
}

pub fn parse_csv<T: Scalar>(text: &str, has_labels: bool) -> Result<LabeledPoints<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if line == 0 && rec.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse(format!("row {} has {} cells, expected {}", line + 1, rec.len(), width.unwrap())));
        }
        let cells: Vec<&str> = rec.iter().collect();
        let (vals, lab) = if has_labels {
            let (last, rest) = cells.split_last().ok_or_else(|| Error::Parse("empty row".into()))?;
            let l: i64 = last
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: label {last:?} is not an integer", line + 1)))?;
            (rest.to_vec(), Some(l))
        } else {
            (cells, None)
        };
        let row = vals
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map(T::c)
                    .map_err(|_| Error::Parse(format!("row {}: {c:?} is not a number", line + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
        labels.extend(lab);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse("no numeric data".into()));
    }
    let labels = has_labels.then(|| Partition::from_raw(&labels));
    LabeledPoints::new(Centroids::from_rows(&rows)?, labels)
}

/// Writes points (and labels as a last column) without a header.
pub fn save_csv<T: Scalar, W: Write>(data: &LabeledPoints<T>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    for (i, row) in data.points.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        if let Some(l) = &data.labels {
            rec.push(l.labels()[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Draws `n` rows without replacement, keeping their original order.
pub fn resample<T: Scalar>(data: &LabeledPoints<T>, n: usize, seed: u64) -> Result<LabeledPoints<T>> {
    if n > data.n() {
        return Err(Error::param(format!("cannot draw {n} of {} rows", data.n())));
    }
    let mut idx = sample(&mut rng(seed), data.n(), n).into_vec();
    idx.sort_unstable();
    let rows: Vec<Vec<T>> = idx.iter().map(|&i| data.points.row(i).to_vec()).collect();
    let labels = data
        .labels
        .as_ref()
        .map(|l| Partition::from_raw(&idx.iter().map(|&i| l.labels()[i]).collect::<Vec<_>>()));
    let points = if rows.is_empty() { Centroids::zeros(0, data.points.p()) } else { Centroids::from_rows(&rows)? };
    Ok(LabeledPoints { points, labels, seed: Some(seed) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_without_noise_on_lines() {
        let d = gen_two_line_regression::<f64>(11, [2.0, -1.0], [0.5, 3.0], (-1.0, 1.0), 0.0, 3).unwrap();
        let labels = d.labels.as_ref().unwrap();
        assert_eq!(labels.clusters()[0].len(), 6);
        for (i, r) in d.points.rows().enumerate() {
            let c = labels.labels()[i];
            let expect = [0.5, 3.0][c] + [2.0, -1.0][c] * r[0];
            assert!((r[1] - expect).abs() < 1e-12);
            assert!((-1.0..1.0).contains(&r[0]));
        }
        let again = gen_two_line_regression::<f64>(11, [2.0, -1.0], [0.5, 3.0], (-1.0, 1.0), 0.0, 3).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn moons_radius() {
        let d = gen_half_moons::<f64>(100, 0.0, 1).unwrap();
        assert_eq!((d.points.n(), d.points.p()), (100, 2));
        for (i, r) in d.points.rows().enumerate() {
            let c = if d.labels.as_ref().unwrap().labels()[i] == 0 { [0.0, 0.0] } else { [1.0, 0.5] };
            let rad = ((r[0] - c[0]).powi(2) + (r[1] - c[1]).powi(2)).sqrt();
            assert!((rad - 1.0).abs() < 1e-12);
        }
        assert!(gen_half_moons::<f64>(1, 0.1, 1).is_err());
        assert_eq!(gen_half_moons::<f64>(50, 0.1, 9).unwrap(), gen_half_moons::<f64>(50, 0.1, 9).unwrap());
    }

    #[test]
    fn signal() {
        let s = gen_piecewise_signal::<f64>(10, &[(3, 1.0), (3, 1.0), (4, 2.0)], 0.0, 0).unwrap();
        assert_eq!(s.noisy, s.original);
        assert_eq!(s.jumps, vec![5]);
        assert!(gen_piecewise_signal::<f64>(9, &[(3, 1.0)], 0.0, 0).is_err());
        let lv = default_levels(1000);
        assert_eq!(lv.iter().map(|l| l.0).sum::<usize>(), 1000);
        let s = gen_piecewise_signal::<f64>(1000, &lv, 0.2, 5).unwrap();
        assert_eq!(s.jumps.len(), 5);
        let mean: f64 = s.noisy.iter().zip(&s.original).map(|(a, b)| a - b).sum::<f64>() / 1000.0;
        assert!(mean.abs() < 5.0 * 0.2 / 1000f64.sqrt());
    }

    #[test]
    fn csv_round_trip() {
        let pts = Centroids::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-300, 7.0]]).unwrap();
        let d = LabeledPoints::new(pts, Some(Partition::from_raw(&[4, 2]))).unwrap();
        let mut buf = Vec::new();
        save_csv(&d, &mut buf).unwrap();
        let back: LabeledPoints<f64> = parse_csv(std::str::from_utf8(&buf).unwrap(), true).unwrap();
        assert_eq!(back.points, d.points);
        assert_eq!(back.labels.unwrap().labels(), &[0, 1]);
        let with_header: LabeledPoints<f64> = parse_csv("x,y\n1,2\n3,4\n", false).unwrap();
        assert_eq!(with_header.points.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(parse_csv::<f64>("1,2\n3\n", false).is_err());
        assert!(parse_csv::<f64>("1,a\n", false).is_err());
    }

    #[test]
    fn resampling() {
        let d = gen_half_moons::<f64>(40, 0.05, 2).unwrap();
        let r = resample(&d, 10, 7).unwrap();
        assert_eq!(r.n(), 10);
        assert_eq!(r, resample(&d, 10, 7).unwrap());
        assert!(resample(&d, 41, 7).is_err());
    }
}
