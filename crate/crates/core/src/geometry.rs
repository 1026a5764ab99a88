//! Penultimate-layer geometry: project activations onto the plane through
//! three class templates and measure how far apart the near-pair clusters sit.

use std::fmt::Write as _;
use std::io::Write;

use crate::datagen::LabeledDataset;
use crate::error::{LabError, Result};
use crate::gradcore::Model;
use crate::linalg::{dist, dot, mean_vector, norm, Matrix};

/// Minimum angle (radians) between the two plane-spanning differences.
pub const MIN_PLANE_ANGLE: f64 = 1e-6;

/// Row `c` of the final-layer weight matrix.
pub fn template_of(model: &Model, c: usize) -> Result<Vec<f64>> {
    let last = model.layers().last().expect("validated spec has layers");
    if c >= last.weights.rows() {
        return Err(LabError::Spec(format!(
            "class {c} out of range for {} classes",
            last.weights.rows()
        )));
    }
    Ok(last.weights.row(c).to_vec())
}

/// Orthonormal basis of the plane through `t1, t2, t3` (Gram–Schmidt on `t2−t1`, `t3−t1`).
pub fn plane_basis(t1: &[f64], t2: &[f64], t3: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if t1.len() != t2.len() || t1.len() != t3.len() {
        return Err(LabError::Shape("templates differ in length".into()));
    }
    let v1: Vec<f64> = t2.iter().zip(t1).map(|(a, b)| a - b).collect();
    let v2: Vec<f64> = t3.iter().zip(t1).map(|(a, b)| a - b).collect();
    let n1 = norm(&v1);
    let n2 = norm(&v2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(LabError::Geometry("coincident templates".into()));
    }
    let u1: Vec<f64> = v1.iter().map(|v| v / n1).collect();
    let proj = dot(&v2, &u1);
    let w: Vec<f64> = v2.iter().zip(&u1).map(|(v, u)| v - proj * u).collect();
    let nw = norm(&w);
    if nw / n2 <= MIN_PLANE_ANGLE.sin() {
        return Err(LabError::Geometry(
            "templates are collinear; they do not span a plane".into(),
        ));
    }
    let u2 = w.iter().map(|v| v / nw).collect();
    Ok((u1, u2))
}

/// `p ↦ ((p − origin)·u1, (p − origin)·u2)` for every row.
pub fn project(points: &Matrix, origin: &[f64], basis: (&[f64], &[f64])) -> Result<Vec<[f64; 2]>> {
    let (u1, u2) = basis;
    if points.cols() != origin.len() || u1.len() != origin.len() || u2.len() != origin.len() {
        return Err(LabError::Shape(format!(
            "points have {} dims, origin {}, basis {}/{}",
            points.cols(),
            origin.len(),
            u1.len(),
            u2.len()
        )));
    }
    let mut centered = vec![0.0; origin.len()];
    Ok(points
        .iter_rows()
        .map(|p| {
            for ((c, x), o) in centered.iter_mut().zip(p).zip(origin) {
                *c = x - o;
            }
            [dot(&centered, u1), dot(&centered, u2)]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSeparation {
    /// Distance between the two class-mean points.
    pub d_c: f64,
    /// Mean distance of each class's points to its own mean.
    pub spread_a: f64,
    pub spread_b: f64,
}

impl ClusterSeparation {
    pub fn mean_spread(&self) -> f64 {
        0.5 * (self.spread_a + self.spread_b)
    }
}

fn spread(points: &[&[f64]], center: &[f64]) -> f64 {
    points.iter().map(|p| dist(p, center)).sum::<f64>() / points.len() as f64
}

/// Cluster distance and tightness for two point sets of equal dimension.
pub fn cluster_separation(class_a: &[&[f64]], class_b: &[&[f64]]) -> Result<ClusterSeparation> {
    if class_a.is_empty() || class_b.is_empty() {
        return Err(LabError::Grouping("cluster separation needs two non-empty classes".into()));
    }
    let ma = mean_vector(class_a);
    let mb = mean_vector(class_b);
    if ma.len() != mb.len() {
        return Err(LabError::Shape("clusters live in different dimensions".into()));
    }
    Ok(ClusterSeparation {
        d_c: dist(&ma, &mb),
        spread_a: spread(class_a, &ma),
        spread_b: spread(class_b, &mb),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub pair: (usize, usize),
    pub reference: usize,
    pub basis: (Vec<f64>, Vec<f64>),
    /// `(label, x, y)` for every projected example.
    pub points: Vec<(usize, [f64; 2])>,
    /// Projected class means, indexed by class (`None` for classes without examples).
    pub cluster_means: Vec<Option<[f64; 2]>>,
    pub planar: ClusterSeparation,
    pub full: ClusterSeparation,
    /// Full-space distance of each pair member to the reference class mean.
    pub distances_to_reference: Vec<(usize, f64)>,
}

impl GeometryReport {
    pub fn summary_line(&self) -> String {
        format!(
            "pair=({},{}) reference={} d_c_full={:.6} d_c_plane={:.6} spread_full={:.6} \
             spread_plane={:.6}",
            self.pair.0,
            self.pair.1,
            self.reference,
            self.full.d_c,
            self.planar.d_c,
            self.full.mean_spread(),
            self.planar.mean_spread()
        )
    }

    pub fn write_points_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "label,x,y")?;
        for (y, [px, py]) in &self.points {
            writeln!(w, "{y},{px:.6},{py:.6}")?;
        }
        Ok(())
    }

    /// A plain scatter plot: one colour per class, projected class means ringed.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 480.0;
        const PAD: f64 = 24.0;
        const PALETTE: [&str; 10] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf",
        ];
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (_, [x, y]) in &self.points {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let sx = |x: f64| PAD + (x - x0) / span * (SIZE - 2.0 * PAD);
        let sy = |y: f64| SIZE - PAD - (y - y0) / span * (SIZE - 2.0 * PAD);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (label, [x, y]) in &self.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}" fill-opacity="0.6"/>"#,
                sx(*x),
                sy(*y),
                PALETTE[label % PALETTE.len()]
            );
        }
        for (label, m) in self.cluster_means.iter().enumerate() {
            if let Some([x, y]) = m {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="black" stroke-width="1.5"><title>class {label}</title></circle>"#,
                    sx(*x),
                    sy(*y)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="16" font-family="monospace" font-size="11">D_c(full)={:.3} D_c(plane)={:.3}</text>"#,
            self.full.d_c, self.planar.d_c
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Projects the pair and reference classes of `data` onto the plane of their
/// templates and measures the pair's separation in the plane and in full space.
pub fn analyze(
    model: &Model,
    data: &LabeledDataset,
    pair: (usize, usize),
    reference: usize,
) -> Result<GeometryReport> {
    let (a, b) = pair;
    if a == b || reference == a || reference == b {
        return Err(LabError::Spec("pair and reference classes must be distinct".into()));
    }
    let t = [
        template_of(model, a)?,
        template_of(model, b)?,
        template_of(model, reference)?,
    ];
    let basis = plane_basis(&t[0], &t[1], &t[2])?;
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| [a, b, reference].contains(&data.labels()[i]))
        .collect();
    let feats = data.features().select_rows(&keep);
    let labels: Vec<usize> = keep.iter().map(|&i| data.labels()[i]).collect();
    let record = model.forward(&feats)?;
    let pen = record.penultimate();
    let planar = project(pen, &t[0], (&basis.0, &basis.1))?;

    let rows_of = |c: usize| -> Vec<usize> {
        labels
            .iter()
            .enumerate()
            .filter(|&(_, &y)| y == c)
            .map(|(i, _)| i)
            .collect()
    };
    let (ia, ib, ir) = (rows_of(a), rows_of(b), rows_of(reference));
    let full_a: Vec<&[f64]> = ia.iter().map(|&i| pen.row(i)).collect();
    let full_b: Vec<&[f64]> = ib.iter().map(|&i| pen.row(i)).collect();
    let full_r: Vec<&[f64]> = ir.iter().map(|&i| pen.row(i)).collect();
    let full = cluster_separation(&full_a, &full_b)?;
    let plane_a: Vec<&[f64]> = ia.iter().map(|&i| &planar[i][..]).collect();
    let plane_b: Vec<&[f64]> = ib.iter().map(|&i| &planar[i][..]).collect();
    let planar_sep = cluster_separation(&plane_a, &plane_b)?;

    let mut cluster_means = vec![None; model.spec().num_classes];
    for &c in &[a, b, reference] {
        let pts: Vec<&[f64]> = rows_of(c).iter().map(|&i| &planar[i][..]).collect();
        if !pts.is_empty() {
            let m = mean_vector(&pts);
            cluster_means[c] = Some([m[0], m[1]]);
        }
    }
    let distances_to_reference = if full_r.is_empty() {
        Vec::new()
    } else {
        let ref_mean = mean_vector(&full_r);
        ia.iter()
            .chain(&ib)
            .map(|&i| (labels[i], dist(pen.row(i), &ref_mean)))
            .collect()
    };
    Ok(GeometryReport {
        pair,
        reference,
        basis,
        points: labels.iter().copied().zip(planar).collect(),
        cluster_means,
        planar: planar_sep,
        full,
        distances_to_reference,
    })
}
