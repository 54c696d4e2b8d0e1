use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{cosine_alignment, AnalysisError};
use crate::net::{logits_to_labels, NetworkParams};

/// Boundaries further apart than this are not compared by offset.
pub const MAX_COMPARABLE_ANGLE_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, AnalysisError> {
        let b = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn unit() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(AnalysisError::DegenerateBounds(format!("{self:?}")))
        }
    }

    /// Bounding box of the columns of a `2 x N` matrix, grown by `expand`
    /// times its extent (split evenly between the two sides). A flat axis
    /// is padded by one unit each way.
    pub fn from_points(points: &Array2<f64>, expand: f64) -> Result<Self, AnalysisError> {
        if points.nrows() != 2 || points.ncols() == 0 {
            return Err(AnalysisError::Shape(format!("need a 2 x N point matrix, got {:?}", points.dim())));
        }
        let span = |row: ArrayView1<f64>| {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.5 * expand * (hi - lo) } else { 1.0 };
            (lo - pad, hi + pad)
        };
        let (x_min, x_max) = span(points.row(0));
        let (y_min, y_max) = span(points.row(1));
        Self::new(x_min, x_max, y_min, y_max)
    }

    /// Centers of an `nx x ny` cell grid, as a `2 x (nx ny)` matrix with the
    /// x index varying fastest.
    pub fn cell_centers(&self, nx: usize, ny: usize) -> Array2<f64> {
        let dx = (self.x_max - self.x_min) / nx as f64;
        let dy = (self.y_max - self.y_min) / ny as f64;
        let mut pts = Array2::zeros((2, nx * ny));
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                pts[[0, c]] = self.x_min + (i as f64 + 0.5) * dx;
                pts[[1, c]] = self.y_min + (j as f64 + 0.5) * dy;
            }
        }
        pts
    }
}

/// Anything that labels points of a two-dimensional space.
pub trait Classifier2d {
    /// Labels (1-based) for the columns of a `2 x M` matrix.
    fn classify(&self, points: &Array2<f64>) -> Vec<usize>;

    /// Normal of the decision line for binary linear classifiers.
    fn linear_normal(&self) -> Option<Array1<f64>> {
        None
    }
}

/// `x -> W x + b`, labelled like network logits: a single row is binary
/// (positive means class 1), otherwise the arg-max row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearClassifier {
    pub fn new(weights: Array2<f64>, bias: Option<Array1<f64>>) -> Self {
        let bias = bias.unwrap_or_else(|| Array1::zeros(weights.nrows()));
        Self { weights, bias }
    }

    /// The last layer of a network, acting on its feature space.
    pub fn from_last_layer(params: &NetworkParams) -> Self {
        Self::new(params.last_weight.clone(), params.last_bias.clone())
    }

    /// Binary normal and offset: the boundary is `n . x + c = 0`.
    pub fn binary_boundary(&self) -> Option<(Array1<f64>, f64)> {
        match self.weights.nrows() {
            1 => Some((self.weights.row(0).to_owned(), self.bias[0])),
            2 => Some((&self.weights.row(0) - &self.weights.row(1), self.bias[0] - self.bias[1])),
            _ => None,
        }
    }
}

impl Classifier2d for LinearClassifier {
    fn classify(&self, points: &Array2<f64>) -> Vec<usize> {
        let mut z = self.weights.dot(points);
        z += &self.bias.view().insert_axis(Axis(1));
        logits_to_labels(&z)
    }

    fn linear_normal(&self) -> Option<Array1<f64>> {
        self.binary_boundary().map(|(n, _)| n)
    }
}

/// The full network acting on its input space.
pub struct NetworkClassifier<'a>(pub &'a NetworkParams);

impl Classifier2d for NetworkClassifier<'_> {
    fn classify(&self, points: &Array2<f64>) -> Vec<usize> {
        self.0.predict(points).expect("network input dimension must be 2")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub resolution: (usize, usize),
    pub bounds: Bounds,
    /// Row-major with the x index varying fastest.
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
    pub agreement: f64,
    /// Angle between the two boundary normals, when both are binary linear.
    pub normal_angle_deg: Option<f64>,
}

impl BoundaryGrid {
    pub fn cell_centers(&self) -> Array2<f64> {
        self.bounds.cell_centers(self.resolution.0, self.resolution.1)
    }
}

pub fn label_grid(
    c: &dyn Classifier2d,
    bounds: &Bounds,
    resolution: (usize, usize),
) -> Result<Vec<usize>, AnalysisError> {
    check_grid(bounds, resolution)?;
    Ok(c.classify(&bounds.cell_centers(resolution.0, resolution.1)))
}

fn check_grid(bounds: &Bounds, (nx, ny): (usize, usize)) -> Result<(), AnalysisError> {
    bounds.validate()?;
    if nx < 2 || ny < 2 {
        return Err(AnalysisError::DegenerateBounds(format!("resolution {nx} x {ny} below 2 x 2")));
    }
    Ok(())
}

pub fn boundary_grid(
    a: &dyn Classifier2d,
    b: &dyn Classifier2d,
    bounds: &Bounds,
    resolution: (usize, usize),
) -> Result<BoundaryGrid, AnalysisError> {
    check_grid(bounds, resolution)?;
    let pts = bounds.cell_centers(resolution.0, resolution.1);
    let labels_a = a.classify(&pts);
    let labels_b = b.classify(&pts);
    let same = labels_a.iter().zip(&labels_b).filter(|(x, y)| x == y).count();
    let normal_angle_deg = match (a.linear_normal(), b.linear_normal()) {
        (Some(na), Some(nb)) => cosine_alignment(na.view(), nb.view()).ok().map(|c| c.acos().to_degrees()),
        _ => None,
    };
    Ok(BoundaryGrid {
        resolution,
        bounds: *bounds,
        agreement: same as f64 / labels_a.len() as f64,
        labels_a,
        labels_b,
        normal_angle_deg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub classifier: LinearClassifier,
    /// Fraction of points the fitted line labels like the input.
    pub agreement: f64,
    pub angle_deg: f64,
}

/// Best single line for binary labels (1 or 2) on 2-D points: a sweep over
/// normal directions, each with its optimal threshold, refined around the
/// best coarse direction.
pub fn best_linear_fit(points: &Array2<f64>, labels: &[usize]) -> Result<LinearFit, AnalysisError> {
    if points.nrows() != 2 || points.ncols() != labels.len() || labels.is_empty() {
        return Err(AnalysisError::Shape("need a 2 x M point matrix with M labels".into()));
    }
    if labels.iter().any(|&l| l != 1 && l != 2) {
        return Err(AnalysisError::Shape("best_linear_fit takes binary labels".into()));
    }
    let eval = |deg: f64| -> (usize, f64) {
        let (s, c) = deg.to_radians().sin_cos();
        let proj: Vec<f64> = (0..labels.len()).map(|m| c * points[[0, m]] + s * points[[1, m]]).collect();
        best_threshold(&proj, labels)
    };
    let mut best = (0usize, 0.0, 0.0);
    let consider = |deg: f64, best: &mut (usize, f64, f64)| {
        let (hits, thr) = eval(deg);
        if hits > best.0 {
            *best = (hits, thr, deg);
        }
    };
    for k in 0..720 {
        consider(k as f64 * 0.5, &mut best);
    }
    let centre = best.2;
    for k in -100..=100 {
        consider(centre + k as f64 * 0.005, &mut best);
    }
    let (hits, thr, deg) = best;
    let (s, c) = deg.to_radians().sin_cos();
    Ok(LinearFit {
        classifier: LinearClassifier::new(ndarray::array![[c, s]], Some(ndarray::array![-thr])),
        agreement: hits as f64 / labels.len() as f64,
        angle_deg: deg.rem_euclid(360.0),
    })
}

/// Best count of points with `proj > thr` exactly when the label is 1.
fn best_threshold(proj: &[f64], labels: &[usize]) -> (usize, f64) {
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
    // threshold below everything: all predicted class 1
    let mut hits = labels.iter().filter(|&&l| l == 1).count();
    let mut best = (hits, proj[order[0]] - 1.0);
    let mut i = 0;
    while i < order.len() {
        let v = proj[order[i]];
        while i < order.len() && proj[order[i]] == v {
            if labels[order[i]] == 1 {
                hits -= 1;
            } else {
                hits += 1;
            }
            i += 1;
        }
        if hits > best.0 {
            let thr = if i < order.len() { 0.5 * (v + proj[order[i]]) } else { v + 1.0 };
            best = (hits, thr);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasGap {
    /// Distance between the two boundaries along the SVM normal.
    pub gap: f64,
    pub angle_deg: f64,
    /// Signed positions of each boundary on the normal line through the
    /// reference centroid (zero at the centroid).
    pub net_offset: f64,
    pub svm_offset: f64,
}

/// Separation of two binary linear boundaries `w . x + b = 0`, measured on
/// the line through the centroid of `reference_points` (`2 x M` or any
/// `d x M`) along the SVM's unit normal.
pub fn bias_gap(
    w_net: ArrayView1<f64>,
    b_net: f64,
    w_svm: ArrayView1<f64>,
    b_svm: f64,
    reference_points: &Array2<f64>,
) -> Result<BiasGap, AnalysisError> {
    let cos = cosine_alignment(w_net, w_svm)?;
    let angle_deg = cos.acos().to_degrees();
    if angle_deg > MAX_COMPARABLE_ANGLE_DEG {
        return Err(AnalysisError::Incomparable { angle_deg });
    }
    if reference_points.nrows() != w_svm.len() || reference_points.ncols() == 0 {
        return Err(AnalysisError::Shape("reference points do not match the weight dimension".into()));
    }
    let centroid = reference_points.mean_axis(Axis(1)).expect("non-empty");
    let unit = &w_svm / w_svm.dot(&w_svm).sqrt();
    // boundary crossing of c + s u for a line w . x + b = 0
    let crossing = |w: ArrayView1<f64>, b: f64| -(w.dot(&centroid) + b) / w.dot(&unit);
    let net_offset = crossing(w_net, b_net);
    let svm_offset = crossing(w_svm, b_svm);
    Ok(BiasGap {
        gap: (net_offset - svm_offset).abs(),
        angle_deg,
        net_offset,
        svm_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sign_of(axis: usize) -> LinearClassifier {
        let mut w = array![[0.0, 0.0]];
        w[[0, axis]] = 1.0;
        LinearClassifier::new(w, None)
    }

    #[test]
    fn identical_classifiers_agree() {
        let c = LinearClassifier::new(array![[1.0, -2.0]], Some(array![0.3]));
        let g = boundary_grid(&c, &c, &Bounds::unit(), (17, 9)).unwrap();
        assert_eq!(g.agreement, 1.0);
        assert_eq!(g.normal_angle_deg, Some(0.0));
    }

    #[test]
    fn quadrant_argument() {
        let b = Bounds::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let g = boundary_grid(&sign_of(0), &sign_of(1), &b, (40, 40)).unwrap();
        assert!((g.agreement - 0.5).abs() < 1e-12);
        assert!((g.normal_angle_deg.unwrap() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn agreement_symmetric() {
        let a = LinearClassifier::new(array![[1.0, 0.3]], Some(array![-0.5]));
        let b = LinearClassifier::new(array![[0.2, 1.0]], Some(array![-0.4]));
        let ab = boundary_grid(&a, &b, &Bounds::unit(), (23, 31)).unwrap();
        let ba = boundary_grid(&b, &a, &Bounds::unit(), (23, 31)).unwrap();
        assert_eq!(ab.agreement, ba.agreement);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(Bounds::new(1.0, 1.0, 0.0, 1.0).is_err());
        let c = sign_of(0);
        assert!(boundary_grid(&c, &c, &Bounds::unit(), (1, 5)).is_err());
    }

    #[test]
    fn bounds_expand_evenly() {
        let b = Bounds::from_points(&array![[0.0, 10.0], [5.0, 5.0]], 0.2).unwrap();
        assert_eq!((b.x_min, b.x_max), (-1.0, 11.0));
        assert_eq!((b.y_min, b.y_max), (4.0, 6.0));
    }

    #[test]
    fn linear_fit_recovers_line() {
        let truth = LinearClassifier::new(array![[0.6, 0.8]], Some(array![-0.7]));
        let pts = Bounds::unit().cell_centers(60, 60);
        let labels = truth.classify(&pts);
        let fit = best_linear_fit(&pts, &labels).unwrap();
        assert!(fit.agreement >= 0.995, "{}", fit.agreement);
    }

    #[test]
    fn constant_labels_fit_perfectly() {
        let pts = Bounds::unit().cell_centers(5, 5);
        let fit = best_linear_fit(&pts, &[2; 25]).unwrap();
        assert_eq!(fit.agreement, 1.0);
    }

    #[test]
    fn bias_gap_examples() {
        let pts = array![[0.0, 2.0, 1.0], [0.0, 0.0, 3.0]];
        let w = array![1.0, 1.0];
        let same = bias_gap(w.view(), -1.0, w.view(), -1.0, &pts).unwrap();
        assert!(same.gap.abs() < 1e-15);
        // w/|w| . x = 0 and w/|w| . x = 1 are one unit apart
        let u = &w / 2f64.sqrt();
        let shifted = bias_gap(u.view(), -1.0, u.view(), 0.0, &pts).unwrap();
        assert!((shifted.gap - 1.0).abs() < 1e-12);
        assert!(matches!(
            bias_gap(array![1.0, 0.0].view(), 0.0, array![0.0, 1.0].view(), 0.0, &pts),
            Err(AnalysisError::Incomparable { .. })
        ));
    }
}
