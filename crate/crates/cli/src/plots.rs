use lastlayer::analysis::export::{render_svg, SvgLine, SvgPanel};
use lastlayer::analysis::{BoundaryGrid, LinearClassifier};
use lastlayer::data::LabeledDataset;
use lastlayer::net::NetworkParams;
use lastlayer::svm::SvmSolution;
use ndarray::Array2;

fn points_of(m: &Array2<f64>, labels: &[usize]) -> Vec<([f64; 2], usize)> {
    m.columns()
        .into_iter()
        .zip(labels)
        .map(|(c, &l)| ([c[0], c[1]], l))
        .collect()
}

fn line(c: &LinearClassifier, color: &str, dashed: bool) -> Option<SvgLine> {
    let (n, off) = c.binary_boundary()?;
    (n.len() == 2).then(|| SvgLine {
        normal: [n[0], n[1]],
        offset: off,
        color: color.to_string(),
        dashed,
    })
}

/// Input space, feature space with both boundaries, then any zoom grids.
pub(crate) fn figure(
    ds: &LabeledDataset,
    features: &Array2<f64>,
    params: &NetworkParams,
    svm: &SvmSolution,
    feature_grid: Option<&BoundaryGrid>,
    input_grid: Option<&BoundaryGrid>,
    appendix: &[BoundaryGrid],
) -> String {
    let mut panels = Vec::new();
    if let Some(g) = input_grid {
        panels.push(
            SvgPanel::new("input space", g.bounds)
                .with_cells(g.resolution, g.labels_a.clone())
                .with_points(points_of(ds.points(), ds.labels())),
        );
    }
    if let Some(g) = feature_grid {
        let mut p = SvgPanel::new("features: last layer (solid), SVM (dashed)", g.bounds)
            .with_cells(g.resolution, g.labels_a.clone())
            .with_points(points_of(features, ds.labels()));
        if let Some(l) = line(&LinearClassifier::from_last_layer(params), "black", false) {
            p = p.with_line(l);
        }
        if let Some(l) = line(&LinearClassifier::new(svm.weights(), None), "black", true) {
            p = p.with_line(l);
        }
        panels.push(p);
    }
    for g in appendix {
        let half = 0.5 * (g.bounds.x_max - g.bounds.x_min);
        panels.push(
            SvgPanel::new(format!("zoom: half-width {half}"), g.bounds)
                .with_cells(g.resolution, g.labels_a.clone())
                .with_points(points_of(ds.points(), ds.labels())),
        );
    }
    render_svg(&panels)
}
