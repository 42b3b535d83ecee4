use ndarray::{s, Array, Array2, Array3, Array4, ArrayView2, Axis, Dimension, Zip};

use super::graph::GraphSpec;
use super::params::{ArchConfig, ModelParams};
use crate::elastic::ActivenessMatrix;
use crate::error::{Error, Result};

/// A batch of input windows with their forecast targets.
///
/// `inputs` is `batch × t_in × nodes × features`; `targets` and `mask` are
/// `batch × t_out × nodes`, with `mask` marking observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub inputs: Array4<f64>,
    pub targets: Array3<f64>,
    pub mask: Array3<f64>,
}

impl WindowBatch {
    pub fn new(inputs: Array4<f64>, targets: Array3<f64>, mask: Array3<f64>) -> Result<Self> {
        let (b, t_in, n, f) = inputs.dim();
        let (tb, t_out, tn) = targets.dim();
        if t_in == 0 || t_out == 0 || f == 0 {
            return Err(Error::shape("WindowBatch", "t_in, t_out and features must be >= 1"));
        }
        if tb != b || tn != n {
            return Err(Error::shape(
                "WindowBatch",
                format!("inputs {:?} vs targets {:?}", inputs.dim(), targets.dim()),
            ));
        }
        if mask.dim() != targets.dim() {
            return Err(Error::shape("WindowBatch", "mask shape differs from targets"));
        }
        Ok(Self {
            inputs,
            targets,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.inputs.dim().2
    }

    /// Windows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> WindowBatch {
        WindowBatch {
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            mask: self.mask.select(Axis(0), indices),
        }
    }

    /// Concatenate batches along the window axis.
    pub fn concat(parts: &[&WindowBatch]) -> Result<WindowBatch> {
        if parts.is_empty() {
            return Err(Error::Empty("no batches to concatenate".into()));
        }
        let err = |e: ndarray::ShapeError| Error::shape("WindowBatch::concat", e.to_string());
        let inputs: Vec<_> = parts.iter().map(|b| b.inputs.view()).collect();
        let targets: Vec<_> = parts.iter().map(|b| b.targets.view()).collect();
        let mask: Vec<_> = parts.iter().map(|b| b.mask.view()).collect();
        WindowBatch::new(
            ndarray::concatenate(Axis(0), &inputs).map_err(err)?,
            ndarray::concatenate(Axis(0), &targets).map_err(err)?,
            ndarray::concatenate(Axis(0), &mask).map_err(err)?,
        )
    }
}

struct LayerViews<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: ArrayView2<'a, f64>,
    b2: &'a [f64],
    w3: ArrayView2<'a, f64>,
    b3: &'a [f64],
}

fn views<'a>(arch: &ArchConfig, flat: &'a [f64]) -> LayerViews<'a> {
    let r = arch.layer_ranges();
    let w = arch.input_width();
    let mat = |range: std::ops::Range<usize>, rows, cols| {
        ArrayView2::from_shape((rows, cols), &flat[range]).expect("layout ranges match shapes")
    };
    LayerViews {
        w1: mat(r[0].clone(), w, arch.hidden1),
        b1: &flat[r[1].clone()],
        w2: mat(r[2].clone(), arch.hidden1, arch.hidden2),
        b2: &flat[r[3].clone()],
        w3: mat(r[4].clone(), arch.hidden2, arch.t_out),
        b3: &flat[r[5].clone()],
    }
}

/// Parameters as seen by the network: `θ ⊙ A · scale` when an activeness
/// matrix is supplied.
pub fn effective_params(
    params: &ModelParams,
    activeness: Option<&ActivenessMatrix>,
) -> Result<Vec<f64>> {
    match activeness {
        None => Ok(params.as_slice().to_vec()),
        Some(a) => {
            if a.len() != params.len() {
                return Err(Error::shape(
                    "activeness",
                    format!("mask has {} entries, parameters {}", a.len(), params.len()),
                ));
            }
            Ok(params
                .as_slice()
                .iter()
                .zip(a.factors())
                .map(|(p, f)| p * f)
                .collect())
        }
    }
}

fn check_shapes(arch: &ArchConfig, batch: &WindowBatch, graph: &GraphSpec) -> Result<()> {
    let (_, t_in, n, f) = batch.inputs.dim();
    if n != graph.node_count() {
        return Err(Error::shape(
            "graph",
            format!("batch has {n} nodes, graph has {}", graph.node_count()),
        ));
    }
    if t_in * f != arch.input_width() {
        return Err(Error::shape(
            "layer w1",
            format!(
                "input window {t_in}x{f} does not match w1 input width {}",
                arch.input_width()
            ),
        ));
    }
    if batch.targets.dim().1 != arch.t_out {
        return Err(Error::shape(
            "layer w3",
            format!(
                "targets horizon {} does not match w3 output width {}",
                batch.targets.dim().1,
                arch.t_out
            ),
        ));
    }
    Ok(())
}

struct Activations {
    /// (batch·nodes) × input_width, graph-mixed inputs
    mixed: Array2<f64>,
    pre1: Array2<f64>,
    h1: Array2<f64>,
    pre2: Array2<f64>,
    h2: Array2<f64>,
    out: Array2<f64>,
}

fn run(arch: &ArchConfig, flat: &[f64], batch: &WindowBatch, graph: &GraphSpec) -> Activations {
    let (b, t_in, n, f) = batch.inputs.dim();
    let width = t_in * f;
    let l = views(arch, flat);

    let mut mixed = Array2::<f64>::zeros((b * n, width));
    for s in 0..b {
        // nodes × (t·f) with column index t * f + feature
        let sample = batch.inputs.index_axis(Axis(0), s);
        let x = sample
            .permuted_axes([1, 0, 2])
            .as_standard_layout()
            .into_shape_with_order((n, width))
            .expect("contiguous window")
            .to_owned();
        let z = graph.normalized.dot(&x);
        mixed.slice_mut(s![s * n..(s + 1) * n, ..]).assign(&z);
    }

    let affine = |input: &Array2<f64>, w: &ArrayView2<f64>, bias: &[f64]| {
        let mut out = input.dot(w);
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        out
    };
    let pre1 = affine(&mixed, &l.w1, l.b1);
    let h1 = pre1.mapv(relu);
    let pre2 = affine(&h1, &l.w2, l.b2);
    let h2 = pre2.mapv(relu);
    let out = affine(&h2, &l.w3, l.b3);
    Activations {
        mixed,
        pre1,
        h1,
        pre2,
        h2,
        out,
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn to_prediction(out: &Array2<f64>, b: usize, n: usize, t_out: usize) -> Array3<f64> {
    let mut pred = Array3::<f64>::zeros((b, t_out, n));
    for s in 0..b {
        for node in 0..n {
            for t in 0..t_out {
                pred[[s, t, node]] = out[[s * n + node, t]];
            }
        }
    }
    pred
}

/// Predict `batch × t_out × nodes` from a batch of windows.
pub fn forward(
    params: &ModelParams,
    batch: &WindowBatch,
    graph: &GraphSpec,
    activeness: Option<&ActivenessMatrix>,
) -> Result<Array3<f64>> {
    let arch = params.arch();
    check_shapes(arch, batch, graph)?;
    let flat = effective_params(params, activeness)?;
    let acts = run(arch, &flat, batch, graph);
    let (b, _, n, _) = batch.inputs.dim();
    Ok(to_prediction(&acts.out, b, n, arch.t_out))
}

/// `Σ|pred − target|·mask / Σmask`.
pub fn masked_mae_loss<D: Dimension>(
    pred: &Array<f64, D>,
    target: &Array<f64, D>,
    mask: &Array<f64, D>,
) -> Result<f64> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::shape(
            "masked_mae_loss",
            format!(
                "pred {:?}, target {:?}, mask {:?}",
                pred.shape(),
                target.shape(),
                mask.shape()
            ),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(pred).and(target).and(mask).for_each(|p, t, m| {
        num += (p - t).abs() * m;
        den += m;
    });
    if den <= 0.0 {
        return Err(Error::InvalidArgument("mask selects no entries".into()));
    }
    Ok(num / den)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value and exact gradient of masked MAE w.r.t. the flat parameter
/// vector. Positions zeroed by `activeness` get a zero gradient.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &WindowBatch,
    graph: &GraphSpec,
    activeness: Option<&ActivenessMatrix>,
) -> Result<(f64, Vec<f64>)> {
    let arch = *params.arch();
    check_shapes(&arch, batch, graph)?;
    let flat = effective_params(params, activeness)?;
    let acts = run(&arch, &flat, batch, graph);
    let (b, _, n, _) = batch.inputs.dim();

    let mut den = 0.0;
    let mut num = 0.0;
    let mut d_out = Array2::<f64>::zeros((b * n, arch.t_out));
    for s in 0..b {
        for node in 0..n {
            for t in 0..arch.t_out {
                let m = batch.mask[[s, t, node]];
                let e = acts.out[[s * n + node, t]] - batch.targets[[s, t, node]];
                num += e.abs() * m;
                den += m;
                d_out[[s * n + node, t]] = sign(e) * m;
            }
        }
    }
    if den <= 0.0 {
        return Err(Error::InvalidArgument("mask selects no entries".into()));
    }
    d_out.mapv_inplace(|v| v / den);

    let l = views(&arch, &flat);
    let d_w3 = acts.h2.t().dot(&d_out);
    let d_b3 = d_out.sum_axis(Axis(0));
    let mut d_pre2 = d_out.dot(&l.w3.t());
    Zip::from(&mut d_pre2).and(&acts.pre2).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    let d_w2 = acts.h1.t().dot(&d_pre2);
    let d_b2 = d_pre2.sum_axis(Axis(0));
    let mut d_pre1 = d_pre2.dot(&l.w2.t());
    Zip::from(&mut d_pre1).and(&acts.pre1).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    let d_w1 = acts.mixed.t().dot(&d_pre1);
    let d_b1 = d_pre1.sum_axis(Axis(0));

    // iter() walks logical row-major order, matching the flat layout
    let mut grad = Vec::with_capacity(flat.len());
    grad.extend(d_w1.iter());
    grad.extend(d_b1.iter());
    grad.extend(d_w2.iter());
    grad.extend(d_b2.iter());
    grad.extend(d_w3.iter());
    grad.extend(d_b3.iter());

    if let Some(a) = activeness {
        for (g, f) in grad.iter_mut().zip(a.factors()) {
            *g *= f;
        }
    }
    Ok((num / den, grad))
}

/// Exact gradient of masked MAE ∘ forward w.r.t. the flat parameter vector.
pub fn backward(
    params: &ModelParams,
    batch: &WindowBatch,
    graph: &GraphSpec,
    activeness: Option<&ActivenessMatrix>,
) -> Result<Vec<f64>> {
    loss_and_gradient(params, batch, graph, activeness).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::graph::GraphSpec;
    use ndarray::array;

    #[test]
    fn mae_examples() {
        let p = array![2.0, 4.0];
        let t = array![1.0, 1.0];
        assert_eq!(masked_mae_loss(&p, &t, &array![1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(masked_mae_loss(&p, &t, &array![1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(masked_mae_loss(&p, &p, &array![1.0, 1.0]).unwrap(), 0.0);
        assert!(masked_mae_loss(&p, &t, &array![0.0, 0.0]).is_err());
    }

    fn one_node_arch() -> ArchConfig {
        ArchConfig {
            t_in: 1,
            t_out: 1,
            feature_count: 1,
            hidden1: 1,
            hidden2: 1,
        }
    }

    #[test]
    fn hand_computed_one_node() {
        // Â = [1] for one node; y = w3·relu(w2·relu(w1·x + b1) + b2) + b3
        let arch = one_node_arch();
        let params = ModelParams::from_flat(arch, vec![2.0, -1.0, 3.0, 0.5, 1.0, 0.25]).unwrap();
        let graph = GraphSpec::new(array![[0.0]]).unwrap();
        let inputs = Array4::from_shape_vec((2, 1, 1, 1), vec![1.0, 0.25]).unwrap();
        let batch = WindowBatch::new(
            inputs,
            Array3::zeros((2, 1, 1)),
            Array3::ones((2, 1, 1)),
        )
        .unwrap();
        let pred = forward(&params, &batch, &graph, None).unwrap();
        // x=1: relu(2-1)=1, relu(3+0.5)=3.5, y=3.75
        // x=0.25: relu(0.5-1)=0, relu(0+0.5)=0.5, y=0.75
        assert_eq!(pred[[0, 0, 0]], 3.75);
        assert_eq!(pred[[1, 0, 0]], 0.75);
    }

    #[test]
    fn shape_error_names_layer() {
        let arch = one_node_arch();
        let params = ModelParams::zeros(arch);
        let graph = GraphSpec::new(array![[0.0]]).unwrap();
        let batch = WindowBatch::new(
            Array4::zeros((1, 2, 1, 1)),
            Array3::zeros((1, 1, 1)),
            Array3::ones((1, 1, 1)),
        )
        .unwrap();
        let err = forward(&params, &batch, &graph, None).unwrap_err();
        assert!(err.to_string().contains("w1"), "{err}");
    }
}
