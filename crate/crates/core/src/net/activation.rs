use super::{NetError, Real, Tensor};

pub fn relu<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    if input.shape() != grad_out.shape() {
        return Err(NetError::Shape(format!(
            "relu_backward: input {:?} vs grad {:?}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

pub(crate) fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
}

/// `[C][H][W]` → `[C]` per-map means.
pub fn global_avg_pool<T: Real>(t: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    let &[c, h, w] = t.shape() else {
        return Err(NetError::Shape(format!("GAP expects [C][H][W], got {:?}", t.shape())));
    };
    if h == 0 || w == 0 {
        return Err(NetError::Shape("GAP over an empty map".into()));
    }
    Tensor::new(&[c], gap_slice(t.data(), c))
}

pub(crate) fn gap_slice<T: Real>(data: &[T], maps: usize) -> Vec<T> {
    let n = data.len() / maps;
    let inv = T::one() / T::from_usize(n).unwrap();
    data.chunks_exact(n)
        .map(|m| m.iter().copied().sum::<T>() * inv)
        .collect()
}

/// Spreads each map's gradient uniformly as `grad / (H·W)`.
pub fn global_avg_pool_backward<T: Real>(
    grad_out: &[T],
    shape: [usize; 3],
) -> Result<Tensor<T>, NetError> {
    let [c, h, w] = shape;
    if grad_out.len() != c {
        return Err(NetError::Shape(format!(
            "GAP backward: {} grads for {c} maps",
            grad_out.len()
        )));
    }
    let inv = T::one() / T::from_usize(h * w).unwrap();
    Ok(Tensor::from_fn(&shape, |i| grad_out[i / (h * w)] * inv))
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
