//! Per-instance, per-channel normalization with a learned affine.

use crate::scalar::Scalar;

/// Cached statistics for the backward pass of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache<T> {
    pub normalized: Vec<T>,
    pub inv_std: T,
}

/// `scale * (x - mean) / sqrt(var + epsilon) + offset`, population variance.
pub fn instance_norm<T: Scalar>(channel: &[T], scale: T, offset: T, epsilon: T) -> (Vec<T>, NormCache<T>) {
    let n = T::of(channel.len() as f64);
    let mean = channel.iter().copied().sum::<T>() / n;
    let var = channel.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = (var + epsilon).sqrt().recip();
    let normalized: Vec<T> = channel.iter().map(|&v| (v - mean) * inv_std).collect();
    let out = normalized.iter().map(|&z| scale * z + offset).collect();
    (out, NormCache { normalized, inv_std })
}

/// Returns `(d_input, d_scale, d_offset)`.
pub fn instance_norm_backward<T: Scalar>(cache: &NormCache<T>, scale: T, d_out: &[T]) -> (Vec<T>, T, T) {
    let n = T::of(d_out.len() as f64);
    let d_offset = d_out.iter().copied().sum::<T>();
    let d_scale = d_out.iter().zip(&cache.normalized).map(|(&g, &z)| g * z).sum::<T>();
    // d_norm = g * scale; dx = inv_std * (d_norm - mean(d_norm) - z * mean(d_norm * z))
    let mean_g = d_offset * scale / n;
    let mean_gz = d_scale * scale / n;
    let d_input = d_out
        .iter()
        .zip(&cache.normalized)
        .map(|(&g, &z)| cache.inv_std * (g * scale - mean_g - z * mean_gz))
        .collect();
    (d_input, d_scale, d_offset)
}
