use super::params::layout;
use super::ArchConfig;

/// Exact number of scalar parameters.
pub fn count_params(config: &ArchConfig) -> usize {
    layout(config).0.iter().map(|s| s.numel()).sum()
}

/// Multiply-accumulates per output pixel over all conv and linear layers.
/// Bilinear interpolation and pointwise activations are not counted.
pub fn count_macs_per_pixel(config: &ArchConfig) -> f64 {
    let (mut h, mut w) = config.base_grid;
    let mut c = config.base_channels;
    let mut total = (config.pe_dim() * config.stem_hidden + config.stem_hidden * c * h * w) as f64;
    for b in &config.blocks {
        let scrb = |c: usize, e: usize, h: usize, w: usize| {
            conv_macs(b.dw_kernel, 1, c, h, w) + conv_macs(1, c, e * c, h, w) + conv_macs(1, e * c, c, h, w)
        };
        let (s, cout) = (b.stride, b.out_channels);
        total += scrb(c, b.expansion, h, w);
        total += conv_macs(3, c, cout * s * s, h, w);
        total += scrb(cout, config.post_expansion(b), h * s, w * s);
        total += conv_macs(1, c, cout, h * s, w * s);
        h *= s;
        w *= s;
        c = cout;
    }
    total += conv_macs(config.head_kernel, c, 3, h, w);
    total / (h * w) as f64
}

/// MACs of one conv layer producing a `cout x h x w` output.
fn conv_macs(k: usize, cin_per_group: usize, cout: usize, h: usize, w: usize) -> f64 {
    (k * k * cin_per_group * cout * h * w) as f64
}

/// Parameter-count increase from switching `variant_star` on: the two
/// pointwise convs of each post-upsample SCRB go from ratio `e` to `2e`,
/// adding `e·C·(2C + 1)` parameters per block with `C` its output channels.
pub fn variant_star_param_delta(config: &ArchConfig) -> usize {
    config
        .blocks
        .iter()
        .map(|b| b.expansion * b.out_channels * (2 * b.out_channels + 1))
        .sum()
}
