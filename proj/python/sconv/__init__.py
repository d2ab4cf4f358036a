"""Scale-equivariant convolution layers, glyph datasets and evaluation tools."""

from ._sconv import (
    FormatError,
    Model,
    NumericError,
    ShapeError,
    Split,
    equivariance_error,
    evaluate_per_scale,
    generate_dataset,
    glyph_name,
    load_model,
    load_split,
    num_scales,
    op_count_scaled,
    op_count_standard,
    pearson_r,
    pyramid_sizes,
    render_glyph,
    resize,
    scale_pool,
    scale_selection_profile,
    scenario_equivariance_score,
    scenario_scales,
    sconv2d,
    spearman_test,
    train,
    write_split,
)

__all__ = [name for name in dir() if not name.startswith("_")]
