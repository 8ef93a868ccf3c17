from .mnist import (
    ImageSample,
    Dataset,
    load_idx,
    write_idx,
    subsample,
    split_disjoint,
    augment,
    augment_batch,
    binarize,
    build_manifest,
    PIXEL_COUNT,
    LABEL_COUNT,
    VISIBLE_COUNT,
)

__all__ = [
    "ImageSample", "Dataset", "load_idx", "write_idx", "subsample", "split_disjoint",
    "augment", "augment_batch", "binarize", "build_manifest",
    "PIXEL_COUNT", "LABEL_COUNT", "VISIBLE_COUNT",
]
