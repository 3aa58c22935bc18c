from .augment import AugmentConfig, augment, crop, hflip, pad_images
from .idx import IdxFormatError, encode_idx, load_delimited, parse_idx, read_idx, write_idx
from .streams import (
    TaskDataset,
    TaskStream,
    class_means,
    file_sha256,
    file_tasks,
    make_permutations,
    permute_tasks,
    rotate_image_batch,
    rotate_tasks,
    split_tasks,
    stratified_split,
    subsample_replay,
    synthetic_gaussian_tasks,
    with_sources,
)
