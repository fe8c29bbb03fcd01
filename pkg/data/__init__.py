from .datasets import Dataset, NormalizationSpec, denormalize, normalize, split
from .loaders import load_class_names, load_idx, load_image_dir, write_idx
from .synthetic import DIGIT_NAMES, make_digits, write_digits_idx
