from .augment import AugmentationSpec, augment, augment_logged
from .features import FEATURE_DIM, extract_features
from .forest import Forest, ForestConfig, predict_proba, train_random_forest
from .hardness import IHConfig, instance_hardness
from .imaging import (Contour, Region, binarize, binarize_adaptive, crop_image, crop_scope, detect_scope_region,
                      find_contours, read_image, sweep_threshold, to_grayscale, write_image)
from .manifest import ImageRecord, Manifest, ManifestError, load_manifest, manifest_from_dir
from .sampling import (balance_dataset, imbalance_ratio, oversample, regenerate, undersample_ih,
                       undersample_random)
