"""Measure and reduce the colour/texture gap between synthetic and empirical images.

Part I compares image sets class by class (HSI hue histograms, GLCM Haralick
features) and trains a cycle-consistent translator between the domains.
Part II trains a small segmentation network on synthetic, translated or
empirical images and scores it with per-class IOU.
"""

from .cyclegan import CycleGANTranslator, TranslatorConfig, build_translator, train_translator, translate
from .dataset import Dataset, DatasetRef
from .exceptions import (
    BoundsError,
    ClassAbsentError,
    ClassRangeError,
    ConfigError,
    DatasetError,
    DomainGapError,
    ImageFormatError,
    NumericError,
    ShapeError,
    TrainingError,
    ZeroVarianceError,
)
from .features import ClassTextureFeatures, gap_report, glcm, haralick, hue_histogram, pearson
from .segmetrics import confusion_matrix, mean_iou
from .segnet import SegNet, SegNetSegmenter, SegTrainConfig, predict, run_all, run_experiment, train_segnet
from .toydata import ToySceneSpec, generate

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "ClassAbsentError",
    "ClassRangeError",
    "ClassTextureFeatures",
    "ConfigError",
    "CycleGANTranslator",
    "Dataset",
    "DatasetError",
    "DatasetRef",
    "DomainGapError",
    "ImageFormatError",
    "NumericError",
    "SegNet",
    "SegNetSegmenter",
    "SegTrainConfig",
    "ShapeError",
    "ToySceneSpec",
    "TrainingError",
    "TranslatorConfig",
    "ZeroVarianceError",
    "build_translator",
    "confusion_matrix",
    "gap_report",
    "generate",
    "glcm",
    "haralick",
    "hue_histogram",
    "mean_iou",
    "pearson",
    "predict",
    "run_all",
    "run_experiment",
    "train_segnet",
    "train_translator",
    "translate",
]
