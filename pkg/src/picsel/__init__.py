"""Staged construction of a diverse, evenly spread image corpus.

Modules:
  records            core dataclasses and the on-disk table formats
  indicators         scalar image measures and outlier trimming
  content_features   seeded k-means codebook over content descriptors
  tag_sampler        quota-based selection that balances tag coverage
  cropper            saliency-guided standardizing crop
  diversity_sampler  histogram-flattening subset selection and dedup
  subjective         crowd-study analytics (MOS, screening, reliability)
  review_service     HTTP work queue for the manual pass
  pipeline           stage driver tying it all together
  synth              deterministic synthetic corpus for tests and demos
"""

from .records import (
    SCALAR_INDICATORS,
    ImageRecord,
    IndicatorVector,
    IngestError,
    Selection,
    TagAssignment,
)

__all__ = [
    "SCALAR_INDICATORS",
    "ImageRecord",
    "IndicatorVector",
    "IngestError",
    "Selection",
    "TagAssignment",
]

__version__ = "0.1.0"
