"""Map-image pairs for ground-to-BEV semantic mapping.

Subpackages: :mod:`mia.fpv` (image metadata curation), :mod:`mia.osm`
(map semantics); modules :mod:`mia.bev`, :mod:`mia.visibility`,
:mod:`mia.evaluation`, :mod:`mia.dataset`, :mod:`mia.curate`, :mod:`mia.cli`.
"""

__version__ = "0.1.0"
