"""mitoviz: interactive proofreading and morphology analysis of neuronal
mitochondria in two-channel fluorescence images.

Core pieces: raster primitives and signal enhancement (``imgproc``),
structure-label brushing (``structure``), mitochondria object editing
(``mito``), the interactive fine-tuning engine (``learn``), morphology
features and statistics (``morpho``), synthetic phantoms (``synth``), the
HTTP backend (``server``) and the batch CLI (``cli``).
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
