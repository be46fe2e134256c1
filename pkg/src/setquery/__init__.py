"""Known-support estimation from sparse random linear sketches.

Core pieces: a column-sparse +/-1 measurement matrix and sketch
(``sketch``), a peeling decoder recovering the signal over a known
support (``decoder``), structural diagnostics of the induced hypergraph
(``hypergraph``), a Count-Sketch locator pipeline for power-law signals
(``countsketch``), block heavy hitters and block-sparse recovery
(``blocks``), and a seeded experiment harness (``experiment``, CLI in
``cli``).
"""

from . import blocks  # noqa: F401  (registers the block sketch section decoder)
from .blocks import (
    BlockParams,
    BlockSketch,
    bhh_apply,
    bhh_build,
    bhh_estimate_block,
    bhh_locate,
    derive_block_params,
    err_block,
    recover_block_sparse,
)
from .countsketch import (
    CountSketchParams,
    CountSketchTable,
    cs_apply,
    cs_build,
    cs_estimate,
    cs_update,
    derive_cs_params,
    locate_candidates,
    recover_zipfian,
    top_k_threshold,
)
from .decoder import (
    RecoveryError,
    RecoveryResult,
    SupportSet,
    error_ratio,
    recover,
    recover_robust,
)
from .hypergraph import ComponentReport, component_size_stats, components, peelable
from .signals import SparseSignal, err_topk, gen_block_sparse, gen_geometric, gen_zipfian
from .sketch import (
    CodecError,
    Sketch,
    SketchMatrix,
    SketchParams,
    add_noise,
    apply,
    build_matrix,
    derive_params,
    deserialize,
    serialize,
    split_binary_rows,
    update,
)

__version__ = "0.1.0"
