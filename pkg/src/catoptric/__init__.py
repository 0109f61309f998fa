"""Black-box attacks on image classifiers via polygonal colored light.

The library searches, using only classifier confidence scores, for a
polygon + color + intensity light overlay that flips a model's
prediction. Subpackages:

- imaging: light parameterization, rasterization, compositing, random
  transformation pipeline
- genetic: bit-string genotypes and the population search loop
- oracle: classifier abstraction, synthetic centroid model, wire-protocol
  clients for external model adapters
- harness: ASR reports, method grids, color ablation, corpus generation,
  transfer replays
- cli: `catoptric` command-line driver
"""

from .imaging import (
    EotConfig,
    InvalidPolygonError,
    LightColor,
    LightParams,
    Polygon,
    apply_eot,
    compose_light,
    full_mask,
    load_png,
    rasterize_polygon,
    save_png,
    validate_image,
)
from .oracle import (
    CentroidOracle,
    ClassifierOracle,
    HttpOracleClient,
    OracleConnectionError,
    OracleError,
    OracleProtocolError,
    OracleTimeoutError,
    Prediction,
    ScoreValidationError,
    StdioOracleClient,
)
from .genetic import (
    AttackResult,
    GaConfig,
    Genotype,
    PreconditionError,
    SearchSpace,
    attack,
    crossover,
    decode,
    encode,
    evaluate_population,
    mutate,
    random_genotype,
    select,
)
from .harness import (
    COLOR_LATTICE_27,
    AsrReport,
    GridSpec,
    LabeledImage,
    color_ablation,
    compute_asr,
    generate_dataset,
    random_attack,
    run_grid,
    transfer_eval,
)

__version__ = "0.1.0"
