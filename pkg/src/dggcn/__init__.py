"""DG-GCN: distance-geometric graph convolutions for 3D molecules.

The package is a set of flat modules; the most-used names are re-exported
here, everything else lives where you'd expect:

    autodiff   tape-based reverse-mode differentiation
    optim      Adam on named parameter dicts
    chemio     SDF/JSONL molecule IO, featurization, dataset splits
    distgeo    k-hop geometric edge construction with distances
    filters    Gaussian basis, cosine cutoff, power-law weights
    model      CFConv layers, DG-GCN and the two baselines
    config     one flat run configuration dataclass
    train      training loop, metrics, experiment grids
    synth      synthetic geometry-sensitive benchmark molecules
    gradcheck  finite-difference verification of all gradients
    cli        `dggcn` command-line entry point
"""
from .chemio import (Atom, DatasetSplit, FeatureScheme, Graph3D,  # noqa: F401
                     featurize_nodes, load_jsonl, load_sdf, parse_sdf,
                     save_jsonl, split_dataset)
from .config import RunConfig, load_config  # noqa: F401
from .distgeo import (DistGeoGraph, GeoEdge, Order, build_distgeo,  # noqa: F401
                      khop_pairs)
from .errors import (ConfigError, GraphError, NumericError,  # noqa: F401
                     ShapeError, TrainingDiverged)
from .filters import (GaussianBasis, cutoff_weight, powerlaw_weight,  # noqa: F401
                      rbf_expand, ssp)
from .model import (ModelParams, dggcn_forward, geometric_gc_forward,  # noqa: F401
                    init_params, load_checkpoint, save_checkpoint,
                    standard_gc_forward)
from .train import (Metrics, TargetScaler, mse_loss, run_grid,  # noqa: F401
                    train_model)

__version__ = "0.1.0"
