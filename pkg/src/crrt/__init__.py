"""Combined reduced-rank transforms of random vectors on finite ensembles."""

from .empirical import Ensemble, MomentSet, center, centered_cross, mean, mse, raw_cross
from .errors import (
    BudgetExceeded, ConvergenceFailure, CRRTError, InputError, MismatchedEnsembles,
    ModelFormatError, ModeMismatch, NotFactorized, NotPSD, NumericalError,
    ShapeMismatch, SingularCovariance, UnresolvedReference,
)
from .lifting import LiftKind, LiftSpec, apply_lift, build_recursive_lifts
from .ortho import OrthoMode, OrthoSystem, orthogonalize, orthonormalize, qr_orthogonalize, replay
from .transform import (
    ErrorReport, FitMode, RankBudget, TransformModel, compress, compression_ratio,
    decompress, error_report, fit, predict,
)
from .baselines import ComparisonReport, compare, klt, volterra2_error, wiener
from .serialize import load, save

__version__ = "0.1.0"
