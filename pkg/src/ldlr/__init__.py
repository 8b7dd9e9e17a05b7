"""Label-distribution recovery from noisy labels and multi-output SVR learning."""

from .dataset import LdlDataset, NoiseSpec, SynthSpec, corrupt, load_dataset, split, synthesize
from .errors import LdlError, NotConvergedWarning, ValidationError
from .graph import laplacian, learn_affinity, project_simplex
from .harness import ExperimentConfig, compare_arms, run_pipeline, sweep
from .metrics import MEASURES, MetricReport, average_ranks, critical_difference, friedman, report
from .msvr import KernelSpec, MsvrConfig, MsvrModel, fit, predict
from .recovery import RecoveryConfig, recover, soft_threshold, svt

__version__ = "0.1.0"
