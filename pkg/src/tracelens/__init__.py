"""tracelens: business-process event-log anomaly detection.

Synthesizes labeled event logs with realistic anomalies, trains a
denoising autoencoder on the noisy log, and detects and localizes
anomalies at trace, event, and attribute resolution, with sliding-window
frequency baselines and a reproducible evaluation harness.
"""

from .eventlog import (
    ANOMALY,
    NORMAL,
    PAD,
    Event,
    EventLog,
    LabelSet,
    Trace,
    TraceLabels,
    read_labels,
    read_log,
    write_labels,
    write_log,
)
from .procgen import (
    GenConfig,
    ProcessModel,
    Variant,
    assign_users,
    builtin_p2p,
    draw_variant_probs,
    enumerate_variants,
    generate_model,
    sample_log,
)
from .anomalies import ANOMALY_TYPES, AnomalyRecord, InjectConfig, inject
from .encoding import (
    EncodedBatch,
    EncodingLayout,
    build_layout,
    decode_slot,
    decompose_errors,
    encode,
    slot_errors,
)
from .neuralnet import Network, TrainConfig, TrainedNetwork, adam_step, backward, forward, train
from .detectors import (
    ScoreReport,
    Threshold,
    WindowModel,
    dae_score,
    fit_threshold,
    random_baseline,
    tstide_fit,
    tstide_score,
)
from .evaluation import (
    ExperimentSpec,
    MetricRow,
    grid_search_alpha,
    run_sweep,
    score_to_metrics,
)
from .seeds import derive_seed

__version__ = "0.1.0"
