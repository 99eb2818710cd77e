"""Adversarial domain adaptation for unsupervised anomaly detection (ADAU).

Aligns healthy-only condition-monitoring data from a source and a target
domain with an adversarially trained feature extractor minimising a
multidimensional-scaling loss, detects anomalies with a one-class ELM stack,
and compares detectors with balanced accuracy, FPR, McNemar and GLM tests.
"""

from .data import (
    ANOMALOUS,
    AffineShift,
    Dataset,
    Domain,
    FeatureKind,
    HEALTHY,
    SyntheticSpec,
    WindowSpec,
    compute_stride,
    downsample,
    fft_features,
    load_dataset,
    save_dataset,
    split_train_val,
    synth_generate,
    window,
)
from .distance import ImedKernel, imed_distance, imed_kernel, pairwise_euclidean, pairwise_imed
from .elm import (
    ElmLayer,
    HelmModel,
    elbow_select,
    elm_init,
    helm_detect,
    helm_train,
    ridge_solve,
    train_ae,
    train_oneclass,
)
from .adversarial import (
    AdauConfig,
    AdauModel,
    DenseNet,
    discriminator_loss,
    grl_backward,
    mds_loss,
    train_adau,
)
from .metrics import (
    ConfusionCounts,
    PairedOutcomes,
    balanced_accuracy,
    confusion,
    fpr,
    glm_model_factor,
    mcnemar,
    tpr,
)
from .harness import ExperimentConfig, RunResult, aggregate, emit_plotdata, run_experiment, significance_report

__version__ = "0.1.0"
