"""Single-lead ECG QT and heart-rate estimation with prolongation alarms."""

from .alarm import (AlarmConfig, AlarmDecision, PredictiveValues, adjust_qtc, bazett_qtc,
                    detect_prolongation, npv, ppv, predictive_value_curve, run_dosing_session)
from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .delineate import (Delineation, delineate, delineate_qt, detect_r_peaks,
                        estimate_heart_rate, signal_quality)
from .infer import predict
from .metrics import MetricsReport, detection_metrics, mae, pearson_r
from .model import QTNetConfig, TargetStats, build_qtnet, unzscore, zscore_targets
from .signal import (EcgRecord, EcgSignal, IntervalLabels, remove_baseline_wander, resample,
                     standardize_input)
from .synth import BeatParams, CorpusSpec, sample_corpus, synthesize
from .train import TrainConfig, fit

__version__ = "0.1.0"
